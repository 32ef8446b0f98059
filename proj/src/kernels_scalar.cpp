#include "streamformer/kernels.hpp"

// Reference kernels. Plain loops, no reassociation tricks: these define the
// semantics the SIMD variants are tested against.

namespace sf::kern::scalar {
namespace {

template <typename T>
void add_(const T* a, const T* b, T* out, int64_t n) {
  for (int64_t i = 0; i < n; ++i) out[i] = a[i] + b[i];
}

template <typename T>
void sub_(const T* a, const T* b, T* out, int64_t n) {
  for (int64_t i = 0; i < n; ++i) out[i] = a[i] - b[i];
}

template <typename T>
void mul_(const T* a, const T* b, T* out, int64_t n) {
  for (int64_t i = 0; i < n; ++i) out[i] = a[i] * b[i];
}

template <typename T>
void scale_(const T* x, T a, T* out, int64_t n) {
  for (int64_t i = 0; i < n; ++i) out[i] = a * x[i];
}

template <typename T>
void axpy_(T a, const T* x, T* y, int64_t n) {
  for (int64_t i = 0; i < n; ++i) y[i] += a * x[i];
}

template <typename T>
T dot_(const T* a, const T* b, int64_t n) {
  T acc = 0;
  for (int64_t i = 0; i < n; ++i) acc += a[i] * b[i];
  return acc;
}

template <typename T>
T sum_(const T* x, int64_t n) {
  T acc = 0;
  for (int64_t i = 0; i < n; ++i) acc += x[i];
  return acc;
}

template <typename T>
void gemm_nn_(const T* a, const T* b, T* c, int64_t m, int64_t k, int64_t n, bool acc) {
  for (int64_t i = 0; i < m; ++i) {
    T* crow = c + i * n;
    if (!acc) {
      for (int64_t j = 0; j < n; ++j) crow[j] = 0;
    }
    const T* arow = a + i * k;
    for (int64_t p = 0; p < k; ++p) {
      const T av = arow[p];
      const T* brow = b + p * n;
      for (int64_t j = 0; j < n; ++j) crow[j] += av * brow[j];
    }
  }
}

template <typename T>
void gemm_nt_(const T* a, const T* b, T* c, int64_t m, int64_t k, int64_t n, bool acc) {
  for (int64_t i = 0; i < m; ++i) {
    const T* arow = a + i * k;
    for (int64_t j = 0; j < n; ++j) {
      const T* brow = b + j * k;
      T s = 0;
      for (int64_t p = 0; p < k; ++p) s += arow[p] * brow[p];
      if (acc) {
        c[i * n + j] += s;
      } else {
        c[i * n + j] = s;
      }
    }
  }
}

template <typename T>
void gemm_tn_(const T* a, const T* b, T* c, int64_t m, int64_t k, int64_t n, bool acc) {
  if (!acc) {
    for (int64_t i = 0; i < m * n; ++i) c[i] = 0;
  }
  for (int64_t p = 0; p < k; ++p) {
    const T* arow = a + p * m;
    const T* brow = b + p * n;
    for (int64_t i = 0; i < m; ++i) {
      const T av = arow[i];
      T* crow = c + i * n;
      for (int64_t j = 0; j < n; ++j) crow[j] += av * brow[j];
    }
  }
}

template <typename T>
constexpr VecOps<T> make_table() {
  return VecOps<T>{add_<T>, sub_<T>, mul_<T>, scale_<T>, axpy_<T>,
                   dot_<T>, sum_<T>, gemm_nn_<T>, gemm_nt_<T>, gemm_tn_<T>};
}

}  // namespace

extern const VecOps<float> kOps32;
const VecOps<float> kOps32 = make_table<float>();
extern const VecOps<double> kOps64;
const VecOps<double> kOps64 = make_table<double>();

}  // namespace sf::kern::scalar
