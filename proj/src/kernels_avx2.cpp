#include "streamformer/kernels.hpp"

// AVX2+FMA variants. This translation unit is compiled with -mavx2 -mfma and
// must only be entered after the runtime cpuid check in kernels.cpp.

#if defined(__x86_64__) || defined(_M_X64)

#include <immintrin.h>

namespace sf::kern::avx2 {
namespace {

// ---- float32, 8 lanes ---------------------------------------------------

inline float hsum(__m256 v) {
  __m128 lo = _mm256_castps256_ps128(v);
  __m128 hi = _mm256_extractf128_ps(v, 1);
  lo = _mm_add_ps(lo, hi);
  __m128 sh = _mm_movehdup_ps(lo);
  __m128 s = _mm_add_ps(lo, sh);
  sh = _mm_movehl_ps(sh, s);
  s = _mm_add_ss(s, sh);
  return _mm_cvtss_f32(s);
}

void add_f(const float* a, const float* b, float* out, int64_t n) {
  int64_t i = 0;
  for (; i + 8 <= n; i += 8)
    _mm256_storeu_ps(out + i, _mm256_add_ps(_mm256_loadu_ps(a + i), _mm256_loadu_ps(b + i)));
  for (; i < n; ++i) out[i] = a[i] + b[i];
}

void sub_f(const float* a, const float* b, float* out, int64_t n) {
  int64_t i = 0;
  for (; i + 8 <= n; i += 8)
    _mm256_storeu_ps(out + i, _mm256_sub_ps(_mm256_loadu_ps(a + i), _mm256_loadu_ps(b + i)));
  for (; i < n; ++i) out[i] = a[i] - b[i];
}

void mul_f(const float* a, const float* b, float* out, int64_t n) {
  int64_t i = 0;
  for (; i + 8 <= n; i += 8)
    _mm256_storeu_ps(out + i, _mm256_mul_ps(_mm256_loadu_ps(a + i), _mm256_loadu_ps(b + i)));
  for (; i < n; ++i) out[i] = a[i] * b[i];
}

void scale_f(const float* x, float a, float* out, int64_t n) {
  const __m256 va = _mm256_set1_ps(a);
  int64_t i = 0;
  for (; i + 8 <= n; i += 8)
    _mm256_storeu_ps(out + i, _mm256_mul_ps(va, _mm256_loadu_ps(x + i)));
  for (; i < n; ++i) out[i] = a * x[i];
}

void axpy_f(float a, const float* x, float* y, int64_t n) {
  const __m256 va = _mm256_set1_ps(a);
  int64_t i = 0;
  for (; i + 8 <= n; i += 8)
    _mm256_storeu_ps(y + i, _mm256_fmadd_ps(va, _mm256_loadu_ps(x + i), _mm256_loadu_ps(y + i)));
  for (; i < n; ++i) y[i] += a * x[i];
}

float dot_f(const float* a, const float* b, int64_t n) {
  __m256 acc = _mm256_setzero_ps();
  int64_t i = 0;
  for (; i + 8 <= n; i += 8)
    acc = _mm256_fmadd_ps(_mm256_loadu_ps(a + i), _mm256_loadu_ps(b + i), acc);
  float s = hsum(acc);
  for (; i < n; ++i) s += a[i] * b[i];
  return s;
}

float sum_f(const float* x, int64_t n) {
  __m256 acc = _mm256_setzero_ps();
  int64_t i = 0;
  for (; i + 8 <= n; i += 8) acc = _mm256_add_ps(acc, _mm256_loadu_ps(x + i));
  float s = hsum(acc);
  for (; i < n; ++i) s += x[i];
  return s;
}

void gemm_nn_f(const float* a, const float* b, float* c, int64_t m, int64_t k, int64_t n, bool acc) {
  for (int64_t i = 0; i < m; ++i) {
    float* crow = c + i * n;
    if (!acc) {
      for (int64_t j = 0; j < n; ++j) crow[j] = 0.0f;
    }
    const float* arow = a + i * k;
    for (int64_t p = 0; p < k; ++p) {
      const __m256 av = _mm256_set1_ps(arow[p]);
      const float* brow = b + p * n;
      int64_t j = 0;
      for (; j + 8 <= n; j += 8)
        _mm256_storeu_ps(crow + j, _mm256_fmadd_ps(av, _mm256_loadu_ps(brow + j), _mm256_loadu_ps(crow + j)));
      for (; j < n; ++j) crow[j] += arow[p] * brow[j];
    }
  }
}

void gemm_nt_f(const float* a, const float* b, float* c, int64_t m, int64_t k, int64_t n, bool acc) {
  for (int64_t i = 0; i < m; ++i) {
    const float* arow = a + i * k;
    for (int64_t j = 0; j < n; ++j) {
      const float s = dot_f(arow, b + j * k, k);
      if (acc) {
        c[i * n + j] += s;
      } else {
        c[i * n + j] = s;
      }
    }
  }
}

void gemm_tn_f(const float* a, const float* b, float* c, int64_t m, int64_t k, int64_t n, bool acc) {
  if (!acc) {
    for (int64_t i = 0; i < m * n; ++i) c[i] = 0.0f;
  }
  for (int64_t p = 0; p < k; ++p) {
    const float* arow = a + p * m;
    const float* brow = b + p * n;
    for (int64_t i = 0; i < m; ++i) axpy_f(arow[i], brow, c + i * n, n);
  }
}

// ---- float64, 4 lanes ---------------------------------------------------

inline double hsum(__m256d v) {
  __m128d lo = _mm256_castpd256_pd128(v);
  __m128d hi = _mm256_extractf128_pd(v, 1);
  lo = _mm_add_pd(lo, hi);
  __m128d sh = _mm_unpackhi_pd(lo, lo);
  return _mm_cvtsd_f64(_mm_add_sd(lo, sh));
}

void add_d(const double* a, const double* b, double* out, int64_t n) {
  int64_t i = 0;
  for (; i + 4 <= n; i += 4)
    _mm256_storeu_pd(out + i, _mm256_add_pd(_mm256_loadu_pd(a + i), _mm256_loadu_pd(b + i)));
  for (; i < n; ++i) out[i] = a[i] + b[i];
}

void sub_d(const double* a, const double* b, double* out, int64_t n) {
  int64_t i = 0;
  for (; i + 4 <= n; i += 4)
    _mm256_storeu_pd(out + i, _mm256_sub_pd(_mm256_loadu_pd(a + i), _mm256_loadu_pd(b + i)));
  for (; i < n; ++i) out[i] = a[i] - b[i];
}

void mul_d(const double* a, const double* b, double* out, int64_t n) {
  int64_t i = 0;
  for (; i + 4 <= n; i += 4)
    _mm256_storeu_pd(out + i, _mm256_mul_pd(_mm256_loadu_pd(a + i), _mm256_loadu_pd(b + i)));
  for (; i < n; ++i) out[i] = a[i] * b[i];
}

void scale_d(const double* x, double a, double* out, int64_t n) {
  const __m256d va = _mm256_set1_pd(a);
  int64_t i = 0;
  for (; i + 4 <= n; i += 4)
    _mm256_storeu_pd(out + i, _mm256_mul_pd(va, _mm256_loadu_pd(x + i)));
  for (; i < n; ++i) out[i] = a * x[i];
}

void axpy_d(double a, const double* x, double* y, int64_t n) {
  const __m256d va = _mm256_set1_pd(a);
  int64_t i = 0;
  for (; i + 4 <= n; i += 4)
    _mm256_storeu_pd(y + i, _mm256_fmadd_pd(va, _mm256_loadu_pd(x + i), _mm256_loadu_pd(y + i)));
  for (; i < n; ++i) y[i] += a * x[i];
}

double dot_d(const double* a, const double* b, int64_t n) {
  __m256d acc = _mm256_setzero_pd();
  int64_t i = 0;
  for (; i + 4 <= n; i += 4)
    acc = _mm256_fmadd_pd(_mm256_loadu_pd(a + i), _mm256_loadu_pd(b + i), acc);
  double s = hsum(acc);
  for (; i < n; ++i) s += a[i] * b[i];
  return s;
}

double sum_d(const double* x, int64_t n) {
  __m256d acc = _mm256_setzero_pd();
  int64_t i = 0;
  for (; i + 4 <= n; i += 4) acc = _mm256_add_pd(acc, _mm256_loadu_pd(x + i));
  double s = hsum(acc);
  for (; i < n; ++i) s += x[i];
  return s;
}

void gemm_nn_d(const double* a, const double* b, double* c, int64_t m, int64_t k, int64_t n, bool acc) {
  for (int64_t i = 0; i < m; ++i) {
    double* crow = c + i * n;
    if (!acc) {
      for (int64_t j = 0; j < n; ++j) crow[j] = 0.0;
    }
    const double* arow = a + i * k;
    for (int64_t p = 0; p < k; ++p) {
      const __m256d av = _mm256_set1_pd(arow[p]);
      const double* brow = b + p * n;
      int64_t j = 0;
      for (; j + 4 <= n; j += 4)
        _mm256_storeu_pd(crow + j, _mm256_fmadd_pd(av, _mm256_loadu_pd(brow + j), _mm256_loadu_pd(crow + j)));
      for (; j < n; ++j) crow[j] += arow[p] * brow[j];
    }
  }
}

void gemm_nt_d(const double* a, const double* b, double* c, int64_t m, int64_t k, int64_t n, bool acc) {
  for (int64_t i = 0; i < m; ++i) {
    const double* arow = a + i * k;
    for (int64_t j = 0; j < n; ++j) {
      const double s = dot_d(arow, b + j * k, k);
      if (acc) {
        c[i * n + j] += s;
      } else {
        c[i * n + j] = s;
      }
    }
  }
}

void gemm_tn_d(const double* a, const double* b, double* c, int64_t m, int64_t k, int64_t n, bool acc) {
  if (!acc) {
    for (int64_t i = 0; i < m * n; ++i) c[i] = 0.0;
  }
  for (int64_t p = 0; p < k; ++p) {
    const double* arow = a + p * m;
    const double* brow = b + p * n;
    for (int64_t i = 0; i < m; ++i) axpy_d(arow[i], brow, c + i * n, n);
  }
}

}  // namespace

extern const VecOps<float> kOps32;
const VecOps<float> kOps32 = {add_f, sub_f, mul_f, scale_f, axpy_f,
                              dot_f, sum_f, gemm_nn_f, gemm_nt_f, gemm_tn_f};
extern const VecOps<double> kOps64;
const VecOps<double> kOps64 = {add_d, sub_d, mul_d, scale_d, axpy_d,
                               dot_d, sum_d, gemm_nn_d, gemm_nt_d, gemm_tn_d};

}  // namespace sf::kern::avx2

#endif  // x86_64
