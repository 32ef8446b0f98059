#pragma once

#include <cstdint>
#include <string>

// Data-parallel inner loops. Every kernel exists as a scalar reference
// implementation plus SIMD variants (AVX2 on x86-64, NEON on arm64) selected
// at runtime; the variants are equivalence-tested against the reference.
// Matrix kernels are instrumented with a multiply-accumulate counter used by
// the analytic cost model checks.

namespace sf::kern {

enum class Backend { scalar, avx2, neon };

const char* backend_name(Backend b);
bool backend_available(Backend b);

// Active backend: best available unless overridden. The environment variable
// STREAMFORMER_KERNELS=scalar|avx2|neon forces a choice at first use.
Backend active_backend();
void select_backend(Backend b);  // throws Error if unavailable

template <typename T>
struct VecOps {
  // elementwise
  void (*add)(const T* a, const T* b, T* out, int64_t n);
  void (*sub)(const T* a, const T* b, T* out, int64_t n);
  void (*mul)(const T* a, const T* b, T* out, int64_t n);
  void (*scale)(const T* x, T a, T* out, int64_t n);
  void (*axpy)(T a, const T* x, T* y, int64_t n);  // y += a * x
  T (*dot)(const T* a, const T* b, int64_t n);
  T (*sum)(const T* x, int64_t n);
  // C[M,N] (+)= A[M,K] * B[K,N]
  void (*gemm_nn)(const T* a, const T* b, T* c, int64_t m, int64_t k, int64_t n, bool acc);
  // C[M,N] (+)= A[M,K] * B[N,K]^T
  void (*gemm_nt)(const T* a, const T* b, T* c, int64_t m, int64_t k, int64_t n, bool acc);
  // C[M,N] (+)= A[K,M]^T * B[K,N]
  void (*gemm_tn)(const T* a, const T* b, T* c, int64_t m, int64_t k, int64_t n, bool acc);
};

// Per-backend tables, for the equivalence tests.
template <typename T>
const VecOps<T>& table(Backend b);

// Table of the active backend.
template <typename T>
const VecOps<T>& ops();

// ---- multiply-accumulate instrumentation ------------------------------
// Counts MACs performed by the gemm entry points below and by the fused
// attention routine (ops layer). Elementwise kernels are not counted.
void mac_counting(bool on);
bool mac_counting_enabled();
void mac_reset();
int64_t mac_count();
void mac_add(int64_t n);

// ---- counted dispatch wrappers ----------------------------------------
template <typename T>
inline void gemm_nn(const T* a, const T* b, T* c, int64_t m, int64_t k, int64_t n, bool acc = false) {
  if (mac_counting_enabled()) mac_add(m * k * n);
  ops<T>().gemm_nn(a, b, c, m, k, n, acc);
}

template <typename T>
inline void gemm_nt(const T* a, const T* b, T* c, int64_t m, int64_t k, int64_t n, bool acc = false) {
  if (mac_counting_enabled()) mac_add(m * k * n);
  ops<T>().gemm_nt(a, b, c, m, k, n, acc);
}

template <typename T>
inline void gemm_tn(const T* a, const T* b, T* c, int64_t m, int64_t k, int64_t n, bool acc = false) {
  if (mac_counting_enabled()) mac_add(m * k * n);
  ops<T>().gemm_tn(a, b, c, m, k, n, acc);
}

template <typename T>
inline void add(const T* a, const T* b, T* out, int64_t n) { ops<T>().add(a, b, out, n); }
template <typename T>
inline void sub(const T* a, const T* b, T* out, int64_t n) { ops<T>().sub(a, b, out, n); }
template <typename T>
inline void mul(const T* a, const T* b, T* out, int64_t n) { ops<T>().mul(a, b, out, n); }
template <typename T>
inline void scale(const T* x, T a, T* out, int64_t n) { ops<T>().scale(x, a, out, n); }
template <typename T>
inline void axpy(T a, const T* x, T* y, int64_t n) { ops<T>().axpy(a, x, y, n); }
template <typename T>
inline T dot(const T* a, const T* b, int64_t n) { return ops<T>().dot(a, b, n); }
template <typename T>
inline T sum(const T* x, int64_t n) { return ops<T>().sum(x, n); }

}  // namespace sf::kern
