#include "streamformer/kernels.hpp"

// NEON variants for arm64, where Advanced SIMD is baseline.

#if defined(__aarch64__) || defined(_M_ARM64)

#include <arm_neon.h>

namespace sf::kern::neon {
namespace {

// ---- float32, 4 lanes ---------------------------------------------------

void add_f(const float* a, const float* b, float* out, int64_t n) {
  int64_t i = 0;
  for (; i + 4 <= n; i += 4) vst1q_f32(out + i, vaddq_f32(vld1q_f32(a + i), vld1q_f32(b + i)));
  for (; i < n; ++i) out[i] = a[i] + b[i];
}

void sub_f(const float* a, const float* b, float* out, int64_t n) {
  int64_t i = 0;
  for (; i + 4 <= n; i += 4) vst1q_f32(out + i, vsubq_f32(vld1q_f32(a + i), vld1q_f32(b + i)));
  for (; i < n; ++i) out[i] = a[i] - b[i];
}

void mul_f(const float* a, const float* b, float* out, int64_t n) {
  int64_t i = 0;
  for (; i + 4 <= n; i += 4) vst1q_f32(out + i, vmulq_f32(vld1q_f32(a + i), vld1q_f32(b + i)));
  for (; i < n; ++i) out[i] = a[i] * b[i];
}

void scale_f(const float* x, float a, float* out, int64_t n) {
  int64_t i = 0;
  for (; i + 4 <= n; i += 4) vst1q_f32(out + i, vmulq_n_f32(vld1q_f32(x + i), a));
  for (; i < n; ++i) out[i] = a * x[i];
}

void axpy_f(float a, const float* x, float* y, int64_t n) {
  int64_t i = 0;
  for (; i + 4 <= n; i += 4)
    vst1q_f32(y + i, vfmaq_n_f32(vld1q_f32(y + i), vld1q_f32(x + i), a));
  for (; i < n; ++i) y[i] += a * x[i];
}

float dot_f(const float* a, const float* b, int64_t n) {
  float32x4_t acc = vdupq_n_f32(0.0f);
  int64_t i = 0;
  for (; i + 4 <= n; i += 4) acc = vfmaq_f32(acc, vld1q_f32(a + i), vld1q_f32(b + i));
  float s = vaddvq_f32(acc);
  for (; i < n; ++i) s += a[i] * b[i];
  return s;
}

float sum_f(const float* x, int64_t n) {
  float32x4_t acc = vdupq_n_f32(0.0f);
  int64_t i = 0;
  for (; i + 4 <= n; i += 4) acc = vaddq_f32(acc, vld1q_f32(x + i));
  float s = vaddvq_f32(acc);
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
    for (int64_t p = 0; p < k; ++p) axpy_f(arow[p], b + p * n, crow, n);
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

// ---- float64, 2 lanes ---------------------------------------------------

void add_d(const double* a, const double* b, double* out, int64_t n) {
  int64_t i = 0;
  for (; i + 2 <= n; i += 2) vst1q_f64(out + i, vaddq_f64(vld1q_f64(a + i), vld1q_f64(b + i)));
  for (; i < n; ++i) out[i] = a[i] + b[i];
}

void sub_d(const double* a, const double* b, double* out, int64_t n) {
  int64_t i = 0;
  for (; i + 2 <= n; i += 2) vst1q_f64(out + i, vsubq_f64(vld1q_f64(a + i), vld1q_f64(b + i)));
  for (; i < n; ++i) out[i] = a[i] - b[i];
}

void mul_d(const double* a, const double* b, double* out, int64_t n) {
  int64_t i = 0;
  for (; i + 2 <= n; i += 2) vst1q_f64(out + i, vmulq_f64(vld1q_f64(a + i), vld1q_f64(b + i)));
  for (; i < n; ++i) out[i] = a[i] * b[i];
}

void scale_d(const double* x, double a, double* out, int64_t n) {
  int64_t i = 0;
  for (; i + 2 <= n; i += 2) vst1q_f64(out + i, vmulq_n_f64(vld1q_f64(x + i), a));
  for (; i < n; ++i) out[i] = a * x[i];
}

void axpy_d(double a, const double* x, double* y, int64_t n) {
  int64_t i = 0;
  for (; i + 2 <= n; i += 2)
    vst1q_f64(y + i, vfmaq_n_f64(vld1q_f64(y + i), vld1q_f64(x + i), a));
  for (; i < n; ++i) y[i] += a * x[i];
}

double dot_d(const double* a, const double* b, int64_t n) {
  float64x2_t acc = vdupq_n_f64(0.0);
  int64_t i = 0;
  for (; i + 2 <= n; i += 2) acc = vfmaq_f64(acc, vld1q_f64(a + i), vld1q_f64(b + i));
  double s = vaddvq_f64(acc);
  for (; i < n; ++i) s += a[i] * b[i];
  return s;
}

double sum_d(const double* x, int64_t n) {
  float64x2_t acc = vdupq_n_f64(0.0);
  int64_t i = 0;
  for (; i + 2 <= n; i += 2) acc = vaddq_f64(acc, vld1q_f64(x + i));
  double s = vaddvq_f64(acc);
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
    for (int64_t p = 0; p < k; ++p) axpy_d(arow[p], b + p * n, crow, n);
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

}  // namespace sf::kern::neon

#endif  // aarch64
