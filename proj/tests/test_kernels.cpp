#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <vector>

#include "streamformer/kernels.hpp"
#include "streamformer/rng.hpp"

using namespace sf;

namespace {

template <typename T>
std::vector<T> random_vec(Rng& rng, int64_t n, double lo = -1.0, double hi = 1.0) {
  std::vector<T> v(n);
  for (auto& x : v) x = static_cast<T>(rng.uniform(lo, hi));
  return v;
}

template <typename T>
double max_rel_diff(const std::vector<T>& a, const std::vector<T>& b) {
  double worst = 0.0;
  for (size_t i = 0; i < a.size(); ++i) {
    double d = std::abs(double(a[i]) - double(b[i]));
    double scale = std::max(1.0, std::max(std::abs(double(a[i])), std::abs(double(b[i]))));
    worst = std::max(worst, d / scale);
  }
  return worst;
}

template <typename T>
void check_backend_matches_scalar(kern::Backend b, double tol) {
  const auto& ref = kern::table<T>(kern::Backend::scalar);
  const auto& simd = kern::table<T>(b);
  Rng rng(7 + static_cast<int>(b));

  // sizes chosen to hit full lanes plus remainders
  for (int64_t n : {1, 3, 7, 8, 9, 16, 33, 255}) {
    auto a = random_vec<T>(rng, n);
    auto c = random_vec<T>(rng, n);
    std::vector<T> o1(n), o2(n);

    ref.add(a.data(), c.data(), o1.data(), n);
    simd.add(a.data(), c.data(), o2.data(), n);
    CHECK(o1 == o2);  // same-order arithmetic: bitwise equal

    ref.sub(a.data(), c.data(), o1.data(), n);
    simd.sub(a.data(), c.data(), o2.data(), n);
    CHECK(o1 == o2);

    ref.mul(a.data(), c.data(), o1.data(), n);
    simd.mul(a.data(), c.data(), o2.data(), n);
    CHECK(o1 == o2);

    ref.scale(a.data(), T(0.37), o1.data(), n);
    simd.scale(a.data(), T(0.37), o2.data(), n);
    CHECK(o1 == o2);

    std::vector<T> y1 = c, y2 = c;
    ref.axpy(T(1.5), a.data(), y1.data(), n);
    simd.axpy(T(1.5), a.data(), y2.data(), n);
    CHECK(max_rel_diff(y1, y2) <= tol);

    T d1 = ref.dot(a.data(), c.data(), n);
    T d2 = simd.dot(a.data(), c.data(), n);
    CHECK(std::abs(double(d1) - double(d2)) <= tol * std::max<double>(1.0, std::abs(double(d1))));

    T s1 = ref.sum(a.data(), n);
    T s2 = simd.sum(a.data(), n);
    CHECK(std::abs(double(s1) - double(s2)) <= tol * std::max<double>(1.0, std::abs(double(s1))));
  }

  // gemm variants, shapes with lane remainders, both accumulate modes
  struct Dim { int64_t m, k, n; };
  for (Dim d : {Dim{1, 1, 1}, Dim{2, 3, 5}, Dim{4, 8, 8}, Dim{7, 13, 9}, Dim{16, 17, 33}}) {
    auto A = random_vec<T>(rng, d.m * d.k);
    auto B = random_vec<T>(rng, d.k * d.n);
    auto At = random_vec<T>(rng, d.k * d.m);
    auto Bt = random_vec<T>(rng, d.n * d.k);
    auto C0 = random_vec<T>(rng, d.m * d.n);

    for (bool acc : {false, true}) {
      std::vector<T> c1 = C0, c2 = C0;
      ref.gemm_nn(A.data(), B.data(), c1.data(), d.m, d.k, d.n, acc);
      simd.gemm_nn(A.data(), B.data(), c2.data(), d.m, d.k, d.n, acc);
      CHECK(max_rel_diff(c1, c2) <= tol);

      c1 = C0; c2 = C0;
      ref.gemm_nt(A.data(), Bt.data(), c1.data(), d.m, d.k, d.n, acc);
      simd.gemm_nt(A.data(), Bt.data(), c2.data(), d.m, d.k, d.n, acc);
      CHECK(max_rel_diff(c1, c2) <= tol);

      c1 = C0; c2 = C0;
      ref.gemm_tn(At.data(), B.data(), c1.data(), d.m, d.k, d.n, acc);
      simd.gemm_tn(At.data(), B.data(), c2.data(), d.m, d.k, d.n, acc);
      CHECK(max_rel_diff(c1, c2) <= tol);
    }
  }
}

}  // namespace

TEST_CASE("scalar gemm_nn matches triple-loop oracle") {
  // the reference itself, against the most naive possible formulation
  Rng rng(11);
  const int64_t m = 4, k = 5, n = 3;
  auto A = random_vec<double>(rng, m * k);
  auto B = random_vec<double>(rng, k * n);
  std::vector<double> C(m * n);
  kern::table<double>(kern::Backend::scalar).gemm_nn(A.data(), B.data(), C.data(), m, k, n, false);
  for (int64_t i = 0; i < m; ++i) {
    for (int64_t j = 0; j < n; ++j) {
      double s = 0;
      for (int64_t p = 0; p < k; ++p) s += A[i * k + p] * B[p * n + j];
      CHECK(std::abs(C[i * n + j] - s) <= 1e-6);
    }
  }
}

TEST_CASE("simd backends match scalar reference") {
  bool any = false;
  for (kern::Backend b : {kern::Backend::avx2, kern::Backend::neon}) {
    if (!kern::backend_available(b)) continue;
    any = true;
    INFO("backend ", kern::backend_name(b));
    check_backend_matches_scalar<float>(b, 1e-5);
    check_backend_matches_scalar<double>(b, 1e-13);
  }
  if (!any) {
    MESSAGE("no SIMD backend on this machine; scalar reference only");
  }
}

TEST_CASE("active backend dispatch and selection") {
  kern::Backend before = kern::active_backend();
  CHECK(kern::backend_available(before));
  kern::select_backend(kern::Backend::scalar);
  CHECK(kern::active_backend() == kern::Backend::scalar);
  kern::select_backend(before);
  CHECK(kern::active_backend() == before);
}

TEST_CASE("mac counter counts gemm work") {
  kern::mac_reset();
  kern::mac_counting(true);
  std::vector<float> a(6, 1.0f), b(12, 1.0f), c(8, 0.0f);
  kern::gemm_nn<float>(a.data(), b.data(), c.data(), 2, 3, 4, false);
  kern::mac_counting(false);
  CHECK(kern::mac_count() == 2 * 3 * 4);
  kern::mac_reset();
  CHECK(kern::mac_count() == 0);
}
