#include "streamformer/kernels.hpp"

#include <atomic>
#include <cstdlib>
#include <cstring>
#include <mutex>

#include "streamformer/error.hpp"

namespace sf::kern {

namespace scalar {
extern const VecOps<float> kOps32;
extern const VecOps<double> kOps64;
}  // namespace scalar

#if defined(SF_HAVE_AVX2_TU)
namespace avx2 {
extern const VecOps<float> kOps32;
extern const VecOps<double> kOps64;
}  // namespace avx2
#endif

#if defined(SF_HAVE_NEON_TU)
namespace neon {
extern const VecOps<float> kOps32;
extern const VecOps<double> kOps64;
}  // namespace neon
#endif

const char* backend_name(Backend b) {
  switch (b) {
    case Backend::scalar: return "scalar";
    case Backend::avx2: return "avx2";
    case Backend::neon: return "neon";
  }
  return "?";
}

bool backend_available(Backend b) {
  switch (b) {
    case Backend::scalar:
      return true;
    case Backend::avx2:
#if defined(SF_HAVE_AVX2_TU) && (defined(__GNUC__) || defined(__clang__))
      return __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma");
#else
      return false;
#endif
    case Backend::neon:
#if defined(SF_HAVE_NEON_TU)
      return true;
#else
      return false;
#endif
  }
  return false;
}

namespace {

Backend pick_default() {
  if (const char* env = std::getenv("STREAMFORMER_KERNELS")) {
    Backend want;
    if (std::strcmp(env, "scalar") == 0) {
      want = Backend::scalar;
    } else if (std::strcmp(env, "avx2") == 0) {
      want = Backend::avx2;
    } else if (std::strcmp(env, "neon") == 0) {
      want = Backend::neon;
    } else {
      throw Error(std::string("STREAMFORMER_KERNELS: unknown backend '") + env + "'");
    }
    if (!backend_available(want))
      throw Error(std::string("STREAMFORMER_KERNELS: backend '") + env + "' not available on this machine");
    return want;
  }
  if (backend_available(Backend::avx2)) return Backend::avx2;
  if (backend_available(Backend::neon)) return Backend::neon;
  return Backend::scalar;
}

std::atomic<Backend> g_active{Backend::scalar};
std::once_flag g_init;

void ensure_init() {
  std::call_once(g_init, [] { g_active.store(pick_default()); });
}

std::atomic<bool> g_counting{false};
std::atomic<int64_t> g_macs{0};

}  // namespace

Backend active_backend() {
  ensure_init();
  return g_active.load();
}

void select_backend(Backend b) {
  ensure_init();
  if (!backend_available(b))
    throw Error(std::string("kernel backend '") + backend_name(b) + "' not available on this machine");
  g_active.store(b);
}

template <>
const VecOps<float>& table<float>(Backend b) {
  switch (b) {
    case Backend::scalar: return scalar::kOps32;
#if defined(SF_HAVE_AVX2_TU)
    case Backend::avx2:
      if (backend_available(Backend::avx2)) return avx2::kOps32;
      break;
#endif
#if defined(SF_HAVE_NEON_TU)
    case Backend::neon: return neon::kOps32;
#endif
    default: break;
  }
  throw Error(std::string("kernel backend '") + backend_name(b) + "' not available");
}

template <>
const VecOps<double>& table<double>(Backend b) {
  switch (b) {
    case Backend::scalar: return scalar::kOps64;
#if defined(SF_HAVE_AVX2_TU)
    case Backend::avx2:
      if (backend_available(Backend::avx2)) return avx2::kOps64;
      break;
#endif
#if defined(SF_HAVE_NEON_TU)
    case Backend::neon: return neon::kOps64;
#endif
    default: break;
  }
  throw Error(std::string("kernel backend '") + backend_name(b) + "' not available");
}

template <>
const VecOps<float>& ops<float>() {
  return table<float>(active_backend());
}

template <>
const VecOps<double>& ops<double>() {
  return table<double>(active_backend());
}

void mac_counting(bool on) { g_counting.store(on, std::memory_order_relaxed); }
bool mac_counting_enabled() { return g_counting.load(std::memory_order_relaxed); }
void mac_reset() { g_macs.store(0, std::memory_order_relaxed); }
int64_t mac_count() { return g_macs.load(std::memory_order_relaxed); }
void mac_add(int64_t n) { g_macs.fetch_add(n, std::memory_order_relaxed); }

}  // namespace sf::kern
