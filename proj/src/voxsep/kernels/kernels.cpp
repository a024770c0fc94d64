// Runtime kernel dispatch. The backend is fixed at first use: AVX2 when the
// CPU supports AVX2+FMA and the build included the AVX2 translation unit,
// unless VOXSEP_KERNELS=scalar overrides it.

#include "voxsep/kernels/kernels.h"

#include <cstdlib>
#include <cstring>

namespace voxsep::kern {

#ifdef VOXSEP_WITH_AVX2
const KernelSet<float>& avx2_table_impl_f32();
const KernelSet<double>& avx2_table_impl_f64();
#endif

bool cpu_has_avx2() {
#if defined(__x86_64__) || defined(_M_X64)
  return __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma");
#else
  return false;
#endif
}

namespace {

bool force_scalar() {
  static const bool f = [] {
    const char* env = std::getenv("VOXSEP_KERNELS");
    return env != nullptr && std::strcmp(env, "scalar") == 0;
  }();
  return f;
}

bool use_avx2() {
#ifdef VOXSEP_WITH_AVX2
  static const bool u = cpu_has_avx2() && !force_scalar();
  return u;
#else
  return false;
#endif
}

}  // namespace

template <> const KernelSet<float>* avx2_table<float>() {
#ifdef VOXSEP_WITH_AVX2
  if (cpu_has_avx2()) return &avx2_table_impl_f32();
#endif
  return nullptr;
}
template <> const KernelSet<double>* avx2_table<double>() {
#ifdef VOXSEP_WITH_AVX2
  if (cpu_has_avx2()) return &avx2_table_impl_f64();
#endif
  return nullptr;
}

template <> const KernelSet<float>& active<float>() {
#ifdef VOXSEP_WITH_AVX2
  if (use_avx2()) return avx2_table_impl_f32();
#endif
  return scalar_table<float>();
}
template <> const KernelSet<double>& active<double>() {
#ifdef VOXSEP_WITH_AVX2
  if (use_avx2()) return avx2_table_impl_f64();
#endif
  return scalar_table<double>();
}

const char* active_backend_name() {
  return use_avx2() ? "avx2" : "scalar";
}

}  // namespace voxsep::kern
