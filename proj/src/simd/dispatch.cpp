#include <cstdlib>

#include "pih/simd/kernels.hpp"

namespace pih::simd {

namespace {

constexpr KernelTable kScalarTable{&scalar::dot,     &scalar::axpy, &scalar::axpby,
                                   &scalar::fma_mul, &scalar::dot4, &scalar::axpy4,
                                   &scalar::scatter4};
#if PIH_HAVE_AVX2_KERNELS
constexpr KernelTable kAvx2Table{&avx2::dot,  &avx2::axpy,  &avx2::axpby,   &avx2::fma_mul,
                                 &avx2::dot4, &avx2::axpy4, &avx2::scatter4};
#endif

Isa detect() {
  if (std::getenv("PIH_FORCE_SCALAR") != nullptr) return Isa::kScalar;
  return cpu_supports(Isa::kAvx2) ? Isa::kAvx2 : Isa::kScalar;
}

Isa& active() {
  static Isa isa = detect();
  return isa;
}

}  // namespace

bool cpu_supports(Isa isa) {
  switch (isa) {
    case Isa::kScalar:
      return true;
    case Isa::kAvx2:
#if PIH_HAVE_AVX2_KERNELS && (defined(__GNUC__) || defined(__clang__))
      return __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma");
#else
      return false;
#endif
  }
  return false;
}

const KernelTable& table_for(Isa isa) {
#if PIH_HAVE_AVX2_KERNELS
  if (isa == Isa::kAvx2) return kAvx2Table;
#endif
  (void)isa;
  return kScalarTable;
}

const KernelTable& kernels() { return table_for(active()); }

Isa active_isa() { return active(); }

void set_active_isa(Isa isa) { active() = cpu_supports(isa) ? isa : Isa::kScalar; }

std::string_view isa_name(Isa isa) { return isa == Isa::kAvx2 ? "avx2" : "scalar"; }

}  // namespace pih::simd
