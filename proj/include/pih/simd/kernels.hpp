#pragma once

// Dense-layer inner loops. Each kernel has a portable scalar reference and
// an AVX2+FMA variant; the variant is picked once at runtime from CPUID and
// can be forced for equivalence testing.

#include <cstddef>
#include <span>
#include <string_view>

namespace pih::simd {

enum class Isa { kScalar, kAvx2 };

struct KernelTable {
  double (*dot)(const double* a, const double* b, std::size_t n);
  // y += alpha * x
  void (*axpy)(double alpha, const double* x, double* y, std::size_t n);
  // y = a * y + b * x
  void (*axpby)(double a, double b, const double* x, double* y, std::size_t n);
  // y += x .* z
  void (*fma_mul)(const double* x, const double* z, double* y, std::size_t n);
  // out[k] = dot(w, x[k]) for k < 4; w is read once for all four
  void (*dot4)(const double* w, const double* const* x, double* out, std::size_t n);
  // y += sum_k g[k] * x[k] for k < 4
  void (*axpy4)(const double* g, const double* const* x, double* y, std::size_t n);
  // y[k] += g[k] * w for k < 4
  void (*scatter4)(const double* g, const double* w, double* const* y, std::size_t n);
};

namespace scalar {
double dot(const double* a, const double* b, std::size_t n);
void axpy(double alpha, const double* x, double* y, std::size_t n);
void axpby(double a, double b, const double* x, double* y, std::size_t n);
void fma_mul(const double* x, const double* z, double* y, std::size_t n);
void dot4(const double* w, const double* const* x, double* out, std::size_t n);
void axpy4(const double* g, const double* const* x, double* y, std::size_t n);
void scatter4(const double* g, const double* w, double* const* y, std::size_t n);
}  // namespace scalar

#if defined(__x86_64__) || defined(_M_X64)
#define PIH_HAVE_AVX2_KERNELS 1
namespace avx2 {
double dot(const double* a, const double* b, std::size_t n);
void axpy(double alpha, const double* x, double* y, std::size_t n);
void axpby(double a, double b, const double* x, double* y, std::size_t n);
void fma_mul(const double* x, const double* z, double* y, std::size_t n);
void dot4(const double* w, const double* const* x, double* out, std::size_t n);
void axpy4(const double* g, const double* const* x, double* y, std::size_t n);
void scatter4(const double* g, const double* w, double* const* y, std::size_t n);
}  // namespace avx2
#else
#define PIH_HAVE_AVX2_KERNELS 0
#endif

bool cpu_supports(Isa isa);
const KernelTable& table_for(Isa isa);

/// Active table. Chosen on first use: AVX2 when the CPU has AVX2 and FMA,
/// unless the PIH_FORCE_SCALAR environment variable is set.
const KernelTable& kernels();
Isa active_isa();
/// Switch the active table (tests and benchmarks). Not thread-safe.
void set_active_isa(Isa isa);
std::string_view isa_name(Isa isa);

inline double dot(std::span<const double> a, std::span<const double> b) {
  return kernels().dot(a.data(), b.data(), a.size());
}

inline void axpy(double alpha, std::span<const double> x, std::span<double> y) {
  kernels().axpy(alpha, x.data(), y.data(), x.size());
}

inline void axpby(double a, double b, std::span<const double> x, std::span<double> y) {
  kernels().axpby(a, b, x.data(), y.data(), x.size());
}

inline void fma_mul(std::span<const double> x, std::span<const double> z,
                    std::span<double> y) {
  kernels().fma_mul(x.data(), z.data(), y.data(), x.size());
}

}  // namespace pih::simd
