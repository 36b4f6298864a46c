#include "pih/simd/kernels.hpp"

namespace pih::simd::scalar {

double dot(const double* a, const double* b, std::size_t n) {
  // Four partial sums, same association as the 4-lane vector kernel.
  double s0 = 0.0, s1 = 0.0, s2 = 0.0, s3 = 0.0;
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    s0 += a[i] * b[i];
    s1 += a[i + 1] * b[i + 1];
    s2 += a[i + 2] * b[i + 2];
    s3 += a[i + 3] * b[i + 3];
  }
  double s = (s0 + s2) + (s1 + s3);
  for (; i < n; ++i) s += a[i] * b[i];
  return s;
}

void axpy(double alpha, const double* x, double* y, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) y[i] += alpha * x[i];
}

void axpby(double a, double b, const double* x, double* y, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) y[i] = a * y[i] + b * x[i];
}

void fma_mul(const double* x, const double* z, double* y, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) y[i] += x[i] * z[i];
}

void dot4(const double* w, const double* const* x, double* out, std::size_t n) {
  for (int k = 0; k < 4; ++k) out[k] = dot(w, x[k], n);
}

void axpy4(const double* g, const double* const* x, double* y, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i)
    y[i] += (g[0] * x[0][i] + g[1] * x[1][i]) + (g[2] * x[2][i] + g[3] * x[3][i]);
}

void scatter4(const double* g, const double* w, double* const* y, std::size_t n) {
  for (int k = 0; k < 4; ++k) axpy(g[k], w, y[k], n);
}

}  // namespace pih::simd::scalar
