// Compiled with -mavx2 -mfma; only reached after a CPUID check.

#include "pih/simd/kernels.hpp"

#if PIH_HAVE_AVX2_KERNELS

#include <immintrin.h>

namespace pih::simd::avx2 {

double dot(const double* a, const double* b, std::size_t n) {
  __m256d acc0 = _mm256_setzero_pd();
  __m256d acc1 = _mm256_setzero_pd();
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8) {
    acc0 = _mm256_fmadd_pd(_mm256_loadu_pd(a + i), _mm256_loadu_pd(b + i), acc0);
    acc1 = _mm256_fmadd_pd(_mm256_loadu_pd(a + i + 4), _mm256_loadu_pd(b + i + 4), acc1);
  }
  for (; i + 4 <= n; i += 4) {
    acc0 = _mm256_fmadd_pd(_mm256_loadu_pd(a + i), _mm256_loadu_pd(b + i), acc0);
  }
  acc0 = _mm256_add_pd(acc0, acc1);
  // lanes (0,1,2,3) -> (0+2) + (1+3)
  const __m128d lo = _mm256_castpd256_pd128(acc0);
  const __m128d hi = _mm256_extractf128_pd(acc0, 1);
  const __m128d pair = _mm_add_pd(lo, hi);
  double s = _mm_cvtsd_f64(pair) + _mm_cvtsd_f64(_mm_unpackhi_pd(pair, pair));
  for (; i < n; ++i) s += a[i] * b[i];
  return s;
}

void axpy(double alpha, const double* x, double* y, std::size_t n) {
  const __m256d va = _mm256_set1_pd(alpha);
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    _mm256_storeu_pd(y + i, _mm256_fmadd_pd(va, _mm256_loadu_pd(x + i), _mm256_loadu_pd(y + i)));
  }
  for (; i < n; ++i) y[i] += alpha * x[i];
}

void axpby(double a, double b, const double* x, double* y, std::size_t n) {
  const __m256d va = _mm256_set1_pd(a);
  const __m256d vb = _mm256_set1_pd(b);
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    const __m256d bx = _mm256_mul_pd(vb, _mm256_loadu_pd(x + i));
    _mm256_storeu_pd(y + i, _mm256_fmadd_pd(va, _mm256_loadu_pd(y + i), bx));
  }
  for (; i < n; ++i) y[i] = a * y[i] + b * x[i];
}

void fma_mul(const double* x, const double* z, double* y, std::size_t n) {
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    _mm256_storeu_pd(y + i, _mm256_fmadd_pd(_mm256_loadu_pd(x + i), _mm256_loadu_pd(z + i),
                                            _mm256_loadu_pd(y + i)));
  }
  for (; i < n; ++i) y[i] += x[i] * z[i];
}

namespace {

double hsum(__m256d v) {
  const __m128d lo = _mm256_castpd256_pd128(v);
  const __m128d hi = _mm256_extractf128_pd(v, 1);
  const __m128d pair = _mm_add_pd(lo, hi);
  return _mm_cvtsd_f64(pair) + _mm_cvtsd_f64(_mm_unpackhi_pd(pair, pair));
}

}  // namespace

void dot4(const double* w, const double* const* x, double* out, std::size_t n) {
  __m256d a0 = _mm256_setzero_pd(), a1 = _mm256_setzero_pd();
  __m256d a2 = _mm256_setzero_pd(), a3 = _mm256_setzero_pd();
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    const __m256d vw = _mm256_loadu_pd(w + i);
    a0 = _mm256_fmadd_pd(vw, _mm256_loadu_pd(x[0] + i), a0);
    a1 = _mm256_fmadd_pd(vw, _mm256_loadu_pd(x[1] + i), a1);
    a2 = _mm256_fmadd_pd(vw, _mm256_loadu_pd(x[2] + i), a2);
    a3 = _mm256_fmadd_pd(vw, _mm256_loadu_pd(x[3] + i), a3);
  }
  out[0] = hsum(a0);
  out[1] = hsum(a1);
  out[2] = hsum(a2);
  out[3] = hsum(a3);
  for (; i < n; ++i)
    for (int k = 0; k < 4; ++k) out[k] += w[i] * x[k][i];
}

void axpy4(const double* g, const double* const* x, double* y, std::size_t n) {
  const __m256d g0 = _mm256_set1_pd(g[0]), g1 = _mm256_set1_pd(g[1]);
  const __m256d g2 = _mm256_set1_pd(g[2]), g3 = _mm256_set1_pd(g[3]);
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    __m256d s = _mm256_mul_pd(g0, _mm256_loadu_pd(x[0] + i));
    s = _mm256_fmadd_pd(g1, _mm256_loadu_pd(x[1] + i), s);
    s = _mm256_fmadd_pd(g2, _mm256_loadu_pd(x[2] + i), s);
    s = _mm256_fmadd_pd(g3, _mm256_loadu_pd(x[3] + i), s);
    _mm256_storeu_pd(y + i, _mm256_add_pd(_mm256_loadu_pd(y + i), s));
  }
  for (; i < n; ++i)
    y[i] += (g[0] * x[0][i] + g[1] * x[1][i]) + (g[2] * x[2][i] + g[3] * x[3][i]);
}

void scatter4(const double* g, const double* w, double* const* y, std::size_t n) {
  const __m256d g0 = _mm256_set1_pd(g[0]), g1 = _mm256_set1_pd(g[1]);
  const __m256d g2 = _mm256_set1_pd(g[2]), g3 = _mm256_set1_pd(g[3]);
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    const __m256d vw = _mm256_loadu_pd(w + i);
    _mm256_storeu_pd(y[0] + i, _mm256_fmadd_pd(g0, vw, _mm256_loadu_pd(y[0] + i)));
    _mm256_storeu_pd(y[1] + i, _mm256_fmadd_pd(g1, vw, _mm256_loadu_pd(y[1] + i)));
    _mm256_storeu_pd(y[2] + i, _mm256_fmadd_pd(g2, vw, _mm256_loadu_pd(y[2] + i)));
    _mm256_storeu_pd(y[3] + i, _mm256_fmadd_pd(g3, vw, _mm256_loadu_pd(y[3] + i)));
  }
  for (; i < n; ++i)
    for (int k = 0; k < 4; ++k) y[k][i] += g[k] * w[i];
}

}  // namespace pih::simd::avx2

#endif
