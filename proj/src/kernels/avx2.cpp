// Compiled with -mavx2 -mfma; only reached when the CPU reports both.

#include <immintrin.h>

#include "cmr/kernels.hpp"

namespace cmr::simd::detail {
namespace {

constexpr double kInvSqrt2 = 0.70710678118654752440;

inline double hsum(__m256d v) {
  const __m128d lo = _mm256_castpd256_pd128(v);
  const __m128d hi = _mm256_extractf128_pd(v, 1);
  const __m128d s = _mm_add_pd(lo, hi);
  return _mm_cvtsd_f64(_mm_add_sd(s, _mm_unpackhi_pd(s, s)));
}

double dot_avx2(const double* a, const double* b, std::size_t n) {
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
  double s = hsum(_mm256_add_pd(acc0, acc1));
  for (; i < n; ++i) s += a[i] * b[i];
  return s;
}

double weighted_dot_avx2(const double* a, const double* w, const double* b, std::size_t n) {
  __m256d acc = _mm256_setzero_pd();
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    const __m256d aw = _mm256_mul_pd(_mm256_loadu_pd(a + i), _mm256_loadu_pd(w + i));
    acc = _mm256_fmadd_pd(aw, _mm256_loadu_pd(b + i), acc);
  }
  double s = hsum(acc);
  for (; i < n; ++i) s += a[i] * w[i] * b[i];
  return s;
}

void axpy_avx2(double alpha, const double* x, double* y, std::size_t n) {
  const __m256d va = _mm256_set1_pd(alpha);
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    _mm256_storeu_pd(y + i, _mm256_fmadd_pd(va, _mm256_loadu_pd(x + i), _mm256_loadu_pd(y + i)));
  }
  for (; i < n; ++i) y[i] += alpha * x[i];
}

void haar_forward_avx2(const double* x, double* approx, double* detail, std::size_t half) {
  const __m256d s = _mm256_set1_pd(kInvSqrt2);
  std::size_t i = 0;
  for (; i + 4 <= half; i += 4) {
    const __m256d lo = _mm256_loadu_pd(x + 2 * i);      // x0 x1 x2 x3
    const __m256d hi = _mm256_loadu_pd(x + 2 * i + 4);  // x4 x5 x6 x7
    // hadd -> [x0+x1, x4+x5, x2+x3, x6+x7]; reorder lanes to pair order.
    const __m256d sum = _mm256_permute4x64_pd(_mm256_hadd_pd(lo, hi), 0xD8);
    const __m256d dif = _mm256_permute4x64_pd(_mm256_hsub_pd(lo, hi), 0xD8);
    _mm256_storeu_pd(approx + i, _mm256_mul_pd(sum, s));
    _mm256_storeu_pd(detail + i, _mm256_mul_pd(dif, s));
  }
  for (; i < half; ++i) {
    const double a = x[2 * i];
    const double b = x[2 * i + 1];
    approx[i] = (a + b) * kInvSqrt2;
    detail[i] = (a - b) * kInvSqrt2;
  }
}

void haar_inverse_avx2(const double* approx, const double* detail, double* x, std::size_t half) {
  const __m256d s = _mm256_set1_pd(kInvSqrt2);
  std::size_t i = 0;
  for (; i + 4 <= half; i += 4) {
    const __m256d a = _mm256_loadu_pd(approx + i);
    const __m256d d = _mm256_loadu_pd(detail + i);
    const __m256d even = _mm256_mul_pd(_mm256_add_pd(a, d), s);  // e0 e1 e2 e3
    const __m256d odd = _mm256_mul_pd(_mm256_sub_pd(a, d), s);   // o0 o1 o2 o3
    const __m256d lo = _mm256_unpacklo_pd(even, odd);            // e0 o0 e2 o2
    const __m256d hi = _mm256_unpackhi_pd(even, odd);            // e1 o1 e3 o3
    _mm256_storeu_pd(x + 2 * i, _mm256_permute2f128_pd(lo, hi, 0x20));
    _mm256_storeu_pd(x + 2 * i + 4, _mm256_permute2f128_pd(lo, hi, 0x31));
  }
  for (; i < half; ++i) {
    const double a = approx[i];
    const double d = detail[i];
    x[2 * i] = (a + d) * kInvSqrt2;
    x[2 * i + 1] = (a - d) * kInvSqrt2;
  }
}

}  // namespace

const KernelTable kAvx2Table{Isa::kAvx2,       dot_avx2,          weighted_dot_avx2,
                             axpy_avx2,        haar_forward_avx2, haar_inverse_avx2};

}  // namespace cmr::simd::detail
