#include <arm_neon.h>

#include "cmr/kernels.hpp"

namespace cmr::simd::detail {
namespace {

constexpr double kInvSqrt2 = 0.70710678118654752440;

double dot_neon(const double* a, const double* b, std::size_t n) {
  float64x2_t acc0 = vdupq_n_f64(0.0);
  float64x2_t acc1 = vdupq_n_f64(0.0);
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    acc0 = vfmaq_f64(acc0, vld1q_f64(a + i), vld1q_f64(b + i));
    acc1 = vfmaq_f64(acc1, vld1q_f64(a + i + 2), vld1q_f64(b + i + 2));
  }
  double s = vaddvq_f64(vaddq_f64(acc0, acc1));
  for (; i < n; ++i) s += a[i] * b[i];
  return s;
}

double weighted_dot_neon(const double* a, const double* w, const double* b, std::size_t n) {
  float64x2_t acc = vdupq_n_f64(0.0);
  std::size_t i = 0;
  for (; i + 2 <= n; i += 2) {
    acc = vfmaq_f64(acc, vmulq_f64(vld1q_f64(a + i), vld1q_f64(w + i)), vld1q_f64(b + i));
  }
  double s = vaddvq_f64(acc);
  for (; i < n; ++i) s += a[i] * w[i] * b[i];
  return s;
}

void axpy_neon(double alpha, const double* x, double* y, std::size_t n) {
  const float64x2_t va = vdupq_n_f64(alpha);
  std::size_t i = 0;
  for (; i + 2 <= n; i += 2) vst1q_f64(y + i, vfmaq_f64(vld1q_f64(y + i), va, vld1q_f64(x + i)));
  for (; i < n; ++i) y[i] += alpha * x[i];
}

void haar_forward_neon(const double* x, double* approx, double* detail, std::size_t half) {
  const float64x2_t s = vdupq_n_f64(kInvSqrt2);
  std::size_t i = 0;
  for (; i + 2 <= half; i += 2) {
    const float64x2x2_t v = vld2q_f64(x + 2 * i);  // even lanes, odd lanes
    vst1q_f64(approx + i, vmulq_f64(vaddq_f64(v.val[0], v.val[1]), s));
    vst1q_f64(detail + i, vmulq_f64(vsubq_f64(v.val[0], v.val[1]), s));
  }
  for (; i < half; ++i) {
    approx[i] = (x[2 * i] + x[2 * i + 1]) * kInvSqrt2;
    detail[i] = (x[2 * i] - x[2 * i + 1]) * kInvSqrt2;
  }
}

void haar_inverse_neon(const double* approx, const double* detail, double* x, std::size_t half) {
  const float64x2_t s = vdupq_n_f64(kInvSqrt2);
  std::size_t i = 0;
  for (; i + 2 <= half; i += 2) {
    const float64x2_t a = vld1q_f64(approx + i);
    const float64x2_t d = vld1q_f64(detail + i);
    float64x2x2_t out;
    out.val[0] = vmulq_f64(vaddq_f64(a, d), s);
    out.val[1] = vmulq_f64(vsubq_f64(a, d), s);
    vst2q_f64(x + 2 * i, out);
  }
  for (; i < half; ++i) {
    x[2 * i] = (approx[i] + detail[i]) * kInvSqrt2;
    x[2 * i + 1] = (approx[i] - detail[i]) * kInvSqrt2;
  }
}

}  // namespace

const KernelTable kNeonTable{Isa::kNeon,       dot_neon,          weighted_dot_neon,
                             axpy_neon,        haar_forward_neon, haar_inverse_neon};

}  // namespace cmr::simd::detail
