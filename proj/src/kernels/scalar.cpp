#include <cmath>

#include "cmr/kernels.hpp"

namespace cmr::simd::detail {
namespace {

constexpr double kInvSqrt2 = 0.70710678118654752440;

double dot_scalar(const double* a, const double* b, std::size_t n) {
  double s = 0.0;
  for (std::size_t i = 0; i < n; ++i) s += a[i] * b[i];
  return s;
}

double weighted_dot_scalar(const double* a, const double* w, const double* b, std::size_t n) {
  double s = 0.0;
  for (std::size_t i = 0; i < n; ++i) s += a[i] * w[i] * b[i];
  return s;
}

void axpy_scalar(double alpha, const double* x, double* y, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) y[i] += alpha * x[i];
}

void haar_forward_scalar(const double* x, double* approx, double* detail, std::size_t half) {
  for (std::size_t i = 0; i < half; ++i) {
    const double a = x[2 * i];
    const double b = x[2 * i + 1];
    approx[i] = (a + b) * kInvSqrt2;
    detail[i] = (a - b) * kInvSqrt2;
  }
}

void haar_inverse_scalar(const double* approx, const double* detail, double* x,
                         std::size_t half) {
  for (std::size_t i = 0; i < half; ++i) {
    const double a = approx[i];
    const double d = detail[i];
    x[2 * i] = (a + d) * kInvSqrt2;
    x[2 * i + 1] = (a - d) * kInvSqrt2;
  }
}

}  // namespace

const KernelTable kScalarTable{Isa::kScalar,        dot_scalar,          weighted_dot_scalar,
                               axpy_scalar,         haar_forward_scalar, haar_inverse_scalar};

}  // namespace cmr::simd::detail
