#include <algorithm>
#include <cassert>
#include <cstdlib>
#include <cstring>

#include "cmr/kernels.hpp"

namespace cmr::simd {
namespace {

bool cpu_supports(Isa isa) {
  switch (isa) {
    case Isa::kScalar:
      return true;
    case Isa::kAvx2:
#if defined(CMR_HAVE_AVX2) && (defined(__GNUC__) || defined(__clang__))
      return __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma");
#else
      return false;
#endif
    case Isa::kNeon:
#if defined(CMR_HAVE_NEON)
      return true;  // mandatory on aarch64
#else
      return false;
#endif
  }
  return false;
}

bool force_scalar() {
  const char* v = std::getenv("CMR_FORCE_SCALAR");
  return v != nullptr && std::strcmp(v, "0") != 0 && *v != '\0';
}

const KernelTable& select() {
  if (!force_scalar()) {
    if (const auto* t = table_for(Isa::kAvx2)) return *t;
    if (const auto* t = table_for(Isa::kNeon)) return *t;
  }
  return detail::kScalarTable;
}

}  // namespace

std::string_view isa_name(Isa isa) {
  switch (isa) {
    case Isa::kScalar:
      return "scalar";
    case Isa::kAvx2:
      return "avx2";
    case Isa::kNeon:
      return "neon";
  }
  return "unknown";
}

const KernelTable* table_for(Isa isa) {
  if (!cpu_supports(isa)) return nullptr;
  switch (isa) {
    case Isa::kScalar:
      return &detail::kScalarTable;
#if defined(CMR_HAVE_AVX2)
    case Isa::kAvx2:
      return &detail::kAvx2Table;
#endif
#if defined(CMR_HAVE_NEON)
    case Isa::kNeon:
      return &detail::kNeonTable;
#endif
    default:
      return nullptr;
  }
}

const KernelTable& active() {
  static const KernelTable& table = select();
  return table;
}

double dot(std::span<const double> a, std::span<const double> b) {
  assert(a.size() == b.size());
  return active().dot(a.data(), b.data(), a.size());
}

double weighted_dot(std::span<const double> a, std::span<const double> w,
                    std::span<const double> b) {
  assert(a.size() == w.size() && a.size() == b.size());
  return active().weighted_dot(a.data(), w.data(), b.data(), a.size());
}

void axpy(double alpha, std::span<const double> x, std::span<double> y) {
  assert(x.size() == y.size());
  active().axpy(alpha, x.data(), y.data(), x.size());
}

void gemv(const double* a, std::size_t rows, std::size_t cols, std::span<const double> x,
          std::span<double> y) {
  assert(x.size() == cols && y.size() == rows);
  const auto& k = active();
  for (std::size_t r = 0; r < rows; ++r) y[r] = k.dot(a + r * cols, x.data(), cols);
}

void gemv_t(const double* a, std::size_t rows, std::size_t cols, std::span<const double> x,
            std::span<double> y) {
  assert(x.size() == rows && y.size() == cols);
  const auto& k = active();
  std::fill(y.begin(), y.end(), 0.0);
  for (std::size_t r = 0; r < rows; ++r) k.axpy(x[r], a + r * cols, y.data(), cols);
}

}  // namespace cmr::simd
