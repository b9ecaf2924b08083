#pragma once

// Data-parallel inner loops used by the solver and the wavelet transform.
//
// Every kernel has a scalar reference implementation. Vector variants (AVX2+FMA
// on x86-64, NEON on aarch64) are selected once at startup from the CPU
// capabilities; set CMR_FORCE_SCALAR=1 in the environment to pin the scalar
// table. Reductions may differ from the scalar path in the last bits because
// the summation order changes; the Haar steps are bit-identical across ISAs.

#include <cstddef>
#include <span>
#include <string_view>

namespace cmr::simd {

enum class Isa { kScalar, kAvx2, kNeon };

std::string_view isa_name(Isa isa);

struct KernelTable {
  Isa isa;
  double (*dot)(const double* a, const double* b, std::size_t n);
  // sum_i a_i * w_i * b_i
  double (*weighted_dot)(const double* a, const double* w, const double* b, std::size_t n);
  // y += alpha * x
  void (*axpy)(double alpha, const double* x, double* y, std::size_t n);
  // One analysis level: approx[i] = (x[2i] + x[2i+1]) / sqrt2, detail[i] = (x[2i] - x[2i+1]) / sqrt2.
  void (*haar_forward)(const double* x, double* approx, double* detail, std::size_t half);
  // Inverse of haar_forward.
  void (*haar_inverse)(const double* approx, const double* detail, double* x, std::size_t half);
};

/// Table chosen at startup (or forced via CMR_FORCE_SCALAR).
const KernelTable& active();

/// Table for a specific ISA; returns nullptr when the ISA is not compiled in
/// or not supported by the running CPU.
const KernelTable* table_for(Isa isa);

// Convenience wrappers over the active table.

double dot(std::span<const double> a, std::span<const double> b);
double weighted_dot(std::span<const double> a, std::span<const double> w,
                    std::span<const double> b);
void axpy(double alpha, std::span<const double> x, std::span<double> y);

/// y = A x for a row-major rows x cols matrix.
void gemv(const double* a, std::size_t rows, std::size_t cols, std::span<const double> x,
          std::span<double> y);
/// y = A^T x for a row-major rows x cols matrix.
void gemv_t(const double* a, std::size_t rows, std::size_t cols, std::span<const double> x,
            std::span<double> y);

namespace detail {
extern const KernelTable kScalarTable;
#if defined(CMR_HAVE_AVX2)
extern const KernelTable kAvx2Table;
#endif
#if defined(CMR_HAVE_NEON)
extern const KernelTable kNeonTable;
#endif
}  // namespace detail

}  // namespace cmr::simd
