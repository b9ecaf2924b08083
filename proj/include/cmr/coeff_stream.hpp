#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string_view>
#include <vector>

#include <Eigen/Core>

#include "cmr/types.hpp"

namespace cmr {

/// Version tag mixed into every per-node seed; see docs/PROTOCOL.md.
inline constexpr std::string_view kCoeffStreamTag = "cmr.phi.v1";

/// 64-bit PRNG seed of a node's coefficient stream:
/// first 8 bytes (big-endian) of SHA-1(tag || id as 8-byte big-endian).
std::uint64_t coeff_seed(NodeId id);

/// First `count` standard-normal draws of the node's stream (element l-1 is z_l).
std::vector<double> coeff_stream(NodeId id, std::size_t count);

/// phi(id, l, m) = z_l(id) / sqrt(m) for l >= 1.
double phi(NodeId id, std::size_t l, std::size_t m);

/// M x N Gaussian sensing matrix; column j is the stream of column_ids[j].
class SensingMatrix {
 public:
  SensingMatrix(std::vector<NodeId> column_ids, RowMatrix entries);

  std::size_t m() const { return static_cast<std::size_t>(entries_.rows()); }
  std::size_t n() const { return static_cast<std::size_t>(entries_.cols()); }
  const RowMatrix& entries() const { return entries_; }
  const std::vector<NodeId>& column_ids() const { return column_ids_; }
  std::size_t column_of(NodeId id) const;
  double operator()(std::size_t row, std::size_t col) const {
    return entries_(static_cast<Eigen::Index>(row), static_cast<Eigen::Index>(col));
  }

  /// round(2^scale_bits * phi) entry-wise.
  Eigen::Matrix<std::int64_t, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> quantized(
      unsigned scale_bits = 16) const;
  /// The quantized matrix divided back by 2^scale_bits.
  SensingMatrix quantized_real(unsigned scale_bits = 16) const;

 private:
  std::vector<NodeId> column_ids_;
  RowMatrix entries_;
};

/// Entry (l, j) = phi(ids[j], l + 1, m). Throws InputError on empty or duplicate ids.
SensingMatrix assemble_sensing_matrix(std::span<const NodeId> ids, std::size_t m);

enum class EstimateMode { kExact, kEstimated };

const char* mode_name(EstimateMode mode);

struct RipEstimate {
  double delta = 0.0;
  EstimateMode mode = EstimateMode::kExact;  // kEstimated: Monte-Carlo lower estimate
  std::size_t supports = 0;                  // supports (or samples) examined
};

/// Supports visited by exact enumeration are capped at this many.
inline constexpr double kEnumerationGuard = 1e6;

double binomial(std::size_t n, std::size_t k);

/// delta_k of A. Exact mode enumerates every k-column support and returns
/// max(1 - sigma_min^2, sigma_max^2 - 1); Monte-Carlo mode samples `samples`
/// random unit k-sparse vectors and returns the largest | ||Az||^2 - 1 |,
/// which can only underestimate delta_k.
RipEstimate estimate_rip(const Matrix& a, std::size_t k, EstimateMode mode, std::size_t samples = 2000,
                         std::uint64_t seed = 1);

struct NormEstimate {
  double value = 0.0;  // exact: the k-column norm; greedy: a lower estimate
  double upper = 0.0;  // spectral norm of the whole matrix
  EstimateMode mode = EstimateMode::kExact;
};

/// Largest spectral norm over k-column submatrices of x. Greedy mode grows the
/// support one column at a time, always adding the column that increases the
/// spectral norm most.
NormEstimate submatrix_norm(const Matrix& x, std::size_t k, EstimateMode mode);

double spectral_norm(const Matrix& x);

}  // namespace cmr
