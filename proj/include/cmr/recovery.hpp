#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <vector>

#include "cmr/coeff_stream.hpp"
#include "cmr/sparse_basis.hpp"
#include "cmr/types.hpp"

namespace cmr {

class ReadingTrace;
class Topology;

struct BPOptions {
  /// Relative feasibility tolerance: ||Ax - y|| <= tol ||y||. The duality gap
  /// is driven below tol / 10 relative to ||x||_1.
  double tol = 1e-6;
  std::size_t max_iterations = 200;
};

struct BPResult {
  Vector x;
  std::size_t iterations = 0;
  double residual = 0.0;      // ||Ax - y|| / ||y|| on the original system
  double duality_gap = 0.0;   // relative to ||x||_1
  std::vector<std::size_t> dropped_rows;  // linearly dependent rows removed before solving
};

/// min ||x||_1 s.t. Ax = y, solved by a primal-dual interior-point method on
/// the split  min 1'u  s.t.  -u <= x <= u, Ax = y. Linearly dependent rows of
/// A are dropped (reported in dropped_rows). Throws SolverError carrying the
/// last residual when the certificate is not reached.
BPResult basis_pursuit(const Matrix& a, const Vector& y, const BPOptions& options = {});

struct SnapshotResult {
  Vector d_hat;
  Vector coeffs;
  BPResult solve;
};

/// Solves min ||x||_1 s.t. y = Phi H^-1 Psi x and returns d_hat = H^-1 Psi x.
SnapshotResult reconstruct_snapshot(const Vector& y, const Matrix& phi, const Permutation& h,
                                    const WaveletBasis& basis, const BPOptions& options = {});

struct BoundOptions {
  EstimateMode mode = EstimateMode::kExact;
  std::size_t rip_samples = 2000;  // Monte-Carlo samples in estimated mode
  std::uint64_t seed = 1;
};

struct BoundReport {
  std::size_t k = 0;
  double gamma_a = 0.0;
  double gamma_a_prime = 0.0;
  double beta_a = 0.0;
  double delta_k = 0.0;
  double delta_k_prime = 0.0;  // delta at sparsity 2k
  double c = 0.0;
  std::optional<double> bound;  // C beta gamma ||y||, present only when feasible
  EstimateMode mode = EstimateMode::kExact;
  bool feasible = false;
};

/// Perturbation bound for recovering with dictionary Q D instead of D, where
/// Q is the row permutation `perturbation` (Q v)[r] = v[q[r]]:
///   gamma  = ||Phi Q D - Phi D||^k  / ||Phi D||^k,   gamma' likewise at 2k,
///   beta   = sqrt((1 + delta_k) / (1 - delta_k)),     delta of Phi D,
///   feasible iff delta_2k < sqrt2 / (1 + gamma')^2 - 1,
///   C      = 4 sqrt(1 + delta_2k)(1 + gamma') / (1 - (sqrt2 + 1)((1 + delta_2k)(1 + gamma')^2 - 1)),
///   bound  = C beta gamma ||y||.
/// Estimated mode uses greedy k-column norms and Monte-Carlo RIP, so the
/// report is labelled and not a guaranteed bound.
BoundReport error_bound(const Matrix& phi, const Matrix& dictionary, const Permutation& perturbation,
                        std::size_t k, const Vector& y, const BoundOptions& options = {});

/// Number of largest-magnitude coefficients holding `fraction` of the energy.
std::size_t energy_support(const Vector& coeffs, double fraction = 0.99);

struct IncrementSparsity {
  bool exact_k_sparse = false;
  double epsilon = 0.0;  // l1 norm of z outside its K largest magnitudes
  Vector coeffs;         // z
};

inline constexpr double kSparsityThreshold = 1e-10;

/// z = analysis coefficients of the increment in the domain H^-1 Psi.
IncrementSparsity increment_sparsity(const Vector& increment, const Permutation& h, const WaveletBasis& basis,
                                     std::size_t k);

/// d_hat(t+1) = d(t) + n_hat with n_hat recovered from y(t+1) - y(t) in the
/// domain H^-1(t) Psi.
SnapshotResult reconstruct_increment(const Vector& y_next, const Vector& y_prev, const Vector& d_prev,
                                     const Matrix& phi, const Permutation& h_prev, const WaveletBasis& basis,
                                     const BPOptions& options = {});

struct StreamOptions {
  BPOptions solver;
  /// When set, every compressed round also gets a BoundReport evaluated at
  /// the realized perturbation H^-1(t-1) H(t), with H(t) the ordering of the
  /// true d(t) (available in simulation only).
  std::optional<BoundOptions> bounds;
  /// Sparsity for bound reports; 0 picks the 99%-energy support of round 0.
  std::size_t bound_k = 0;
};

struct StreamRound {
  std::size_t round = 0;
  bool skipped = false;   // partial round: no reconstruction, H carried forward
  bool bootstrap = false;  // round 0, collected in full
  Vector y;
  Vector d_hat;
  Permutation h;  // ordering of d_hat, used for the next round
  std::size_t cost = 0;
  double err_l2 = 0.0;
  double snr_db = 0.0;
  std::optional<BoundReport> bound;
};

/// Readings of every topology node (topology order) per round; trace columns
/// are matched to nodes by ID. Throws InputError when a node has no column.
Matrix align_trace(const ReadingTrace& trace, const Topology& topo);

struct Measurement {
  Vector y;
  std::size_t cost = 0;
  bool partial = false;
};

/// Produces the collector's measurements for one compressed round.
using MeasureFn = std::function<Measurement(std::size_t round, const Vector& d)>;

/// Stream reconstruction against an arbitrary measurement source; `phi` is
/// the M x N matrix the collector believes produced y.
std::vector<StreamRound> stream_reconstruct(const Matrix& readings, const Topology& topo, const Matrix& phi,
                                            const MeasureFn& measure, const StreamOptions& options = {});

/// Round 0 is a full collection; every later round is reconstructed with the
/// ordering estimated from the previous reconstruction, never ground truth.
/// Trace columns are matched to topology nodes by ID.
std::vector<StreamRound> stream_reconstruct(const ReadingTrace& trace, const Topology& topo, std::size_t m,
                                            const StreamOptions& options = {});

}  // namespace cmr
