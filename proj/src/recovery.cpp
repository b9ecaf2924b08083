#include "cmr/recovery.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>
#include <span>

#include <Eigen/Cholesky>
#include <Eigen/QR>

#include "cmr/analysis.hpp"
#include "cmr/error.hpp"
#include "cmr/kernels.hpp"
#include "cmr/reading_protocol.hpp"
#include "cmr/topology.hpp"
#include "cmr/trace_store.hpp"

namespace cmr {
namespace {

std::span<const double> cspan(const Vector& v) { return {v.data(), static_cast<std::size_t>(v.size())}; }
std::span<double> mspan(Vector& v) { return {v.data(), static_cast<std::size_t>(v.size())}; }

/// Row-major operator with the matrix-vector products routed through the kernels.
class Operator {
 public:
  explicit Operator(RowMatrix a) : a_(std::move(a)) {}

  std::size_t rows() const { return static_cast<std::size_t>(a_.rows()); }
  std::size_t cols() const { return static_cast<std::size_t>(a_.cols()); }

  Vector apply(const Vector& x) const {
    Vector y(a_.rows());
    simd::gemv(a_.data(), rows(), cols(), cspan(x), mspan(y));
    return y;
  }

  Vector apply_t(const Vector& v) const {
    Vector x(a_.cols());
    simd::gemv_t(a_.data(), rows(), cols(), cspan(v), mspan(x));
    return x;
  }

  /// A diag(w) A^T.
  Matrix weighted_gram(const Vector& w) const {
    const auto m = a_.rows();
    const auto n = cols();
    Matrix g(m, m);
    for (Eigen::Index i = 0; i < m; ++i) {
      const std::span<const double> ri(a_.data() + i * a_.cols(), n);
      for (Eigen::Index j = 0; j <= i; ++j) {
        const std::span<const double> rj(a_.data() + j * a_.cols(), n);
        g(i, j) = g(j, i) = simd::weighted_dot(ri, cspan(w), rj);
      }
    }
    return g;
  }

 private:
  RowMatrix a_;
};

/// Solves the SPD system, falling back to a pivoted LDL^T when Cholesky fails.
std::optional<Vector> spd_solve(const Matrix& g, const Vector& rhs) {
  Eigen::LLT<Matrix> llt(g);
  if (llt.info() == Eigen::Success) return Vector(llt.solve(rhs));
  Eigen::LDLT<Matrix> ldlt(g);
  if (ldlt.info() != Eigen::Success) return std::nullopt;
  Vector out = ldlt.solve(rhs);
  if (!out.allFinite()) return std::nullopt;
  return out;
}

/// Indices of a maximal linearly independent subset of rows, ascending.
std::vector<std::size_t> independent_rows(const Matrix& a) {
  Eigen::ColPivHouseholderQR<Matrix> qr(a.transpose());
  qr.setThreshold(1e-10);
  const auto rank = qr.rank();
  std::vector<std::size_t> keep;
  for (Eigen::Index i = 0; i < rank; ++i) keep.push_back(static_cast<std::size_t>(qr.colsPermutation().indices()(i)));
  std::sort(keep.begin(), keep.end());
  return keep;
}

struct PdState {
  Vector x, u, lamu1, lamu2, v, atv, fu1, fu2, rpri;
  double sdg = 0.0;
  double tau = 0.0;
};

double residual_norm(const PdState& s, double tau) {
  const Vector rdual_x = s.lamu1 - s.lamu2 + s.atv;
  const Vector rdual_u = Vector::Ones(s.x.size()) - s.lamu1 - s.lamu2;
  const Vector rcent1 = (-s.lamu1.cwiseProduct(s.fu1)).array() - 1.0 / tau;
  const Vector rcent2 = (-s.lamu2.cwiseProduct(s.fu2)).array() - 1.0 / tau;
  return std::sqrt(rdual_x.squaredNorm() + rdual_u.squaredNorm() + rcent1.squaredNorm() + rcent2.squaredNorm() +
                   s.rpri.squaredNorm());
}

}  // namespace

BPResult basis_pursuit(const Matrix& a_in, const Vector& y_in, const BPOptions& options) {
  if (a_in.rows() != y_in.size()) throw InputError("basis_pursuit: dimension mismatch");
  if (!(options.tol > 0)) throw InputError("basis_pursuit: tol must be positive");
  const Eigen::Index n = a_in.cols();
  BPResult result;
  const double ynorm = y_in.norm();
  if (ynorm == 0.0) {
    result.x = Vector::Zero(n);
    return result;
  }

  // Drop dependent rows so that A A^T is invertible.
  const auto keep = independent_rows(a_in);
  Matrix a = a_in;
  Vector y = y_in;
  if (keep.size() < static_cast<std::size_t>(a_in.rows())) {
    a.resize(static_cast<Eigen::Index>(keep.size()), n);
    y.resize(static_cast<Eigen::Index>(keep.size()));
    std::vector<bool> kept(static_cast<std::size_t>(a_in.rows()), false);
    for (std::size_t i = 0; i < keep.size(); ++i) {
      a.row(static_cast<Eigen::Index>(i)) = a_in.row(static_cast<Eigen::Index>(keep[i]));
      y(static_cast<Eigen::Index>(i)) = y_in(static_cast<Eigen::Index>(keep[i]));
      kept[keep[i]] = true;
    }
    for (std::size_t i = 0; i < kept.size(); ++i) {
      if (!kept[i]) result.dropped_rows.push_back(i);
    }
  }

  // Work on the normalized right-hand side; rescale at the end.
  const double scale = y.norm();
  const Vector b = y / scale;
  const Operator op{RowMatrix(a)};
  const Matrix aat = op.weighted_gram(Vector::Ones(n));
  const auto min_energy = [&](const Vector& rhs) -> Vector {
    const auto w = spd_solve(aat, rhs);
    if (!w) throw SolverError("basis_pursuit: A A^T is singular", 1.0);
    return op.apply_t(*w);
  };

  constexpr double kAlpha = 0.01;  // sufficient decrease
  constexpr double kBeta = 0.5;    // backtracking factor
  constexpr double kMu = 10.0;     // barrier growth
  const double gap_tol = 0.1 * options.tol;
  const double feas_tol = 0.1 * options.tol;  // on the normalized system, ||b|| = 1

  PdState s;
  s.x = min_energy(b);
  const double xmax = s.x.cwiseAbs().maxCoeff();
  s.u = 0.95 * s.x.cwiseAbs() + Vector::Constant(n, 0.10 * xmax);
  s.fu1 = s.x - s.u;
  s.fu2 = -s.x - s.u;
  s.lamu1 = -s.fu1.cwiseInverse();
  s.lamu2 = -s.fu2.cwiseInverse();
  s.v = -op.apply(s.lamu1 - s.lamu2);
  s.atv = op.apply_t(s.v);
  s.rpri = op.apply(s.x) - b;
  s.sdg = -(s.fu1.dot(s.lamu1) + s.fu2.dot(s.lamu2));
  s.tau = kMu * 2.0 * static_cast<double>(n) / s.sdg;
  double resnorm = residual_norm(s, s.tau);

  const auto converged = [&] {
    const double l1 = std::max(s.x.lpNorm<1>(), 1e-300);
    return s.sdg / l1 <= gap_tol && s.rpri.norm() <= feas_tol;
  };

  std::size_t iter = 0;
  for (; iter < options.max_iterations && !converged(); ++iter) {
    const double inv_tau = 1.0 / s.tau;
    const Vector inv1 = s.fu1.cwiseInverse();
    const Vector inv2 = s.fu2.cwiseInverse();
    const Vector w1 = -inv_tau * (-inv1 + inv2) - s.atv;
    const Vector w2 = -Vector::Ones(n) - inv_tau * (inv1 + inv2);
    const Vector w3 = -s.rpri;
    const Vector sig1 = -s.lamu1.cwiseProduct(inv1) - s.lamu2.cwiseProduct(inv2);
    const Vector sig2 = s.lamu1.cwiseProduct(inv1) - s.lamu2.cwiseProduct(inv2);
    const Vector sigx = sig1 - sig2.cwiseProduct(sig2).cwiseQuotient(sig1);
    const Vector inv_sigx = sigx.cwiseInverse();

    const Vector w1p = -(w3 - op.apply(w1.cwiseProduct(inv_sigx) -
                                       w2.cwiseProduct(sig2).cwiseQuotient(sigx.cwiseProduct(sig1))));
    const auto dv_opt = spd_solve(op.weighted_gram(inv_sigx), w1p);
    if (!dv_opt) break;
    const Vector& dv = *dv_opt;
    const Vector atdv = op.apply_t(dv);
    const Vector dx = (w1 - w2.cwiseProduct(sig2).cwiseQuotient(sig1) - atdv).cwiseProduct(inv_sigx);
    const Vector adx = op.apply(dx);
    const Vector du = (w2 - sig2.cwiseProduct(dx)).cwiseQuotient(sig1);
    const Vector dlamu1 =
        s.lamu1.cwiseProduct(inv1).cwiseProduct(-dx + du) - s.lamu1 - inv_tau * inv1;
    const Vector dlamu2 =
        s.lamu2.cwiseProduct(inv2).cwiseProduct(dx + du) - s.lamu2 - inv_tau * inv2;

    // Largest step keeping duals positive and iterates strictly feasible.
    double step = 1.0;
    for (Eigen::Index i = 0; i < n; ++i) {
      if (dlamu1(i) < 0) step = std::min(step, -s.lamu1(i) / dlamu1(i));
      if (dlamu2(i) < 0) step = std::min(step, -s.lamu2(i) / dlamu2(i));
      const double g1 = dx(i) - du(i);
      const double g2 = -dx(i) - du(i);
      if (g1 > 0) step = std::min(step, -s.fu1(i) / g1);
      if (g2 > 0) step = std::min(step, -s.fu2(i) / g2);
    }
    step *= 0.99;

    PdState next;
    bool accepted = false;
    for (int back = 0; back < 32; ++back) {
      next.x = s.x + step * dx;
      next.u = s.u + step * du;
      next.v = s.v + step * dv;
      next.atv = s.atv + step * atdv;
      next.lamu1 = s.lamu1 + step * dlamu1;
      next.lamu2 = s.lamu2 + step * dlamu2;
      next.fu1 = next.x - next.u;
      next.fu2 = -next.x - next.u;
      next.rpri = s.rpri + step * adx;
      if (residual_norm(next, s.tau) <= (1.0 - kAlpha * step) * resnorm) {
        accepted = true;
        break;
      }
      step *= kBeta;
    }
    if (!accepted) break;
    s.x = std::move(next.x);
    s.u = std::move(next.u);
    s.v = std::move(next.v);
    s.atv = std::move(next.atv);
    s.lamu1 = std::move(next.lamu1);
    s.lamu2 = std::move(next.lamu2);
    s.fu1 = std::move(next.fu1);
    s.fu2 = std::move(next.fu2);
    s.rpri = std::move(next.rpri);
    s.sdg = -(s.fu1.dot(s.lamu1) + s.fu2.dot(s.lamu2));
    s.tau = kMu * 2.0 * static_cast<double>(n) / s.sdg;
    resnorm = residual_norm(s, s.tau);
  }

  // Project onto Ax = b to clean up the last bits of infeasibility.
  const Vector r = op.apply(s.x) - b;
  if (r.norm() > 0.01 * feas_tol) s.x -= min_energy(r);

  result.iterations = iter;
  result.duality_gap = s.sdg / std::max(s.x.lpNorm<1>(), 1e-300);
  result.x = s.x * scale;
  result.residual = (a_in * result.x - y_in).norm() / ynorm;

  if (result.residual > options.tol || result.duality_gap > 10.0 * options.tol) {
    throw SolverError("basis_pursuit: no certificate after " + std::to_string(iter) + " iterations (residual " +
                          std::to_string(result.residual) + ", gap " + std::to_string(result.duality_gap) + ")",
                      result.residual);
  }
  return result;
}

SnapshotResult reconstruct_snapshot(const Vector& y, const Matrix& phi, const Permutation& h,
                                    const WaveletBasis& basis, const BPOptions& options) {
  if (static_cast<std::size_t>(phi.cols()) != basis.length() || h.size() != basis.length()) {
    throw InputError("reconstruct_snapshot: sizes of Phi, H and the basis disagree");
  }
  const Matrix a = phi * permuted_dictionary(basis, h);
  SnapshotResult out;
  out.solve = basis_pursuit(a, y, options);
  out.coeffs = out.solve.x;
  out.d_hat = synthesize_permuted(basis, h, out.coeffs);
  return out;
}

BoundReport error_bound(const Matrix& phi, const Matrix& dictionary, const Permutation& perturbation,
                        std::size_t k, const Vector& y, const BoundOptions& options) {
  if (static_cast<std::size_t>(dictionary.rows()) != perturbation.size() || phi.cols() != dictionary.rows()) {
    throw InputError("error_bound: dimension mismatch");
  }
  const auto ncols = static_cast<std::size_t>(dictionary.cols());
  if (k == 0 || k > ncols) throw InputError("error_bound: need 1 <= k <= N");
  const std::size_t k2 = std::min(2 * k, ncols);

  Matrix permuted(dictionary.rows(), dictionary.cols());
  for (std::size_t r = 0; r < perturbation.size(); ++r) {
    permuted.row(static_cast<Eigen::Index>(r)) = dictionary.row(static_cast<Eigen::Index>(perturbation[r]));
  }
  const Matrix base = phi * dictionary;
  const Matrix diff = phi * permuted - base;

  const EstimateMode norm_mode = options.mode;
  BoundReport rep;
  rep.k = k;
  rep.mode = options.mode;
  const auto ratio = [&](std::size_t kk) {
    const double num = diff.isZero(0.0) ? 0.0 : submatrix_norm(diff, kk, norm_mode).value;
    const double den = submatrix_norm(base, kk, norm_mode).value;
    return den > 0 ? num / den : std::numeric_limits<double>::infinity();
  };
  rep.gamma_a = ratio(k);
  rep.gamma_a_prime = ratio(k2);
  rep.delta_k = estimate_rip(base, k, options.mode, options.rip_samples, options.seed).delta;
  rep.delta_k_prime = estimate_rip(base, k2, options.mode, options.rip_samples, options.seed + 1).delta;

  if (rep.delta_k >= 1.0 || !std::isfinite(rep.gamma_a_prime)) {
    rep.beta_a = std::numeric_limits<double>::infinity();
    return rep;
  }
  rep.beta_a = std::sqrt((1.0 + rep.delta_k) / (1.0 - rep.delta_k));
  const double g1 = 1.0 + rep.gamma_a_prime;
  const double limit = std::numbers::sqrt2 / (g1 * g1) - 1.0;
  rep.feasible = rep.delta_k_prime < limit;
  const double denom = 1.0 - (std::numbers::sqrt2 + 1.0) * ((1.0 + rep.delta_k_prime) * g1 * g1 - 1.0);
  rep.c = 4.0 * std::sqrt(1.0 + rep.delta_k_prime) * g1 / denom;
  if (rep.feasible) rep.bound = rep.c * rep.beta_a * rep.gamma_a * y.norm();
  return rep;
}

std::size_t energy_support(const Vector& coeffs, double fraction) {
  std::vector<double> e(static_cast<std::size_t>(coeffs.size()));
  for (Eigen::Index i = 0; i < coeffs.size(); ++i) e[static_cast<std::size_t>(i)] = coeffs(i) * coeffs(i);
  std::sort(e.begin(), e.end(), std::greater<>());
  const double total = std::accumulate(e.begin(), e.end(), 0.0);
  if (total == 0.0) return 0;
  double acc = 0.0;
  for (std::size_t i = 0; i < e.size(); ++i) {
    acc += e[i];
    if (acc >= fraction * total) return i + 1;
  }
  return e.size();
}

IncrementSparsity increment_sparsity(const Vector& increment, const Permutation& h, const WaveletBasis& basis,
                                     std::size_t k) {
  if (k > basis.padded()) throw InputError("increment_sparsity: K exceeds the signal length");
  IncrementSparsity out;
  out.coeffs = analyze_permuted(basis, h, increment);
  std::vector<double> mags(static_cast<std::size_t>(out.coeffs.size()));
  for (Eigen::Index i = 0; i < out.coeffs.size(); ++i) mags[static_cast<std::size_t>(i)] = std::abs(out.coeffs(i));
  const auto significant = std::count_if(mags.begin(), mags.end(), [](double v) { return v > kSparsityThreshold; });
  out.exact_k_sparse = static_cast<std::size_t>(significant) <= k;
  std::sort(mags.begin(), mags.end(), std::greater<>());
  out.epsilon = std::accumulate(mags.begin() + static_cast<std::ptrdiff_t>(std::min(k, mags.size())), mags.end(), 0.0);
  return out;
}

SnapshotResult reconstruct_increment(const Vector& y_next, const Vector& y_prev, const Vector& d_prev,
                                     const Matrix& phi, const Permutation& h_prev, const WaveletBasis& basis,
                                     const BPOptions& options) {
  if (y_next.size() != y_prev.size()) throw InputError("reconstruct_increment: measurement size mismatch");
  const Vector dy = y_next - y_prev;
  SnapshotResult out;
  if (dy.norm() == 0.0) {
    out.coeffs = Vector::Zero(static_cast<Eigen::Index>(basis.padded()));
    out.d_hat = d_prev;
    return out;
  }
  out = reconstruct_snapshot(dy, phi, h_prev, basis, options);
  out.d_hat += d_prev;
  return out;
}

Matrix align_trace(const ReadingTrace& trace, const Topology& topo) {
  if (trace.n_nodes() != topo.size()) throw InputError("trace and topology sizes differ");
  const auto& tid = trace.node_ids();
  Matrix out(static_cast<Eigen::Index>(trace.n_rounds()), static_cast<Eigen::Index>(topo.size()));
  for (std::size_t i = 0; i < topo.size(); ++i) {
    const NodeId id = topo.nodes()[i].id;
    const auto it = std::find(tid.begin(), tid.end(), id);
    if (it == tid.end()) throw InputError("node " + std::to_string(id) + " missing from trace");
    out.col(static_cast<Eigen::Index>(i)) = trace.readings().col(it - tid.begin());
  }
  return out;
}

std::vector<StreamRound> stream_reconstruct(const Matrix& readings, const Topology& topo, const Matrix& phi,
                                            const MeasureFn& measure, const StreamOptions& options) {
  if (readings.rows() < 2) throw InputError("stream_reconstruct: need at least 2 rounds");
  if (static_cast<std::size_t>(readings.cols()) != topo.size() || phi.cols() != readings.cols()) {
    throw InputError("stream_reconstruct: readings, topology and Phi disagree in size");
  }
  const WaveletBasis basis = haar_basis(topo.size());

  std::vector<StreamRound> out;
  StreamRound first;
  first.bootstrap = true;
  const Vector d0 = readings.row(0).transpose();
  const RoundResult full = run_full_round(topo, d0);
  first.cost = full.cost;
  first.d_hat = full.collected;
  first.h = switching_permutation(first.d_hat);
  first.err_l2 = (d0 - first.d_hat).norm();
  first.snr_db = d0.norm() > 0 ? snr_db(d0, first.d_hat) : 0.0;
  first.skipped = full.partial;
  Permutation h_prev = first.h;

  std::size_t bound_k = options.bound_k;
  if (bound_k == 0) bound_k = std::max<std::size_t>(1, energy_support(analyze_permuted(basis, first.h, d0), 0.99));
  bound_k = std::min(bound_k, basis.padded());
  out.push_back(std::move(first));

  for (Eigen::Index t = 1; t < readings.rows(); ++t) {
    StreamRound r;
    r.round = static_cast<std::size_t>(t);
    const Vector d = readings.row(t).transpose();
    Measurement meas = measure(r.round, d);
    r.cost = meas.cost;
    r.y = std::move(meas.y);
    if (meas.partial) {
      r.skipped = true;
      r.h = h_prev;
      out.push_back(std::move(r));
      continue;
    }
    const SnapshotResult snap = reconstruct_snapshot(r.y, phi, h_prev, basis, options.solver);
    r.d_hat = snap.d_hat;
    r.h = switching_permutation(r.d_hat);
    r.err_l2 = (d - r.d_hat).norm();
    r.snr_db = snr_db(d, r.d_hat);
    if (options.bounds) {
      const Permutation h_true = switching_permutation(d);
      const Permutation perturbation = compose(invert_perm(h_prev), h_true);
      BoundOptions bo = *options.bounds;
      bo.seed += r.round;
      r.bound = error_bound(phi, permuted_dictionary(basis, h_true), perturbation, bound_k, r.y, bo);
    }
    h_prev = r.h;
    out.push_back(std::move(r));
  }
  return out;
}

std::vector<StreamRound> stream_reconstruct(const ReadingTrace& trace, const Topology& topo, std::size_t m,
                                            const StreamOptions& options) {
  const Matrix readings = align_trace(trace, topo);
  const auto ids = topo.ids();
  const Matrix phi = assemble_sensing_matrix(ids, m).entries();
  const MeasureFn plain = [&](std::size_t, const Vector& d) {
    const RoundResult r = run_plain_round(topo, d, m);
    return Measurement{r.y, r.cost, r.partial};
  };
  return stream_reconstruct(readings, topo, phi, plain, options);
}

}  // namespace cmr
