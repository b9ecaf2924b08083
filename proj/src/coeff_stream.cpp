#include "cmr/coeff_stream.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <unordered_set>

#include <Eigen/Eigenvalues>
#include <Eigen/SVD>

#include "cmr/crypto.hpp"
#include "cmr/error.hpp"
#include "random.hpp"

namespace cmr {

std::uint64_t coeff_seed(NodeId id) {
  crypto::Bytes bytes(kCoeffStreamTag.begin(), kCoeffStreamTag.end());
  crypto::append_u64_be(bytes, id);
  return crypto::digest64_u64(bytes);
}

std::vector<double> coeff_stream(NodeId id, std::size_t count) {
  std::mt19937_64 rng(coeff_seed(id));
  std::vector<double> out;
  out.reserve(count + 1);
  while (out.size() < count) {
    const auto [a, b] = detail::gaussian_pair(rng);
    out.push_back(a);
    out.push_back(b);
  }
  out.resize(count);
  return out;
}

double phi(NodeId id, std::size_t l, std::size_t m) {
  if (l == 0) throw InputError("phi: row index starts at 1");
  if (m == 0) throw InputError("phi: m must be positive");
  return coeff_stream(id, l).back() / std::sqrt(static_cast<double>(m));
}

SensingMatrix::SensingMatrix(std::vector<NodeId> column_ids, RowMatrix entries)
    : column_ids_(std::move(column_ids)), entries_(std::move(entries)) {
  if (static_cast<std::size_t>(entries_.cols()) != column_ids_.size()) {
    throw InputError("sensing matrix: column ids do not match width");
  }
}

std::size_t SensingMatrix::column_of(NodeId id) const {
  const auto it = std::find(column_ids_.begin(), column_ids_.end(), id);
  if (it == column_ids_.end()) throw InputError("sensing matrix: no column for node " + std::to_string(id));
  return static_cast<std::size_t>(it - column_ids_.begin());
}

Eigen::Matrix<std::int64_t, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> SensingMatrix::quantized(
    unsigned scale_bits) const {
  Eigen::Matrix<std::int64_t, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> q(entries_.rows(),
                                                                                 entries_.cols());
  for (Eigen::Index r = 0; r < q.rows(); ++r) {
    for (Eigen::Index c = 0; c < q.cols(); ++c) q(r, c) = crypto::quantize_coeff(entries_(r, c), scale_bits);
  }
  return q;
}

SensingMatrix SensingMatrix::quantized_real(unsigned scale_bits) const {
  const auto q = quantized(scale_bits);
  const double inv = std::ldexp(1.0, -static_cast<int>(scale_bits));
  RowMatrix e = q.cast<double>() * inv;
  return SensingMatrix(column_ids_, std::move(e));
}

SensingMatrix assemble_sensing_matrix(std::span<const NodeId> ids, std::size_t m) {
  if (ids.empty()) throw InputError("assemble_sensing_matrix: no node ids");
  if (m == 0) throw InputError("assemble_sensing_matrix: m must be positive");
  std::unordered_set<NodeId> seen;
  for (NodeId id : ids) {
    if (!seen.insert(id).second) throw InputError("assemble_sensing_matrix: duplicate id " + std::to_string(id));
  }
  const double inv_sqrt_m = 1.0 / std::sqrt(static_cast<double>(m));
  RowMatrix e(static_cast<Eigen::Index>(m), static_cast<Eigen::Index>(ids.size()));
  for (std::size_t j = 0; j < ids.size(); ++j) {
    const auto z = coeff_stream(ids[j], m);
    for (std::size_t l = 0; l < m; ++l) {
      e(static_cast<Eigen::Index>(l), static_cast<Eigen::Index>(j)) = z[l] * inv_sqrt_m;
    }
  }
  return SensingMatrix(std::vector<NodeId>(ids.begin(), ids.end()), std::move(e));
}

const char* mode_name(EstimateMode mode) { return mode == EstimateMode::kExact ? "exact" : "estimated"; }

double binomial(std::size_t n, std::size_t k) {
  if (k > n) return 0.0;
  k = std::min(k, n - k);
  double r = 1.0;
  for (std::size_t i = 1; i <= k; ++i) r = r * static_cast<double>(n - k + i) / static_cast<double>(i);
  return std::round(r);
}

namespace {

Matrix principal(const Matrix& gram, const std::vector<Eigen::Index>& support) {
  const auto k = static_cast<Eigen::Index>(support.size());
  Matrix g(k, k);
  for (Eigen::Index i = 0; i < k; ++i) {
    for (Eigen::Index j = 0; j < k; ++j) g(i, j) = gram(support[i], support[j]);
  }
  return g;
}

Eigen::VectorXd eigenvalues(const Matrix& g) {
  if (g.rows() == 1) return Eigen::VectorXd::Constant(1, g(0, 0));
  Eigen::SelfAdjointEigenSolver<Matrix> es(g, Eigen::EigenvaluesOnly);
  return es.eigenvalues();  // ascending
}

/// Calls visit(support) for every k-subset of {0..n-1} in lexicographic order.
template <class Visit>
void for_each_support(std::size_t n, std::size_t k, Visit&& visit) {
  std::vector<Eigen::Index> s(k);
  std::iota(s.begin(), s.end(), Eigen::Index{0});
  const auto ni = static_cast<Eigen::Index>(n);
  const auto ki = static_cast<Eigen::Index>(k);
  for (;;) {
    visit(s);
    Eigen::Index i = ki - 1;
    while (i >= 0 && s[static_cast<std::size_t>(i)] == ni - ki + i) --i;
    if (i < 0) return;
    ++s[static_cast<std::size_t>(i)];
    for (Eigen::Index j = i + 1; j < ki; ++j) s[static_cast<std::size_t>(j)] = s[static_cast<std::size_t>(j - 1)] + 1;
  }
}

void check_guard(std::size_t n, std::size_t k) {
  if (binomial(n, k) > kEnumerationGuard) {
    throw InputError("exact enumeration of C(" + std::to_string(n) + "," + std::to_string(k) +
                     ") supports exceeds the 1e6 guard");
  }
}

}  // namespace

RipEstimate estimate_rip(const Matrix& a, std::size_t k, EstimateMode mode, std::size_t samples,
                         std::uint64_t seed) {
  const auto n = static_cast<std::size_t>(a.cols());
  if (k == 0 || k > n) throw InputError("estimate_rip: need 1 <= k <= columns");
  const Matrix gram = a.transpose() * a;
  RipEstimate out;
  out.mode = mode;
  if (mode == EstimateMode::kExact) {
    check_guard(n, k);
    for_each_support(n, k, [&](const std::vector<Eigen::Index>& s) {
      const auto ev = eigenvalues(principal(gram, s));
      out.delta = std::max({out.delta, 1.0 - ev(0), ev(ev.size() - 1) - 1.0});
      ++out.supports;
    });
    return out;
  }
  std::mt19937_64 rng(seed);
  std::vector<Eigen::Index> all(n);
  std::iota(all.begin(), all.end(), Eigen::Index{0});
  Eigen::VectorXd z(static_cast<Eigen::Index>(k));
  for (std::size_t s = 0; s < samples; ++s) {
    // Partial Fisher-Yates for a uniform k-subset.
    for (std::size_t i = 0; i < k; ++i) {
      const auto j = i + detail::uniform_index(rng, n - i);
      std::swap(all[i], all[j]);
    }
    const std::vector<Eigen::Index> support(all.begin(), all.begin() + static_cast<std::ptrdiff_t>(k));
    for (Eigen::Index i = 0; i < z.size(); ++i) z(i) = detail::gaussian(rng);
    z.normalize();
    const double energy = z.dot(principal(gram, support) * z);
    out.delta = std::max(out.delta, std::abs(energy - 1.0));
    ++out.supports;
  }
  return out;
}

double spectral_norm(const Matrix& x) {
  if (x.size() == 0) return 0.0;
  Eigen::JacobiSVD<Matrix> svd(x);
  return svd.singularValues()(0);
}

NormEstimate submatrix_norm(const Matrix& x, std::size_t k, EstimateMode mode) {
  const auto n = static_cast<std::size_t>(x.cols());
  if (k == 0 || k > n) throw InputError("submatrix_norm: need 1 <= k <= columns");
  NormEstimate out;
  out.mode = mode;
  out.upper = spectral_norm(x);
  const Matrix gram = x.transpose() * x;
  double best = 0.0;
  if (mode == EstimateMode::kExact) {
    if (k == n) {
      out.value = out.upper;
      return out;
    }
    check_guard(n, k);
    for_each_support(n, k, [&](const std::vector<Eigen::Index>& s) {
      const auto ev = eigenvalues(principal(gram, s));
      best = std::max(best, ev(ev.size() - 1));
    });
    out.value = std::sqrt(std::max(best, 0.0));
    return out;
  }
  std::vector<Eigen::Index> chosen;
  std::vector<bool> used(n, false);
  for (std::size_t step = 0; step < k; ++step) {
    double step_best = -1.0;
    Eigen::Index pick = -1;
    for (std::size_t j = 0; j < n; ++j) {
      if (used[j]) continue;
      chosen.push_back(static_cast<Eigen::Index>(j));
      const auto ev = eigenvalues(principal(gram, chosen));
      chosen.pop_back();
      if (ev(ev.size() - 1) > step_best) {
        step_best = ev(ev.size() - 1);
        pick = static_cast<Eigen::Index>(j);
      }
    }
    chosen.push_back(pick);
    used[static_cast<std::size_t>(pick)] = true;
    best = step_best;
  }
  out.value = std::min(std::sqrt(std::max(best, 0.0)), out.upper);
  return out;
}

}  // namespace cmr
