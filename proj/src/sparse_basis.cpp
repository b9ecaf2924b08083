#include "cmr/sparse_basis.hpp"

#include <algorithm>
#include <bit>
#include <numeric>

#include "cmr/error.hpp"
#include "cmr/kernels.hpp"

namespace cmr {

std::size_t next_pow2(std::size_t n) { return n <= 1 ? 1 : std::bit_ceil(n); }

std::size_t default_levels(std::size_t length) {
  const auto p = next_pow2(length);
  return std::min<std::size_t>(static_cast<std::size_t>(std::countr_zero(p)), 7);
}

WaveletBasis::WaveletBasis(std::size_t length, std::size_t levels)
    : length_(length), padded_(next_pow2(length)), levels_(levels) {
  if (length_ == 0) throw InputError("haar_basis: empty signal");
  if (levels_ > static_cast<std::size_t>(std::countr_zero(padded_))) {
    throw InputError("haar_basis: levels exceed log2 of the padded length");
  }
  const auto n = static_cast<Eigen::Index>(padded_);
  synthesis_.resize(n, n);
  Vector e = Vector::Zero(n);
  for (Eigen::Index c = 0; c < n; ++c) {
    e(c) = 1.0;
    synthesis_.col(c) = synthesize(e);
    e(c) = 0.0;
  }
}

Vector WaveletBasis::analyze(const Vector& signal) const {
  const auto n = static_cast<Eigen::Index>(padded_);
  Vector x(n);
  if (static_cast<std::size_t>(signal.size()) == padded_) {
    x = signal;
  } else if (static_cast<std::size_t>(signal.size()) == length_) {
    x.head(signal.size()) = signal;
    x.tail(n - signal.size()).setConstant(signal(signal.size() - 1));
  } else {
    throw InputError("wavelet analyze: signal length mismatch");
  }
  const auto& k = simd::active();
  Vector out(n);
  Vector approx(n);
  std::size_t len = padded_;
  // Details of level j land at [len/2, len) while the approximation shrinks.
  for (std::size_t level = 0; level < levels_; ++level) {
    const std::size_t half = len / 2;
    k.haar_forward(x.data(), approx.data(), out.data() + half, half);
    std::copy_n(approx.data(), half, x.data());
    len = half;
  }
  std::copy_n(x.data(), len, out.data());
  return out;
}

Vector WaveletBasis::synthesize(const Vector& coeffs) const {
  if (static_cast<std::size_t>(coeffs.size()) != padded_) throw InputError("wavelet synthesize: length mismatch");
  const auto& k = simd::active();
  std::size_t len = padded_ >> levels_;
  Vector x(coeffs.size());
  std::copy_n(coeffs.data(), len, x.data());
  Vector next(coeffs.size());
  for (std::size_t level = 0; level < levels_; ++level) {
    k.haar_inverse(x.data(), coeffs.data() + len, next.data(), len);
    len *= 2;
    std::copy_n(next.data(), len, x.data());
  }
  return x;
}

WaveletBasis haar_basis(std::size_t length, std::size_t levels) { return WaveletBasis(length, levels); }

Permutation::Permutation(std::vector<std::size_t> map) : map_(std::move(map)) {
  std::vector<bool> seen(map_.size(), false);
  for (std::size_t v : map_) {
    if (v >= map_.size() || seen[v]) throw InputError("permutation: index map is not bijective");
    seen[v] = true;
  }
}

Permutation Permutation::identity(std::size_t n) {
  std::vector<std::size_t> m(n);
  std::iota(m.begin(), m.end(), std::size_t{0});
  return Permutation(std::move(m));
}

bool Permutation::is_identity() const {
  for (std::size_t k = 0; k < map_.size(); ++k) {
    if (map_[k] != k) return false;
  }
  return true;
}

Permutation switching_permutation(std::span<const double> d) {
  std::vector<std::size_t> idx(d.size());
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  std::stable_sort(idx.begin(), idx.end(), [&d](std::size_t a, std::size_t b) { return d[a] < d[b]; });
  return Permutation(std::move(idx));
}

Permutation switching_permutation(const Vector& d) {
  return switching_permutation(std::span<const double>(d.data(), static_cast<std::size_t>(d.size())));
}

Vector apply_perm(const Permutation& p, const Vector& v) {
  if (p.size() != static_cast<std::size_t>(v.size())) throw InputError("apply_perm: length mismatch");
  Vector out(v.size());
  for (std::size_t k = 0; k < p.size(); ++k) out(static_cast<Eigen::Index>(k)) = v(static_cast<Eigen::Index>(p[k]));
  return out;
}

Permutation invert_perm(const Permutation& p) {
  std::vector<std::size_t> inv(p.size());
  for (std::size_t k = 0; k < p.size(); ++k) inv[p[k]] = k;
  return Permutation(std::move(inv));
}

Permutation compose(const Permutation& a, const Permutation& b) {
  if (a.size() != b.size()) throw InputError("compose: length mismatch");
  std::vector<std::size_t> m(a.size());
  for (std::size_t k = 0; k < a.size(); ++k) m[k] = b[a[k]];
  return Permutation(std::move(m));
}

Matrix permuted_dictionary(const WaveletBasis& basis, const Permutation& h) {
  if (h.size() != basis.length()) throw InputError("permuted_dictionary: permutation size mismatch");
  const auto n = static_cast<Eigen::Index>(basis.length());
  Matrix out(n, static_cast<Eigen::Index>(basis.padded()));
  for (std::size_t k = 0; k < h.size(); ++k) {
    out.row(static_cast<Eigen::Index>(h[k])) = basis.matrix().row(static_cast<Eigen::Index>(k));
  }
  return out;
}

Vector synthesize_permuted(const WaveletBasis& basis, const Permutation& h, const Vector& coeffs) {
  if (h.size() != basis.length()) throw InputError("synthesize_permuted: permutation size mismatch");
  const Vector sorted = basis.synthesize(coeffs);
  Vector d(static_cast<Eigen::Index>(basis.length()));
  for (std::size_t k = 0; k < h.size(); ++k) d(static_cast<Eigen::Index>(h[k])) = sorted(static_cast<Eigen::Index>(k));
  return d;
}

Vector analyze_permuted(const WaveletBasis& basis, const Permutation& h, const Vector& d) {
  return basis.analyze(apply_perm(h, d));
}

}  // namespace cmr
