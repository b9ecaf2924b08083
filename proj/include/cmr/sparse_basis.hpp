#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "cmr/types.hpp"

namespace cmr {

/// Orthonormal multi-level Haar synthesis operator.
///
/// Signals whose length is not a power of two are padded by replicating the
/// last value up to `padded()`; the synthesis matrix is padded() x padded().
/// Coefficients are ordered coarsest first: [approx_L, detail_L, ..., detail_1].
class WaveletBasis {
 public:
  WaveletBasis(std::size_t length, std::size_t levels);

  std::size_t length() const { return length_; }
  std::size_t padded() const { return padded_; }
  std::size_t levels() const { return levels_; }
  const Matrix& matrix() const { return synthesis_; }

  /// Analysis coefficients of a length() or padded() signal.
  Vector analyze(const Vector& signal) const;
  /// Padded-length signal from coefficients.
  Vector synthesize(const Vector& coeffs) const;

 private:
  std::size_t length_;
  std::size_t padded_;
  std::size_t levels_;
  Matrix synthesis_;
};

std::size_t next_pow2(std::size_t n);
/// log2(padded length) capped at 7.
std::size_t default_levels(std::size_t length);

/// Throws InputError when levels > log2(padded length) or length == 0.
WaveletBasis haar_basis(std::size_t length, std::size_t levels);
inline WaveletBasis haar_basis(std::size_t length) { return haar_basis(length, default_levels(length)); }

/// Index-map permutation: (P v)[k] = v[map[k]].
class Permutation {
 public:
  Permutation() = default;
  explicit Permutation(std::vector<std::size_t> map);  // throws InputError unless bijective

  static Permutation identity(std::size_t n);

  std::size_t size() const { return map_.size(); }
  std::size_t operator[](std::size_t k) const { return map_[k]; }
  const std::vector<std::size_t>& map() const { return map_; }
  bool is_identity() const;

  friend bool operator==(const Permutation&, const Permutation&) = default;

 private:
  std::vector<std::size_t> map_;
};

/// Stable argsort: applying the result to d yields d ascending.
Permutation switching_permutation(std::span<const double> d);
Permutation switching_permutation(const Vector& d);

/// v'[k] = v[p[k]]. Throws InputError on a length mismatch.
Vector apply_perm(const Permutation& p, const Vector& v);
Permutation invert_perm(const Permutation& p);
/// apply_perm(compose(a, b), v) == apply_perm(a, apply_perm(b, v)).
Permutation compose(const Permutation& a, const Permutation& b);

/// H^-1 Psi restricted to the first length() rows: row h[k] of the result is
/// row k of the synthesis matrix. The result is length() x padded().
Matrix permuted_dictionary(const WaveletBasis& basis, const Permutation& h);

/// Signal d = H^-1 (Psi x), truncated to the unpadded length.
Vector synthesize_permuted(const WaveletBasis& basis, const Permutation& h, const Vector& coeffs);

/// Coefficients x with Psi x = pad(H d).
Vector analyze_permuted(const WaveletBasis& basis, const Permutation& h, const Vector& d);

}  // namespace cmr
