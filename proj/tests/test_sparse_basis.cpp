#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include <gtest/gtest.h>

#include "cmr/error.hpp"
#include "cmr/sparse_basis.hpp"
#include "cmr/trace_store.hpp"
#include "oracles/haar_oracle.hpp"

namespace {

using cmr::Permutation;
using cmr::Vector;

Vector random_vector(Eigen::Index n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> g;
  Vector v(n);
  for (auto& x : v) x = g(rng);
  return v;
}

TEST(Haar, MatchesDefinitionOracle) {
  for (auto [n, levels] : {std::pair{2u, 1u}, {8u, 3u}, {8u, 1u}, {16u, 2u}, {64u, 6u}, {128u, 7u}, {256u, 7u}}) {
    const auto basis = cmr::haar_basis(n, levels);
    EXPECT_LE((basis.matrix() - oracle::haar_synthesis(n, levels)).cwiseAbs().maxCoeff(), 1e-14) << n << " " << levels;
  }
}

TEST(Haar, TwoPointBase) {
  const auto b = cmr::haar_basis(2, 1);
  const double r = 1.0 / std::sqrt(2.0);
  EXPECT_NEAR(b.matrix()(0, 0), r, 1e-15);
  EXPECT_NEAR(b.matrix()(1, 0), r, 1e-15);
  EXPECT_NEAR(b.matrix()(0, 1), r, 1e-15);
  EXPECT_NEAR(b.matrix()(1, 1), -r, 1e-15);
}

TEST(Haar, Orthonormal) {
  for (std::size_t n : {4u, 32u, 128u}) {
    const auto b = cmr::haar_basis(n);
    const cmr::Matrix g = b.matrix().transpose() * b.matrix();
    EXPECT_LE((g - cmr::Matrix::Identity(g.rows(), g.cols())).cwiseAbs().maxCoeff(), 1e-10);
    const Vector x = random_vector(static_cast<Eigen::Index>(n), n);
    EXPECT_NEAR(b.synthesize(x).norm(), x.norm(), 1e-10 * x.norm());
  }
}

TEST(Haar, ConstantSignalHasNoDetail) {
  const auto b = cmr::haar_basis(128, 7);
  const Vector c = b.analyze(Vector::Constant(128, 3.5));
  EXPECT_NEAR(c(0), 3.5 * std::sqrt(128.0), 1e-10);
  EXPECT_LE(c.tail(127).cwiseAbs().maxCoeff(), 1e-12);
  // Partial depth: one approximation per block.
  const auto b3 = cmr::haar_basis(64, 3);
  const Vector c3 = b3.analyze(Vector::Constant(64, -2.0));
  EXPECT_LE(c3.tail(56).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(Haar, CoarseCoefficientSynthesizesBlock) {
  const auto b = cmr::haar_basis(16, 2);
  Vector e = Vector::Zero(16);
  e(1) = 1.0;
  const Vector s = b.synthesize(e);
  for (Eigen::Index i = 0; i < 16; ++i) EXPECT_NEAR(s(i), (i >= 4 && i < 8) ? 0.5 : 0.0, 1e-15);
}

TEST(Haar, RoundTrip) {
  const auto b = cmr::haar_basis(128, 7);
  const Vector x = random_vector(128, 1);
  EXPECT_LE((b.synthesize(b.analyze(x)) - x).cwiseAbs().maxCoeff(), 1e-10);
}

TEST(Haar, PadsByReplicatingLastValue) {
  const auto b = cmr::haar_basis(100);
  EXPECT_EQ(b.padded(), 128u);
  EXPECT_EQ(b.levels(), 7u);
  const Vector x = random_vector(100, 2);
  const Vector s = b.synthesize(b.analyze(x));
  EXPECT_LE((s.head(100) - x).cwiseAbs().maxCoeff(), 1e-10);
  for (Eigen::Index i = 100; i < 128; ++i) EXPECT_NEAR(s(i), x(99), 1e-10);
}

TEST(Haar, DefaultLevelsAndErrors) {
  EXPECT_EQ(cmr::default_levels(128), 7u);
  EXPECT_EQ(cmr::default_levels(1024), 7u);
  EXPECT_EQ(cmr::default_levels(16), 4u);
  EXPECT_EQ(cmr::default_levels(10), 4u);
  EXPECT_THROW(cmr::haar_basis(8, 4), cmr::InputError);
  EXPECT_THROW(cmr::haar_basis(0, 0), cmr::InputError);
}

TEST(Haar, SortedSyntheticTraceIsCompressible) {
  cmr::SynthesisParams p;
  const auto trace = cmr::synthesize_trace(p);
  const auto b = cmr::haar_basis(128);
  for (std::size_t t : {0u, 25u, 49u}) {
    const Vector d = trace.round(t);
    Vector c = b.analyze(cmr::apply_perm(cmr::switching_permutation(d), d)).cwiseAbs2();
    std::sort(c.begin(), c.end());
    const double small = c.head(102).sum();
    EXPECT_LT(small / c.sum(), 0.05) << t;
  }
}

TEST(Permutation, SortsAscending) {
  const Vector d = (Vector(3) << 3, 1, 2).finished();
  const auto h = cmr::switching_permutation(d);
  EXPECT_EQ(h.map(), (std::vector<std::size_t>{1, 2, 0}));
  EXPECT_EQ(cmr::apply_perm(h, d), (Vector(3) << 1, 2, 3).finished());
}

TEST(Permutation, SortedInputGivesIdentity) {
  const Vector d = (Vector(4) << -1, 0, 0.5, 9).finished();
  EXPECT_TRUE(cmr::switching_permutation(d).is_identity());
}

TEST(Permutation, StableOnTies) {
  const Vector d = (Vector(3) << 5, 5, 1).finished();
  EXPECT_EQ(cmr::switching_permutation(d).map(), (std::vector<std::size_t>{2, 0, 1}));
}

TEST(Permutation, InvariantUnderPositiveAffineMaps) {
  const Vector d = random_vector(64, 3);
  const Vector e = (2.5 * d).array() + 7.0;
  EXPECT_EQ(cmr::switching_permutation(d), cmr::switching_permutation(e));
}

TEST(Permutation, InverseAndCompose) {
  std::mt19937_64 rng(4);
  for (int trial = 0; trial < 20; ++trial) {
    std::vector<std::size_t> m(50), n(50);
    std::iota(m.begin(), m.end(), std::size_t{0});
    std::iota(n.begin(), n.end(), std::size_t{0});
    std::shuffle(m.begin(), m.end(), rng);
    std::shuffle(n.begin(), n.end(), rng);
    const Permutation a(m), b(n);
    const Vector v = random_vector(50, static_cast<std::uint64_t>(trial));
    EXPECT_EQ(cmr::apply_perm(cmr::invert_perm(a), cmr::apply_perm(a, v)), v);
    EXPECT_EQ(cmr::invert_perm(cmr::invert_perm(a)), a);
    EXPECT_EQ(cmr::apply_perm(cmr::compose(a, b), v), cmr::apply_perm(a, cmr::apply_perm(b, v)));
  }
  const Vector v = random_vector(5, 9);
  EXPECT_EQ(cmr::apply_perm(Permutation::identity(5), v), v);
  EXPECT_THROW(cmr::apply_perm(Permutation::identity(4), v), cmr::InputError);
  EXPECT_THROW(Permutation(std::vector<std::size_t>{0, 0, 1}), cmr::InputError);
}

TEST(Permutation, PermutedDictionarySynthesizesUnsortedSignal) {
  const auto b = cmr::haar_basis(100);
  const Vector d = random_vector(100, 5);
  const auto h = cmr::switching_permutation(d);
  const Vector x = cmr::analyze_permuted(b, h, d);
  const cmr::Matrix dict = cmr::permuted_dictionary(b, h);
  EXPECT_LE((dict * x - d).cwiseAbs().maxCoeff(), 1e-10);
  EXPECT_LE((cmr::synthesize_permuted(b, h, x) - d).cwiseAbs().maxCoeff(), 1e-10);
}

}  // namespace
