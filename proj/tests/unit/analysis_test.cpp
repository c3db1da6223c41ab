#include "enmf/analysis.hpp"
#include "enmf/datasets.hpp"
#include "enmf/pipeline.hpp"

#include <gtest/gtest.h>

#include <cmath>

using namespace enmf;

namespace {

Matrix random_orthogonal(Index r, Rng& rng) {
  Eigen::HouseholderQR<Matrix> qr(rng.normal_matrix(r, r));
  return qr.householderQ();
}

// Nonnegative factors with well separated columns.
FactorPair separated_pair(Index n, Index m, Index r, Rng& rng) {
  FactorPair F{rng.uniform_matrix(n, r), rng.uniform_matrix(m, r)};
  for (Index k = 0; k < r; ++k) {
    for (Index i = 0; i < n; ++i) F.U(i, k) *= (i % r == k) ? 4.0 : 0.2;
    for (Index j = 0; j < m; ++j) F.V(j, k) *= (j % r == k) ? 4.0 : 0.2;
  }
  return F;
}

}  // namespace

TEST(Kkt, HandComputedTwoByTwo) {
  const Matrix X = Matrix::Identity(2, 2);
  FactorPair F{Matrix(2, 1), Matrix(2, 1)};
  F.U << 1, 0;
  F.V << 1, 1;
  const KktResiduals k = kkt_residuals(X, F);
  EXPECT_DOUBLE_EQ(k.delta_W, 1.0);
  EXPECT_DOUBLE_EQ(k.sigma_W, 2.0);
  EXPECT_DOUBLE_EQ(k.min_entry, 0.0);
  EXPECT_DOUBLE_EQ(k.min_grad_on_zero, -1.0);
  EXPECT_FALSE(k.satisfied(0.5));
}

TEST(Kkt, ExactFactorizationIsCertified) {
  Rng rng(RngSeed{1});
  const FactorPair F{rng.uniform_matrix(8, 3), rng.uniform_matrix(7, 3)};
  const KktResiduals k = kkt_residuals(F.product(), F);
  EXPECT_LE(k.sigma_W, 1e-12);
  EXPECT_TRUE(std::isinf(k.min_grad_on_zero));
  EXPECT_TRUE(k.satisfied(1e-10));
}

TEST(Kkt, MaskedIgnoresUnobserved) {
  Rng rng(RngSeed{2});
  const FactorPair F{rng.uniform_matrix(6, 2), rng.uniform_matrix(5, 2)};
  Matrix X = F.product();
  Matrix m = Matrix::Ones(6, 5);
  m(2, 3) = 0.0;
  X(2, 3) = 1e9;
  const KktResiduals k = kkt_residuals(X, F, ObservationMask::from_matrix(m));
  EXPECT_LE(k.sigma_W, 1e-12);
  EXPECT_GT(kkt_residuals(X, F).sigma_W, 1.0);
}

TEST(Kkt, RejectsInfeasibleAndMisshapen) {
  FactorPair F{Matrix::Ones(3, 1), Matrix::Ones(2, 1)};
  EXPECT_THROW(kkt_residuals(Matrix::Ones(3, 3), F), DimensionError);
  F.U(0, 0) = -1;
  EXPECT_THROW(kkt_residuals(Matrix::Ones(3, 2), F), ValidationError);
}

TEST(Permutation, PlantedPermutationAndScaling) {
  Rng rng(RngSeed{3});
  const FactorPair A = separated_pair(40, 30, 4, rng);
  const std::vector<Index> perm{2, 0, 3, 1};
  const Vector d = (Vector(4) << 2.0, 0.5, 3.0, 0.25).finished();
  FactorPair B{Matrix(40, 4), Matrix(30, 4)};
  for (Index k = 0; k < 4; ++k) {
    B.U.col(perm[k]) = A.U.col(k) * d(k);
    B.V.col(perm[k]) = A.V.col(k) / d(k);
  }
  const EquivalenceReport rep = permutation_equivalence(A, B);
  EXPECT_EQ(rep.matched_u_pct, 100.0);
  EXPECT_EQ(rep.matched_v_pct, 100.0);
  for (Index k = 0; k < 4; ++k) {
    EXPECT_EQ(rep.permutation[k], perm[k]);
    EXPECT_NEAR(rep.scalings_u[k], d(k), 1e-12);
    EXPECT_NEAR(rep.scalings_v[k], 1.0 / d(k), 1e-12);
  }
  EXPECT_LE(rep.reciprocal_scaling_gap, 1e-12);
  const EquivalenceReport cmp = compare(A.product(), A, B);
  EXPECT_EQ(cmp.verdict, Verdict::E);
  EXPECT_NEAR(cmp.error_gap, 0.0, 1e-10);
}

TEST(Permutation, OneReplacedColumnGivesPartialMatch) {
  Rng rng(RngSeed{4});
  const Index r = 4;
  const FactorPair A = separated_pair(40, 30, r, rng);
  FactorPair B = A;
  // Column 1 of B concentrates where no column of A does.
  B.U.col(1).setZero();
  B.V.col(1).setZero();
  for (Index i = 0; i < 40; i += 7) B.U(i, 1) = 1.0 + i;
  B.V.col(1) = rng.uniform_matrix(30, 1).col(0);
  const EquivalenceReport rep = permutation_equivalence(A, B);
  EXPECT_DOUBLE_EQ(rep.matched_u_pct, 100.0 * (r - 1) / r);
  EXPECT_EQ(rep.permutation[1], -1);
  EXPECT_TRUE(std::isnan(rep.scalings_u[1]));
}

TEST(Permutation, SymmetricInArguments) {
  for (std::uint64_t s = 0; s < 5; ++s) {
    Rng rng(RngSeed{10 + s});
    const FactorPair A = separated_pair(30, 25, 3, rng);
    FactorPair B{A.U + 0.05 * rng.uniform_matrix(30, 3), A.V + 0.05 * rng.uniform_matrix(25, 3)};
    if (s % 2) B = {rng.uniform_matrix(30, 3), rng.uniform_matrix(25, 3)};
    const EquivalenceReport ab = permutation_equivalence(A, B);
    const EquivalenceReport ba = permutation_equivalence(B, A);
    EXPECT_EQ(ab.matched_u_pct, ba.matched_u_pct) << s;
    EXPECT_EQ(ab.matched_v_pct, ba.matched_v_pct) << s;
  }
}

TEST(Permutation, ZeroColumnsExcluded) {
  Rng rng(RngSeed{5});
  FactorPair A = separated_pair(20, 15, 3, rng);
  A.U.col(2).setZero();
  const EquivalenceReport rep = permutation_equivalence(A, A);
  ASSERT_EQ(rep.excluded_zero_columns_a.size(), 1u);
  EXPECT_EQ(rep.excluded_zero_columns_a[0], 2);
  EXPECT_NEAR(rep.matched_u_pct, 200.0 / 3.0, 1e-12);
}

TEST(GeneralizedTransform, RecoversRandomInvertibleMap) {
  for (std::uint64_t s = 0; s < 5; ++s) {
    Rng rng(RngSeed{20 + s});
    const FactorPair A{rng.uniform_matrix(30, 4), rng.uniform_matrix(25, 4)};
    const Matrix G = rng.normal_matrix(4, 4) + 3.0 * Matrix::Identity(4, 4);
    const FactorPair B{A.U * G, A.V * G.inverse().transpose()};
    const GeneralizedTransform t = generalized_transform(A, B);
    EXPECT_LE(t.delta_u, 1e-8 * B.U.norm());
    EXPECT_LE(t.delta_v, 1e-8 * B.V.norm());
    EXPECT_FALSE(t.pseudo_inverse);
    EXPECT_LE((t.R1.transpose() * t.R1 - Matrix::Identity(4, 4)).norm(), 1e-10);
    EXPECT_LE((t.R2.transpose() * t.R2 - Matrix::Identity(4, 4)).norm(), 1e-10);
  }
}

TEST(GeneralizedTransform, IdenticalPairsGiveIdentity) {
  Rng rng(RngSeed{6});
  const FactorPair A{rng.uniform_matrix(20, 3), rng.uniform_matrix(15, 3)};
  const GeneralizedTransform t = generalized_transform(A, A);
  EXPECT_LE((t.R1 * t.Lambda.asDiagonal() * t.R2.transpose() - Matrix::Identity(3, 3)).norm(),
            1e-10);
  EXPECT_LE((t.Lambda - Vector::Ones(3)).cwiseAbs().maxCoeff(), 1e-10);
  EXPECT_LE(t.delta_u + t.delta_v, 1e-10);
}

TEST(GeneralizedTransform, OrthogonalMixingIsRecovered) {
  Rng rng(RngSeed{7});
  const FactorPair A{rng.uniform_matrix(25, 3), rng.uniform_matrix(20, 3)};
  const Matrix Q = random_orthogonal(3, rng);
  const FactorPair B{A.U * Q, A.V * Q};
  const GeneralizedTransform t = generalized_transform(A, B);
  EXPECT_LE((t.Lambda - Vector::Ones(3)).cwiseAbs().maxCoeff(), 1e-10);
  EXPECT_LE((t.R1 * t.R2.transpose() - Q).norm(), 1e-10);
  EXPECT_LE(frobenius_objective(A.product(), B), 1e-10 * A.product().norm());
}

TEST(GeneralizedTransform, RankDeficientUsesPseudoInverse) {
  Rng rng(RngSeed{8});
  FactorPair A{rng.uniform_matrix(10, 3), rng.uniform_matrix(9, 3)};
  A.U.col(2) = A.U.col(0);
  const GeneralizedTransform t = generalized_transform(A, A);
  EXPECT_TRUE(t.pseudo_inverse);
  EXPECT_TRUE(t.R1.allFinite() && t.Lambda.allFinite());
}

TEST(Classify, Quartets) {
  EquivalenceTolerances tol;
  tol.error_tol = 1e-3;
  tol.kkt_tol = 1e-6;
  EquivalenceReport full;
  full.matched_u_pct = full.matched_v_pct = 100.0;
  EquivalenceReport partial = full;
  partial.matched_v_pct = 75.0;
  KktResiduals certified;
  certified.min_grad_on_zero = std::numeric_limits<double>::infinity();
  KktResiduals uncertified = certified;
  uncertified.sigma_W = 1.0;

  EXPECT_EQ(classify_equivalence(full, certified, 5e-4, tol), Verdict::E);
  EXPECT_EQ(classify_equivalence(full, uncertified, -5e-4, tol), Verdict::E);
  EXPECT_EQ(classify_equivalence(full, certified, 2e-3, tol), Verdict::NE);
  EXPECT_EQ(classify_equivalence(partial, certified, 0.0, tol), Verdict::TE);
  EXPECT_EQ(classify_equivalence(partial, certified, 2e-3, tol), Verdict::NE);
  EXPECT_EQ(classify_equivalence(partial, uncertified, 2e-3, tol), Verdict::TE);
  EXPECT_EQ(classify_equivalence(full, certified, -2e-3, tol), Verdict::TE);
  for (Verdict v : {Verdict::E, Verdict::TE, Verdict::NE}) EXPECT_FALSE(verdict_name(v).empty());
}

TEST(Compare, DefaultsErrorToleranceFromData) {
  Rng rng(RngSeed{9});
  const Matrix X = rng.uniform_matrix(20, 15);
  const EnmfResult a = run_enmf(X, [] {
    PipelineConfig c;
    c.r = 3;
    return c;
  }());
  const EquivalenceReport self = compare(X, a.factors, a.factors);
  EXPECT_EQ(self.verdict, Verdict::E);
  ASSERT_TRUE(self.error_ratio.has_value());
  EXPECT_DOUBLE_EQ(*self.error_ratio, 1.0);
  const FactorPair worse{a.factors.U * 0.5, a.factors.V};
  EXPECT_GT(compare(X, a.factors, worse).error_gap, 0.0);
}

TEST(RoundHalfEven, Ties) {
  EXPECT_EQ(round_half_even(0.25, 1), 0.2);
  EXPECT_EQ(round_half_even(0.125, 2), 0.12);
  EXPECT_EQ(round_half_even(0.375, 2), 0.38);
  EXPECT_EQ(round_half_even(2.5, 0), 2.0);
  EXPECT_EQ(round_half_even(3.5, 0), 4.0);
  EXPECT_EQ(round_half_even(-2.5, 0), -2.0);
  EXPECT_EQ(round_half_even(0.96, 1), 1.0);
  EXPECT_EQ(round_half_even(0.94, 1), 0.9);
}
