#include "enmf/datasets.hpp"
#include "enmf/pipeline.hpp"

#include <gtest/gtest.h>

#include <cmath>

using namespace enmf;

namespace {

PipelineConfig config(Index r) {
  PipelineConfig c;
  c.r = r;
  return c;
}

Matrix random_mask(Index n, Index m, double p, std::uint64_t seed) {
  Rng rng(RngSeed{seed});
  Matrix M(n, m);
  for (Index k = 0; k < M.size(); ++k) M.data()[k] = rng.bernoulli(p) ? 1.0 : 0.0;
  return M;
}

}  // namespace

TEST(Enmf, ObjectiveOrderingAndCertificate) {
  for (std::uint64_t s = 0; s < 5; ++s) {
    Rng rng(RngSeed{s});
    const Matrix X = rng.uniform_matrix(40, 30);
    const EnmfResult res = run_enmf(X, config(4));
    EXPECT_LE(res.svd_residual, res.rotated_objective * (1 + 1e-9));
    EXPECT_NEAR(res.svd_residual, res.rotated_objective, 1e-8 * res.svd_residual);
    EXPECT_TRUE(res.ascent_holds);
    EXPECT_TRUE(res.descent_holds);
    EXPECT_LE(res.rotated_objective, res.feasible_objective * (1 + 1e-12));
    EXPECT_LE(res.final_objective, res.feasible_objective * (1 + 1e-12));
    EXPECT_GE(res.final_objective, res.svd_residual * (1 - 1e-12));
    EXPECT_TRUE(res.factors.feasible());
    EXPECT_EQ(res.descent_termination, Termination::kkt_converged);
    EXPECT_TRUE(res.kkt.satisfied(1e-6));
    EXPECT_NEAR(res.final_objective, frobenius_objective(X, res.factors),
                1e-12 * res.final_objective);
  }
}

TEST(Enmf, PhaseTimingsAddUp) {
  Rng rng(RngSeed{10});
  const EnmfResult res = run_enmf(rng.uniform_matrix(30, 25), config(3));
  const PhaseTimings& t = res.timings;
  EXPECT_GE(t.svd_s, 0.0);
  EXPECT_GE(t.rotation_s, 0.0);
  EXPECT_GE(t.feasibility_descent_s, 0.0);
  EXPECT_NEAR(t.total_s, t.svd_s + t.rotation_s + t.feasibility_descent_s, 1e-12);
  const auto& s = res.trace.samples();
  for (std::size_t k = 1; k < s.size(); ++k) {
    EXPECT_LE(s[k - 1].wall_clock_s, s[k].wall_clock_s);
    EXPECT_LT(s[k - 1].iteration, s[k].iteration);
  }
  EXPECT_EQ(s.front().objective, res.svd_residual);
  EXPECT_EQ(res.trace.back().objective, res.final_objective);
}

TEST(Enmf, NonnegativeRankOneIsOneShot) {
  Rng rng(RngSeed{11});
  const Matrix X = rng.uniform_matrix(10, 1) * rng.uniform_matrix(8, 1).transpose();
  const EnmfResult res = run_enmf(X, config(1));
  EXPECT_TRUE(res.one_shot);
  EXPECT_EQ(res.final_objective, res.rotated_objective);
  EXPECT_EQ(res.timings.feasibility_descent_s, 0.0);
  EXPECT_TRUE(res.factors.feasible());
}

TEST(Enmf, Deterministic) {
  Rng rng(RngSeed{12});
  const Matrix X = rng.uniform_matrix(25, 20);
  const EnmfResult a = run_enmf(X, config(3));
  const EnmfResult b = run_enmf(X, config(3));
  EXPECT_TRUE(a.factors.U == b.factors.U);
  EXPECT_TRUE(a.factors.V == b.factors.V);
  EXPECT_EQ(a.final_objective, b.final_objective);
}

TEST(Enmf, AllPostRotationStrategiesStayFeasible) {
  Rng rng(RngSeed{13});
  const Matrix X = rng.uniform_matrix(20, 18);
  for (PostRotation p : {PostRotation::feasibility_hals, PostRotation::projection_hals,
                         PostRotation::projection_gradmult, PostRotation::projection_gd,
                         PostRotation::feasibility_gd}) {
    PipelineConfig c = config(3);
    c.post_rotation = p;
    c.descent.max_iters = 300;
    const EnmfResult res = run_enmf(X, c);
    EXPECT_TRUE(res.factors.feasible()) << post_rotation_name(p);
    EXPECT_TRUE(res.descent_holds) << post_rotation_name(p);
    EXPECT_EQ(parse_post_rotation(post_rotation_name(p)), p);
  }
  EXPECT_THROW(parse_post_rotation("clip"), ValidationError);
}

TEST(Enmf, RandomizedSvdPath) {
  const auto d = gen_dense_snr(120, 10, 100, 60.0, RngSeed{14});
  PipelineConfig c = config(5);
  c.svd = SvdMethod::randomized;
  const EnmfResult res = run_enmf(d.X, c);
  const EnmfResult exact = run_enmf(d.X, config(5));
  EXPECT_LE(res.svd_residual, 1.01 * exact.svd_residual);
  EXPECT_TRUE(res.factors.feasible());
  EXPECT_TRUE(res.kkt.satisfied(1e-6));
}

TEST(Enmf, NonnegativeButNonStationaryRotationStillDescends) {
  const auto d = gen_dense_snr(200, 20, 150, 30.0, RngSeed{1000});
  PipelineConfig c = config(10);
  c.svd = SvdMethod::randomized;
  const EnmfResult res = run_enmf(d.X, c);
  EXPECT_FALSE(res.one_shot);
  EXPECT_TRUE(res.kkt.satisfied(1e-6));
  EXPECT_LE(res.final_objective, res.rotated_objective);
}

TEST(Enmf, InputValidation) {
  Matrix X = Matrix::Ones(5, 4);
  EXPECT_THROW(run_enmf(X, config(0)), ValidationError);
  EXPECT_THROW(run_enmf(X, config(5)), ValidationError);
  X(1, 1) = -1.0;
  EXPECT_THROW(run_enmf(X, config(2)), ValidationError);
  X(1, 1) = std::nan("");
  EXPECT_THROW(run_enmf(X, config(2)), NumericalError);
  PipelineConfig c = config(2);
  c.descent.kkt_tol = -1;
  EXPECT_THROW(run_enmf(Matrix::Ones(5, 4), c), ValidationError);
}

TEST(Enmc, FullMaskStartsFromTruncatedSvd) {
  Rng rng(RngSeed{15});
  const Matrix X = rng.uniform_matrix(30, 20);
  const EnmcResult c = run_enmc(X, ObservationMask::all_ones(30, 20), config(3));
  const EnmfResult f = run_enmf(X, config(3));
  EXPECT_NEAR(c.rotated_objective, f.svd_residual, 1e-6 * f.svd_residual);
  EXPECT_TRUE(c.factors.feasible());
  EXPECT_LE(c.final_objective, c.feasible_objective * (1 + 1e-12));
  EXPECT_LE(c.rotated_objective, c.feasible_objective * (1 + 1e-12));
}

TEST(Enmc, UnobservedEntriesDoNotMatter) {
  const ExactDataset d = gen_exact(30, 25, 3, 0.0, RngSeed{16});
  const auto M = ObservationMask::from_matrix(random_mask(30, 25, 0.6, 17));
  Matrix Y = d.X;
  Rng rng(RngSeed{18});
  for (Index i = 0; i < Y.rows(); ++i) {
    for (Index j = 0; j < Y.cols(); ++j) {
      if (!M.observed(i, j)) Y(i, j) = rng.uniform() < 0.5 ? 1e6 : -3.0;
    }
  }
  PipelineConfig c = config(3);
  c.descent.max_iters = 200;
  const EnmcResult a = run_enmc(d.X, M, c);
  const EnmcResult b = run_enmc(Y, M, c);
  EXPECT_TRUE(a.factors.U == b.factors.U);
  EXPECT_TRUE(a.factors.V == b.factors.V);
  EXPECT_EQ(a.final_objective, b.final_objective);
}

TEST(Enmc, DescentMonotoneAndFeasible) {
  const ExactDataset d = gen_exact(40, 30, 3, 0.2, RngSeed{19});
  const auto M = ObservationMask::from_matrix(random_mask(40, 30, 0.7, 20));
  PipelineConfig c = config(3);
  c.descent.max_iters = 500;
  const EnmcResult res = run_enmc(d.X, M, c);
  EXPECT_TRUE(res.factors.feasible());
  const auto& s = res.trace.samples();
  for (std::size_t k = 2; k < s.size(); ++k) {
    EXPECT_LE(s[k].objective, s[k - 1].objective * (1 + 1e-10)) << k;
  }
  EXPECT_NEAR(res.final_objective, masked_objective(d.X, res.factors, M),
              1e-12 * std::max(res.final_objective, 1e-300));
}

TEST(Enmc, ShapeAndEmptyMaskErrors) {
  const Matrix X = Matrix::Ones(6, 5);
  EXPECT_THROW(run_enmc(X, ObservationMask::all_ones(5, 5), config(2)), DimensionError);
  EXPECT_THROW(run_enmc(X, ObservationMask::from_matrix(Matrix::Zero(6, 5)), config(2)),
               ValidationError);
}
