#include "enmf/datasets.hpp"
#include "enmf/lowrank.hpp"
#include "enmf/rotation.hpp"

#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>

using namespace enmf;

namespace {

Matrix random_orthogonal(Index r, Rng& rng) {
  Eigen::HouseholderQR<Matrix> qr(rng.normal_matrix(r, r));
  return qr.householderQ();
}

double z_objective(double z, double b, double rho) {
  return std::max(0.0, -z) + 0.5 * rho * (z - b) * (z - b);
}

// Grid minimizer of the scalar z objective on [b - 1, b + 1/rho + 1], refined.
double z_grid(double b, double rho) {
  double lo = b - 1.0, hi = b + 1.0 / rho + 1.0;
  double best = lo;
  for (int pass = 0; pass < 3; ++pass) {
    const int steps = 20000;
    const double h = (hi - lo) / steps;
    double best_val = z_objective(lo, b, rho);
    best = lo;
    for (int k = 1; k <= steps; ++k) {
      const double z = lo + k * h;
      const double v = z_objective(z, b, rho);
      if (v < best_val) {
        best_val = v;
        best = z;
      }
    }
    lo = best - 2 * h;
    hi = best + 2 * h;
  }
  return best;
}

}  // namespace

TEST(ZUpdate, ThreeBranches) {
  EXPECT_DOUBLE_EQ(z_update(0.5, 1.0), 0.5);
  EXPECT_DOUBLE_EQ(z_update(-0.5, 1.0), 0.0);
  EXPECT_DOUBLE_EQ(z_update(-2.0, 1.0), -1.0);
  EXPECT_DOUBLE_EQ(z_update(-1.0, 1.0), 0.0);
  EXPECT_DOUBLE_EQ(z_update(-3.0, 0.5), -1.0);
}

TEST(ZUpdate, MatchesGridMinimization) {
  Rng rng(RngSeed{1});
  for (int k = 0; k < 100; ++k) {
    const double b = 6.0 * rng.uniform() - 4.0;
    const double rho = 0.2 + 3.0 * rng.uniform();
    EXPECT_NEAR(z_update(b, rho), z_grid(b, rho), 1e-6) << "b=" << b << " rho=" << rho;
  }
}

TEST(Procrustes, IdentityAndPlantedRotation) {
  Rng rng(RngSeed{2});
  const Matrix W = rng.normal_matrix(30, 4);
  EXPECT_LE((W * procrustes(W, W) - W).norm(), 1e-10);
  const Matrix Q = random_orthogonal(4, rng);
  EXPECT_LE((procrustes(W, W * Q) - Q).norm(), 1e-8);
}

TEST(Procrustes, NoWorseThanAngleSweep) {
  for (std::uint64_t s = 0; s < 10; ++s) {
    Rng rng(RngSeed{10 + s});
    const Matrix W = rng.normal_matrix(12, 2);
    const Matrix B = rng.normal_matrix(12, 2);
    const double got = (B - W * procrustes(W, B)).norm();
    double best = std::numeric_limits<double>::infinity();
    for (int a = 0; a < 3600; ++a) {
      const double t = 2.0 * M_PI * a / 3600.0;
      const double c = std::cos(t), si = std::sin(t);
      Matrix rot(2, 2), ref(2, 2);
      rot << c, -si, si, c;
      ref << c, si, si, -c;
      best = std::min({best, (B - W * rot).norm(), (B - W * ref).norm()});
    }
    EXPECT_LE(got, best + 1e-12);
  }
}

TEST(Procrustes, AlwaysOrthogonalEvenWhenRankDeficient) {
  Rng rng(RngSeed{3});
  Matrix W = rng.normal_matrix(10, 3);
  W.col(2).setZero();
  const ProcrustesSolution s = solve_procrustes(W, rng.normal_matrix(10, 3));
  EXPECT_TRUE(s.rank_deficient);
  EXPECT_LE(orthogonality_residual(s.R), 1e-20);
  const Matrix ill = rng.normal_matrix(10, 3) * Vector(Eigen::Vector3d(1e8, 1, 1e-8)).asDiagonal();
  EXPECT_LE(std::sqrt(orthogonality_residual(procrustes(ill, rng.normal_matrix(10, 3)))), 1e-10);
}

TEST(BalancedRotation, ReflectsFirstAxisOntoOnes) {
  for (Index r : {1, 2, 5, 10}) {
    const Matrix H = balanced_rotation(r);
    EXPECT_LE(orthogonality_residual(H), 1e-24);
    const Vector e1 = Vector::Unit(r, 0);
    EXPECT_LE((H * e1 - Vector::Constant(r, 1.0 / std::sqrt(double(r)))).norm(), 1e-14);
  }
}

TEST(AdmmRotate, NonnegativeInputKeepsIdentity) {
  Rng rng(RngSeed{4});
  FactorPair F{rng.uniform_matrix(10, 3), rng.uniform_matrix(8, 3)};
  const RotationResult res = admm_rotate(F, {});
  EXPECT_TRUE(res.R == Matrix::Identity(3, 3));
  EXPECT_EQ(res.iterations, 0);
  EXPECT_EQ(res.final_negativity, 0.0);
}

TEST(AdmmRotate, RecoversPlantedRotation) {
  for (std::uint64_t s = 0; s < 5; ++s) {
    Rng rng(RngSeed{20 + s});
    const Matrix U = rng.uniform_matrix(40, 4), V = rng.uniform_matrix(30, 4);
    const Matrix Q = random_orthogonal(4, rng);
    FactorPair F{U * Q.transpose(), V * Q.transpose()};
    RotationConfig cfg;
    cfg.max_iters = 500;
    const RotationResult res = admm_rotate(F, cfg);
    const double w = stack(F.U, F.V).norm();
    EXPECT_LE(res.final_negativity, 1e-6 * w) << "seed " << s;
  }
}

TEST(AdmmRotate, OrthogonalLevelSetAndBestIterate) {
  for (std::uint64_t s = 0; s < 10; ++s) {
    Rng rng(RngSeed{40 + s});
    const Matrix X = rng.uniform_matrix(30, 25);
    const SvdFactors svd = truncated_svd(X, 5);
    const RotationResult res = admm_rotate(svd, {});
    EXPECT_LE(res.orthogonality_residual, 1e-8);
    const double a = frobenius_objective(X, svd.factors());
    const double b = frobenius_objective(X, {svd.Ustar * res.R, svd.Vstar * res.R});
    EXPECT_NEAR(a, b, 1e-9 * a);
    EXPECT_LE(res.final_negativity, res.initial_negativity);
    const double w = stack(svd.Ustar, svd.Vstar).norm();
    for (double h : res.negativity_history) EXPECT_LE(res.final_negativity, h + 1e-12 * w);
  }
}

TEST(AdmmRotate, DenseSyntheticConvergesQuickly) {
  for (std::uint64_t s = 0; s < 4; ++s) {
    const auto d = gen_dense_snr(300, 60, 300, s % 2 ? 40.0 : 60.0, RngSeed{s});
    const SvdFactors svd = truncated_svd(d.X, s < 2 ? 3 : 6);
    const RotationResult res = admm_rotate(svd, {});
    EXPECT_LE(res.iterations, 20);
    EXPECT_LE(res.orthogonality_residual, 1e-8);
  }
}

TEST(AdmmRotate, ConfigValidation) {
  RotationConfig c;
  c.rho = 0;
  EXPECT_THROW(validate(c), ValidationError);
  c = {};
  c.max_iters = 0;
  EXPECT_THROW(validate(c), ValidationError);
}

TEST(LambdaUpdate, BalancedColumnGivesOne) {
  Rng rng(RngSeed{5});
  const Vector w11 = rng.uniform_matrix(6, 1).col(0), w12 = rng.uniform_matrix(5, 1).col(0);
  const LambdaUpdate u =
      lambda_update(w11, w11, Vector::Zero(6), w12, w12, Vector::Zero(5), 3.0);
  EXPECT_FALSE(u.warning);
  EXPECT_NEAR(u.lambda, 1.0, 1e-10);
}

TEST(LambdaUpdate, MatchesGridOracle) {
  for (std::uint64_t s = 0; s < 10; ++s) {
    Rng rng(RngSeed{60 + s});
    const Index p = 1 + s % 4, q = 1 + (s + 1) % 3;
    const Vector w11 = rng.uniform_matrix(p, 1).col(0), w21 = 3.0 * rng.uniform_matrix(p, 1).col(0);
    const Vector w12 = rng.uniform_matrix(q, 1).col(0), w22 = rng.uniform_matrix(q, 1).col(0);
    const Vector n1 = 0.1 * rng.normal_matrix(p, 1).col(0), n2 = 0.1 * rng.normal_matrix(q, 1).col(0);
    auto f = [&](double l) { return lambda_objective(l, w21, w11, n1, w22, w12, n2); };
    // Coarse grid over (0, 100], then a 1e-6 refinement around the best cell.
    double best = 1e-3, best_val = f(best);
    for (double l = 1e-3; l <= 100.0; l += 1e-3) {
      if (f(l) < best_val) {
        best_val = f(l);
        best = l;
      }
    }
    const double lo = std::max(1e-9, best - 1e-3);
    for (double l = lo; l <= best + 1e-3; l += 1e-6) {
      if (f(l) < best_val) {
        best_val = f(l);
        best = l;
      }
    }
    const LambdaUpdate u = lambda_update(w21, w11, n1, w22, w12, n2);
    EXPECT_FALSE(u.warning);
    EXPECT_NEAR(u.lambda, best, 1e-6 * std::max(1.0, best)) << "seed " << s;
  }
}

TEST(LambdaUpdate, DegenerateKeepsPrevious) {
  const Vector z3 = Vector::Zero(3);
  const LambdaUpdate u = lambda_update(z3, z3, z3, z3, z3, z3, 2.5);
  EXPECT_TRUE(u.warning);
  EXPECT_EQ(u.lambda, 2.5);
}

TEST(RsrAdmm, NonnegativeInputIsIdentity) {
  Rng rng(RngSeed{6});
  SvdFactors s;
  s.Ustar = rng.uniform_matrix(8, 3);
  s.Vstar = rng.uniform_matrix(7, 3);
  s.singular_values = Vector::Ones(3);
  const RsrResult res = rsr_admm(s, {});
  EXPECT_TRUE(res.R1 == Matrix::Identity(3, 3));
  EXPECT_TRUE(res.R2 == Matrix::Identity(3, 3));
  EXPECT_TRUE(res.Lambda == Vector::Ones(3));
  EXPECT_EQ(res.final_negativity, 0.0);
}

TEST(RsrAdmm, ReconstructionInvariantAndStructure) {
  const ExactDataset d = gen_exact(30, 25, 4, 0.1, RngSeed{7});
  const SvdFactors svd = truncated_svd(d.X, 4);
  RotationConfig cfg;
  cfg.max_iters = 300;
  const RsrResult res = rsr_admm(svd, cfg);
  EXPECT_LE(orthogonality_residual(res.R1), 1e-8);
  EXPECT_LE(orthogonality_residual(res.R2), 1e-8);
  EXPECT_GT(res.Lambda.minCoeff(), 0.0);
  const FactorPair F = res.apply(svd.Ustar, svd.Vstar);
  const double a = frobenius_objective(d.X, svd.factors());
  const double b = frobenius_objective(d.X, F);
  EXPECT_NEAR(a, b, 1e-8 * std::max(a, 1e-12 * d.X.norm()) + 1e-12 * d.X.norm());
  EXPECT_LE(res.final_negativity, res.initial_negativity);
}
