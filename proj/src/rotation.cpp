#include "enmf/rotation.hpp"

#include <Eigen/Eigenvalues>
#include <Eigen/SVD>

#include <cmath>
#include <complex>
#include <limits>

namespace enmf {

namespace {

using ColMatrix = Eigen::MatrixXd;

constexpr double kLambdaFloor = 1e-12;

Matrix z_update_matrix(const Matrix& B, double rho) {
  return B.unaryExpr([rho](double b) { return z_update(b, rho); });
}

}  // namespace

Matrix balanced_rotation(Index r) {
  if (r < 1) throw ValidationError("balanced_rotation: r must be >= 1");
  if (r == 1) return Matrix::Identity(1, 1);
  Vector v = Vector::Constant(r, 1.0 / std::sqrt(static_cast<double>(r)));
  v(0) -= 1.0;
  return Matrix::Identity(r, r) - (2.0 / v.squaredNorm()) * v * v.transpose();
}

void validate(const RotationConfig& cfg) {
  if (!(cfg.rho > 0.0)) throw ValidationError("rotation rho must be positive");
  if (!(cfg.gamma > 0.0)) throw ValidationError("rotation gamma must be positive");
  if (!(cfg.t > 0.0)) throw ValidationError("rotation t must be positive");
  if (cfg.max_iters < 1) throw ValidationError("rotation max_iters must be >= 1");
  if (cfg.primal_tol < 0.0 || cfg.negativity_tol < 0.0) {
    throw ValidationError("rotation tolerances must be nonnegative");
  }
}

FactorPair RsrResult::apply(const Matrix& Ustar, const Matrix& Vstar) const {
  const Matrix left = R1 * Lambda.asDiagonal();
  const Matrix right = R1 * Lambda.cwiseInverse().asDiagonal();
  return {Ustar * left * R2, Vstar * right * R2};
}

double z_update(double b, double rho) {
  if (b > 0.0) return b;
  if (b >= -1.0 / rho) return 0.0;
  return b + 1.0 / rho;
}

ProcrustesSolution solve_procrustes(const Matrix& W, const Matrix& B) {
  if (W.rows() != B.rows() || W.cols() != B.cols()) {
    throw DimensionError("procrustes: W and B shapes differ");
  }
  const ColMatrix cross = W.transpose() * B;
  require_finite(Matrix(cross), "procrustes cross product");
  Eigen::JacobiSVD<ColMatrix> svd(cross, Eigen::ComputeFullU | Eigen::ComputeFullV);
  ProcrustesSolution out;
  out.R = svd.matrixU() * svd.matrixV().transpose();
  const Vector& s = svd.singularValues();
  if (s.size() > 0) {
    const double cutoff = std::max(s(0), 1e-300) * 1e-12 * static_cast<double>(s.size());
    out.rank_deficient = s(s.size() - 1) <= cutoff;
  }
  return out;
}

Matrix procrustes(const Matrix& W, const Matrix& B) { return solve_procrustes(W, B).R; }

Matrix nearest_orthogonal(const Matrix& R) {
  const ColMatrix A = R;
  Eigen::JacobiSVD<ColMatrix> svd(A, Eigen::ComputeFullU | Eigen::ComputeFullV);
  return svd.matrixU() * svd.matrixV().transpose();
}

double orthogonality_residual(const Matrix& R) {
  const Matrix G = R.transpose() * R - Matrix::Identity(R.cols(), R.cols());
  return G.squaredNorm();
}

RotationResult admm_rotate(const FactorPair& F, const RotationConfig& cfg) {
  F.validate();
  validate(cfg);
  const Matrix W = stack(F.U, F.V);
  require_finite(W, "rotation input");
  const Index r = W.cols();
  const double w_norm = std::max(frobenius_norm(W), std::numeric_limits<double>::min());

  RotationResult result;
  result.initial_negativity = negativity(W);
  Matrix best_R = Matrix::Identity(r, r);
  double best_neg = result.initial_negativity;
  result.negativity_history.push_back(best_neg);

  Matrix R = cfg.initial_rotation == InitialRotation::balanced ? balanced_rotation(r)
                                                               : Matrix::Identity(r, r);
  Matrix Y = Matrix::Zero(W.rows(), r);
  Matrix WR = W * R;

  if (best_neg > cfg.negativity_tol) {
    for (int it = 1; it <= cfg.max_iters; ++it) {
      const Matrix Z = z_update_matrix(WR - Y / cfg.rho, cfg.rho);
      const ProcrustesSolution step = solve_procrustes(W, Z + Y / cfg.rho);
      if (step.rank_deficient && result.diagnostics.empty()) {
        result.diagnostics.push_back("rank-deficient Procrustes cross product at iteration " +
                                     std::to_string(it));
      }
      R = step.R;
      WR = W * R;
      const Matrix gap = Z - WR;
      Y += cfg.rho * gap;
      if (!Y.allFinite() || !WR.allFinite()) {
        throw NumericalError("admm_rotate: non-finite iterate at iteration " + std::to_string(it));
      }
      result.iterations = it;
      result.primal_residual = frobenius_norm(gap);
      const double neg = negativity(WR);
      result.negativity_history.push_back(neg);
      if (neg < best_neg) {
        best_neg = neg;
        best_R = R;
      }
      if (neg <= cfg.negativity_tol) break;
      if (result.primal_residual <= cfg.primal_tol * w_norm) break;
    }
  }

  result.R = nearest_orthogonal(best_R);
  result.orthogonality_residual = orthogonality_residual(result.R);
  result.final_negativity = negativity(W * result.R);
  // Re-projection can move entries by rounding; never report worse than R = I.
  if (result.final_negativity > result.initial_negativity) {
    result.R = Matrix::Identity(r, r);
    result.orthogonality_residual = 0.0;
    result.final_negativity = result.initial_negativity;
  }
  return result;
}

RotationResult admm_rotate(const SvdFactors& svd, const RotationConfig& cfg) {
  return admm_rotate(svd.factors(), cfg);
}

double lambda_objective(double lambda, const Vector& w21, const Vector& w11, const Vector& n1,
                        const Vector& w22, const Vector& w12, const Vector& n2) {
  const Vector a = w21 + n1;
  const Vector c = w22 + n2;
  return 0.5 * (a - lambda * w11).squaredNorm() + 0.5 * (c - w12 / lambda).squaredNorm();
}

LambdaUpdate lambda_update(const Vector& w21, const Vector& w11, const Vector& n1,
                           const Vector& w22, const Vector& w12, const Vector& n2,
                           double previous) {
  const Vector a = w21 + n1;
  const Vector c = w22 + n2;
  // Polynomial coefficients, highest degree first: l^4, l^3, l^2, l, 1.
  std::vector<double> coeff = {w11.squaredNorm(), -a.dot(w11), 0.0, c.dot(w12),
                               -w12.squaredNorm()};
  const double scale = std::max({std::abs(coeff[0]), std::abs(coeff[1]), std::abs(coeff[3]),
                                 std::abs(coeff[4])});
  if (scale == 0.0) return {previous, true};
  // Drop negligible leading and trailing coefficients (trailing zeros are roots at 0).
  const double eps = 1e-14 * scale;
  while (!coeff.empty() && std::abs(coeff.front()) <= eps) coeff.erase(coeff.begin());
  while (!coeff.empty() && std::abs(coeff.back()) <= eps) coeff.pop_back();
  const int degree = static_cast<int>(coeff.size()) - 1;

  auto objective = [&](double l) { return lambda_objective(l, w21, w11, n1, w22, w12, n2); };
  auto poly = [&](double l) {
    double v = 0.0;
    for (double k : coeff) v = v * l + k;
    return v;
  };
  auto dpoly = [&](double l) {
    double v = 0.0;
    for (int k = 0; k < degree; ++k) v = v * l + coeff[k] * (degree - k);
    return v;
  };

  std::vector<double> candidates;
  bool solved = true;
  if (degree >= 1) {
    ColMatrix companion = ColMatrix::Zero(degree, degree);
    for (int k = 0; k < degree; ++k) companion(0, k) = -coeff[k + 1] / coeff[0];
    for (int k = 1; k < degree; ++k) companion(k, k - 1) = 1.0;
    Eigen::EigenSolver<ColMatrix> es(companion, false);
    if (es.info() != Eigen::Success) {
      solved = false;
    } else {
      for (Index k = 0; k < es.eigenvalues().size(); ++k) {
        const std::complex<double> root = es.eigenvalues()(k);
        if (root.real() <= 0.0) continue;
        if (std::abs(root.imag()) > 1e-6 * std::max(1.0, std::abs(root.real()))) continue;
        double l = root.real();
        for (int polish = 0; polish < 4; ++polish) {
          const double d = dpoly(l);
          if (d == 0.0) break;
          const double next = l - poly(l) / d;
          if (!(next > 0.0) || !std::isfinite(next)) break;
          l = next;
        }
        candidates.push_back(l);
      }
    }
  }

  if (!solved) {
    // Log-spaced grid then golden-section refinement.
    double best = previous;
    double best_val = objective(previous);
    for (int k = 0; k <= 1200; ++k) {
      const double l = std::pow(10.0, -6.0 + 12.0 * k / 1200.0);
      const double v = objective(l);
      if (v < best_val) {
        best_val = v;
        best = l;
      }
    }
    double lo = best / 1.03;
    double hi = best * 1.03;
    const double g = 0.5 * (std::sqrt(5.0) - 1.0);
    for (int k = 0; k < 200; ++k) {
      const double x1 = hi - g * (hi - lo);
      const double x2 = lo + g * (hi - lo);
      if (objective(x1) < objective(x2)) {
        hi = x2;
      } else {
        lo = x1;
      }
    }
    return {0.5 * (lo + hi), false};
  }

  if (candidates.empty()) return {previous, true};
  double best = candidates.front();
  double best_val = objective(best);
  for (double l : candidates) {
    const double v = objective(l);
    if (v < best_val) {
      best_val = v;
      best = l;
    }
  }
  return {best, false};
}

RsrResult rsr_admm(const SvdFactors& svd, const RotationConfig& cfg) {
  validate(cfg);
  const Matrix& Us = svd.Ustar;
  const Matrix& Vs = svd.Vstar;
  if (Us.cols() != Vs.cols() || Us.cols() < 1) throw DimensionError("rsr_admm: rank mismatch");
  const Index n = Us.rows();
  const Index m = Vs.rows();
  const Index r = Us.cols();
  const Matrix Wsvd = stack(Us, Vs);
  require_finite(Wsvd, "rsr_admm input");

  const double rho = cfg.rho;
  const double gamma = cfg.gamma;
  const double t = cfg.t;

  Matrix R1 = Matrix::Identity(r, r);
  Matrix R2 = Matrix::Identity(r, r);
  Vector lambda = Vector::Ones(r);
  Matrix W1 = Wsvd;  // [W11; W12]
  Matrix W2 = Wsvd;  // [W21; W22]
  Matrix W3 = Wsvd;
  Matrix Mdual = Matrix::Zero(n + m, r);
  Matrix Ndual = Matrix::Zero(n + m, r);
  Matrix Pdual = Matrix::Zero(n + m, r);

  auto total_negativity = [&](const Matrix& a, const Vector& l, const Matrix& b) {
    const Matrix left = a * l.asDiagonal() * b;
    const Matrix right = a * l.cwiseInverse().asDiagonal() * b;
    return negativity(Us * left) + negativity(Vs * right);
  };

  RsrResult result;
  result.initial_negativity = total_negativity(R1, lambda, R2);
  double best_neg = result.initial_negativity;
  Matrix best_R1 = R1;
  Matrix best_R2 = R2;
  Vector best_lambda = lambda;
  bool clamped = false;
  int warnings = 0;

  if (best_neg > cfg.negativity_tol) {
    for (int it = 1; it <= cfg.max_iters; ++it) {
      // (W1, W3) block.
      W3 = z_update_matrix(W2 * R2 - Pdual, t);
      const Matrix target1 = Wsvd * R1 - Mdual;
      const Matrix target2 = W2 + Ndual;
      for (Index j = 0; j < r; ++j) {
        const double l = lambda(j);
        W1.col(j).head(n) = (rho * target1.col(j).head(n) + gamma * l * target2.col(j).head(n)) /
                            (rho + gamma * l * l);
        W1.col(j).tail(m) =
            (rho * target1.col(j).tail(m) + (gamma / l) * target2.col(j).tail(m)) /
            (rho + gamma / (l * l));
      }

      // (W2, R1) block.
      R1 = procrustes(Wsvd, W1 + Mdual);
      {
        Matrix scaled = W1;
        for (Index j = 0; j < r; ++j) {
          scaled.col(j).head(n) *= lambda(j);
          scaled.col(j).tail(m) /= lambda(j);
        }
        W2 = (gamma * (scaled - Ndual) + t * (W3 + Pdual) * R2.transpose()) / (gamma + t);
      }

      // (R2, Lambda) block.
      R2 = procrustes(W2, W3 + Pdual);
      for (Index j = 0; j < r; ++j) {
        const LambdaUpdate up =
            lambda_update(W2.col(j).head(n), W1.col(j).head(n), Ndual.col(j).head(n),
                          W2.col(j).tail(m), W1.col(j).tail(m), Ndual.col(j).tail(m), lambda(j));
        if (up.warning) ++warnings;
        double l = up.lambda;
        if (l < kLambdaFloor) {
          l = kLambdaFloor;
          clamped = true;
        }
        lambda(j) = l;
      }

      // Dual updates.
      Mdual += W1 - Wsvd * R1;
      {
        Matrix scaled = W1;
        for (Index j = 0; j < r; ++j) {
          scaled.col(j).head(n) *= lambda(j);
          scaled.col(j).tail(m) /= lambda(j);
        }
        Ndual += W2 - scaled;
      }
      Pdual += W3 - W2 * R2;
      if (!Mdual.allFinite() || !Ndual.allFinite() || !Pdual.allFinite()) {
        throw NumericalError("rsr_admm: non-finite iterate at iteration " + std::to_string(it));
      }

      result.iterations = it;
      const double neg = total_negativity(R1, lambda, R2);
      if (neg < best_neg) {
        best_neg = neg;
        best_R1 = R1;
        best_R2 = R2;
        best_lambda = lambda;
      }
      if (neg <= cfg.negativity_tol) break;
    }
  }

  result.R1 = nearest_orthogonal(best_R1);
  result.R2 = nearest_orthogonal(best_R2);
  result.Lambda = best_lambda;
  result.final_negativity = total_negativity(result.R1, result.Lambda, result.R2);
  if (result.final_negativity > result.initial_negativity) {
    result.R1 = Matrix::Identity(r, r);
    result.R2 = Matrix::Identity(r, r);
    result.Lambda = Vector::Ones(r);
    result.final_negativity = result.initial_negativity;
  }
  if (clamped) result.diagnostics.push_back("Lambda entry clamped at 1e-12");
  if (warnings > 0) {
    result.diagnostics.push_back(std::to_string(warnings) +
                                 " Lambda updates without a positive root kept previous values");
  }
  return result;
}

}  // namespace enmf
