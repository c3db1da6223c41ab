#include "enmf/lowrank.hpp"

#include <Eigen/QR>
#include <Eigen/SVD>

#include <cmath>

namespace enmf {

namespace {

using ColMatrix = Eigen::MatrixXd;

void check_rank(const Matrix& X, Index r) {
  const Index limit = std::min(X.rows(), X.cols());
  if (r < 1 || r > limit) {
    throw ValidationError("rank " + std::to_string(r) + " outside [1, " + std::to_string(limit) +
                          "]");
  }
}

// Sign-normalizes each singular pair and applies the balanced S^{1/2} scaling.
SvdFactors finalize(ColMatrix left, const Vector& sigma, ColMatrix right, const Matrix& X) {
  const Index r = sigma.size();
  for (Index k = 0; k < r; ++k) {
    Index arg = 0;
    left.col(k).cwiseAbs().maxCoeff(&arg);
    if (left(arg, k) < 0.0) {
      left.col(k) *= -1.0;
      right.col(k) *= -1.0;
    }
  }
  SvdFactors out;
  out.singular_values = sigma.cwiseMax(0.0);
  const Vector root = out.singular_values.cwiseSqrt();
  out.Ustar = left * root.asDiagonal();
  out.Vstar = right * root.asDiagonal();
  if (X.size() > 0) out.residual = frobenius_objective(X, out.factors());
  return out;
}

ColMatrix orthonormal_basis(const ColMatrix& Y) {
  Eigen::HouseholderQR<ColMatrix> qr(Y);
  return qr.householderQ() * ColMatrix::Identity(Y.rows(), Y.cols());
}

// Projects X onto the range Q and extracts the top-r SVD of Q^T X.
SvdFactors rayleigh_ritz(const Matrix& X, const ColMatrix& Q, Index r) {
  const ColMatrix B = Q.transpose() * X;
  Eigen::BDCSVD<ColMatrix> svd(B, Eigen::ComputeThinU | Eigen::ComputeThinV);
  const ColMatrix left = Q * svd.matrixU().leftCols(r);
  return finalize(left, svd.singularValues().head(r), svd.matrixV().leftCols(r), X);
}

SvdFactors subspace_iteration_svd(const Matrix& X, Index r, const SvdOptions& options) {
  const Index block = std::min<Index>(std::min(X.rows(), X.cols()), r + 10);
  Rng rng(RngSeed{0x5eed5eedULL});
  ColMatrix Q = orthonormal_basis(X * ColMatrix(rng.normal_matrix(X.cols(), block)));
  Vector previous = Vector::Zero(r);
  for (int it = 0; it < options.max_subspace_iters; ++it) {
    const ColMatrix Z = orthonormal_basis(X.transpose() * Q);
    Q = orthonormal_basis(X * Z);
    const ColMatrix B = Q.transpose() * X;
    Eigen::JacobiSVD<ColMatrix> small(B);
    const Vector sigma = small.singularValues().head(r);
    const double change = (sigma - previous).norm();
    previous = sigma;
    if (change <= options.tolerance * std::max(1.0, sigma.norm())) break;
  }
  return rayleigh_ritz(X, Q, r);
}

}  // namespace

SvdFactors truncated_svd(const Matrix& X, Index r, const SvdOptions& options) {
  check_rank(X, r);
  require_finite(X, "truncated_svd input");
  if (std::min(X.rows(), X.cols()) > options.dense_limit) {
    return subspace_iteration_svd(X, r, options);
  }
  const ColMatrix A = X;
  Eigen::BDCSVD<ColMatrix> svd(A, Eigen::ComputeThinU | Eigen::ComputeThinV);
  return finalize(svd.matrixU().leftCols(r), svd.singularValues().head(r),
                  svd.matrixV().leftCols(r), X);
}

SvdFactors randomized_svd(const Matrix& X, Index r, const RandomizedSvdOptions& options) {
  check_rank(X, r);
  require_finite(X, "randomized_svd input");
  const Index width = r + options.oversampling;
  if (options.oversampling < 0 || width > std::min(X.rows(), X.cols())) {
    throw ValidationError("rank + oversampling (" + std::to_string(width) +
                          ") exceeds min(n, m)");
  }
  Rng rng(options.seed);
  const ColMatrix omega = rng.normal_matrix(X.cols(), width);
  ColMatrix Q = orthonormal_basis(X * omega);
  for (int it = 0; it < options.power_iters; ++it) {
    const ColMatrix Z = orthonormal_basis(X.transpose() * Q);
    Q = orthonormal_basis(X * Z);
  }
  return rayleigh_ritz(X, Q, r);
}

SvdFactors balance_factors(const FactorPair& F) {
  F.validate();
  const Index r = F.rank();
  if (F.U.rows() < r || F.V.rows() < r) {
    throw ValidationError("balance_factors needs at least r rows in each factor");
  }
  const ColMatrix Qu = orthonormal_basis(F.U);
  const ColMatrix Qv = orthonormal_basis(F.V);
  const ColMatrix core = (Qu.transpose() * F.U) * (Qv.transpose() * F.V).transpose();
  Eigen::JacobiSVD<ColMatrix> svd(core, Eigen::ComputeFullU | Eigen::ComputeFullV);
  return finalize(Qu * svd.matrixU(), svd.singularValues(), Qv * svd.matrixV(), Matrix());
}

SoftImputeResult soft_impute_als(const Matrix& X, const ObservationMask& M, Index r,
                                 const SoftImputeOptions& options) {
  check_rank(X, r);
  if (M.rows() != X.rows() || M.cols() != X.cols()) {
    throw DimensionError("observation mask shape differs from data shape");
  }
  const Index n = X.rows();
  const Index m = X.cols();
  // Only observed entries are ever read from X.
  Matrix observed = Matrix::Zero(n, m);
  std::vector<std::vector<Index>> row_obs(n);
  std::vector<std::vector<Index>> col_obs(m);
  for (Index i = 0; i < n; ++i) {
    for (Index j = 0; j < m; ++j) {
      if (M.observed(i, j)) {
        observed(i, j) = X(i, j);
        row_obs[i].push_back(j);
        col_obs[j].push_back(i);
      }
    }
  }
  require_finite(observed, "observed entries");

  SoftImputeResult result;
  for (Index i = 0; i < n; ++i) {
    if (row_obs[i].empty()) {
      result.warnings.push_back("row " + std::to_string(i) + " has no observed entries");
    }
  }
  for (Index j = 0; j < m; ++j) {
    if (col_obs[j].empty()) {
      result.warnings.push_back("column " + std::to_string(j) + " has no observed entries");
    }
  }

  const SvdFactors init = truncated_svd(observed, r);
  Matrix U = init.Ustar;
  Matrix V = init.Vstar;

  // Least-squares update of each row of `target` against the fixed factor.
  auto solve_rows = [&](Matrix& target, const Matrix& fixed,
                        const std::vector<std::vector<Index>>& obs, bool by_row) {
    for (Index i = 0; i < target.rows(); ++i) {
      const auto& idx = obs[i];
      if (idx.empty()) continue;
      const Index k = static_cast<Index>(idx.size());
      ColMatrix A(k, r);
      Vector b(k);
      for (Index t = 0; t < k; ++t) {
        A.row(t) = fixed.row(idx[t]);
        b(t) = by_row ? observed(i, idx[t]) : observed(idx[t], i);
      }
      Eigen::CompleteOrthogonalDecomposition<ColMatrix> cod(A);
      target.row(i) = cod.solve(b).transpose();
    }
  };

  FactorPair current{U, V};
  double prev = masked_objective(observed, current, M);
  for (int it = 0; it < options.max_iter; ++it) {
    solve_rows(U, V, row_obs, true);
    solve_rows(V, U, col_obs, false);
    current = {U, V};
    require_finite(U, "soft_impute_als U");
    require_finite(V, "soft_impute_als V");
    const double obj = masked_objective(observed, current, M);
    result.objective_history.push_back(obj);
    result.iterations = it + 1;
    const bool stalled = prev - obj <= options.tol * prev;
    prev = obj;
    if (obj == 0.0 || stalled) break;
  }
  result.factors = std::move(current);
  return result;
}

}  // namespace enmf
