#pragma once

#include "enmf/core.hpp"

#include <string>
#include <vector>

namespace enmf {

/// Rank-r truncated SVD with balanced scaling: Ustar = U S^{1/2}, Vstar = V S^{1/2}.
struct SvdFactors {
  Matrix Ustar;                 // n x r
  Matrix Vstar;                 // m x r
  Vector singular_values;       // r entries, nonincreasing
  double residual = 0.0;        // ||X - Ustar Vstar^T||_F

  Index rank() const { return Ustar.cols(); }
  FactorPair factors() const { return {Ustar, Vstar}; }
};

struct SvdOptions {
  /// Convergence tolerance on singular values for the iterative path.
  double tolerance = 1e-10;
  /// Shapes with min(n, m) above this use block subspace iteration.
  Index dense_limit = 2000;
  int max_subspace_iters = 500;
};

/// Best rank-r approximation. Each singular pair is sign-normalized so the
/// largest-magnitude entry of the left vector is positive.
SvdFactors truncated_svd(const Matrix& X, Index r, const SvdOptions& options = {});

struct RandomizedSvdOptions {
  Index oversampling = 10;
  int power_iters = 2;
  RngSeed seed{};
};

/// Randomized range finder with power iterations and re-orthonormalization.
SvdFactors randomized_svd(const Matrix& X, Index r, const RandomizedSvdOptions& options);

/// Builds SvdFactors from an arbitrary factor pair with the same product
/// (QR of each factor followed by an r x r SVD). Used for completion outputs.
SvdFactors balance_factors(const FactorPair& F);

struct SoftImputeResult {
  FactorPair factors;
  std::vector<double> objective_history;  // masked objective after each sweep
  int iterations = 0;
  std::vector<std::string> warnings;
};

struct SoftImputeOptions {
  int max_iter = 200;
  double tol = 1e-9;  // stop when relative improvement falls below this
};

/// Alternating least squares on observed entries (no shrinkage). Rows or
/// columns without any observation keep their initial value.
SoftImputeResult soft_impute_als(const Matrix& X, const ObservationMask& M, Index r,
                                 const SoftImputeOptions& options = {});

}  // namespace enmf
