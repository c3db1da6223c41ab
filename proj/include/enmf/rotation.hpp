#pragma once

// ADMM rotations that move the unconstrained optimum (U*, V*) along its
// orthogonal level set toward the nonnegative orthant.

#include "enmf/core.hpp"
#include "enmf/lowrank.hpp"

#include <string>
#include <vector>

namespace enmf {

/// Starting point of the single-rotation ADMM. `balanced` is the Householder
/// reflection sending e1 to the normalized all-ones vector, which spreads the
/// dominant (sign-definite) singular direction over every column.
enum class InitialRotation { identity, balanced };

struct RotationConfig {
  double rho = 1.0;  // ADMM penalty
  InitialRotation initial_rotation = InitialRotation::balanced;
  int max_iters = 200;
  double primal_tol = 1e-9;     // on ||Z - W R||_F, relative to ||W||_F
  double negativity_tol = 0.0;  // stop once negativity(W R) <= this
  // Generalized rotation-scale-rotation only.
  double gamma = 1.0;
  double t = 1.0;
};

/// Validates rho > 0, gamma > 0, t > 0 and max_iters >= 1.
void validate(const RotationConfig& cfg);

struct RotationResult {
  Matrix R;                           // r x r orthogonal
  int iterations = 0;
  double orthogonality_residual = 0;  // ||R^T R - I||_F^2
  double initial_negativity = 0;      // negativity(W)
  double final_negativity = 0;        // negativity(W R)
  double primal_residual = 0;         // last ||Z - W R||_F
  std::vector<double> negativity_history;  // negativity(W R) per iteration
  std::vector<std::string> diagnostics;
};

struct RsrResult {
  Matrix R1;       // r x r orthogonal
  Vector Lambda;   // positive diagonal
  Matrix R2;       // r x r orthogonal
  int iterations = 0;
  double initial_negativity = 0;
  double final_negativity = 0;
  std::vector<std::string> diagnostics;

  /// U* R1 diag(Lambda) R2 and V* R1 diag(Lambda)^{-1} R2.
  FactorPair apply(const Matrix& Ustar, const Matrix& Vstar) const;
};

/// Minimizer of max(0, -z) + (rho/2)(z - b)^2.
double z_update(double b, double rho);

struct ProcrustesSolution {
  Matrix R;
  bool rank_deficient = false;
};

/// Orthogonal R minimizing ||B - W R||_F via the SVD of W^T B.
ProcrustesSolution solve_procrustes(const Matrix& W, const Matrix& B);
Matrix procrustes(const Matrix& W, const Matrix& B);

/// Householder reflection H with H e1 = 1/sqrt(r); identity for r = 1.
Matrix balanced_rotation(Index r);

/// Nearest orthogonal matrix (orthogonal polar factor).
Matrix nearest_orthogonal(const Matrix& R);
double orthogonality_residual(const Matrix& R);

/// Single-rotation ADMM on W = [Ustar; Vstar]. Returns the best iterate seen,
/// re-projected to the orthogonal group.
RotationResult admm_rotate(const SvdFactors& svd, const RotationConfig& cfg);
RotationResult admm_rotate(const FactorPair& F, const RotationConfig& cfg);

struct LambdaUpdate {
  double lambda = 1.0;
  bool warning = false;  // no admissible positive root; previous value kept
};

/// Column objective 0.5||a - lambda w11||^2 + 0.5||c - w12 / lambda||^2 with
/// a = w21 + n1, c = w22 + n2.
double lambda_objective(double lambda, const Vector& w21, const Vector& w11, const Vector& n1,
                        const Vector& w22, const Vector& w12, const Vector& n2);

/// Positive minimizer of the column objective from the roots of
/// |w11|^2 l^4 - a.w11 l^3 + c.w12 l - |w12|^2 = 0.
LambdaUpdate lambda_update(const Vector& w21, const Vector& w11, const Vector& n1,
                           const Vector& w22, const Vector& w12, const Vector& n2,
                           double previous = 1.0);

/// Rotation-scale-rotation ADMM for exact NMF.
RsrResult rsr_admm(const SvdFactors& svd, const RotationConfig& cfg);

}  // namespace enmf
