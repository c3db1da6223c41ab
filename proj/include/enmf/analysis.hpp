#pragma once

// KKT certification and equivalence analysis of factor pairs.

#include "enmf/core.hpp"

#include <optional>
#include <string>
#include <vector>

namespace enmf {

/// Complementary-slackness residuals of W = [U; V] for 0.5 ||X - U V^T||^2.
struct KktResiduals {
  double delta_W = 0.0;  // max |grad W o W|
  double sigma_W = 0.0;  // sum |grad W o W|
  double min_entry = 0.0;
  // Smallest gradient over zero entries (dual feasibility wants >= 0).
  // +inf when no entry is zero.
  double min_grad_on_zero = 0.0;

  /// delta_W <= tol, sigma_W <= tol and min_grad_on_zero >= -tol.
  bool satisfied(double tol) const;
};

/// Requires F entrywise nonnegative. With a mask, the residual is restricted to
/// observed entries.
KktResiduals kkt_residuals(const Matrix& X, const FactorPair& F);
KktResiduals kkt_residuals(const Matrix& X, const FactorPair& F, const ObservationMask& observed);

enum class Verdict { E, TE, NE };
std::string verdict_name(Verdict v);

struct EquivalenceReport {
  double matched_u_pct = 0.0;
  double matched_v_pct = 0.0;
  // permutation[i] = column of B matched to column i of A, or -1.
  std::vector<Index> permutation;
  // ||B.U col|| / ||A.U col|| for matched columns (NaN elsewhere).
  std::vector<double> scalings_u;
  std::vector<double> scalings_v;
  // Largest |scaling_u * scaling_v - 1| over columns matched in both factors.
  double reciprocal_scaling_gap = 0.0;
  std::vector<Index> excluded_zero_columns_a;
  std::vector<Index> excluded_zero_columns_b;
  double error_gap = 0.0;                   // e_d, filled by compare()
  std::optional<double> error_ratio;        // objective_B / objective_A
  Verdict verdict = Verdict::TE;
};

struct PermutationOptions {
  double eps = 0.05;        // cosine >= 1 - eps
  int decimals = 1;         // rounding of the cross-similarity check
  double agreement = 0.9;   // strictly more than this fraction must agree
};

/// Greedy cosine matching of U columns, pruned by the M/N/S cross-similarity
/// test; the surviving U permutation is then checked on V.
EquivalenceReport permutation_equivalence(const FactorPair& A, const FactorPair& B,
                                          const PermutationOptions& options = {});

/// Round half to even at `decimals` decimal places.
double round_half_even(double x, int decimals);

struct GeneralizedTransform {
  Matrix R1;
  Vector Lambda;
  Matrix R2;
  double delta_u = 0.0;  // ||B.U - A.U R1 diag(Lambda) R2^T||_F
  double delta_v = 0.0;  // ||B.V - A.V R1 diag(Lambda)^{-1} R2^T||_F
  bool pseudo_inverse = false;  // A.U (or the recovered transform) was rank deficient
};

/// Recovers the r x r transform T with B.U ~ A.U T from the SVD of A.U and
/// factors it as R1 Lambda R2^T.
GeneralizedTransform generalized_transform(const FactorPair& A, const FactorPair& B);

struct EquivalenceTolerances {
  double error_tol = 0.0;  // on |e_d|; typical choice 1e-3 ||X||_F
  double kkt_tol = 1e-6;
};

/// E: 100%/100% matched and |e_d| <= error_tol. NE: B is KKT and e_d > error_tol.
/// TE otherwise.
Verdict classify_equivalence(const EquivalenceReport& report, const KktResiduals& kkt_b,
                             double error_gap, const EquivalenceTolerances& tol);

/// Permutation report plus error gap, ratio, KKT of B and the verdict.
/// Defaults error_tol to 1e-3 ||X||_F when it is zero.
EquivalenceReport compare(const Matrix& X, const FactorPair& A, const FactorPair& B,
                          EquivalenceTolerances tol = {}, const PermutationOptions& options = {});

}  // namespace enmf
