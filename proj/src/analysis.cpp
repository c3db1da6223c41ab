#include "enmf/analysis.hpp"

#include <Eigen/SVD>

#include <algorithm>
#include <cfenv>
#include <cmath>
#include <limits>
#include <numeric>

namespace enmf {

namespace {

using ColMatrix = Eigen::MatrixXd;
constexpr double kInf = std::numeric_limits<double>::infinity();

KktResiduals kkt_from_gradients(const Matrix& U, const Matrix& V, const Matrix& GU,
                                const Matrix& GV) {
  KktResiduals out;
  out.min_entry = std::min(U.size() ? U.minCoeff() : kInf, V.size() ? V.minCoeff() : kInf);
  out.min_grad_on_zero = kInf;
  double sum = 0.0;
  double comp = 0.0;
  auto visit = [&](const Matrix& W, const Matrix& G) {
    for (Index i = 0; i < W.rows(); ++i) {
      for (Index j = 0; j < W.cols(); ++j) {
        const double p = std::abs(G(i, j) * W(i, j));
        out.delta_W = std::max(out.delta_W, p);
        const double t = sum + p;
        comp += std::abs(sum) >= p ? (sum - t) + p : (p - t) + sum;
        sum = t;
        if (W(i, j) == 0.0) out.min_grad_on_zero = std::min(out.min_grad_on_zero, G(i, j));
      }
    }
  };
  visit(U, GU);
  visit(V, GV);
  out.sigma_W = sum + comp;
  return out;
}

void check_kkt_inputs(const Matrix& X, const FactorPair& F) {
  F.validate();
  if (X.rows() != F.U.rows() || X.cols() != F.V.rows()) {
    throw DimensionError("kkt_residuals: factor shapes disagree with X");
  }
  if (!F.feasible()) throw ValidationError("kkt_residuals: factor pair is not nonnegative");
}

// Column indices with nonzero norm.
std::vector<Index> nonzero_columns(const Matrix& A, std::vector<Index>& excluded) {
  std::vector<Index> keep;
  for (Index j = 0; j < A.cols(); ++j) {
    if (A.col(j).norm() > 0.0) {
      keep.push_back(j);
    } else {
      excluded.push_back(j);
    }
  }
  return keep;
}

double cosine(const Matrix& A, Index i, const Matrix& B, Index j) {
  const double den = A.col(i).norm() * B.col(j).norm();
  return den > 0.0 ? A.col(i).dot(B.col(j)) / den : 0.0;
}

// Keeps the pairs (a[k], b[k]) whose sorted M/N/S columns agree after rounding.
std::vector<std::pair<Index, Index>> cross_validate(const Matrix& A, const Matrix& B,
                                                    const std::vector<std::pair<Index, Index>>& pairs,
                                                    const PermutationOptions& options) {
  const std::size_t k = pairs.size();
  std::vector<std::pair<Index, Index>> kept;
  for (std::size_t c = 0; c < k; ++c) {
    std::vector<double> m(k), n(k), s(k);
    for (std::size_t i = 0; i < k; ++i) {
      m[i] = cosine(A, pairs[i].first, A, pairs[c].first);
      n[i] = cosine(B, pairs[i].second, B, pairs[c].second);
      s[i] = cosine(A, pairs[i].first, B, pairs[c].second);
    }
    for (auto* v : {&m, &n, &s}) std::sort(v->begin(), v->end(), std::greater<>());
    std::size_t agree = 0;
    for (std::size_t i = 0; i < k; ++i) {
      const double rm = round_half_even(m[i], options.decimals);
      if (rm == round_half_even(n[i], options.decimals) &&
          rm == round_half_even(s[i], options.decimals)) {
        ++agree;
      }
    }
    if (static_cast<double>(agree) > options.agreement * static_cast<double>(k)) {
      kept.push_back(pairs[c]);
    }
  }
  return kept;
}

}  // namespace

bool KktResiduals::satisfied(double tol) const {
  return delta_W <= tol && sigma_W <= tol && min_grad_on_zero >= -tol;
}

KktResiduals kkt_residuals(const Matrix& X, const FactorPair& F) {
  check_kkt_inputs(X, F);
  const Matrix R = F.U * F.V.transpose() - X;
  return kkt_from_gradients(F.U, F.V, R * F.V, R.transpose() * F.U);
}

KktResiduals kkt_residuals(const Matrix& X, const FactorPair& F, const ObservationMask& observed) {
  check_kkt_inputs(X, F);
  if (observed.rows() != X.rows() || observed.cols() != X.cols()) {
    throw DimensionError("kkt_residuals: mask shape differs from X");
  }
  if (observed.full()) return kkt_residuals(X, F);
  // Unobserved entries of X are never read.
  Matrix R = F.U * F.V.transpose();
  for (Index i = 0; i < R.rows(); ++i) {
    for (Index j = 0; j < R.cols(); ++j) {
      R(i, j) = observed.observed(i, j) ? R(i, j) - X(i, j) : 0.0;
    }
  }
  return kkt_from_gradients(F.U, F.V, R * F.V, R.transpose() * F.U);
}

std::string verdict_name(Verdict v) {
  switch (v) {
    case Verdict::E: return "E";
    case Verdict::TE: return "TE";
    case Verdict::NE: return "NE";
  }
  return "TE";
}

double round_half_even(double x, int decimals) {
  const double scale = std::pow(10.0, decimals);
  const int saved = std::fegetround();
  std::fesetround(FE_TONEAREST);
  const double out = std::nearbyint(x * scale) / scale;
  std::fesetround(saved);
  return out;
}

EquivalenceReport permutation_equivalence(const FactorPair& A, const FactorPair& B,
                                          const PermutationOptions& options) {
  A.validate();
  B.validate();
  if (A.U.rows() != B.U.rows() || A.V.rows() != B.V.rows() || A.rank() != B.rank()) {
    throw DimensionError("permutation_equivalence: factor pairs differ in shape");
  }
  const Index r = A.rank();
  EquivalenceReport report;
  report.permutation.assign(r, -1);
  report.scalings_u.assign(r, std::numeric_limits<double>::quiet_NaN());
  report.scalings_v.assign(r, std::numeric_limits<double>::quiet_NaN());
  const auto cols_a = nonzero_columns(A.U, report.excluded_zero_columns_a);
  const auto cols_b = nonzero_columns(B.U, report.excluded_zero_columns_b);

  struct Candidate {
    double cos;
    Index a, b;
  };
  std::vector<Candidate> candidates;
  for (Index a : cols_a) {
    for (Index b : cols_b) {
      const double c = cosine(A.U, a, B.U, b);
      if (c >= 1.0 - options.eps) candidates.push_back({c, a, b});
    }
  }
  std::stable_sort(candidates.begin(), candidates.end(),
                   [](const Candidate& x, const Candidate& y) { return x.cos > y.cos; });
  std::vector<bool> used_a(r, false), used_b(r, false);
  std::vector<std::pair<Index, Index>> pairs;
  for (const auto& c : candidates) {
    if (used_a[c.a] || used_b[c.b]) continue;
    used_a[c.a] = used_b[c.b] = true;
    pairs.emplace_back(c.a, c.b);
  }
  std::sort(pairs.begin(), pairs.end());
  const auto u_pairs = cross_validate(A.U, B.U, pairs, options);

  // The V check reuses the U permutation.
  std::vector<std::pair<Index, Index>> v_candidates;
  for (const auto& [a, b] : u_pairs) {
    if (cosine(A.V, a, B.V, b) >= 1.0 - options.eps) v_candidates.emplace_back(a, b);
  }
  const auto v_pairs = cross_validate(A.V, B.V, v_candidates, options);

  for (const auto& [a, b] : u_pairs) {
    report.permutation[a] = b;
    report.scalings_u[a] = B.U.col(b).norm() / A.U.col(a).norm();
  }
  for (const auto& [a, b] : v_pairs) {
    const double na = A.V.col(a).norm();
    report.scalings_v[a] = na > 0.0 ? B.V.col(b).norm() / na
                                    : std::numeric_limits<double>::quiet_NaN();
    report.reciprocal_scaling_gap = std::max(
        report.reciprocal_scaling_gap, std::abs(report.scalings_u[a] * report.scalings_v[a] - 1.0));
  }
  report.matched_u_pct = 100.0 * static_cast<double>(u_pairs.size()) / static_cast<double>(r);
  report.matched_v_pct = 100.0 * static_cast<double>(v_pairs.size()) / static_cast<double>(r);
  return report;
}

GeneralizedTransform generalized_transform(const FactorPair& A, const FactorPair& B) {
  A.validate();
  B.validate();
  if (A.U.rows() != B.U.rows() || A.V.rows() != B.V.rows() || A.rank() != B.rank()) {
    throw DimensionError("generalized_transform: factor pairs differ in shape");
  }
  GeneralizedTransform out;
  const ColMatrix AU = A.U;
  Eigen::JacobiSVD<ColMatrix> svd(AU, Eigen::ComputeThinU | Eigen::ComputeThinV);
  const Vector& gamma = svd.singularValues();
  const double cutoff =
      (gamma.size() ? gamma(0) : 0.0) * 1e-12 * static_cast<double>(std::max(AU.rows(), AU.cols()));
  Vector inv(gamma.size());
  for (Index k = 0; k < gamma.size(); ++k) {
    if (gamma(k) > cutoff) {
      inv(k) = 1.0 / gamma(k);
    } else {
      inv(k) = 0.0;
      out.pseudo_inverse = true;
    }
  }
  const ColMatrix Z =
      svd.matrixV() * inv.asDiagonal() * svd.matrixU().transpose() * ColMatrix(B.U);
  Eigen::JacobiSVD<ColMatrix> zsvd(Z, Eigen::ComputeFullU | Eigen::ComputeFullV);
  out.R1 = zsvd.matrixU();
  out.Lambda = zsvd.singularValues();
  out.R2 = zsvd.matrixV();
  Vector lambda_inv(out.Lambda.size());
  const double lcut = (out.Lambda.size() ? out.Lambda(0) : 0.0) * 1e-14;
  for (Index k = 0; k < out.Lambda.size(); ++k) {
    if (out.Lambda(k) > lcut && out.Lambda(k) > 0.0) {
      lambda_inv(k) = 1.0 / out.Lambda(k);
    } else {
      lambda_inv(k) = 0.0;
      out.pseudo_inverse = true;
    }
  }
  const Matrix Tu = out.R1 * out.Lambda.asDiagonal() * out.R2.transpose();
  const Matrix Tv = out.R1 * lambda_inv.asDiagonal() * out.R2.transpose();
  out.delta_u = frobenius_norm(B.U - A.U * Tu);
  out.delta_v = frobenius_norm(B.V - A.V * Tv);
  return out;
}

Verdict classify_equivalence(const EquivalenceReport& report, const KktResiduals& kkt_b,
                             double error_gap, const EquivalenceTolerances& tol) {
  if (report.matched_u_pct >= 100.0 && report.matched_v_pct >= 100.0 &&
      std::abs(error_gap) <= tol.error_tol) {
    return Verdict::E;
  }
  if (kkt_b.satisfied(tol.kkt_tol) && error_gap > tol.error_tol) return Verdict::NE;
  return Verdict::TE;
}

EquivalenceReport compare(const Matrix& X, const FactorPair& A, const FactorPair& B,
                          EquivalenceTolerances tol, const PermutationOptions& options) {
  EquivalenceReport report = permutation_equivalence(A, B, options);
  const double obj_a = frobenius_objective(X, A);
  const double obj_b = frobenius_objective(X, B);
  report.error_gap = obj_b - obj_a;
  if (obj_a > 0.0) report.error_ratio = obj_b / obj_a;
  if (tol.error_tol == 0.0) tol.error_tol = 1e-3 * frobenius_norm(X);
  KktResiduals kkt_b{kInf, kInf, B.feasible() ? 0.0 : -kInf, -kInf};
  if (B.feasible()) kkt_b = kkt_residuals(X, B);
  report.verdict = classify_equivalence(report, kkt_b, report.error_gap, tol);
  return report;
}

}  // namespace enmf
