#include "enmf/pipeline.hpp"

#include <chrono>
#include <cmath>

namespace enmf {

namespace {

using Clock = std::chrono::steady_clock;

double seconds_between(Clock::time_point a, Clock::time_point b) {
  return std::chrono::duration<double>(b - a).count();
}

bool not_above(double a, double b) { return a <= b * (1.0 + 1e-12) + 1e-300; }

// Appends the descent samples after the pipeline's own, skipping the
// descent's iteration-0 sample (it repeats the starting point).
void append_descent(ConvergenceTrace& trace, const ConvergenceTrace& descent) {
  const long base = trace.empty() ? 0 : trace.back().iteration;
  for (const TraceSample& s : descent.samples()) {
    if (s.iteration == 0) continue;
    trace.add(s.wall_clock_s, s.objective, base + s.iteration);
  }
}

// Masked PBCD sweep on U then V; used as the eNMC descent.
class MaskedPbcdStepper final : public Stepper {
 public:
  MaskedPbcdStepper(const Matrix& X, const ObservationMask& M, const PenaltyConfig& p)
      : Stepper(X), Xt_(X.transpose()), M_(M), Mt_(M.transposed()),
        options_{p.pbcd_eps, 1, p.step_mode, p.fixed_step} {}

  void step(FactorPair& F) override {
    F.U = pbcd(X_, F.U, F.V, options_, SignMask::of(F.U), M_).U;
    F.V = pbcd(Xt_, F.V, F.U, options_, SignMask::of(F.V), Mt_).U;
  }
  double objective(const FactorPair& F) const override { return masked_objective(X_, F, M_); }
  KktResiduals kkt(const FactorPair& F) const override { return kkt_residuals(X_, F, M_); }

 private:
  Matrix Xt_;
  const ObservationMask& M_;
  ObservationMask Mt_;
  PbcdOptions options_;
};

StopRule descent_rule(const DescentStop& d, double elapsed) {
  StopRule rule;
  rule.max_iters = d.max_iters;
  rule.kkt_tol = d.kkt_tol;
  rule.time_budget_s = d.time_budget_s;
  rule.elapsed_offset_s = elapsed;
  return rule;
}

SvdFactors low_rank(const Matrix& X, const PipelineConfig& cfg) {
  if (cfg.svd == SvdMethod::randomized) return randomized_svd(X, cfg.r, cfg.randomized);
  return truncated_svd(X, cfg.r);
}

}  // namespace

std::string post_rotation_name(PostRotation p) {
  switch (p) {
    case PostRotation::feasibility_hals: return "feasibility_hals";
    case PostRotation::projection_hals: return "projection_hals";
    case PostRotation::projection_gradmult: return "projection_gradmult";
    case PostRotation::projection_gd: return "projection_gd";
    case PostRotation::feasibility_gd: return "feasibility_gd";
  }
  return "feasibility_hals";
}

PostRotation parse_post_rotation(const std::string& name) {
  for (PostRotation p : {PostRotation::feasibility_hals, PostRotation::projection_hals,
                         PostRotation::projection_gradmult, PostRotation::projection_gd,
                         PostRotation::feasibility_gd}) {
    if (post_rotation_name(p) == name) return p;
  }
  throw ValidationError("unknown post-rotation strategy '" + name + "'");
}

void validate(const PipelineConfig& cfg) {
  if (cfg.r < 1) throw ValidationError("pipeline rank r must be >= 1");
  validate(cfg.rotation);
  validate(cfg.penalty);
  if (!(cfg.descent.kkt_tol >= 0.0)) throw ValidationError("descent kkt_tol must be >= 0");
  if (cfg.descent.max_iters < 0) throw ValidationError("descent max_iters must be >= 0");
}

EnmfResult run_enmf(const Matrix& X, const PipelineConfig& cfg) {
  validate(cfg);
  require_finite(X, "enmf input");
  require_nonnegative(X, "enmf input");
  if (cfg.r > std::min(X.rows(), X.cols())) {
    throw ValidationError("rank " + std::to_string(cfg.r) + " exceeds min(n, m)");
  }
  EnmfResult out;
  const auto t0 = Clock::now();

  const SvdFactors svd = low_rank(X, cfg);
  out.svd_residual = frobenius_objective(X, svd.factors());
  const auto t_svd = Clock::now();
  out.timings.svd_s = seconds_between(t0, t_svd);
  out.trace.add(out.timings.svd_s, out.svd_residual, 0);

  out.rotation = admm_rotate(svd, cfg.rotation);
  for (auto& d : out.rotation.diagnostics) out.diagnostics.push_back("rotation: " + d);
  const FactorPair rotated{svd.Ustar * out.rotation.R, svd.Vstar * out.rotation.R};
  out.rotated_objective = frobenius_objective(X, rotated);
  const auto t_rot = Clock::now();
  out.timings.rotation_s = seconds_between(t_svd, t_rot);
  out.trace.add(seconds_between(t0, t_rot), out.rotated_objective, 1);

  // A nonnegative rotation of an approximate SVD need not be stationary;
  // only a certified one skips the descent.
  if (rotated.feasible()) {
    out.kkt = kkt_residuals(X, rotated);
    if (out.kkt.satisfied(cfg.descent.kkt_tol)) {
      out.one_shot = true;
      out.factors = rotated;
      out.feasible_objective = out.final_objective = out.rotated_objective;
      out.descent_termination = Termination::kkt_converged;
      out.timings.feasibility_descent_s = 0.0;
      out.timings.total_s = out.timings.svd_s + out.timings.rotation_s;
      return out;
    }
  }

  FactorPair feasible;
  const bool exterior = cfg.post_rotation == PostRotation::feasibility_hals ||
                        cfg.post_rotation == PostRotation::feasibility_gd;
  if (exterior) {
    FeasibilityResult fr =
        attain_feasibility(X, rotated, cfg.penalty, ObservationMask::all_ones(X.rows(), X.cols()));
    feasible = std::move(fr.factors);
    out.ascent = std::move(fr.stats);
    for (auto& d : out.ascent.diagnostics) out.diagnostics.push_back("feasibility: " + d);
  } else {
    feasible = {rotated.U.cwiseMax(0.0), rotated.V.cwiseMax(0.0)};
  }
  out.feasible_objective = frobenius_objective(X, feasible);
  out.trace.add(seconds_between(t0, Clock::now()), out.feasible_objective, 2);

  const StopRule rule = descent_rule(cfg.descent, seconds_between(t0, Clock::now()));
  SolveResult descent;
  switch (cfg.post_rotation) {
    case PostRotation::feasibility_hals:
    case PostRotation::projection_hals: descent = hals(X, feasible, rule); break;
    case PostRotation::projection_gradmult: descent = grad_mult(X, feasible, rule); break;
    case PostRotation::projection_gd:
    case PostRotation::feasibility_gd: descent = projected_gd(X, feasible, rule); break;
  }
  append_descent(out.trace, descent.trace);
  for (auto& d : descent.diagnostics) out.diagnostics.push_back("descent: " + d);
  out.factors = std::move(descent.factors);
  out.final_objective = frobenius_objective(X, out.factors);
  out.descent_termination = descent.termination;
  out.descent_iterations = descent.iterations;
  out.kkt = kkt_residuals(X, out.factors);

  const auto t_end = Clock::now();
  out.timings.feasibility_descent_s = seconds_between(t_rot, t_end);
  out.timings.total_s = out.timings.svd_s + out.timings.rotation_s + out.timings.feasibility_descent_s;

  out.ascent_holds = not_above(out.rotated_objective, out.feasible_objective);
  out.descent_holds = not_above(out.final_objective, out.feasible_objective);
  if (!out.ascent_holds) out.diagnostics.push_back("ascent property violated");
  if (!out.descent_holds) out.diagnostics.push_back("descent property violated");
  if (out.descent_termination != Termination::kkt_converged) {
    out.diagnostics.push_back("descent stopped by " + termination_name(out.descent_termination) +
                              " before KKT certification");
  }
  return out;
}

EnmcResult run_enmc(const Matrix& X, const ObservationMask& observed, const PipelineConfig& cfg) {
  validate(cfg);
  if (observed.rows() != X.rows() || observed.cols() != X.cols()) {
    throw DimensionError("enmc: mask shape differs from X");
  }
  if (cfg.r > std::min(X.rows(), X.cols())) {
    throw ValidationError("rank " + std::to_string(cfg.r) + " exceeds min(n, m)");
  }
  // Zero-filled copy: nothing downstream reads an unobserved entry.
  Matrix Xo = Matrix::Zero(X.rows(), X.cols());
  for (Index i = 0; i < X.rows(); ++i) {
    for (Index j = 0; j < X.cols(); ++j) {
      if (observed.observed(i, j)) Xo(i, j) = X(i, j);
    }
  }
  require_finite(Xo, "enmc observed entries");
  require_nonnegative(Xo, "enmc observed entries");
  if (observed.observed_count() == 0) throw ValidationError("enmc: mask observes nothing");

  EnmcResult out;
  const auto t0 = Clock::now();
  SoftImputeResult init = soft_impute_als(Xo, observed, cfg.r);
  out.warnings = std::move(init.warnings);
  const SvdFactors balanced = balance_factors(init.factors);
  const RotationResult rot = admm_rotate(balanced, cfg.rotation);
  const FactorPair rotated{balanced.Ustar * rot.R, balanced.Vstar * rot.R};
  out.rotated_objective = masked_objective(Xo, rotated, observed);
  out.trace.add(seconds_between(t0, Clock::now()), out.rotated_objective, 0);

  FeasibilityResult fr = attain_feasibility(Xo, rotated, cfg.penalty, observed);
  out.ascent = std::move(fr.stats);
  for (auto& d : out.ascent.diagnostics) out.warnings.push_back("feasibility: " + d);
  out.feasible_objective = masked_objective(Xo, fr.factors, observed);
  out.trace.add(seconds_between(t0, Clock::now()), out.feasible_objective, 1);

  MaskedPbcdStepper stepper(Xo, observed, cfg.penalty);
  SolveResult descent =
      drive(Xo, fr.factors, stepper, descent_rule(cfg.descent, seconds_between(t0, Clock::now())));
  append_descent(out.trace, descent.trace);
  out.factors = std::move(descent.factors);
  out.final_objective = masked_objective(Xo, out.factors, observed);
  out.descent_termination = descent.termination;
  out.kkt = kkt_residuals(Xo, out.factors, observed);
  out.runtime_s = seconds_between(t0, Clock::now());
  return out;
}

}  // namespace enmf
