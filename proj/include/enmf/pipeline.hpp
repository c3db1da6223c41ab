#pragma once

// End-to-end exterior pipelines: eNMF (SVD -> rotation -> feasibility ->
// descent) and its masked completion counterpart eNMC.

#include "enmf/analysis.hpp"
#include "enmf/core.hpp"
#include "enmf/feasibility.hpp"
#include "enmf/lowrank.hpp"
#include "enmf/rotation.hpp"
#include "enmf/solvers.hpp"

#include <optional>
#include <string>
#include <vector>

namespace enmf {

enum class SvdMethod { exact, randomized };

/// What happens after the rotation when the rotated factors are infeasible.
enum class PostRotation {
  feasibility_hals,     // exterior penalty stage, then HALS (the default method)
  projection_hals,      // max(., 0), then HALS
  projection_gradmult,  // max(., 0), then projected gradient (grad_mult)
  projection_gd,        // max(., 0), then row-step projected gradient descent
  feasibility_gd,       // exterior penalty stage, then row-step gradient descent
};

std::string post_rotation_name(PostRotation p);
PostRotation parse_post_rotation(const std::string& name);

struct DescentStop {
  double kkt_tol = 1e-6;
  long max_iters = 20000;
  std::optional<double> time_budget_s;
};

struct PipelineConfig {
  Index r = 1;
  SvdMethod svd = SvdMethod::exact;
  RandomizedSvdOptions randomized;
  RotationConfig rotation;
  PenaltyConfig penalty;
  PostRotation post_rotation = PostRotation::feasibility_hals;
  DescentStop descent;
};

void validate(const PipelineConfig& cfg);

struct PhaseTimings {
  double svd_s = 0.0;
  double rotation_s = 0.0;
  double feasibility_descent_s = 0.0;
  double total_s = 0.0;
};

struct EnmfResult {
  FactorPair factors;
  ConvergenceTrace trace;
  PhaseTimings timings;
  double svd_residual = 0.0;
  double rotated_objective = 0.0;
  double feasible_objective = 0.0;
  double final_objective = 0.0;
  RotationResult rotation;
  AscentStats ascent;
  KktResiduals kkt;
  bool one_shot = false;  // rotated factors were already nonnegative and stationary
  Termination descent_termination = Termination::kkt_converged;
  long descent_iterations = 0;
  bool ascent_holds = true;   // rotated <= feasible
  bool descent_holds = true;  // final <= feasible
  std::vector<std::string> diagnostics;
};

/// Exterior NMF. Requires X >= 0 and 1 <= r <= min(n, m).
EnmfResult run_enmf(const Matrix& X, const PipelineConfig& cfg);

struct EnmcResult {
  FactorPair factors;
  ConvergenceTrace trace;
  double runtime_s = 0.0;
  double rotated_objective = 0.0;   // masked
  double feasible_objective = 0.0;  // masked
  double final_objective = 0.0;     // masked
  KktResiduals kkt;                 // masked
  AscentStats ascent;
  Termination descent_termination = Termination::kkt_converged;
  std::vector<std::string> warnings;
};

/// Exterior matrix completion. Only observed entries of X are read.
EnmcResult run_enmc(const Matrix& X, const ObservationMask& observed, const PipelineConfig& cfg);

}  // namespace enmf
