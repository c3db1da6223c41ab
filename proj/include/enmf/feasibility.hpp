#pragma once

// Exterior penalty stage: lift negative factor entries toward the orthant and
// descend the nonnegative ones with projected block coordinate descent.

#include "enmf/core.hpp"

#include <optional>
#include <string>
#include <vector>

namespace enmf {

enum class StepMode { optimal, fixed };

struct PenaltyConfig {
  // Penalty weights. Unset means 10 * mean |entry| of the stacked input factors.
  std::optional<double> delta_u;
  std::optional<double> delta_v;
  double rho_u = 0.01;  // lift step sizes
  double rho_v = 0.01;
  double pbcd_eps = 0.01;
  int pbcd_max_iter = 50;
  StepMode step_mode = StepMode::optimal;
  double fixed_step = 0.0;  // used when step_mode == fixed
  int sweep_cap = 10000;
};

/// Throws ValidationError unless every weight and step is positive.
void validate(const PenaltyConfig& cfg);

/// Adds rho * delta to every strictly negative entry.
Matrix lift_negatives(const Matrix& M, double rho, double delta);

/// ||g||^2 / ||g V^T||^2, the exact minimizer of the row objective along -g.
/// Returns 0 when the denominator vanishes.
double optimal_row_step(const RowVector& g, const Matrix& V);

/// Same with the residual restricted to columns where `observed_row` is 1.
double optimal_row_step(const RowVector& g, const Matrix& V, const RowVector& observed_row);

struct PbcdOptions {
  double eps = 0.01;
  int max_iter = 50;
  StepMode step_mode = StepMode::optimal;
  double fixed_step = 0.0;
};

struct PbcdStats {
  int sweeps = 0;
  double initial_projected_grad = 0.0;
  double final_projected_grad = 0.0;
  long stationary_rows = 0;  // rows where the step denominator vanished
  bool converged = false;
};

struct PbcdResult {
  Matrix U;
  PbcdStats stats;
};

/// Projected block coordinate descent on U for 0.5 ||M_E o (X - U V^T)||^2 with
/// V fixed. Only coordinates where `free` is 1 move; the rest are copied
/// bit-for-bit. Stops when the projected gradient norm falls below
/// eps * (its value on entry) or after max_iter sweeps.
PbcdResult pbcd(const Matrix& X, const Matrix& U, const Matrix& V, const PbcdOptions& options,
                const SignMask& free, const ObservationMask& observed);

struct AscentStats {
  int sweeps = 0;
  double wall_time_s = 0.0;
  double objective = 0.0;  // frobenius (or masked) objective at feasibility
  double delta_u = 0.0;
  double delta_v = 0.0;
  bool fallback_projection = false;
  std::vector<std::string> diagnostics;
};

struct FeasibilityResult {
  FactorPair factors;  // entrywise nonnegative
  AscentStats stats;
};

/// Alternates lift + PBCD on U, then on V, until both factors are
/// nonnegative. Past `sweep_cap` sweeps, projects to the orthant and flags it.
FeasibilityResult attain_feasibility(const Matrix& X, const FactorPair& F, const PenaltyConfig& cfg,
                                     const ObservationMask& observed);

}  // namespace enmf
