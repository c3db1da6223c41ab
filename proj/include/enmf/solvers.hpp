#pragma once

// Interior NMF solvers (HALS and the baselines), the shared iteration driver
// with its stopping rules, and initializations.

#include "enmf/analysis.hpp"
#include "enmf/core.hpp"
#include "enmf/lowrank.hpp"

#include <map>
#include <memory>
#include <optional>
#include <string>
#include <variant>
#include <vector>

namespace enmf {

enum class Algorithm { hals, mult, grad_mult, als_projected, ao_admm, nmf_admm };

std::string algorithm_name(Algorithm a);
Algorithm parse_algorithm(const std::string& name);
const std::vector<Algorithm>& all_algorithms();

enum class Termination {
  budget,          // wall-clock budget exhausted
  target_reached,  // objective <= error target
  kkt_converged,   // KKT residuals within tolerance
  stagnated,       // no improvement for the stagnation window
  iteration_cap,   // max_iters reached
  error,           // solver aborted
};

std::string termination_name(Termination t);
Termination parse_termination(const std::string& name);

/// When to stop iterating. Every check happens at an iteration boundary.
struct StopRule {
  long max_iters = 1000;
  std::optional<double> time_budget_s;
  std::optional<double> error_target;  // on the Frobenius objective
  std::optional<double> kkt_tol;
  long stagnation_window = 0;  // 0 disables; see kStagnationRelTol
  double elapsed_offset_s = 0.0;  // time already spent (e.g. initialization)
  long trace_every = 1;
};

/// Improvement for stagnation purposes: relative decrease of the best
/// objective seen so far by more than this.
inline constexpr double kStagnationRelTol = 1e-12;

/// Counts consecutive non-improving iterations against the best objective.
class StagnationDetector {
 public:
  explicit StagnationDetector(long window) : window_(window) {}
  /// Feeds one objective; returns true once `window` non-improving
  /// iterations have been seen in a row.
  bool update(double objective);
  long non_improving() const { return count_; }

 private:
  long window_;
  long count_ = 0;
  std::optional<double> best_;
};

struct SolveResult {
  FactorPair factors;
  ConvergenceTrace trace;
  Termination termination = Termination::iteration_cap;
  long iterations = 0;
  double runtime_s = 0.0;  // includes elapsed_offset_s
  double final_objective = 0.0;
  std::vector<std::string> diagnostics;
};

/// One outer iteration of an NMF method. Implementations keep their own state
/// (duals, step sizes) between calls.
class Stepper {
 public:
  virtual ~Stepper() = default;
  virtual void step(FactorPair& F) = 0;
  /// Objective reported in the trace; Frobenius by default.
  virtual double objective(const FactorPair& F) const;
  virtual KktResiduals kkt(const FactorPair& F) const;
  std::vector<std::string>& diagnostics() { return diagnostics_; }

 protected:
  explicit Stepper(const Matrix& X) : X_(X) {}
  const Matrix& X_;
  std::vector<std::string> diagnostics_;
};

/// Runs `stepper` from F until a stop rule fires. The trace gets a sample at
/// iteration 0 and after every `trace_every` iterations, plus the final one.
SolveResult drive(const Matrix& X, FactorPair F, Stepper& stepper, const StopRule& rule);

/// Parameters for the individual methods; missing keys take these defaults.
struct SolverParams {
  int ao_admm_inner = 5;
  double nmf_admm_rho = 1.0;
  double armijo_sigma = 0.01;
  double mult_floor = 1e-16;
};

SolverParams params_from_map(const std::map<std::string, double>& inner);

std::unique_ptr<Stepper> make_stepper(Algorithm a, const Matrix& X, const FactorPair& F,
                                      const SolverParams& params = {});

/// Column-wise HALS; zero columns are reseeded from the residual.
SolveResult hals(const Matrix& X, const FactorPair& F, const StopRule& rule);
/// Lee-Seung multiplicative updates; zeros in F are raised to mult_floor first.
SolveResult mult(const Matrix& X, const FactorPair& F, const StopRule& rule,
                 const SolverParams& params = {});
/// Alternating projected gradient with Armijo backtracking.
SolveResult grad_mult(const Matrix& X, const FactorPair& F, const StopRule& rule,
                      const SolverParams& params = {});
/// Unconstrained block least squares followed by projection.
SolveResult als_projected(const Matrix& X, const FactorPair& F, const StopRule& rule);
/// Alternating NNLS blocks, each solved by a few ADMM iterations.
SolveResult ao_admm(const Matrix& X, const FactorPair& F, const StopRule& rule,
                    const SolverParams& params = {});
/// ADMM on the whole problem with splitting Y = U V^T, U = U+, V = V+.
SolveResult nmf_admm(const Matrix& X, const FactorPair& F, const StopRule& rule,
                     const SolverParams& params = {});

SolveResult solve(Algorithm a, const Matrix& X, const FactorPair& F, const StopRule& rule,
                  const SolverParams& params = {});

/// Masked multiplicative updates for completion (observed entries only).
SolveResult masked_mult(const Matrix& X, const ObservationMask& observed, const FactorPair& F,
                        const StopRule& rule, const SolverParams& params = {});

/// Projected gradient descent with Armijo backtracking whose trial step starts
/// at the row-averaged optimal step.
SolveResult projected_gd(const Matrix& X, const FactorPair& F, const StopRule& rule,
                         const SolverParams& params = {});

struct NnlsAdmmState {
  Matrix H;     // primal (nonnegative) iterate, rows x r
  Matrix dual;  // scaled dual, rows x r
};

/// ADMM for min_{H >= 0} 0.5 ||Y - H W^T||^2 given Gram = W^T W and
/// cross = Y W. Runs `iters` iterations from `state` (warm start).
/// Returns true if the ridge fallback was needed.
bool nnls_admm(const Matrix& gram, const Matrix& cross, NnlsAdmmState& state, int iters);

// ---------------------------------------------------------------------------
// Initializations

/// U(0,1) entries; with X given, both factors are scaled so ||U V^T||_F == ||X||_F.
FactorPair random_init(Index n, Index m, Index r, RngSeed seed);
FactorPair random_init(const Matrix& X, Index r, RngSeed seed);

/// NNDSVD: positive/negative part splitting of each singular pair. Zeros kept.
FactorPair nndsvd_init(const SvdFactors& svd);

struct InitSpec {
  enum class Kind { random, nndsvd, given } kind = Kind::random;
  RngSeed seed{};
  std::optional<FactorPair> given;
  std::string label() const;
};

/// Builds the initial pair for X at rank r.
FactorPair make_init(const Matrix& X, Index r, const InitSpec& spec);

}  // namespace enmf
