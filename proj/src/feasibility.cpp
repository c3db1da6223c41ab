#include "enmf/feasibility.hpp"

#include <chrono>
#include <cmath>

namespace enmf {

namespace {

constexpr int kMaxHalvings = 40;
// Projected gradients below this fraction of the gradient scale are rounding noise.
constexpr double kStationaryFloor = 1e-13;

// Row objective 0.5 ||m o (x - u V^T)||^2 and its gradient, for one row.
// The full-mask case works through the Gram matrix and X V.
class RowModel {
 public:
  RowModel(const Matrix& X, const Matrix& V, const ObservationMask& observed)
      : X_(X), V_(V), observed_(observed), full_(observed.full()) {
    if (full_) {
      gram_ = V.transpose() * V;
      XV_ = X * V;
    }
  }

  RowVector gradient(Index i, const RowVector& u) const {
    if (full_) return u * gram_ - XV_.row(i);
    const RowVector res =
        (u * V_.transpose() - X_.row(i)).cwiseProduct(observed_.values().row(i));
    return res * V_;
  }

  double objective(Index i, const RowVector& u) const {
    if (full_) {
      // Constant term dropped; only differences are compared.
      return 0.5 * u.dot(u * gram_) - u.dot(XV_.row(i));
    }
    const RowVector res =
        (u * V_.transpose() - X_.row(i)).cwiseProduct(observed_.values().row(i));
    return 0.5 * res.squaredNorm();
  }

  double step(Index i, const RowVector& g) const {
    if (full_) {
      const double den = g.dot(g * gram_);
      return den > 0.0 ? g.squaredNorm() / den : 0.0;
    }
    return optimal_row_step(g, V_, observed_.values().row(i));
  }

 private:
  const Matrix& X_;
  const Matrix& V_;
  const ObservationMask& observed_;
  bool full_;
  Matrix gram_;
  Matrix XV_;
};

// Masked gradient row: zero outside the free set.
RowVector masked(const RowVector& g, const Matrix& free, Index i) {
  return g.cwiseProduct(free.row(i));
}

// Projected gradient on the free set: g where u > 0, min(g, 0) where u == 0.
double projected_grad_sq(const RowVector& g, const RowVector& u, const Matrix& free, Index i) {
  double s = 0.0;
  for (Index k = 0; k < g.size(); ++k) {
    if (free(i, k) == 0.0) continue;
    const double pg = u(k) > 0.0 ? g(k) : std::min(g(k), 0.0);
    s += pg * pg;
  }
  return s;
}

double mean_abs(const Matrix& A, const Matrix& B) {
  const double count = static_cast<double>(A.size() + B.size());
  if (count == 0.0) return 0.0;
  return (A.cwiseAbs().sum() + B.cwiseAbs().sum()) / count;
}

}  // namespace

void validate(const PenaltyConfig& cfg) {
  if (cfg.delta_u && !(*cfg.delta_u > 0.0)) throw ValidationError("delta_u must be positive");
  if (cfg.delta_v && !(*cfg.delta_v > 0.0)) throw ValidationError("delta_v must be positive");
  if (!(cfg.rho_u > 0.0) || !(cfg.rho_v > 0.0)) throw ValidationError("rho_u/rho_v must be positive");
  if (!(cfg.pbcd_eps > 0.0)) throw ValidationError("pbcd_eps must be positive");
  if (cfg.pbcd_max_iter < 1) throw ValidationError("pbcd_max_iter must be >= 1");
  if (cfg.sweep_cap < 1) throw ValidationError("sweep_cap must be >= 1");
  if (cfg.step_mode == StepMode::fixed && !(cfg.fixed_step > 0.0)) {
    throw ValidationError("fixed step must be positive");
  }
}

Matrix lift_negatives(const Matrix& M, double rho, double delta) {
  const double lift = rho * delta;
  return M.unaryExpr([lift](double x) { return x < 0.0 ? x + lift : x; });
}

double optimal_row_step(const RowVector& g, const Matrix& V) {
  if (g.size() != V.cols()) throw DimensionError("optimal_row_step: g and V disagree");
  const double den = (g * V.transpose()).squaredNorm();
  if (!(den > 0.0)) return 0.0;
  return g.squaredNorm() / den;
}

double optimal_row_step(const RowVector& g, const Matrix& V, const RowVector& observed_row) {
  if (g.size() != V.cols() || observed_row.size() != V.rows()) {
    throw DimensionError("optimal_row_step: shapes disagree");
  }
  const double den = (g * V.transpose()).cwiseProduct(observed_row).squaredNorm();
  if (!(den > 0.0)) return 0.0;
  return g.squaredNorm() / den;
}

PbcdResult pbcd(const Matrix& X, const Matrix& U, const Matrix& V, const PbcdOptions& options,
                const SignMask& free, const ObservationMask& observed) {
  if (U.cols() != V.cols() || X.rows() != U.rows() || X.cols() != V.rows()) {
    throw DimensionError("pbcd: X, U, V shapes disagree");
  }
  if (free.rows() != U.rows() || free.cols() != U.cols()) {
    throw DimensionError("pbcd: sign mask shape differs from U");
  }
  if (observed.rows() != X.rows() || observed.cols() != X.cols()) {
    throw DimensionError("pbcd: observation mask shape differs from X");
  }
  PbcdResult out{U, {}};
  const RowModel model(X, V, observed);
  const Matrix& M = free.values();
  const Index n = U.rows();
  const double v_norm = frobenius_norm(V);
  const double grad_scale = v_norm * (frobenius_norm(X) + frobenius_norm(U) * v_norm);

  for (int sweep = 0; sweep <= options.max_iter; ++sweep) {
    Matrix G(n, U.cols());
    double pg_sq = 0.0;
    for (Index i = 0; i < n; ++i) {
      G.row(i) = model.gradient(i, out.U.row(i));
      pg_sq += projected_grad_sq(G.row(i), out.U.row(i), M, i);
    }
    if (!G.allFinite()) throw NumericalError("pbcd: non-finite gradient");
    const double pg = std::sqrt(pg_sq);
    if (sweep == 0) out.stats.initial_projected_grad = pg;
    out.stats.final_projected_grad = pg;
    if (pg <= kStationaryFloor * grad_scale || pg < options.eps * out.stats.initial_projected_grad) {
      out.stats.converged = true;
      break;
    }
    if (sweep == options.max_iter) break;

    for (Index i = 0; i < n; ++i) {
      const RowVector g = masked(G.row(i), M, i);
      if (g.squaredNorm() == 0.0) continue;
      double d = options.step_mode == StepMode::optimal ? model.step(i, g) : options.fixed_step;
      if (d == 0.0) {
        ++out.stats.stationary_rows;
        continue;
      }
      const RowVector u = out.U.row(i);
      const double before = model.objective(i, u);
      // Projection can overshoot the 1-D minimizer; halve until the row improves.
      for (int h = 0; h <= kMaxHalvings; ++h, d *= 0.5) {
        RowVector trial = u;
        for (Index k = 0; k < u.size(); ++k) {
          if (M(i, k) != 0.0) trial(k) = std::max(0.0, u(k) - d * g(k));
        }
        if (model.objective(i, trial) <= before) {
          out.U.row(i) = trial;
          break;
        }
      }
    }
    out.stats.sweeps = sweep + 1;
  }
  return out;
}

FeasibilityResult attain_feasibility(const Matrix& X, const FactorPair& F, const PenaltyConfig& cfg,
                                     const ObservationMask& observed) {
  F.validate();
  validate(cfg);
  if (X.rows() != F.U.rows() || X.cols() != F.V.rows()) {
    throw DimensionError("attain_feasibility: factor shapes disagree with X");
  }
  if (observed.rows() != X.rows() || observed.cols() != X.cols()) {
    throw DimensionError("attain_feasibility: observation mask shape differs from X");
  }
  const auto start = std::chrono::steady_clock::now();
  FeasibilityResult out{F, {}};
  const double scale = 10.0 * mean_abs(F.U, F.V);
  out.stats.delta_u = cfg.delta_u.value_or(scale);
  out.stats.delta_v = cfg.delta_v.value_or(scale);
  auto objective = [&](const FactorPair& P) {
    return observed.full() ? frobenius_objective(X, P) : masked_objective(X, P, observed);
  };

  if (!F.feasible()) {
    if (!(out.stats.delta_u > 0.0) || !(out.stats.delta_v > 0.0)) {
      throw ValidationError("attain_feasibility: penalty weight is zero (all-zero factors)");
    }
    const PbcdOptions options{cfg.pbcd_eps, cfg.pbcd_max_iter, cfg.step_mode, cfg.fixed_step};
    const Matrix Xt = X.transpose();
    const ObservationMask observed_t = observed.transposed();
    Matrix& U = out.factors.U;
    Matrix& V = out.factors.V;
    while (!out.factors.feasible()) {
      if (out.stats.sweeps >= cfg.sweep_cap) {
        U = U.cwiseMax(0.0);
        V = V.cwiseMax(0.0);
        out.stats.fallback_projection = true;
        out.stats.diagnostics.push_back(
            "FALLBACK: factors still infeasible after " + std::to_string(cfg.sweep_cap) +
            " sweeps; projected to the nonnegative orthant");
        break;
      }
      U = lift_negatives(U, cfg.rho_u, out.stats.delta_u);
      U = pbcd(X, U, V, options, SignMask::of(U), observed).U;
      V = lift_negatives(V, cfg.rho_v, out.stats.delta_v);
      V = pbcd(Xt, V, U, options, SignMask::of(V), observed_t).U;
      ++out.stats.sweeps;
    }
  }
  out.stats.objective = objective(out.factors);
  out.stats.wall_time_s =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return out;
}

}  // namespace enmf
