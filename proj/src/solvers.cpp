#include "enmf/solvers.hpp"

#include <Eigen/Cholesky>

#include <chrono>
#include <cmath>

namespace enmf {

namespace {

using Clock = std::chrono::steady_clock;
constexpr int kMaxRescueNotes = 5;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

// Solves Z * S = B for Z where S is symmetric positive definite (r x r).
// Adds a ridge of 1e-10 * trace(S) when the Cholesky factorization fails.
Matrix solve_spd_right(const Matrix& S, const Matrix& B, bool& ridged) {
  const Eigen::MatrixXd Sc = S;
  Eigen::LLT<Eigen::MatrixXd> llt(Sc);
  bool ok = llt.info() == Eigen::Success;
  if (ok) {
    const Vector d = Eigen::MatrixXd(llt.matrixL()).diagonal();
    ok = d.minCoeff() > 1e-12 * std::max(d.maxCoeff(), 1e-300);
  }
  if (!ok) {
    ridged = true;
    const double ridge = 1e-10 * std::max(Sc.trace(), 1e-300);
    llt.compute(Sc + ridge * Eigen::MatrixXd::Identity(Sc.rows(), Sc.cols()));
  }
  const Eigen::MatrixXd Bt = B.transpose();
  return llt.solve(Bt).transpose();
}

void check_problem(const Matrix& X, const FactorPair& F) {
  F.validate();
  if (X.rows() != F.U.rows() || X.cols() != F.V.rows()) {
    throw DimensionError("solver: factor shapes disagree with X");
  }
  require_finite(X, "solver data");
  if (!F.feasible()) throw ValidationError("solver: initial factors must be nonnegative");
}

// ---------------------------------------------------------------------------

class HalsStepper final : public Stepper {
 public:
  explicit HalsStepper(const Matrix& X) : Stepper(X), Xt_(X.transpose()) {}

  void step(FactorPair& F) override {
    update(X_, F.U, F.V);
    rescue(X_, F.U, F.V);
    update(Xt_, F.V, F.U);
    rescue(Xt_, F.V, F.U);
  }

 private:
  // One HALS pass over the columns of A with B fixed, for Y ~ A B^T.
  static void update(const Matrix& Y, Matrix& A, const Matrix& B) {
    const Matrix YB = Y * B;
    const Matrix G = B.transpose() * B;
    for (Index k = 0; k < A.cols(); ++k) {
      const double gkk = G(k, k);
      if (!(gkk > 0.0)) continue;
      Vector col = A.col(k) + (YB.col(k) - A * G.col(k)) / gkk;
      A.col(k) = col.cwiseMax(0.0);
    }
  }

  // Reseeds all-zero columns of A from the largest positive residual column of
  // Y and zeroes the partner column so the objective is unchanged.
  void rescue(const Matrix& Y, Matrix& A, Matrix& B) {
    for (Index k = 0; k < A.cols(); ++k) {
      if (A.col(k).cwiseAbs().maxCoeff() > 0.0) continue;
      const Matrix P = (Y - A * B.transpose()).cwiseMax(0.0);
      Index j = 0;
      const double best = P.colwise().norm().maxCoeff(&j);
      if (!(best > 0.0)) return;
      A.col(k) = P.col(j) / best;
      B.col(k).setZero();
      if (rescues_++ < kMaxRescueNotes) {
        diagnostics_.push_back("hals: zero column " + std::to_string(k) + " reseeded");
      }
    }
  }

  Matrix Xt_;
  int rescues_ = 0;
};

class MultStepper final : public Stepper {
 public:
  MultStepper(const Matrix& X, const SolverParams& p) : Stepper(X), floor_(p.mult_floor) {}

  void prepare(FactorPair& F) const {
    F.U = F.U.cwiseMax(floor_);
    F.V = F.V.cwiseMax(floor_);
  }

  void step(FactorPair& F) override {
    update(X_ * F.V, F.U * (F.V.transpose() * F.V), F.U);
    update(X_.transpose() * F.U, F.V * (F.U.transpose() * F.U), F.V);
  }

 private:
  static void update(const Matrix& num, const Matrix& den, Matrix& A) {
    for (Index i = 0; i < A.rows(); ++i) {
      for (Index k = 0; k < A.cols(); ++k) {
        if (den(i, k) > 0.0) A(i, k) *= num(i, k) / den(i, k);
      }
    }
  }

  double floor_;
};

class MaskedMultStepper final : public Stepper {
 public:
  MaskedMultStepper(const Matrix& X, const ObservationMask& M, const SolverParams& p)
      : Stepper(X), M_(M), floor_(p.mult_floor), MX_(X.cwiseProduct(M.values())) {}

  void prepare(FactorPair& F) const {
    F.U = F.U.cwiseMax(floor_);
    F.V = F.V.cwiseMax(floor_);
  }

  void step(FactorPair& F) override {
    Matrix P = (F.U * F.V.transpose()).cwiseProduct(M_.values());
    update(MX_ * F.V, P * F.V, F.U);
    P = (F.U * F.V.transpose()).cwiseProduct(M_.values());
    update(MX_.transpose() * F.U, P.transpose() * F.U, F.V);
  }

  double objective(const FactorPair& F) const override { return masked_objective(X_, F, M_); }
  KktResiduals kkt(const FactorPair& F) const override { return kkt_residuals(X_, F, M_); }

 private:
  static void update(const Matrix& num, const Matrix& den, Matrix& A) {
    for (Index i = 0; i < A.rows(); ++i) {
      for (Index k = 0; k < A.cols(); ++k) {
        if (den(i, k) > 0.0) A(i, k) *= num(i, k) / den(i, k);
      }
    }
  }

  const ObservationMask& M_;
  double floor_;
  Matrix MX_;
};

// Alternating projected gradient. `row_start` selects the initial trial step:
// the previous accepted step (grad_mult) or the row-averaged optimal step.
class ProjectedGradientStepper final : public Stepper {
 public:
  ProjectedGradientStepper(const Matrix& X, const SolverParams& p, bool row_start)
      : Stepper(X), sigma_(p.armijo_sigma), row_start_(row_start) {}

  void step(FactorPair& F) override {
    block(X_ * F.V, F.V.transpose() * F.V, F.U, alpha_u_);
    block(X_.transpose() * F.U, F.U.transpose() * F.U, F.V, alpha_v_);
  }

 private:
  void block(const Matrix& YB, const Matrix& G, Matrix& A, double& alpha) const {
    const Matrix grad = A * G - YB;
    double trial = alpha;
    if (row_start_) {
      double sum = 0.0;
      long count = 0;
      for (Index i = 0; i < grad.rows(); ++i) {
        const RowVector g = grad.row(i);
        const double den = g.dot(g * G);
        if (den > 0.0) {
          sum += g.squaredNorm() / den;
          ++count;
        }
      }
      if (count == 0) return;
      trial = sum / static_cast<double>(count);
    }
    auto change = [&](double a, Matrix& next) {
      next = (A - a * grad).cwiseMax(0.0);
      const Matrix D = next - A;
      const double lin = (grad.cwiseProduct(D)).sum();
      const double quad = 0.5 * (D * G).cwiseProduct(D).sum();
      return std::pair{lin + quad, lin};
    };
    Matrix next;
    for (int h = 0; h < 60; ++h, trial *= 0.5) {
      const auto [delta, lin] = change(trial, next);
      if (lin == 0.0) return;  // projected gradient vanishes
      if (delta <= sigma_ * lin) {
        if (!row_start_) {
          // Try a longer step while it keeps satisfying the condition.
          Matrix longer;
          double a = trial;
          for (int g = 0; g < 20; ++g) {
            const auto [d2, l2] = change(2.0 * a, longer);
            if (!(d2 <= sigma_ * l2) || d2 > delta) break;
            a *= 2.0;
            next = longer;
          }
          alpha = a;
        }
        A = next;
        return;
      }
    }
  }

  double sigma_;
  bool row_start_;
  double alpha_u_ = 1.0;
  double alpha_v_ = 1.0;
};

class AlsStepper final : public Stepper {
 public:
  explicit AlsStepper(const Matrix& X) : Stepper(X) {}

  void step(FactorPair& F) override {
    bool ridged = false;
    F.U = solve_spd_right(F.V.transpose() * F.V, X_ * F.V, ridged).cwiseMax(0.0);
    F.V = solve_spd_right(F.U.transpose() * F.U, X_.transpose() * F.U, ridged).cwiseMax(0.0);
    if (ridged && !noted_) {
      diagnostics_.push_back("als_projected: singular normal equations; ridge added");
      noted_ = true;
    }
  }

 private:
  bool noted_ = false;
};

class AoAdmmStepper final : public Stepper {
 public:
  AoAdmmStepper(const Matrix& X, const FactorPair& F, const SolverParams& p)
      : Stepper(X),
        inner_(p.ao_admm_inner),
        u_{F.U, Matrix::Zero(F.U.rows(), F.U.cols())},
        v_{F.V, Matrix::Zero(F.V.rows(), F.V.cols())} {}

  void step(FactorPair& F) override {
    u_.H = F.U;
    bool ridged = nnls_admm(F.V.transpose() * F.V, X_ * F.V, u_, inner_);
    F.U = u_.H;
    v_.H = F.V;
    ridged |= nnls_admm(F.U.transpose() * F.U, X_.transpose() * F.U, v_, inner_);
    F.V = v_.H;
    if (ridged && !noted_) {
      diagnostics_.push_back("ao_admm: Cholesky failed; ridge added");
      noted_ = true;
    }
  }

 private:
  int inner_;
  NnlsAdmmState u_;
  NnlsAdmmState v_;
  bool noted_ = false;
};

class NmfAdmmStepper final : public Stepper {
 public:
  NmfAdmmStepper(const Matrix& X, const FactorPair& F, const SolverParams& p)
      : Stepper(X),
        rho_(p.nmf_admm_rho),
        U_(F.U),
        V_(F.V),
        Y_(X),
        aY_(Matrix::Zero(X.rows(), X.cols())),
        aU_(Matrix::Zero(F.U.rows(), F.U.cols())),
        aV_(Matrix::Zero(F.V.rows(), F.V.cols())) {
    if (!(rho_ > 0.0)) throw ValidationError("nmf_admm: rho must be positive");
  }

  void step(FactorPair& F) override {
    const Index r = F.rank();
    const Matrix I = Matrix::Identity(r, r);
    bool ridged = false;
    V_ = solve_spd_right(U_.transpose() * U_ + I,
                         Y_.transpose() * U_ + F.V + (aY_.transpose() * U_ - aV_) / rho_, ridged);
    U_ = solve_spd_right(V_.transpose() * V_ + I, Y_ * V_ + F.U + (aY_ * V_ - aU_) / rho_, ridged);
    const Matrix P = U_ * V_.transpose();
    Y_ = (X_ + rho_ * P - aY_) / (1.0 + rho_);
    F.U = (U_ + aU_ / rho_).cwiseMax(0.0);
    F.V = (V_ + aV_ / rho_).cwiseMax(0.0);
    aY_ += rho_ * (Y_ - P);
    aU_ += rho_ * (U_ - F.U);
    aV_ += rho_ * (V_ - F.V);
    if (ridged && !noted_) {
      diagnostics_.push_back("nmf_admm: Cholesky failed; ridge added");
      noted_ = true;
    }
  }

 private:
  double rho_;
  Matrix U_, V_, Y_, aY_, aU_, aV_;
  bool noted_ = false;
};

SolveResult run(const Matrix& X, FactorPair F, Stepper& s, const StopRule& rule) {
  check_problem(X, F);
  return drive(X, std::move(F), s, rule);
}

}  // namespace

// ---------------------------------------------------------------------------

std::string algorithm_name(Algorithm a) {
  switch (a) {
    case Algorithm::hals: return "hals";
    case Algorithm::mult: return "mult";
    case Algorithm::grad_mult: return "grad_mult";
    case Algorithm::als_projected: return "als_projected";
    case Algorithm::ao_admm: return "ao_admm";
    case Algorithm::nmf_admm: return "nmf_admm";
  }
  return "hals";
}

Algorithm parse_algorithm(const std::string& name) {
  for (Algorithm a : all_algorithms()) {
    if (algorithm_name(a) == name) return a;
  }
  throw ValidationError("unknown algorithm '" + name + "'");
}

const std::vector<Algorithm>& all_algorithms() {
  static const std::vector<Algorithm> all = {Algorithm::hals,          Algorithm::mult,
                                             Algorithm::grad_mult,     Algorithm::als_projected,
                                             Algorithm::ao_admm,       Algorithm::nmf_admm};
  return all;
}

std::string termination_name(Termination t) {
  switch (t) {
    case Termination::budget: return "budget";
    case Termination::target_reached: return "target_reached";
    case Termination::kkt_converged: return "kkt_converged";
    case Termination::stagnated: return "stagnated";
    case Termination::iteration_cap: return "iteration_cap";
    case Termination::error: return "error";
  }
  return "error";
}

Termination parse_termination(const std::string& name) {
  for (Termination t : {Termination::budget, Termination::target_reached,
                        Termination::kkt_converged, Termination::stagnated,
                        Termination::iteration_cap, Termination::error}) {
    if (termination_name(t) == name) return t;
  }
  throw ValidationError("unknown termination '" + name + "'");
}

bool StagnationDetector::update(double objective) {
  if (window_ <= 0) return false;
  if (!best_ || objective < *best_ - kStagnationRelTol * std::abs(*best_)) {
    best_ = best_ ? std::min(*best_, objective) : objective;
    count_ = 0;
    return false;
  }
  ++count_;
  return count_ >= window_;
}

double Stepper::objective(const FactorPair& F) const { return frobenius_objective(X_, F); }

KktResiduals Stepper::kkt(const FactorPair& F) const { return kkt_residuals(X_, F); }

SolveResult drive(const Matrix& X, FactorPair F, Stepper& stepper, const StopRule& rule) {
  (void)X;
  const auto t0 = Clock::now();
  auto elapsed = [&] { return rule.elapsed_offset_s + seconds_since(t0); };
  const long every = std::max<long>(1, rule.trace_every);

  SolveResult out;
  double obj = stepper.objective(F);
  out.trace.add(elapsed(), obj, 0);
  StagnationDetector stagnation(rule.stagnation_window);
  stagnation.update(obj);

  bool done = false;
  if (rule.kkt_tol && stepper.kkt(F).satisfied(*rule.kkt_tol)) {
    out.termination = Termination::kkt_converged;
    done = true;
  } else if (rule.max_iters <= 0) {
    out.termination = Termination::iteration_cap;
    done = true;
  }

  long it = 0;
  while (!done) {
    FactorPair previous = F;
    try {
      stepper.step(F);
      if (!F.U.allFinite() || !F.V.allFinite()) {
        throw NumericalError("non-finite factor entries");
      }
    } catch (const Error& e) {
      F = std::move(previous);
      out.termination = Termination::error;
      out.diagnostics.push_back(std::string("aborted at iteration ") + std::to_string(it + 1) +
                                ": " + e.what());
      break;
    }
    ++it;
    obj = stepper.objective(F);
    const double now = elapsed();
    if (it % every == 0) out.trace.add(now, obj, it);

    const bool stagnated = stagnation.update(obj);
    if (rule.error_target && obj <= *rule.error_target) {
      out.termination = Termination::target_reached;
    } else if (rule.kkt_tol && stepper.kkt(F).satisfied(*rule.kkt_tol)) {
      out.termination = Termination::kkt_converged;
    } else if (stagnated) {
      out.termination = Termination::stagnated;
    } else if (rule.time_budget_s && now >= *rule.time_budget_s) {
      out.termination = Termination::budget;
    } else if (it >= rule.max_iters) {
      out.termination = Termination::iteration_cap;
    } else {
      continue;
    }
    done = true;
  }
  if (out.trace.back().iteration != it) out.trace.add(elapsed(), obj, it);
  out.iterations = it;
  out.runtime_s = elapsed();
  out.final_objective = stepper.objective(F);
  out.factors = std::move(F);
  for (auto& d : stepper.diagnostics()) out.diagnostics.push_back(d);
  return out;
}

SolverParams params_from_map(const std::map<std::string, double>& inner) {
  SolverParams p;
  for (const auto& [key, value] : inner) {
    if (key == "ao_admm_inner") {
      if (!(value >= 1.0)) throw ValidationError("ao_admm_inner must be >= 1");
      p.ao_admm_inner = static_cast<int>(value);
    } else if (key == "nmf_admm_rho") {
      p.nmf_admm_rho = value;
    } else if (key == "armijo_sigma") {
      p.armijo_sigma = value;
    } else if (key == "mult_floor") {
      p.mult_floor = value;
    } else {
      throw ValidationError("unknown solver parameter '" + key + "'");
    }
  }
  return p;
}

std::unique_ptr<Stepper> make_stepper(Algorithm a, const Matrix& X, const FactorPair& F,
                                      const SolverParams& params) {
  switch (a) {
    case Algorithm::hals: return std::make_unique<HalsStepper>(X);
    case Algorithm::mult: return std::make_unique<MultStepper>(X, params);
    case Algorithm::grad_mult:
      return std::make_unique<ProjectedGradientStepper>(X, params, false);
    case Algorithm::als_projected: return std::make_unique<AlsStepper>(X);
    case Algorithm::ao_admm: return std::make_unique<AoAdmmStepper>(X, F, params);
    case Algorithm::nmf_admm: return std::make_unique<NmfAdmmStepper>(X, F, params);
  }
  throw ValidationError("unknown algorithm");
}

SolveResult hals(const Matrix& X, const FactorPair& F, const StopRule& rule) {
  HalsStepper s(X);
  return run(X, F, s, rule);
}

SolveResult mult(const Matrix& X, const FactorPair& F, const StopRule& rule,
                 const SolverParams& params) {
  check_problem(X, F);
  MultStepper s(X, params);
  FactorPair start = F;
  s.prepare(start);
  return drive(X, std::move(start), s, rule);
}

SolveResult grad_mult(const Matrix& X, const FactorPair& F, const StopRule& rule,
                      const SolverParams& params) {
  ProjectedGradientStepper s(X, params, false);
  return run(X, F, s, rule);
}

SolveResult als_projected(const Matrix& X, const FactorPair& F, const StopRule& rule) {
  AlsStepper s(X);
  return run(X, F, s, rule);
}

SolveResult ao_admm(const Matrix& X, const FactorPair& F, const StopRule& rule,
                    const SolverParams& params) {
  check_problem(X, F);
  AoAdmmStepper s(X, F, params);
  return drive(X, F, s, rule);
}

SolveResult nmf_admm(const Matrix& X, const FactorPair& F, const StopRule& rule,
                     const SolverParams& params) {
  check_problem(X, F);
  NmfAdmmStepper s(X, F, params);
  return drive(X, F, s, rule);
}

SolveResult solve(Algorithm a, const Matrix& X, const FactorPair& F, const StopRule& rule,
                  const SolverParams& params) {
  switch (a) {
    case Algorithm::hals: return hals(X, F, rule);
    case Algorithm::mult: return mult(X, F, rule, params);
    case Algorithm::grad_mult: return grad_mult(X, F, rule, params);
    case Algorithm::als_projected: return als_projected(X, F, rule);
    case Algorithm::ao_admm: return ao_admm(X, F, rule, params);
    case Algorithm::nmf_admm: return nmf_admm(X, F, rule, params);
  }
  throw ValidationError("unknown algorithm");
}

SolveResult masked_mult(const Matrix& X, const ObservationMask& observed, const FactorPair& F,
                        const StopRule& rule, const SolverParams& params) {
  F.validate();
  if (observed.rows() != X.rows() || observed.cols() != X.cols()) {
    throw DimensionError("masked_mult: mask shape differs from X");
  }
  if (!F.feasible()) throw ValidationError("masked_mult: initial factors must be nonnegative");
  MaskedMultStepper s(X, observed, params);
  FactorPair start = F;
  s.prepare(start);
  return drive(X, std::move(start), s, rule);
}

SolveResult projected_gd(const Matrix& X, const FactorPair& F, const StopRule& rule,
                         const SolverParams& params) {
  ProjectedGradientStepper s(X, params, true);
  return run(X, F, s, rule);
}

bool nnls_admm(const Matrix& gram, const Matrix& cross, NnlsAdmmState& state, int iters) {
  const Index r = gram.rows();
  if (gram.cols() != r || cross.cols() != r || state.H.cols() != r ||
      state.H.rows() != cross.rows()) {
    throw DimensionError("nnls_admm: shapes disagree");
  }
  if (state.dual.rows() != state.H.rows() || state.dual.cols() != r) {
    state.dual = Matrix::Zero(state.H.rows(), r);
  }
  double rho = gram.trace() / static_cast<double>(r);
  if (!(rho > 0.0)) rho = 1.0;
  const Eigen::MatrixXd S = gram + rho * Matrix::Identity(r, r);
  Eigen::LLT<Eigen::MatrixXd> llt(S);
  bool ridged = false;
  if (llt.info() != Eigen::Success) {
    ridged = true;
    llt.compute(S + 1e-10 * std::max(S.trace(), 1e-300) * Eigen::MatrixXd::Identity(r, r));
  }
  for (int k = 0; k < iters; ++k) {
    const Eigen::MatrixXd rhs = (cross + rho * (state.H + state.dual)).transpose();
    const Matrix tilde = llt.solve(rhs).transpose();
    state.H = (tilde - state.dual).cwiseMax(0.0);
    state.dual += state.H - tilde;
  }
  return ridged;
}

// ---------------------------------------------------------------------------

FactorPair random_init(Index n, Index m, Index r, RngSeed seed) {
  if (n < 1 || m < 1 || r < 1) throw ValidationError("random_init: dimensions must be >= 1");
  Rng rng(seed);
  FactorPair F;
  F.U = rng.uniform_matrix(n, r);
  F.V = rng.uniform_matrix(m, r);
  return F;
}

FactorPair random_init(const Matrix& X, Index r, RngSeed seed) {
  FactorPair F = random_init(X.rows(), X.cols(), r, seed);
  const double target = frobenius_norm(X);
  const double have = frobenius_norm(F.product());
  if (target > 0.0 && have > 0.0) {
    const double s = std::sqrt(target / have);
    F.U *= s;
    F.V *= s;
  }
  return F;
}

FactorPair nndsvd_init(const SvdFactors& svd) {
  const Index r = svd.rank();
  FactorPair F{Matrix::Zero(svd.Ustar.rows(), r), Matrix::Zero(svd.Vstar.rows(), r)};
  for (Index k = 0; k < r; ++k) {
    const double s = svd.singular_values(k);
    if (!(s > 0.0)) continue;
    const double root = std::sqrt(s);
    const Vector x = svd.Ustar.col(k) / root;
    const Vector y = svd.Vstar.col(k) / root;
    if (k == 0) {
      F.U.col(0) = root * x.cwiseAbs();
      F.V.col(0) = root * y.cwiseAbs();
      continue;
    }
    const Vector xp = x.cwiseMax(0.0), xn = (-x).cwiseMax(0.0);
    const Vector yp = y.cwiseMax(0.0), yn = (-y).cwiseMax(0.0);
    const double mp = xp.norm() * yp.norm();
    const double mn = xn.norm() * yn.norm();
    const bool positive = mp >= mn;
    const double mass = positive ? mp : mn;
    if (!(mass > 0.0)) continue;
    const Vector& a = positive ? xp : xn;
    const Vector& b = positive ? yp : yn;
    const double scale = std::sqrt(s * mass);
    F.U.col(k) = scale * a / a.norm();
    F.V.col(k) = scale * b / b.norm();
  }
  return F;
}

std::string InitSpec::label() const {
  switch (kind) {
    case Kind::random: return "random(" + std::to_string(seed.value) + ")";
    case Kind::nndsvd: return "nndsvd";
    case Kind::given: return "given";
  }
  return "given";
}

FactorPair make_init(const Matrix& X, Index r, const InitSpec& spec) {
  switch (spec.kind) {
    case InitSpec::Kind::random: return random_init(X, r, spec.seed);
    case InitSpec::Kind::nndsvd: return nndsvd_init(truncated_svd(X, r));
    case InitSpec::Kind::given:
      if (!spec.given) throw ValidationError("init 'given' without factors");
      return *spec.given;
  }
  throw ValidationError("unknown init kind");
}

}  // namespace enmf
