#include "enmf/core.hpp"

#include <cmath>
#include <limits>

namespace enmf {

namespace {

// Neumaier summation over a sequence of addends produced by `term(k)`.
template <typename Term>
double compensated_sum(Index count, Term term) {
  double sum = 0.0;
  double carry = 0.0;
  for (Index k = 0; k < count; ++k) {
    const double x = term(k);
    const double t = sum + x;
    if (std::abs(sum) >= std::abs(x)) {
      carry += (sum - t) + x;
    } else {
      carry += (x - t) + sum;
    }
    sum = t;
  }
  return sum + carry;
}

void check_factor_shapes(const Matrix& X, const FactorPair& F) {
  F.validate();
  if (F.U.rows() != X.rows() || F.V.rows() != X.cols()) {
    throw DimensionError("factor shapes (" + std::to_string(F.U.rows()) + "x" +
                         std::to_string(F.U.cols()) + ", " + std::to_string(F.V.rows()) + "x" +
                         std::to_string(F.V.cols()) + ") incompatible with data " +
                         std::to_string(X.rows()) + "x" + std::to_string(X.cols()));
  }
}

}  // namespace

void FactorPair::validate() const {
  if (U.cols() < 1 || U.cols() != V.cols()) {
    throw DimensionError("factor ranks disagree: U has " + std::to_string(U.cols()) +
                         " columns, V has " + std::to_string(V.cols()));
  }
}

bool FactorPair::feasible() const {
  return (U.size() == 0 || U.minCoeff() >= 0.0) && (V.size() == 0 || V.minCoeff() >= 0.0);
}

SignMask SignMask::of(const Matrix& target) {
  return SignMask((target.array() >= 0.0).cast<double>().matrix());
}

bool SignMask::all_ones() const { return (mask_.array() != 0.0).all(); }

ObservationMask ObservationMask::all_ones(Index rows, Index cols) {
  return ObservationMask(Matrix::Ones(rows, cols), rows * cols);
}

ObservationMask ObservationMask::from_matrix(Matrix m) {
  Index observed = 0;
  for (Index i = 0; i < m.rows(); ++i) {
    for (Index j = 0; j < m.cols(); ++j) {
      const double v = m(i, j);
      if (v == 1.0) {
        ++observed;
      } else if (v != 0.0) {
        throw ValidationError("observation mask entry (" + std::to_string(i) + "," +
                              std::to_string(j) + ") is not 0 or 1");
      }
    }
  }
  return ObservationMask(std::move(m), observed);
}

ObservationMask ObservationMask::transposed() const {
  return ObservationMask(mask_.transpose(), observed_);
}

double Rng::uniform() {
  // 53 random mantissa bits; identical across platforms for a given engine.
  return static_cast<double>(engine_() >> 11) * 0x1.0p-53;
}

double Rng::normal() { return normal_(engine_); }

Matrix Rng::uniform_matrix(Index rows, Index cols) {
  Matrix m(rows, cols);
  for (Index i = 0; i < rows; ++i) {
    for (Index j = 0; j < cols; ++j) m(i, j) = uniform();
  }
  return m;
}

Matrix Rng::normal_matrix(Index rows, Index cols) {
  Matrix m(rows, cols);
  for (Index i = 0; i < rows; ++i) {
    for (Index j = 0; j < cols; ++j) m(i, j) = normal();
  }
  return m;
}

void ConvergenceTrace::add(double wall_clock_s, double objective, long iteration) {
  if (!samples_.empty()) {
    const TraceSample& last = samples_.back();
    if (wall_clock_s <= last.wall_clock_s) {
      wall_clock_s = std::nextafter(last.wall_clock_s, std::numeric_limits<double>::infinity());
    }
    if (iteration <= last.iteration) iteration = last.iteration + 1;
  }
  samples_.push_back({wall_clock_s, objective, iteration});
}

void ConvergenceTrace::append_shifted(const ConvergenceTrace& other, double offset_s,
                                      long iter_offset) {
  for (const TraceSample& s : other.samples()) {
    add(s.wall_clock_s + offset_s, s.objective, s.iteration + iter_offset);
  }
}

double sum_of_squares(const Matrix& A) {
  const double* data = A.data();
  return compensated_sum(A.size(), [data](Index k) { return data[k] * data[k]; });
}

double frobenius_norm(const Matrix& A) { return std::sqrt(sum_of_squares(A)); }

double frobenius_objective(const Matrix& X, const FactorPair& F) {
  check_factor_shapes(X, F);
  const Matrix residual = X - F.U * F.V.transpose();
  return frobenius_norm(residual);
}

std::optional<double> relative_error(double objective, double svd_baseline) {
  if (svd_baseline < 0.0) throw ValidationError("svd baseline must be nonnegative");
  if (svd_baseline == 0.0) {
    if (objective == 0.0) return 1.0;
    return std::nullopt;
  }
  return objective / svd_baseline;
}

std::optional<double> relative_error(const Matrix& X, const FactorPair& F, double svd_baseline) {
  return relative_error(frobenius_objective(X, F), svd_baseline);
}

double masked_objective(const Matrix& X, const FactorPair& F, const ObservationMask& M) {
  check_factor_shapes(X, F);
  if (M.rows() != X.rows() || M.cols() != X.cols()) {
    throw DimensionError("observation mask shape differs from data shape");
  }
  const Matrix approx = F.U * F.V.transpose();
  const Index cols = X.cols();
  return std::sqrt(compensated_sum(X.size(), [&](Index k) {
    const Index i = k / cols;
    const Index j = k % cols;
    if (!M.observed(i, j)) return 0.0;
    const double d = X(i, j) - approx(i, j);
    return d * d;
  }));
}

double negativity(const Matrix& W) {
  const double* data = W.data();
  return compensated_sum(W.size(), [data](Index k) { return data[k] < 0.0 ? -data[k] : 0.0; });
}

Matrix stack(const Matrix& top, const Matrix& bottom) {
  if (top.cols() != bottom.cols()) throw DimensionError("stack: column counts differ");
  Matrix out(top.rows() + bottom.rows(), top.cols());
  out.topRows(top.rows()) = top;
  out.bottomRows(bottom.rows()) = bottom;
  return out;
}

void require_finite(const Matrix& A, const char* what) {
  if (!A.allFinite()) throw NumericalError(std::string("non-finite values in ") + what);
}

void require_nonnegative(const Matrix& A, const char* what) {
  if (A.size() > 0 && A.minCoeff() < 0.0) {
    throw ValidationError(std::string(what) + " contains negative entries");
  }
}

}  // namespace enmf
