#pragma once

// Shared numeric carriers, objectives and error types for the eNMF toolkit.

#include <Eigen/Dense>

#include <cstdint>
#include <optional>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

namespace enmf {

/// Dense real matrix in row-major storage. Holds data, factors and 0/1 masks.
using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Vector = Eigen::VectorXd;
using RowVector = Eigen::RowVectorXd;
using Index = Eigen::Index;

// ---------------------------------------------------------------------------
// Errors

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Shapes of operands do not agree.
class DimensionError : public Error {
 public:
  using Error::Error;
};

/// A value violates a precondition (negative data, rank out of range, ...).
class ValidationError : public Error {
 public:
  using Error::Error;
};

/// Non-finite intermediate or a numerical breakdown that cannot be recovered.
class NumericalError : public Error {
 public:
  using Error::Error;
};

/// Malformed input file. Carries the 1-based line (text) or byte offset (binary).
class ParseError : public Error {
 public:
  ParseError(const std::string& what, std::size_t location)
      : Error(what), location_(location) {}
  std::size_t location() const noexcept { return location_; }

 private:
  std::size_t location_;
};

/// IO failure (open/read/write) naming the offending path.
class IoError : public Error {
 public:
  using Error::Error;
};

// ---------------------------------------------------------------------------
// Domain types

/// Low-rank factors with X ~ U * V^T. U is n x r, V is m x r.
struct FactorPair {
  Matrix U;
  Matrix V;

  Index rank() const { return U.cols(); }
  /// Throws DimensionError unless U.cols() == V.cols() >= 1.
  void validate() const;
  /// True when every entry of U and V is >= 0.
  bool feasible() const;
  Matrix product() const { return U * V.transpose(); }
};

/// 0/1 mask with entry 1 exactly where the target was >= 0 when built.
class SignMask {
 public:
  static SignMask of(const Matrix& target);

  const Matrix& values() const { return mask_; }
  Index rows() const { return mask_.rows(); }
  Index cols() const { return mask_.cols(); }
  bool free(Index i, Index j) const { return mask_(i, j) != 0.0; }
  bool all_ones() const;

 private:
  explicit SignMask(Matrix m) : mask_(std::move(m)) {}
  Matrix mask_;
};

/// 0/1 mask of observed entries of a data matrix.
class ObservationMask {
 public:
  static ObservationMask all_ones(Index rows, Index cols);
  /// Validates that every entry is exactly 0 or 1.
  static ObservationMask from_matrix(Matrix m);

  const Matrix& values() const { return mask_; }
  Index rows() const { return mask_.rows(); }
  Index cols() const { return mask_.cols(); }
  Index observed_count() const { return observed_; }
  bool observed(Index i, Index j) const { return mask_(i, j) != 0.0; }
  bool full() const { return observed_ == mask_.size(); }
  ObservationMask transposed() const;

 private:
  ObservationMask(Matrix m, Index observed) : mask_(std::move(m)), observed_(observed) {}
  Matrix mask_;
  Index observed_ = 0;
};

/// Seed for every stochastic routine. Equal seeds give bit-identical output.
struct RngSeed {
  std::uint64_t value = 0;
};

/// Deterministic generator used by all random constructions.
class Rng {
 public:
  explicit Rng(RngSeed seed) : engine_(seed.value) {}

  double uniform();  // [0, 1)
  double normal();   // N(0, 1)
  bool bernoulli(double p) { return uniform() < p; }
  Matrix uniform_matrix(Index rows, Index cols);
  Matrix normal_matrix(Index rows, Index cols);

 private:
  std::mt19937_64 engine_;
  std::normal_distribution<double> normal_{0.0, 1.0};
};

/// One sample of a solver's progress.
struct TraceSample {
  double wall_clock_s = 0.0;
  double objective = 0.0;
  long iteration = 0;
};

/// Ordered samples; timestamps and iterations strictly increase.
class ConvergenceTrace {
 public:
  /// Appends a sample. A timestamp not strictly after the previous one is
  /// nudged forward to the next representable double.
  void add(double wall_clock_s, double objective, long iteration);
  const std::vector<TraceSample>& samples() const { return samples_; }
  bool empty() const { return samples_.empty(); }
  std::size_t size() const { return samples_.size(); }
  const TraceSample& back() const { return samples_.back(); }
  /// Shifts every timestamp by `offset_s` and iteration by `iter_offset`.
  void append_shifted(const ConvergenceTrace& other, double offset_s, long iter_offset);

 private:
  std::vector<TraceSample> samples_;
};

// ---------------------------------------------------------------------------
// Objectives and measures

/// ||X - U V^T||_F with compensated summation.
double frobenius_objective(const Matrix& X, const FactorPair& F);

/// frobenius_objective / svd_baseline. std::nullopt when the baseline is zero
/// and the numerator is not (exact-rank data; caller falls back to absolute).
std::optional<double> relative_error(const Matrix& X, const FactorPair& F, double svd_baseline);
std::optional<double> relative_error(double objective, double svd_baseline);

/// Frobenius norm of the residual restricted to observed entries.
double masked_objective(const Matrix& X, const FactorPair& F, const ObservationMask& M);

/// Sum of max(0, -w) over all entries.
double negativity(const Matrix& W);

/// Neumaier-compensated sum of squares of every entry.
double sum_of_squares(const Matrix& A);
double frobenius_norm(const Matrix& A);

/// Vertical stack [top; bottom].
Matrix stack(const Matrix& top, const Matrix& bottom);

/// Throws NumericalError naming `what` if any entry is NaN/Inf.
void require_finite(const Matrix& A, const char* what);

/// Throws ValidationError if any entry is negative.
void require_nonnegative(const Matrix& A, const char* what);

}  // namespace enmf
