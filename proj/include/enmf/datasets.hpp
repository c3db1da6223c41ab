#pragma once

// Synthetic dataset families and file-backed dataset ingestion.

#include "enmf/core.hpp"
#include "enmf/matrix_io.hpp"

#include <filesystem>
#include <limits>
#include <string>
#include <variant>
#include <vector>

namespace enmf {

struct ExactSpec {
  Index n = 0, m = 0, r = 0;
  double sparsity = 0.0;
  RngSeed seed{};
};

struct DenseSnrSpec {
  Index n = 0, k = 0, m = 0;
  double snr_db = std::numeric_limits<double>::infinity();
  RngSeed seed{};
};

struct FileSpec {
  std::filesystem::path path;
  MatrixFormat format = MatrixFormat::matrix_market;
};

struct DatasetSpec {
  std::variant<ExactSpec, DenseSnrSpec, FileSpec> kind;
  std::string id;
};

/// X = U V^T with U, V ~ U(0,1) and a fraction `sparsity` of factor entries zeroed.
struct ExactDataset {
  Matrix X;
  Matrix U;  // ground truth, n x r
  Matrix V;  // ground truth, m x r
  int regenerated_columns = 0;
  std::vector<std::string> warnings;
};

ExactDataset gen_exact(Index n, Index m, Index r, double sparsity, RngSeed seed);

/// X = max(W H + N, 0) with N scaled so 10 log10(||WH||^2 / ||N||^2) == snr_db.
struct DenseSnrDataset {
  Matrix X;
  Matrix W;       // n x k
  Matrix H;       // k x m
  Matrix noise;   // n x m (zero when snr_db is +inf)
  double tau = 0.0;             // per-entry noise scale before exact rescaling
  double realized_snr_db = 0.0; // before clamping
  Index clamp_count = 0;        // entries of W H + N clamped to zero
};

DenseSnrDataset gen_dense_snr(Index n, Index k, Index m, double snr_db, RngSeed seed);

/// Realized SNR in dB of signal vs noise (Frobenius energy ratio).
double snr_db(const Matrix& signal, const Matrix& noise);

struct MaterializedDataset {
  std::string id;
  Matrix X;
  std::optional<FactorPair> ground_truth;
  double realized_snr_db = std::numeric_limits<double>::quiet_NaN();
  Index clamp_count = 0;
  std::vector<std::string> warnings;
};

/// Generates or loads the matrix named by `spec`. File inputs must be nonnegative.
MaterializedDataset materialize(const DatasetSpec& spec);

}  // namespace enmf
