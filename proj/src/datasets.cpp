#include "enmf/datasets.hpp"

#include <cmath>

namespace enmf {

namespace {

constexpr int kMaxColumnRetries = 100;

// Samples an (rows x r) U(0,1) factor and zeroes each entry with probability s.
// All-zero columns are resampled.
Matrix sparse_uniform_factor(Rng& rng, Index rows, Index r, double s, const char* name,
                             int& regenerated, std::vector<std::string>& warnings) {
  Matrix F(rows, r);
  for (Index i = 0; i < rows; ++i) {
    for (Index j = 0; j < r; ++j) {
      const double value = rng.uniform();
      F(i, j) = rng.bernoulli(s) ? 0.0 : value;
    }
  }
  for (Index j = 0; j < r; ++j) {
    int retries = 0;
    while (F.col(j).maxCoeff() == 0.0 && retries < kMaxColumnRetries) {
      for (Index i = 0; i < rows; ++i) {
        const double value = rng.uniform();
        F(i, j) = rng.bernoulli(s) ? 0.0 : value;
      }
      ++retries;
    }
    if (retries > 0) {
      ++regenerated;
      warnings.push_back(std::string(name) + " column " + std::to_string(j) + " was all zero; " +
                         "regenerated " + std::to_string(retries) + " time(s)");
    }
    if (F.col(j).maxCoeff() == 0.0) {
      throw ValidationError(std::string(name) + " column " + std::to_string(j) +
                            " stayed all zero; sparsity too high");
    }
  }
  return F;
}

}  // namespace

ExactDataset gen_exact(Index n, Index m, Index r, double sparsity, RngSeed seed) {
  if (n < 1 || m < 1 || r < 1) throw ValidationError("gen_exact: dimensions must be >= 1");
  if (r > std::min(n, m)) throw ValidationError("gen_exact: r exceeds min(n, m)");
  if (!(sparsity >= 0.0 && sparsity < 1.0)) {
    throw ValidationError("gen_exact: sparsity must lie in [0, 1)");
  }
  Rng rng(seed);
  ExactDataset out;
  out.U = sparse_uniform_factor(rng, n, r, sparsity, "U", out.regenerated_columns, out.warnings);
  out.V = sparse_uniform_factor(rng, m, r, sparsity, "V", out.regenerated_columns, out.warnings);
  out.X = out.U * out.V.transpose();
  return out;
}

double snr_db(const Matrix& signal, const Matrix& noise) {
  return 10.0 * std::log10(sum_of_squares(signal) / sum_of_squares(noise));
}

DenseSnrDataset gen_dense_snr(Index n, Index k, Index m, double target_db, RngSeed seed) {
  if (n < 1 || m < 1 || k < 1) throw ValidationError("gen_dense_snr: dimensions must be >= 1");
  if (std::isnan(target_db)) throw ValidationError("gen_dense_snr: snr_db is NaN");
  Rng rng(seed);
  DenseSnrDataset out;
  out.W = rng.uniform_matrix(n, k);
  out.H = rng.uniform_matrix(k, m);
  const Matrix signal = out.W * out.H;
  if (std::isinf(target_db) && target_db > 0.0) {
    out.noise = Matrix::Zero(n, m);
    out.X = signal;
    out.realized_snr_db = target_db;
    return out;
  }
  const double signal_norm = frobenius_norm(signal);
  out.tau = signal_norm /
            (std::sqrt(static_cast<double>(n * m)) * std::pow(10.0, target_db / 20.0));
  Matrix noise = rng.normal_matrix(n, m) * out.tau;
  // Rescale so the energy ratio hits the request exactly.
  const double wanted = signal_norm / std::pow(10.0, target_db / 20.0);
  const double have = frobenius_norm(noise);
  if (have > 0.0) noise *= wanted / have;
  out.noise = std::move(noise);
  out.realized_snr_db = snr_db(signal, out.noise);
  out.X = signal + out.noise;
  for (Index i = 0; i < n; ++i) {
    for (Index j = 0; j < m; ++j) {
      if (out.X(i, j) < 0.0) {
        out.X(i, j) = 0.0;
        ++out.clamp_count;
      }
    }
  }
  return out;
}

MaterializedDataset materialize(const DatasetSpec& spec) {
  MaterializedDataset out;
  out.id = spec.id;
  if (const auto* e = std::get_if<ExactSpec>(&spec.kind)) {
    ExactDataset d = gen_exact(e->n, e->m, e->r, e->sparsity, e->seed);
    out.X = std::move(d.X);
    out.ground_truth = FactorPair{std::move(d.U), std::move(d.V)};
    out.warnings = std::move(d.warnings);
  } else if (const auto* s = std::get_if<DenseSnrSpec>(&spec.kind)) {
    DenseSnrDataset d = gen_dense_snr(s->n, s->k, s->m, s->snr_db, s->seed);
    out.X = std::move(d.X);
    out.realized_snr_db = d.realized_snr_db;
    out.clamp_count = d.clamp_count;
  } else {
    const auto& f = std::get<FileSpec>(spec.kind);
    out.X = read_matrix(f.path, f.format, ReadOptions{.require_nonnegative = true});
  }
  return out;
}

}  // namespace enmf
