#pragma once

// Benchmark engine: equal-time and equal-error protocols against a reference
// eNMF run, best-over-inits selection and report emission.

#include "enmf/datasets.hpp"
#include "enmf/pipeline.hpp"
#include "enmf/serialization.hpp"
#include "enmf/solvers.hpp"

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace enmf {

struct Protocol {
  enum class Kind { equal_time, equal_error } kind = Kind::equal_time;
  double budget_s = 0.0;  // equal_time
  double target = 0.0;    // equal_error, on the Frobenius objective
};

std::string protocol_name(Protocol::Kind k);

struct BenchmarkRecord {
  std::string dataset_id;
  std::string algorithm;
  std::string init_label;
  Index r = 0;
  Protocol protocol;
  double final_objective = 0.0;
  std::optional<double> relative_error;  // vs. the truncated-SVD residual
  double runtime_s = 0.0;
  long iterations = 0;
  KktResiduals kkt;
  Termination termination = Termination::iteration_cap;
  std::optional<PhaseTimings> phase_timings;
  bool best_over_inits = false;
  std::vector<std::string> diagnostics;
};

Json record_to_json(const BenchmarkRecord& r);
BenchmarkRecord record_from_json(const Json& j);

struct Competitor {
  Algorithm algorithm = Algorithm::hals;
  InitSpec init;
};

/// 5 random inits (seeds base..base+4) plus NNDSVD for every algorithm.
std::vector<Competitor> default_competitors(const std::vector<Algorithm>& algorithms,
                                            std::uint64_t base_seed, int random_inits = 5,
                                            bool nndsvd = true);

struct HarnessOptions {
  double kkt_tol = 1e-6;
  long stagnation_window = 1000;
  long max_iters = 100000000;
  // Safety cap on equal-error runs (termination "budget" if it fires).
  std::optional<double> time_cap_s;
  int threads = 1;
  SolverParams params;
};

struct RunOutput {
  std::vector<BenchmarkRecord> records;
  std::vector<ConvergenceTrace> traces;  // parallel to records
};

/// Record describing the reference eNMF run under `protocol`.
BenchmarkRecord reference_record(const std::string& dataset_id, Index r, const Protocol& protocol,
                                 const EnmfResult& reference);

/// Each competitor runs until its wall clock (initialization included)
/// reaches the reference total runtime, or earlier on KKT convergence.
/// The first record is the reference itself.
RunOutput run_equal_time(const Matrix& X, const std::string& dataset_id,
                         const std::vector<Competitor>& competitors, Index r,
                         const EnmfResult& reference, const HarnessOptions& options = {});

/// Each competitor runs until its objective reaches `target`, its KKT
/// residuals pass, or it stagnates. The first record is the reference.
RunOutput run_equal_error(const Matrix& X, const std::string& dataset_id,
                          const std::vector<Competitor>& competitors, Index r,
                          const EnmfResult& reference, double target,
                          const HarnessOptions& options = {});

/// Flags, per (dataset, r, protocol, algorithm), the record with the lowest
/// final objective (ties: lowest runtime).
void mark_best_over_inits(std::vector<BenchmarkRecord>& records);

/// Writes records.jsonl, traces/*.csv and summary.csv under out_dir.
void emit_reports(const RunOutput& output, const std::filesystem::path& out_dir);
std::vector<BenchmarkRecord> read_records(const std::filesystem::path& jsonl);

/// Sweep description consumed by the `benchmark` subcommand.
struct BenchmarkConfig {
  std::vector<DatasetSpec> datasets;
  std::vector<Index> ranks;
  std::vector<Algorithm> algorithms;
  std::vector<Protocol::Kind> protocols = {Protocol::Kind::equal_time,
                                           Protocol::Kind::equal_error};
  int random_inits = 5;
  bool nndsvd = true;
  std::uint64_t seed = 0;
  PipelineConfig pipeline;  // r is overridden per rank
  HarnessOptions options;
};

BenchmarkConfig benchmark_config_from_json(const Json& j);
RunOutput run_benchmark(const BenchmarkConfig& config);

}  // namespace enmf
