// Command-line front end: dataset generation, factorization, benchmarking,
// KKT certification, equivalence comparison and standalone rotations.

#include "enmf/analysis.hpp"
#include "enmf/datasets.hpp"
#include "enmf/harness.hpp"
#include "enmf/matrix_io.hpp"
#include "enmf/pipeline.hpp"
#include "enmf/rotation.hpp"
#include "enmf/serialization.hpp"
#include "enmf/solvers.hpp"

#include <CLI11.hpp>

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <unistd.h>

namespace fs = std::filesystem;
using namespace enmf;

namespace {

enum ExitCode {
  kOk = 0,
  kFailure = 1,
  kUsage = 2,
  kValidation = 3,
  kDimension = 4,
  kParse = 5,
  kIo = 6,
  kNumerical = 7,
  kNotCertified = 8,
};

std::string num(double x) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.6g", x);
  return buf;
}

bool use_color() { return std::getenv("NO_COLOR") == nullptr && isatty(STDERR_FILENO); }

void status(const std::string& tag, const std::string& message, bool good) {
  if (use_color()) {
    std::cerr << (good ? "\033[32m" : "\033[31m") << tag << "\033[0m " << message << '\n';
  } else {
    std::cerr << tag << ' ' << message << '\n';
  }
}

struct Common {
  std::uint64_t seed = 0;
  std::string out;
  std::string format = "mtx";
  int threads = 1;
};

void add_common(CLI::App* cmd, Common& c) {
  cmd->add_option("--seed", c.seed, "Random seed");
  cmd->add_option("--out", c.out, "Output directory (reports go to stdout when empty)");
  cmd->add_option("--format", c.format, "Matrix output format: mtx, csv or bin")
      ->check(CLI::IsMember({"mtx", "matrix_market", "csv", "bin", "binary"}));
  cmd->add_option("--threads", c.threads, "Worker threads")->check(CLI::PositiveNumber);
}

std::string extension(MatrixFormat f) {
  switch (f) {
    case MatrixFormat::matrix_market: return ".mtx";
    case MatrixFormat::csv: return ".csv";
    case MatrixFormat::binary: return ".bin";
  }
  return ".mtx";
}

fs::path ensure_dir(const std::string& dir) {
  fs::path p = dir.empty() ? fs::path(".") : fs::path(dir);
  std::error_code ec;
  fs::create_directories(p, ec);
  if (ec) throw IoError("cannot create " + p.string() + ": " + ec.message());
  return p;
}

Matrix load(const std::string& path, bool nonnegative = false) {
  ReadOptions options;
  options.require_nonnegative = nonnegative;
  return read_matrix(path, format_from_extension(path), options);
}

void save(const Matrix& M, const fs::path& dir, const std::string& stem, const Common& c) {
  const MatrixFormat f = parse_format(c.format);
  write_matrix(M, dir / (stem + extension(f)), f);
}

// Writes `j` to <out>/<name> when --out is set, otherwise to stdout.
void emit_json(const Json& j, const Common& c, const std::string& name) {
  if (c.out.empty()) {
    std::cout << j.dump(2) << '\n';
    return;
  }
  const fs::path path = ensure_dir(c.out) / name;
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path.string());
  out << j.dump(2) << '\n';
}

void write_trace(const ConvergenceTrace& trace, const fs::path& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path.string());
  out.precision(17);
  out << "wall_clock_s,objective,iteration\n";
  for (const auto& s : trace.samples()) {
    out << s.wall_clock_s << ',' << s.objective << ',' << s.iteration << '\n';
  }
}

Json trace_json(const ConvergenceTrace& trace) {
  Json a = Json::array();
  for (const auto& s : trace.samples()) {
    a.push_back({number_to_json(s.wall_clock_s), number_to_json(s.objective), s.iteration});
  }
  return a;
}

// ---------------------------------------------------------------------------

struct GenerateArgs {
  std::string spec_file;
  std::string kind = "exact";
  std::string id;
  Index n = 100, m = 100, r = 10, k = 10;
  double sparsity = 0.0;
  double snr = std::numeric_limits<double>::infinity();
};

int cmd_generate(const GenerateArgs& a, const Common& c) {
  DatasetSpec spec;
  if (!a.spec_file.empty()) {
    spec = read_json_file(a.spec_file).get<DatasetSpec>();
  } else if (a.kind == "exact") {
    spec.kind = ExactSpec{a.n, a.m, a.r, a.sparsity, RngSeed{c.seed}};
  } else if (a.kind == "dense_snr") {
    spec.kind = DenseSnrSpec{a.n, a.k, a.m, a.snr, RngSeed{c.seed}};
  } else {
    throw ValidationError("unknown dataset kind '" + a.kind + "'");
  }
  if (spec.id.empty()) spec.id = a.id.empty() ? a.kind : a.id;
  const MaterializedDataset data = materialize(spec);
  const fs::path dir = ensure_dir(c.out);
  save(data.X, dir, "X", c);
  if (data.ground_truth) {
    save(data.ground_truth->U, dir, "U_true", c);
    save(data.ground_truth->V, dir, "V_true", c);
  }
  Json meta{{"id", data.id},
            {"spec", spec},
            {"rows", data.X.rows()},
            {"cols", data.X.cols()},
            {"realized_snr_db", number_to_json(data.realized_snr_db)},
            {"clamp_count", data.clamp_count},
            {"warnings", data.warnings}};
  std::ofstream(dir / "dataset.json") << meta.dump(2) << '\n';
  for (const auto& w : data.warnings) status("warning", w, false);
  status("ok", "wrote " + data.id + " to " + dir.string(), true);
  return kOk;
}

// ---------------------------------------------------------------------------

struct FactorizeArgs {
  std::string input;
  std::string mask;
  std::string algorithm = "enmf";
  std::string config;
  std::string init = "random";
  Index r = 0;
  long max_iters = 20000;
  double kkt_tol = 1e-6;
  std::optional<double> time_budget;
  std::string post_rotation;
  std::string svd;
};

int cmd_factorize(const FactorizeArgs& a, const Common& c) {
  const Matrix X = load(a.input, a.mask.empty());
  std::optional<ObservationMask> mask;
  if (!a.mask.empty()) mask = ObservationMask::from_matrix(load(a.mask));

  PipelineConfig cfg;
  if (!a.config.empty()) from_json(read_json_file(a.config), cfg);
  if (a.r > 0) cfg.r = a.r;
  cfg.descent.kkt_tol = a.kkt_tol;
  cfg.descent.max_iters = a.max_iters;
  if (a.time_budget) cfg.descent.time_budget_s = a.time_budget;
  if (!a.post_rotation.empty()) cfg.post_rotation = parse_post_rotation(a.post_rotation);
  if (a.svd == "randomized") cfg.svd = SvdMethod::randomized;
  cfg.randomized.seed = RngSeed{c.seed};

  FactorPair F;
  ConvergenceTrace trace;
  Json report{{"algorithm", a.algorithm}, {"input", a.input}, {"r", cfg.r}};

  if (a.algorithm == "enmf" && !mask) {
    EnmfResult res = run_enmf(X, cfg);
    F = res.factors;
    trace = res.trace;
    report["config"] = cfg;
    report["svd_residual"] = number_to_json(res.svd_residual);
    report["rotated_objective"] = number_to_json(res.rotated_objective);
    report["feasible_objective"] = number_to_json(res.feasible_objective);
    report["final_objective"] = number_to_json(res.final_objective);
    report["relative_error"] = res.svd_residual > 0
                                   ? number_to_json(res.final_objective / res.svd_residual)
                                   : Json(nullptr);
    report["one_shot"] = res.one_shot;
    report["rotation_iterations"] = res.rotation.iterations;
    report["feasibility_sweeps"] = res.ascent.sweeps;
    report["timings"] = res.timings;
    report["kkt"] = res.kkt;
    report["termination"] = termination_name(res.descent_termination);
    report["descent_iterations"] = res.descent_iterations;
    report["diagnostics"] = res.diagnostics;
  } else if (a.algorithm == "enmf") {
    EnmcResult res = run_enmc(X, *mask, cfg);
    F = res.factors;
    trace = res.trace;
    report["config"] = cfg;
    report["rotated_objective"] = number_to_json(res.rotated_objective);
    report["feasible_objective"] = number_to_json(res.feasible_objective);
    report["final_objective"] = number_to_json(res.final_objective);
    report["runtime_s"] = res.runtime_s;
    report["kkt"] = res.kkt;
    report["termination"] = termination_name(res.descent_termination);
    report["diagnostics"] = res.warnings;
  } else {
    if (cfg.r < 1) throw ValidationError("--r is required");
    InitSpec init;
    init.seed = RngSeed{c.seed};
    if (a.init == "nndsvd") {
      init.kind = InitSpec::Kind::nndsvd;
    } else if (a.init != "random") {
      throw ValidationError("unknown init '" + a.init + "'");
    }
    StopRule rule;
    rule.max_iters = a.max_iters;
    rule.kkt_tol = a.kkt_tol;
    rule.time_budget_s = a.time_budget;
    SolveResult res;
    if (mask) {
      if (a.algorithm != "mult") throw ValidationError("only enmf and mult accept --mask");
      res = masked_mult(X, *mask, make_init(X, cfg.r, init), rule);
      report["kkt"] = kkt_residuals(X, res.factors, *mask);
    } else {
      res = solve(parse_algorithm(a.algorithm), X, make_init(X, cfg.r, init), rule);
      report["kkt"] = kkt_residuals(X, res.factors);
    }
    F = res.factors;
    trace = res.trace;
    report["init"] = init.label();
    report["final_objective"] = number_to_json(res.final_objective);
    report["runtime_s"] = res.runtime_s;
    report["iterations"] = res.iterations;
    report["termination"] = termination_name(res.termination);
    report["diagnostics"] = res.diagnostics;
  }

  if (!c.out.empty()) {
    const fs::path dir = ensure_dir(c.out);
    save(F.U, dir, "U", c);
    save(F.V, dir, "V", c);
    write_trace(trace, dir / "trace.csv");
  } else {
    report["trace"] = trace_json(trace);
  }
  emit_json(report, c, "report.json");
  status("ok", a.algorithm + " finished: " + report["termination"].get<std::string>(), true);
  return kOk;
}

// ---------------------------------------------------------------------------

int cmd_benchmark(const std::string& config_file, const Common& c, bool threads_set,
                  bool seed_set) {
  BenchmarkConfig cfg = benchmark_config_from_json(read_json_file(config_file));
  if (threads_set) cfg.options.threads = c.threads;
  if (seed_set) cfg.seed = c.seed;
  const RunOutput output = run_benchmark(cfg);
  const fs::path dir = ensure_dir(c.out.empty() ? "benchmark_out" : c.out);
  emit_reports(output, dir);
  long errors = 0;
  for (const auto& rec : output.records) errors += rec.termination == Termination::error;
  status(errors ? "warning" : "ok",
         std::to_string(output.records.size()) + " records written to " + dir.string() +
             (errors ? " (" + std::to_string(errors) + " cells failed)" : ""),
         errors == 0);
  return kOk;
}

// ---------------------------------------------------------------------------

struct KktArgs {
  std::string input, u, v, mask;
  double tol = 1e-6;
  bool strict = false;
};

int cmd_kkt(const KktArgs& a, const Common& c) {
  const Matrix X = load(a.input);
  const FactorPair F{load(a.u), load(a.v)};
  const KktResiduals k = a.mask.empty()
                             ? kkt_residuals(X, F)
                             : kkt_residuals(X, F, ObservationMask::from_matrix(load(a.mask)));
  const bool ok = k.satisfied(a.tol);
  Json j = k;
  j["tol"] = a.tol;
  j["satisfied"] = ok;
  j["objective"] = number_to_json(frobenius_objective(X, F));
  emit_json(j, c, "kkt.json");
  status(ok ? "certified" : "not certified", "delta_W=" + num(k.delta_W) + " sigma_W=" + num(k.sigma_W), ok);
  return ok || !a.strict ? kOk : kNotCertified;
}

// ---------------------------------------------------------------------------

struct CompareArgs {
  std::string input, a_u, a_v, b_u, b_v;
  double error_tol = 0.0;
  double kkt_tol = 1e-6;
  double eps = 0.05;
  bool generalized = false;
};

int cmd_compare(const CompareArgs& a, const Common& c) {
  const Matrix X = load(a.input);
  const FactorPair A{load(a.a_u), load(a.a_v)};
  const FactorPair B{load(a.b_u), load(a.b_v)};
  PermutationOptions popt;
  popt.eps = a.eps;
  const EquivalenceReport rep = compare(X, A, B, {a.error_tol, a.kkt_tol}, popt);
  Json j = rep;
  if (a.generalized) {
    const GeneralizedTransform g = generalized_transform(A, B);
    j["generalized"] = {{"delta_u", number_to_json(g.delta_u)},
                        {"delta_v", number_to_json(g.delta_v)},
                        {"lambda", std::vector<double>(g.Lambda.data(), g.Lambda.data() + g.Lambda.size())},
                        {"pseudo_inverse", g.pseudo_inverse}};
  }
  emit_json(j, c, "compare.json");
  status(verdict_name(rep.verdict), "matched U " + num(rep.matched_u_pct) + "%, V " + num(rep.matched_v_pct) + "%",
         rep.verdict == Verdict::E);
  return kOk;
}

// ---------------------------------------------------------------------------

struct RotateArgs {
  std::string input;
  std::string method = "admm";
  std::string config;
  Index r = 0;
  double rho = 1.0;
  int max_iters = 200;
  double gamma = 1.0, t = 1.0;
  std::string initial = "balanced";
};

int cmd_rotate(const RotateArgs& a, const Common& c) {
  const Matrix X = load(a.input, true);
  if (a.r < 1) throw ValidationError("--r is required");
  if (a.r > std::min(X.rows(), X.cols())) throw ValidationError("rank exceeds min(n, m)");
  RotationConfig cfg;
  if (!a.config.empty()) from_json(read_json_file(a.config), cfg);
  cfg.rho = a.rho;
  cfg.max_iters = a.max_iters;
  cfg.gamma = a.gamma;
  cfg.t = a.t;
  cfg.initial_rotation =
      a.initial == "identity" ? InitialRotation::identity : InitialRotation::balanced;
  validate(cfg);
  const SvdFactors svd = truncated_svd(X, a.r);
  Json j{{"method", a.method}, {"r", a.r}, {"config", cfg}};
  FactorPair F;
  if (a.method == "admm") {
    const RotationResult res = admm_rotate(svd, cfg);
    F = {svd.Ustar * res.R, svd.Vstar * res.R};
    j["iterations"] = res.iterations;
    j["orthogonality_residual"] = number_to_json(res.orthogonality_residual);
    j["initial_negativity"] = number_to_json(res.initial_negativity);
    j["final_negativity"] = number_to_json(res.final_negativity);
    j["primal_residual"] = number_to_json(res.primal_residual);
    j["diagnostics"] = res.diagnostics;
  } else if (a.method == "rsr") {
    const RsrResult res = rsr_admm(svd, cfg);
    F = res.apply(svd.Ustar, svd.Vstar);
    j["iterations"] = res.iterations;
    j["lambda"] = std::vector<double>(res.Lambda.data(), res.Lambda.data() + res.Lambda.size());
    j["initial_negativity"] = number_to_json(res.initial_negativity);
    j["final_negativity"] = number_to_json(res.final_negativity);
    j["diagnostics"] = res.diagnostics;
  } else {
    throw ValidationError("unknown rotation method '" + a.method + "'");
  }
  j["objective"] = number_to_json(frobenius_objective(X, F));
  j["feasible"] = F.feasible();
  if (!c.out.empty()) {
    const fs::path dir = ensure_dir(c.out);
    save(F.U, dir, "U", c);
    save(F.V, dir, "V", c);
  }
  emit_json(j, c, "rotation.json");
  status("ok", a.method + " rotation: negativity " + j["final_negativity"].dump(), true);
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Exact and near-exact nonnegative matrix factorization toolkit"};
  app.require_subcommand(1);
  Common common;

  GenerateArgs gen;
  auto* generate = app.add_subcommand("generate", "Generate a synthetic dataset");
  add_common(generate, common);
  generate->add_option("--spec", gen.spec_file, "Dataset spec JSON file");
  generate->add_option("--kind", gen.kind, "exact or dense_snr")
      ->check(CLI::IsMember({"exact", "dense_snr"}));
  generate->add_option("--id", gen.id, "Dataset id");
  generate->add_option("--n", gen.n, "Rows");
  generate->add_option("--m", gen.m, "Columns");
  generate->add_option("--r", gen.r, "Rank (exact)");
  generate->add_option("--k", gen.k, "Inner dimension (dense_snr)");
  generate->add_option("--sparsity", gen.sparsity, "Fraction of zeroed factor entries");
  generate->add_option("--snr", gen.snr, "Signal-to-noise ratio in dB (dense_snr)");

  FactorizeArgs fac;
  auto* factorize = app.add_subcommand("factorize", "Factorize one matrix with one algorithm");
  add_common(factorize, common);
  factorize->add_option("--input", fac.input, "Data matrix file")->required();
  factorize->add_option("--mask", fac.mask, "0/1 observation mask (completion)");
  factorize->add_option("--algorithm", fac.algorithm,
                        "enmf, hals, mult, grad_mult, als_projected, ao_admm or nmf_admm");
  factorize->add_option("--config", fac.config, "Pipeline config JSON file");
  factorize->add_option("--r", fac.r, "Rank");
  factorize->add_option("--init", fac.init, "random or nndsvd (baselines)");
  factorize->add_option("--max-iters", fac.max_iters, "Iteration cap");
  factorize->add_option("--kkt-tol", fac.kkt_tol, "KKT tolerance");
  factorize->add_option("--time-budget", fac.time_budget, "Wall-clock budget in seconds");
  factorize->add_option("--post-rotation", fac.post_rotation, "eNMF post-rotation strategy");
  factorize->add_option("--svd", fac.svd, "exact or randomized")
      ->check(CLI::IsMember({"exact", "randomized"}));

  std::string bench_config;
  auto* benchmark = app.add_subcommand("benchmark", "Run a protocol sweep from a JSON config");
  add_common(benchmark, common);
  benchmark->add_option("--config", bench_config, "Benchmark config JSON file")->required();

  KktArgs kk;
  auto* kkt = app.add_subcommand("kkt", "Certify a factor pair by its KKT residuals");
  add_common(kkt, common);
  kkt->add_option("--input", kk.input, "Data matrix file")->required();
  kkt->add_option("--u", kk.u, "U factor file")->required();
  kkt->add_option("--v", kk.v, "V factor file")->required();
  kkt->add_option("--mask", kk.mask, "0/1 observation mask");
  kkt->add_option("--tol", kk.tol, "Tolerance");
  kkt->add_flag("--strict", kk.strict, "Exit nonzero when not certified");

  CompareArgs cmp;
  auto* compare_cmd = app.add_subcommand("compare", "Equivalence analysis of two factor pairs");
  add_common(compare_cmd, common);
  compare_cmd->add_option("--input", cmp.input, "Data matrix file")->required();
  compare_cmd->add_option("--a-u", cmp.a_u, "U of the first pair")->required();
  compare_cmd->add_option("--a-v", cmp.a_v, "V of the first pair")->required();
  compare_cmd->add_option("--b-u", cmp.b_u, "U of the second pair")->required();
  compare_cmd->add_option("--b-v", cmp.b_v, "V of the second pair")->required();
  compare_cmd->add_option("--error-tol", cmp.error_tol, "Error-gap tolerance (0: 1e-3 ||X||)");
  compare_cmd->add_option("--kkt-tol", cmp.kkt_tol, "KKT tolerance for the second pair");
  compare_cmd->add_option("--eps", cmp.eps, "Cosine matching slack");
  compare_cmd->add_flag("--generalized", cmp.generalized, "Also recover R1 Lambda R2");

  RotateArgs rot;
  auto* rotate = app.add_subcommand("rotate", "Rotate the truncated SVD toward the orthant");
  add_common(rotate, common);
  rotate->add_option("--input", rot.input, "Data matrix file")->required();
  rotate->add_option("--r", rot.r, "Rank")->required();
  rotate->add_option("--method", rot.method, "admm or rsr")
      ->check(CLI::IsMember({"admm", "rsr"}));
  rotate->add_option("--config", rot.config, "Rotation config JSON file");
  rotate->add_option("--rho", rot.rho, "ADMM penalty");
  rotate->add_option("--max-iters", rot.max_iters, "Iteration cap");
  rotate->add_option("--gamma", rot.gamma, "Scale penalty (rsr)");
  rotate->add_option("--t", rot.t, "Scale weight (rsr)");
  rotate->add_option("--initial", rot.initial, "balanced or identity")
      ->check(CLI::IsMember({"balanced", "identity"}));

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kUsage;
  }

  try {
    if (*generate) return cmd_generate(gen, common);
    if (*factorize) return cmd_factorize(fac, common);
    if (*benchmark) {
      return cmd_benchmark(bench_config, common, benchmark->count("--threads") > 0,
                           benchmark->count("--seed") > 0);
    }
    if (*kkt) return cmd_kkt(kk, common);
    if (*compare_cmd) return cmd_compare(cmp, common);
    if (*rotate) return cmd_rotate(rot, common);
  } catch (const ValidationError& e) {
    status("validation error:", e.what(), false);
    return kValidation;
  } catch (const DimensionError& e) {
    status("dimension error:", e.what(), false);
    return kDimension;
  } catch (const ParseError& e) {
    status("parse error:", e.what(), false);
    return kParse;
  } catch (const IoError& e) {
    status("io error:", e.what(), false);
    return kIo;
  } catch (const NumericalError& e) {
    status("numerical error:", e.what(), false);
    return kNumerical;
  } catch (const Json::exception& e) {
    status("config error:", e.what(), false);
    return kParse;
  } catch (const std::exception& e) {
    status("error:", e.what(), false);
    return kFailure;
  }
  return kUsage;
}
