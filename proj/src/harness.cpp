#include "enmf/harness.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <fstream>
#include <map>
#include <set>
#include <cstdio>
#include <cctype>
#include <limits>
#include <tuple>
#include <thread>

namespace enmf {

namespace {

using Clock = std::chrono::steady_clock;

Protocol::Kind parse_protocol(const std::string& s) {
  if (s == "equal_time") return Protocol::Kind::equal_time;
  if (s == "equal_error") return Protocol::Kind::equal_error;
  throw ValidationError("unknown protocol '" + s + "'");
}

Json protocol_to_json(const Protocol& p) {
  return Json{{"kind", protocol_name(p.kind)},
              {"budget_s", number_to_json(p.budget_s)},
              {"target", number_to_json(p.target)}};
}

Protocol protocol_from_json(const Json& j) {
  Protocol p;
  p.kind = parse_protocol(j.at("kind").get<std::string>());
  p.budget_s = number_from_json(j.at("budget_s"));
  p.target = number_from_json(j.at("target"));
  return p;
}

// File-name-safe version of a label.
std::string sanitize(const std::string& s) {
  std::string out = s;
  for (char& c : out) {
    if (!std::isalnum(static_cast<unsigned char>(c)) && c != '-' && c != '.') c = '_';
  }
  return out;
}

std::ofstream open_for_write(const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path.string());
  return out;
}

// Runs every competitor under `rule_for` on up to options.threads workers.
RunOutput run_cells(const Matrix& X, const std::string& dataset_id,
                    const std::vector<Competitor>& competitors, Index r,
                    const EnmfResult& reference, const Protocol& protocol,
                    const HarnessOptions& options) {
  RunOutput out;
  out.records.push_back(reference_record(dataset_id, r, protocol, reference));
  out.traces.push_back(reference.trace);
  const std::size_t base = out.records.size();
  out.records.resize(base + competitors.size());
  out.traces.resize(base + competitors.size());

  auto cell = [&](std::size_t k) {
    const Competitor& c = competitors[k];
    BenchmarkRecord& rec = out.records[base + k];
    rec.dataset_id = dataset_id;
    rec.algorithm = algorithm_name(c.algorithm);
    rec.init_label = c.init.label();
    rec.r = r;
    rec.protocol = protocol;
    const auto t0 = Clock::now();
    try {
      const FactorPair init = make_init(X, r, c.init);
      StopRule rule;
      rule.elapsed_offset_s = std::chrono::duration<double>(Clock::now() - t0).count();
      rule.max_iters = options.max_iters;
      rule.kkt_tol = options.kkt_tol;
      rule.trace_every = X.size() > 1000000 ? 10 : 1;
      if (protocol.kind == Protocol::Kind::equal_time) {
        rule.time_budget_s = protocol.budget_s;
      } else {
        rule.error_target = protocol.target;
        rule.stagnation_window = options.stagnation_window;
        rule.time_budget_s = options.time_cap_s;
      }
      SolveResult res = solve(c.algorithm, X, init, rule, options.params);
      rec.final_objective = res.final_objective;
      rec.relative_error = relative_error(res.final_objective, reference.svd_residual);
      rec.runtime_s = res.runtime_s;
      rec.iterations = res.iterations;
      rec.termination = res.termination;
      rec.kkt = kkt_residuals(X, res.factors);
      rec.diagnostics = std::move(res.diagnostics);
      out.traces[base + k] = std::move(res.trace);
    } catch (const Error& e) {
      rec.termination = Termination::error;
      rec.runtime_s = std::chrono::duration<double>(Clock::now() - t0).count();
      rec.final_objective = std::numeric_limits<double>::quiet_NaN();
      rec.diagnostics.push_back(e.what());
    }
  };

  const std::size_t workers =
      std::max<std::size_t>(1, std::min<std::size_t>(options.threads, competitors.size()));
  if (workers == 1) {
    for (std::size_t k = 0; k < competitors.size(); ++k) cell(k);
  } else {
    std::atomic<std::size_t> next{0};
    std::vector<std::thread> pool;
    for (std::size_t w = 0; w < workers; ++w) {
      pool.emplace_back([&] {
        for (std::size_t k = next++; k < competitors.size(); k = next++) cell(k);
      });
    }
    for (auto& t : pool) t.join();
  }
  mark_best_over_inits(out.records);
  return out;
}

}  // namespace

std::string protocol_name(Protocol::Kind k) {
  return k == Protocol::Kind::equal_time ? "equal_time" : "equal_error";
}

Json record_to_json(const BenchmarkRecord& r) {
  Json j{{"dataset_id", r.dataset_id},
         {"algorithm", r.algorithm},
         {"init_label", r.init_label},
         {"r", r.r},
         {"protocol", protocol_to_json(r.protocol)},
         {"final_objective", number_to_json(r.final_objective)},
         {"runtime_s", number_to_json(r.runtime_s)},
         {"iterations", r.iterations},
         {"kkt", r.kkt},
         {"termination", termination_name(r.termination)},
         {"best_over_inits", r.best_over_inits},
         {"diagnostics", r.diagnostics}};
  j["relative_error"] = r.relative_error ? number_to_json(*r.relative_error) : Json(nullptr);
  j["phase_timings"] = r.phase_timings ? Json(*r.phase_timings) : Json(nullptr);
  return j;
}

BenchmarkRecord record_from_json(const Json& j) {
  BenchmarkRecord r;
  r.dataset_id = j.at("dataset_id").get<std::string>();
  r.algorithm = j.at("algorithm").get<std::string>();
  r.init_label = j.at("init_label").get<std::string>();
  r.r = j.at("r").get<Index>();
  r.protocol = protocol_from_json(j.at("protocol"));
  r.final_objective = number_from_json(j.at("final_objective"));
  if (!j.at("relative_error").is_null()) r.relative_error = number_from_json(j.at("relative_error"));
  r.runtime_s = number_from_json(j.at("runtime_s"));
  r.iterations = j.at("iterations").get<long>();
  r.kkt = j.at("kkt").get<KktResiduals>();
  r.termination = parse_termination(j.at("termination").get<std::string>());
  if (!j.at("phase_timings").is_null()) r.phase_timings = j.at("phase_timings").get<PhaseTimings>();
  r.best_over_inits = j.at("best_over_inits").get<bool>();
  r.diagnostics = j.at("diagnostics").get<std::vector<std::string>>();
  return r;
}

std::vector<Competitor> default_competitors(const std::vector<Algorithm>& algorithms,
                                            std::uint64_t base_seed, int random_inits,
                                            bool nndsvd) {
  std::vector<Competitor> out;
  for (Algorithm a : algorithms) {
    for (int k = 0; k < random_inits; ++k) {
      InitSpec init;
      init.kind = InitSpec::Kind::random;
      init.seed = RngSeed{base_seed + static_cast<std::uint64_t>(k)};
      out.push_back({a, init});
    }
    if (nndsvd) {
      InitSpec init;
      init.kind = InitSpec::Kind::nndsvd;
      out.push_back({a, init});
    }
  }
  return out;
}

BenchmarkRecord reference_record(const std::string& dataset_id, Index r, const Protocol& protocol,
                                 const EnmfResult& reference) {
  BenchmarkRecord rec;
  rec.dataset_id = dataset_id;
  rec.algorithm = "enmf";
  rec.init_label = "svd";
  rec.r = r;
  rec.protocol = protocol;
  rec.final_objective = reference.final_objective;
  rec.relative_error = relative_error(reference.final_objective, reference.svd_residual);
  rec.runtime_s = reference.timings.total_s;
  rec.iterations = reference.descent_iterations;
  rec.kkt = reference.kkt;
  rec.termination = reference.descent_termination;
  rec.phase_timings = reference.timings;
  rec.diagnostics = reference.diagnostics;
  return rec;
}

RunOutput run_equal_time(const Matrix& X, const std::string& dataset_id,
                         const std::vector<Competitor>& competitors, Index r,
                         const EnmfResult& reference, const HarnessOptions& options) {
  Protocol p;
  p.kind = Protocol::Kind::equal_time;
  p.budget_s = reference.timings.total_s;
  return run_cells(X, dataset_id, competitors, r, reference, p, options);
}

RunOutput run_equal_error(const Matrix& X, const std::string& dataset_id,
                          const std::vector<Competitor>& competitors, Index r,
                          const EnmfResult& reference, double target,
                          const HarnessOptions& options) {
  if (!(target >= 0.0)) throw ValidationError("equal-error target must be >= 0");
  Protocol p;
  p.kind = Protocol::Kind::equal_error;
  p.target = target;
  return run_cells(X, dataset_id, competitors, r, reference, p, options);
}

void mark_best_over_inits(std::vector<BenchmarkRecord>& records) {
  std::map<std::tuple<std::string, Index, int, std::string>, std::size_t> best;
  for (std::size_t k = 0; k < records.size(); ++k) {
    auto& rec = records[k];
    rec.best_over_inits = false;
    if (rec.termination == Termination::error) continue;
    const auto key = std::make_tuple(rec.dataset_id, rec.r, static_cast<int>(rec.protocol.kind),
                                     rec.algorithm);
    auto it = best.find(key);
    if (it == best.end()) {
      best.emplace(key, k);
      continue;
    }
    const auto& cur = records[it->second];
    if (rec.final_objective < cur.final_objective ||
        (rec.final_objective == cur.final_objective && rec.runtime_s < cur.runtime_s)) {
      it->second = k;
    }
  }
  for (const auto& [key, k] : best) records[k].best_over_inits = true;
}

void emit_reports(const RunOutput& output, const std::filesystem::path& out_dir) {
  if (output.traces.size() != output.records.size() && !output.traces.empty()) {
    throw DimensionError("emit_reports: traces and records differ in count");
  }
  std::error_code ec;
  std::filesystem::create_directories(out_dir / "traces", ec);
  if (ec) throw IoError("cannot create " + (out_dir / "traces").string() + ": " + ec.message());

  {
    auto out = open_for_write(out_dir / "records.jsonl");
    for (const auto& rec : output.records) out << record_to_json(rec).dump() << '\n';
    if (!out) throw IoError("write failed: " + (out_dir / "records.jsonl").string());
  }

  for (std::size_t k = 0; k < output.traces.size(); ++k) {
    const auto& rec = output.records[k];
    char prefix[16];
    std::snprintf(prefix, sizeof prefix, "%04zu", k);
    const auto path = out_dir / "traces" /
                      (std::string(prefix) + "_" + sanitize(rec.dataset_id) + "_" +
                       sanitize(protocol_name(rec.protocol.kind)) + "_" + sanitize(rec.algorithm) +
                       "_" + sanitize(rec.init_label) + ".csv");
    auto out = open_for_write(path);
    out << "wall_clock_s,objective,iteration\n";
    out.precision(17);
    for (const auto& s : output.traces[k].samples()) {
      out << s.wall_clock_s << ',' << s.objective << ',' << s.iteration << '\n';
    }
    if (!out) throw IoError("write failed: " + path.string());
  }

  // Pivot: one row per (dataset, r, protocol), one column per algorithm,
  // holding the best final objective over inits.
  std::vector<std::string> algorithms;
  std::vector<std::tuple<std::string, Index, std::string>> rows;
  std::map<std::tuple<std::string, Index, std::string>, std::map<std::string, double>> cells;
  for (const auto& rec : output.records) {
    if (std::find(algorithms.begin(), algorithms.end(), rec.algorithm) == algorithms.end()) {
      algorithms.push_back(rec.algorithm);
    }
    const auto key = std::make_tuple(rec.dataset_id, rec.r, protocol_name(rec.protocol.kind));
    if (!cells.count(key)) rows.push_back(key);
    auto& row = cells[key];
    if (rec.termination == Termination::error) continue;
    auto it = row.find(rec.algorithm);
    if (it == row.end() || rec.final_objective < it->second) row[rec.algorithm] = rec.final_objective;
  }
  auto out = open_for_write(out_dir / "summary.csv");
  out << "dataset_id,r,protocol";
  for (const auto& a : algorithms) out << ',' << a;
  out << '\n';
  out.precision(10);
  for (const auto& key : rows) {
    out << std::get<0>(key) << ',' << std::get<1>(key) << ',' << std::get<2>(key);
    const auto& row = cells[key];
    for (const auto& a : algorithms) {
      out << ',';
      if (auto it = row.find(a); it != row.end()) out << it->second;
    }
    out << '\n';
  }
  if (!out) throw IoError("write failed: " + (out_dir / "summary.csv").string());
}

std::vector<BenchmarkRecord> read_records(const std::filesystem::path& jsonl) {
  std::ifstream in(jsonl);
  if (!in) throw IoError("cannot open " + jsonl.string());
  std::vector<BenchmarkRecord> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      out.push_back(record_from_json(Json::parse(line)));
    } catch (const Json::exception& e) {
      throw ParseError(jsonl.string() + ":" + std::to_string(lineno) + ": " + e.what(), lineno);
    }
  }
  return out;
}

BenchmarkConfig benchmark_config_from_json(const Json& j) {
  static const std::set<std::string> known = {
      "datasets", "ranks",   "algorithms", "protocols",         "random_inits", "nndsvd",
      "seed",     "pipeline", "kkt_tol",   "stagnation_window", "max_iters",    "time_cap_s",
      "threads",  "solver_params"};
  for (const auto& [key, value] : j.items()) {
    (void)value;
    if (!known.count(key)) throw ValidationError("unknown key '" + key + "' in benchmark config");
  }
  BenchmarkConfig c;
  for (const auto& d : j.at("datasets")) c.datasets.push_back(d.get<DatasetSpec>());
  c.ranks = j.at("ranks").get<std::vector<Index>>();
  if (j.contains("algorithms")) {
    for (const auto& a : j.at("algorithms")) c.algorithms.push_back(parse_algorithm(a.get<std::string>()));
  } else {
    c.algorithms = all_algorithms();
  }
  if (j.contains("protocols")) {
    c.protocols.clear();
    for (const auto& p : j.at("protocols")) c.protocols.push_back(parse_protocol(p.get<std::string>()));
  }
  c.random_inits = j.value("random_inits", c.random_inits);
  c.nndsvd = j.value("nndsvd", c.nndsvd);
  c.seed = j.value("seed", c.seed);
  if (j.contains("pipeline")) from_json(j.at("pipeline"), c.pipeline);
  if (j.contains("kkt_tol")) c.options.kkt_tol = number_from_json(j.at("kkt_tol"));
  c.options.stagnation_window = j.value("stagnation_window", c.options.stagnation_window);
  c.options.max_iters = j.value("max_iters", c.options.max_iters);
  if (j.contains("time_cap_s") && !j.at("time_cap_s").is_null()) {
    c.options.time_cap_s = number_from_json(j.at("time_cap_s"));
  }
  c.options.threads = j.value("threads", c.options.threads);
  if (j.contains("solver_params")) {
    c.options.params = params_from_map(j.at("solver_params").get<std::map<std::string, double>>());
  }
  if (c.datasets.empty() || c.ranks.empty()) {
    throw ValidationError("benchmark config needs at least one dataset and one rank");
  }
  return c;
}

RunOutput run_benchmark(const BenchmarkConfig& config) {
  RunOutput all;
  const auto competitors =
      default_competitors(config.algorithms, config.seed, config.random_inits, config.nndsvd);
  for (const auto& spec : config.datasets) {
    const MaterializedDataset data = materialize(spec);
    for (Index r : config.ranks) {
      PipelineConfig pcfg = config.pipeline;
      pcfg.r = r;
      const EnmfResult reference = run_enmf(data.X, pcfg);
      for (Protocol::Kind kind : config.protocols) {
        RunOutput part = kind == Protocol::Kind::equal_time
                             ? run_equal_time(data.X, data.id, competitors, r, reference, config.options)
                             : run_equal_error(data.X, data.id, competitors, r, reference,
                                               reference.final_objective, config.options);
        for (auto& rec : part.records) all.records.push_back(std::move(rec));
        for (auto& tr : part.traces) all.traces.push_back(std::move(tr));
      }
    }
  }
  mark_best_over_inits(all.records);
  return all;
}

}  // namespace enmf
