#include "enmf/datasets.hpp"
#include "enmf/harness.hpp"

#include <gtest/gtest.h>

#include <fstream>
#include <map>
#include <sstream>

using namespace enmf;
namespace fs = std::filesystem;

namespace {

class HarnessTest : public ::testing::Test {
 protected:
  void SetUp() override {
    dir_ = fs::temp_directory_path() /
           (std::string("enmf_harness_") +
            ::testing::UnitTest::GetInstance()->current_test_info()->name());
    fs::remove_all(dir_);
    X_ = gen_exact(30, 24, 3, 0.2, RngSeed{1}).X;
    PipelineConfig c;
    c.r = 3;
    reference_ = run_enmf(X_, c);
  }
  void TearDown() override { fs::remove_all(dir_); }

  static std::vector<std::string> lines(const fs::path& p) {
    std::ifstream in(p);
    std::vector<std::string> out;
    for (std::string l; std::getline(in, l);) out.push_back(l);
    return out;
  }

  fs::path dir_;
  Matrix X_;
  EnmfResult reference_;
};

std::vector<Competitor> small_competitors() {
  return default_competitors({Algorithm::hals, Algorithm::mult}, 7, 2, true);
}

}  // namespace

TEST(Competitors, DefaultLayout) {
  const auto c = default_competitors({Algorithm::hals, Algorithm::ao_admm}, 10);
  ASSERT_EQ(c.size(), 12u);
  EXPECT_EQ(c[0].algorithm, Algorithm::hals);
  EXPECT_EQ(c[0].init.seed.value, 10u);
  EXPECT_EQ(c[4].init.seed.value, 14u);
  EXPECT_EQ(c[5].init.kind, InitSpec::Kind::nndsvd);
  EXPECT_EQ(c[6].algorithm, Algorithm::ao_admm);
  EXPECT_EQ(default_competitors({Algorithm::hals}, 0, 3, false).size(), 3u);
}

TEST_F(HarnessTest, EmptyOutputWritesHeaderOnlyFiles) {
  emit_reports({}, dir_);
  EXPECT_TRUE(lines(dir_ / "records.jsonl").empty());
  const auto summary = lines(dir_ / "summary.csv");
  ASSERT_EQ(summary.size(), 1u);
  EXPECT_EQ(summary[0], "dataset_id,r,protocol");
  EXPECT_TRUE(fs::is_directory(dir_ / "traces"));
  EXPECT_TRUE(fs::is_empty(dir_ / "traces"));
}

TEST_F(HarnessTest, EqualTimeLeadsWithReferenceAndRespectsBudget) {
  const RunOutput out = run_equal_time(X_, "exact", small_competitors(), 3, reference_);
  ASSERT_EQ(out.records.size(), 1 + small_competitors().size());
  ASSERT_EQ(out.traces.size(), out.records.size());
  Protocol p;
  p.budget_s = reference_.timings.total_s;
  const Json ref = record_to_json(reference_record("exact", 3, p, reference_));
  BenchmarkRecord lead = out.records[0];
  EXPECT_TRUE(lead.best_over_inits);
  lead.best_over_inits = false;
  EXPECT_EQ(record_to_json(lead).dump(), ref.dump());
  EXPECT_EQ(out.records[0].algorithm, "enmf");
  ASSERT_TRUE(out.records[0].phase_timings.has_value());
  for (std::size_t k = 1; k < out.records.size(); ++k) {
    const auto& rec = out.records[k];
    EXPECT_EQ(rec.protocol.kind, Protocol::Kind::equal_time);
    EXPECT_DOUBLE_EQ(rec.protocol.budget_s, reference_.timings.total_s);
    EXPECT_TRUE(rec.termination == Termination::budget ||
                rec.termination == Termination::kkt_converged)
        << termination_name(rec.termination);
    EXPECT_FALSE(rec.phase_timings.has_value());
    ASSERT_TRUE(rec.relative_error.has_value());
    EXPECT_NEAR(*rec.relative_error, *relative_error(rec.final_objective, reference_.svd_residual),
                1e-15);
    EXPECT_FALSE(out.traces[k].empty());
  }
}

TEST_F(HarnessTest, KktConvergenceEndsBeforeBudget) {
  Competitor exact;
  exact.algorithm = Algorithm::hals;
  exact.init.kind = InitSpec::Kind::given;
  const ExactDataset d = gen_exact(30, 24, 3, 0.2, RngSeed{1});
  exact.init.given = FactorPair{d.U, d.V};
  EnmfResult slow = reference_;
  slow.timings.total_s = 30.0;
  const RunOutput out = run_equal_time(X_, "exact", {exact}, 3, slow);
  EXPECT_EQ(out.records[1].termination, Termination::kkt_converged);
  EXPECT_EQ(out.records[1].iterations, 0);
  EXPECT_LT(out.records[1].runtime_s, 1.0);
}

TEST_F(HarnessTest, EqualErrorStopsAtTargetOrStagnation) {
  HarnessOptions o;
  o.time_cap_s = 20.0;
  const double target = reference_.final_objective;
  const RunOutput out = run_equal_error(X_, "exact", small_competitors(), 3, reference_, target, o);
  for (std::size_t k = 1; k < out.records.size(); ++k) {
    const auto& rec = out.records[k];
    EXPECT_DOUBLE_EQ(rec.protocol.target, target);
    if (rec.termination == Termination::target_reached) {
      EXPECT_LE(rec.final_objective, target);
    } else {
      EXPECT_TRUE(rec.termination == Termination::kkt_converged ||
                  rec.termination == Termination::stagnated ||
                  rec.termination == Termination::budget)
          << termination_name(rec.termination);
    }
  }
  EXPECT_THROW(run_equal_error(X_, "exact", small_competitors(), 3, reference_, -1.0),
               ValidationError);
}

TEST_F(HarnessTest, ThreadedRunMatchesSerialUnderIterationCap) {
  HarnessOptions o;
  o.max_iters = 50;
  o.time_cap_s = 60.0;
  const auto comps = small_competitors();
  const RunOutput a = run_equal_error(X_, "exact", comps, 3, reference_, 0.0, o);
  o.threads = 3;
  const RunOutput b = run_equal_error(X_, "exact", comps, 3, reference_, 0.0, o);
  ASSERT_EQ(a.records.size(), b.records.size());
  for (std::size_t k = 0; k < a.records.size(); ++k) {
    EXPECT_EQ(a.records[k].final_objective, b.records[k].final_objective) << k;
    EXPECT_EQ(a.records[k].init_label, b.records[k].init_label);
  }
}

TEST_F(HarnessTest, BestOverInitsOnePerGroup) {
  HarnessOptions o;
  o.max_iters = 30;
  o.time_cap_s = 60.0;
  RunOutput out = run_equal_error(X_, "exact", small_competitors(), 3, reference_, 0.0, o);
  std::map<std::string, int> flagged;
  std::map<std::string, double> best;
  for (const auto& rec : out.records) {
    if (best.count(rec.algorithm) == 0 || rec.final_objective < best[rec.algorithm]) {
      best[rec.algorithm] = rec.final_objective;
    }
  }
  for (const auto& rec : out.records) {
    if (!rec.best_over_inits) continue;
    ++flagged[rec.algorithm];
    EXPECT_EQ(rec.final_objective, best[rec.algorithm]);
  }
  for (const auto& [algo, count] : flagged) EXPECT_EQ(count, 1) << algo;
  EXPECT_EQ(flagged.size(), best.size());
}

TEST(BestOverInits, TiesBrokenByRuntime) {
  std::vector<BenchmarkRecord> recs(3);
  for (auto& r : recs) {
    r.dataset_id = "d";
    r.algorithm = "hals";
    r.r = 2;
    r.final_objective = 1.0;
  }
  recs[0].runtime_s = 3.0;
  recs[1].runtime_s = 1.0;
  recs[2].runtime_s = 2.0;
  mark_best_over_inits(recs);
  EXPECT_FALSE(recs[0].best_over_inits);
  EXPECT_TRUE(recs[1].best_over_inits);
  EXPECT_FALSE(recs[2].best_over_inits);
}

TEST_F(HarnessTest, ReportsRoundTrip) {
  const RunOutput out = run_equal_time(X_, "exact/1", small_competitors(), 3, reference_);
  emit_reports(out, dir_);
  const auto back = read_records(dir_ / "records.jsonl");
  ASSERT_EQ(back.size(), out.records.size());
  for (std::size_t k = 0; k < back.size(); ++k) {
    EXPECT_EQ(record_to_json(back[k]).dump(), record_to_json(out.records[k]).dump());
  }
  std::size_t traces = 0;
  for (const auto& e : fs::directory_iterator(dir_ / "traces")) {
    ++traces;
    EXPECT_EQ(lines(e.path()).at(0), "wall_clock_s,objective,iteration");
    EXPECT_EQ(e.path().filename().string().find('/'), std::string::npos);
  }
  EXPECT_EQ(traces, out.records.size());
  const auto summary = lines(dir_ / "summary.csv");
  ASSERT_EQ(summary.size(), 2u);
  EXPECT_EQ(summary[0], "dataset_id,r,protocol,enmf,hals,mult");
  EXPECT_EQ(summary[1].rfind("exact/1,3,equal_time,", 0), 0u);
}

TEST_F(HarnessTest, MalformedJsonlNamesTheLine) {
  fs::create_directories(dir_);
  emit_reports(run_equal_time(X_, "exact", {}, 3, reference_), dir_);
  std::ofstream(dir_ / "records.jsonl", std::ios::app) << "{not json\n";
  try {
    read_records(dir_ / "records.jsonl");
    FAIL() << "expected ParseError";
  } catch (const ParseError& e) {
    EXPECT_EQ(e.location(), 2u);
  }
}

TEST(BenchmarkConfig, ParsesAndRejectsUnknownKeys) {
  const Json j = Json::parse(R"({
    "datasets": [{"kind": "exact", "id": "e", "n": 20, "m": 15, "r": 2, "sparsity": 0.1, "seed": 3}],
    "ranks": [2],
    "algorithms": ["hals", "mult"],
    "protocols": ["equal_error"],
    "random_inits": 1,
    "nndsvd": false,
    "max_iters": 40,
    "time_cap_s": 5
  })");
  const BenchmarkConfig c = benchmark_config_from_json(j);
  EXPECT_EQ(c.datasets.size(), 1u);
  EXPECT_EQ(c.algorithms.size(), 2u);
  ASSERT_EQ(c.protocols.size(), 1u);
  EXPECT_EQ(c.protocols[0], Protocol::Kind::equal_error);
  EXPECT_EQ(c.options.max_iters, 40);
  EXPECT_EQ(*c.options.time_cap_s, 5.0);

  Json bad = j;
  bad["budget"] = 1;
  EXPECT_THROW(benchmark_config_from_json(bad), ValidationError);
  bad = j;
  bad["protocols"] = {"equal_effort"};
  EXPECT_THROW(benchmark_config_from_json(bad), ValidationError);
  bad = j;
  bad["ranks"] = Json::array();
  EXPECT_THROW(benchmark_config_from_json(bad), ValidationError);

  const RunOutput out = run_benchmark(c);
  // Reference plus one random init per algorithm.
  ASSERT_EQ(out.records.size(), 3u);
  EXPECT_EQ(out.records[0].algorithm, "enmf");
  EXPECT_DOUBLE_EQ(out.records[1].protocol.target, out.records[0].final_objective);
}
