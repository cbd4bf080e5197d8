// SPDX-License-Identifier: Apache-2.0
#include <gtest/gtest.h>

#include <cmath>
#include <fstream>
#include <sstream>

#include "csifb/checkpoint.hpp"
#include "csifb/harness.hpp"
#include "csifb/metrics.hpp"
#include "test_util.hpp"

using namespace csifb;

namespace {

ExperimentConfig tiny_experiment() {
  ExperimentConfig cfg;
  cfg.id = "tiny";
  cfg.seed = 5;
  cfg.dims = {32, 8, 8};
  cfg.anchor = test::small_scenario();
  cfg.anchor.name = "A";
  ScenarioConfig b = cfg.anchor;
  b.name = "B";
  b.delay_offset_bins = 1;
  cfg.target = b;
  cfg.cr_list = {0.25};
  cfg.n_iter = 1;
  cfg.channels = 2;
  cfg.train.epochs = 2;
  cfg.train.batch_size = 8;
  cfg.transnet.epochs = 2;
  cfg.transnet.batch_size = 8;
  cfg.transfer_augment.angular_shift = {-1, 1};
  cfg.transfer_augment.delay_shift = {0, 0};
  cfg.transfer_augment.target_size = 12;
  cfg.search.max_samples = 4;
  cfg.sizes = {16, 0, 8, 4};
  return cfg;
}

std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace

TEST(Metrics, NmseExamples) {
  test::Rng rng(1);
  const std::vector<AngularDelayCsi> truth{{rng.complex_matrix(3, 3)}, {rng.complex_matrix(3, 3)}};
  EXPECT_EQ(nmse(truth, truth), 0.0);
  const std::vector<AngularDelayCsi> zeros(2, AngularDelayCsi{CMatrix::Zero(3, 3)});
  EXPECT_NEAR(nmse(truth, zeros), 1.0, 1e-15);
  EXPECT_NEAR(to_db(nmse(truth, zeros)), 0.0, 1e-12);
  std::vector<AngularDelayCsi> twice;
  for (const auto& h : truth) twice.push_back({h.values * 2.0});
  EXPECT_NEAR(nmse(truth, twice), 1.0, 1e-15);
  EXPECT_THROW(nmse(truth, std::span(zeros).first(1)), DimensionError);
  EXPECT_THROW(nmse(std::span<const AngularDelayCsi>{}, std::span<const AngularDelayCsi>{}), DimensionError);
  EXPECT_THROW(nmse(zeros, truth), DomainError);
  EXPECT_NEAR(to_db(0.1), -10.0, 1e-12);
}

TEST(Results, RowKeepsDbConsistent) {
  const auto row = ResultRow::make("x", 0.25, "A", "direct", 0.05, 0, 1.5);
  EXPECT_NEAR(row.nmse_db, 10 * std::log10(0.05), 1e-12);
  EXPECT_EQ(result_columns(), (std::vector<std::string>{"experiment_id", "cr", "scenario", "method", "nmse_linear",
                                                        "nmse_db", "params_updated", "wall_time_s"}));
}

TEST(Results, CsvRoundTrip) {
  std::vector<ResultRow> rows{ResultRow::make("e1", 0.25, "A", "retrained", 0.063, 12345, 2.0),
                              ResultRow::make("e1", 0.0625, "B, odd \"name\"", "transnet-aug200", 1e-3, 1830, 0.5)};
  const auto text = results_csv(rows);
  EXPECT_EQ(text.substr(0, text.find('\n')),
            "experiment_id,cr,scenario,method,nmse_linear,nmse_db,params_updated,wall_time_s");
  const auto back = parse_results_csv(text);
  ASSERT_EQ(back.size(), 2u);
  for (std::size_t k = 0; k < 2; ++k) {
    EXPECT_EQ(back[k].scenario, rows[k].scenario);
    EXPECT_EQ(back[k].method, rows[k].method);
    EXPECT_EQ(back[k].cr, rows[k].cr);
    EXPECT_EQ(back[k].nmse_linear, rows[k].nmse_linear);
    EXPECT_EQ(back[k].params_updated, rows[k].params_updated);
  }
  EXPECT_TRUE(parse_results_csv(results_csv({})).empty());
}

TEST(Results, ParseErrorsCarryLineNumbers) {
  const std::string header = "experiment_id,cr,scenario,method,nmse_linear,nmse_db,params_updated,wall_time_s\n";
  auto line_of = [](const std::string& text) -> std::size_t {
    try {
      parse_results_csv(text, "r.csv");
    } catch (const ParseError& e) {
      EXPECT_NE(std::string(e.what()).find("r.csv:"), std::string::npos);
      return e.line();
    }
    return 0;
  };
  EXPECT_EQ(line_of(header + "a,0.25,A,direct,0.1,-10,0,1\na,0.25,A,direct\n"), 3u);
  EXPECT_EQ(line_of(header + "a,zero,A,direct,0.1,-10,0,1\n"), 2u);
  EXPECT_EQ(line_of(header + "a,0.25,A,direct,0.1,-3,0,1\n"), 2u);
  EXPECT_EQ(line_of("wrong,header\n"), 1u);
  EXPECT_EQ(line_of(header + "a,0.25,\"A,direct,0.1,-10,0,1\n"), 2u);
}

TEST(Config, JsonRoundTripAndUnknownKeys) {
  auto cfg = tiny_experiment();
  cfg.study.enabled = true;
  cfg.study.base_size = 4;
  const auto j = to_json(cfg);
  const auto back = experiment_from_json(j);
  EXPECT_EQ(to_json(back), j);
  EXPECT_EQ(back.target->name, "B");
  EXPECT_EQ(back.sizes.target_base, 4u);

  auto bad = j;
  bad["epochs"] = 3;
  EXPECT_THROW(experiment_from_json(bad), ConfigError);
  bad = j;
  bad["cr_list"] = "quarter";
  EXPECT_THROW(experiment_from_json(bad), ConfigError);

  auto invalid = cfg;
  invalid.cr_list = {0.25, 0.25};
  EXPECT_THROW(invalid.validate(), ConfigError);
  invalid = cfg;
  invalid.target->name = "A";
  EXPECT_THROW(invalid.validate(), ConfigError);
  invalid = cfg;
  invalid.study.variants = {"gan"};
  EXPECT_THROW(invalid.validate(), ConfigError);
}

TEST(Seeds, SubSeedsAreDistinctAndStable) {
  const auto a = SeedPlan::from_root(1), b = SeedPlan::from_root(1), c = SeedPlan::from_root(2);
  EXPECT_EQ(a.to_json(), b.to_json());
  EXPECT_NE(a.data, c.data);
  EXPECT_NE(a.data, a.init);
  EXPECT_NE(a.augment, a.transnet);
}

TEST(Report, EmptyResultSet) {
  test::TempDir dir;
  const auto s = report(std::vector<ResultRow>{}, dir.path());
  EXPECT_EQ(s.rows, 0u);
  EXPECT_TRUE(s.charts.empty());
  EXPECT_TRUE(std::filesystem::exists(s.summary));
}

TEST(Report, SingleRowGivesOnePointChart) {
  test::TempDir dir;
  const auto s = report({ResultRow::make("e", 0.25, "A", "retrained", 0.1, 1, 1)}, dir.path());
  ASSERT_EQ(s.charts.size(), 1u);
  EXPECT_EQ(s.charts[0].filename(), "nmse_vs_cr_A.svg");
  EXPECT_NE(slurp(s.charts[0]).find("<svg"), std::string::npos);
}

TEST(Report, AxisHoldsExactlyTheConfiguredRatios) {
  std::vector<ResultRow> rows;
  for (double cr : {0.25, 0.125, 0.0625, 0.03125}) {
    rows.push_back(ResultRow::make("e", cr, "A", "retrained", 0.1 + cr, 1, 1));
    rows.push_back(ResultRow::make("e", cr, "B", "direct", 0.3, 0, 1));
  }
  rows.push_back(ResultRow::make("e", 0.25, "A", "aug-repeat-100", 0.2, 1, 1));
  EXPECT_EQ(chart_cr_axis(rows, "A"), (std::vector<double>{0.03125, 0.0625, 0.125, 0.25}));
  test::TempDir dir;
  write_results_csv(dir.path() / "r.csv", rows);
  const auto s = report(dir.path() / "r.csv", dir.path() / "out");
  EXPECT_EQ(s.rows, rows.size());
  EXPECT_EQ(s.charts.size(), 3u);  // two scenarios plus the augmentation bars
  EXPECT_NE(slurp(s.summary).find("aug-repeat-100"), std::string::npos);

  std::ofstream(dir.path() / "bad.csv") << "nonsense\n";
  EXPECT_THROW(report(dir.path() / "bad.csv", dir.path() / "out2"), ParseError);
}

TEST(Experiment, TinyRunIsDeterministicAndSelfConsistent) {
  test::TempDir dir;
  auto cfg = tiny_experiment();
  cfg.out_dir = dir.path() / "run1";
  const auto rows = run_experiment(cfg);
  ASSERT_EQ(rows.size(), 4u);
  EXPECT_EQ(rows[0].method, "retrained");
  EXPECT_EQ(rows[1].method, "direct");
  EXPECT_EQ(rows[2].method, "spa-align");
  EXPECT_EQ(rows[3].method, "transnet-aug12");
  EXPECT_EQ(rows[3].params_updated, 1830u);
  for (const auto& r : rows) EXPECT_NEAR(r.nmse_db, 10 * std::log10(r.nmse_linear), 1e-9);

  cfg.out_dir = dir.path() / "run2";
  const auto again = run_experiment(cfg);
  ASSERT_EQ(again.size(), rows.size());
  for (std::size_t k = 0; k < rows.size(); ++k) EXPECT_EQ(again[k].nmse_linear, rows[k].nmse_linear);
  auto strip_time = [](std::vector<ResultRow> rs) {
    for (auto& r : rs) r.wall_time_s = 0;
    return results_csv(rs);
  };
  EXPECT_EQ(strip_time(read_results_csv(dir.path() / "run1" / "results.csv")),
            strip_time(read_results_csv(dir.path() / "run2" / "results.csv")));
  EXPECT_TRUE(std::filesystem::exists(dir.path() / "run1" / "seeds.json"));

  // The saved anchor evaluated on an independently regenerated test split reproduces "retrained".
  const auto ck = load_checkpoint(dir.path() / "run1" / "cr-0.25" / "anchor");
  const auto scen = seeded_scenario(cfg.anchor, SeedPlan::from_root(cfg.seed));
  const auto test_a = generate_dataset(scen, Split::test, 8, kTestIndexBase, cfg.dims);
  EXPECT_EQ(nmse(test_a.samples, reconstruct<float>(test_a.samples, ck.params)), rows[0].nmse_linear);
}

TEST(Experiment, StageFailureNamesTheStage) {
  auto cfg = tiny_experiment();
  cfg.cr_list = {};
  try {
    run_experiment(cfg);
    FAIL() << "expected a StageError";
  } catch (const StageError& e) {
    EXPECT_EQ(e.stage(), "validate");
    EXPECT_NE(std::string(e.what()).find("validate: "), std::string::npos);
  }
  cfg = tiny_experiment();
  cfg.anchor_checkpoint = "/nonexistent/anchor";
  try {
    run_experiment(cfg);
    FAIL() << "expected a StageError";
  } catch (const StageError& e) {
    EXPECT_EQ(e.stage(), "validate");
  }
}
