// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "csifb/augment.hpp"
#include "csifb/train.hpp"
#include "csifb/transnet.hpp"

namespace csifb {

/// One line of the results table. Column order of the CSV follows field order.
struct ResultRow {
  std::string experiment_id;
  double cr = 0;
  std::string scenario;
  std::string method;  // direct, spa-align, transnet-aug<K>, retrained, aug-<variant>
  double nmse_linear = 0;
  double nmse_db = 0;
  std::size_t params_updated = 0;
  double wall_time_s = 0;

  static ResultRow make(std::string id, double cr, std::string scenario, std::string method,
                        double nmse_linear, std::size_t params_updated, double wall_time_s);
};

const std::vector<std::string>& result_columns();

/// Raised for unparseable result files; the message carries "path:line: ...".
class ParseError : public FormatError {
 public:
  ParseError(const std::string& source, std::size_t line, const std::string& what);
  std::size_t line() const { return line_; }

 private:
  std::size_t line_;
};

std::string results_csv(const std::vector<ResultRow>& rows);
void write_results_csv(const std::filesystem::path& path, const std::vector<ResultRow>& rows);
std::vector<ResultRow> parse_results_csv(const std::string& text, const std::string& source = "<csv>");
std::vector<ResultRow> read_results_csv(const std::filesystem::path& path);

struct DataSizes {
  std::size_t train = 2000;
  std::size_t val = 200;
  std::size_t test = 500;
  std::size_t target_base = 50;  // new-scenario samples available before augmentation
};

/// Index ranges used for each split, so that no sample is shared between splits.
inline constexpr std::int64_t kTestIndexBase = 1'000'000;

struct AugmentStudy {
  bool enabled = false;
  std::size_t base_size = 100;
  std::vector<std::string> variants{"repeat", "ads+prs"};  // also "ads", "prs"
  AugmentConfig augment;  // ranges and target_size; flags are set per variant
};

struct ExperimentConfig {
  std::string id = "desk";
  std::uint64_t seed = 1;
  ChannelDims dims;
  ScenarioConfig anchor;
  std::optional<ScenarioConfig> target;
  std::vector<double> cr_list{0.25};
  int n_iter = 3;
  int channels = 16;
  TrainConfig train;
  TransTrainConfig transnet;
  AugmentConfig transfer_augment;  // applied to the target base set; target_size = K
  ShiftSearchConfig search;
  AugmentStudy study;
  bool retrain_target = false;
  DataSizes sizes;
  std::filesystem::path out_dir;            // artifacts; empty = keep nothing on disk
  std::filesystem::path anchor_checkpoint;  // reuse instead of training (single CR only)

  void validate() const;
};

ExperimentConfig experiment_from_json(const nlohmann::json& j);
nlohmann::json to_json(const ExperimentConfig& cfg);
ExperimentConfig load_experiment_config(const std::filesystem::path& path);

/// Named sub-seeds of the root seed.
struct SeedPlan {
  std::uint64_t data = 0;
  std::uint64_t init = 0;
  std::uint64_t augment = 0;
  std::uint64_t transnet = 0;

  static SeedPlan from_root(std::uint64_t root);
  nlohmann::json to_json() const;
};

/// Scenario with its sample seed rebased onto the data sub-seed.
ScenarioConfig seeded_scenario(const ScenarioConfig& s, const SeedPlan& seeds);

/// A stage of run_experiment failed; what() is "<stage>: <cause>".
class StageError : public std::runtime_error {
 public:
  StageError(std::string stage, const std::string& cause);
  const std::string& stage() const { return stage_; }

 private:
  std::string stage_;
};

using LogFn = std::function<void(const std::string&)>;

/// generate -> train anchor -> (search shift -> augment -> train plug-in) -> evaluate, per CR.
/// Writes results.csv and seeds.json into cfg.out_dir when set.
std::vector<ResultRow> run_experiment(const ExperimentConfig& cfg, const LogFn& log = {});

struct ReportSummary {
  std::size_t rows = 0;
  std::vector<std::filesystem::path> charts;
  std::filesystem::path summary;
};

/// One NMSE-vs-CR chart per scenario, one bar chart of aug-* rows, and summary.txt.
ReportSummary report(const std::filesystem::path& results_csv, const std::filesystem::path& out_dir);
ReportSummary report(const std::vector<ResultRow>& rows, const std::filesystem::path& out_dir);

/// Fixed-width text table of the rows.
std::string summary_table(const std::vector<ResultRow>& rows);

/// Distinct CR values of the scenario's rows, ascending: the x axis of its chart.
std::vector<double> chart_cr_axis(const std::vector<ResultRow>& rows, const std::string& scenario);

}  // namespace csifb
