// SPDX-License-Identifier: Apache-2.0
#include "csifb/harness.hpp"

#include <charconv>
#include <chrono>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

#include "csifb/checkpoint.hpp"
#include "csifb/metrics.hpp"

namespace csifb {

namespace fs = std::filesystem;

// --- result rows ----------------------------------------------------------------------------

ResultRow ResultRow::make(std::string id, double cr, std::string scenario, std::string method,
                          double nmse_linear, std::size_t params_updated, double wall_time_s) {
  return {std::move(id),    cr,          std::move(scenario), std::move(method), nmse_linear,
          to_db(nmse_linear), params_updated, wall_time_s};
}

const std::vector<std::string>& result_columns() {
  static const std::vector<std::string> cols{"experiment_id", "cr",      "scenario",
                                             "method",        "nmse_linear", "nmse_db",
                                             "params_updated", "wall_time_s"};
  return cols;
}

ParseError::ParseError(const std::string& source, std::size_t line, const std::string& what)
    : FormatError(source + ":" + std::to_string(line) + ": " + what), line_(line) {}

namespace {

std::string quote(const std::string& s) {
  if (s.find_first_of(",\"\n\r") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + "\"";
}

std::string number(double v) {
  std::ostringstream os;
  os.precision(10);
  os << v;
  return os.str();
}

// Splits one CSV record; false on an unterminated quote.
bool split_record(const std::string& line, std::vector<std::string>& fields) {
  fields.assign(1, std::string{});
  bool quoted = false;
  for (std::size_t k = 0; k < line.size(); ++k) {
    const char c = line[k];
    if (quoted) {
      if (c == '"' && k + 1 < line.size() && line[k + 1] == '"') {
        fields.back() += '"';
        ++k;
      } else if (c == '"') {
        quoted = false;
      } else {
        fields.back() += c;
      }
    } else if (c == '"') {
      quoted = true;
    } else if (c == ',') {
      fields.emplace_back();
    } else {
      fields.back() += c;
    }
  }
  return !quoted;
}

template <typename T>
T parse_number(const std::string& s, const std::string& source, std::size_t line, const char* col) {
  T value{};
  if constexpr (std::is_floating_point_v<T>) {
    // from_chars rejects "nan"/"inf" spellings produced by streams; accept those explicitly.
    if (s == "nan" || s == "-nan") return std::numeric_limits<T>::quiet_NaN();
    if (s == "inf") return std::numeric_limits<T>::infinity();
    if (s == "-inf") return -std::numeric_limits<T>::infinity();
  }
  const auto* end = s.data() + s.size();
  const auto [ptr, ec] = std::from_chars(s.data(), end, value);
  if (s.empty() || ec != std::errc{} || ptr != end) {
    throw ParseError(source, line, std::string("column ") + col + ": not a number: '" + s + "'");
  }
  return value;
}

}  // namespace

std::string results_csv(const std::vector<ResultRow>& rows) {
  std::string out;
  const auto& cols = result_columns();
  for (std::size_t k = 0; k < cols.size(); ++k) out += (k ? "," : "") + cols[k];
  out += '\n';
  for (const auto& r : rows) {
    out += quote(r.experiment_id) + ',' + number(r.cr) + ',' + quote(r.scenario) + ',' +
           quote(r.method) + ',' + number(r.nmse_linear) + ',' + number(r.nmse_db) + ',' +
           std::to_string(r.params_updated) + ',' + number(r.wall_time_s) + '\n';
  }
  return out;
}

void write_results_csv(const fs::path& path, const std::vector<ResultRow>& rows) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot open '" + path.string() + "' for writing");
  out << results_csv(rows);
  if (!out) throw IoError("write failed for '" + path.string() + "'");
}

std::vector<ResultRow> parse_results_csv(const std::string& text, const std::string& source) {
  std::istringstream in(text);
  std::string line;
  std::vector<std::string> fields;
  std::vector<ResultRow> rows;
  std::size_t lineno = 0;
  bool header = false;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    if (!split_record(line, fields)) throw ParseError(source, lineno, "unterminated quote");
    if (!header) {
      if (fields != result_columns()) throw ParseError(source, lineno, "unexpected header");
      header = true;
      continue;
    }
    if (fields.size() != result_columns().size()) {
      throw ParseError(source, lineno, "expected " + std::to_string(result_columns().size()) +
                                           " fields, got " + std::to_string(fields.size()));
    }
    ResultRow r;
    r.experiment_id = fields[0];
    r.cr = parse_number<double>(fields[1], source, lineno, "cr");
    r.scenario = fields[2];
    r.method = fields[3];
    r.nmse_linear = parse_number<double>(fields[4], source, lineno, "nmse_linear");
    r.nmse_db = parse_number<double>(fields[5], source, lineno, "nmse_db");
    r.params_updated = parse_number<std::size_t>(fields[6], source, lineno, "params_updated");
    r.wall_time_s = parse_number<double>(fields[7], source, lineno, "wall_time_s");
    if (std::abs(to_db(r.nmse_linear) - r.nmse_db) > 1e-6 &&
        !(std::isnan(r.nmse_db) && std::isnan(to_db(r.nmse_linear)))) {
      throw ParseError(source, lineno, "nmse_db does not equal 10*log10(nmse_linear)");
    }
    rows.push_back(std::move(r));
  }
  if (!header) throw ParseError(source, lineno == 0 ? 1 : lineno, "missing header");
  return rows;
}

std::vector<ResultRow> read_results_csv(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open '" + path.string() + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_results_csv(ss.str(), path.string());
}

// --- configuration --------------------------------------------------------------------------

void ExperimentConfig::validate() const {
  if (id.empty()) throw ConfigError("experiment id must not be empty");
  if (cr_list.empty()) throw ConfigError("cr_list must not be empty");
  std::set<double> seen;
  for (double cr : cr_list) {
    if (!seen.insert(cr).second) throw ConfigError("cr_list contains duplicates");
    DecoderShape::for_ratio(cr, dims.r_d, dims.n_b, channels, n_iter).validate();
  }
  anchor.validate(dims);
  if (target) {
    target->validate(dims);
    if (target->name == anchor.name) throw ConfigError("target scenario needs its own name");
    if (sizes.target_base == 0) throw ConfigError("sizes.target_base must be positive");
    transfer_augment.validate(dims.r_d, dims.n_b);
    if (transfer_augment.target_size < sizes.target_base) {
      throw ConfigError("transfer_augment.target_size is smaller than sizes.target_base");
    }
  }
  if (sizes.train == 0 || sizes.test == 0) throw ConfigError("sizes.train and sizes.test must be positive");
  if (train.epochs < 0 || train.batch_size < 1) throw ConfigError("train: bad epochs/batch_size");
  if (transnet.epochs < 0 || transnet.batch_size < 1) throw ConfigError("transnet: bad epochs/batch_size");
  if (study.enabled) {
    if (study.base_size == 0 || study.base_size > sizes.train) {
      throw ConfigError("study.base_size must lie in [1, sizes.train]");
    }
    study.augment.validate(dims.r_d, dims.n_b);
    for (const auto& v : study.variants) {
      if (v != "repeat" && v != "ads" && v != "prs" && v != "ads+prs") {
        throw ConfigError("unknown augmentation variant '" + v + "'");
      }
    }
  }
  if (!anchor_checkpoint.empty()) {
    if (cr_list.size() != 1) throw ConfigError("anchor_checkpoint requires a single CR");
    if (!fs::exists(anchor_checkpoint / "manifest.json")) {
      throw ConfigError("anchor_checkpoint '" + anchor_checkpoint.string() + "' does not exist");
    }
  }
}

namespace {

IntRange range_from_json(const nlohmann::json& j) {
  if (!j.is_array() || j.size() != 2) throw ConfigError("ranges are written as [lo, hi]");
  return {j[0].get<int>(), j[1].get<int>()};
}

template <typename F>
auto with_config_errors(const char* what, F&& f) {
  try {
    return f();
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("config ") + what + ": " + e.what());
  }
}

}  // namespace

ExperimentConfig experiment_from_json(const nlohmann::json& j) {
  static const std::set<std::string> known{
      "id",    "seed",     "dims",             "anchor", "target", "cr_list", "n_iter",
      "channels", "train", "transnet", "transfer_augment", "search", "study", "retrain_target",
      "sizes", "out_dir",  "anchor_checkpoint"};
  if (!j.is_object()) throw ConfigError("config must be a JSON object");
  for (const auto& [key, _] : j.items()) {
    if (!known.contains(key)) throw ConfigError("unknown config key '" + key + "'");
  }
  return with_config_errors("parse", [&] {
    ExperimentConfig c;
    c.id = j.value("id", c.id);
    c.seed = j.value("seed", c.seed);
    if (j.contains("dims")) {
      const auto& d = j["dims"];
      c.dims = {d.value("n_f", c.dims.n_f), d.value("n_b", c.dims.n_b), d.value("r_d", c.dims.r_d)};
    }
    if (j.contains("anchor")) c.anchor = scenario_from_json(j["anchor"]);
    if (j.contains("target") && !j["target"].is_null()) c.target = scenario_from_json(j["target"]);
    if (j.contains("cr_list")) c.cr_list = j["cr_list"].get<std::vector<double>>();
    c.n_iter = j.value("n_iter", c.n_iter);
    c.channels = j.value("channels", c.channels);
    if (j.contains("train")) {
      const auto& t = j["train"];
      c.train.gamma = t.value("gamma", c.train.gamma);
      c.train.epochs = t.value("epochs", c.train.epochs);
      c.train.batch_size = t.value("batch_size", c.train.batch_size);
      c.train.learning_rate = t.value("learning_rate", c.train.learning_rate);
      c.train.train_phi = t.value("train_phi", c.train.train_phi);
    }
    if (j.contains("transnet")) {
      const auto& t = j["transnet"];
      c.transnet.epochs = t.value("epochs", c.transnet.epochs);
      c.transnet.batch_size = t.value("batch_size", c.transnet.batch_size);
      c.transnet.learning_rate = t.value("learning_rate", c.transnet.learning_rate);
      c.transnet.init_noise = t.value("init_noise", c.transnet.init_noise);
    }
    if (j.contains("transfer_augment")) c.transfer_augment = augment_from_json(j["transfer_augment"]);
    if (j.contains("search")) {
      const auto& s = j["search"];
      if (s.contains("delay")) c.search.delay = range_from_json(s["delay"]);
      if (s.contains("angular")) c.search.angular = range_from_json(s["angular"]);
      c.search.max_samples = s.value("max_samples", c.search.max_samples);
    }
    if (j.contains("study")) {
      const auto& s = j["study"];
      c.study.enabled = s.value("enabled", c.study.enabled);
      c.study.base_size = s.value("base_size", c.study.base_size);
      if (s.contains("variants")) c.study.variants = s["variants"].get<std::vector<std::string>>();
      if (s.contains("augment")) c.study.augment = augment_from_json(s["augment"]);
    }
    c.retrain_target = j.value("retrain_target", c.retrain_target);
    if (j.contains("sizes")) {
      const auto& s = j["sizes"];
      c.sizes.train = s.value("train", c.sizes.train);
      c.sizes.val = s.value("val", c.sizes.val);
      c.sizes.test = s.value("test", c.sizes.test);
      c.sizes.target_base = s.value("target_base", c.sizes.target_base);
    }
    c.out_dir = j.value("out_dir", std::string{});
    c.anchor_checkpoint = j.value("anchor_checkpoint", std::string{});
    return c;
  });
}

nlohmann::json to_json(const ExperimentConfig& c) {
  nlohmann::json j = {
      {"id", c.id},
      {"seed", c.seed},
      {"dims", {{"n_f", c.dims.n_f}, {"n_b", c.dims.n_b}, {"r_d", c.dims.r_d}}},
      {"anchor", to_json(c.anchor)},
      {"target", c.target ? to_json(*c.target) : nlohmann::json(nullptr)},
      {"cr_list", c.cr_list},
      {"n_iter", c.n_iter},
      {"channels", c.channels},
      {"train",
       {{"gamma", c.train.gamma},
        {"epochs", c.train.epochs},
        {"batch_size", c.train.batch_size},
        {"learning_rate", c.train.learning_rate},
        {"train_phi", c.train.train_phi}}},
      {"transnet",
       {{"epochs", c.transnet.epochs},
        {"batch_size", c.transnet.batch_size},
        {"learning_rate", c.transnet.learning_rate},
        {"init_noise", c.transnet.init_noise}}},
      {"transfer_augment", to_json(c.transfer_augment)},
      {"search",
       {{"delay", {c.search.delay.lo, c.search.delay.hi}},
        {"angular", {c.search.angular.lo, c.search.angular.hi}},
        {"max_samples", c.search.max_samples}}},
      {"study",
       {{"enabled", c.study.enabled},
        {"base_size", c.study.base_size},
        {"variants", c.study.variants},
        {"augment", to_json(c.study.augment)}}},
      {"retrain_target", c.retrain_target},
      {"sizes",
       {{"train", c.sizes.train},
        {"val", c.sizes.val},
        {"test", c.sizes.test},
        {"target_base", c.sizes.target_base}}},
      {"out_dir", c.out_dir.string()},
      {"anchor_checkpoint", c.anchor_checkpoint.string()}};
  return j;
}

ExperimentConfig load_experiment_config(const fs::path& path) {
  nlohmann::json j;
  try {
    j = read_json_file(path);
  } catch (const FormatError& e) {
    throw ConfigError(e.what());
  }
  return experiment_from_json(j);
}

SeedPlan SeedPlan::from_root(std::uint64_t root) {
  return {derive_seed(root, "data"), derive_seed(root, "init"), derive_seed(root, "augment"),
          derive_seed(root, "transnet")};
}

nlohmann::json SeedPlan::to_json() const {
  return {{"data", data}, {"init", init}, {"augment", augment}, {"transnet", transnet}};
}

ScenarioConfig seeded_scenario(const ScenarioConfig& s, const SeedPlan& seeds) {
  ScenarioConfig out = s;
  out.seed = derive_seed(seeds.data, s.seed);
  return out;
}

StageError::StageError(std::string stage, const std::string& cause)
    : std::runtime_error(stage + ": " + cause), stage_(std::move(stage)) {}

// --- orchestration --------------------------------------------------------------------------

namespace {

class Clock {
 public:
  double seconds() const {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
  }

 private:
  std::chrono::steady_clock::time_point start_ = std::chrono::steady_clock::now();
};

template <typename F>
auto stage(const std::string& name, const LogFn& log, F&& f) {
  if (log) log("[" + name + "]");
  try {
    return f();
  } catch (const StageError&) {
    throw;
  } catch (const std::exception& e) {
    throw StageError(name, e.what());
  }
}

std::string cr_label(double cr) {
  std::ostringstream os;
  os << "cr-" << cr;
  return os.str();
}

Dataset head(const Dataset& ds, std::size_t n) {
  Dataset out = ds;
  out.samples.resize(std::min(n, ds.size()));
  out.name = ds.name + "-head" + std::to_string(out.size());
  return out;
}

AugmentConfig variant_config(const AugmentStudy& study, const std::string& variant, std::uint64_t seed) {
  AugmentConfig a = study.augment;
  a.use_ads = variant == "ads" || variant == "ads+prs";
  a.use_prs = variant == "prs" || variant == "ads+prs";
  a.seed = seed;
  return a;
}

EpochCallback epoch_logger(const LogFn& log, const std::string& what) {
  if (!log) return {};
  return [log, what](const EpochLog& e) {
    std::ostringstream os;
    os << what << " epoch " << e.epoch << " loss " << e.loss_total << " val_nmse_db " << e.val_nmse_db;
    log(os.str());
  };
}

}  // namespace

std::vector<ResultRow> run_experiment(const ExperimentConfig& cfg, const LogFn& log) {
  stage("validate", log, [&] {
    cfg.validate();
    return 0;
  });
  const SeedPlan seeds = SeedPlan::from_root(cfg.seed);
  const ScenarioConfig scen_a = seeded_scenario(cfg.anchor, seeds);
  const std::optional<ScenarioConfig> scen_b =
      cfg.target ? std::optional(seeded_scenario(*cfg.target, seeds)) : std::nullopt;
  if (!cfg.out_dir.empty()) {
    std::error_code ec;
    fs::create_directories(cfg.out_dir, ec);
    if (ec) throw StageError("setup", "cannot create '" + cfg.out_dir.string() + "'");
    nlohmann::json manifest = {{"root_seed", cfg.seed}, {"sub_seeds", seeds.to_json()},
                               {"config", to_json(cfg)}};
    write_json_file(cfg.out_dir / "seeds.json", manifest);
  }

  struct Data {
    Dataset train_a, val_a, test_a, base_b, test_b, train_b;
  };
  const auto data = stage("generate", log, [&] {
    Data d;
    const auto& n = cfg.sizes;
    d.train_a = generate_dataset(scen_a, Split::train, static_cast<std::int64_t>(n.train), 0, cfg.dims);
    if (n.val > 0) {
      d.val_a = generate_dataset(scen_a, Split::train, static_cast<std::int64_t>(n.val),
                                 static_cast<std::int64_t>(n.train), cfg.dims);
    }
    d.test_a = generate_dataset(scen_a, Split::test, static_cast<std::int64_t>(n.test), kTestIndexBase, cfg.dims);
    if (scen_b) {
      d.base_b = generate_dataset(*scen_b, Split::train, static_cast<std::int64_t>(n.target_base), 0, cfg.dims);
      d.test_b = generate_dataset(*scen_b, Split::test, static_cast<std::int64_t>(n.test), kTestIndexBase, cfg.dims);
      if (cfg.retrain_target) {
        d.train_b = generate_dataset(*scen_b, Split::train, static_cast<std::int64_t>(n.train), 0, cfg.dims);
      }
    }
    return d;
  });
  const Dataset* val = data.val_a.empty() ? nullptr : &data.val_a;

  std::vector<ResultRow> rows;
  TrainConfig tcfg = cfg.train;
  tcfg.seed = seeds.init;

  for (double cr : cfg.cr_list) {
    const auto shape = DecoderShape::for_ratio(cr, cfg.dims.r_d, cfg.dims.n_b, cfg.channels, cfg.n_iter);
    const fs::path cell = cfg.out_dir.empty() ? fs::path{} : cfg.out_dir / cr_label(cr);

    Clock anchor_clock;
    const auto anchor = stage("train-anchor", log, [&] {
      if (!cfg.anchor_checkpoint.empty()) {
        auto loaded = load_checkpoint(cfg.anchor_checkpoint);
        if (!(loaded.params.shape == shape)) {
          throw ConfigError("anchor_checkpoint does not match the configured decoder shape");
        }
        return loaded.params;
      }
      auto model = train_anchor(data.train_a, tcfg, shape, val, epoch_logger(log, "anchor"));
      if (!cell.empty()) {
        save_checkpoint(model.params, {cfg.seed, tcfg.epochs, scen_a.name}, cell / "anchor");
        write_training_log(cell / "anchor" / "training_log.csv", model.log);
      }
      return model.params;
    });
    const std::uint64_t anchor_sum = parameter_checksum(anchor);
    stage("evaluate", log, [&] {
      const double e = nmse(data.test_a.samples, reconstruct<float>(data.test_a.samples, anchor));
      rows.push_back(ResultRow::make(cfg.id, cr, scen_a.name, "retrained", e,
                                     anchor.parameter_count(), anchor_clock.seconds()));
      return 0;
    });

    if (scen_b) {
      const auto& test_b = data.test_b.samples;
      stage("evaluate", log, [&] {
        Clock c;
        const double e = nmse(test_b, reconstruct<float>(test_b, anchor));
        rows.push_back(ResultRow::make(cfg.id, cr, scen_b->name, "direct", e, 0, c.seconds()));
        return 0;
      });
      Clock search_clock;
      const auto steps = stage("search-shift", log, [&] {
        const auto res = search_shift_steps(data.base_b.samples, anchor, cfg.search);
        if (log) log("shift steps i=" + std::to_string(res.best.i) + " j=" + std::to_string(res.best.j));
        return res.best;
      });
      const double search_time = search_clock.seconds();
      stage("evaluate", log, [&] {
        Clock c;
        const double e = nmse(test_b, align_only_feedback(test_b, steps, anchor));
        rows.push_back(ResultRow::make(cfg.id, cr, scen_b->name, "spa-align", e, 0, search_time + c.seconds()));
        return 0;
      });
      Clock trans_clock;
      const auto aug = stage("augment", log, [&] {
        AugmentConfig a = cfg.transfer_augment;
        a.seed = seeds.augment;
        return augment_dataset(data.base_b, a);
      });
      const auto plugin = stage("train-transnet", log, [&] {
        TransTrainConfig t = cfg.transnet;
        t.seed = seeds.transnet;
        auto model = train_transnet(aug, anchor, steps, t, nullptr, [&](const TransEpochLog& e) {
          if (log) log("transnet epoch " + std::to_string(e.epoch) + " loss " + std::to_string(e.loss));
        });
        if (!cell.empty()) save_plugin(model.plugin, cell / "plugin");
        return model.plugin;
      });
      if (parameter_checksum(anchor) != anchor_sum) {
        throw StageError("train-transnet", "anchor parameters changed");
      }
      stage("evaluate", log, [&] {
        const double e = nmse(test_b, feedback_new_scenario(test_b, plugin, anchor));
        rows.push_back(ResultRow::make(cfg.id, cr, scen_b->name,
                                       "transnet-aug" + std::to_string(aug.size()), e,
                                       plugin.translation.parameter_count(),
                                       search_time + trans_clock.seconds()));
        return 0;
      });
      if (cfg.retrain_target) {
        stage("train-anchor", log, [&] {
          Clock c;
          auto model = train_anchor(data.train_b, tcfg, shape, nullptr, epoch_logger(log, "retrain"));
          const double e = nmse(test_b, reconstruct<float>(test_b, model.params));
          rows.push_back(ResultRow::make(cfg.id, cr, scen_b->name, "retrained", e,
                                         model.params.parameter_count(), c.seconds()));
          return 0;
        });
      }
    }

    if (cfg.study.enabled) {
      const Dataset base = head(data.train_a, cfg.study.base_size);
      for (const auto& variant : cfg.study.variants) {
        Clock c;
        const auto aug = stage("augment", log, [&] {
          return augment_dataset(base, variant_config(cfg.study, variant, seeds.augment));
        });
        stage("train-anchor", log, [&] {
          auto model = train_anchor(aug, tcfg, shape, val, epoch_logger(log, "aug-" + variant));
          const double e = nmse(data.test_a.samples, reconstruct<float>(data.test_a.samples, model.params));
          rows.push_back(ResultRow::make(cfg.id, cr, scen_a.name,
                                         "aug-" + variant + "-" + std::to_string(base.size()), e,
                                         model.params.parameter_count(), c.seconds()));
          return 0;
        });
      }
    }
  }

  if (!cfg.out_dir.empty()) {
    stage("write-results", log, [&] {
      write_results_csv(cfg.out_dir / "results.csv", rows);
      return 0;
    });
  }
  return rows;
}

}  // namespace csifb
