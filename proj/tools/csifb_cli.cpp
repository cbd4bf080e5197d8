// SPDX-License-Identifier: Apache-2.0
#include <CLI11.hpp>

#include <filesystem>
#include <iostream>
#include <optional>

#include "csifb/augment.hpp"
#include "csifb/checkpoint.hpp"
#include "csifb/harness.hpp"
#include "csifb/metrics.hpp"
#include "csifb/transnet.hpp"

namespace fs = std::filesystem;
using namespace csifb;

namespace {

struct Common {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string out;
};

void add_common(CLI::App* cmd, Common& c, bool out_required = true) {
  cmd->add_option("--config", c.config, "experiment config (JSON)")->check(CLI::ExistingFile);
  cmd->add_option("--seed", c.seed, "root seed; overrides the config");
  auto* o = cmd->add_option("--out", c.out, "output path");
  if (out_required) o->required();
}

ExperimentConfig resolve(const Common& c) {
  ExperimentConfig cfg = c.config.empty() ? ExperimentConfig{} : load_experiment_config(c.config);
  if (c.seed) cfg.seed = *c.seed;
  return cfg;
}

void log_line(const std::string& s) { std::cerr << s << '\n'; }

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"CSI feedback toolkit: data generation, unfolded-decoder training, scenario "
               "adaptation and evaluation"};
  app.require_subcommand(1);

  // gen-data
  Common gen;
  std::string gen_scenario = "anchor", gen_split = "train";
  std::int64_t gen_count = -1, gen_first = -1;
  auto* cmd_gen = app.add_subcommand("gen-data", "generate a synthetic dataset");
  add_common(cmd_gen, gen);
  cmd_gen->add_option("--scenario", gen_scenario, "anchor | target")->check(CLI::IsMember({"anchor", "target"}));
  cmd_gen->add_option("--split", gen_split, "train | test")->check(CLI::IsMember({"train", "test"}));
  cmd_gen->add_option("--count", gen_count, "number of samples (default from sizes)");
  cmd_gen->add_option("--first", gen_first, "first sample index (default per split)");

  // train-anchor
  Common ta;
  std::string ta_data, ta_val;
  double ta_cr = 0;
  auto* cmd_ta = app.add_subcommand("train-anchor", "train the unfolded decoder and measurement matrix");
  add_common(cmd_ta, ta);
  cmd_ta->add_option("--data", ta_data, "training dataset directory")->required();
  cmd_ta->add_option("--val", ta_val, "validation dataset directory");
  cmd_ta->add_option("--cr", ta_cr, "compression ratio (default: first of cr_list)");

  // search-shift
  Common ss;
  std::string ss_data, ss_anchor, ss_method = "search", ss_anchor_data;
  auto* cmd_ss = app.add_subcommand("search-shift", "find the sparsity-aligning shift for a new scenario");
  add_common(cmd_ss, ss);
  cmd_ss->add_option("--data", ss_data, "new-scenario dataset")->required();
  cmd_ss->add_option("--anchor", ss_anchor, "anchor checkpoint directory");
  cmd_ss->add_option("--method", ss_method, "search | xcorr")->check(CLI::IsMember({"search", "xcorr"}));
  cmd_ss->add_option("--anchor-data", ss_anchor_data, "anchor-scenario dataset (xcorr only)");

  // augment
  Common au;
  std::string au_data;
  std::optional<std::size_t> au_target;
  bool au_no_ads = false, au_no_prs = false;
  auto* cmd_au = app.add_subcommand("augment", "expand a dataset by shifting and phase randomization");
  add_common(cmd_au, au);
  cmd_au->add_option("--data", au_data, "base dataset")->required();
  cmd_au->add_option("--target-size", au_target, "output size (default from transfer_augment)");
  cmd_au->add_flag("--no-ads", au_no_ads, "disable magnitude shifting");
  cmd_au->add_flag("--no-prs", au_no_prs, "disable phase randomization");

  // train-trans
  Common tt;
  std::string tt_data, tt_anchor, tt_steps, tt_val;
  auto* cmd_tt = app.add_subcommand("train-trans", "train the translation/retranslation plug-in");
  add_common(cmd_tt, tt);
  cmd_tt->add_option("--data", tt_data, "new-scenario (augmented) dataset")->required();
  cmd_tt->add_option("--anchor", tt_anchor, "anchor checkpoint")->required();
  cmd_tt->add_option("--steps", tt_steps, "steps JSON from search-shift")->required();
  cmd_tt->add_option("--val", tt_val, "validation dataset");

  // eval
  Common ev;
  std::string ev_data, ev_anchor, ev_plugin, ev_steps, ev_method;
  double ev_cr = 0;
  auto* cmd_ev = app.add_subcommand("eval", "evaluate NMSE and append a result row");
  add_common(cmd_ev, ev);
  cmd_ev->add_option("--data", ev_data, "test dataset")->required();
  cmd_ev->add_option("--anchor", ev_anchor, "anchor checkpoint")->required();
  auto* plugin_opt = cmd_ev->add_option("--plugin", ev_plugin, "plug-in directory (transnet)");
  cmd_ev->add_option("--steps", ev_steps, "steps JSON (shift-only adaptation)")->excludes(plugin_opt);
  cmd_ev->add_option("--method", ev_method, "method tag written to the CSV");

  // report
  Common rp;
  std::string rp_results;
  auto* cmd_rp = app.add_subcommand("report", "charts and a summary table from results.csv");
  add_common(cmd_rp, rp);
  cmd_rp->add_option("--results", rp_results, "results CSV")->required()->check(CLI::ExistingFile);

  // run
  Common run;
  auto* cmd_run = app.add_subcommand("run", "run the whole experiment described by --config");
  add_common(cmd_run, run, false);

  CLI11_PARSE(app, argc, argv);

  try {
    if (*cmd_gen) {
      const auto cfg = resolve(gen);
      const auto seeds = SeedPlan::from_root(cfg.seed);
      if (gen_scenario == "target" && !cfg.target) throw ConfigError("config has no target scenario");
      const auto scen = seeded_scenario(gen_scenario == "anchor" ? cfg.anchor : *cfg.target, seeds);
      const Split split = split_from_string(gen_split);
      if (gen_count < 0) {
        gen_count = static_cast<std::int64_t>(split == Split::test ? cfg.sizes.test
                                              : gen_scenario == "target" ? cfg.sizes.target_base
                                                                         : cfg.sizes.train);
      }
      if (gen_first < 0) gen_first = split == Split::test ? kTestIndexBase : 0;
      auto ds = generate_dataset(scen, split, gen_count, gen_first, cfg.dims);
      ds.provenance = {{"root_seed", cfg.seed}, {"first_index", gen_first}};
      save_dataset(ds, gen.out);
      std::cout << "wrote " << ds.size() << " samples to " << gen.out << '\n';
    } else if (*cmd_ta) {
      const auto cfg = resolve(ta);
      const double cr = ta_cr > 0 ? ta_cr : cfg.cr_list.front();
      const auto train = load_dataset(ta_data);
      std::optional<Dataset> val;
      if (!ta_val.empty()) val = load_dataset(ta_val);
      TrainConfig tc = cfg.train;
      tc.seed = SeedPlan::from_root(cfg.seed).init;
      const auto shape = DecoderShape::for_ratio(cr, train.r_d, train.n_b, cfg.channels, cfg.n_iter);
      auto model = train_anchor(train, tc, shape, val ? &*val : nullptr, [](const EpochLog& e) {
        std::cerr << "epoch " << e.epoch << " loss " << e.loss_total << " val_nmse_db " << e.val_nmse_db << '\n';
      });
      save_checkpoint(model.params, {cfg.seed, tc.epochs, train.scenario.name}, ta.out);
      write_training_log(fs::path(ta.out) / "training_log.csv", model.log);
      std::cout << "saved checkpoint (" << model.params.parameter_count() << " parameters) to " << ta.out << '\n';
    } else if (*cmd_ss) {
      const auto cfg = resolve(ss);
      const auto ds = load_dataset(ss_data);
      ShiftSteps steps;
      nlohmann::json j;
      if (ss_method == "xcorr") {
        if (ss_anchor_data.empty()) throw ConfigError("--method xcorr needs --anchor-data");
        const auto ref = load_dataset(ss_anchor_data);
        steps = cross_correlation_shift(ds.samples, ref.samples);
      } else {
        if (ss_anchor.empty()) throw ConfigError("--method search needs --anchor");
        const auto anchor = load_checkpoint(ss_anchor).params;
        const auto res = search_shift_steps(ds.samples, anchor, cfg.search);
        steps = res.best;
        j["cost"] = res.best_cost;
        j["grid_points"] = res.grid.size();
      }
      j["i"] = steps.i;
      j["j"] = steps.j;
      j["method"] = ss_method;
      write_json_file(ss.out, j);
      std::cout << "steps i=" << steps.i << " j=" << steps.j << '\n';
    } else if (*cmd_au) {
      const auto cfg = resolve(au);
      const auto base = load_dataset(au_data);
      AugmentConfig a = cfg.transfer_augment;
      a.seed = SeedPlan::from_root(cfg.seed).augment;
      if (au_target) a.target_size = *au_target;
      if (au_no_ads) a.use_ads = false;
      if (au_no_prs) a.use_prs = false;
      const auto out = augment_dataset(base, a);
      save_dataset(out, au.out);
      std::cout << "wrote " << out.size() << " samples to " << au.out << '\n';
    } else if (*cmd_tt) {
      const auto cfg = resolve(tt);
      const auto ds = load_dataset(tt_data);
      const auto anchor = load_checkpoint(tt_anchor).params;
      const auto sj = read_json_file(tt_steps);
      const ShiftSteps steps{sj.at("i").get<int>(), sj.at("j").get<int>()};
      std::optional<Dataset> val;
      if (!tt_val.empty()) val = load_dataset(tt_val);
      TransTrainConfig t = cfg.transnet;
      t.seed = SeedPlan::from_root(cfg.seed).transnet;
      auto model = train_transnet(ds, anchor, steps, t, val ? &*val : nullptr, [](const TransEpochLog& e) {
        std::cerr << "epoch " << e.epoch << " loss " << e.loss << " val_nmse_db " << e.val_nmse_db << '\n';
      });
      save_plugin(model.plugin, tt.out);
      std::cout << "saved plug-in (" << model.plugin.translation.parameter_count() << " + "
                << model.plugin.retranslation.parameter_count() << " parameters) to " << tt.out << '\n';
    } else if (*cmd_ev) {
      const auto cfg = resolve(ev);
      const auto ds = load_dataset(ev_data);
      const auto ck = load_checkpoint(ev_anchor);
      ev_cr = ck.params.shape.cr;
      std::vector<AngularDelayCsi> est;
      std::size_t updated = 0;
      std::string method = ev_method;
      if (!ev_plugin.empty()) {
        const auto plugin = load_plugin(ev_plugin);
        est = feedback_new_scenario(ds.samples, plugin, ck.params);
        updated = plugin.translation.parameter_count();
        if (method.empty()) method = "transnet";
      } else if (!ev_steps.empty()) {
        const auto sj = read_json_file(ev_steps);
        est = align_only_feedback(ds.samples, {sj.at("i").get<int>(), sj.at("j").get<int>()}, ck.params);
        if (method.empty()) method = "spa-align";
      } else {
        est = reconstruct<float>(ds.samples, ck.params);
        if (method.empty()) method = ds.scenario.name == ck.info.scenario ? "retrained" : "direct";
        if (method == "retrained") updated = ck.params.parameter_count();
      }
      const auto row = ResultRow::make(cfg.id, ev_cr, ds.scenario.name, method, nmse(ds.samples, est), updated, 0.0);
      std::vector<ResultRow> rows;
      if (fs::exists(ev.out)) rows = read_results_csv(ev.out);
      rows.push_back(row);
      write_results_csv(ev.out, rows);
      std::cout << method << " on " << row.scenario << ": NMSE " << row.nmse_db << " dB\n";
    } else if (*cmd_rp) {
      const auto s = report(fs::path(rp_results), rp.out);
      std::cout << s.rows << " row(s), " << s.charts.size() << " chart(s), summary in " << s.summary << '\n';
    } else if (*cmd_run) {
      auto cfg = resolve(run);
      if (!run.out.empty()) cfg.out_dir = run.out;
      const auto rows = run_experiment(cfg, log_line);
      std::cout << summary_table(rows);
    }
  } catch (const StageError& e) {
    std::cerr << "error in stage " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
