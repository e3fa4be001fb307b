// Command-line front end: collect -> train -> run -> eval/compare.

#include <CLI11.hpp>
#include <json.hpp>

#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "rfmpc/config.hpp"
#include "rfmpc/forest.hpp"
#include "rfmpc/path.hpp"
#include "rfmpc/sim.hpp"

namespace {

using namespace rfmpc;

ExperimentConfig load_config(const std::string& config_path,
                             std::optional<std::uint64_t> seed) {
  ExperimentConfig cfg =
      config_path.empty() ? ExperimentConfig::defaults() : load_config_file(config_path);
  if (seed) cfg.seed = *seed;
  cfg.validate();
  return cfg;
}

nlohmann::ordered_json metrics_block(const ResidualForest& forest,
                                     const std::vector<ResidualSample>& samples,
                                     bool leaf_linear) {
  Vec y, yhat;
  nlohmann::ordered_json block;
  const char* names[4] = {"e1", "e1d", "e2", "e2d"};
  for (int q = 0; q < 4; ++q) {
    y.clear();
    yhat.clear();
    for (const ResidualSample& s : samples) {
      y.push_back(s.eps[static_cast<std::size_t>(q)]);
      const auto pred = leaf_linear ? forest.predict_residue(s.window)
                                    : forest.predict_residue_mean(s.window.zn);
      yhat.push_back(pred[static_cast<std::size_t>(q)]);
    }
    const FitMetrics m = fit_metrics(y, yhat);
    block[names[q]] = {{"rmse", m.rmse}, {"me", m.me}, {"mae", m.mae}};
  }
  return block;
}

int cmd_collect(const std::string& config_path, std::optional<std::uint64_t> seed,
                const std::string& out, const std::string& path_name) {
  const ExperimentConfig cfg = load_config(config_path, seed);
  const ReferencePath path =
      generate_path(cfg.path_spec(path_name), cfg.sim.ds, cfg.sim.kappa_max);
  const SimLog log = run_closed_loop(cfg, path, nullptr, /*excitation=*/true);
  if (log.end_status == SimEndStatus::CorridorExit)
    std::cerr << "collect: warning: run left the corridor after "
              << log.steps.size() << " steps\n";
  const auto samples =
      build_samples(to_measured_steps(log), cfg.veh, cfg.horizon.ts, cfg.horizon.n);
  write_dataset_csv(out, samples);
  std::cout << "collected " << samples.size() << " samples from " << log.steps.size()
            << " steps onto " << out << "\n";
  return 0;
}

int cmd_train(const std::string& config_path, std::optional<std::uint64_t> seed,
              const std::string& data, const std::string& out,
              const std::string& report_path, std::optional<int> trees,
              std::optional<int> depth, std::optional<int> min_leaf,
              std::optional<double> feature_fraction, std::optional<double> ridge) {
  ExperimentConfig cfg = load_config(config_path, seed);
  const auto samples = read_dataset_csv(data);
  ForestConfig fcfg = cfg.forest;
  fcfg.horizon = static_cast<int>(samples.front().window.zc.size());
  if (fcfg.horizon != cfg.forest.horizon) fcfg.min_leaf = 2 * (fcfg.horizon + 1);
  fcfg.seed = cfg.seed;
  if (trees) fcfg.n_trees = *trees;
  if (depth) fcfg.max_depth = *depth;
  if (min_leaf) fcfg.min_leaf = *min_leaf;
  if (feature_fraction) fcfg.feature_fraction = *feature_fraction;
  if (ridge) fcfg.ridge = *ridge;
  fcfg.validate();

  // chronological 80/20 split
  const std::size_t cut = samples.size() - samples.size() / 5;
  const std::vector<ResidualSample> train(samples.begin(), samples.begin() + cut);
  const std::vector<ResidualSample> test(samples.begin() + cut, samples.end());
  if (train.size() < static_cast<std::size_t>(fcfg.min_leaf) || test.empty())
    throw std::runtime_error("train: dataset too small for an 80/20 split");

  const ResidualForest forest = ResidualForest::fit(train, fcfg);
  forest.save(out);

  nlohmann::ordered_json report;
  report["samples"] = {{"train", train.size()}, {"test", test.size()}};
  report["leaf_linear"] = {{"train", metrics_block(forest, train, true)},
                           {"test", metrics_block(forest, test, true)}};
  report["leaf_mean"] = {{"train", metrics_block(forest, train, false)},
                         {"test", metrics_block(forest, test, false)}};
  const std::string text = report.dump(2);
  std::cout << text << "\n";
  if (!report_path.empty()) {
    std::ofstream rf(report_path, std::ios::binary);
    if (!rf) throw std::runtime_error("cannot open report file: " + report_path);
    rf << text << "\n";
  }
  return 0;
}

int cmd_run(const std::string& config_path, std::optional<std::uint64_t> seed,
            const std::string& out, const std::string& path_name,
            const std::string& variant, const std::string& model_path, bool timing) {
  const ExperimentConfig cfg = load_config(config_path, seed);
  const ReferencePath path =
      generate_path(cfg.path_spec(path_name), cfg.sim.ds, cfg.sim.kappa_max);

  std::optional<ResidualForest> forest;
  if (variant == "residual") {
    if (model_path.empty())
      throw std::invalid_argument("run: --model is required for the residual variant");
    forest = ResidualForest::load(model_path);
  } else if (variant != "nominal") {
    throw std::invalid_argument("run: variant must be nominal or residual");
  }

  const SimLog log = run_closed_loop(cfg, path, forest ? &*forest : nullptr);
  write_simlog_csv(out, log, timing);
  const char* status = log.end_status == SimEndStatus::Finished ? "finished"
                       : log.end_status == SimEndStatus::CorridorExit ? "corridor_exit"
                                                                      : "step_limit";
  std::cout << "ran " << log.steps.size() << " steps (" << status << ") onto " << out
            << "\n";
  return 0;
}

int cmd_eval(const std::string& log_path, const std::string& baseline_path,
             const std::string& out) {
  const SimLog log = read_simlog_csv(log_path);
  const EvalReport report = baseline_path.empty()
                                ? evaluate(log)
                                : evaluate_with_baseline(log, read_simlog_csv(baseline_path));
  const std::string text = eval_report_json(report);
  std::cout << text << "\n";
  if (!out.empty()) {
    std::ofstream f(out, std::ios::binary);
    if (!f) throw std::runtime_error("cannot open output file: " + out);
    f << text << "\n";
  }
  return 0;
}

int cmd_compare(const std::string& baseline_path, const std::string& log_path,
                const std::string& out) {
  const SimLog baseline = read_simlog_csv(baseline_path);
  const SimLog log = read_simlog_csv(log_path);
  const EvalReport base = evaluate(baseline);
  const EvalReport rep = evaluate_with_baseline(log, baseline);
  std::cout << "baseline e1 mae " << base.e1.mae << " m, candidate e1 mae " << rep.e1.mae
            << " m, PE " << (rep.pe_percent ? *rep.pe_percent : 0.0) << " %\n";
  const std::string text = eval_report_json(rep);
  std::cout << text << "\n";
  if (!out.empty()) {
    std::ofstream f(out, std::ios::binary);
    if (!f) throw std::runtime_error("cannot open output file: " + out);
    f << text << "\n";
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"residual-forest model predictive path tracking"};
  app.require_subcommand(1);

  std::string config_path, out, path_name = "train", data, model_path, report_path;
  std::string variant = "nominal", log_path, baseline_path;
  std::optional<std::uint64_t> seed;
  std::optional<int> trees, depth, min_leaf;
  std::optional<double> feature_fraction, ridge;
  bool timing = false;

  CLI::App* collect = app.add_subcommand("collect", "run nominal MPC and emit a dataset CSV");
  collect->add_option("--config", config_path, "config file");
  collect->add_option("--seed", seed, "seed override");
  collect->add_option("--out", out, "dataset CSV path")->required();
  collect->add_option("--path", path_name, "config path name (default train)");

  CLI::App* train = app.add_subcommand("train", "fit the residual forest from a dataset");
  train->add_option("--config", config_path, "config file");
  train->add_option("--seed", seed, "seed override");
  train->add_option("--data", data, "dataset CSV")->required();
  train->add_option("--out", out, "model JSON path")->required();
  train->add_option("--report", report_path, "fit-metrics JSON path");
  train->add_option("--trees", trees, "number of trees");
  train->add_option("--depth", depth, "max tree depth");
  train->add_option("--min-leaf", min_leaf, "minimum samples per leaf");
  train->add_option("--feature-fraction", feature_fraction, "features sampled per split");
  train->add_option("--ridge", ridge, "leaf ridge regularizer");

  CLI::App* run = app.add_subcommand("run", "closed-loop simulation onto a log CSV");
  run->add_option("--config", config_path, "config file");
  run->add_option("--seed", seed, "seed override");
  run->add_option("--out", out, "log CSV path")->required();
  run->add_option("--path", path_name, "config path name")->required();
  run->add_option("--variant", variant, "nominal | residual");
  run->add_option("--model", model_path, "model JSON (residual variant)");
  run->add_flag("--timing", timing, "record wall-clock step times in the log");

  CLI::App* eval = app.add_subcommand("eval", "metrics report for a log CSV");
  eval->add_option("--config", config_path, "config file (accepted for uniformity)");
  eval->add_option("--seed", seed, "seed override (accepted for uniformity)");
  eval->add_option("--log", log_path, "log CSV")->required();
  eval->add_option("--baseline", baseline_path, "baseline log CSV for PE");
  eval->add_option("--out", out, "metrics JSON path");

  CLI::App* compare = app.add_subcommand("compare", "PE table of two logs");
  compare->add_option("--config", config_path, "config file (accepted for uniformity)");
  compare->add_option("--seed", seed, "seed override (accepted for uniformity)");
  compare->add_option("--baseline", baseline_path, "baseline log CSV")->required();
  compare->add_option("--log", log_path, "candidate log CSV")->required();
  compare->add_option("--out", out, "metrics JSON path");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) return app.exit(e);  // --help
    std::cerr << "usage error: " << e.what() << "\n";
    return 1;
  }

  try {
    if (app.got_subcommand(collect))
      return cmd_collect(config_path, seed, out, path_name);
    if (app.got_subcommand(train))
      return cmd_train(config_path, seed, data, out, report_path, trees, depth, min_leaf,
                       feature_fraction, ridge);
    if (app.got_subcommand(run))
      return cmd_run(config_path, seed, out, path_name, variant, model_path, timing);
    if (app.got_subcommand(eval)) return cmd_eval(log_path, baseline_path, out);
    if (app.got_subcommand(compare)) return cmd_compare(baseline_path, log_path, out);
  } catch (const std::invalid_argument& e) {
    std::cerr << "usage error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 1;
}
