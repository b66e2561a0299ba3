#include <CLI11.hpp>
#include <cstdio>
#include <iostream>
#include <nlohmann/json.hpp>

#include "mre/binary_io.hpp"
#include "mre/checkpoint.hpp"
#include "mre/errors.hpp"
#include "mre/experiment.hpp"

namespace {

using namespace mre;

struct Common {
  std::string config;
  std::vector<std::string> sets;
  std::optional<std::uint64_t> seed;
  std::string out_dir = "out";
};

ExperimentConfig resolve(const Common& c) {
  ExperimentConfig cfg = c.config.empty() ? ExperimentConfig{} : load_experiment_config(c.config);
  cfg = apply_overrides(cfg, c.sets);
  if (c.seed) cfg.seed = *c.seed;
  cfg.validate();
  return cfg;
}

void write_text(const std::filesystem::path& path, const std::string& text) {
  bin::write_file_atomic(path, std::vector<char>(text.begin(), text.end()));
}

void print_aggregate(const Aggregate& a) {
  std::printf("runs %zu  Dice %.4f (%.4f)  HD95 %.3f (%.3f)  sentinels %zu\n", a.runs, a.dice.mean, a.dice.std,
              a.hd95.mean, a.hd95.std, a.hd95_sentinels);
}

int cmd_gen_data(const Common& c) {
  ExperimentConfig cfg = c.config.empty() ? ExperimentConfig{} : load_experiment_config(c.config);
  cfg = apply_overrides(cfg, c.sets);
  if (c.seed) cfg.data.cohort.seed = *c.seed;
  CohortManifest m = write_cohort(generate_cohort(cfg.data.cohort), c.out_dir);
  std::printf("wrote %zu subjects to %s\n", m.entries.size(), (std::filesystem::path(c.out_dir) / "manifest.json").c_str());
  return 0;
}

int cmd_train(const Common& c) {
  ExperimentConfig cfg = resolve(c);
  if (cfg.data.manifest.empty()) throw UsageError("train needs data.manifest (run gen-data first)");
  Cohort cohort = load_cohort(cfg.data.manifest);
  cfg.rotation = false;
  RunSplit split = plan_runs(cfg, cohort.subjects.size()).front();
  std::vector<const Subject*> training;
  for (std::size_t i : split.train) training.push_back(&cohort.subjects[i]);
  MreNet net(cfg.model, derive_seed(cfg.seed, 0, 1));
  TrainConfig tc = cfg.train;
  tc.seed = derive_seed(cfg.seed, 0, 2);
  TrainOptions opts;
  opts.out_dir = c.out_dir;
  opts.resume = cfg.resume;
  opts.log = &std::cerr;
  std::filesystem::create_directories(c.out_dir);
  write_text(std::filesystem::path(c.out_dir) / "config.json", to_json(cfg) + "\n");
  TrainTrace trace = train(net, training, tc, opts);
  std::printf("trained %zu iterations, final loss %.6g, checkpoint %s\n", trace.loss.size(),
              trace.loss.empty() ? 0.0 : trace.loss.back(), (std::filesystem::path(c.out_dir) / "model.ckpt").c_str());
  return 0;
}

int cmd_infer(const Common& c, const std::string& checkpoint, const std::string& input, const std::string& output) {
  ExperimentConfig cfg = resolve(c);
  MreNet net(cfg.model, 0);
  load_checkpoint(net.params(), checkpoint);
  Volume v = read_volume(input);
  InferenceResult r = sliding_window_infer(v, net, cfg.eval.window, cfg.eval.batch);
  write_labels(output, r.labels);
  std::printf("predicted %zu windows, wrote %s\n", r.windows, output.c_str());
  return 0;
}

int cmd_eval(const Common& c, const std::string& pred, const std::string& truth) {
  ExperimentConfig cfg = resolve(c);
  LabelMap p = read_labels(pred);
  LabelMap t = read_labels(truth);
  MetricsReport report;
  report.config_json = to_json(cfg);
  report.splits = {RunSplit{{}, {0}}};
  report.rows = evaluate_prediction(p, t, cfg.model.K, 0, 0);
  report.aggregate = aggregate_rows(report.rows, cfg.model.K);
  std::filesystem::create_directories(c.out_dir);
  write_text(std::filesystem::path(c.out_dir) / "report.json", report_json(report));
  write_text(std::filesystem::path(c.out_dir) / "metrics.csv", rows_csv(report.rows));
  for (const MetricRow& r : report.rows) {
    std::printf("category %zu  Dice %.4f  HD95 %.3f%s\n", r.category, r.dice, r.hd95, r.hd95_sentinel ? " (sentinel)" : "");
  }
  print_aggregate(report.aggregate);
  return 0;
}

int cmd_run(const Common& c) {
  ExperimentConfig cfg = resolve(c);
  ExperimentOptions opts{&std::cerr};
  MetricsReport report = run_experiment(cfg, c.out_dir, opts);
  print_aggregate(report.aggregate);
  return 0;
}

int cmd_ablate(const Common& c, const std::string& axis_name) {
  ExperimentConfig cfg = resolve(c);
  const AblationAxis axis = parse_axis(axis_name);
  ExperimentOptions opts{&std::cerr};
  auto results = run_ablation_suite(cfg, axis, c.out_dir, opts);
  std::fputs(ablation_csv(axis, results).c_str(), stdout);
  return 0;
}

void error_line(const char* kind, const std::string& message) {
  nlohmann::json j{{"error", {{"kind", kind}, {"message", message}}}};
  std::cerr << j.dump() << "\n";
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Multimodal prototype segmentation: data generation, training, inference, evaluation, ablations"};
  app.require_subcommand(1);
  Common common;
  app.add_option("--config", common.config, "Experiment config (JSON)");
  app.add_option("--set", common.sets, "Override a config value, key.path=value (repeatable)");
  app.add_option("--seed", common.seed, "Experiment seed (cohort seed for gen-data)");
  app.add_option("--out-dir", common.out_dir, "Output directory");

  auto* gen = app.add_subcommand("gen-data", "Write a synthetic cohort and its manifest");
  auto* trn = app.add_subcommand("train", "Train on shots.train of data.manifest");
  std::string checkpoint, input, output, pred, truth, axis;
  auto* inf = app.add_subcommand("infer", "Sliding-window prediction of one volume");
  inf->add_option("--checkpoint", checkpoint, "Model checkpoint")->required();
  inf->add_option("--input", input, "MREVOL1 image")->required();
  inf->add_option("--output", output, "MREVOL1 label map to write")->required();
  auto* evl = app.add_subcommand("eval", "Dice and HD95 of a prediction against ground truth");
  evl->add_option("--pred", pred, "Predicted label map")->required();
  evl->add_option("--truth", truth, "Ground-truth label map")->required();
  auto* run = app.add_subcommand("run", "Full experiment: train and evaluate every run, write reports");
  auto* abl = app.add_subcommand("ablate", "Run one ablation axis");
  abl->add_option("--axis", axis, "n_e | modes | components | distance | mixing")->required();
  for (CLI::App* sub : {gen, trn, inf, evl, run, abl}) sub->fallthrough();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    error_line("usage", e.what());
    return 2;
  }

  try {
    if (*gen) return cmd_gen_data(common);
    if (*trn) return cmd_train(common);
    if (*inf) return cmd_infer(common, checkpoint, input, output);
    if (*evl) return cmd_eval(common, pred, truth);
    if (*run) return cmd_run(common);
    if (*abl) return cmd_ablate(common, axis);
  } catch (const mre::UsageError& e) {
    error_line(e.kind(), e.what());
    return 2;
  } catch (const mre::Error& e) {
    error_line(e.kind(), e.what());
    return 1;
  } catch (const std::exception& e) {
    error_line("internal", e.what());
    return 1;
  }
  return 0;
}
