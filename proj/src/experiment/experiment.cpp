#include <cmath>
#include <cstdio>
#include <ostream>

#include "mre/binary_io.hpp"
#include "mre/errors.hpp"
#include "mre/experiment.hpp"
#include "mre/hash.hpp"

namespace mre {

namespace {

constexpr std::uint64_t kInitStream = 1;
constexpr std::uint64_t kSampleStream = 2;

void write_text(const std::filesystem::path& path, const std::string& text) {
  bin::write_file_atomic(path, std::vector<char>(text.begin(), text.end()));
}

std::string read_text(const std::filesystem::path& path) {
  auto bytes = bin::read_file(path);
  return std::string(bytes.begin(), bytes.end());
}

std::filesystem::path run_dir(const std::filesystem::path& out, std::size_t run) {
  char name[32];
  std::snprintf(name, sizeof name, "run_%02zu", run);
  return out / name;
}

}  // namespace

MetricsReport run_experiment(const ExperimentConfig& cfg, const std::filesystem::path& out_dir,
                             const ExperimentOptions& options) {
  cfg.validate();
  std::filesystem::create_directories(out_dir);
  std::filesystem::path manifest_path;
  if (cfg.data.manifest.empty()) {
    write_cohort(generate_cohort(cfg.data.cohort), out_dir / "data");
    manifest_path = out_dir / "data" / "manifest.json";
  } else {
    manifest_path = cfg.data.manifest;
  }
  const Cohort cohort = load_cohort(manifest_path);
  if (cohort.spec.K != cfg.model.K) {
    throw ConfigError("cohort has K = " + std::to_string(cohort.spec.K) + " but model.K = " +
                      std::to_string(cfg.model.K));
  }

  MetricsReport report;
  report.config_json = to_json(cfg);
  report.manifest_id = git_blob_id(read_text(manifest_path));
  report.splits = plan_runs(cfg, cohort.subjects.size());
  write_text(out_dir / "config.json", report.config_json + "\n");

  for (std::size_t r = 0; r < report.splits.size(); ++r) {
    const RunSplit& split = report.splits[r];
    const auto dir = run_dir(out_dir, r);
    const auto rows_path = dir / "metrics.csv";
    if (cfg.resume && std::filesystem::exists(rows_path)) {
      auto rows = parse_rows_csv(read_text(rows_path));
      report.rows.insert(report.rows.end(), rows.begin(), rows.end());
      if (options.log) *options.log << "run " << r << ": reusing " << rows_path.string() << "\n";
      continue;
    }
    std::vector<const Subject*> training;
    for (std::size_t i : split.train) training.push_back(&cohort.subjects[i]);

    MreNet net(cfg.model, derive_seed(cfg.seed, r, kInitStream));
    TrainConfig tc = cfg.train;
    tc.seed = derive_seed(cfg.seed, r, kSampleStream);
    TrainOptions topts;
    topts.out_dir = dir;
    topts.resume = cfg.resume;
    topts.log = options.log;
    topts.log_every = tc.iterations >= 10 ? tc.iterations / 10 : 1;
    if (options.log) *options.log << "run " << r + 1 << "/" << report.splits.size() << ": training\n";
    train(net, training, tc, topts);

    std::vector<MetricRow> rows;
    for (std::size_t i : split.test) {
      const Subject& s = cohort.subjects[i];
      InferenceResult inf = sliding_window_infer(s.image, net, cfg.eval.window, cfg.eval.batch);
      auto cells = evaluate_prediction(inf.labels, s.labels, cfg.model.K, r, i);
      rows.insert(rows.end(), cells.begin(), cells.end());
    }
    MetricsReport run_report;
    run_report.config_json = report.config_json;
    run_report.manifest_id = report.manifest_id;
    run_report.splits = {split};
    run_report.rows = rows;
    for (MetricRow& row : run_report.rows) row.run = 0;
    run_report.aggregate = aggregate_rows(run_report.rows, cfg.model.K);
    write_text(dir / "report.json", report_json(run_report));
    write_text(rows_path, rows_csv(rows));
    if (options.log) {
      *options.log << "run " << r + 1 << ": mean Dice " << run_report.aggregate.dice.mean << ", mean HD95 "
                   << run_report.aggregate.hd95.mean << "\n";
    }
    report.rows.insert(report.rows.end(), rows.begin(), rows.end());
  }
  report.aggregate = aggregate_rows(report.rows, cfg.model.K);
  write_text(out_dir / "report.json", report_json(report));
  write_text(out_dir / "metrics.csv", rows_csv(report.rows));
  return report;
}

AblationAxis parse_axis(const std::string& s) {
  if (s == "n_e") return AblationAxis::n_e;
  if (s == "modes") return AblationAxis::modes;
  if (s == "components") return AblationAxis::components;
  if (s == "distance") return AblationAxis::distance;
  if (s == "mixing") return AblationAxis::mixing;
  throw ConfigError("unknown ablation axis '" + s + "' (expected n_e, modes, components, distance, mixing)");
}

std::string to_string(AblationAxis axis) {
  switch (axis) {
    case AblationAxis::n_e: return "n_e";
    case AblationAxis::modes: return "modes";
    case AblationAxis::components: return "components";
    case AblationAxis::distance: return "distance";
    case AblationAxis::mixing: return "mixing";
  }
  return "?";
}

std::vector<AblationCell> ablation_grid(const ExperimentConfig& base, AblationAxis axis) {
  std::vector<AblationCell> cells;
  switch (axis) {
    case AblationAxis::n_e: {
      for (double f : {0.25, 0.5, 1.0, 2.0}) {
        ExperimentConfig c = base;
        const double raw = double(base.model.embed_dim) * f;
        c.model.embed_dim = std::max<std::size_t>(4, static_cast<std::size_t>(std::lround(raw / 4.0)) * 4);
        cells.push_back({"N_e=" + std::to_string(c.model.embed_dim), c});
      }
      break;
    }
    case AblationAxis::modes:
      for (std::size_t m = 1; m <= 5; ++m) {
        ExperimentConfig c = base;
        c.model.M = m;
        cells.push_back({"M=" + std::to_string(m), c});
      }
      break;
    case AblationAxis::components: {
      // DML, coordinates, AMS (SE + ASPP), OHEM.
      struct Row {
        const char* name;
        bool dml, coords, ams, ohem;
      };
      static constexpr Row rows[] = {{"a", false, false, false, false}, {"b", true, false, false, false},
                                     {"c", true, true, false, false},   {"d", true, true, true, false},
                                     {"e", true, true, true, true},     {"f", false, true, true, true},
                                     {"g", true, false, true, true}};
      for (const Row& row : rows) {
        ExperimentConfig c = base;
        c.model.head = row.dml ? HeadKind::mre : HeadKind::fcn;
        if (!row.dml) {
          c.model.distance = Distance::cosine;
          c.model.mixing = Mixing::adaptive;
        }
        c.model.coords_on = row.coords;
        c.model.se_on = c.model.aspp_on = row.ams;
        c.train.ohem_on = row.ohem;
        cells.push_back({row.name, c});
      }
      break;
    }
    case AblationAxis::distance:
      for (Distance d : {Distance::cosine, Distance::euclidean}) {
        ExperimentConfig c = base;
        c.model.distance = d;
        cells.push_back({to_string(d), c});
      }
      break;
    case AblationAxis::mixing:
      for (Mixing m : {Mixing::onehot, Mixing::average, Mixing::adaptive}) {
        ExperimentConfig c = base;
        c.model.mixing = m;
        cells.push_back({to_string(m), c});
      }
      break;
  }
  return cells;
}

std::string ablation_csv(AblationAxis axis, const std::vector<AblationResult>& results) {
  std::string out = "axis,cell,runs,dice_mean,dice_std,hd95_mean,hd95_std,hd95_sentinels\n";
  for (const AblationResult& r : results) {
    char line[256];
    std::snprintf(line, sizeof line, "%s,%s,%zu,%.17g,%.17g,%.17g,%.17g,%zu\n", to_string(axis).c_str(), r.name.c_str(),
                  r.aggregate.runs, r.aggregate.dice.mean, r.aggregate.dice.std, r.aggregate.hd95.mean,
                  r.aggregate.hd95.std, r.aggregate.hd95_sentinels);
    out += line;
  }
  return out;
}

std::vector<AblationResult> run_ablation_suite(const ExperimentConfig& base, AblationAxis axis,
                                               const std::filesystem::path& out_dir,
                                               const ExperimentOptions& options) {
  std::vector<AblationResult> results;
  for (const AblationCell& cell : ablation_grid(base, axis)) {
    if (options.log) *options.log << "ablation " << to_string(axis) << ": cell " << cell.name << "\n";
    MetricsReport rep = run_experiment(cell.config, out_dir / cell.name, options);
    results.push_back({cell.name, rep.aggregate});
  }
  write_text(out_dir / ("ablation_" + to_string(axis) + ".csv"), ablation_csv(axis, results));
  return results;
}

}  // namespace mre
