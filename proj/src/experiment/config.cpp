#include <algorithm>
#include <nlohmann/json.hpp>
#include <random>
#include <set>

#include "mre/binary_io.hpp"
#include "mre/errors.hpp"
#include "mre/experiment.hpp"
#include "mre/seeding.hpp"

namespace mre {

namespace {

using json = nlohmann::json;

json triple_json(const Triple& t) { return json::array({t[0], t[1], t[2]}); }

Triple triple_from(const json& j, const char* key) {
  if (!j.is_array() || j.size() != 3) throw ConfigError(std::string(key) + " must be a 3-element array (D, H, W)");
  return {j[0].get<std::size_t>(), j[1].get<std::size_t>(), j[2].get<std::size_t>()};
}

json to_tree(const ExperimentConfig& c) {
  const ModelConfig& m = c.model;
  const TrainConfig& t = c.train;
  const CohortSpec& s = c.data.cohort;
  json j;
  j["model"] = {{"in_channels", m.in_channels},
                {"K", m.K},
                {"M", m.M},
                {"N_e", m.embed_dim},
                {"channel_scale", m.channel_scale},
                {"head", to_string(m.head)},
                {"distance", to_string(m.distance)},
                {"mixing", to_string(m.mixing)},
                {"coords_on", m.coords_on},
                {"se_on", m.se_on},
                {"aspp_on", m.aspp_on}};
  j["train"] = {{"eta", t.eta},
                {"step_size", t.step_size},
                {"iterations", t.iterations},
                {"batch", t.batch},
                {"patch_extents", triple_json(t.patch)},
                {"N_Lg", t.N_Lg},
                {"majority", t.majority},
                {"minority", t.minority},
                {"ohem_on", t.ohem_on},
                {"aug",
                 {{"on", t.aug.on},
                  {"mirror_prob", t.aug.mirror_prob},
                  {"brightness_delta", t.aug.brightness_delta},
                  {"contrast_range", json::array({t.aug.contrast_range[0], t.aug.contrast_range[1]})}}}};
  j["data"] = {{"manifest", c.data.manifest},
               {"cohort",
                {{"subjects", s.subjects},
                 {"K", s.K},
                 {"extents", triple_json(s.extents)},
                 {"spacing", json::array({s.spacing[0], s.spacing[1], s.spacing[2]})},
                 {"channels", s.channels},
                 {"modes_per_class", s.modes_per_class},
                 {"deform_sigma", s.deform_sigma},
                 {"deform_smoothing", s.deform_smoothing},
                 {"intensity_jitter", s.intensity_jitter},
                 {"noise_sigma", s.noise_sigma},
                 {"seed", s.seed}}}};
  j["shots"] = {{"train", c.shots.train}, {"test", c.shots.test}, {"n", c.shots.n}};
  j["rotation"] = c.rotation;
  j["eval"] = {{"core", triple_json(c.eval.window.core)},
               {"margin", triple_json(c.eval.window.margin)},
               {"batch", c.eval.batch}};
  j["seed"] = c.seed;
  j["resume"] = c.resume;
  return j;
}

ExperimentConfig from_tree(const json& j) {
  ExperimentConfig c;
  const json& m = j.at("model");
  c.model.in_channels = m.at("in_channels");
  c.model.K = m.at("K");
  c.model.M = m.at("M");
  c.model.embed_dim = m.at("N_e");
  c.model.channel_scale = m.at("channel_scale");
  c.model.head = parse_head(m.at("head"));
  c.model.distance = parse_distance(m.at("distance"));
  c.model.mixing = parse_mixing(m.at("mixing"));
  c.model.coords_on = m.at("coords_on");
  c.model.se_on = m.at("se_on");
  c.model.aspp_on = m.at("aspp_on");

  const json& t = j.at("train");
  c.train.eta = t.at("eta");
  c.train.step_size = t.at("step_size");
  c.train.iterations = t.at("iterations");
  c.train.batch = t.at("batch");
  c.train.patch = triple_from(t.at("patch_extents"), "train.patch_extents");
  c.train.N_Lg = t.at("N_Lg");
  c.train.majority = t.at("majority").get<std::vector<std::size_t>>();
  c.train.minority = t.at("minority").get<std::vector<std::size_t>>();
  c.train.ohem_on = t.at("ohem_on");
  const json& a = t.at("aug");
  c.train.aug.on = a.at("on");
  c.train.aug.mirror_prob = a.at("mirror_prob");
  c.train.aug.brightness_delta = a.at("brightness_delta");
  const json& cr = a.at("contrast_range");
  if (!cr.is_array() || cr.size() != 2) throw ConfigError("train.aug.contrast_range must be [low, high]");
  c.train.aug.contrast_range = {cr[0].get<double>(), cr[1].get<double>()};

  const json& d = j.at("data");
  c.data.manifest = d.at("manifest");
  const json& s = d.at("cohort");
  CohortSpec& cs = c.data.cohort;
  cs.subjects = s.at("subjects");
  cs.K = s.at("K");
  cs.extents = triple_from(s.at("extents"), "data.cohort.extents");
  const json& sp = s.at("spacing");
  if (!sp.is_array() || sp.size() != 3) throw ConfigError("data.cohort.spacing must be a 3-element array");
  cs.spacing = {sp[0].get<float>(), sp[1].get<float>(), sp[2].get<float>()};
  cs.channels = s.at("channels");
  cs.modes_per_class = s.at("modes_per_class");
  cs.deform_sigma = s.at("deform_sigma");
  cs.deform_smoothing = s.at("deform_smoothing");
  cs.intensity_jitter = s.at("intensity_jitter");
  cs.noise_sigma = s.at("noise_sigma");
  cs.seed = s.at("seed");

  const json& sh = j.at("shots");
  c.shots.train = sh.at("train").get<std::vector<std::size_t>>();
  c.shots.test = sh.at("test").get<std::vector<std::size_t>>();
  c.shots.n = sh.at("n");
  c.rotation = j.at("rotation");
  const json& e = j.at("eval");
  c.eval.window.core = triple_from(e.at("core"), "eval.core");
  c.eval.window.margin = triple_from(e.at("margin"), "eval.margin");
  c.eval.batch = e.at("batch");
  c.seed = j.at("seed");
  c.resume = j.at("resume");
  return c;
}

// Every key of `given` must exist in `reference` (the default tree).
void check_keys(const json& given, const json& reference, const std::string& path) {
  if (!given.is_object()) return;
  for (const auto& [key, value] : given.items()) {
    const std::string where = path.empty() ? key : path + "." + key;
    if (!reference.contains(key)) throw ConfigError("unknown config key '" + where + "'");
    if (reference[key].is_object()) {
      if (!value.is_object()) throw ConfigError("config key '" + where + "' must be an object");
      check_keys(value, reference[key], where);
    }
  }
}

ExperimentConfig parse_tree(const json& given) {
  const json defaults = to_tree(ExperimentConfig{});
  check_keys(given, defaults, "");
  json merged = defaults;
  merged.merge_patch(given);
  try {
    return from_tree(merged);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("invalid config value: ") + e.what());
  }
}

}  // namespace

void ExperimentConfig::validate() const {
  model.validate();
  data.cohort.validate();
  train.validate(model.K);
  if (data.manifest.empty()) {
    if (data.cohort.K != model.K) {
      throw ConfigError("data.cohort.K (" + std::to_string(data.cohort.K) + ") differs from model.K (" +
                        std::to_string(model.K) + ")");
    }
    if (data.cohort.channels != model.in_channels) throw ConfigError("data.cohort.channels differs from model.in_channels");
  }
  check_patch_extents(eval.window.expanded());
  if (rotation && shots.n < 1) throw ConfigError("shots.n must be at least 1");
  if (!rotation && shots.train.empty()) throw ConfigError("shots.train must list at least one subject");
}

std::string to_json(const ExperimentConfig& cfg) { return to_tree(cfg).dump(2); }

ExperimentConfig experiment_config_from_json(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ParseError(std::string("config is not valid JSON: ") + e.what(), e.byte);
  }
  if (!j.is_object()) throw ConfigError("config must be a JSON object");
  return parse_tree(j);
}

ExperimentConfig load_experiment_config(const std::filesystem::path& path) {
  auto bytes = bin::read_file(path);
  return experiment_config_from_json(std::string(bytes.begin(), bytes.end()));
}

ExperimentConfig apply_overrides(const ExperimentConfig& cfg, const std::vector<std::string>& assignments) {
  json tree = to_tree(cfg);
  for (const std::string& a : assignments) {
    const auto eq = a.find('=');
    if (eq == std::string::npos || eq == 0) throw UsageError("override '" + a + "' is not key=value");
    const std::string key = a.substr(0, eq), raw = a.substr(eq + 1);
    json value;
    try {
      value = json::parse(raw);
    } catch (const json::parse_error&) {
      value = raw;
    }
    json* node = &tree;
    std::size_t start = 0;
    for (;;) {
      const auto dot = key.find('.', start);
      const std::string part = key.substr(start, dot == std::string::npos ? std::string::npos : dot - start);
      if (!node->is_object() || !node->contains(part)) throw ConfigError("unknown config key '" + key + "'");
      node = &(*node)[part];
      if (dot == std::string::npos) break;
      start = dot + 1;
    }
    if (node->is_object()) throw ConfigError("config key '" + key + "' names a section, not a value");
    *node = value;
  }
  return parse_tree(tree);
}

std::vector<RunSplit> plan_runs(const ExperimentConfig& cfg, std::size_t subjects) {
  auto check = [&](std::size_t i) {
    if (i >= subjects) {
      throw ConfigError("subject index " + std::to_string(i) + " outside cohort of " + std::to_string(subjects));
    }
  };
  std::vector<RunSplit> runs;
  if (cfg.rotation) {
    if (cfg.shots.n >= subjects) {
      throw ConfigError("rotation with n = " + std::to_string(cfg.shots.n) + " leaves no test subject among " +
                        std::to_string(subjects));
    }
    for (std::size_t r = 0; r < subjects; ++r) {
      RunSplit s;
      for (std::size_t j = 0; j < cfg.shots.n; ++j) s.train.push_back((r + j) % subjects);
      for (std::size_t i = 0; i < subjects; ++i)
        if (std::find(s.train.begin(), s.train.end(), i) == s.train.end()) s.test.push_back(i);
      runs.push_back(std::move(s));
    }
    return runs;
  }
  RunSplit s;
  std::set<std::size_t> train;
  for (std::size_t i : cfg.shots.train) {
    check(i);
    if (!train.insert(i).second) throw ConfigError("subject " + std::to_string(i) + " listed twice in shots.train");
    s.train.push_back(i);
  }
  if (cfg.shots.test.empty()) {
    for (std::size_t i = 0; i < subjects; ++i)
      if (!train.count(i)) s.test.push_back(i);
  } else {
    std::set<std::size_t> test;
    for (std::size_t i : cfg.shots.test) {
      check(i);
      if (train.count(i)) throw ConfigError("subject " + std::to_string(i) + " is in both shots.train and shots.test");
      if (!test.insert(i).second) throw ConfigError("subject " + std::to_string(i) + " listed twice in shots.test");
      s.test.push_back(i);
    }
  }
  if (s.test.empty()) throw ConfigError("no test subjects remain");
  runs.push_back(std::move(s));
  return runs;
}

std::uint64_t derive_seed(std::uint64_t seed, std::size_t run, std::uint64_t stream) {
  return seeded_rng({seed, run, stream})();
}

}  // namespace mre
