#include <cmath>
#include <cstdio>
#include <map>
#include <nlohmann/json.hpp>
#include <sstream>

#include "mre/errors.hpp"
#include "mre/experiment.hpp"

namespace mre {

namespace {

using json = nlohmann::json;

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

json summary_json(const Summary& s) { return {{"mean", s.mean}, {"std", s.std}, {"count", s.count}}; }

}  // namespace

Summary summarize(const std::vector<double>& values) {
  Summary s;
  s.count = values.size();
  if (values.empty()) return s;
  double total = 0.0;
  for (double v : values) total += v;
  s.mean = total / double(values.size());
  if (values.size() > 1) {
    double ss = 0.0;
    for (double v : values) ss += (v - s.mean) * (v - s.mean);
    s.std = std::sqrt(ss / double(values.size() - 1));
  }
  return s;
}

Aggregate aggregate_rows(const std::vector<MetricRow>& rows, std::size_t K) {
  Aggregate agg;
  // run -> category -> values
  std::map<std::size_t, std::map<std::size_t, std::vector<const MetricRow*>>> by_run;
  for (const MetricRow& r : rows) {
    if (r.category == 0 || r.category >= K) {
      throw ConfigError("metric row category " + std::to_string(r.category) + " outside [1, " + std::to_string(K) + ")");
    }
    by_run[r.run][r.category].push_back(&r);
    agg.hd95_sentinels += r.hd95_sentinel;
  }
  agg.runs = by_run.size();
  std::vector<double> run_dice, run_hd;
  std::vector<std::vector<double>> cat_dice(K - 1), cat_hd(K - 1);
  for (const auto& [run, cats] : by_run) {
    double dsum = 0.0, hsum = 0.0;
    std::size_t n = 0;
    for (const auto& [k, cells] : cats) {
      double cd = 0.0, ch = 0.0;
      for (const MetricRow* r : cells) {
        cd += r->dice;
        ch += r->hd95;
      }
      dsum += cd;
      hsum += ch;
      n += cells.size();
      cat_dice[k - 1].push_back(cd / double(cells.size()));
      cat_hd[k - 1].push_back(ch / double(cells.size()));
    }
    run_dice.push_back(dsum / double(n));
    run_hd.push_back(hsum / double(n));
  }
  agg.dice = summarize(run_dice);
  agg.hd95 = summarize(run_hd);
  for (std::size_t k = 0; k + 1 < K; ++k) {
    agg.dice_per_category.push_back(summarize(cat_dice[k]));
    agg.hd95_per_category.push_back(summarize(cat_hd[k]));
  }
  return agg;
}

std::vector<MetricRow> evaluate_prediction(const LabelMap& pred, const LabelMap& truth, std::size_t K,
                                           std::size_t run, std::size_t subject) {
  std::vector<MetricRow> rows;
  for (std::size_t k = 1; k < K; ++k) {
    MetricRow r;
    r.run = run;
    r.subject = subject;
    r.category = k;
    r.dice = dice_coefficient(pred, truth, static_cast<std::uint8_t>(k));
    Hd95 h = hd95(pred, truth, static_cast<std::uint8_t>(k), truth.spacing);
    r.hd95 = h.value;
    r.hd95_sentinel = h.sentinel;
    rows.push_back(r);
  }
  return rows;
}

std::string rows_csv(const std::vector<MetricRow>& rows) {
  std::string out = "run,subject,category,metric,value,sentinel\n";
  for (const MetricRow& r : rows) {
    const std::string prefix = std::to_string(r.run) + "," + std::to_string(r.subject) + "," + std::to_string(r.category);
    out += prefix + ",dice," + fmt(r.dice) + ",0\n";
    out += prefix + ",hd95," + fmt(r.hd95) + "," + (r.hd95_sentinel ? "1" : "0") + "\n";
  }
  return out;
}

std::vector<MetricRow> parse_rows_csv(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  std::size_t offset = 0;
  if (!std::getline(in, line) || line != "run,subject,category,metric,value,sentinel") {
    throw ParseError("metrics CSV header missing", 0);
  }
  offset += line.size() + 1;
  std::map<std::tuple<std::size_t, std::size_t, std::size_t>, MetricRow> cells;
  std::vector<std::tuple<std::size_t, std::size_t, std::size_t>> order;
  while (std::getline(in, line)) {
    if (line.empty()) {
      offset += 1;
      continue;
    }
    std::vector<std::string> f;
    std::stringstream ls(line);
    std::string part;
    while (std::getline(ls, part, ',')) f.push_back(part);
    if (f.size() != 6) throw ParseError("metrics CSV row needs 6 fields: " + line, offset);
    try {
      auto key = std::make_tuple(std::stoul(f[0]), std::stoul(f[1]), std::stoul(f[2]));
      auto [it, fresh] = cells.try_emplace(key);
      if (fresh) order.push_back(key);
      MetricRow& r = it->second;
      r.run = std::get<0>(key);
      r.subject = std::get<1>(key);
      r.category = std::get<2>(key);
      if (f[3] == "dice") {
        r.dice = std::stod(f[4]);
      } else if (f[3] == "hd95") {
        r.hd95 = std::stod(f[4]);
        r.hd95_sentinel = f[5] == "1";
      } else {
        throw ParseError("unknown metric '" + f[3] + "'", offset);
      }
    } catch (const std::logic_error&) {
      throw ParseError("malformed metrics CSV row: " + line, offset);
    }
    offset += line.size() + 1;
  }
  std::vector<MetricRow> rows;
  for (const auto& key : order) rows.push_back(cells[key]);
  return rows;
}

std::string report_json(const MetricsReport& report) {
  json runs = json::array();
  for (std::size_t r = 0; r < report.splits.size(); ++r) {
    json subjects = json::array();
    for (const MetricRow& row : report.rows) {
      if (row.run != r) continue;
      subjects.push_back({{"subject", row.subject},
                          {"category", row.category},
                          {"dice", row.dice},
                          {"hd95", row.hd95},
                          {"hd95_sentinel", row.hd95_sentinel}});
    }
    runs.push_back({{"run", r}, {"train", report.splits[r].train}, {"test", report.splits[r].test}, {"cells", subjects}});
  }
  const Aggregate& a = report.aggregate;
  json per_cat = json::array();
  for (std::size_t k = 0; k < a.dice_per_category.size(); ++k) {
    per_cat.push_back({{"category", k + 1},
                       {"dice", summary_json(a.dice_per_category[k])},
                       {"hd95", summary_json(a.hd95_per_category[k])}});
  }
  json doc{{"provenance", {{"config", json::parse(report.config_json)}, {"manifest_id", report.manifest_id}}},
           {"runs", runs},
           {"aggregate",
            {{"runs", a.runs},
             {"dice", summary_json(a.dice)},
             {"hd95", summary_json(a.hd95)},
             {"hd95_sentinels", a.hd95_sentinels},
             {"per_category", per_cat}}}};
  return doc.dump(2) + "\n";
}

}  // namespace mre
