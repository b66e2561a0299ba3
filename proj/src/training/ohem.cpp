#include <algorithm>
#include <numeric>

#include "mre/errors.hpp"
#include "mre/training.hpp"

namespace mre {

void TrainConfig::validate(std::size_t K) const {
  if (N_Lg < 1) throw ConfigError("N_Lg must be at least 1");
  if (iterations < 1) throw ConfigError("iterations must be at least 1");
  if (batch < 1) throw ConfigError("batch must be at least 1");
  if (step_size < 1) throw ConfigError("step_size must be at least 1");
  if (!(eta > 0.0)) throw ConfigError("eta must be positive");
  if (aug.mirror_prob < 0.0 || aug.mirror_prob > 1.0) throw ConfigError("mirror_prob must lie in [0, 1]");
  if (aug.brightness_delta < 0.0) throw ConfigError("brightness_delta must be non-negative");
  if (aug.contrast_range[0] > aug.contrast_range[1]) throw ConfigError("contrast_range must be ordered");
  check_patch_extents(patch);
  std::vector<int> seen(K, 0);
  for (const auto* list : {&majority, &minority}) {
    for (std::size_t k : *list) {
      if (k >= K) throw ConfigError("OHEM group lists category " + std::to_string(k) + " but K = " + std::to_string(K));
      if (seen[k]++) throw ConfigError("category " + std::to_string(k) + " assigned to an OHEM group twice");
    }
  }
}

OhemGroups resolve_groups(const TrainConfig& cfg, std::size_t K, std::span<const Subject* const> training) {
  cfg.validate(K);
  OhemGroups g;
  g.is_minority.assign(K, false);
  if (!cfg.majority.empty() || !cfg.minority.empty()) {
    if (!cfg.minority.empty()) {
      for (std::size_t k : cfg.minority) g.is_minority[k] = true;
    } else {
      std::fill(g.is_minority.begin(), g.is_minority.end(), true);
      for (std::size_t k : cfg.majority) g.is_minority[k] = false;
    }
    return g;
  }
  std::vector<std::size_t> counts(K, 0);
  std::size_t total = 0;
  for (const Subject* s : training) {
    auto c = category_counts(s->labels, K);
    for (std::size_t k = 0; k < K; ++k) counts[k] += c[k];
    total += s->labels.voxels();
  }
  for (std::size_t k = 0; k < K; ++k) {
    g.is_minority[k] = static_cast<double>(counts[k]) * static_cast<double>(K) < static_cast<double>(total);
  }
  return g;
}

OhemResult ohem_select(std::span<const double> voxel_loss, std::span<const std::uint8_t> labels,
                       const OhemGroups& groups, std::size_t N_Lg) {
  if (voxel_loss.size() != labels.size()) throw UsageError("ohem_select: loss and label sizes differ");
  OhemResult r;
  r.keep.assign(labels.size(), 0);
  std::vector<std::size_t> majority;
  std::size_t minority = 0;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] >= groups.is_minority.size()) {
      throw ConfigError("label " + std::to_string(labels[i]) + " is not assigned to an OHEM group");
    }
    if (groups.is_minority[labels[i]]) {
      r.keep[i] = 1;
      ++minority;
    } else {
      majority.push_back(i);
    }
  }
  std::size_t quota;
  if (minority == 0) {
    r.fallback = true;
    quota = std::max<std::size_t>(1, majority.size() / 4);
  } else {
    quota = N_Lg * minority;
  }
  quota = std::min(quota, majority.size());
  auto harder = [&](std::size_t a, std::size_t b) {
    if (voxel_loss[a] != voxel_loss[b]) return voxel_loss[a] > voxel_loss[b];
    return a < b;
  };
  if (quota < majority.size()) {
    std::nth_element(majority.begin(), majority.begin() + quota, majority.end(), harder);
  }
  for (std::size_t j = 0; j < quota; ++j) r.keep[majority[j]] = 1;
  return r;
}

}  // namespace mre
