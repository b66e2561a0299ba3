#include <algorithm>

#include "mre/errors.hpp"
#include "mre/training.hpp"

namespace mre {

Patch sample_patch(const Subject& subject, Triple patch_extents, std::mt19937_64& rng) {
  const Volume& vol = subject.image;
  const Triple& e = vol.extents;
  for (int a = 0; a < 3; ++a) {
    if (patch_extents[a] > e[a] || patch_extents[a] == 0) {
      throw ConfigError("patch extents (" + std::to_string(patch_extents[0]) + "," +
                        std::to_string(patch_extents[1]) + "," + std::to_string(patch_extents[2]) +
                        ") do not fit volume (" + std::to_string(e[0]) + "," + std::to_string(e[1]) + "," +
                        std::to_string(e[2]) + ")");
    }
  }
  Patch p;
  p.channels = vol.channels;
  p.extents = patch_extents;
  p.frame.volume_extents = e;
  for (int a = 0; a < 3; ++a) {
    std::uniform_int_distribution<std::size_t> pick(0, e[a] - patch_extents[a]);
    p.frame.offset[a] = pick(rng);
  }
  const auto [pd, ph, pw] = patch_extents;
  const auto [od, oh, ow] = p.frame.offset;
  p.image.resize(vol.channels * pd * ph * pw);
  p.labels.resize(pd * ph * pw);
  for (std::size_t c = 0; c < vol.channels; ++c)
    for (std::size_t d = 0; d < pd; ++d)
      for (std::size_t h = 0; h < ph; ++h)
        for (std::size_t w = 0; w < pw; ++w) {
          const std::size_t i = (d * ph + h) * pw + w;
          p.image[c * pd * ph * pw + i] = vol.at(c, od + d, oh + h, ow + w);
          if (c == 0) p.labels[i] = subject.labels.at(od + d, oh + h, ow + w);
        }
  return p;
}

void augment_patch(Patch& patch, const AugmentConfig& aug, std::mt19937_64& rng) {
  if (!aug.on) return;
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  const bool mirror = unit(rng) < aug.mirror_prob;
  const double delta = aug.brightness_delta * (2.0 * unit(rng) - 1.0);
  const double contrast = aug.contrast_range[0] + (aug.contrast_range[1] - aug.contrast_range[0]) * unit(rng);

  const auto [D, H, W] = patch.extents;
  if (mirror) {
    const std::size_t rows = patch.channels * D * H;
    for (std::size_t r = 0; r < rows; ++r) std::reverse(patch.image.begin() + r * W, patch.image.begin() + (r + 1) * W);
    for (std::size_t r = 0; r < D * H; ++r)
      std::reverse(patch.labels.begin() + r * W, patch.labels.begin() + (r + 1) * W);
  }
  if (contrast != 1.0 || delta != 0.0) {
    for (double& v : patch.image) v = contrast * v + delta;
  }
}

PatchBatch make_batch(const std::vector<Patch>& patches) {
  if (patches.empty()) throw UsageError("make_batch needs at least one patch");
  const Patch& first = patches.front();
  const std::size_t per = first.image.size();
  std::vector<double> images;
  images.reserve(per * patches.size());
  PatchBatch batch;
  for (const Patch& p : patches) {
    if (p.extents != first.extents || p.channels != first.channels) {
      throw UsageError("make_batch requires patches of identical shape");
    }
    images.insert(images.end(), p.image.begin(), p.image.end());
    batch.labels.insert(batch.labels.end(), p.labels.begin(), p.labels.end());
    batch.frames.push_back(p.frame);
  }
  batch.images = Tensor::from_data({patches.size(), first.channels, first.extents[0], first.extents[1],
                                    first.extents[2]},
                                   std::move(images));
  return batch;
}

}  // namespace mre
