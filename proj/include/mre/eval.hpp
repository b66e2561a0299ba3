#pragma once

#include <cstdint>
#include <vector>

#include "mre/model.hpp"
#include "mre/volume.hpp"

namespace mre {

// Expanded window = core + 2 * margin on every axis.
struct WindowSpec {
  Triple core{8, 28, 28};
  Triple margin{2, 4, 4};
  Triple expanded() const;
};

struct Window {
  Triple input_start;  // expanded window start in the (padded) volume
  Triple core_start;   // region written from this window
  Triple core_extent;
};

/// Cores tile [0, volume) left to right; the expanded input is clamped inside
/// the volume. Requires volume >= expanded on every axis.
std::vector<Window> plan_windows(Triple volume, const WindowSpec& spec);

struct InferenceResult {
  LabelMap labels;
  std::vector<std::uint32_t> write_count;  // per voxel, 1 everywhere on success
  std::size_t windows = 0;         // core tiles
  std::size_t forward_passes = 0;  // network evaluations (distinct inputs, batched)
};

/// Whole-volume prediction in eval mode. Axes shorter than the expanded
/// window are zero-padded symmetrically and cropped afterwards.
InferenceResult sliding_window_infer(const Volume& volume, const MreNet& net, const WindowSpec& spec,
                                     std::size_t batch = 4);

/// 2|A n B| / (|A| + |B|); 1 when both sets are empty.
double dice_coefficient(const LabelMap& pred, const LabelMap& truth, std::uint8_t category);

/// Voxels of the mask with a 6-neighbour outside it (or outside the volume).
std::vector<std::uint8_t> surface_voxels(const std::vector<std::uint8_t>& mask, Triple extents);

/// Exact squared Euclidean distance, in physical units, from every voxel to
/// the nearest set voxel of `mask`. Infinity everywhere if the mask is empty.
std::vector<double> squared_distance_transform(const std::vector<std::uint8_t>& mask, Triple extents,
                                               const Spacing& spacing);

struct Hd95 {
  double value = 0.0;
  bool sentinel = false;  // exactly one of the sets was empty
};

/// max of the nearest-rank 95th percentiles of the two directed surface
/// distances. One empty set gives the physical diagonal of the volume.
Hd95 hd95(const LabelMap& pred, const LabelMap& truth, std::uint8_t category, const Spacing& spacing);

}  // namespace mre
