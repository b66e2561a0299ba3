#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <random>
#include <span>
#include <vector>

#include "mre/model.hpp"
#include "mre/synth.hpp"

namespace mre {

struct AugmentConfig {
  bool on = true;
  double mirror_prob = 0.5;
  double brightness_delta = 0.1;
  std::array<double, 2> contrast_range{0.9, 1.1};
};

/// Mirroring flips the lateral (W) axis.
inline constexpr std::size_t kMirrorAxis = 2;

struct TrainConfig {
  double eta = 1e-3;
  std::size_t step_size = 1500;  // eta is multiplied by 0.1 every step_size iterations
  std::size_t iterations = 1500;
  std::size_t batch = 8;
  Triple patch{12, 36, 36};
  std::size_t N_Lg = 6;
  // Category ids; when both are empty the groups are derived from the
  // training labels (share >= 1/K is majority). When only one is given the
  // other is its complement.
  std::vector<std::size_t> majority;
  std::vector<std::size_t> minority;
  bool ohem_on = true;
  AugmentConfig aug;
  std::uint64_t seed = 1;

  void validate(std::size_t K) const;
};

// One sampled training patch, layout [C, D, H, W] for the image.
struct Patch {
  std::size_t channels = 1;
  Triple extents{0, 0, 0};
  std::vector<double> image;
  std::vector<std::uint8_t> labels;
  CoordinateFrame frame;
};

struct PatchBatch {
  Tensor images;                       // [B, C, D, H, W]
  std::vector<std::uint8_t> labels;    // [B, D, H, W]
  std::vector<CoordinateFrame> frames;
};

/// Crop at a uniformly random valid offset (drawn D, H, W in that order).
Patch sample_patch(const Subject& subject, Triple patch_extents, std::mt19937_64& rng);
/// Optional mirror, then image <- contrast * image + brightness. Random draws
/// are made in a fixed order whatever the outcome.
void augment_patch(Patch& patch, const AugmentConfig& aug, std::mt19937_64& rng);
PatchBatch make_batch(const std::vector<Patch>& patches);

struct OhemGroups {
  std::vector<bool> is_minority;  // indexed by category id
};

OhemGroups resolve_groups(const TrainConfig& cfg, std::size_t K, std::span<const Subject* const> training);

struct OhemResult {
  std::vector<std::uint8_t> keep;
  bool fallback = false;  // no minority voxels were present
};

/// Keeps every minority voxel plus the N_Lg * |minority| majority voxels of
/// greatest loss (ties: lower index first). Without minority voxels the top
/// max(1, |majority| / 4) majority voxels are kept instead.
OhemResult ohem_select(std::span<const double> voxel_loss, std::span<const std::uint8_t> labels,
                       const OhemGroups& groups, std::size_t N_Lg);

/// -log P(true class) per voxel from a [B, K, D, H, W] log-posterior.
std::vector<double> voxel_nll(const Tensor& log_posterior, std::span<const std::uint8_t> labels);

/// Sum over kept voxels of -log P(s_i = a_i) / N_{a_i}, N_k counting kept
/// voxels of category k. Takes the log-posterior for numerical stability.
Tensor dml_loss(const Tensor& log_posterior, std::span<const std::uint8_t> labels,
                std::span<const std::uint8_t> keep);

struct AdamConfig {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

double scheduled_eta(double eta, std::size_t step_size, std::uint64_t iteration);

/// One Adam update of every trainable entry using its current gradient.
/// A non-finite gradient throws NumericError naming the entry before anything
/// is modified. Advances store.step().
void adam_step(ParamStore& store, double eta_t, const AdamConfig& cfg = {});

struct TrainOptions {
  std::filesystem::path out_dir;  // empty: no files written
  std::size_t checkpoint_every = 500;
  bool resume = false;            // continue from out_dir/model.ckpt if present
  std::ostream* log = nullptr;
  std::size_t log_every = 100;
};

struct TrainTrace {
  std::vector<double> loss;
  std::vector<double> eta;
  std::size_t skipped_steps = 0;
  std::size_t ohem_fallbacks = 0;
};

/// Sample, forward, loss, backward, Adam. Iteration t draws its patches from
/// an RNG seeded by (seed, t), so resumed runs replay the same batches.
TrainTrace train(MreNet& net, std::span<const Subject* const> training, const TrainConfig& cfg,
                 const TrainOptions& options = {});

}  // namespace mre
