#pragma once

#include <random>

#include "mre/backbone.hpp"

namespace mre {

// Where a patch sits inside its whole volume.
struct CoordinateFrame {
  Triple volume_extents{1, 1, 1};
  Triple offset{0, 0, 0};
};

/// [3, D, H, W]; channel a holds 2 * (offset_a + v_a) / (extent_a - 1) - 1 in
/// the whole-volume frame, or 0 along an axis of extent 1.
Tensor coordinate_map(const CoordinateFrame& frame, Triple patch_extents);

struct SeParams {
  Tensor squeeze_w;  // [C, C/r]
  Tensor squeeze_b;  // [C/r]
  Tensor excite_w;   // [C/r, C]
  Tensor excite_b;   // [C]
};

/// Channel recalibration: x * sigmoid(fc(relu(fc(global_avg_pool(x))))).
Tensor se_recalibrate(const Tensor& features, const SeParams& params);

struct AsppParams {
  ConvUnit pointwise;
  std::array<ConvUnit, 3> atrous;  // rates 6, 12, 18
  Tensor image_w, image_b;         // 1x1x1 conv on the pooled features
  Tensor fuse_w, fuse_b;           // 1x1x1 fusion to the embedding width
};

inline constexpr std::array<std::size_t, 3> kAtrousRates{6, 12, 18};

/// Five-scale pyramid (1x1x1, three dilated 3x3x3, image-level) concatenated
/// and fused by a 1x1x1 convolution.
Tensor aspp_forward(const Tensor& features, const AsppParams& params, Mode mode);

struct AmsConfig {
  std::size_t embed_dim = 256;  // N_e
  bool coords_on = true;
  bool se_on = true;
  bool aspp_on = true;
  std::size_t se_ratio = 4;
};

// Attentional multi-scale embedding built on the backbone's right-side maps.
class AmsEmbedding {
 public:
  AmsEmbedding(const BackboneConfig& backbone, const AmsConfig& config, ParamStore& store, std::mt19937_64& rng,
               const std::string& prefix = "ams");

  /// coords: [N, 3, D, H, W], required iff coords_on. Returns [N, N_e, D, H, W].
  Tensor forward(const BackboneOutput& features, const Tensor& coords, Mode mode) const;

  /// Channels entering SE/ASPP (taps plus optional coordinates).
  std::size_t concat_channels() const { return concat_channels_; }
  const AmsConfig& config() const { return config_; }
  const SeParams& se() const { return se_; }
  const AsppParams& aspp() const { return aspp_; }
  const Tensor& projection_weight() const { return proj_w_; }
  const Tensor& projection_bias() const { return proj_b_; }

 private:
  AmsConfig config_;
  std::size_t concat_channels_ = 0;
  SeParams se_;
  AsppParams aspp_;
  Tensor proj_w_, proj_b_;  // fallback when ASPP is off
};

}  // namespace mre
