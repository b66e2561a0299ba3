#pragma once

#include <random>
#include <vector>

#include "mre/layers.hpp"

namespace mre {

// Shallow 3D U-Net: three encoder blocks (3/4/5 convs), two average-pooling
// stages, transition layers on the skips, two decoder blocks behind
// transposed convolutions.
struct BackboneConfig {
  std::size_t in_channels = 1;
  double channel_scale = 0.25;

  static constexpr Triple kPool1{2, 2, 2};
  static constexpr Triple kPool2{1, 2, 2};
  static constexpr Triple kUp1{1, 2, 2};
  static constexpr Triple kUp2{2, 2, 2};

  /// round(64 s), round(128 s), round(256 s)
  std::size_t width1() const;
  std::size_t width2() const;
  std::size_t width3() const;
  void validate() const;
};

struct BackboneOutput {
  Tensor final;  // [N, width1, D, H, W]
  // Right-side feature maps, coarse to fine: bottleneck, decoder block 1,
  // decoder block 2 (the latter is `final`).
  std::vector<Tensor> decoder_taps;
};

/// Throws ConfigError naming the first axis that the pooling stages cannot divide.
void check_patch_extents(Triple extents);

class Backbone {
 public:
  Backbone(const BackboneConfig& config, ParamStore& store, std::mt19937_64& rng,
           const std::string& prefix = "backbone");

  /// patch: [N, C, D, H, W] with D % 2 == 0 and H, W % 4 == 0.
  BackboneOutput forward(const Tensor& patch, Mode mode) const;
  const BackboneConfig& config() const { return config_; }

 private:
  BackboneConfig config_;
  std::vector<ConvUnit> enc1_, enc2_, enc3_;
  ConvUnit trans1_, trans2_;
  UpConvUnit up1_, up2_;
  std::vector<ConvUnit> dec1_, dec2_;
};

}  // namespace mre
