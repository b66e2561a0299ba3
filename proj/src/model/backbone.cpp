#include "mre/backbone.hpp"

#include <cmath>

#include "mre/errors.hpp"

namespace mre {

namespace {

std::size_t scaled(double scale, std::size_t base) {
  return static_cast<std::size_t>(std::lround(scale * static_cast<double>(base)));
}

ConvGeometry same3() {
  ConvGeometry g;
  g.padding = {1, 1, 1};
  return g;
}

std::vector<ConvUnit> make_block(ParamStore& store, const std::string& name, std::size_t in_ch, std::size_t width,
                                 std::size_t convs, std::mt19937_64& rng) {
  std::vector<ConvUnit> block;
  for (std::size_t i = 0; i < convs; ++i) {
    block.emplace_back(store, name + ".conv" + std::to_string(i), i == 0 ? in_ch : width, width, Triple{3, 3, 3},
                       same3(), rng);
  }
  return block;
}

Tensor run_block(const std::vector<ConvUnit>& block, Tensor x, Mode mode) {
  for (const auto& unit : block) x = unit.forward(x, mode);
  return x;
}

}  // namespace

std::size_t BackboneConfig::width1() const { return scaled(channel_scale, 64); }
std::size_t BackboneConfig::width2() const { return scaled(channel_scale, 128); }
std::size_t BackboneConfig::width3() const { return scaled(channel_scale, 256); }

void BackboneConfig::validate() const {
  if (!(channel_scale > 0.0 && channel_scale <= 1.0)) {
    throw ConfigError("channel_scale must lie in (0, 1], got " + std::to_string(channel_scale));
  }
  const double w = channel_scale * 64.0;
  if (width1() < 4 || std::abs(w - std::round(w)) > 1e-9) {
    throw ConfigError("channel_scale * 64 must be an integer >= 4, got " + std::to_string(w));
  }
  if (in_channels == 0) throw ConfigError("backbone needs at least one input channel");
}

void check_patch_extents(Triple extents) {
  const Triple divisor{2, 4, 4};
  const char* names[3] = {"D (depth)", "H (height)", "W (width)"};
  for (int a = 0; a < 3; ++a) {
    if (extents[a] == 0 || extents[a] % divisor[a] != 0) {
      throw ConfigError(std::string("patch ") + names[a] + " extent " + std::to_string(extents[a]) +
                        " is not divisible by " + std::to_string(divisor[a]) + " (required by the pooling strides)");
    }
  }
}

Backbone::Backbone(const BackboneConfig& config, ParamStore& store, std::mt19937_64& rng, const std::string& prefix)
    : config_(config) {
  config_.validate();
  const std::size_t w1 = config_.width1(), w2 = config_.width2(), w3 = config_.width3();
  const std::size_t t1 = std::max<std::size_t>(1, w1 / 4), t2 = std::max<std::size_t>(1, w2 / 4);
  enc1_ = make_block(store, prefix + ".enc1", config_.in_channels, w1, 3, rng);
  enc2_ = make_block(store, prefix + ".enc2", w1, w2, 4, rng);
  enc3_ = make_block(store, prefix + ".enc3", w2, w3, 5, rng);
  trans1_ = ConvUnit(store, prefix + ".trans1", w1, t1, {3, 3, 3}, same3(), rng);
  trans2_ = ConvUnit(store, prefix + ".trans2", w2, t2, {3, 3, 3}, same3(), rng);
  up1_ = UpConvUnit(store, prefix + ".up1", w3, w3, BackboneConfig::kUp1, rng);
  dec1_ = make_block(store, prefix + ".dec1", w3 + t2, w2, 2, rng);
  up2_ = UpConvUnit(store, prefix + ".up2", w2, w2, BackboneConfig::kUp2, rng);
  dec2_ = make_block(store, prefix + ".dec2", w2 + t1, w1, 2, rng);
}

BackboneOutput Backbone::forward(const Tensor& patch, Mode mode) const {
  if (patch.rank() != 5 || patch.dim(1) != config_.in_channels) {
    throw ConfigError("backbone expects [N," + std::to_string(config_.in_channels) + ",D,H,W], got " +
                      shape_str(patch.shape()));
  }
  check_patch_extents({patch.dim(2), patch.dim(3), patch.dim(4)});

  Tensor e1 = run_block(enc1_, patch, mode);
  Tensor e2 = run_block(enc2_, avg_pool3d(e1, BackboneConfig::kPool1), mode);
  Tensor e3 = run_block(enc3_, avg_pool3d(e2, BackboneConfig::kPool2), mode);

  const Tensor cat1[] = {up1_.forward(e3, mode), trans2_.forward(e2, mode)};
  Tensor d1 = run_block(dec1_, concat(cat1, 1), mode);
  const Tensor cat2[] = {up2_.forward(d1, mode), trans1_.forward(e1, mode)};
  Tensor d2 = run_block(dec2_, concat(cat2, 1), mode);

  BackboneOutput out;
  out.final = d2;
  out.decoder_taps = {e3, d1, d2};
  return out;
}

}  // namespace mre
