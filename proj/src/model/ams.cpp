#include "mre/ams.hpp"

#include "mre/errors.hpp"

namespace mre {

Tensor coordinate_map(const CoordinateFrame& frame, Triple patch_extents) {
  for (int a = 0; a < 3; ++a) {
    if (patch_extents[a] == 0) throw ConfigError("coordinate_map: zero patch extent");
  }
  const std::size_t D = patch_extents[0], H = patch_extents[1], W = patch_extents[2];
  const std::size_t vox = D * H * W;
  std::vector<double> out(3 * vox);
  auto coord = [&](int axis, std::size_t v) {
    const std::size_t extent = frame.volume_extents[axis];
    if (extent <= 1) return 0.0;
    return 2.0 * static_cast<double>(frame.offset[axis] + v) / static_cast<double>(extent - 1) - 1.0;
  };
  for (std::size_t d = 0; d < D; ++d)
    for (std::size_t h = 0; h < H; ++h)
      for (std::size_t w = 0; w < W; ++w) {
        const std::size_t i = (d * H + h) * W + w;
        out[i] = coord(0, d);
        out[vox + i] = coord(1, h);
        out[2 * vox + i] = coord(2, w);
      }
  return Tensor::from_data({3, D, H, W}, std::move(out));
}

Tensor se_recalibrate(const Tensor& features, const SeParams& p) {
  const std::size_t N = features.dim(0), C = features.dim(1);
  Tensor pooled = reshape(global_avg_pool(features), {N, C});
  Tensor hidden = relu(add(matmul(pooled, p.squeeze_w), p.squeeze_b));
  Tensor gates = sigmoid(add(matmul(hidden, p.excite_w), p.excite_b));
  return mul(features, reshape(gates, {N, C, 1, 1, 1}));
}

Tensor aspp_forward(const Tensor& features, const AsppParams& p, Mode mode) {
  const Shape& s = features.shape();
  std::vector<Tensor> branches;
  branches.push_back(p.pointwise.forward(features, mode));
  for (const auto& unit : p.atrous) branches.push_back(unit.forward(features, mode));
  Tensor image = relu(conv3d(global_avg_pool(features), p.image_w, p.image_b));
  branches.push_back(broadcast_to(image, {s[0], image.dim(1), s[2], s[3], s[4]}));
  return conv3d(concat(branches, 1), p.fuse_w, p.fuse_b);
}

AmsEmbedding::AmsEmbedding(const BackboneConfig& backbone, const AmsConfig& config, ParamStore& store,
                           std::mt19937_64& rng, const std::string& prefix)
    : config_(config) {
  const std::size_t ne = config_.embed_dim;
  if (ne == 0) throw ConfigError("embedding dimension must be positive");
  if (config_.aspp_on && ne % 4 != 0) {
    throw ConfigError("embedding dimension " + std::to_string(ne) + " must be divisible by 4 for the ASPP branches");
  }
  concat_channels_ = backbone.width1() + backbone.width2() + backbone.width3() + (config_.coords_on ? 3 : 0);
  const std::size_t C = concat_channels_;

  if (config_.se_on) {
    const std::size_t hidden = std::max<std::size_t>(1, C / config_.se_ratio);
    se_.squeeze_w = store.add(prefix + ".se.squeeze.w", {C, hidden}, he_normal(C * hidden, C, rng));
    se_.squeeze_b = store.add(prefix + ".se.squeeze.b", {hidden}, std::vector<double>(hidden, 0.0));
    se_.excite_w = store.add(prefix + ".se.excite.w", {hidden, C}, he_normal(hidden * C, hidden, rng));
    se_.excite_b = store.add(prefix + ".se.excite.b", {C}, std::vector<double>(C, 0.0));
  }

  if (config_.aspp_on) {
    const std::size_t cb = ne / 4;
    aspp_.pointwise = ConvUnit(store, prefix + ".aspp.b0", C, cb, {1, 1, 1}, {}, rng);
    for (std::size_t i = 0; i < kAtrousRates.size(); ++i) {
      ConvGeometry g;
      const std::size_t r = kAtrousRates[i];
      g.padding = {r, r, r};
      g.dilation = {r, r, r};
      aspp_.atrous[i] = ConvUnit(store, prefix + ".aspp.b" + std::to_string(i + 1), C, cb, {3, 3, 3}, g, rng);
    }
    aspp_.image_w = store.add(prefix + ".aspp.image.w", {cb, C, 1, 1, 1}, he_normal(cb * C, C, rng));
    aspp_.image_b = store.add(prefix + ".aspp.image.b", {cb}, std::vector<double>(cb, 0.0));
    aspp_.fuse_w = store.add(prefix + ".aspp.fuse.w", {ne, 5 * cb, 1, 1, 1}, he_normal(ne * 5 * cb, 5 * cb, rng));
    aspp_.fuse_b = store.add(prefix + ".aspp.fuse.b", {ne}, std::vector<double>(ne, 0.0));
  } else {
    proj_w_ = store.add(prefix + ".proj.w", {ne, C, 1, 1, 1}, he_normal(ne * C, C, rng));
    proj_b_ = store.add(prefix + ".proj.b", {ne}, std::vector<double>(ne, 0.0));
  }
}

Tensor AmsEmbedding::forward(const BackboneOutput& features, const Tensor& coords, Mode mode) const {
  const Tensor& final = features.final;
  const std::size_t D = final.dim(2), H = final.dim(3), W = final.dim(4);
  std::vector<Tensor> parts;
  for (const auto& tap : features.decoder_taps) {
    if (D % tap.dim(2) || H % tap.dim(3) || W % tap.dim(4)) {
      throw ConfigError("feature map " + shape_str(tap.shape()) + " cannot be upsampled to " + shape_str(final.shape()));
    }
    Triple f{D / tap.dim(2), H / tap.dim(3), W / tap.dim(4)};
    parts.push_back(f == Triple{1, 1, 1} ? tap : upsample_nearest(tap, f));
  }
  if (config_.coords_on) {
    if (!coords.defined() || coords.shape() != Shape{final.dim(0), 3, D, H, W}) {
      throw ConfigError("coordinate channels required with shape [N,3,D,H,W] matching " + shape_str(final.shape()));
    }
    parts.push_back(coords);
  }
  Tensor x = concat(parts, 1);
  if (x.dim(1) != concat_channels_) {
    throw ConfigError("AMS input has " + std::to_string(x.dim(1)) + " channels, expected " +
                      std::to_string(concat_channels_));
  }
  if (config_.se_on) x = se_recalibrate(x, se_);
  return config_.aspp_on ? aspp_forward(x, aspp_, mode) : conv3d(x, proj_w_, proj_b_);
}

}  // namespace mre
