#pragma once

#include <cstdint>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "mre/ams.hpp"
#include "mre/backbone.hpp"
#include "mre/head.hpp"

namespace mre {

enum class HeadKind { mre, fcn };

struct ModelConfig {
  std::size_t in_channels = 1;
  std::size_t K = 5;
  std::size_t M = 3;
  std::size_t embed_dim = 256;
  double channel_scale = 0.25;
  HeadKind head = HeadKind::mre;
  Distance distance = Distance::cosine;
  Mixing mixing = Mixing::adaptive;
  bool coords_on = true;
  bool se_on = true;
  bool aspp_on = true;

  void validate() const;
  BackboneConfig backbone() const;
  AmsConfig ams() const;
};

std::string to_string(HeadKind h);
std::string to_string(Distance d);
std::string to_string(Mixing m);
HeadKind parse_head(const std::string& s);
Distance parse_distance(const std::string& s);
Mixing parse_mixing(const std::string& s);

struct ForwardResult {
  Tensor embedding;      // [N, N_e, D, H, W]
  Tensor log_posterior;  // [N, K, D, H, W]
};

// Backbone + AMS embedding + classification head, with every learned
// quantity registered in one ParamStore.
class MreNet {
 public:
  MreNet(const ModelConfig& config, std::uint64_t init_seed);
  MreNet(const MreNet&) = delete;
  MreNet& operator=(const MreNet&) = delete;

  /// images: [N, C, D, H, W]; one frame per patch (used iff coords_on).
  ForwardResult forward(const Tensor& images, const std::vector<CoordinateFrame>& frames, Mode mode) const;

  const ModelConfig& config() const { return config_; }
  ParamStore& params() { return store_; }
  const ParamStore& params() const { return store_; }
  const PrototypeBank& prototypes() const { return bank_; }
  const std::optional<MixingNetParams>& mixing_net() const { return mix_; }

 private:
  ModelConfig config_;
  ParamStore store_;
  std::optional<Backbone> backbone_;
  std::optional<AmsEmbedding> ams_;
  PrototypeBank bank_;
  std::optional<MixingNetParams> mix_;
  Tensor fcn_w_, fcn_b_;
};

}  // namespace mre
