#include "mre/model.hpp"

#include "mre/errors.hpp"

namespace mre {

void ModelConfig::validate() const {
  if (K < 2) throw ConfigError("K must be >= 2");
  if (K > 255) throw ConfigError("K must fit a u8 label map");
  if (M < 1) throw ConfigError("M must be >= 1");
  if (embed_dim < 1) throw ConfigError("embedding dimension must be positive");
  backbone().validate();
  if (aspp_on && embed_dim % 4 != 0) throw ConfigError("N_e must be divisible by 4 when ASPP is on");
  if (head == HeadKind::fcn && (distance != Distance::cosine || mixing != Mixing::adaptive)) {
    throw ConfigError("head=fcn has no distance or mixing setting");
  }
}

BackboneConfig ModelConfig::backbone() const {
  BackboneConfig b;
  b.in_channels = in_channels;
  b.channel_scale = channel_scale;
  return b;
}

AmsConfig ModelConfig::ams() const {
  AmsConfig a;
  a.embed_dim = embed_dim;
  a.coords_on = coords_on;
  a.se_on = se_on;
  a.aspp_on = aspp_on;
  return a;
}

std::string to_string(HeadKind h) { return h == HeadKind::mre ? "mre" : "fcn"; }
std::string to_string(Distance d) { return d == Distance::cosine ? "cosine" : "euclidean"; }
std::string to_string(Mixing m) {
  switch (m) {
    case Mixing::adaptive: return "adaptive";
    case Mixing::onehot: return "onehot";
    case Mixing::average: return "average";
  }
  return "?";
}

HeadKind parse_head(const std::string& s) {
  if (s == "mre") return HeadKind::mre;
  if (s == "fcn") return HeadKind::fcn;
  throw ConfigError("unknown head '" + s + "' (expected mre|fcn)");
}

Distance parse_distance(const std::string& s) {
  if (s == "cosine") return Distance::cosine;
  if (s == "euclidean") return Distance::euclidean;
  throw ConfigError("unknown distance '" + s + "' (expected cosine|euclidean)");
}

Mixing parse_mixing(const std::string& s) {
  if (s == "adaptive") return Mixing::adaptive;
  if (s == "onehot") return Mixing::onehot;
  if (s == "average") return Mixing::average;
  throw ConfigError("unknown mixing '" + s + "' (expected adaptive|onehot|average)");
}

MreNet::MreNet(const ModelConfig& config, std::uint64_t init_seed) : config_(config) {
  config_.validate();
  std::mt19937_64 rng(init_seed);
  backbone_.emplace(config_.backbone(), store_, rng);
  ams_.emplace(config_.backbone(), config_.ams(), store_, rng);
  if (config_.head == HeadKind::mre) {
    bank_ = make_prototype_bank(store_, config_.embed_dim, config_.K, config_.M, rng);
    if (config_.mixing == Mixing::adaptive) {
      mix_ = make_mixing_net(store_, config_.embed_dim, config_.K, config_.M, rng);
    }
  } else {
    fcn_w_ = store_.add("head.fcn.w", {config_.K, config_.embed_dim, 1, 1, 1},
                        he_normal(config_.K * config_.embed_dim, config_.embed_dim, rng));
    fcn_b_ = store_.add("head.fcn.b", {config_.K}, std::vector<double>(config_.K, 0.0));
  }
}

ForwardResult MreNet::forward(const Tensor& images, const std::vector<CoordinateFrame>& frames, Mode mode) const {
  if (images.rank() != 5) throw ConfigError("model input must be [N,C,D,H,W], got " + shape_str(images.shape()));
  const std::size_t N = images.dim(0);
  const Triple ext{images.dim(2), images.dim(3), images.dim(4)};
  Tensor coords;
  if (config_.coords_on) {
    if (frames.size() != N) throw ConfigError("one coordinate frame per patch is required");
    std::vector<Tensor> maps;
    for (const auto& f : frames) maps.push_back(reshape(coordinate_map(f, ext), {1, 3, ext[0], ext[1], ext[2]}));
    coords = N == 1 ? maps[0] : concat(maps, 0);
  }
  BackboneOutput feats = backbone_->forward(images, mode);
  ForwardResult out;
  out.embedding = ams_->forward(feats, coords, mode);

  if (config_.head == HeadKind::fcn) {
    out.log_posterior = log_softmax(conv3d(out.embedding, fcn_w_, fcn_b_), 1);
    return out;
  }
  const std::size_t K = config_.K, M = config_.M;
  if (config_.distance == Distance::cosine) {
    Tensor scores = cosine_scores(out.embedding, bank_);
    Tensor alpha = mixing_coefficients(out.embedding, mix_ ? &*mix_ : nullptr, config_.mixing, scores, K, M);
    out.log_posterior = mixture_log_posterior(scores, alpha, K, M);
  } else {
    Tensor logits;
    if (config_.mixing == Mixing::onehot) {
      NoGradGuard guard;
      logits = mul(squared_distances(out.embedding, bank_), scale(bank_.xi, -1.0));
    }
    Tensor alpha = mixing_coefficients(out.embedding, mix_ ? &*mix_ : nullptr, config_.mixing, logits, K, M);
    out.log_posterior = euclidean_log_posterior(out.embedding, bank_, alpha);
  }
  return out;
}

}  // namespace mre
