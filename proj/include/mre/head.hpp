#pragma once

#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "mre/ops.hpp"
#include "mre/param_store.hpp"

namespace mre {

enum class Mixing { adaptive, onehot, average };
enum class Distance { cosine, euclidean };

// Prototypes embedded as the columns of a bias-free classifier weight.
// Column k*M + j holds the j-th mode centre of category k (0-based).
struct PrototypeBank {
  Tensor weight;  // [N_e, K*M]
  Tensor xi;      // scalar scale
  std::size_t K = 0;
  std::size_t M = 0;
};

// Per-voxel squeeze/excitation network producing the mixing logits.
struct MixingNetParams {
  Tensor squeeze_w;  // [d_sq, N_e, 1, 1, 1]
  Tensor squeeze_b;  // [d_sq]
  Tensor excite_w;   // [K*M, d_sq, 1, 1, 1]
  Tensor excite_b;   // [K*M]
};

inline constexpr double kInitialXi = 10.0;

/// min(512, max(K*M, N_e/4))
std::size_t squeeze_dim(std::size_t K, std::size_t M, std::size_t embed_dim);

PrototypeBank make_prototype_bank(ParamStore& store, std::size_t embed_dim, std::size_t K, std::size_t M,
                                  std::mt19937_64& rng, const std::string& prefix = "head");
MixingNetParams make_mixing_net(ParamStore& store, std::size_t embed_dim, std::size_t K, std::size_t M,
                                std::mt19937_64& rng, const std::string& prefix = "head.mix");

/// xi * <e/|e|, c/|c|> for every prototype: [N, N_e, ...] -> [N, K*M, ...].
Tensor cosine_scores(const Tensor& embedding, const PrototypeBank& bank);

/// beta = sigmoid(excite(relu(squeeze(e)))), [N, K*M, ...]
Tensor mixing_logits(const Tensor& embedding, const MixingNetParams& mix);
/// alpha_{k,j} = exp(beta_{k,j}) / sum_j exp(beta_{k,j})
Tensor per_category_softmax(const Tensor& beta, std::size_t K, std::size_t M);

/// Mixing coefficients for the chosen strategy. `mode_logits` (the per-mode
/// log-probabilities up to a constant) picks the nearest mode for onehot;
/// `mix` is only read for adaptive.
Tensor mixing_coefficients(const Tensor& embedding, const MixingNetParams* mix, Mixing strategy,
                           const Tensor& mode_logits, std::size_t K, std::size_t M);

/// log P(s = k) = log sum_j alpha_kj exp(l_kj) - log sum_k sum_j alpha_kj exp(l_kj),
/// evaluated after subtracting the per-voxel maximum logit. [N, K*M, ...] -> [N, K, ...]
Tensor mixture_log_posterior(const Tensor& mode_logits, const Tensor& alpha, std::size_t K, std::size_t M);
Tensor mixture_posterior(const Tensor& mode_logits, const Tensor& alpha, std::size_t K, std::size_t M);

/// |e/|e| - c/|c||^2 by explicit dense evaluation: [N, N_e, ...] -> [N, K*M, ...].
Tensor squared_distances(const Tensor& embedding, const PrototypeBank& bank);
/// Mixture posterior with per-mode logits -xi * squared distance.
Tensor euclidean_log_posterior(const Tensor& embedding, const PrototypeBank& bank, const Tensor& alpha);
Tensor euclidean_posterior(const Tensor& embedding, const PrototypeBank& bank, const Tensor& alpha);

/// Per-voxel argmax over axis 1 of [N, K, ...]; ties go to the lowest index.
std::vector<std::uint8_t> predict_labels(const Tensor& posterior);

}  // namespace mre
