#include <cmath>

#include "mre/errors.hpp"
#include "mre/training.hpp"

namespace mre {

namespace {

void check_layout(const Tensor& log_posterior, std::size_t labels) {
  if (log_posterior.rank() < 2) {
    throw UsageError("expected a [B, K, ...] log-posterior, got " + shape_str(log_posterior.shape()));
  }
  const std::size_t B = log_posterior.dim(0), K = log_posterior.dim(1);
  if (B * (log_posterior.numel() / (B * K)) != labels) {
    throw UsageError("label count " + std::to_string(labels) + " does not match log-posterior " +
                     shape_str(log_posterior.shape()));
  }
}

}  // namespace

std::vector<double> voxel_nll(const Tensor& log_posterior, std::span<const std::uint8_t> labels) {
  check_layout(log_posterior, labels.size());
  const std::size_t B = log_posterior.dim(0), K = log_posterior.dim(1);
  const std::size_t S = log_posterior.numel() / (B * K);
  auto lp = log_posterior.data();
  std::vector<double> out(labels.size());
  for (std::size_t b = 0; b < B; ++b)
    for (std::size_t v = 0; v < S; ++v) {
      const std::uint8_t k = labels[b * S + v];
      if (k >= K) throw ConfigError("label " + std::to_string(k) + " outside [0, " + std::to_string(K) + ")");
      out[b * S + v] = -lp[(b * K + k) * S + v];
    }
  return out;
}

Tensor dml_loss(const Tensor& log_posterior, std::span<const std::uint8_t> labels,
                std::span<const std::uint8_t> keep) {
  check_layout(log_posterior, labels.size());
  if (keep.size() != labels.size()) throw UsageError("keep-mask size does not match labels");
  const std::size_t B = log_posterior.dim(0), K = log_posterior.dim(1);
  const std::size_t S = log_posterior.numel() / (B * K);
  std::vector<std::size_t> count(K, 0);
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] >= K) throw ConfigError("label " + std::to_string(labels[i]) + " outside [0, " + std::to_string(K) + ")");
    if (keep[i]) ++count[labels[i]];
  }
  std::size_t kept = 0;
  for (std::size_t c : count) kept += c;
  if (kept == 0) throw UsageError("dml_loss: keep-mask is empty");
  std::vector<double> weights(log_posterior.numel(), 0.0);
  for (std::size_t b = 0; b < B; ++b)
    for (std::size_t v = 0; v < S; ++v) {
      const std::size_t i = b * S + v;
      if (!keep[i]) continue;
      const std::uint8_t k = labels[i];
      weights[(b * K + k) * S + v] = -1.0 / static_cast<double>(count[k]);
    }
  return sum(mul(log_posterior, Tensor::from_data(log_posterior.shape(), std::move(weights))));
}

}  // namespace mre
