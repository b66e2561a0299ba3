#include "mre/head.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "mre/errors.hpp"

namespace mre {

using detail::grad_sink;
using detail::Node;

namespace {

void check_mode_tensor(const Tensor& t, std::size_t K, std::size_t M, const char* what) {
  if (t.rank() < 2 || t.dim(1) != K * M) {
    throw ConfigError(std::string(what) + " must be [N, K*M, ...] with K*M = " + std::to_string(K * M) + ", got " +
                      shape_str(t.shape()));
  }
}

Shape with_channels(const Shape& s, std::size_t channels) {
  Shape out = s;
  out[1] = channels;
  return out;
}

}  // namespace

std::size_t squeeze_dim(std::size_t K, std::size_t M, std::size_t embed_dim) {
  return std::min<std::size_t>(512, std::max(K * M, embed_dim / 4));
}

PrototypeBank make_prototype_bank(ParamStore& store, std::size_t embed_dim, std::size_t K, std::size_t M,
                                  std::mt19937_64& rng, const std::string& prefix) {
  if (K < 2 || M < 1) throw ConfigError("prototype bank needs K >= 2 and M >= 1");
  std::normal_distribution<double> dist(0.0, 1.0 / std::sqrt(static_cast<double>(embed_dim)));
  std::vector<double> w(embed_dim * K * M);
  for (auto& v : w) v = dist(rng);
  PrototypeBank bank;
  bank.weight = store.add(prefix + ".prototypes", {embed_dim, K * M}, std::move(w));
  bank.xi = store.add(prefix + ".xi", {}, {kInitialXi});
  bank.K = K;
  bank.M = M;
  return bank;
}

MixingNetParams make_mixing_net(ParamStore& store, std::size_t embed_dim, std::size_t K, std::size_t M,
                                std::mt19937_64& rng, const std::string& prefix) {
  const std::size_t dsq = squeeze_dim(K, M, embed_dim);
  const std::size_t km = K * M;
  auto normal = [&](std::size_t n, std::size_t fan_in) {
    std::normal_distribution<double> dist(0.0, std::sqrt(2.0 / static_cast<double>(fan_in)));
    std::vector<double> out(n);
    for (auto& v : out) v = dist(rng);
    return out;
  };
  MixingNetParams mix;
  mix.squeeze_w = store.add(prefix + ".squeeze.w", {dsq, embed_dim, 1, 1, 1}, normal(dsq * embed_dim, embed_dim));
  mix.squeeze_b = store.add(prefix + ".squeeze.b", {dsq}, std::vector<double>(dsq, 0.0));
  mix.excite_w = store.add(prefix + ".excite.w", {km, dsq, 1, 1, 1}, normal(km * dsq, dsq));
  mix.excite_b = store.add(prefix + ".excite.b", {km}, std::vector<double>(km, 0.0));
  return mix;
}

Tensor cosine_scores(const Tensor& embedding, const PrototypeBank& bank) {
  const std::size_t ne = bank.weight.dim(0), km = bank.weight.dim(1);
  if (embedding.rank() != 5 || embedding.dim(1) != ne) {
    throw ConfigError("embedding " + shape_str(embedding.shape()) + " does not match prototype width " +
                      std::to_string(ne));
  }
  Tensor e_hat = l2_normalize(embedding, 1);
  Tensor c_hat = l2_normalize(bank.weight, 0);
  // The normalized prototypes act as the kernel of a bias-free 1x1x1 layer.
  Tensor kernel = reshape(transpose(c_hat), {km, ne, 1, 1, 1});
  return mul(conv3d(e_hat, kernel, Tensor{}), bank.xi);
}

Tensor mixing_logits(const Tensor& embedding, const MixingNetParams& mix) {
  Tensor hidden = relu(conv3d(embedding, mix.squeeze_w, mix.squeeze_b));
  return sigmoid(conv3d(hidden, mix.excite_w, mix.excite_b));
}

Tensor per_category_softmax(const Tensor& beta, std::size_t K, std::size_t M) {
  check_mode_tensor(beta, K, M, "mixing logits");
  const std::size_t N = beta.dim(0);
  const std::size_t S = beta.numel() / (N * K * M);
  return reshape(softmax(reshape(beta, {N, K, M, S}), 2), beta.shape());
}

Tensor mixing_coefficients(const Tensor& embedding, const MixingNetParams* mix, Mixing strategy,
                           const Tensor& mode_logits, std::size_t K, std::size_t M) {
  switch (strategy) {
    case Mixing::adaptive:
      if (!mix) throw ConfigError("adaptive mixing requires mixing-network parameters");
      return per_category_softmax(mixing_logits(embedding, *mix), K, M);
    case Mixing::average: {
      Shape s = with_channels(embedding.shape(), K * M);
      return Tensor::full(std::move(s), 1.0 / static_cast<double>(M));
    }
    case Mixing::onehot: {
      if (!mode_logits.defined()) throw ConfigError("one-hot mixing requires per-mode scores");
      check_mode_tensor(mode_logits, K, M, "mode scores");
      const std::size_t N = mode_logits.dim(0);
      const std::size_t S = mode_logits.numel() / (N * K * M);
      auto sd = mode_logits.data();
      std::vector<double> alpha(sd.size(), 0.0);
      for (std::size_t n = 0; n < N; ++n)
        for (std::size_t k = 0; k < K; ++k)
          for (std::size_t v = 0; v < S; ++v) {
            std::size_t best = 0;
            for (std::size_t j = 1; j < M; ++j) {
              if (sd[((n * K + k) * M + j) * S + v] > sd[((n * K + k) * M + best) * S + v]) best = j;
            }
            alpha[((n * K + k) * M + best) * S + v] = 1.0;
          }
      return Tensor::from_data(mode_logits.shape(), std::move(alpha));
    }
  }
  throw ConfigError("unknown mixing strategy");
}

Tensor mixture_log_posterior(const Tensor& mode_logits, const Tensor& alpha, std::size_t K, std::size_t M) {
  check_mode_tensor(mode_logits, K, M, "mode logits");
  if (alpha.shape() != mode_logits.shape()) {
    throw ConfigError("mixing coefficients " + shape_str(alpha.shape()) + " do not match mode logits " +
                      shape_str(mode_logits.shape()));
  }
  const std::size_t N = mode_logits.dim(0);
  const std::size_t S = mode_logits.numel() / (N * K * M);
  auto ld = mode_logits.data();
  auto ad = alpha.data();
  std::vector<double> out(N * K * S);
  std::vector<double> num(K);
  for (std::size_t n = 0; n < N; ++n) {
    for (std::size_t v = 0; v < S; ++v) {
      double mx = -std::numeric_limits<double>::infinity();
      for (std::size_t c = 0; c < K * M; ++c) mx = std::max(mx, ld[(n * K * M + c) * S + v]);
      double z = 0.0;
      for (std::size_t k = 0; k < K; ++k) {
        double acc = 0.0;
        for (std::size_t j = 0; j < M; ++j) {
          const std::size_t i = (n * K * M + k * M + j) * S + v;
          acc += ad[i] * std::exp(ld[i] - mx);
        }
        num[k] = acc;
        z += acc;
      }
      const double log_z = std::log(z);
      for (std::size_t k = 0; k < K; ++k) out[(n * K + k) * S + v] = std::log(num[k]) - log_z;
    }
  }
  return make_op_result("mixture_log_posterior", with_channels(mode_logits.shape(), K), std::move(out),
                        {mode_logits, alpha}, [mode_logits, alpha, K, M, N, S](const Node& self) {
    double* gl = grad_sink(mode_logits);
    double* ga = grad_sink(alpha);
    auto ld = mode_logits.data();
    auto ad = alpha.data();
    std::vector<double> e(K * M), num(K);
    for (std::size_t n = 0; n < N; ++n) {
      for (std::size_t v = 0; v < S; ++v) {
        double mx = -std::numeric_limits<double>::infinity();
        for (std::size_t c = 0; c < K * M; ++c) mx = std::max(mx, ld[(n * K * M + c) * S + v]);
        double z = 0.0, gsum = 0.0;
        for (std::size_t k = 0; k < K; ++k) {
          double acc = 0.0;
          for (std::size_t j = 0; j < M; ++j) {
            const std::size_t i = (n * K * M + k * M + j) * S + v;
            e[k * M + j] = std::exp(ld[i] - mx);
            acc += ad[i] * e[k * M + j];
          }
          num[k] = acc;
          z += acc;
          gsum += self.grad[(n * K + k) * S + v];
        }
        for (std::size_t k = 0; k < K; ++k) {
          const double coeff = self.grad[(n * K + k) * S + v] / num[k] - gsum / z;
          for (std::size_t j = 0; j < M; ++j) {
            const std::size_t i = (n * K * M + k * M + j) * S + v;
            if (gl) gl[i] += ad[i] * e[k * M + j] * coeff;
            if (ga) ga[i] += e[k * M + j] * coeff;
          }
        }
      }
    }
  });
}

Tensor mixture_posterior(const Tensor& mode_logits, const Tensor& alpha, std::size_t K, std::size_t M) {
  return exp(mixture_log_posterior(mode_logits, alpha, K, M));
}

namespace {

// d[n, c, v] = sum_f (e[n, f, v] - p[f, c])^2
Tensor pairwise_sq_dist(const Tensor& e, const Tensor& p) {
  const std::size_t N = e.dim(0), F = e.dim(1), C = p.dim(1);
  const std::size_t S = e.numel() / (N * F);
  auto ed = e.data();
  auto pd = p.data();
  std::vector<double> out(N * C * S, 0.0);
  for (std::size_t n = 0; n < N; ++n)
    for (std::size_t c = 0; c < C; ++c)
      for (std::size_t f = 0; f < F; ++f) {
        const double pf = pd[f * C + c];
        const double* ev = ed.data() + (n * F + f) * S;
        double* ov = out.data() + (n * C + c) * S;
        for (std::size_t v = 0; v < S; ++v) {
          const double diff = ev[v] - pf;
          ov[v] += diff * diff;
        }
      }
  return make_op_result("pairwise_sq_dist", with_channels(e.shape(), C), std::move(out), {e, p},
                        [e, p, N, F, C, S](const Node& self) {
    double* ge = grad_sink(e);
    double* gp = grad_sink(p);
    auto ed = e.data();
    auto pd = p.data();
    for (std::size_t n = 0; n < N; ++n)
      for (std::size_t c = 0; c < C; ++c)
        for (std::size_t f = 0; f < F; ++f) {
          const double pf = pd[f * C + c];
          const double* ev = ed.data() + (n * F + f) * S;
          const double* g = self.grad.data() + (n * C + c) * S;
          double acc = 0.0;
          for (std::size_t v = 0; v < S; ++v) {
            const double t = 2.0 * g[v] * (ev[v] - pf);
            if (ge) ge[(n * F + f) * S + v] += t;
            acc += t;
          }
          if (gp) gp[f * C + c] -= acc;
        }
  });
}

}  // namespace

Tensor squared_distances(const Tensor& embedding, const PrototypeBank& bank) {
  if (embedding.rank() < 2 || embedding.dim(1) != bank.weight.dim(0)) {
    throw ConfigError("embedding " + shape_str(embedding.shape()) + " does not match prototype width " +
                      std::to_string(bank.weight.dim(0)));
  }
  return pairwise_sq_dist(l2_normalize(embedding, 1), l2_normalize(bank.weight, 0));
}

Tensor euclidean_log_posterior(const Tensor& embedding, const PrototypeBank& bank, const Tensor& alpha) {
  Tensor logits = mul(squared_distances(embedding, bank), scale(bank.xi, -1.0));
  return mixture_log_posterior(logits, alpha, bank.K, bank.M);
}

Tensor euclidean_posterior(const Tensor& embedding, const PrototypeBank& bank, const Tensor& alpha) {
  return exp(euclidean_log_posterior(embedding, bank, alpha));
}

std::vector<std::uint8_t> predict_labels(const Tensor& posterior) {
  if (posterior.rank() < 2) throw ConfigError("posterior must be [N, K, ...]");
  const std::size_t N = posterior.dim(0), K = posterior.dim(1);
  if (K > 256) throw ConfigError("at most 256 categories fit a u8 label map");
  const std::size_t S = posterior.numel() / (N * K);
  auto pd = posterior.data();
  std::vector<std::uint8_t> labels(N * S);
  for (std::size_t n = 0; n < N; ++n)
    for (std::size_t v = 0; v < S; ++v) {
      std::size_t best = 0;
      for (std::size_t k = 1; k < K; ++k)
        if (pd[(n * K + k) * S + v] > pd[(n * K + best) * S + v]) best = k;
      labels[n * S + v] = static_cast<std::uint8_t>(best);
    }
  return labels;
}

}  // namespace mre
