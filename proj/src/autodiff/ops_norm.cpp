#include <cmath>

#include "mre/errors.hpp"
#include "mre/ops.hpp"

namespace mre {

using detail::grad_sink;
using detail::Node;

Tensor batch_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta, Tensor& running_mean,
                  Tensor& running_var, bool training, const BatchNormOptions& options) {
  if (x.rank() < 2) throw ConfigError("batch_norm expects [N,C,...], got " + shape_str(x.shape()));
  const std::size_t N = x.dim(0), C = x.dim(1);
  const std::size_t S = x.numel() / (N * C);
  for (const Tensor* t : std::initializer_list<const Tensor*>{&gamma, &beta, &running_mean, &running_var}) {
    if (t->numel() != C) {
      throw ConfigError("batch_norm parameter " + shape_str(t->shape()) + " does not match channels of " +
                        shape_str(x.shape()));
    }
  }
  const std::size_t m = N * S;
  auto xd = x.data();
  auto gd = gamma.data();
  auto bd = beta.data();
  std::vector<double> mu(C), inv_std(C);
  if (training) {
    auto rm = running_mean.mutable_data();
    auto rv = running_var.mutable_data();
    for (std::size_t c = 0; c < C; ++c) {
      double s = 0.0;
      for (std::size_t n = 0; n < N; ++n)
        for (std::size_t v = 0; v < S; ++v) s += xd[(n * C + c) * S + v];
      const double mean = s / static_cast<double>(m);
      double ss = 0.0;
      for (std::size_t n = 0; n < N; ++n)
        for (std::size_t v = 0; v < S; ++v) {
          const double d = xd[(n * C + c) * S + v] - mean;
          ss += d * d;
        }
      const double var = ss / static_cast<double>(m);
      mu[c] = mean;
      inv_std[c] = 1.0 / std::sqrt(var + options.eps);
      const double unbiased = m > 1 ? ss / static_cast<double>(m - 1) : var;
      rm[c] = options.momentum * rm[c] + (1.0 - options.momentum) * mean;
      rv[c] = options.momentum * rv[c] + (1.0 - options.momentum) * unbiased;
    }
  } else {
    auto rm = running_mean.data();
    auto rv = running_var.data();
    for (std::size_t c = 0; c < C; ++c) {
      mu[c] = rm[c];
      inv_std[c] = 1.0 / std::sqrt(rv[c] + options.eps);
    }
  }

  std::vector<double> out(x.numel());
  std::vector<double> xhat(x.numel());
  for (std::size_t n = 0; n < N; ++n)
    for (std::size_t c = 0; c < C; ++c)
      for (std::size_t v = 0; v < S; ++v) {
        const std::size_t i = (n * C + c) * S + v;
        xhat[i] = (xd[i] - mu[c]) * inv_std[c];
        out[i] = gd[c] * xhat[i] + bd[c];
      }

  return make_op_result("batch_norm", x.shape(), std::move(out), {x, gamma, beta},
                        [x, gamma, beta, training, N, C, S, m, inv_std = std::move(inv_std),
                         xhat = std::move(xhat)](const Node& self) {
    double* gx = grad_sink(x);
    double* gg = grad_sink(gamma);
    double* gb = grad_sink(beta);
    auto gd = gamma.data();
    for (std::size_t c = 0; c < C; ++c) {
      double sum_g = 0.0, sum_gx = 0.0;
      for (std::size_t n = 0; n < N; ++n)
        for (std::size_t v = 0; v < S; ++v) {
          const std::size_t i = (n * C + c) * S + v;
          sum_g += self.grad[i];
          sum_gx += self.grad[i] * xhat[i];
        }
      if (gg) gg[c] += sum_gx;
      if (gb) gb[c] += sum_g;
      if (!gx) continue;
      const double k = gd[c] * inv_std[c];
      if (training) {
        const double inv_m = 1.0 / static_cast<double>(m);
        for (std::size_t n = 0; n < N; ++n)
          for (std::size_t v = 0; v < S; ++v) {
            const std::size_t i = (n * C + c) * S + v;
            gx[i] += k * (self.grad[i] - inv_m * sum_g - xhat[i] * inv_m * sum_gx);
          }
      } else {
        for (std::size_t n = 0; n < N; ++n)
          for (std::size_t v = 0; v < S; ++v) {
            const std::size_t i = (n * C + c) * S + v;
            gx[i] += k * self.grad[i];
          }
      }
    }
  });
}

}  // namespace mre
