#include <algorithm>
#include <cmath>
#include <limits>

#include "mre/errors.hpp"
#include "mre/ops.hpp"

namespace mre {

namespace {

using detail::grad_sink;
using detail::Node;

struct AxisSplit {
  std::size_t outer = 1, len = 1, inner = 1;
};

AxisSplit split_at(const Shape& shape, std::size_t axis) {
  if (axis >= shape.size()) {
    throw UsageError("axis " + std::to_string(axis) + " invalid for shape " + shape_str(shape));
  }
  AxisSplit s;
  for (std::size_t i = 0; i < axis; ++i) s.outer *= shape[i];
  s.len = shape[axis];
  for (std::size_t i = axis + 1; i < shape.size(); ++i) s.inner *= shape[i];
  return s;
}

void require_5d(const Tensor& x, const char* op) {
  if (x.rank() != 5) {
    throw ConfigError(std::string(op) + " expects [N,C,D,H,W], got " + shape_str(x.shape()));
  }
}

}  // namespace

Tensor reshape(const Tensor& a, Shape shape) {
  if (shape_numel(shape) != a.numel()) {
    throw ConfigError("cannot reshape " + shape_str(a.shape()) + " to " + shape_str(shape));
  }
  std::vector<double> out(a.data().begin(), a.data().end());
  return make_op_result("reshape", std::move(shape), std::move(out), {a}, [a](const Node& self) {
    double* ga = grad_sink(a);
    for (std::size_t i = 0; i < self.grad.size(); ++i) ga[i] += self.grad[i];
  });
}

Tensor sum(const Tensor& a) {
  double total = 0.0;
  for (double v : a.data()) total += v;
  return make_op_result("sum", {}, {total}, {a}, [a](const Node& self) {
    double* ga = grad_sink(a);
    for (std::size_t i = 0; i < a.numel(); ++i) ga[i] += self.grad[0];
  });
}

Tensor mean(const Tensor& a) { return scale(sum(a), 1.0 / static_cast<double>(a.numel())); }

Tensor sum(const Tensor& a, std::size_t axis, bool keepdim) {
  AxisSplit s = split_at(a.shape(), axis);
  Shape out_shape = a.shape();
  if (keepdim) {
    out_shape[axis] = 1;
  } else {
    out_shape.erase(out_shape.begin() + static_cast<std::ptrdiff_t>(axis));
  }
  std::vector<double> out(s.outer * s.inner, 0.0);
  auto ad = a.data();
  for (std::size_t o = 0; o < s.outer; ++o)
    for (std::size_t l = 0; l < s.len; ++l)
      for (std::size_t i = 0; i < s.inner; ++i) out[o * s.inner + i] += ad[(o * s.len + l) * s.inner + i];
  return make_op_result("sum_axis", std::move(out_shape), std::move(out), {a}, [a, s](const Node& self) {
    double* ga = grad_sink(a);
    for (std::size_t o = 0; o < s.outer; ++o)
      for (std::size_t l = 0; l < s.len; ++l)
        for (std::size_t i = 0; i < s.inner; ++i) ga[(o * s.len + l) * s.inner + i] += self.grad[o * s.inner + i];
  });
}

Tensor mean(const Tensor& a, std::size_t axis, bool keepdim) {
  return scale(sum(a, axis, keepdim), 1.0 / static_cast<double>(a.dim(axis)));
}

Tensor softmax(const Tensor& a, std::size_t axis) {
  AxisSplit s = split_at(a.shape(), axis);
  auto ad = a.data();
  std::vector<double> out(ad.size());
  for (std::size_t o = 0; o < s.outer; ++o) {
    for (std::size_t i = 0; i < s.inner; ++i) {
      const std::size_t base = o * s.len * s.inner + i;
      double mx = -std::numeric_limits<double>::infinity();
      for (std::size_t l = 0; l < s.len; ++l) mx = std::max(mx, ad[base + l * s.inner]);
      double z = 0.0;
      for (std::size_t l = 0; l < s.len; ++l) {
        double e = std::exp(ad[base + l * s.inner] - mx);
        out[base + l * s.inner] = e;
        z += e;
      }
      for (std::size_t l = 0; l < s.len; ++l) out[base + l * s.inner] /= z;
    }
  }
  return make_op_result("softmax", a.shape(), std::move(out), {a}, [a, s](const Node& self) {
    double* ga = grad_sink(a);
    for (std::size_t o = 0; o < s.outer; ++o) {
      for (std::size_t i = 0; i < s.inner; ++i) {
        const std::size_t base = o * s.len * s.inner + i;
        double dot = 0.0;
        for (std::size_t l = 0; l < s.len; ++l) dot += self.grad[base + l * s.inner] * self.data[base + l * s.inner];
        for (std::size_t l = 0; l < s.len; ++l) {
          const std::size_t k = base + l * s.inner;
          ga[k] += self.data[k] * (self.grad[k] - dot);
        }
      }
    }
  });
}

Tensor log_softmax(const Tensor& a, std::size_t axis) {
  AxisSplit s = split_at(a.shape(), axis);
  auto ad = a.data();
  std::vector<double> out(ad.size());
  for (std::size_t o = 0; o < s.outer; ++o) {
    for (std::size_t i = 0; i < s.inner; ++i) {
      const std::size_t base = o * s.len * s.inner + i;
      double mx = -std::numeric_limits<double>::infinity();
      for (std::size_t l = 0; l < s.len; ++l) mx = std::max(mx, ad[base + l * s.inner]);
      double z = 0.0;
      for (std::size_t l = 0; l < s.len; ++l) z += std::exp(ad[base + l * s.inner] - mx);
      const double lse = mx + std::log(z);
      for (std::size_t l = 0; l < s.len; ++l) out[base + l * s.inner] = ad[base + l * s.inner] - lse;
    }
  }
  return make_op_result("log_softmax", a.shape(), std::move(out), {a}, [a, s](const Node& self) {
    double* ga = grad_sink(a);
    for (std::size_t o = 0; o < s.outer; ++o) {
      for (std::size_t i = 0; i < s.inner; ++i) {
        const std::size_t base = o * s.len * s.inner + i;
        double gsum = 0.0;
        for (std::size_t l = 0; l < s.len; ++l) gsum += self.grad[base + l * s.inner];
        for (std::size_t l = 0; l < s.len; ++l) {
          const std::size_t k = base + l * s.inner;
          ga[k] += self.grad[k] - std::exp(self.data[k]) * gsum;
        }
      }
    }
  });
}

Tensor l2_normalize(const Tensor& a, std::size_t axis) {
  AxisSplit s = split_at(a.shape(), axis);
  auto ad = a.data();
  std::vector<double> out(ad.size());
  std::vector<double> norms(s.outer * s.inner);
  for (std::size_t o = 0; o < s.outer; ++o) {
    for (std::size_t i = 0; i < s.inner; ++i) {
      const std::size_t base = o * s.len * s.inner + i;
      double sq = 0.0;
      for (std::size_t l = 0; l < s.len; ++l) sq += ad[base + l * s.inner] * ad[base + l * s.inner];
      const double n = std::sqrt(sq);
      norms[o * s.inner + i] = n;
      for (std::size_t l = 0; l < s.len; ++l) out[base + l * s.inner] = ad[base + l * s.inner] / (n + kNormEps);
    }
  }
  return make_op_result("l2_normalize", a.shape(), std::move(out), {a},
                        [a, s, norms = std::move(norms)](const Node& self) {
    double* ga = grad_sink(a);
    auto ad = a.data();
    for (std::size_t o = 0; o < s.outer; ++o) {
      for (std::size_t i = 0; i < s.inner; ++i) {
        const std::size_t base = o * s.len * s.inner + i;
        const double n = norms[o * s.inner + i];
        const double d = n + kNormEps;
        double gv = 0.0;
        for (std::size_t l = 0; l < s.len; ++l) gv += self.grad[base + l * s.inner] * ad[base + l * s.inner];
        // d/dv_j of v_i/(|v|+eps) = delta_ij/d - v_i v_j/(|v| d^2); the second
        // term vanishes at v = 0.
        const double coeff = n > 0.0 ? gv / (n * d * d) : 0.0;
        for (std::size_t l = 0; l < s.len; ++l) {
          const std::size_t k = base + l * s.inner;
          ga[k] += self.grad[k] / d - ad[k] * coeff;
        }
      }
    }
  });
}

Tensor concat(std::span<const Tensor> parts, std::size_t axis) {
  if (parts.empty()) throw UsageError("concat of zero tensors");
  Shape out_shape = parts[0].shape();
  if (axis >= out_shape.size()) throw UsageError("concat axis out of range");
  std::size_t total = 0;
  for (const auto& p : parts) {
    Shape probe = p.shape();
    if (probe.size() != out_shape.size()) throw ConfigError("concat rank mismatch");
    probe[axis] = out_shape[axis];
    if (probe != out_shape) {
      throw ConfigError("concat shape mismatch: " + shape_str(parts[0].shape()) + " vs " + shape_str(p.shape()));
    }
    total += p.dim(axis);
  }
  out_shape[axis] = total;
  AxisSplit s = split_at(out_shape, axis);
  std::vector<double> out(shape_numel(out_shape));
  std::size_t offset = 0;
  std::vector<std::size_t> offsets;
  for (const auto& p : parts) {
    offsets.push_back(offset);
    const std::size_t len = p.dim(axis);
    auto pd = p.data();
    for (std::size_t o = 0; o < s.outer; ++o)
      std::copy_n(pd.begin() + static_cast<std::ptrdiff_t>(o * len * s.inner), len * s.inner,
                  out.begin() + static_cast<std::ptrdiff_t>((o * total + offset) * s.inner));
    offset += len;
  }
  std::vector<Tensor> inputs(parts.begin(), parts.end());
  return make_op_result("concat", std::move(out_shape), std::move(out), inputs,
                        [inputs, offsets, s, axis, total](const Node& self) {
    for (std::size_t p = 0; p < inputs.size(); ++p) {
      double* gp = grad_sink(inputs[p]);
      if (!gp) continue;
      const std::size_t len = inputs[p].dim(axis);
      for (std::size_t o = 0; o < s.outer; ++o) {
        const double* src = self.grad.data() + (o * total + offsets[p]) * s.inner;
        double* dst = gp + o * len * s.inner;
        for (std::size_t k = 0; k < len * s.inner; ++k) dst[k] += src[k];
      }
    }
  });
}

Tensor slice(const Tensor& a, std::size_t axis, std::size_t start, std::size_t length) {
  AxisSplit s = split_at(a.shape(), axis);
  if (start + length > s.len) {
    throw UsageError("slice [" + std::to_string(start) + "," + std::to_string(start + length) +
                     ") exceeds axis extent " + std::to_string(s.len));
  }
  Shape out_shape = a.shape();
  out_shape[axis] = length;
  std::vector<double> out(s.outer * length * s.inner);
  auto ad = a.data();
  for (std::size_t o = 0; o < s.outer; ++o)
    std::copy_n(ad.begin() + static_cast<std::ptrdiff_t>((o * s.len + start) * s.inner), length * s.inner,
                out.begin() + static_cast<std::ptrdiff_t>(o * length * s.inner));
  return make_op_result("slice", std::move(out_shape), std::move(out), {a},
                        [a, s, start, length](const Node& self) {
    double* ga = grad_sink(a);
    for (std::size_t o = 0; o < s.outer; ++o) {
      const double* src = self.grad.data() + o * length * s.inner;
      double* dst = ga + (o * s.len + start) * s.inner;
      for (std::size_t k = 0; k < length * s.inner; ++k) dst[k] += src[k];
    }
  });
}

Tensor global_avg_pool(const Tensor& x) {
  require_5d(x, "global_avg_pool");
  const std::size_t nc = x.dim(0) * x.dim(1);
  const std::size_t vox = x.dim(2) * x.dim(3) * x.dim(4);
  std::vector<double> out(nc, 0.0);
  auto xd = x.data();
  for (std::size_t c = 0; c < nc; ++c) {
    double acc = 0.0;
    for (std::size_t v = 0; v < vox; ++v) acc += xd[c * vox + v];
    out[c] = acc / static_cast<double>(vox);
  }
  return make_op_result("global_avg_pool", {x.dim(0), x.dim(1), 1, 1, 1}, std::move(out), {x},
                        [x, nc, vox](const Node& self) {
    double* gx = grad_sink(x);
    for (std::size_t c = 0; c < nc; ++c) {
      const double g = self.grad[c] / static_cast<double>(vox);
      for (std::size_t v = 0; v < vox; ++v) gx[c * vox + v] += g;
    }
  });
}

Tensor avg_pool3d(const Tensor& x, Triple stride) {
  require_5d(x, "avg_pool3d");
  const std::size_t nc = x.dim(0) * x.dim(1);
  const std::size_t D = x.dim(2), H = x.dim(3), W = x.dim(4);
  const char* names[3] = {"D (depth)", "H (height)", "W (width)"};
  for (int a = 0; a < 3; ++a) {
    if (stride[a] == 0 || x.dim(2 + a) % stride[a] != 0) {
      throw ConfigError(std::string("avg_pool3d: ") + names[a] + " extent " + std::to_string(x.dim(2 + a)) +
                        " not divisible by stride " + std::to_string(stride[a]));
    }
  }
  const std::size_t Do = D / stride[0], Ho = H / stride[1], Wo = W / stride[2];
  const double inv = 1.0 / static_cast<double>(stride[0] * stride[1] * stride[2]);
  std::vector<double> out(nc * Do * Ho * Wo, 0.0);
  auto xd = x.data();
  for (std::size_t c = 0; c < nc; ++c)
    for (std::size_t d = 0; d < D; ++d)
      for (std::size_t h = 0; h < H; ++h)
        for (std::size_t w = 0; w < W; ++w)
          out[((c * Do + d / stride[0]) * Ho + h / stride[1]) * Wo + w / stride[2]] +=
              xd[((c * D + d) * H + h) * W + w] * inv;
  return make_op_result("avg_pool3d", {x.dim(0), x.dim(1), Do, Ho, Wo}, std::move(out), {x},
                        [x, stride, nc, D, H, W, Do, Ho, Wo, inv](const Node& self) {
    double* gx = grad_sink(x);
    for (std::size_t c = 0; c < nc; ++c)
      for (std::size_t d = 0; d < D; ++d)
        for (std::size_t h = 0; h < H; ++h)
          for (std::size_t w = 0; w < W; ++w)
            gx[((c * D + d) * H + h) * W + w] +=
                self.grad[((c * Do + d / stride[0]) * Ho + h / stride[1]) * Wo + w / stride[2]] * inv;
  });
}

Tensor upsample_nearest(const Tensor& x, Triple factor) {
  require_5d(x, "upsample_nearest");
  const std::size_t nc = x.dim(0) * x.dim(1);
  const std::size_t D = x.dim(2), H = x.dim(3), W = x.dim(4);
  const std::size_t Do = D * factor[0], Ho = H * factor[1], Wo = W * factor[2];
  std::vector<double> out(nc * Do * Ho * Wo);
  auto xd = x.data();
  for (std::size_t c = 0; c < nc; ++c)
    for (std::size_t d = 0; d < Do; ++d)
      for (std::size_t h = 0; h < Ho; ++h)
        for (std::size_t w = 0; w < Wo; ++w)
          out[((c * Do + d) * Ho + h) * Wo + w] = xd[((c * D + d / factor[0]) * H + h / factor[1]) * W + w / factor[2]];
  return make_op_result("upsample_nearest", {x.dim(0), x.dim(1), Do, Ho, Wo}, std::move(out), {x},
                        [x, factor, nc, D, H, W, Do, Ho, Wo](const Node& self) {
    double* gx = grad_sink(x);
    for (std::size_t c = 0; c < nc; ++c)
      for (std::size_t d = 0; d < Do; ++d)
        for (std::size_t h = 0; h < Ho; ++h)
          for (std::size_t w = 0; w < Wo; ++w)
            gx[((c * D + d / factor[0]) * H + h / factor[1]) * W + w / factor[2]] +=
                self.grad[((c * Do + d) * Ho + h) * Wo + w];
  });
}

}  // namespace mre
