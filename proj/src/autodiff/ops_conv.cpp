#include <Eigen/Core>
#include <cstddef>
#include <numeric>

#include "mre/errors.hpp"
#include "mre/ops.hpp"

namespace mre {

namespace {

using detail::grad_sink;
using detail::Node;
using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using CMap = Eigen::Map<const RowMat>;
using MMap = Eigen::Map<RowMat>;
using Index = std::ptrdiff_t;

// Geometry of one convolution, with the kernel taps that touch at least one
// in-bounds input voxel. Taps that only ever see zero padding (common for the
// large dilation rates) are dropped from the column matrix.
struct ConvPlan {
  std::size_t ci = 0, co = 0;
  Triple in{}, out{}, k{}, stride{}, pad{}, dil{};
  std::vector<std::array<std::size_t, 3>> taps;
  std::vector<std::size_t> tap_flat;
  bool pointwise = false;

  std::size_t in_vox() const { return in[0] * in[1] * in[2]; }
  std::size_t out_vox() const { return out[0] * out[1] * out[2]; }
  std::size_t kernel_vol() const { return k[0] * k[1] * k[2]; }
  std::size_t rows() const { return ci * taps.size(); }
};

bool tap_active(std::size_t in, std::size_t out, std::size_t tap, std::size_t stride, std::size_t pad,
                std::size_t dil) {
  for (std::size_t o = 0; o < out; ++o) {
    Index pos = static_cast<Index>(o * stride + tap * dil) - static_cast<Index>(pad);
    if (pos >= 0 && pos < static_cast<Index>(in)) return true;
  }
  return false;
}

ConvPlan make_plan(std::size_t ci, std::size_t co, Triple in, Triple k, const ConvGeometry& g) {
  ConvPlan p;
  p.ci = ci;
  p.co = co;
  p.in = in;
  p.k = k;
  p.stride = g.stride;
  p.pad = g.padding;
  p.dil = g.dilation;
  for (int a = 0; a < 3; ++a) {
    if (g.dilation[a] < 1 || g.stride[a] < 1) throw ConfigError("conv3d: stride and dilation must be >= 1");
    p.out[a] = conv_output_extent(in[a], k[a], g.stride[a], g.padding[a], g.dilation[a]);
  }
  std::array<std::vector<std::size_t>, 3> active;
  for (int a = 0; a < 3; ++a)
    for (std::size_t t = 0; t < k[a]; ++t)
      if (tap_active(in[a], p.out[a], t, p.stride[a], p.pad[a], p.dil[a])) active[a].push_back(t);
  for (auto kd : active[0])
    for (auto kh : active[1])
      for (auto kw : active[2]) {
        p.taps.push_back({kd, kh, kw});
        p.tap_flat.push_back((kd * k[1] + kh) * k[2] + kw);
      }
  p.pointwise = p.kernel_vol() == 1 && p.taps.size() == 1 && p.out == p.in && g.padding == Triple{0, 0, 0};
  return p;
}

// cols[(c*T + t), out_voxel] = x[c, input voxel under tap t]
void im2col(const ConvPlan& p, const double* x, double* cols) {
  const std::size_t T = p.taps.size();
  const std::size_t ov = p.out_vox();
  for (std::size_t c = 0; c < p.ci; ++c) {
    const double* xc = x + c * p.in_vox();
    for (std::size_t t = 0; t < T; ++t) {
      double* row = cols + (c * T + t) * ov;
      const auto& tap = p.taps[t];
      for (std::size_t od = 0; od < p.out[0]; ++od) {
        const Index id = static_cast<Index>(od * p.stride[0] + tap[0] * p.dil[0]) - static_cast<Index>(p.pad[0]);
        double* rd = row + od * p.out[1] * p.out[2];
        if (id < 0 || id >= static_cast<Index>(p.in[0])) {
          std::fill_n(rd, p.out[1] * p.out[2], 0.0);
          continue;
        }
        for (std::size_t oh = 0; oh < p.out[1]; ++oh) {
          const Index ih = static_cast<Index>(oh * p.stride[1] + tap[1] * p.dil[1]) - static_cast<Index>(p.pad[1]);
          double* rh = rd + oh * p.out[2];
          if (ih < 0 || ih >= static_cast<Index>(p.in[1])) {
            std::fill_n(rh, p.out[2], 0.0);
            continue;
          }
          const double* xr = xc + (static_cast<std::size_t>(id) * p.in[1] + static_cast<std::size_t>(ih)) * p.in[2];
          for (std::size_t ow = 0; ow < p.out[2]; ++ow) {
            const Index iw = static_cast<Index>(ow * p.stride[2] + tap[2] * p.dil[2]) - static_cast<Index>(p.pad[2]);
            rh[ow] = (iw < 0 || iw >= static_cast<Index>(p.in[2])) ? 0.0 : xr[iw];
          }
        }
      }
    }
  }
}

// Adjoint of im2col: scatter-add columns back onto the input grid.
void col2im(const ConvPlan& p, const double* cols, double* x) {
  const std::size_t T = p.taps.size();
  const std::size_t ov = p.out_vox();
  for (std::size_t c = 0; c < p.ci; ++c) {
    double* xc = x + c * p.in_vox();
    for (std::size_t t = 0; t < T; ++t) {
      const double* row = cols + (c * T + t) * ov;
      const auto& tap = p.taps[t];
      for (std::size_t od = 0; od < p.out[0]; ++od) {
        const Index id = static_cast<Index>(od * p.stride[0] + tap[0] * p.dil[0]) - static_cast<Index>(p.pad[0]);
        if (id < 0 || id >= static_cast<Index>(p.in[0])) continue;
        const double* rd = row + od * p.out[1] * p.out[2];
        for (std::size_t oh = 0; oh < p.out[1]; ++oh) {
          const Index ih = static_cast<Index>(oh * p.stride[1] + tap[1] * p.dil[1]) - static_cast<Index>(p.pad[1]);
          if (ih < 0 || ih >= static_cast<Index>(p.in[1])) continue;
          const double* rh = rd + oh * p.out[2];
          double* xr = xc + (static_cast<std::size_t>(id) * p.in[1] + static_cast<std::size_t>(ih)) * p.in[2];
          for (std::size_t ow = 0; ow < p.out[2]; ++ow) {
            const Index iw = static_cast<Index>(ow * p.stride[2] + tap[2] * p.dil[2]) - static_cast<Index>(p.pad[2]);
            if (iw >= 0 && iw < static_cast<Index>(p.in[2])) xr[iw] += rh[ow];
          }
        }
      }
    }
  }
}

// Kernel [A, B, k...] restricted to the plan's active taps, as [A, B*T].
RowMat gather_kernel(const ConvPlan& p, std::span<const double> w, std::size_t a, std::size_t b) {
  const std::size_t T = p.taps.size();
  const std::size_t kv = p.kernel_vol();
  RowMat m(static_cast<Index>(a), static_cast<Index>(b * T));
  for (std::size_t i = 0; i < a; ++i)
    for (std::size_t j = 0; j < b; ++j)
      for (std::size_t t = 0; t < T; ++t) m(static_cast<Index>(i), static_cast<Index>(j * T + t)) = w[(i * b + j) * kv + p.tap_flat[t]];
  return m;
}

void scatter_kernel(const ConvPlan& p, const RowMat& m, double* gw, std::size_t a, std::size_t b) {
  const std::size_t T = p.taps.size();
  const std::size_t kv = p.kernel_vol();
  for (std::size_t i = 0; i < a; ++i)
    for (std::size_t j = 0; j < b; ++j)
      for (std::size_t t = 0; t < T; ++t) gw[(i * b + j) * kv + p.tap_flat[t]] += m(static_cast<Index>(i), static_cast<Index>(j * T + t));
}

Triple spatial(const Tensor& t, std::size_t first) { return {t.dim(first), t.dim(first + 1), t.dim(first + 2)}; }

}  // namespace

std::size_t conv_output_extent(std::size_t in, std::size_t kernel, std::size_t stride, std::size_t pad,
                               std::size_t dilation) {
  const Index span = static_cast<Index>(dilation * (kernel - 1) + 1);
  const Index padded = static_cast<Index>(in + 2 * pad);
  if (kernel == 0 || span > padded) {
    throw ConfigError("conv3d: dilated kernel extent " + std::to_string(span) + " exceeds padded input extent " +
                      std::to_string(padded));
  }
  return static_cast<std::size_t>((padded - span) / static_cast<Index>(stride)) + 1;
}

Tensor conv3d(const Tensor& input, const Tensor& kernel, const Tensor& bias, const ConvGeometry& geometry) {
  if (input.rank() == 4) {
    Shape s5{1};
    s5.insert(s5.end(), input.shape().begin(), input.shape().end());
    Tensor y = conv3d(reshape(input, s5), kernel, bias, geometry);
    return reshape(y, Shape(y.shape().begin() + 1, y.shape().end()));
  }
  if (input.rank() != 5 || kernel.rank() != 5) {
    throw ConfigError("conv3d expects input [N,C,D,H,W] and kernel [Co,Ci,kd,kh,kw], got " +
                      shape_str(input.shape()) + " and " + shape_str(kernel.shape()));
  }
  if (input.dim(1) != kernel.dim(1)) {
    throw ConfigError("conv3d channel mismatch: input " + shape_str(input.shape()) + " vs kernel " +
                      shape_str(kernel.shape()));
  }
  const std::size_t N = input.dim(0), ci = input.dim(1), co = kernel.dim(0);
  if (bias.defined() && (bias.rank() != 1 || bias.dim(0) != co)) {
    throw ConfigError("conv3d bias " + shape_str(bias.shape()) + " does not match kernel " + shape_str(kernel.shape()));
  }
  ConvPlan p = make_plan(ci, co, spatial(input, 2), spatial(kernel, 2), geometry);
  const std::size_t iv = p.in_vox(), ov = p.out_vox(), rows = p.rows();

  RowMat wa = gather_kernel(p, kernel.data(), co, ci);
  std::vector<double> out(N * co * ov);
  std::vector<double> cols(p.pointwise ? 0 : rows * ov);
  auto xd = input.data();
  for (std::size_t n = 0; n < N; ++n) {
    const double* xn = xd.data() + n * ci * iv;
    const double* c = xn;
    if (!p.pointwise) {
      im2col(p, xn, cols.data());
      c = cols.data();
    }
    MMap y(out.data() + n * co * ov, static_cast<Index>(co), static_cast<Index>(ov));
    y.noalias() = wa * CMap(c, static_cast<Index>(rows), static_cast<Index>(ov));
    if (bias.defined()) {
      auto bd = bias.data();
      for (std::size_t o = 0; o < co; ++o) y.row(static_cast<Index>(o)).array() += bd[o];
    }
  }
  return make_op_result("conv3d", {N, co, p.out[0], p.out[1], p.out[2]}, std::move(out), {input, kernel, bias},
                        [input, kernel, bias, p, wa = std::move(wa)](const Node& self) {
    const std::size_t N = input.dim(0), iv = p.in_vox(), ov = p.out_vox(), rows = p.rows();
    double* gx = grad_sink(input);
    double* gw = grad_sink(kernel);
    double* gb = grad_sink(bias);
    RowMat gwa;
    if (gw) gwa = RowMat::Zero(static_cast<Index>(p.co), static_cast<Index>(rows));
    std::vector<double> cols(p.pointwise ? 0 : rows * ov);
    std::vector<double> gcols(p.pointwise || !gx ? 0 : rows * ov);
    auto xd = input.data();
    for (std::size_t n = 0; n < N; ++n) {
      CMap gy(self.grad.data() + n * p.co * ov, static_cast<Index>(p.co), static_cast<Index>(ov));
      if (gw) {
        const double* c = xd.data() + n * p.ci * iv;
        if (!p.pointwise) {
          im2col(p, c, cols.data());
          c = cols.data();
        }
        gwa.noalias() += gy * CMap(c, static_cast<Index>(rows), static_cast<Index>(ov)).transpose();
      }
      if (gx) {
        if (p.pointwise) {
          MMap(gx + n * p.ci * iv, static_cast<Index>(rows), static_cast<Index>(ov)).noalias() += wa.transpose() * gy;
        } else {
          MMap(gcols.data(), static_cast<Index>(rows), static_cast<Index>(ov)).noalias() = wa.transpose() * gy;
          col2im(p, gcols.data(), gx + n * p.ci * iv);
        }
      }
      if (gb) {
        // Plain loop: Eigen's vectorized reduction order depends on pointer alignment.
        const double* g = self.grad.data() + n * p.co * ov;
        for (std::size_t o = 0; o < p.co; ++o) gb[o] += std::accumulate(g + o * ov, g + (o + 1) * ov, 0.0);
      }
    }
    if (gw) scatter_kernel(p, gwa, gw, p.co, p.ci);
  });
}

Tensor conv_transpose3d(const Tensor& input, const Tensor& kernel, const Tensor& bias, Triple stride) {
  if (input.rank() != 5 || kernel.rank() != 5 || input.dim(1) != kernel.dim(0)) {
    throw ConfigError("conv_transpose3d shape mismatch: input " + shape_str(input.shape()) + " vs kernel " +
                      shape_str(kernel.shape()));
  }
  const std::size_t N = input.dim(0), ci = input.dim(1), co = kernel.dim(1);
  if (bias.defined() && (bias.rank() != 1 || bias.dim(0) != co)) {
    throw ConfigError("conv_transpose3d bias " + shape_str(bias.shape()) + " does not match kernel " +
                      shape_str(kernel.shape()));
  }
  const Triple small = spatial(input, 2);
  const Triple k = spatial(kernel, 2);
  Triple big{};
  for (int a = 0; a < 3; ++a) big[a] = (small[a] - 1) * stride[a] + k[a];
  // The forward conv this op is the adjoint of: big grid (co channels) -> small grid (ci channels).
  ConvGeometry g;
  g.stride = stride;
  ConvPlan p = make_plan(co, ci, big, k, g);
  const std::size_t sv = p.out_vox(), bv = p.in_vox(), rows = p.rows();

  RowMat wa = gather_kernel(p, kernel.data(), ci, co);
  std::vector<double> out(N * co * bv, 0.0);
  std::vector<double> cols(rows * sv);
  auto xd = input.data();
  for (std::size_t n = 0; n < N; ++n) {
    MMap(cols.data(), static_cast<Index>(rows), static_cast<Index>(sv)).noalias() =
        wa.transpose() * CMap(xd.data() + n * ci * sv, static_cast<Index>(ci), static_cast<Index>(sv));
    col2im(p, cols.data(), out.data() + n * co * bv);
    if (bias.defined()) {
      auto bd = bias.data();
      for (std::size_t o = 0; o < co; ++o)
        for (std::size_t v = 0; v < bv; ++v) out[(n * co + o) * bv + v] += bd[o];
    }
  }
  return make_op_result("conv_transpose3d", {N, co, big[0], big[1], big[2]}, std::move(out), {input, kernel, bias},
                        [input, kernel, bias, p, wa = std::move(wa)](const Node& self) {
    const std::size_t N = input.dim(0), ci = p.co, co = p.ci, sv = p.out_vox(), bv = p.in_vox(), rows = p.rows();
    double* gx = grad_sink(input);
    double* gw = grad_sink(kernel);
    double* gb = grad_sink(bias);
    RowMat gwa;
    if (gw) gwa = RowMat::Zero(static_cast<Index>(ci), static_cast<Index>(rows));
    std::vector<double> cols(rows * sv);
    auto xd = input.data();
    for (std::size_t n = 0; n < N; ++n) {
      const double* gout = self.grad.data() + n * co * bv;
      im2col(p, gout, cols.data());
      CMap c(cols.data(), static_cast<Index>(rows), static_cast<Index>(sv));
      if (gx) MMap(gx + n * ci * sv, static_cast<Index>(ci), static_cast<Index>(sv)).noalias() += wa * c;
      if (gw) gwa.noalias() += CMap(xd.data() + n * ci * sv, static_cast<Index>(ci), static_cast<Index>(sv)) * c.transpose();
      if (gb) {
        for (std::size_t o = 0; o < co; ++o)
          for (std::size_t v = 0; v < bv; ++v) gb[o] += gout[o * bv + v];
      }
    }
    if (gw) scatter_kernel(p, gwa, gw, ci, co);
  });
}

}  // namespace mre
