#pragma once

#include <array>
#include <cstddef>
#include <span>
#include <vector>

#include "mre/tensor.hpp"

// Differentiable primitives. Volumetric ops use the layout [N,C,D,H,W];
// conv3d also accepts an unbatched [C,D,H,W] input.
namespace mre {

using Triple = std::array<std::size_t, 3>;  // (D, H, W)

// Elementwise arithmetic with numpy-style broadcasting.
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor div(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, double factor);
Tensor broadcast_to(const Tensor& a, const Shape& shape);

Tensor relu(const Tensor& a);
Tensor sigmoid(const Tensor& a);
Tensor exp(const Tensor& a);
Tensor log(const Tensor& a);

Tensor matmul(const Tensor& a, const Tensor& b);
Tensor transpose(const Tensor& a);
Tensor reshape(const Tensor& a, Shape shape);

Tensor sum(const Tensor& a);
Tensor mean(const Tensor& a);
Tensor sum(const Tensor& a, std::size_t axis, bool keepdim = true);
Tensor mean(const Tensor& a, std::size_t axis, bool keepdim = true);

Tensor softmax(const Tensor& a, std::size_t axis);
Tensor log_softmax(const Tensor& a, std::size_t axis);

inline constexpr double kNormEps = 1e-12;
/// v / (||v|| + 1e-12) along `axis`; zero slices stay zero.
Tensor l2_normalize(const Tensor& a, std::size_t axis);

Tensor concat(std::span<const Tensor> parts, std::size_t axis);
Tensor slice(const Tensor& a, std::size_t axis, std::size_t start, std::size_t length);

// [N,C,D,H,W] -> [N,C,1,1,1]
Tensor global_avg_pool(const Tensor& x);
/// Average pooling with kernel equal to stride; extents must divide evenly.
Tensor avg_pool3d(const Tensor& x, Triple stride);
Tensor upsample_nearest(const Tensor& x, Triple factor);

struct ConvGeometry {
  Triple stride{1, 1, 1};
  Triple padding{0, 0, 0};
  Triple dilation{1, 1, 1};
};

std::size_t conv_output_extent(std::size_t in, std::size_t kernel, std::size_t stride,
                               std::size_t pad, std::size_t dilation);

/// input [N,Ci,D,H,W] or [Ci,D,H,W]; kernel [Co,Ci,kd,kh,kw]; bias [Co] or undefined.
Tensor conv3d(const Tensor& input, const Tensor& kernel, const Tensor& bias,
              const ConvGeometry& geometry = {});

/// Adjoint of conv3d with respect to its input. kernel [Ci,Co,kd,kh,kw];
/// output extent per axis = (in - 1) * stride + k.
Tensor conv_transpose3d(const Tensor& input, const Tensor& kernel, const Tensor& bias,
                        Triple stride);

struct BatchNormOptions {
  double momentum = 0.9;  // running <- momentum * running + (1 - momentum) * batch
  double eps = 1e-5;
};

/// Per-channel normalization of [N,C,...]. In training mode the batch
/// statistics are used and the running buffers are updated in place.
Tensor batch_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta,
                  Tensor& running_mean, Tensor& running_var, bool training,
                  const BatchNormOptions& options = {});

}  // namespace mre
