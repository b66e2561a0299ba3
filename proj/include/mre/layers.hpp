#pragma once

#include <random>
#include <string>

#include "mre/ops.hpp"
#include "mre/param_store.hpp"

namespace mre {

enum class Mode { train, eval };

// He-normal initialized weights (std = sqrt(2 / fan_in)).
std::vector<double> he_normal(std::size_t count, std::size_t fan_in, std::mt19937_64& rng);

// Convolution followed by ReLU and batch normalization, in that order.
struct ConvUnit {
  Tensor kernel, bias, gamma, beta;
  mutable Tensor running_mean, running_var;
  ConvGeometry geometry;

  ConvUnit() = default;
  ConvUnit(ParamStore& store, const std::string& name, std::size_t in_ch, std::size_t out_ch, Triple kernel_size,
           ConvGeometry geometry, std::mt19937_64& rng);

  Tensor forward(const Tensor& x, Mode mode) const;
};

// Transposed convolution (kernel = stride) followed by ReLU and batch norm.
struct UpConvUnit {
  Tensor kernel, bias, gamma, beta;
  mutable Tensor running_mean, running_var;
  Triple stride{};

  UpConvUnit() = default;
  UpConvUnit(ParamStore& store, const std::string& name, std::size_t in_ch, std::size_t out_ch, Triple stride,
             std::mt19937_64& rng);

  Tensor forward(const Tensor& x, Mode mode) const;
};

// Registers batch-norm parameters and running buffers under `name`.
void add_batch_norm(ParamStore& store, const std::string& name, std::size_t channels, Tensor& gamma, Tensor& beta,
                    Tensor& running_mean, Tensor& running_var);

}  // namespace mre
