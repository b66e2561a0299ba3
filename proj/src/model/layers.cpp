#include "mre/layers.hpp"

#include <cmath>

namespace mre {

std::vector<double> he_normal(std::size_t count, std::size_t fan_in, std::mt19937_64& rng) {
  std::normal_distribution<double> dist(0.0, std::sqrt(2.0 / static_cast<double>(fan_in)));
  std::vector<double> out(count);
  for (auto& v : out) v = dist(rng);
  return out;
}

void add_batch_norm(ParamStore& store, const std::string& name, std::size_t channels, Tensor& gamma, Tensor& beta,
                    Tensor& running_mean, Tensor& running_var) {
  gamma = store.add(name + ".gamma", {channels}, std::vector<double>(channels, 1.0));
  beta = store.add(name + ".beta", {channels}, std::vector<double>(channels, 0.0));
  running_mean = store.add(name + ".running_mean", {channels}, std::vector<double>(channels, 0.0), false);
  running_var = store.add(name + ".running_var", {channels}, std::vector<double>(channels, 1.0), false);
}

ConvUnit::ConvUnit(ParamStore& store, const std::string& name, std::size_t in_ch, std::size_t out_ch,
                   Triple kernel_size, ConvGeometry geom, std::mt19937_64& rng)
    : geometry(geom) {
  const std::size_t fan_in = in_ch * kernel_size[0] * kernel_size[1] * kernel_size[2];
  kernel = store.add(name + ".w", {out_ch, in_ch, kernel_size[0], kernel_size[1], kernel_size[2]},
                     he_normal(out_ch * fan_in, fan_in, rng));
  bias = store.add(name + ".b", {out_ch}, std::vector<double>(out_ch, 0.0));
  add_batch_norm(store, name + ".bn", out_ch, gamma, beta, running_mean, running_var);
}

Tensor ConvUnit::forward(const Tensor& x, Mode mode) const {
  Tensor y = relu(conv3d(x, kernel, bias, geometry));
  return batch_norm(y, gamma, beta, running_mean, running_var, mode == Mode::train);
}

UpConvUnit::UpConvUnit(ParamStore& store, const std::string& name, std::size_t in_ch, std::size_t out_ch,
                       Triple s, std::mt19937_64& rng)
    : stride(s) {
  const std::size_t kvol = s[0] * s[1] * s[2];
  kernel = store.add(name + ".w", {in_ch, out_ch, s[0], s[1], s[2]}, he_normal(in_ch * out_ch * kvol, in_ch, rng));
  bias = store.add(name + ".b", {out_ch}, std::vector<double>(out_ch, 0.0));
  add_batch_norm(store, name + ".bn", out_ch, gamma, beta, running_mean, running_var);
}

Tensor UpConvUnit::forward(const Tensor& x, Mode mode) const {
  Tensor y = relu(conv_transpose3d(x, kernel, bias, stride));
  return batch_norm(y, gamma, beta, running_mean, running_var, mode == Mode::train);
}

}  // namespace mre
