#include <cmath>

#include "mre/errors.hpp"
#include "mre/training.hpp"

namespace mre {

double scheduled_eta(double eta, std::size_t step_size, std::uint64_t iteration) {
  return eta * std::pow(0.1, static_cast<double>(iteration / step_size));
}

void adam_step(ParamStore& store, double eta_t, const AdamConfig& cfg) {
  for (const ParamEntry& e : store.entries()) {
    if (!e.trainable) continue;
    for (double g : e.value.grad()) {
      if (!std::isfinite(g)) throw NumericError("non-finite gradient in parameter " + e.name);
    }
  }
  const std::uint64_t t = store.step() + 1;
  const double c1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(t));
  const double c2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(t));
  for (ParamEntry& e : store.entries()) {
    if (!e.trainable) continue;
    auto g = e.value.grad();
    if (g.empty()) continue;  // never reached by backward
    auto x = e.value.mutable_data();
    auto& m = e.first_moment;
    auto& v = e.second_moment;
    for (std::size_t i = 0; i < x.size(); ++i) {
      m[i] = cfg.beta1 * m[i] + (1.0 - cfg.beta1) * g[i];
      v[i] = cfg.beta2 * v[i] + (1.0 - cfg.beta2) * g[i] * g[i];
      const double mhat = m[i] / c1;
      const double vhat = v[i] / c2;
      x[i] -= eta_t * mhat / (std::sqrt(vhat) + cfg.eps);
    }
  }
  store.set_step(t);
}

}  // namespace mre
