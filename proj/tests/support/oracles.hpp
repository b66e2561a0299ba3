#pragma once

// Independent reference implementations used only by the tests. They favour
// obviousness over speed and share no code with the library.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <random>
#include <span>
#include <vector>

#include "mre/tensor.hpp"

namespace oracle {

using Triple = std::array<std::size_t, 3>;

inline std::vector<double> random_vector(std::size_t n, std::mt19937_64& rng, double lo = -1.0, double hi = 1.0) {
  std::uniform_real_distribution<double> u(lo, hi);
  std::vector<double> v(n);
  for (double& x : v) x = u(rng);
  return v;
}

// Direct summation conv3d, input [N,Ci,D,H,W], kernel [Co,Ci,kd,kh,kw].
inline std::vector<double> conv3d(const std::vector<double>& x, std::size_t N, std::size_t Ci, Triple in,
                                  const std::vector<double>& k, std::size_t Co, Triple ks,
                                  const std::vector<double>* bias, Triple stride, Triple pad, Triple dil,
                                  Triple* out_extents = nullptr) {
  Triple out;
  for (int a = 0; a < 3; ++a) out[a] = (in[a] + 2 * pad[a] - dil[a] * (ks[a] - 1) - 1) / stride[a] + 1;
  if (out_extents) *out_extents = out;
  std::vector<double> y(N * Co * out[0] * out[1] * out[2], 0.0);
  for (std::size_t n = 0; n < N; ++n)
    for (std::size_t o = 0; o < Co; ++o)
      for (std::size_t od = 0; od < out[0]; ++od)
        for (std::size_t oh = 0; oh < out[1]; ++oh)
          for (std::size_t ow = 0; ow < out[2]; ++ow) {
            double acc = bias ? (*bias)[o] : 0.0;
            for (std::size_t c = 0; c < Ci; ++c)
              for (std::size_t a = 0; a < ks[0]; ++a)
                for (std::size_t b = 0; b < ks[1]; ++b)
                  for (std::size_t e = 0; e < ks[2]; ++e) {
                    long id = long(od * stride[0] + a * dil[0]) - long(pad[0]);
                    long ih = long(oh * stride[1] + b * dil[1]) - long(pad[1]);
                    long iw = long(ow * stride[2] + e * dil[2]) - long(pad[2]);
                    if (id < 0 || ih < 0 || iw < 0 || id >= long(in[0]) || ih >= long(in[1]) || iw >= long(in[2]))
                      continue;
                    acc += k[(((o * Ci + c) * ks[0] + a) * ks[1] + b) * ks[2] + e] *
                           x[(((n * Ci + c) * in[0] + id) * in[1] + ih) * in[2] + iw];
                  }
            y[(((n * Co + o) * out[0] + od) * out[1] + oh) * out[2] + ow] = acc;
          }
  return y;
}

// Central differences of a scalar function of one tensor's data.
inline std::vector<double> numeric_gradient(const std::function<double()>& f, std::span<double> x, double h) {
  std::vector<double> g(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double keep = x[i];
    x[i] = keep + h;
    const double fp = f();
    x[i] = keep - h;
    const double fm = f();
    x[i] = keep;
    g[i] = (fp - fm) / (2.0 * h);
  }
  return g;
}

// |a - b| / max(|a|, |b|, floor); the floor keeps near-zero gradients from
// dominating through round-off.
inline double relative_error(double a, double b, double floor = 1e-6) {
  return std::abs(a - b) / std::max({std::abs(a), std::abs(b), floor});
}

// Keep-mask by fully sorting majority voxels on (loss desc, index asc).
inline std::vector<std::uint8_t> ohem_by_sort(const std::vector<double>& loss, const std::vector<std::uint8_t>& labels,
                                              const std::vector<bool>& is_minority, std::size_t n_lg) {
  std::vector<std::uint8_t> keep(labels.size(), 0);
  std::vector<std::size_t> major;
  std::size_t minor = 0;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (is_minority[labels[i]]) {
      keep[i] = 1;
      ++minor;
    } else {
      major.push_back(i);
    }
  }
  std::sort(major.begin(), major.end(), [&](std::size_t a, std::size_t b) {
    return loss[a] > loss[b] || (loss[a] == loss[b] && a < b);
  });
  std::size_t quota = minor == 0 ? std::max<std::size_t>(1, major.size() / 4) : n_lg * minor;
  quota = std::min(quota, major.size());
  for (std::size_t j = 0; j < quota; ++j) keep[major[j]] = 1;
  return keep;
}

// Scalar Adam with bias correction, one parameter.
struct ScalarAdam {
  double m = 0.0, v = 0.0;
  std::uint64_t t = 0;
  double step(double x, double g, double eta, double b1 = 0.9, double b2 = 0.999, double eps = 1e-8) {
    ++t;
    m = b1 * m + (1 - b1) * g;
    v = b2 * v + (1 - b2) * g * g;
    double mh = m / (1 - std::pow(b1, double(t)));
    double vh = v / (1 - std::pow(b2, double(t)));
    return x - eta * mh / (std::sqrt(vh) + eps);
  }
};

// HD95 by brute force: surface voxels via explicit 6-neighbour test, every
// pairwise distance, nearest-rank percentile.
inline double hd95_brute(const std::vector<std::uint8_t>& a, const std::vector<std::uint8_t>& b, Triple e,
                         std::array<double, 3> sp) {
  auto surface = [&](const std::vector<std::uint8_t>& m) {
    std::vector<std::array<long, 3>> pts;
    for (long d = 0; d < long(e[0]); ++d)
      for (long h = 0; h < long(e[1]); ++h)
        for (long w = 0; w < long(e[2]); ++w) {
          if (!m[(d * e[1] + h) * e[2] + w]) continue;
          bool edge = false;
          const long nb[6][3] = {{d - 1, h, w}, {d + 1, h, w}, {d, h - 1, w}, {d, h + 1, w}, {d, h, w - 1}, {d, h, w + 1}};
          for (const auto& q : nb) {
            if (q[0] < 0 || q[1] < 0 || q[2] < 0 || q[0] >= long(e[0]) || q[1] >= long(e[1]) || q[2] >= long(e[2]) ||
                !m[(q[0] * e[1] + q[1]) * e[2] + q[2]])
              edge = true;
          }
          if (edge) pts.push_back({d, h, w});
        }
    return pts;
  };
  auto pa = surface(a), pb = surface(b);
  auto directed = [&](const auto& from, const auto& to) {
    std::vector<double> d;
    for (const auto& p : from) {
      double best = std::numeric_limits<double>::infinity();
      for (const auto& q : to) {
        double s = 0.0;
        for (int i = 0; i < 3; ++i) s += std::pow((p[i] - q[i]) * sp[i], 2);
        best = std::min(best, std::sqrt(s));
      }
      d.push_back(best);
    }
    std::sort(d.begin(), d.end());
    std::size_t rank = static_cast<std::size_t>(std::ceil(0.95 * d.size()));
    return d[std::max<std::size_t>(rank, 1) - 1];
  };
  return std::max(directed(pa, pb), directed(pb, pa));
}

}  // namespace oracle
