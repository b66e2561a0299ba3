#include <algorithm>
#include <cmath>
#include <limits>

#include "mre/errors.hpp"
#include "mre/eval.hpp"

namespace mre {

namespace {

void check_pair(const LabelMap& a, const LabelMap& b) {
  if (a.extents != b.extents || a.labels.size() != b.labels.size()) {
    throw ConfigError("label maps have different extents");
  }
}

std::vector<std::uint8_t> category_mask(const LabelMap& l, std::uint8_t category) {
  std::vector<std::uint8_t> m(l.labels.size());
  for (std::size_t i = 0; i < m.size(); ++i) m[i] = l.labels[i] == category;
  return m;
}

// Lower envelope of parabolas w^2 (p - q)^2 + f(q) over a strided line.
void distance_1d(double* f, std::size_t n, std::size_t stride, double w2, std::vector<double>& scratch,
                 std::vector<std::size_t>& v, std::vector<double>& z) {
  constexpr double inf = std::numeric_limits<double>::infinity();
  scratch.resize(n);
  v.resize(n);
  z.resize(n + 1);
  for (std::size_t i = 0; i < n; ++i) scratch[i] = f[i * stride];
  std::size_t k = 0;
  bool any = false;
  for (std::size_t q = 0; q < n; ++q) {
    if (scratch[q] == inf) continue;
    if (!any) {
      v[0] = q;
      z[0] = -inf;
      z[1] = inf;
      any = true;
      continue;
    }
    auto meet = [&](std::size_t a, std::size_t b) {
      const double ad = double(a), bd = double(b);
      return ((scratch[a] + w2 * ad * ad) - (scratch[b] + w2 * bd * bd)) / (2.0 * w2 * (ad - bd));
    };
    double s = meet(q, v[k]);
    while (s <= z[k]) s = meet(q, v[--k]);  // z[0] = -inf stops the loop
    ++k;
    v[k] = q;
    z[k] = s;
    z[k + 1] = inf;
  }
  if (!any) return;
  k = 0;
  for (std::size_t p = 0; p < n; ++p) {
    while (z[k + 1] < double(p)) ++k;
    const double d = double(p) - double(v[k]);
    f[p * stride] = w2 * d * d + scratch[v[k]];
  }
}

double percentile95(std::vector<double> values) {
  std::sort(values.begin(), values.end());
  const std::size_t rank = static_cast<std::size_t>(std::ceil(0.95 * static_cast<double>(values.size())));
  return values[std::max<std::size_t>(rank, 1) - 1];
}

std::vector<double> directed(const std::vector<std::uint8_t>& from, const std::vector<double>& dist2) {
  std::vector<double> out;
  for (std::size_t i = 0; i < from.size(); ++i)
    if (from[i]) out.push_back(std::sqrt(dist2[i]));
  return out;
}

}  // namespace

double dice_coefficient(const LabelMap& pred, const LabelMap& truth, std::uint8_t category) {
  check_pair(pred, truth);
  std::size_t a = 0, b = 0, both = 0;
  for (std::size_t i = 0; i < pred.labels.size(); ++i) {
    const bool x = pred.labels[i] == category, y = truth.labels[i] == category;
    a += x;
    b += y;
    both += x && y;
  }
  if (a + b == 0) return 1.0;
  return 2.0 * static_cast<double>(both) / static_cast<double>(a + b);
}

std::vector<std::uint8_t> surface_voxels(const std::vector<std::uint8_t>& mask, Triple e) {
  std::vector<std::uint8_t> out(mask.size(), 0);
  const long D = long(e[0]), H = long(e[1]), W = long(e[2]);
  auto inside = [&](long d, long h, long w) {
    return d >= 0 && h >= 0 && w >= 0 && d < D && h < H && w < W && mask[(d * H + h) * W + w];
  };
  static constexpr int offsets[6][3] = {{-1, 0, 0}, {1, 0, 0}, {0, -1, 0}, {0, 1, 0}, {0, 0, -1}, {0, 0, 1}};
  for (long d = 0; d < D; ++d)
    for (long h = 0; h < H; ++h)
      for (long w = 0; w < W; ++w) {
        const std::size_t i = (d * H + h) * W + w;
        if (!mask[i]) continue;
        for (const auto& o : offsets) {
          if (!inside(d + o[0], h + o[1], w + o[2])) {
            out[i] = 1;
            break;
          }
        }
      }
  return out;
}

std::vector<double> squared_distance_transform(const std::vector<std::uint8_t>& mask, Triple e,
                                               const Spacing& spacing) {
  std::vector<double> f(mask.size());
  for (std::size_t i = 0; i < mask.size(); ++i) f[i] = mask[i] ? 0.0 : std::numeric_limits<double>::infinity();
  std::vector<double> scratch, z;
  std::vector<std::size_t> v;
  const std::size_t D = e[0], H = e[1], W = e[2];
  const double w2[3] = {double(spacing[0]) * spacing[0], double(spacing[1]) * spacing[1],
                        double(spacing[2]) * spacing[2]};
  for (std::size_t d = 0; d < D; ++d)
    for (std::size_t h = 0; h < H; ++h) distance_1d(&f[(d * H + h) * W], W, 1, w2[2], scratch, v, z);
  for (std::size_t d = 0; d < D; ++d)
    for (std::size_t w = 0; w < W; ++w) distance_1d(&f[d * H * W + w], H, W, w2[1], scratch, v, z);
  for (std::size_t h = 0; h < H; ++h)
    for (std::size_t w = 0; w < W; ++w) distance_1d(&f[h * W + w], D, H * W, w2[0], scratch, v, z);
  return f;
}

Hd95 hd95(const LabelMap& pred, const LabelMap& truth, std::uint8_t category, const Spacing& spacing) {
  check_pair(pred, truth);
  for (float s : spacing)
    if (!(s > 0.0f)) throw ConfigError("hd95 spacing must be positive");
  const auto a = category_mask(pred, category);
  const auto b = category_mask(truth, category);
  const bool a_empty = std::none_of(a.begin(), a.end(), [](std::uint8_t x) { return x; });
  const bool b_empty = std::none_of(b.begin(), b.end(), [](std::uint8_t x) { return x; });
  if (a_empty && b_empty) return {0.0, false};
  if (a_empty || b_empty) {
    double diag = 0.0;
    for (int i = 0; i < 3; ++i) diag += std::pow(double(pred.extents[i]) * spacing[i], 2);
    return {std::sqrt(diag), true};
  }
  const auto sa = surface_voxels(a, pred.extents);
  const auto sb = surface_voxels(b, pred.extents);
  const double ab = percentile95(directed(sa, squared_distance_transform(sb, pred.extents, spacing)));
  const double ba = percentile95(directed(sb, squared_distance_transform(sa, pred.extents, spacing)));
  return {std::max(ab, ba), false};
}

}  // namespace mre
