#include <algorithm>

#include "mre/errors.hpp"
#include "mre/eval.hpp"

namespace mre {

Triple WindowSpec::expanded() const {
  return {core[0] + 2 * margin[0], core[1] + 2 * margin[1], core[2] + 2 * margin[2]};
}

std::vector<Window> plan_windows(Triple volume, const WindowSpec& spec) {
  const Triple e = spec.expanded();
  std::array<std::vector<std::array<std::size_t, 3>>, 3> axes;  // {input_start, core_start, core_extent}
  for (int a = 0; a < 3; ++a) {
    if (spec.core[a] == 0) throw ConfigError("window core extents must be positive");
    if (volume[a] < e[a]) {
      throw ConfigError("volume extent " + std::to_string(volume[a]) + " is smaller than the expanded window " +
                        std::to_string(e[a]));
    }
    for (std::size_t cs = 0; cs < volume[a]; cs += spec.core[a]) {
      const std::size_t len = std::min(spec.core[a], volume[a] - cs);
      const std::size_t start = std::min(cs > spec.margin[a] ? cs - spec.margin[a] : 0, volume[a] - e[a]);
      axes[a].push_back({start, cs, len});
    }
  }
  std::vector<Window> out;
  for (const auto& d : axes[0])
    for (const auto& h : axes[1])
      for (const auto& w : axes[2]) {
        out.push_back(Window{{d[0], h[0], w[0]}, {d[1], h[1], w[1]}, {d[2], h[2], w[2]}});
      }
  return out;
}

InferenceResult sliding_window_infer(const Volume& volume, const MreNet& net, const WindowSpec& spec,
                                     std::size_t batch) {
  const ModelConfig& mc = net.config();
  if (volume.channels != mc.in_channels) {
    throw ConfigError("volume has " + std::to_string(volume.channels) + " channels, model expects " +
                      std::to_string(mc.in_channels));
  }
  const Triple e = spec.expanded();
  check_patch_extents(e);
  if (batch == 0) batch = 1;

  // Symmetric zero padding for axes shorter than one expanded window.
  Triple padded = volume.extents, lead{0, 0, 0};
  for (int a = 0; a < 3; ++a) {
    if (padded[a] < e[a]) {
      lead[a] = (e[a] - padded[a]) / 2;
      padded[a] = e[a];
    }
  }
  const std::size_t C = volume.channels;
  const std::size_t PV = padded[0] * padded[1] * padded[2];
  std::vector<double> source(C * PV, 0.0);
  for (std::size_t c = 0; c < C; ++c)
    for (std::size_t d = 0; d < volume.extents[0]; ++d)
      for (std::size_t h = 0; h < volume.extents[1]; ++h)
        for (std::size_t w = 0; w < volume.extents[2]; ++w) {
          source[c * PV + ((d + lead[0]) * padded[1] + h + lead[1]) * padded[2] + w + lead[2]] =
              volume.at(c, d, h, w);
        }

  const auto windows = plan_windows(padded, spec);
  // Clamped windows near the border can share an input; run each input once.
  std::vector<Triple> inputs;
  std::vector<std::vector<const Window*>> cores;
  for (const Window& win : windows) {
    auto it = std::find(inputs.begin(), inputs.end(), win.input_start);
    if (it == inputs.end()) {
      inputs.push_back(win.input_start);
      cores.emplace_back();
      it = inputs.end() - 1;
    }
    cores[static_cast<std::size_t>(it - inputs.begin())].push_back(&win);
  }
  std::vector<std::uint8_t> padded_labels(PV, 0);
  std::vector<std::uint32_t> padded_count(PV, 0);
  const std::size_t EV = e[0] * e[1] * e[2];
  const std::size_t K = mc.K;
  InferenceResult result;
  result.windows = windows.size();

  NoGradGuard no_grad;
  for (std::size_t first = 0; first < inputs.size(); first += batch) {
    const std::size_t n = std::min(batch, inputs.size() - first);
    std::vector<double> input(n * C * EV);
    std::vector<CoordinateFrame> frames(n);
    for (std::size_t b = 0; b < n; ++b) {
      const Triple& start = inputs[first + b];
      frames[b] = CoordinateFrame{padded, start};
      for (std::size_t c = 0; c < C; ++c)
        for (std::size_t d = 0; d < e[0]; ++d)
          for (std::size_t h = 0; h < e[1]; ++h) {
            const double* src = &source[c * PV + ((start[0] + d) * padded[1] + start[1] + h) * padded[2] + start[2]];
            std::copy(src, src + e[2], &input[((b * C + c) * e[0] + d) * e[1] * e[2] + h * e[2]]);
          }
    }
    ForwardResult fr =
        net.forward(Tensor::from_data({n, C, e[0], e[1], e[2]}, std::move(input)), frames, Mode::eval);
    ++result.forward_passes;
    auto lp = fr.log_posterior.data();
    for (std::size_t b = 0; b < n; ++b) {
      for (const Window* win : cores[first + b]) {
        for (std::size_t d = 0; d < win->core_extent[0]; ++d)
          for (std::size_t h = 0; h < win->core_extent[1]; ++h)
            for (std::size_t w = 0; w < win->core_extent[2]; ++w) {
              const std::size_t gd = win->core_start[0] + d, gh = win->core_start[1] + h, gw = win->core_start[2] + w;
              const std::size_t ld = gd - win->input_start[0], lh = gh - win->input_start[1],
                                lw = gw - win->input_start[2];
              const std::size_t v = (ld * e[1] + lh) * e[2] + lw;
              std::size_t best = 0;
              for (std::size_t k = 1; k < K; ++k) {
                if (lp[(b * K + k) * EV + v] > lp[(b * K + best) * EV + v]) best = k;
              }
              const std::size_t g = (gd * padded[1] + gh) * padded[2] + gw;
              padded_labels[g] = static_cast<std::uint8_t>(best);
              ++padded_count[g];
            }
      }
    }
  }

  result.labels.extents = volume.extents;
  result.labels.spacing = volume.spacing;
  result.labels.labels.resize(volume.voxels());
  result.write_count.resize(volume.voxels());
  for (std::size_t d = 0; d < volume.extents[0]; ++d)
    for (std::size_t h = 0; h < volume.extents[1]; ++h)
      for (std::size_t w = 0; w < volume.extents[2]; ++w) {
        const std::size_t g = ((d + lead[0]) * padded[1] + h + lead[1]) * padded[2] + w + lead[2];
        const std::size_t i = (d * volume.extents[1] + h) * volume.extents[2] + w;
        result.labels.labels[i] = padded_labels[g];
        result.write_count[i] = padded_count[g];
      }
  return result;
}

}  // namespace mre
