#include "mre/synth.hpp"

#include <algorithm>
#include <cmath>
#include <iostream>
#include <nlohmann/json.hpp>
#include <numbers>
#include <random>

#include "mre/backbone.hpp"
#include "mre/binary_io.hpp"
#include "mre/errors.hpp"
#include "mre/hash.hpp"
#include "mre/seeding.hpp"

namespace mre {

namespace {

using json = nlohmann::json;
using Vec3 = std::array<double, 3>;

struct Blob {
  Vec3 center;  // physical units
  Vec3 radii;
  std::size_t mode;
};

struct Structure {
  std::vector<Blob> blobs;
};

// Shared anatomy. Structures are unions of ellipsoidal sub-blobs. The last
// structure is kept small so that it is a minority category.
struct Template {
  std::vector<Structure> structures;  // index k-1 for category k
  std::vector<std::vector<double>> mode_means;
};

Vec3 physical_extent(const CohortSpec& s) {
  return {s.extents[0] * double(s.spacing[0]), s.extents[1] * double(s.spacing[1]),
          s.extents[2] * double(s.spacing[2])};
}

Template build_template(const CohortSpec& spec) {
  std::mt19937_64 rng(spec.seed);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  const Vec3 ext = physical_extent(spec);
  const std::size_t S = spec.K - 1;
  const std::size_t M = spec.modes_per_class;
  const double plane = std::min(ext[1], ext[2]);

  // Structures are bilateral: each is laid out on the W < centre half and
  // mirrored, so a left-right flip maps the anatomy onto itself. Lateral
  // structures zig-zag down the H axis; the minority structure sits on the
  // midline.
  Template t;
  t.structures.resize(S);
  const std::size_t lateral = S > 1 ? S - 1 : 1;
  for (std::size_t s = 0; s < S; ++s) {
    const bool minority = S > 1 && s == S - 1;
    Vec3 c{ext[0] * (0.5 + 0.05 * u(rng)), ext[1] * 0.5, ext[2] * 0.5};
    if (!minority) {
      c[1] = ext[1] * (0.5 + 0.55 * ((double(s) + 0.5) / double(lateral) - 0.5)) + 0.02 * plane * u(rng);
      c[2] -= plane * ((s % 2 ? 0.3 : 0.16) + 0.02 * u(rng));
    }
    const double r = minority ? plane * 0.1 : plane * (0.17 + 0.01 * u(rng)) * std::sqrt(3.0 / double(lateral));
    const double rd = std::min(r * 1.5, ext[0] * 0.32);
    std::vector<Blob> half;
    for (std::size_t j = 0; j < M; ++j) {
      Blob b;
      // Sub-blobs sit around the structure centre so the union stays connected.
      const double a = 2.0 * std::numbers::pi * (double(j) / double(M)) + 0.3 * u(rng);
      const double off = M > 1 ? 0.5 * r : 0.0;
      b.center = {c[0] + 0.15 * rd * u(rng), c[1] + off * std::cos(a), c[2] + off * std::sin(a)};
      b.radii = {rd * (0.85 + 0.05 * u(rng)), r * (0.8 + 0.05 * u(rng)), r * (0.8 + 0.05 * u(rng))};
      b.mode = j;
      half.push_back(b);
    }
    for (const Blob& b : half) {
      t.structures[s].blobs.push_back(b);
      Blob m = b;
      m.center[2] = ext[2] - b.center[2];
      t.structures[s].blobs.push_back(m);
    }
  }
  // Mode j of structure s sits at level j * P + (s mod P) with P = ceil(S / 2):
  // the modes of one category are interleaved with those of others, and
  // structures s and s + P share their intensities, so only location and
  // context tell them apart.
  const std::size_t P = (S + 1) / 2;
  t.mode_means.assign(S, std::vector<double>(M));
  for (std::size_t s = 0; s < S; ++s)
    for (std::size_t j = 0; j < M; ++j) t.mode_means[s][j] = 0.4 + 0.3 * double(j * P + s % P);
  return t;
}

// Category and mode of a physical point; later structures win overlaps.
std::pair<std::uint8_t, std::size_t> classify(const Template& t, const Vec3& p) {
  std::uint8_t label = 0;
  std::size_t mode = 0;
  for (std::size_t s = 0; s < t.structures.size(); ++s) {
    double best = 1.0;
    for (const Blob& b : t.structures[s].blobs) {
      double q = 0.0;
      for (int a = 0; a < 3; ++a) {
        const double d = (p[a] - b.center[a]) / b.radii[a];
        q += d * d;
      }
      if (q <= best) {
        best = q;
        label = static_cast<std::uint8_t>(s + 1);
        mode = b.mode;
      }
    }
  }
  return {label, mode};
}

std::vector<double> gaussian_kernel(double sigma) {
  if (sigma <= 0.0) return {1.0};
  const int radius = std::max(1, static_cast<int>(std::ceil(3.0 * sigma)));
  std::vector<double> k(2 * radius + 1);
  double total = 0.0;
  for (int i = -radius; i <= radius; ++i) total += k[i + radius] = std::exp(-0.5 * i * i / (sigma * sigma));
  for (double& v : k) v /= total;
  return k;
}

// Separable Gaussian filter with replicated borders, sigma per axis in voxels.
void smooth(std::vector<double>& f, const Triple& e, const Vec3& sigma) {
  std::vector<double> tmp(f.size());
  const std::size_t stride[3] = {e[1] * e[2], e[2], 1};
  for (int axis = 0; axis < 3; ++axis) {
    auto k = gaussian_kernel(sigma[axis]);
    const int radius = static_cast<int>(k.size() / 2);
    const long n = static_cast<long>(e[axis]);
    for (std::size_t i = 0; i < f.size(); ++i) {
      const long pos = static_cast<long>((i / stride[axis]) % e[axis]);
      double acc = 0.0;
      for (int o = -radius; o <= radius; ++o) {
        const long q = std::clamp(pos + o, 0L, n - 1);
        acc += k[o + radius] * f[i + (q - pos) * static_cast<long>(stride[axis])];
      }
      tmp[i] = acc;
    }
    f.swap(tmp);
  }
}

struct Displacement {
  std::array<std::vector<double>, 3> field;  // voxel units per axis
};

Displacement make_displacement(const CohortSpec& spec, std::mt19937_64& rng, double damp) {
  const Triple& e = spec.extents;
  const std::size_t n = e[0] * e[1] * e[2];
  std::normal_distribution<double> gauss(0.0, 1.0);
  Displacement disp;
  Vec3 sigma_vox;
  for (int a = 0; a < 3; ++a) sigma_vox[a] = spec.deform_smoothing / spec.spacing[a];
  for (int a = 0; a < 3; ++a) {
    auto& f = disp.field[a];
    f.resize(n);
    for (double& v : f) v = gauss(rng);
    smooth(f, e, sigma_vox);
    double ss = 0.0;
    for (double v : f) ss += v * v;
    const double rms = std::sqrt(ss / double(n));
    // A global shift on top of the local field moves the whole anatomy a little.
    const double shift = 0.5 * gauss(rng);
    const double gain = rms > 0.0 ? 1.0 / rms : 0.0;
    const double scale = damp * spec.deform_sigma / spec.spacing[a];
    for (double& v : f) v = scale * (v * gain + shift);
  }
  return disp;
}

double trilinear(const std::vector<double>& f, const Triple& e, const Vec3& p) {
  std::array<long, 3> i0;
  Vec3 frac;
  for (int a = 0; a < 3; ++a) {
    const double c = std::clamp(p[a], 0.0, double(e[a] - 1));
    i0[a] = std::min(static_cast<long>(std::floor(c)), static_cast<long>(e[a]) - 1);
    frac[a] = c - double(i0[a]);
  }
  double acc = 0.0;
  for (int corner = 0; corner < 8; ++corner) {
    double w = 1.0;
    std::array<long, 3> idx;
    for (int a = 0; a < 3; ++a) {
      const int bit = (corner >> a) & 1;
      idx[a] = std::min(i0[a] + bit, static_cast<long>(e[a]) - 1);
      w *= bit ? frac[a] : 1.0 - frac[a];
    }
    if (w == 0.0) continue;
    acc += w * f[(idx[0] * e[1] + idx[1]) * e[2] + idx[2]];
  }
  return acc;
}

Subject render_subject(const CohortSpec& spec, const Template& t, std::size_t index, double damp) {
  std::mt19937_64 rng = seeded_rng({spec.seed, 0x5eed, index});
  std::normal_distribution<double> gauss(0.0, 1.0);
  const Triple& e = spec.extents;
  const std::size_t n = e[0] * e[1] * e[2];

  // Per-subject mode intensities.
  std::vector<std::vector<double>> means = t.mode_means;
  for (auto& row : means)
    for (double& m : row) m += spec.intensity_jitter * gauss(rng);

  // Template rendered on the grid: intensity of the first channel and labels.
  std::vector<double> intensity(n);
  std::vector<std::uint8_t> tlabels(n);
  for (std::size_t d = 0; d < e[0]; ++d)
    for (std::size_t h = 0; h < e[1]; ++h)
      for (std::size_t w = 0; w < e[2]; ++w) {
        const Vec3 p{(d + 0.5) * spec.spacing[0], (h + 0.5) * spec.spacing[1], (w + 0.5) * spec.spacing[2]};
        auto [label, mode] = classify(t, p);
        const std::size_t i = (d * e[1] + h) * e[2] + w;
        tlabels[i] = label;
        intensity[i] = label ? means[label - 1][mode] : 0.0;
      }

  Displacement disp = make_displacement(spec, rng, damp);

  Subject subj;
  subj.image.channels = spec.channels;
  subj.image.extents = e;
  subj.image.spacing = spec.spacing;
  subj.image.data.assign(spec.channels * n, 0.0f);
  subj.labels.extents = e;
  subj.labels.spacing = spec.spacing;
  subj.labels.labels.assign(n, 0);
  for (std::size_t d = 0; d < e[0]; ++d)
    for (std::size_t h = 0; h < e[1]; ++h)
      for (std::size_t w = 0; w < e[2]; ++w) {
        const std::size_t i = (d * e[1] + h) * e[2] + w;
        const Vec3 p{d + disp.field[0][i], h + disp.field[1][i], w + disp.field[2][i]};
        const double value = trilinear(intensity, e, p);
        std::array<std::size_t, 3> q;
        for (int a = 0; a < 3; ++a) {
          q[a] = static_cast<std::size_t>(std::clamp(std::lround(p[a]), 0L, static_cast<long>(e[a]) - 1));
        }
        subj.labels.labels[i] = tlabels[(q[0] * e[1] + q[1]) * e[2] + q[2]];
        for (std::size_t c = 0; c < spec.channels; ++c) {
          // Extra channels are monotone remaps of the first one.
          const double v = c == 0 ? value : value / (1.0 + double(c)) + 0.1 * double(c);
          subj.image.data[c * n + i] = static_cast<float>(v + spec.noise_sigma * gauss(rng));
        }
      }
  return subj;
}

bool all_present(const LabelMap& labels, std::size_t K) {
  auto counts = category_counts(labels, K);
  return std::all_of(counts.begin(), counts.end(), [](std::size_t c) { return c > 0; });
}

json spacing_json(const Spacing& s) { return json::array({s[0], s[1], s[2]}); }

Spacing spacing_from(const json& j) { return {j.at(0).get<float>(), j.at(1).get<float>(), j.at(2).get<float>()}; }

json spec_to_json(const CohortSpec& s) {
  return json{{"subjects", s.subjects},
              {"K", s.K},
              {"extents", json::array({s.extents[0], s.extents[1], s.extents[2]})},
              {"spacing", spacing_json(s.spacing)},
              {"channels", s.channels},
              {"modes_per_class", s.modes_per_class},
              {"deform_sigma", s.deform_sigma},
              {"deform_smoothing", s.deform_smoothing},
              {"intensity_jitter", s.intensity_jitter},
              {"noise_sigma", s.noise_sigma},
              {"seed", s.seed}};
}

CohortSpec spec_from_json(const json& j) {
  CohortSpec s;
  s.subjects = j.value("subjects", s.subjects);
  s.K = j.value("K", s.K);
  if (j.contains("extents")) s.extents = {j["extents"].at(0), j["extents"].at(1), j["extents"].at(2)};
  if (j.contains("spacing")) s.spacing = spacing_from(j["spacing"]);
  s.channels = j.value("channels", s.channels);
  s.modes_per_class = j.value("modes_per_class", s.modes_per_class);
  s.deform_sigma = j.value("deform_sigma", s.deform_sigma);
  s.deform_smoothing = j.value("deform_smoothing", s.deform_smoothing);
  s.intensity_jitter = j.value("intensity_jitter", s.intensity_jitter);
  s.noise_sigma = j.value("noise_sigma", s.noise_sigma);
  s.seed = j.value("seed", s.seed);
  return s;
}

}  // namespace

void CohortSpec::validate() const {
  if (K < 2) throw ConfigError("cohort K must be at least 2, got " + std::to_string(K));
  if (K > 255) throw ConfigError("cohort K must fit in u8 labels");
  if (subjects < 1) throw ConfigError("cohort needs at least one subject");
  if (channels < 1) throw ConfigError("cohort needs at least one channel");
  if (modes_per_class < 1) throw ConfigError("modes_per_class must be at least 1");
  for (float s : spacing)
    if (!(s > 0.0f)) throw ConfigError("cohort spacing must be positive");
  if (deform_sigma < 0 || intensity_jitter < 0 || noise_sigma < 0 || deform_smoothing < 0) {
    throw ConfigError("cohort deformation and noise parameters must be non-negative");
  }
  check_patch_extents(extents);
}

std::vector<std::size_t> category_counts(const LabelMap& labels, std::size_t K) {
  std::vector<std::size_t> counts(K, 0);
  for (std::uint8_t l : labels.labels) {
    if (l >= K) throw ConfigError("label " + std::to_string(l) + " outside [0, " + std::to_string(K) + ")");
    ++counts[l];
  }
  return counts;
}

Cohort generate_cohort(const CohortSpec& spec) {
  spec.validate();
  Cohort cohort;
  cohort.spec = spec;
  const Template t = build_template(spec);
  for (std::size_t i = 0; i < spec.subjects; ++i) {
    double damp = 1.0;
    Subject s = render_subject(spec, t, i, damp);
    int attempts = 0;
    while (!all_present(s.labels, spec.K)) {
      if (++attempts > 8) {
        throw ConfigError("a structure is absent from subject " + std::to_string(i) +
                          " even without deformation; enlarge the extents");
      }
      damp *= 0.5;
      if (attempts == 8) damp = 0.0;
      std::string msg = "subject " + std::to_string(i) + ": structure vanished under deformation, " +
                        "regenerating with warp scaled by " + std::to_string(damp);
      std::cerr << "warning: " << msg << "\n";
      cohort.warnings.push_back(std::move(msg));
      s = render_subject(spec, t, i, damp);
    }
    cohort.subjects.push_back(std::move(s));
  }
  return cohort;
}

std::string cohort_spec_json(const CohortSpec& spec) { return spec_to_json(spec).dump(2); }

CohortSpec cohort_spec_from_json(const std::string& text) {
  try {
    return spec_from_json(json::parse(text));
  } catch (const json::exception& e) {
    throw ConfigError(std::string("invalid cohort spec: ") + e.what());
  }
}

CohortManifest write_cohort(const Cohort& cohort, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  CohortManifest manifest;
  manifest.spec = cohort.spec;
  manifest.warnings = cohort.warnings;
  json entries = json::array();
  for (std::size_t i = 0; i < cohort.subjects.size(); ++i) {
    const Subject& s = cohort.subjects[i];
    ManifestEntry e;
    char stem[32];
    std::snprintf(stem, sizeof stem, "subject_%02zu", i);
    e.image = std::string(stem) + "_image.mrevol";
    e.labels = std::string(stem) + "_labels.mrevol";
    e.spacing = s.image.spacing;
    auto img = encode_volume(s.image);
    auto lab = encode_labels(s.labels);
    e.image_id = git_blob_id({img.data(), img.size()});
    e.labels_id = git_blob_id({lab.data(), lab.size()});
    bin::write_file_atomic(dir / e.image, img);
    bin::write_file_atomic(dir / e.labels, lab);
    entries.push_back({{"image", e.image},
                       {"labels", e.labels},
                       {"spacing", spacing_json(e.spacing)},
                       {"image_id", e.image_id},
                       {"labels_id", e.labels_id}});
    manifest.entries.push_back(std::move(e));
  }
  json doc{{"format", "mre-cohort-manifest/1"},
           {"spec", spec_to_json(cohort.spec)},
           {"subjects", entries},
           {"warnings", cohort.warnings}};
  std::string text = doc.dump(2) + "\n";
  bin::write_file_atomic(dir / "manifest.json", std::vector<char>(text.begin(), text.end()));
  return manifest;
}

CohortManifest read_manifest(const std::filesystem::path& manifest_path) {
  auto bytes = bin::read_file(manifest_path);
  CohortManifest m;
  try {
    json doc = json::parse(bytes.begin(), bytes.end());
    m.spec = spec_from_json(doc.at("spec"));
    for (const json& e : doc.at("subjects")) {
      ManifestEntry entry;
      entry.image = e.at("image").get<std::string>();
      entry.labels = e.at("labels").get<std::string>();
      entry.spacing = spacing_from(e.at("spacing"));
      entry.image_id = e.value("image_id", "");
      entry.labels_id = e.value("labels_id", "");
      m.entries.push_back(std::move(entry));
    }
    if (doc.contains("warnings")) m.warnings = doc["warnings"].get<std::vector<std::string>>();
  } catch (const json::parse_error& e) {
    throw ParseError(std::string("invalid manifest ") + manifest_path.string() + ": " + e.what(), e.byte);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("invalid manifest ") + manifest_path.string() + ": " + e.what());
  }
  return m;
}

Cohort load_cohort(const std::filesystem::path& manifest_path) {
  CohortManifest m = read_manifest(manifest_path);
  const auto base = manifest_path.parent_path();
  Cohort cohort;
  cohort.spec = m.spec;
  cohort.warnings = m.warnings;
  for (const ManifestEntry& e : m.entries) {
    Subject s{read_volume(base / e.image), read_labels(base / e.labels)};
    if (s.image.extents != m.spec.extents || s.labels.extents != m.spec.extents) {
      throw ConfigError("subject " + e.image + " extents do not match the manifest spec");
    }
    cohort.subjects.push_back(std::move(s));
  }
  return cohort;
}

}  // namespace mre
