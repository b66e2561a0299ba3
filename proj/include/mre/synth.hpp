#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "mre/volume.hpp"

namespace mre {

// Knobs of the synthetic cohort. Every subject is a smooth random warp of one
// shared template of K-1 blob structures; each structure is a union of
// sub-blobs, and sub-blob j is rendered with intensity mode j of its category.
struct CohortSpec {
  std::size_t subjects = 7;
  std::size_t K = 5;  // categories including background
  Triple extents{12, 48, 48};
  Spacing spacing{3.0f, 1.0f, 1.0f};
  std::size_t channels = 1;
  std::size_t modes_per_class = 2;
  double deform_sigma = 1.5;      // RMS displacement, physical units
  double deform_smoothing = 6.0;  // Gaussian sigma of the displacement field, physical units
  double intensity_jitter = 0.04;
  double noise_sigma = 0.08;
  std::uint64_t seed = 1;

  void validate() const;
};

struct Subject {
  Volume image;
  LabelMap labels;
};

struct Cohort {
  CohortSpec spec;
  std::vector<Subject> subjects;
  std::vector<std::string> warnings;
};

/// Deterministic in spec.seed.
Cohort generate_cohort(const CohortSpec& spec);

// Files written by write_cohort: one MREVOL1 image and label map per subject
// plus manifest.json listing relative paths, spacing, per-file git blob ids
// and the generating spec.
struct ManifestEntry {
  std::string image;
  std::string labels;
  Spacing spacing{};
  std::string image_id;
  std::string labels_id;
};

struct CohortManifest {
  CohortSpec spec;
  std::vector<ManifestEntry> entries;
  std::vector<std::string> warnings;
};

CohortManifest write_cohort(const Cohort& cohort, const std::filesystem::path& dir);
CohortManifest read_manifest(const std::filesystem::path& manifest_path);
/// Loads every subject listed in the manifest; paths resolve relative to it.
Cohort load_cohort(const std::filesystem::path& manifest_path);

std::string cohort_spec_json(const CohortSpec& spec);
CohortSpec cohort_spec_from_json(const std::string& text);

/// Voxel count of every category in a label map.
std::vector<std::size_t> category_counts(const LabelMap& labels, std::size_t K);

}  // namespace mre
