#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <variant>
#include <vector>

#include "mre/ops.hpp"

namespace mre {

using Spacing = std::array<float, 3>;  // physical size of a voxel along (D, H, W)

// Multi-channel image, layout [C, D, H, W].
struct Volume {
  std::size_t channels = 1;
  Triple extents{0, 0, 0};
  Spacing spacing{1.0f, 1.0f, 1.0f};
  std::vector<float> data;

  std::size_t voxels() const { return extents[0] * extents[1] * extents[2]; }
  float& at(std::size_t c, std::size_t d, std::size_t h, std::size_t w) {
    return data[((c * extents[0] + d) * extents[1] + h) * extents[2] + w];
  }
  float at(std::size_t c, std::size_t d, std::size_t h, std::size_t w) const {
    return data[((c * extents[0] + d) * extents[1] + h) * extents[2] + w];
  }
};

// Integer category per voxel, layout [D, H, W]; 0 is background.
struct LabelMap {
  Triple extents{0, 0, 0};
  Spacing spacing{1.0f, 1.0f, 1.0f};
  std::vector<std::uint8_t> labels;

  std::size_t voxels() const { return extents[0] * extents[1] * extents[2]; }
  std::uint8_t& at(std::size_t d, std::size_t h, std::size_t w) { return labels[(d * extents[1] + h) * extents[2] + w]; }
  std::uint8_t at(std::size_t d, std::size_t h, std::size_t w) const {
    return labels[(d * extents[1] + h) * extents[2] + w];
  }
};

// MREVOL1 file layout (little-endian):
//   "MREVOL1\0", u32 dtype (0 = f32 image, 1 = u8 labels), u32 C, D, H, W,
//   f32 spacing[3] (D, H, W), payload of C*D*H*W elements.
std::vector<char> encode_volume(const Volume& v);
std::vector<char> encode_labels(const LabelMap& l);
std::variant<Volume, LabelMap> decode_volume_file(const std::vector<char>& bytes);

void write_volume(const std::filesystem::path& path, const Volume& v);
void write_labels(const std::filesystem::path& path, const LabelMap& l);
std::variant<Volume, LabelMap> read_volume_file(const std::filesystem::path& path);
Volume read_volume(const std::filesystem::path& path);
LabelMap read_labels(const std::filesystem::path& path);

}  // namespace mre
