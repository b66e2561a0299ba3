#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "mre/param_store.hpp"

namespace mre {

// Binary layout, all integers little-endian:
//   "MRECKPT1"
//   block(values) block(first moments) block(second moments) u64 step
// where block = u32 count, then per entry:
//   u32 name length, UTF-8 name, u32 rank, u32 dims[rank], f64 data[prod(dims)]
struct CheckpointBlockEntry {
  std::string name;
  std::vector<std::uint32_t> dims;
  std::vector<double> data;
};

struct CheckpointData {
  std::vector<CheckpointBlockEntry> values;
  std::vector<CheckpointBlockEntry> first_moments;
  std::vector<CheckpointBlockEntry> second_moments;
  std::uint64_t step = 0;
};

std::vector<char> encode_checkpoint(const ParamStore& store);
CheckpointData decode_checkpoint(const std::vector<char>& bytes);

void save_checkpoint(const ParamStore& store, const std::filesystem::path& path);
/// Overwrites values, moments and step of an existing store. Names and shapes
/// must match exactly.
void load_checkpoint(ParamStore& store, const std::filesystem::path& path);
void apply_checkpoint(ParamStore& store, const CheckpointData& data);

}  // namespace mre
