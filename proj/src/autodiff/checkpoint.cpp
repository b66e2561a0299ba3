#include "mre/checkpoint.hpp"

#include <algorithm>
#include <fstream>
#include <iterator>

#include "mre/binary_io.hpp"

namespace mre {

namespace bin {

std::vector<char> read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw UsageError("cannot open '" + path.string() + "' for reading");
  return std::vector<char>(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
}

void write_file_atomic(const std::filesystem::path& path, const std::vector<char>& bytes) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  auto tmp = path;
  tmp += ".partial";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw UsageError("cannot open '" + tmp.string() + "' for writing");
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw UsageError("write failed for '" + tmp.string() + "'");
  }
  std::filesystem::rename(tmp, path);
}

}  // namespace bin

namespace {

constexpr std::string_view kMagic = "MRECKPT1";

void write_entry(bin::Writer& w, const std::string& name, const Shape& shape, std::span<const double> data) {
  w.le<std::uint32_t>(static_cast<std::uint32_t>(name.size()));
  w.str(name);
  w.le<std::uint32_t>(static_cast<std::uint32_t>(shape.size()));
  for (auto d : shape) w.le<std::uint32_t>(static_cast<std::uint32_t>(d));
  for (double v : data) w.le<double>(v);
}

std::vector<CheckpointBlockEntry> read_block(bin::Reader& r) {
  const auto count = r.le<std::uint32_t>("entry count");
  std::vector<CheckpointBlockEntry> block;
  block.reserve(count);
  for (std::uint32_t i = 0; i < count; ++i) {
    CheckpointBlockEntry e;
    const auto len = r.le<std::uint32_t>("name length");
    e.name = r.str(len, "name");
    const auto rank = r.le<std::uint32_t>("rank");
    std::size_t n = 1;
    for (std::uint32_t k = 0; k < rank; ++k) {
      e.dims.push_back(r.le<std::uint32_t>("dims"));
      n *= e.dims.back();
    }
    r.need(n * sizeof(double), "tensor data");
    e.data.resize(n);
    for (auto& v : e.data) v = r.le<double>("tensor data");
    block.push_back(std::move(e));
  }
  return block;
}

void check_block(const std::vector<CheckpointBlockEntry>& block, const ParamStore& store) {
  if (block.size() != store.size()) {
    throw ConfigError("checkpoint has " + std::to_string(block.size()) + " entries, model has " +
                      std::to_string(store.size()));
  }
  for (std::size_t i = 0; i < block.size(); ++i) {
    const auto& e = store.entries()[i];
    const auto& b = block[i];
    Shape dims(b.dims.begin(), b.dims.end());
    if (b.name != e.name || dims != e.value.shape()) {
      throw ConfigError("checkpoint entry '" + b.name + "' " + shape_str(dims) + " does not match model entry '" +
                        e.name + "' " + shape_str(e.value.shape()));
    }
  }
}

void copy_block(const std::vector<CheckpointBlockEntry>& block, ParamStore& store, int which) {
  for (std::size_t i = 0; i < block.size(); ++i) {
    auto& e = store.entries()[i];
    const auto& b = block[i];
    if (which == 0) {
      // Leaves are mutable in place.
      auto dst = e.value.mutable_data();
      std::copy(b.data.begin(), b.data.end(), dst.begin());
    } else if (which == 1) {
      e.first_moment = b.data;
    } else {
      e.second_moment = b.data;
    }
  }
}

}  // namespace

std::vector<char> encode_checkpoint(const ParamStore& store) {
  bin::Writer w;
  w.str(kMagic);
  const auto count = static_cast<std::uint32_t>(store.size());
  w.le<std::uint32_t>(count);
  for (const auto& e : store.entries()) write_entry(w, e.name, e.value.shape(), e.value.data());
  w.le<std::uint32_t>(count);
  for (const auto& e : store.entries()) write_entry(w, e.name, e.value.shape(), e.first_moment);
  w.le<std::uint32_t>(count);
  for (const auto& e : store.entries()) write_entry(w, e.name, e.value.shape(), e.second_moment);
  w.le<std::uint64_t>(store.step());
  return std::move(w.buffer());
}

CheckpointData decode_checkpoint(const std::vector<char>& bytes) {
  bin::Reader r(bytes);
  if (r.str(std::min(bytes.size(), kMagic.size()), "magic") != kMagic) throw ParseError("bad checkpoint magic", 0);
  CheckpointData out;
  out.values = read_block(r);
  out.first_moments = read_block(r);
  out.second_moments = read_block(r);
  out.step = r.le<std::uint64_t>("step counter");
  if (!r.done()) throw ParseError("trailing bytes after checkpoint", r.pos());
  return out;
}

void apply_checkpoint(ParamStore& store, const CheckpointData& data) {
  check_block(data.values, store);
  check_block(data.first_moments, store);
  check_block(data.second_moments, store);
  copy_block(data.values, store, 0);
  copy_block(data.first_moments, store, 1);
  copy_block(data.second_moments, store, 2);
  store.set_step(data.step);
}

void save_checkpoint(const ParamStore& store, const std::filesystem::path& path) {
  bin::write_file_atomic(path, encode_checkpoint(store));
}

void load_checkpoint(ParamStore& store, const std::filesystem::path& path) {
  apply_checkpoint(store, decode_checkpoint(bin::read_file(path)));
}

}  // namespace mre
