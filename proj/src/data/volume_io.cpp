#include "mre/volume.hpp"

#include <string_view>

#include "mre/binary_io.hpp"
#include "mre/errors.hpp"

namespace mre {

namespace {

constexpr std::string_view kMagic{"MREVOL1\0", 8};
constexpr std::uint32_t kImage = 0;
constexpr std::uint32_t kLabels = 1;

void write_header(bin::Writer& w, std::uint32_t dtype, std::size_t channels, Triple ext, const Spacing& sp) {
  w.str(kMagic);
  w.le<std::uint32_t>(dtype);
  w.le<std::uint32_t>(static_cast<std::uint32_t>(channels));
  for (auto e : ext) w.le<std::uint32_t>(static_cast<std::uint32_t>(e));
  for (float s : sp) w.le<float>(s);
}

void check_extents(std::size_t channels, Triple ext, std::size_t payload) {
  if (channels == 0 || ext[0] == 0 || ext[1] == 0 || ext[2] == 0) {
    throw UsageError("volume extents must be positive");
  }
  if (payload != channels * ext[0] * ext[1] * ext[2]) {
    throw UsageError("volume payload length does not match its extents");
  }
}

}  // namespace

std::vector<char> encode_volume(const Volume& v) {
  check_extents(v.channels, v.extents, v.data.size());
  bin::Writer w;
  write_header(w, kImage, v.channels, v.extents, v.spacing);
  for (float x : v.data) w.le<float>(x);
  return std::move(w.buffer());
}

std::vector<char> encode_labels(const LabelMap& l) {
  check_extents(1, l.extents, l.labels.size());
  bin::Writer w;
  write_header(w, kLabels, 1, l.extents, l.spacing);
  w.bytes(l.labels.data(), l.labels.size());
  return std::move(w.buffer());
}

std::variant<Volume, LabelMap> decode_volume_file(const std::vector<char>& bytes) {
  bin::Reader r(bytes);
  r.need(kMagic.size(), "magic");
  if (r.str(kMagic.size(), "magic") != kMagic) throw ParseError("bad MREVOL1 magic", 0);
  const auto dtype = r.le<std::uint32_t>("dtype");
  if (dtype != kImage && dtype != kLabels) throw ParseError("unknown dtype code " + std::to_string(dtype), 8);
  const auto channels = r.le<std::uint32_t>("channel count");
  Triple ext{};
  for (auto& e : ext) e = r.le<std::uint32_t>("extents");
  Spacing sp{};
  for (auto& s : sp) s = r.le<float>("spacing");
  const std::size_t n = static_cast<std::size_t>(channels) * ext[0] * ext[1] * ext[2];
  if (n == 0) throw ParseError("zero-sized volume", 12);
  if (dtype == kImage) {
    r.need(n * sizeof(float), "f32 payload");
    Volume v;
    v.channels = channels;
    v.extents = ext;
    v.spacing = sp;
    v.data.resize(n);
    for (auto& x : v.data) x = r.le<float>("f32 payload");
    if (!r.done()) throw ParseError("trailing bytes after payload", r.pos());
    return v;
  }
  if (channels != 1) throw ParseError("label maps must have one channel", 12);
  r.need(n, "u8 payload");
  LabelMap l;
  l.extents = ext;
  l.spacing = sp;
  const std::string raw = r.str(n, "u8 payload");
  l.labels.assign(raw.begin(), raw.end());
  if (!r.done()) throw ParseError("trailing bytes after payload", r.pos());
  return l;
}

void write_volume(const std::filesystem::path& path, const Volume& v) { bin::write_file_atomic(path, encode_volume(v)); }
void write_labels(const std::filesystem::path& path, const LabelMap& l) { bin::write_file_atomic(path, encode_labels(l)); }

std::variant<Volume, LabelMap> read_volume_file(const std::filesystem::path& path) {
  return decode_volume_file(bin::read_file(path));
}

Volume read_volume(const std::filesystem::path& path) {
  auto any = read_volume_file(path);
  if (auto* v = std::get_if<Volume>(&any)) return std::move(*v);
  throw ParseError("'" + path.string() + "' holds a label map, expected an f32 image", 8);
}

LabelMap read_labels(const std::filesystem::path& path) {
  auto any = read_volume_file(path);
  if (auto* l = std::get_if<LabelMap>(&any)) return std::move(*l);
  throw ParseError("'" + path.string() + "' holds an f32 image, expected a label map", 8);
}

}  // namespace mre
