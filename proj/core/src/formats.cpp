#include "tomofuse/formats.hpp"

#include <algorithm>
#include <bit>
#include <cstring>
#include <fstream>
#include <numbers>
#include <random>
#include <sstream>

#include "tomofuse/error.hpp"

namespace tomofuse {
namespace {

class Writer {
 public:
  void magic(const char (&m)[5]) {
    for (int i = 0; i < 4; ++i) out_.push_back(static_cast<std::byte>(m[i]));
  }
  void u8(std::uint8_t v) { out_.push_back(static_cast<std::byte>(v)); }
  void u16(std::uint16_t v) {
    u8(static_cast<std::uint8_t>(v & 0xFFu));
    u8(static_cast<std::uint8_t>(v >> 8));
  }
  void u32(std::uint32_t v) {
    for (int i = 0; i < 4; ++i) u8(static_cast<std::uint8_t>((v >> (8 * i)) & 0xFFu));
  }
  void i32(std::int32_t v) { u32(static_cast<std::uint32_t>(v)); }
  void f32(float v) { u32(std::bit_cast<std::uint32_t>(v)); }
  void bytes(std::span<const std::byte> b) { out_.insert(out_.end(), b.begin(), b.end()); }
  void reserve(std::size_t n) { out_.reserve(n); }
  std::vector<std::byte> take() { return std::move(out_); }

 private:
  std::vector<std::byte> out_;
};

class Reader {
 public:
  Reader(std::span<const std::byte> in, const char* what) : in_(in), what_(what) {}

  void magic(const char (&m)[5]) {
    need(4);
    if (std::memcmp(in_.data() + at_, m, 4) != 0) throw FormatError(std::string("bad ") + what_ + " magic");
    at_ += 4;
  }
  std::uint8_t u8() {
    need(1);
    return static_cast<std::uint8_t>(in_[at_++]);
  }
  std::uint16_t u16() {
    const std::uint16_t lo = u8();
    return static_cast<std::uint16_t>(lo | (static_cast<std::uint16_t>(u8()) << 8));
  }
  std::uint32_t u32() {
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(u8()) << (8 * i);
    return v;
  }
  std::int32_t i32() { return static_cast<std::int32_t>(u32()); }
  float f32() { return std::bit_cast<float>(u32()); }
  std::span<const std::byte> rest() const { return in_.subspan(at_); }
  void expect_remaining(std::size_t n) const {
    if (in_.size() - at_ != n) {
      throw FormatError(std::string(what_) + " payload is " + std::to_string(in_.size() - at_) + " bytes, expected " +
                        std::to_string(n));
    }
  }

 private:
  void need(std::size_t n) const {
    if (at_ + n > in_.size()) throw FormatError(std::string(what_) + " header truncated");
  }

  std::span<const std::byte> in_;
  const char* what_;
  std::size_t at_ = 0;
};

}  // namespace

std::vector<std::byte> encode_sinogram(const Sinogram& s) {
  require(s.is_full(), "only full sinograms can be serialized");
  const auto& p = s.params();
  Writer w;
  w.reserve(29 + s.byte_size());
  w.magic("TSIN");
  w.u32(kSinogramVersion);
  w.u32(static_cast<std::uint32_t>(p.n_proj));
  w.u32(static_cast<std::uint32_t>(p.n_rows));
  w.u32(static_cast<std::uint32_t>(p.n_chan));
  w.u8(static_cast<std::uint8_t>(p.scan_mode));
  w.i32(p.offset_chan);
  w.f32(static_cast<float>(p.angle_span));
  for (float v : s.samples()) w.f32(v);
  return w.take();
}

Sinogram decode_sinogram(std::span<const std::byte> bytes, double pixel_pitch) {
  Reader r(bytes, "sinogram");
  r.magic("TSIN");
  const std::uint32_t version = r.u32();
  if (version != kSinogramVersion) throw FormatError("unsupported sinogram version " + std::to_string(version));
  AcquisitionParams p;
  p.n_proj = static_cast<int>(r.u32());
  p.n_rows = static_cast<int>(r.u32());
  p.n_chan = static_cast<int>(r.u32());
  const std::uint8_t mode = r.u8();
  if (mode > 1) throw FormatError("unknown scan mode " + std::to_string(mode));
  p.scan_mode = static_cast<ScanMode>(mode);
  p.offset_chan = r.i32();
  p.angle_span = static_cast<double>(r.f32());
  // f32 storage loses the exact half and full turn; snap back so params compare equal
  for (double turn : {std::numbers::pi, 2.0 * std::numbers::pi}) {
    if (static_cast<float>(turn) == static_cast<float>(p.angle_span)) p.angle_span = turn;
  }
  p.pixel_pitch = pixel_pitch;
  try {
    p.validate();
  } catch (const InvalidArgument& e) {
    throw FormatError(std::string("sinogram header: ") + e.what());
  }
  const std::size_t n = static_cast<std::size_t>(p.n_proj) * static_cast<std::size_t>(p.n_rows) *
                        static_cast<std::size_t>(p.n_chan);
  r.expect_remaining(n * 4);
  Sinogram s(p);
  for (auto& v : s.samples()) v = r.f32();
  return s;
}

std::vector<std::byte> encode_volume(const Volume<std::uint16_t>& v, double voxel_pitch) {
  Writer w;
  w.reserve(20 + v.size() * 2);
  w.magic("TVOL");
  w.u32(static_cast<std::uint32_t>(v.nx()));
  w.u32(static_cast<std::uint32_t>(v.ny()));
  w.u32(static_cast<std::uint32_t>(v.nz()));
  w.f32(static_cast<float>(voxel_pitch));
  for (auto q : v.data()) w.u16(q);
  return w.take();
}

VolumeFile decode_volume(std::span<const std::byte> bytes) {
  Reader r(bytes, "volume");
  r.magic("TVOL");
  const auto nx = r.u32(), ny = r.u32(), nz = r.u32();
  const float pitch = r.f32();
  if (!(pitch > 0.0f)) throw FormatError("volume voxel pitch must be > 0");
  r.expect_remaining(static_cast<std::size_t>(nx) * ny * nz * 2);
  VolumeFile f{Volume<std::uint16_t>(static_cast<int>(nx), static_cast<int>(ny), static_cast<int>(nz)), pitch};
  for (auto& q : f.voxels.data()) q = r.u16();
  return f;
}

std::vector<std::byte> encode_mask(const BitmapMask& m) {
  if (m.payload.size() != (m.voxel_count() + 3) / 4) throw DimensionMismatch("mask payload size mismatch");
  Writer w;
  w.magic("TMK2");
  w.u32(static_cast<std::uint32_t>(m.nx));
  w.u32(static_cast<std::uint32_t>(m.ny));
  w.u32(static_cast<std::uint32_t>(m.nz));
  w.u8(2);
  w.bytes(m.payload);
  return w.take();
}

BitmapMask decode_mask(std::span<const std::byte> bytes) {
  Reader r(bytes, "mask");
  r.magic("TMK2");
  BitmapMask m;
  m.nx = static_cast<int>(r.u32());
  m.ny = static_cast<int>(r.u32());
  m.nz = static_cast<int>(r.u32());
  const std::uint8_t bits = r.u8();
  if (bits != 2) throw FormatError("mask label width must be 2 bits, got " + std::to_string(bits));
  r.expect_remaining((m.voxel_count() + 3) / 4);
  const auto rest = r.rest();
  m.payload.assign(rest.begin(), rest.end());
  return m;
}

void write_file_atomic(const std::filesystem::path& path, std::span<const std::byte> bytes) {
  std::random_device rd;
  auto tmp = path;
  tmp += ".tmp" + std::to_string(rd());
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot open '" + tmp.string() + "' for writing");
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    out.flush();
    if (!out) {
      std::error_code ec;
      std::filesystem::remove(tmp, ec);
      throw IoError("short write to '" + tmp.string() + "'");
    }
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) {
    std::filesystem::remove(tmp, ec);
    throw IoError("cannot rename onto '" + path.string() + "'");
  }
}

void write_text_atomic(const std::filesystem::path& path, const std::string& text) {
  write_file_atomic(path, std::as_bytes(std::span<const char>(text.data(), text.size())));
}

std::vector<std::byte> read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open '" + path.string() + "'");
  in.seekg(0, std::ios::end);
  const auto size = static_cast<std::size_t>(in.tellg());
  in.seekg(0);
  std::vector<std::byte> bytes(size);
  in.read(reinterpret_cast<char*>(bytes.data()), static_cast<std::streamsize>(size));
  if (!in) throw IoError("short read from '" + path.string() + "'");
  return bytes;
}

void write_sinogram(const std::filesystem::path& path, const Sinogram& s) { write_file_atomic(path, encode_sinogram(s)); }
Sinogram read_sinogram(const std::filesystem::path& path, double pixel_pitch) {
  return decode_sinogram(read_file(path), pixel_pitch);
}
void write_volume(const std::filesystem::path& path, const Volume<std::uint16_t>& v, double voxel_pitch) {
  write_file_atomic(path, encode_volume(v, voxel_pitch));
}
VolumeFile read_volume(const std::filesystem::path& path) { return decode_volume(read_file(path)); }
void write_mask(const std::filesystem::path& path, const BitmapMask& m) { write_file_atomic(path, encode_mask(m)); }
BitmapMask read_mask(const std::filesystem::path& path) { return decode_mask(read_file(path)); }

std::string slice_pgm(const Volume<std::uint16_t>& v, int z) {
  require(z >= 0 && z < v.nz(), "slice index out of range");
  const auto s = v.slice(z);
  const auto [lo, hi] = std::minmax_element(s.begin(), s.end());
  const double span = *hi > *lo ? static_cast<double>(*hi - *lo) : 1.0;
  std::ostringstream os;
  os << "P5\n" << v.nx() << ' ' << v.ny() << "\n65535\n";
  std::string out = os.str();
  for (auto q : s) {
    const auto scaled = static_cast<std::uint16_t>((q - *lo) / span * 65535.0 + 0.5);
    out.push_back(static_cast<char>(scaled >> 8));
    out.push_back(static_cast<char>(scaled & 0xFFu));
  }
  return out;
}

}  // namespace tomofuse
