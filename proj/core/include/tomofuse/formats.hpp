#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "tomofuse/array.hpp"
#include "tomofuse/segfuse.hpp"
#include "tomofuse/sinogram.hpp"

namespace tomofuse {

// Little-endian containers:
//   SINO  "TSIN" u32 version, u32 n_proj, n_rows, n_chan, u8 scan_mode,
//         i32 offset_chan, f32 angle_span, f32 samples [angle][row][chan]
//   VOL   "TVOL" u32 nx, ny, nz, f32 voxel_pitch, u16 voxels z-major
//   MSK2  "TMK2" u32 nx, ny, nz, u8 bits = 2, packed labels
// Pixel pitch is not stored in SINO; readers take it as an argument.

inline constexpr std::uint32_t kSinogramVersion = 1;

struct VolumeFile {
  Volume<std::uint16_t> voxels;
  double voxel_pitch = 1.0;
};

std::vector<std::byte> encode_sinogram(const Sinogram& s);
Sinogram decode_sinogram(std::span<const std::byte> bytes, double pixel_pitch = 1.0);

std::vector<std::byte> encode_volume(const Volume<std::uint16_t>& v, double voxel_pitch);
VolumeFile decode_volume(std::span<const std::byte> bytes);

std::vector<std::byte> encode_mask(const BitmapMask& m);
BitmapMask decode_mask(std::span<const std::byte> bytes);

/// Writes to a sibling temporary file and renames it over `path`.
void write_file_atomic(const std::filesystem::path& path, std::span<const std::byte> bytes);
void write_text_atomic(const std::filesystem::path& path, const std::string& text);
std::vector<std::byte> read_file(const std::filesystem::path& path);

void write_sinogram(const std::filesystem::path& path, const Sinogram& s);
Sinogram read_sinogram(const std::filesystem::path& path, double pixel_pitch = 1.0);
void write_volume(const std::filesystem::path& path, const Volume<std::uint16_t>& v, double voxel_pitch);
VolumeFile read_volume(const std::filesystem::path& path);
void write_mask(const std::filesystem::path& path, const BitmapMask& m);
BitmapMask read_mask(const std::filesystem::path& path);

/// Binary PGM (P5, 16-bit) of one slice, scaled to the full 16-bit range of the data.
std::string slice_pgm(const Volume<std::uint16_t>& v, int z);

}  // namespace tomofuse
