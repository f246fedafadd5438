#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "tomofuse/array.hpp"
#include "tomofuse/fbp.hpp"
#include "tomofuse/phantom.hpp"
#include "tomofuse/ranksim.hpp"
#include "tomofuse/sap.hpp"

namespace tomofuse {

/// Maps an image patch sequence to a mask sequence of the same length and
/// regions. Implementations must be pure per patch.
class Segmenter {
 public:
  virtual ~Segmenter() = default;
  virtual PatchSequence segment(const PatchSequence& image) const = 0;
};

/// Per-pixel 4-class thresholding: label = number of thresholds <= value.
class ThresholdSegmenter final : public Segmenter {
 public:
  explicit ThresholdSegmenter(std::array<std::uint16_t, 3> thresholds);

  /// Thresholds at the quantized midpoints between consecutive class attenuations.
  static ThresholdSegmenter from_attenuation(const Attenuation& attenuation, const HuWindow& window);

  const std::array<std::uint16_t, 3>& thresholds() const { return thresholds_; }
  std::uint8_t label(std::uint16_t value) const {
    return static_cast<std::uint8_t>((value >= thresholds_[0]) + (value >= thresholds_[1]) + (value >= thresholds_[2]));
  }

  PatchSequence segment(const PatchSequence& image) const override;
  Volume<std::uint8_t> segment(const Volume<std::uint16_t>& volume) const;

 private:
  std::array<std::uint16_t, 3> thresholds_;
};

struct SapOptions {
  int budget = 64;       // leaves per tile
  int patch_size = 16;   // p
  double canny_low = 0.1;
  double canny_high = 0.3;
  double canny_sigma = 1.0;
  SplitCriterion criterion = SplitCriterion::EdgeSum;

  void validate() const;
};

/// One resident slice tile of the reconstructed volume.
struct SliceTile {
  int z = 0;
  Tile tile;
  int owner = 0;
  Image<std::uint16_t> pixels;  // tile.width() x tile.height()
};

struct FusedResult {
  std::vector<Image<std::uint8_t>> masks;  // index-aligned with the input tiles
  std::size_t payload_bytes = 0;           // step 2 patch payload
  std::size_t tree_bytes = 0;              // step 2 serialized trees
  std::size_t raw_bytes = 0;               // u16 bytes of the input tiles
  std::size_t mask_bytes = 0;              // step 4 packed masks
  std::size_t patch_count = 0;
  double time = 0.0;                       // modeled fabric time
};

/// Local tree + patch sequence for one tile (step 1).
PatchTree tile_tree(const Image<std::uint16_t>& pixels, const SapOptions& options);

/// Serial oracle: patchify -> segment -> depatch on one tile.
Image<std::uint8_t> infer_tile(const Image<std::uint16_t>& pixels, const SapOptions& options, const Segmenter& seg);

/// Five-step fused inference. Patch payloads of slice z are gathered on rank
/// z mod n, segmented there and sent back; each owner depatches with its
/// retained tree. Output depends only on the tiles, never on rank count.
FusedResult fused_infer(const std::vector<SliceTile>& tiles, const SapOptions& options, const Segmenter& seg,
                        Fabric& fabric);

/// 2-bit labels, LSB-first within each byte, row-major voxel order.
struct BitmapMask {
  int nx = 0;
  int ny = 0;
  int nz = 0;
  std::vector<std::byte> payload;  // ceil(n / 4) bytes

  std::size_t voxel_count() const {
    return static_cast<std::size_t>(nx) * static_cast<std::size_t>(ny) * static_cast<std::size_t>(nz);
  }
};

std::vector<std::byte> pack_labels(std::span<const std::uint8_t> labels);
std::vector<std::uint8_t> unpack_labels(std::span<const std::byte> payload, std::size_t count);
BitmapMask encode_bitmap(const Volume<std::uint8_t>& mask);
Volume<std::uint8_t> decode_bitmap(const BitmapMask& bitmap);

/// 2|P & T| / (|P| + |T|) for one class; 1 when both are empty.
double dice(const Volume<std::uint8_t>& pred, const Volume<std::uint8_t>& truth, std::uint8_t label);
/// Mean Dice over the classes present in `truth`.
double macro_dice(const Volume<std::uint8_t>& pred, const Volume<std::uint8_t>& truth);

struct ComponentOptions {
  int connectivity = 26;  // 6 or 26
  /// Ascending size-bin edges; bin = number of edges <= size. Empty selects
  /// log2 bins (bin = floor(log2(size))).
  std::vector<std::size_t> bin_edges;
};

struct Components {
  Volume<std::int32_t> labels;     // 0 outside the class, else 1-based id
  std::vector<std::size_t> sizes;  // sizes[id - 1], ids ordered by first voxel in raster order
  std::vector<int> bins;           // per component
  std::vector<int> rank;           // rank[id - 1], 0 = largest; ties by id

  std::size_t count() const { return sizes.size(); }
  /// Component counts per bin, 0 .. max bin.
  std::vector<std::size_t> histogram() const;
  /// component,size,rank,bin
  std::string csv() const;
};

Components connected_components(const Volume<std::uint8_t>& mask, std::uint8_t label,
                                const ComponentOptions& options = {});

}  // namespace tomofuse
