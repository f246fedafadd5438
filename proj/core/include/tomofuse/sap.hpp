#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "tomofuse/array.hpp"

namespace tomofuse {

/// Binary edge map in {0, 1}: Gaussian smoothing, Sobel gradients,
/// non-maximum suppression over 4 direction bins, double threshold at
/// (low_ratio, high_ratio) * max gradient, and 8-connected hysteresis.
Image<float> canny(const Image<float>& image, double low_ratio, double high_ratio, double sigma);

/// Z-order index of a cell: coordinate bits interleaved with x in the
/// least-significant position (x0 y0 [z0] x1 y1 [z1] ...).
std::uint64_t z_index(int x, int y, int z, int dimension);

/// Axis-aligned square/cube of side `size` (a power of two) in padded coordinates.
struct Region {
  int x = 0;
  int y = 0;
  int z = 0;
  int size = 1;

  friend bool operator==(const Region&, const Region&) = default;
};

enum class SplitCriterion { EdgeSum, IntensityVariance };

struct PatchNode {
  Region region;
  int parent = -1;
  int first_child = -1;  // children are consecutive, in Z-order
  double score = 0.0;

  bool is_leaf() const { return first_child < 0; }
};

/// Budgeted quadtree (2D) or octree (3D) over a zero-padded power-of-two grid.
class PatchTree {
 public:
  PatchTree() = default;

  int dimension() const { return dimension_; }
  int fanout() const { return 1 << dimension_; }
  int width() const { return width_; }
  int height() const { return height_; }
  int depth() const { return depth_; }
  int padded_size() const { return padded_; }

  const std::vector<PatchNode>& nodes() const { return nodes_; }
  /// Leaf node indices ordered by the Z-index of their origin.
  const std::vector<int>& leaves() const { return leaves_; }
  std::size_t leaf_count() const { return leaves_.size(); }
  int split_count() const { return splits_; }
  std::vector<Region> leaf_regions() const;

  /// Preorder split flags behind a small header; regions are implied.
  std::vector<std::byte> serialize() const;
  static PatchTree deserialize(std::span<const std::byte> bytes);

 private:
  friend class TreeBuilder;
  void finalize();

  int dimension_ = 2;
  int width_ = 0;
  int height_ = 0;
  int depth_ = 1;
  int padded_ = 1;
  int splits_ = 0;
  std::vector<PatchNode> nodes_;
  std::vector<int> leaves_;
};

/// Repeatedly splits the leaf with the largest score V (sum of field values,
/// or intensity variance), lowest Z-index first on ties, while the leaf count
/// stays <= budget. Leaves of side 1 cannot split.
PatchTree build_tree(const Image<float>& field, int budget, SplitCriterion criterion = SplitCriterion::EdgeSum);
PatchTree build_tree(const Volume<float>& field, int budget, SplitCriterion criterion = SplitCriterion::EdgeSum);

enum class PayloadKind : std::uint8_t { Image = 0, Mask = 1 };

/// Fixed-size p x p patches, one per tree leaf, in Z-order.
struct PatchSequence {
  PayloadKind kind = PayloadKind::Image;
  int patch_size = 1;
  std::vector<Region> regions;
  std::vector<std::uint16_t> values;  // count() * p * p, patch-major, row-major within a patch

  std::size_t count() const {
    return values.size() / (static_cast<std::size_t>(patch_size) * static_cast<std::size_t>(patch_size));
  }
  std::span<const std::uint16_t> patch(std::size_t i) const;
  std::span<std::uint16_t> patch(std::size_t i);
};

/// Resamples every leaf region to p x p: bilinear for images, nearest for
/// masks. Pixels in the zero padding read as 0.
PatchSequence patchify(const Image<std::uint16_t>& slice, const PatchTree& tree, int patch_size);
PatchSequence patchify(const Image<std::uint8_t>& mask, const PatchTree& tree, int patch_size);

/// Nearest-neighbour upscaling of mask patches back onto their leaf regions,
/// cropped to the original slice extent.
Image<std::uint8_t> depatch(const PatchSequence& masks, const PatchTree& tree);

}  // namespace tomofuse
