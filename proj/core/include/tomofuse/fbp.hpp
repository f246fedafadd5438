#pragma once

#include <cstdint>
#include <memory>
#include <span>
#include <vector>

#include "tomofuse/array.hpp"
#include "tomofuse/geometry.hpp"
#include "tomofuse/sinogram.hpp"

namespace tomofuse {

enum class FilterKind { RamLak, SheppLogan };

struct FilterSpec {
  FilterKind kind = FilterKind::RamLak;
  /// Zero-padded line length; 0 selects the next power of two >= 2 * n_chan.
  int padding = 0;
  /// Gaussian blur (channels) applied before ramp filtering; 0 disables it.
  double blur_sigma = 0.0;

  int padded_length(int n_chan) const;
  void validate(int n_chan) const;
};

struct HuWindow {
  double lo = 0.0;
  double hi = 1.0;

  void validate() const;
};

struct BackProjectOptions {
  /// Width in channels of the offset-scan feathering band.
  double overlap_band = 32.0;
  /// Sub-voxel samples per axis; the forward projector's adjoint at the same factor.
  int supersample = 1;
};

/// Back-projected values for a slice tile over a row range, laid out
/// [z][y][x] relative to the tile origin.
struct PartialVolume {
  Tile tile;
  IndexRange rows;
  std::vector<float> data;

  PartialVolume() = default;
  PartialVolume(Tile t, IndexRange r)
      : tile(t), rows(r), data(t.area() * static_cast<std::size_t>(r.size()), 0.0f) {}

  float& at(int x, int y, int z) { return data[index(x, y, z)]; }
  float at(int x, int y, int z) const { return data[index(x, y, z)]; }
  std::size_t index(int x, int y, int z) const {
    return (static_cast<std::size_t>(z - rows.begin) * static_cast<std::size_t>(tile.height()) +
            static_cast<std::size_t>(y - tile.y0)) *
               static_cast<std::size_t>(tile.width()) +
           static_cast<std::size_t>(x - tile.x0);
  }
};

/// Normalised 1D Gaussian taps of radius ceil(3 sigma); {1} when sigma == 0.
std::vector<double> gaussian_kernel(double sigma);

/// Convolves `line` with a Gaussian in place, clamping at the borders.
void gaussian_blur_line(std::span<float> line, double sigma);

/// Beer-Lambert: p = -ln(max(raw, 1) / i0).
Sinogram preprocess(const Sinogram& raw, double i0);

/// Discrete spatial ramp-filter tap h[n] for unit channel spacing.
double ramp_kernel_tap(FilterKind kind, int n);

/// Frequency-domain ramp filter for lines of a fixed length. The transfer
/// function is the DFT of the discrete spatial kernel over the padded period,
/// so filtering equals linear convolution with that kernel.
///
/// Not thread-safe; each worker owns its own instance.
class RampFilter {
 public:
  RampFilter(int n_chan, const FilterSpec& spec);
  ~RampFilter();
  RampFilter(RampFilter&&) noexcept;
  RampFilter& operator=(RampFilter&&) noexcept;
  RampFilter(const RampFilter&) = delete;
  RampFilter& operator=(const RampFilter&) = delete;

  int n_chan() const;
  int padded_length() const;
  /// Real transfer function H[k], k = 0 .. padded_length / 2.
  std::span<const double> transfer() const;

  /// Filters one detector line (blur first when configured).
  void apply(std::span<const float> in, std::span<float> out);
  /// Same, but exposes the whole padded period of the filtered signal.
  void apply_padded(std::span<const float> in, std::span<double> padded_out);

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

/// Ramp-filters every line of a sinogram block.
Sinogram ramp_filter(const Sinogram& s, const FilterSpec& spec);

/// Back-projects filtered samples for the voxels in tile x rows using the
/// angles in `angles`, scaled by angle_step / pixel_pitch. Offset-scan samples
/// are weighted by redundancy_weight(); voxels outside the FoV stay 0. The
/// sinogram block must cover `angles` and `rows`.
PartialVolume back_project(const Sinogram& filtered, const VolumeDims& dims, IndexRange rows, IndexRange angles,
                           const Tile& tile, const BackProjectOptions& options = {});

/// Whole-volume back-projection of a full sinogram.
Volume<float> back_project_volume(const Sinogram& filtered, const VolumeDims& dims,
                                  const BackProjectOptions& options = {});

/// q = round(clamp((v - lo) / (hi - lo), 0, 1) * 65535).
std::uint16_t quantize_value(double v, const HuWindow& window);
std::vector<std::uint16_t> quantize(std::span<const float> values, const HuWindow& window);
Volume<std::uint16_t> quantize(const Volume<float>& v, const HuWindow& window);
/// Inverse of quantize_value at the bin centre.
double dequantize_value(std::uint16_t q, const HuWindow& window);

struct ReconstructionOptions {
  FilterSpec filter;
  BackProjectOptions back_projection;
  /// Flat-field counts; > 0 means the input holds raw intensities and is
  /// Beer-Lambert preprocessed first, 0 means it already holds optical depth.
  double i0 = 0.0;
};

/// Single-worker reference reconstruction of a full sinogram.
Volume<float> reconstruct(const Sinogram& sino, const VolumeDims& dims, const ReconstructionOptions& options = {});

}  // namespace tomofuse
