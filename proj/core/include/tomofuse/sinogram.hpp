#pragma once

#include <span>
#include <vector>

#include "tomofuse/array.hpp"
#include "tomofuse/geometry.hpp"

namespace tomofuse {

/// A block of projection data: a contiguous angle range and row range of the
/// full acquisition, laid out [angle][row][channel]. Indices passed to at()
/// and line() are global acquisition indices.
class Sinogram {
 public:
  Sinogram() = default;
  /// Full-acquisition sinogram filled with `fill`.
  explicit Sinogram(const AcquisitionParams& params, float fill = 0.0f);
  /// Block covering the given global angle and row ranges.
  Sinogram(const AcquisitionParams& params, IndexRange angles, IndexRange rows, float fill = 0.0f);

  const AcquisitionParams& params() const { return params_; }
  IndexRange angles() const { return angles_; }
  IndexRange rows() const { return rows_; }
  int n_chan() const { return params_.n_chan; }
  bool is_full() const;

  float& at(int k, int r, int c) { return samples_[offset(k, r) + static_cast<std::size_t>(c)]; }
  float at(int k, int r, int c) const { return samples_[offset(k, r) + static_cast<std::size_t>(c)]; }

  std::span<float> line(int k, int r) { return {samples_.data() + offset(k, r), static_cast<std::size_t>(n_chan())}; }
  std::span<const float> line(int k, int r) const {
    return {samples_.data() + offset(k, r), static_cast<std::size_t>(n_chan())};
  }

  std::vector<float>& samples() { return samples_; }
  const std::vector<float>& samples() const { return samples_; }
  std::size_t byte_size() const { return samples_.size() * sizeof(float); }

  /// Copy of a sub-block; ranges must lie inside this block.
  Sinogram block(IndexRange angles, IndexRange rows) const;

  friend bool operator==(const Sinogram&, const Sinogram&) = default;

 private:
  std::size_t offset(int k, int r) const {
    return (static_cast<std::size_t>(k - angles_.begin) * static_cast<std::size_t>(rows_.size()) +
            static_cast<std::size_t>(r - rows_.begin)) *
           static_cast<std::size_t>(n_chan());
  }

  AcquisitionParams params_;
  IndexRange angles_;
  IndexRange rows_;
  std::vector<float> samples_;
};

}  // namespace tomofuse
