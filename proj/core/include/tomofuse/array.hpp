#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "tomofuse/error.hpp"

namespace tomofuse {

/// Half-open index interval [begin, end).
struct IndexRange {
  int begin = 0;
  int end = 0;

  constexpr int size() const { return end > begin ? end - begin : 0; }
  constexpr bool empty() const { return end <= begin; }
  constexpr bool contains(int i) const { return i >= begin && i < end; }
  friend constexpr bool operator==(const IndexRange&, const IndexRange&) = default;
};

/// Axis-aligned rectangle [x0, x1) x [y0, y1) in voxel coordinates.
struct Tile {
  int x0 = 0;
  int x1 = 0;
  int y0 = 0;
  int y1 = 0;

  constexpr int width() const { return x1 > x0 ? x1 - x0 : 0; }
  constexpr int height() const { return y1 > y0 ? y1 - y0 : 0; }
  constexpr std::size_t area() const {
    return static_cast<std::size_t>(width()) * static_cast<std::size_t>(height());
  }
  constexpr bool empty() const { return width() == 0 || height() == 0; }
  constexpr bool contains(int x, int y) const { return x >= x0 && x < x1 && y >= y0 && y < y1; }
  friend constexpr bool operator==(const Tile&, const Tile&) = default;
};

/// Dense row-major 2D array.
template <typename T>
class Image {
 public:
  Image() = default;
  Image(int width, int height, T fill = T{})
      : width_(width), height_(height),
        data_(static_cast<std::size_t>(checked(width)) * static_cast<std::size_t>(checked(height)), fill) {}

  int width() const { return width_; }
  int height() const { return height_; }
  std::size_t size() const { return data_.size(); }

  T& at(int x, int y) { return data_[index(x, y)]; }
  const T& at(int x, int y) const { return data_[index(x, y)]; }

  std::span<T> row(int y) { return {data_.data() + index(0, y), static_cast<std::size_t>(width_)}; }
  std::span<const T> row(int y) const {
    return {data_.data() + index(0, y), static_cast<std::size_t>(width_)};
  }

  std::vector<T>& data() { return data_; }
  const std::vector<T>& data() const { return data_; }

  friend bool operator==(const Image&, const Image&) = default;

 private:
  static int checked(int n) {
    if (n < 0) throw InvalidArgument("negative image extent");
    return n;
  }
  std::size_t index(int x, int y) const {
    return static_cast<std::size_t>(y) * static_cast<std::size_t>(width_) + static_cast<std::size_t>(x);
  }

  int width_ = 0;
  int height_ = 0;
  std::vector<T> data_;
};

/// Dense 3D array, z-major (z slowest, x fastest).
template <typename T>
class Volume {
 public:
  Volume() = default;
  Volume(int nx, int ny, int nz, T fill = T{})
      : nx_(checked(nx)), ny_(checked(ny)), nz_(checked(nz)),
        data_(static_cast<std::size_t>(nx_) * static_cast<std::size_t>(ny_) * static_cast<std::size_t>(nz_), fill) {}

  int nx() const { return nx_; }
  int ny() const { return ny_; }
  int nz() const { return nz_; }
  std::size_t size() const { return data_.size(); }
  std::size_t slice_size() const { return static_cast<std::size_t>(nx_) * static_cast<std::size_t>(ny_); }

  T& at(int x, int y, int z) { return data_[index(x, y, z)]; }
  const T& at(int x, int y, int z) const { return data_[index(x, y, z)]; }

  std::span<T> slice(int z) { return {data_.data() + index(0, 0, z), slice_size()}; }
  std::span<const T> slice(int z) const { return {data_.data() + index(0, 0, z), slice_size()}; }

  std::vector<T>& data() { return data_; }
  const std::vector<T>& data() const { return data_; }

  std::size_t index(int x, int y, int z) const {
    return (static_cast<std::size_t>(z) * static_cast<std::size_t>(ny_) + static_cast<std::size_t>(y)) *
               static_cast<std::size_t>(nx_) +
           static_cast<std::size_t>(x);
  }

  friend bool operator==(const Volume&, const Volume&) = default;

 private:
  static int checked(int n) {
    if (n < 0) throw InvalidArgument("negative volume extent");
    return n;
  }

  int nx_ = 0;
  int ny_ = 0;
  int nz_ = 0;
  std::vector<T> data_;
};

}  // namespace tomofuse
