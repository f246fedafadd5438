#pragma once

// Slow, obviously-correct reference implementations used as test oracles.

#include <array>
#include <cmath>
#include <cstdint>
#include <deque>
#include <numbers>
#include <random>
#include <vector>

#include "tomofuse/array.hpp"
#include "tomofuse/geometry.hpp"
#include "tomofuse/partition.hpp"
#include "tomofuse/sinogram.hpp"

namespace tomofuse::oracle {

// Kak-Slaney band-limited ramp taps for unit channel spacing.
inline double ramlak_tap(int n) {
  if (n == 0) return 0.25;
  if (n % 2 == 0) return 0.0;
  return -1.0 / (std::numbers::pi * std::numbers::pi * n * n);
}

inline double shepp_logan_tap(int n) {
  return -2.0 / (std::numbers::pi * std::numbers::pi * (4.0 * n * n - 1.0));
}

// Direct linear convolution of a line with the ramp kernel, truncated to the line.
template <typename Tap>
std::vector<double> spatial_ramp(const std::vector<double>& line, Tap tap) {
  const int n = static_cast<int>(line.size());
  std::vector<double> out(line.size(), 0.0);
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < n; ++j) out[static_cast<std::size_t>(i)] += tap(i - j) * line[static_cast<std::size_t>(j)];
  }
  return out;
}

// Counts (angle, voxel) pairs of a unit whose ray lands in [0, n_chan).
inline double footprint(const WorkUnit& u, const AcquisitionParams& p, const VolumeDims& d) {
  double count = 0;
  for (int k = u.angles.begin; k < u.angles.end; ++k) {
    for (int y = u.tile.y0; y < u.tile.y1; ++y) {
      for (int x = u.tile.x0; x < u.tile.x1; ++x) {
        const double t = ray_coordinate(x, y, p.angle(k), p, d);
        if (t >= 0.0 && t < p.n_chan) count += 1;
      }
    }
  }
  return count * u.rows.size();
}

// Component sizes by breadth-first flood fill, ordered by first voxel in raster order.
inline std::vector<std::size_t> bfs_components(const Volume<std::uint8_t>& m, std::uint8_t label, int connectivity) {
  std::vector<std::array<int, 3>> nbrs;
  for (int dz = -1; dz <= 1; ++dz) {
    for (int dy = -1; dy <= 1; ++dy) {
      for (int dx = -1; dx <= 1; ++dx) {
        const int manhattan = std::abs(dx) + std::abs(dy) + std::abs(dz);
        if (manhattan == 0) continue;
        if (connectivity == 6 && manhattan != 1) continue;
        nbrs.push_back({dx, dy, dz});
      }
    }
  }
  Volume<std::uint8_t> seen(m.nx(), m.ny(), m.nz(), 0);
  std::vector<std::size_t> sizes;
  for (int z = 0; z < m.nz(); ++z) {
    for (int y = 0; y < m.ny(); ++y) {
      for (int x = 0; x < m.nx(); ++x) {
        if (m.at(x, y, z) != label || seen.at(x, y, z)) continue;
        std::deque<std::array<int, 3>> q{{x, y, z}};
        seen.at(x, y, z) = 1;
        std::size_t size = 0;
        while (!q.empty()) {
          const auto [cx, cy, cz] = q.front();
          q.pop_front();
          ++size;
          for (const auto& d : nbrs) {
            const int nx = cx + d[0], ny = cy + d[1], nz = cz + d[2];
            if (nx < 0 || ny < 0 || nz < 0 || nx >= m.nx() || ny >= m.ny() || nz >= m.nz()) continue;
            if (m.at(nx, ny, nz) != label || seen.at(nx, ny, nz)) continue;
            seen.at(nx, ny, nz) = 1;
            q.push_back({nx, ny, nz});
          }
        }
        sizes.push_back(size);
      }
    }
  }
  return sizes;
}

// Gather everything on one node, sum in ascending rank order, scatter equal blocks.
inline std::vector<std::vector<float>> gather_sum_scatter(const std::vector<std::vector<float>>& in) {
  std::vector<float> total(in.front().size(), 0.0f);
  for (const auto& c : in) {
    for (std::size_t i = 0; i < c.size(); ++i) total[i] += c[i];
  }
  const std::size_t block = total.size() / in.size();
  std::vector<std::vector<float>> out;
  for (std::size_t r = 0; r < in.size(); ++r) {
    out.emplace_back(total.begin() + static_cast<std::ptrdiff_t>(r * block),
                     total.begin() + static_cast<std::ptrdiff_t>((r + 1) * block));
  }
  return out;
}

inline Volume<std::uint8_t> random_mask(int nx, int ny, int nz, double density, std::uint64_t seed, int classes = 2) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::uniform_int_distribution<int> label(1, classes - 1);
  Volume<std::uint8_t> m(nx, ny, nz, 0);
  for (auto& v : m.data()) v = u(rng) < density ? static_cast<std::uint8_t>(label(rng)) : 0;
  return m;
}

inline double dot(const std::vector<float>& a, const std::vector<float>& b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += static_cast<double>(a[i]) * b[i];
  return s;
}

}  // namespace tomofuse::oracle
