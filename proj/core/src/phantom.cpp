#include "tomofuse/phantom.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>

#include "tomofuse/error.hpp"
#include "tomofuse/fbp.hpp"

namespace tomofuse {
namespace {

struct Sphere {
  double cx, cy, cz, r;
};

class Packer {
 public:
  Packer(Volume<std::uint8_t>& labels, double cx, double cy, double radius, int gap)
      : labels_(labels), cx_(cx), cy_(cy), radius_(radius), gap_(gap) {}

  // Returns the number of voxels painted, 0 when the sphere does not fit.
  std::size_t try_place(const Sphere& s, Material material) {
    if (std::hypot(s.cx - cx_, s.cy - cy_) > radius_ - s.r) return 0;
    const double reach = s.r + gap_;
    const auto x_lo = std::max(0, static_cast<int>(std::floor(s.cx - reach)));
    const auto x_hi = std::min(labels_.nx() - 1, static_cast<int>(std::ceil(s.cx + reach)));
    const auto y_lo = std::max(0, static_cast<int>(std::floor(s.cy - reach)));
    const auto y_hi = std::min(labels_.ny() - 1, static_cast<int>(std::ceil(s.cy + reach)));
    const auto z_lo = std::max(0, static_cast<int>(std::floor(s.cz - reach)));
    const auto z_hi = std::min(labels_.nz() - 1, static_cast<int>(std::ceil(s.cz + reach)));
    std::size_t inside = 0;
    for (int z = z_lo; z <= z_hi; ++z) {
      for (int y = y_lo; y <= y_hi; ++y) {
        for (int x = x_lo; x <= x_hi; ++x) {
          const double d2 = sq(x - s.cx) + sq(y - s.cy) + sq(z - s.cz);
          if (d2 > reach * reach) continue;
          const auto label = static_cast<Material>(labels_.at(x, y, z));
          if (label == Material::Aggregate || label == Material::Pore) return 0;
          if (d2 <= s.r * s.r) ++inside;
        }
      }
    }
    if (inside == 0) return 0;
    for (int z = z_lo; z <= z_hi; ++z) {
      for (int y = y_lo; y <= y_hi; ++y) {
        for (int x = x_lo; x <= x_hi; ++x) {
          if (sq(x - s.cx) + sq(y - s.cy) + sq(z - s.cz) <= s.r * s.r) {
            labels_.at(x, y, z) = static_cast<std::uint8_t>(material);
          }
        }
      }
    }
    return inside;
  }

 private:
  static double sq(double v) { return v * v; }

  Volume<std::uint8_t>& labels_;
  double cx_, cy_, radius_;
  int gap_;
};

// Fills `target` voxels with `material`, largest spheres first, shrinking the
// radius cap whenever darts keep missing and trimming the last sphere to the
// remaining deficit.
void pack(Packer& packer, std::mt19937_64& rng, Material material, double target, double r_min, double r_max,
          double cx, double cy, double radius, int nz) {
  constexpr int kAttempts = 300;
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  double placed = 0.0;
  double cap = r_max;
  int misses = 0;
  while (placed < target && misses < 12) {
    const double progress = placed / target;
    const double hi = std::max(r_min, cap - (cap - r_min) * progress);
    double r = r_min + (hi - r_min) * unit(rng);
    const double volume = 4.0 / 3.0 * std::numbers::pi * r * r * r;
    const double deficit = target - placed;
    if (volume > deficit) r = std::max(0.62, std::cbrt(deficit * 3.0 / (4.0 * std::numbers::pi)));
    bool ok = false;
    for (int a = 0; a < kAttempts; ++a) {
      const Sphere s{cx + (2.0 * unit(rng) - 1.0) * radius, cy + (2.0 * unit(rng) - 1.0) * radius,
                     unit(rng) * static_cast<double>(nz) - 0.5, r};
      const auto painted = packer.try_place(s, material);
      if (painted > 0) {
        placed += static_cast<double>(painted);
        ok = true;
        break;
      }
    }
    if (ok) {
      misses = 0;
    } else {
      ++misses;
      cap = std::max(r_min, cap * 0.8);
      if (r <= r_min) r_min = std::max(0.62, r_min * 0.8);
    }
  }
}

}  // namespace

void Microstructure::validate() const {
  for (auto v : labels.data()) require(v < kMaterialCount, "microstructure label out of range");
  for (double a : attenuation) require(std::isfinite(a) && a >= 0.0, "attenuation must be >= 0");
  require(attenuation[0] <= attenuation[1] && attenuation[1] < attenuation[2] && attenuation[2] < attenuation[3],
          "attenuation must satisfy background <= pore < cement < aggregate");
  require(voxel_pitch > 0.0, "voxel pitch must be positive");
}

Volume<float> Microstructure::attenuation_map() const {
  Volume<float> mu(labels.nx(), labels.ny(), labels.nz());
  std::transform(labels.data().begin(), labels.data().end(), mu.data().begin(),
                 [&](std::uint8_t l) { return static_cast<float>(attenuation[l]); });
  return mu;
}

Microstructure generate_microstructure(const VolumeDims& dims, double aggregate_fraction, double pore_fraction,
                                       std::uint64_t seed, const MicrostructureOptions& options) {
  require(dims.voxel_count() > 0, "microstructure dims must be non-empty");
  dims.validate();
  require(aggregate_fraction >= 0.0 && pore_fraction >= 0.0 && aggregate_fraction + pore_fraction < 1.0,
          "fractions must be >= 0 and sum to < 1");
  require(options.cylinder_ratio > 0.0 && options.cylinder_ratio <= 1.0, "cylinder_ratio must be in (0, 1]");

  Microstructure m;
  m.attenuation = options.attenuation;
  m.voxel_pitch = dims.voxel_pitch;
  m.labels = Volume<std::uint8_t>(dims.nx, dims.ny, dims.nz, static_cast<std::uint8_t>(Material::Background));

  const double cx = dims.center_x();
  const double cy = dims.center_y();
  const double radius = options.cylinder_ratio * 0.5 * static_cast<double>(std::min(dims.nx, dims.ny) - 1);
  std::size_t cylinder = 0;
  for (int z = 0; z < dims.nz; ++z) {
    for (int y = 0; y < dims.ny; ++y) {
      for (int x = 0; x < dims.nx; ++x) {
        if (std::hypot(x - cx, y - cy) <= radius) {
          m.labels.at(x, y, z) = static_cast<std::uint8_t>(Material::Cement);
          ++cylinder;
        }
      }
    }
  }

  std::mt19937_64 rng(seed);
  Packer packer(m.labels, cx, cy, radius, options.gap);
  const double n = static_cast<double>(cylinder);
  if (aggregate_fraction > 0.0) {
    pack(packer, rng, Material::Aggregate, aggregate_fraction * n, std::max(0.62, options.aggregate_radius_min * radius),
         std::max(0.62, options.aggregate_radius_max * radius), cx, cy, radius, dims.nz);
  }
  if (pore_fraction > 0.0) {
    pack(packer, rng, Material::Pore, pore_fraction * n, options.pore_radius_min, options.pore_radius_max, cx, cy,
         radius, dims.nz);
  }
  m.validate();
  return m;
}

Sinogram forward_project(const Volume<float>& attenuation, double voxel_pitch, const AcquisitionParams& params,
                         const ProjectorOptions& options) {
  params.validate();
  require(options.supersample >= 1, "supersample must be >= 1");
  const VolumeDims dims{attenuation.nx(), attenuation.ny(), attenuation.nz(), voxel_pitch};
  dims.validate_against(params);

  Sinogram out(params);
  const int n_chan = params.n_chan;
  const int ss = options.supersample;
  const double cx = dims.center_x();
  const double cy = dims.center_y();
  const double axis = params.axis_channel();
  const double scale = voxel_pitch / static_cast<double>(ss * ss);

  std::vector<double> sub_offsets(static_cast<std::size_t>(ss));
  for (int i = 0; i < ss; ++i) sub_offsets[static_cast<std::size_t>(i)] = (i + 0.5) / ss - 0.5;

  struct Voxel {
    double dx, dy, value;
  };
  std::vector<Voxel> voxels;
  std::vector<double> line(static_cast<std::size_t>(n_chan));
  for (int z = 0; z < dims.nz; ++z) {
    voxels.clear();
    for (int y = 0; y < dims.ny; ++y) {
      for (int x = 0; x < dims.nx; ++x) {
        const float mu = attenuation.at(x, y, z);
        if (mu != 0.0f && in_fov(x, y, params, dims)) voxels.push_back({x - cx, y - cy, mu * scale});
      }
    }
    std::vector<double> shift(sub_offsets.size() * sub_offsets.size());
    for (int k = 0; k < params.n_proj; ++k) {
      std::fill(line.begin(), line.end(), 0.0);
      const double theta = params.angle(k);
      const double c = std::cos(theta);
      const double s = std::sin(theta);
      std::size_t j = 0;
      for (double oy : sub_offsets) {
        for (double ox : sub_offsets) shift[j++] = axis + ox * c + oy * s;
      }
      for (const auto& v : voxels) {
        const double base = v.dx * c + v.dy * s;
        for (double sh : shift) {
          const double t = base + sh;
          if (t <= -1.0 || t >= n_chan) continue;
          // Truncation floors here because t > -1.
          const int i = static_cast<int>(t + 1.0) - 1;
          const double f = t - i;
          if (i >= 0) line[static_cast<std::size_t>(i)] += (1.0 - f) * v.value;
          if (i + 1 < n_chan) line[static_cast<std::size_t>(i + 1)] += f * v.value;
        }
      }
      auto dst = out.line(k, z);
      for (int c_i = 0; c_i < n_chan; ++c_i) dst[static_cast<std::size_t>(c_i)] = static_cast<float>(line[static_cast<std::size_t>(c_i)]);
    }
  }
  return out;
}

Sinogram forward_project(const Microstructure& m, const AcquisitionParams& params, const ProjectorOptions& options) {
  m.validate();
  return forward_project(m.attenuation_map(), m.voxel_pitch, params, options);
}

void DegradationSpec::validate() const {
  require(std::isfinite(poisson_flux) && poisson_flux > 0.0, "poisson_flux must be > 0");
  require(gaussian_sigma >= 0.0 && blur_sigma >= 0.0 && ring_gain_sigma >= 0.0, "noise sigmas must be >= 0");
  require(sparsity >= 1, "sparsity must be >= 1");
}

Sinogram degrade(const Sinogram& s, const DegradationSpec& spec) {
  spec.validate();
  require(s.is_full(), "degrade needs a full sinogram");
  const auto& in = s.params();
  std::mt19937_64 rng(spec.seed);
  std::normal_distribution<double> normal(0.0, 1.0);

  std::vector<double> gain(static_cast<std::size_t>(in.n_chan), 1.0);
  if (spec.ring_gain_sigma > 0.0) {
    for (auto& g : gain) g = std::max(0.05, 1.0 + spec.ring_gain_sigma * normal(rng));
  }

  AcquisitionParams out_params = in;
  out_params.n_proj = (in.n_proj + spec.sparsity - 1) / spec.sparsity;
  out_params.angle_span = in.angle_span * static_cast<double>(spec.sparsity) *
                          static_cast<double>(out_params.n_proj) / static_cast<double>(in.n_proj);
  Sinogram out(out_params);

  const auto kernel = gaussian_kernel(spec.blur_sigma);
  const int radius = static_cast<int>(kernel.size() / 2);
  const int n = in.n_chan;
  std::vector<double> intensity(static_cast<std::size_t>(n));
  std::vector<double> blurred(static_cast<std::size_t>(n));
  for (int j = 0; j < out_params.n_proj; ++j) {
    const int k = j * spec.sparsity;
    for (int r = 0; r < in.n_rows; ++r) {
      const auto src = s.line(k, r);
      for (int c = 0; c < n; ++c) {
        intensity[static_cast<std::size_t>(c)] =
            spec.poisson_flux * std::exp(-static_cast<double>(src[static_cast<std::size_t>(c)])) * gain[static_cast<std::size_t>(c)];
      }
      for (int c = 0; c < n; ++c) {
        double acc = 0.0;
        for (int q = -radius; q <= radius; ++q) {
          acc += kernel[static_cast<std::size_t>(q + radius)] * intensity[static_cast<std::size_t>(std::clamp(c + q, 0, n - 1))];
        }
        blurred[static_cast<std::size_t>(c)] = acc;
      }
      auto dst = out.line(j, r);
      for (int c = 0; c < n; ++c) {
        double v = blurred[static_cast<std::size_t>(c)];
        if (spec.poisson) v = static_cast<double>(sample_poisson(v, rng));
        if (spec.gaussian_sigma > 0.0) v += spec.gaussian_sigma * normal(rng);
        v = std::max(v, 1.0);
        dst[static_cast<std::size_t>(c)] = static_cast<float>(-std::log(v / spec.poisson_flux));
      }
    }
  }
  return out;
}

Sinogram to_intensity(const Sinogram& depth, double i0) {
  require(i0 > 0.0, "i0 must be > 0");
  Sinogram out = depth;
  for (auto& v : out.samples()) v = static_cast<float>(i0 * std::exp(-static_cast<double>(v)));
  return out;
}

}  // namespace tomofuse
