#pragma once

#include <array>
#include <cstdint>

#include "tomofuse/array.hpp"
#include "tomofuse/geometry.hpp"
#include "tomofuse/sinogram.hpp"

namespace tomofuse {

/// Material classes of the simulated concrete specimens.
enum class Material : std::uint8_t { Background = 0, Pore = 1, Cement = 2, Aggregate = 3 };
inline constexpr int kMaterialCount = 4;

/// Linear attenuation (1/um) per material, indexed by Material.
using Attenuation = std::array<double, kMaterialCount>;

/// Pores are resin-filled, so they attenuate at about half the cement value;
/// the spacing keeps all three material contrasts above the default noise floor.
inline constexpr Attenuation kDefaultAttenuation{0.0, 0.0012, 0.0026, 0.0042};

struct Microstructure {
  Volume<std::uint8_t> labels;  // nz x ny x nx class ids
  Attenuation attenuation = kDefaultAttenuation;
  double voxel_pitch = 1.0;

  /// Throws InvalidArgument on out-of-range labels or unordered coefficients.
  void validate() const;
  VolumeDims dims() const { return VolumeDims{labels.nx(), labels.ny(), labels.nz(), voxel_pitch}; }
  Volume<float> attenuation_map() const;
};

struct MicrostructureOptions {
  Attenuation attenuation = kDefaultAttenuation;
  /// Cement cylinder radius as a fraction of half the smaller in-plane extent.
  double cylinder_ratio = 0.85;
  /// Aggregate radii as fractions of the cylinder radius.
  double aggregate_radius_min = 0.10;
  double aggregate_radius_max = 0.24;
  /// Pore radii in voxels.
  double pore_radius_min = 2.0;
  double pore_radius_max = 3.5;
  /// Minimum cement gap (voxels) between inclusions.
  int gap = 1;
};

/// Seeded dart-throwing packing of non-overlapping spherical aggregates and
/// then pores into a cement cylinder (axis along z) on background. Fractions
/// are relative to the cylinder volume.
Microstructure generate_microstructure(const VolumeDims& dims, double aggregate_fraction, double pore_fraction,
                                       std::uint64_t seed, const MicrostructureOptions& options = {});

struct ProjectorOptions {
  /// Sub-voxel samples per axis; back_project with the same factor is the exact adjoint.
  int supersample = 2;
};

/// Parallel-beam line integrals (optical depth) of an attenuation map:
/// each voxel inside the FoV splats pitch * mu onto the two channels that
/// bracket its ray coordinate with linear weights.
Sinogram forward_project(const Volume<float>& attenuation, double voxel_pitch, const AcquisitionParams& params,
                         const ProjectorOptions& options = {});
Sinogram forward_project(const Microstructure& m, const AcquisitionParams& params,
                         const ProjectorOptions& options = {});

struct DegradationSpec {
  double poisson_flux = 1.0e5;  // I0, counts at zero attenuation
  bool poisson = true;
  double gaussian_sigma = 0.0;   // additive counts
  double blur_sigma = 0.0;       // channels
  double ring_gain_sigma = 0.0;  // multiplicative per-channel gain std
  int sparsity = 1;              // keep every k-th angle
  std::uint64_t seed = 0;

  void validate() const;
};

/// Samples from Poisson(mean): exact inversion below 30, rounded Gaussian above.
template <typename Rng>
std::int64_t sample_poisson(double mean, Rng& rng);

/// Applies Beer-Lambert forward, ring gain, channel blur, Poisson and
/// Gaussian noise, clamping, and the log back to optical depth; then keeps
/// every `sparsity`-th angle.
Sinogram degrade(const Sinogram& s, const DegradationSpec& spec);

/// Raw detector counts i0 * exp(-p) for an optical-depth sinogram.
Sinogram to_intensity(const Sinogram& depth, double i0);

}  // namespace tomofuse

#include "tomofuse/detail/poisson.hpp"
