#pragma once

#include <cstdint>
#include <numbers>
#include <string>
#include <vector>

namespace tomofuse {

enum class ScanMode : std::uint8_t { Normal = 0, Offset = 1 };

/// Parallel-beam acquisition: n_proj angles evenly spaced over angle_span,
/// each projection an n_rows x n_chan detector image.
///
/// The rotation axis projects onto channel detector_center() - offset_chan.
/// Offset scans shift the detector laterally and rotate through 2*pi so the
/// field of view grows to detector_center() + |offset_chan|.
struct AcquisitionParams {
  int n_proj = 1;
  int n_rows = 1;
  int n_chan = 2;
  double angle_span = std::numbers::pi;
  double pixel_pitch = 1.0;  // micrometers
  ScanMode scan_mode = ScanMode::Normal;
  int offset_chan = 0;

  static AcquisitionParams normal(int n_proj, int n_rows, int n_chan, double pixel_pitch = 1.0);
  static AcquisitionParams offset(int n_proj, int n_rows, int n_chan, int offset_chan,
                                  double pixel_pitch = 1.0);

  /// Throws InvalidArgument when an invariant is violated.
  void validate() const;

  double angle(int k) const { return static_cast<double>(k) * angle_span / static_cast<double>(n_proj); }
  double angle_step() const { return angle_span / static_cast<double>(n_proj); }
  double detector_center() const { return 0.5 * static_cast<double>(n_chan - 1); }
  /// Detector channel hit by a ray through the rotation axis.
  double axis_channel() const { return detector_center() - static_cast<double>(offset_chan); }

  friend bool operator==(const AcquisitionParams&, const AcquisitionParams&) = default;
};

struct VolumeDims {
  int nx = 2;
  int ny = 2;
  int nz = 1;
  double voxel_pitch = 1.0;  // micrometers

  void validate() const;
  /// Checks the row <-> slice bijection (nz == n_rows).
  void validate_against(const AcquisitionParams& params) const;

  std::size_t voxel_count() const {
    return static_cast<std::size_t>(nx) * static_cast<std::size_t>(ny) * static_cast<std::size_t>(nz);
  }
  double center_x() const { return 0.5 * static_cast<double>(nx - 1); }
  double center_y() const { return 0.5 * static_cast<double>(ny - 1); }

  friend bool operator==(const VolumeDims&, const VolumeDims&) = default;
};

/// Volume dims that match an acquisition: nx = ny = n_chan, nz = n_rows.
VolumeDims matching_dims(const AcquisitionParams& params);

struct Specimen {
  AcquisitionParams acquisition;
  VolumeDims dims;
  std::string id;
};

class SpecimenSet {
 public:
  SpecimenSet() = default;
  explicit SpecimenSet(std::vector<Specimen> specimens);

  const std::vector<Specimen>& specimens() const { return specimens_; }
  std::size_t size() const { return specimens_.size(); }
  const Specimen& operator[](std::size_t i) const { return specimens_[i]; }

  void validate() const;

 private:
  std::vector<Specimen> specimens_;
};

/// Continuous detector channel hit by the ray through voxel (x, y) at angle
/// theta: t = axis + (x - cx) cos(theta) + (y - cy) sin(theta).
double ray_coordinate(double x, double y, double theta, const AcquisitionParams& params, const VolumeDims& dims);

/// Radius (in voxels) of the disc seen by at least one ray at every angle.
double fov_radius(const AcquisitionParams& params);

/// True when the voxel centre lies inside the scanned field of view.
bool in_fov(int x, int y, const AcquisitionParams& params, const VolumeDims& dims);

/// Redundancy weight applied to a sample at detector coordinate t.
///
/// Normal scans return 1. Offset scans feather linearly across a band of
/// width min(band, 2 * overlap) centred on the rotation-axis channel, where
/// overlap is the distance from the axis to the nearer detector edge. Inside
/// the band w(s) + w(-s) == 1 for the signed axis distance s, so each
/// conjugate ray pair contributes exactly once.
double redundancy_weight(double t, const AcquisitionParams& params, double band);

}  // namespace tomofuse
