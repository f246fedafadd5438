#include "tomofuse/geometry.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <set>

#include "tomofuse/error.hpp"

namespace tomofuse {

AcquisitionParams AcquisitionParams::normal(int n_proj, int n_rows, int n_chan, double pixel_pitch) {
  AcquisitionParams p;
  p.n_proj = n_proj;
  p.n_rows = n_rows;
  p.n_chan = n_chan;
  p.angle_span = std::numbers::pi;
  p.pixel_pitch = pixel_pitch;
  p.scan_mode = ScanMode::Normal;
  p.offset_chan = 0;
  p.validate();
  return p;
}

AcquisitionParams AcquisitionParams::offset(int n_proj, int n_rows, int n_chan, int offset_chan,
                                            double pixel_pitch) {
  AcquisitionParams p;
  p.n_proj = n_proj;
  p.n_rows = n_rows;
  p.n_chan = n_chan;
  p.angle_span = 2.0 * std::numbers::pi;
  p.pixel_pitch = pixel_pitch;
  p.scan_mode = ScanMode::Offset;
  p.offset_chan = offset_chan;
  p.validate();
  return p;
}

void AcquisitionParams::validate() const {
  require(n_proj >= 1, "n_proj must be >= 1");
  require(n_rows >= 1, "n_rows must be >= 1");
  require(n_chan >= 2, "n_chan must be >= 2");
  require(std::isfinite(angle_span) && angle_span > 0.0, "angle_span must be positive");
  require(std::isfinite(pixel_pitch) && pixel_pitch > 0.0, "pixel_pitch must be positive");
  if (scan_mode == ScanMode::Normal) {
    require(offset_chan == 0, "normal scans require offset_chan == 0");
  } else {
    require(offset_chan != 0 && std::abs(offset_chan) < n_chan, "offset scans require 0 < |offset_chan| < n_chan");
  }
}

void VolumeDims::validate() const {
  require(nx >= 2 && ny >= 2, "volume nx, ny must be >= 2");
  require(nz >= 1, "volume nz must be >= 1");
  require(std::isfinite(voxel_pitch) && voxel_pitch > 0.0, "voxel_pitch must be positive");
}

void VolumeDims::validate_against(const AcquisitionParams& params) const {
  validate();
  if (nz != params.n_rows) {
    throw DimensionMismatch("volume nz (" + std::to_string(nz) + ") != detector rows (" +
                            std::to_string(params.n_rows) + ")");
  }
}

VolumeDims matching_dims(const AcquisitionParams& params) {
  return VolumeDims{params.n_chan, params.n_chan, params.n_rows, params.pixel_pitch};
}

SpecimenSet::SpecimenSet(std::vector<Specimen> specimens) : specimens_(std::move(specimens)) { validate(); }

void SpecimenSet::validate() const {
  require(!specimens_.empty(), "specimen set is empty");
  std::set<std::string> ids;
  for (const auto& s : specimens_) {
    s.acquisition.validate();
    s.dims.validate_against(s.acquisition);
    require(ids.insert(s.id).second, "duplicate specimen id '" + s.id + "'");
  }
}

double ray_coordinate(double x, double y, double theta, const AcquisitionParams& params, const VolumeDims& dims) {
  return params.axis_channel() + (x - dims.center_x()) * std::cos(theta) + (y - dims.center_y()) * std::sin(theta);
}

double fov_radius(const AcquisitionParams& params) {
  return params.detector_center() + static_cast<double>(std::abs(params.offset_chan));
}

bool in_fov(int x, int y, const AcquisitionParams& params, const VolumeDims& dims) {
  const double dx = static_cast<double>(x) - dims.center_x();
  const double dy = static_cast<double>(y) - dims.center_y();
  const double r = fov_radius(params);
  return dx * dx + dy * dy <= r * r;
}

double redundancy_weight(double t, const AcquisitionParams& params, double band) {
  if (params.scan_mode == ScanMode::Normal) return 1.0;
  const double axis = params.axis_channel();
  // Signed distance from the axis, positive towards the extended side.
  const double s = params.offset_chan > 0 ? t - axis : axis - t;
  const double overlap = params.offset_chan > 0 ? axis : static_cast<double>(params.n_chan - 1) - axis;
  const double half = std::min(0.5 * band, std::max(overlap, 0.0));
  if (half <= 0.0) return s > 0.0 ? 1.0 : (s < 0.0 ? 0.0 : 0.5);
  return std::clamp(0.5 + 0.5 * s / half, 0.0, 1.0);
}

}  // namespace tomofuse
