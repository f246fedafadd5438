#include "tomofuse/fbp.hpp"

#include <fftw3.h>

#include <algorithm>
#include <cmath>
#include <mutex>
#include <numbers>

#include "tomofuse/error.hpp"

namespace tomofuse {
namespace {

// FFTW's planner is not re-entrant.
std::mutex& planner_mutex() {
  static std::mutex m;
  return m;
}

int next_pow2(int n) {
  int p = 1;
  while (p < n) p <<= 1;
  return p;
}

}  // namespace

int FilterSpec::padded_length(int n_chan) const { return padding > 0 ? padding : next_pow2(2 * n_chan); }

void FilterSpec::validate(int n_chan) const {
  const int p = padded_length(n_chan);
  require(p >= 2 * n_chan, "filter padding must be >= 2 * n_chan");
  require((p & (p - 1)) == 0, "filter padding must be a power of two");
  require(std::isfinite(blur_sigma) && blur_sigma >= 0.0, "filter blur_sigma must be >= 0");
}

void HuWindow::validate() const {
  require(std::isfinite(lo) && std::isfinite(hi) && lo < hi, "HU window requires lo < hi");
}

std::vector<double> gaussian_kernel(double sigma) {
  require(std::isfinite(sigma) && sigma >= 0.0, "gaussian sigma must be >= 0");
  if (sigma == 0.0) return {1.0};
  const int radius = static_cast<int>(std::ceil(3.0 * sigma));
  std::vector<double> k(static_cast<std::size_t>(2 * radius + 1));
  double sum = 0.0;
  for (int i = -radius; i <= radius; ++i) {
    const double v = std::exp(-0.5 * (i * i) / (sigma * sigma));
    k[static_cast<std::size_t>(i + radius)] = v;
    sum += v;
  }
  for (auto& v : k) v /= sum;
  return k;
}

void gaussian_blur_line(std::span<float> line, double sigma) {
  if (sigma == 0.0 || line.empty()) return;
  const auto k = gaussian_kernel(sigma);
  const int radius = static_cast<int>(k.size() / 2);
  const int n = static_cast<int>(line.size());
  std::vector<float> src(line.begin(), line.end());
  for (int i = 0; i < n; ++i) {
    double acc = 0.0;
    for (int j = -radius; j <= radius; ++j) {
      const int idx = std::clamp(i + j, 0, n - 1);
      acc += k[static_cast<std::size_t>(j + radius)] * src[static_cast<std::size_t>(idx)];
    }
    line[static_cast<std::size_t>(i)] = static_cast<float>(acc);
  }
}

Sinogram preprocess(const Sinogram& raw, double i0) {
  require(std::isfinite(i0) && i0 > 0.0, "preprocess requires i0 > 0");
  Sinogram out = raw;
  for (auto& v : out.samples()) {
    const double counts = std::max(static_cast<double>(v), 1.0);
    v = static_cast<float>(-std::log(counts / i0));
  }
  return out;
}

double ramp_kernel_tap(FilterKind kind, int n) {
  constexpr double pi2 = std::numbers::pi * std::numbers::pi;
  switch (kind) {
    case FilterKind::RamLak:
      if (n == 0) return 0.25;
      if (n % 2 == 0) return 0.0;
      return -1.0 / (pi2 * static_cast<double>(n) * static_cast<double>(n));
    case FilterKind::SheppLogan: {
      const double nn = static_cast<double>(n);
      return -2.0 / (pi2 * (4.0 * nn * nn - 1.0));
    }
  }
  return 0.0;
}

struct RampFilter::Impl {
  int n_chan = 0;
  int padded = 0;
  double blur_sigma = 0.0;
  std::vector<double> transfer;
  double* real = nullptr;
  fftw_complex* spectrum = nullptr;
  fftw_plan forward = nullptr;
  fftw_plan backward = nullptr;
  std::vector<float> scratch;

  ~Impl() {
    std::lock_guard lock(planner_mutex());
    if (forward) fftw_destroy_plan(forward);
    if (backward) fftw_destroy_plan(backward);
    fftw_free(real);
    fftw_free(spectrum);
  }

  void run(std::span<const float> in) {
    require(static_cast<int>(in.size()) == n_chan, "ramp filter line length mismatch");
    scratch.assign(in.begin(), in.end());
    gaussian_blur_line(scratch, blur_sigma);
    std::fill(real, real + padded, 0.0);
    std::copy(scratch.begin(), scratch.end(), real);
    fftw_execute(forward);
    const int bins = padded / 2 + 1;
    for (int k = 0; k < bins; ++k) {
      spectrum[k][0] *= transfer[static_cast<std::size_t>(k)];
      spectrum[k][1] *= transfer[static_cast<std::size_t>(k)];
    }
    fftw_execute(backward);
    const double norm = 1.0 / static_cast<double>(padded);
    for (int i = 0; i < padded; ++i) real[i] *= norm;
  }
};

RampFilter::RampFilter(int n_chan, const FilterSpec& spec) : impl_(std::make_unique<Impl>()) {
  require(n_chan >= 1, "ramp filter needs n_chan >= 1");
  spec.validate(n_chan);
  auto& s = *impl_;
  s.n_chan = n_chan;
  s.padded = spec.padded_length(n_chan);
  s.blur_sigma = spec.blur_sigma;
  const int bins = s.padded / 2 + 1;
  s.real = fftw_alloc_real(static_cast<std::size_t>(s.padded));
  s.spectrum = fftw_alloc_complex(static_cast<std::size_t>(bins));
  {
    std::lock_guard lock(planner_mutex());
    s.forward = fftw_plan_dft_r2c_1d(s.padded, s.real, s.spectrum, FFTW_ESTIMATE);
    s.backward = fftw_plan_dft_c2r_1d(s.padded, s.spectrum, s.real, FFTW_ESTIMATE);
  }
  // Kernel sampled over one padded period, n in [-P/2, P/2).
  for (int m = 0; m < s.padded; ++m) {
    const int n = m < s.padded / 2 ? m : m - s.padded;
    s.real[m] = ramp_kernel_tap(spec.kind, n);
  }
  fftw_execute(s.forward);
  s.transfer.resize(static_cast<std::size_t>(bins));
  for (int k = 0; k < bins; ++k) s.transfer[static_cast<std::size_t>(k)] = s.spectrum[k][0];
}

RampFilter::~RampFilter() = default;
RampFilter::RampFilter(RampFilter&&) noexcept = default;
RampFilter& RampFilter::operator=(RampFilter&&) noexcept = default;

int RampFilter::n_chan() const { return impl_->n_chan; }
int RampFilter::padded_length() const { return impl_->padded; }
std::span<const double> RampFilter::transfer() const { return impl_->transfer; }

void RampFilter::apply(std::span<const float> in, std::span<float> out) {
  require(out.size() == in.size(), "ramp filter output length mismatch");
  impl_->run(in);
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = static_cast<float>(impl_->real[i]);
}

void RampFilter::apply_padded(std::span<const float> in, std::span<double> padded_out) {
  require(static_cast<int>(padded_out.size()) == impl_->padded, "padded output length mismatch");
  impl_->run(in);
  std::copy(impl_->real, impl_->real + impl_->padded, padded_out.begin());
}

Sinogram ramp_filter(const Sinogram& s, const FilterSpec& spec) {
  RampFilter filter(s.n_chan(), spec);
  Sinogram out = s;
  for (int k = s.angles().begin; k < s.angles().end; ++k) {
    for (int r = s.rows().begin; r < s.rows().end; ++r) filter.apply(s.line(k, r), out.line(k, r));
  }
  return out;
}

PartialVolume back_project(const Sinogram& filtered, const VolumeDims& dims, IndexRange rows, IndexRange angles,
                           const Tile& tile, const BackProjectOptions& options) {
  const auto& params = filtered.params();
  dims.validate_against(params);
  require(options.supersample >= 1, "supersample must be >= 1");
  require(tile.x0 >= 0 && tile.y0 >= 0 && tile.x1 <= dims.nx && tile.y1 <= dims.ny && tile.x0 <= tile.x1 &&
              tile.y0 <= tile.y1,
          "tile outside volume");
  require(rows.begin >= 0 && rows.end <= dims.nz && rows.begin <= rows.end, "row range outside volume");
  require(angles.begin >= 0 && angles.end <= params.n_proj && angles.begin <= angles.end, "angle range out of bounds");

  PartialVolume out(tile, rows);
  if (tile.empty() || rows.empty() || angles.empty()) return out;
  require(angles.begin >= filtered.angles().begin && angles.end <= filtered.angles().end &&
              rows.begin >= filtered.rows().begin && rows.end <= filtered.rows().end,
          "sinogram block does not cover the requested ranges");

  const int width = tile.width();
  const int n_chan = params.n_chan;
  const int ss = options.supersample;
  const double cx = dims.center_x();
  const double cy = dims.center_y();
  const double axis = params.axis_channel();
  const bool weighted = params.scan_mode == ScanMode::Offset;
  const double scale = params.angle_step() / params.pixel_pitch / static_cast<double>(ss * ss);

  // Per tile row, the x-range of voxels inside the FoV disc.
  std::vector<IndexRange> spans(static_cast<std::size_t>(tile.height()));
  for (int y = tile.y0; y < tile.y1; ++y) {
    int a = tile.x1;
    int b = tile.x0;
    for (int x = tile.x0; x < tile.x1; ++x) {
      if (in_fov(x, y, params, dims)) {
        a = std::min(a, x);
        b = std::max(b, x + 1);
      }
    }
    spans[static_cast<std::size_t>(y - tile.y0)] = a < b ? IndexRange{a, b} : IndexRange{};
  }

  std::vector<double> sub_offsets(static_cast<std::size_t>(ss));
  for (int i = 0; i < ss; ++i) sub_offsets[static_cast<std::size_t>(i)] = (i + 0.5) / ss - 0.5;

  std::vector<double> acc(tile.area());
  for (int z = rows.begin; z < rows.end; ++z) {
    std::fill(acc.begin(), acc.end(), 0.0);
    for (int k = angles.begin; k < angles.end; ++k) {
      const auto line = filtered.line(k, z);
      const double theta = params.angle(k);
      const double c = std::cos(theta);
      const double s = std::sin(theta);
      for (int y = tile.y0; y < tile.y1; ++y) {
        const IndexRange span = spans[static_cast<std::size_t>(y - tile.y0)];
        if (span.empty()) continue;
        double* row_acc = acc.data() + static_cast<std::size_t>(y - tile.y0) * static_cast<std::size_t>(width);
        for (double oy : sub_offsets) {
          for (double ox : sub_offsets) {
            const double t0 = axis + (span.begin + ox - cx) * c + (y + oy - cy) * s;
            for (int x = span.begin; x < span.end; ++x) {
              const double t = t0 + static_cast<double>(x - span.begin) * c;
              const double fl = std::floor(t);
              const int i = static_cast<int>(fl);
              if (i < -1 || i >= n_chan) continue;
              const double f = t - fl;
              const double lo = i >= 0 ? line[static_cast<std::size_t>(i)] : 0.0;
              const double hi = i + 1 < n_chan ? line[static_cast<std::size_t>(i + 1)] : 0.0;
              double v = (1.0 - f) * lo + f * hi;
              if (weighted) v *= redundancy_weight(t, params, options.overlap_band);
              row_acc[x - tile.x0] += v;
            }
          }
        }
      }
    }
    float* dst = out.data.data() + static_cast<std::size_t>(z - rows.begin) * tile.area();
    for (std::size_t i = 0; i < acc.size(); ++i) dst[i] = static_cast<float>(acc[i] * scale);
  }
  return out;
}

Volume<float> back_project_volume(const Sinogram& filtered, const VolumeDims& dims, const BackProjectOptions& options) {
  const auto part = back_project(filtered, dims, IndexRange{0, dims.nz}, IndexRange{0, filtered.params().n_proj},
                                 Tile{0, dims.nx, 0, dims.ny}, options);
  Volume<float> v(dims.nx, dims.ny, dims.nz);
  v.data() = part.data;
  return v;
}

std::uint16_t quantize_value(double v, const HuWindow& window) {
  const double u = std::clamp((v - window.lo) / (window.hi - window.lo), 0.0, 1.0);
  return static_cast<std::uint16_t>(std::lround(u * 65535.0));
}

std::vector<std::uint16_t> quantize(std::span<const float> values, const HuWindow& window) {
  window.validate();
  std::vector<std::uint16_t> out(values.size());
  std::transform(values.begin(), values.end(), out.begin(), [&](float v) { return quantize_value(v, window); });
  return out;
}

Volume<std::uint16_t> quantize(const Volume<float>& v, const HuWindow& window) {
  Volume<std::uint16_t> out(v.nx(), v.ny(), v.nz());
  out.data() = quantize(std::span<const float>(v.data()), window);
  return out;
}

double dequantize_value(std::uint16_t q, const HuWindow& window) {
  return window.lo + (static_cast<double>(q) / 65535.0) * (window.hi - window.lo);
}

Volume<float> reconstruct(const Sinogram& sino, const VolumeDims& dims, const ReconstructionOptions& options) {
  require(sino.is_full(), "reconstruct needs a full sinogram");
  const Sinogram depth = options.i0 > 0.0 ? preprocess(sino, options.i0) : sino;
  const Sinogram filtered = ramp_filter(depth, options.filter);
  return back_project_volume(filtered, dims, options.back_projection);
}

}  // namespace tomofuse
