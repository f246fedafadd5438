#include "tomofuse/config.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <functional>
#include <numbers>
#include <sstream>

#include "tomofuse/error.hpp"

namespace tomofuse {
namespace {

std::string_view trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

template <typename T>
T parse_number(std::string_view key, std::string_view text) {
  T v{};
  const auto* end = text.data() + text.size();
  const auto [ptr, ec] = std::from_chars(text.data(), end, v);
  if (ec != std::errc{} || ptr != end) {
    throw ConfigError("'" + std::string(key) + "' expects a number, got '" + std::string(text) + "'");
  }
  if constexpr (std::is_floating_point_v<T>) {
    if (!std::isfinite(v)) throw ConfigError("'" + std::string(key) + "' must be finite");
  }
  return v;
}

// Shortest text that parses back to the same double.
std::string fmt_double(double v) {
  char buf[32];
  const auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, ptr);
}

std::vector<std::string_view> split(std::string_view s, char sep) {
  std::vector<std::string_view> out;
  std::size_t at = 0;
  while (true) {
    const auto next = s.find(sep, at);
    out.push_back(trim(s.substr(at, next == std::string_view::npos ? std::string_view::npos : next - at)));
    if (next == std::string_view::npos) break;
    at = next + 1;
  }
  return out;
}

struct Field {
  std::string key;
  std::function<void(ExperimentConfig&, std::string_view)> set;
  std::function<std::string(const ExperimentConfig&)> get;
};

template <typename T>
Field number(std::string key, T ExperimentConfig::*member) {
  return {key, [key, member](ExperimentConfig& c, std::string_view v) { c.*member = parse_number<T>(key, v); },
          [member](const ExperimentConfig& c) {
            if constexpr (std::is_floating_point_v<T>) return fmt_double(c.*member);
            else return std::to_string(c.*member);
          }};
}

template <typename T>
Field nested(std::string key, std::function<T&(ExperimentConfig&)> ref) {
  return {key, [key, ref](ExperimentConfig& c, std::string_view v) { ref(c) = parse_number<T>(key, v); },
          [ref](const ExperimentConfig& c) {
            const T& v = ref(const_cast<ExperimentConfig&>(c));
            if constexpr (std::is_floating_point_v<T>) return fmt_double(v);
            else return std::to_string(v);
          }};
}

Field flag(std::string key, bool ExperimentConfig::*member) {
  return {key, [member](ExperimentConfig& c, std::string_view v) { c.*member = parse_switch(v); },
          [member](const ExperimentConfig& c) { return std::string(c.*member ? "on" : "off"); }};
}

const std::vector<Field>& fields() {
  static const std::vector<Field> table = [] {
    using C = ExperimentConfig;
    std::vector<Field> f;
    f.push_back(number("seed", &C::seed));
    f.push_back(number("specimens", &C::specimens));
    f.push_back(number("n_proj", &C::n_proj));
    f.push_back(number("n_rows", &C::n_rows));
    f.push_back(number("n_chan", &C::n_chan));
    f.push_back(number("pixel_pitch", &C::pixel_pitch));
    f.push_back({"scan_mode",
                 [](C& c, std::string_view v) {
                   if (v == "normal") c.scan_mode = ScanMode::Normal;
                   else if (v == "offset") c.scan_mode = ScanMode::Offset;
                   else throw ConfigError("scan_mode must be normal or offset, got '" + std::string(v) + "'");
                 },
                 [](const C& c) { return std::string(c.scan_mode == ScanMode::Normal ? "normal" : "offset"); }});
    f.push_back(number("offset_chan", &C::offset_chan));
    f.push_back({"angle_span",
                 [](C& c, std::string_view v) {
                   if (v == "auto") c.angle_span.reset();
                   else c.angle_span = parse_number<double>("angle_span", v);
                 },
                 [](const C& c) { return c.angle_span ? fmt_double(*c.angle_span) : std::string("auto"); }});
    f.push_back(number("aggregate_fraction", &C::aggregate_fraction));
    f.push_back(number("pore_fraction", &C::pore_fraction));
    const char* materials[] = {"att_background", "att_pore", "att_cement", "att_aggregate"};
    for (std::size_t i = 0; i < 4; ++i) {
      f.push_back(nested<double>(materials[i], [i](C& c) -> double& { return c.microstructure.attenuation[i]; }));
    }
    f.push_back(nested<double>("cylinder_ratio", [](C& c) -> double& { return c.microstructure.cylinder_ratio; }));
    f.push_back(nested<double>("aggregate_radius_min",
                               [](C& c) -> double& { return c.microstructure.aggregate_radius_min; }));
    f.push_back(nested<double>("aggregate_radius_max",
                               [](C& c) -> double& { return c.microstructure.aggregate_radius_max; }));
    f.push_back(nested<double>("pore_radius_min", [](C& c) -> double& { return c.microstructure.pore_radius_min; }));
    f.push_back(nested<double>("pore_radius_max", [](C& c) -> double& { return c.microstructure.pore_radius_max; }));
    f.push_back(nested<int>("inclusion_gap", [](C& c) -> int& { return c.microstructure.gap; }));
    f.push_back(number("projector_supersample", &C::projector_supersample));
    f.push_back(flag("noise", &C::noise));
    f.push_back(nested<double>("i0", [](C& c) -> double& { return c.degradation.poisson_flux; }));
    f.push_back({"poisson", [](C& c, std::string_view v) { c.degradation.poisson = parse_switch(v); },
                 [](const C& c) { return std::string(c.degradation.poisson ? "on" : "off"); }});
    f.push_back(nested<double>("gaussian_sigma", [](C& c) -> double& { return c.degradation.gaussian_sigma; }));
    f.push_back(nested<double>("detector_blur", [](C& c) -> double& { return c.degradation.blur_sigma; }));
    f.push_back(nested<double>("ring_gain_sigma", [](C& c) -> double& { return c.degradation.ring_gain_sigma; }));
    f.push_back(nested<int>("sparsity", [](C& c) -> int& { return c.degradation.sparsity; }));
    f.push_back({"filter",
                 [](C& c, std::string_view v) {
                   if (v == "ramlak") c.filter.kind = FilterKind::RamLak;
                   else if (v == "shepplogan") c.filter.kind = FilterKind::SheppLogan;
                   else throw ConfigError("filter must be ramlak or shepplogan, got '" + std::string(v) + "'");
                 },
                 [](const C& c) { return std::string(c.filter.kind == FilterKind::RamLak ? "ramlak" : "shepplogan"); }});
    f.push_back(nested<int>("filter_padding", [](C& c) -> int& { return c.filter.padding; }));
    f.push_back(nested<double>("filter_blur", [](C& c) -> double& { return c.filter.blur_sigma; }));
    f.push_back(number("overlap_band", &C::overlap_band));
    f.push_back(nested<double>("window_lo", [](C& c) -> double& { return c.window.lo; }));
    f.push_back(nested<double>("window_hi", [](C& c) -> double& { return c.window.hi; }));
    f.push_back({"ranks", [](C& c, std::string_view v) { c.grid = parse_rank_grid(v); },
                 [](const C& c) {
                   return std::to_string(c.grid.p_row) + "x" + std::to_string(c.grid.p_proj) + "x" +
                          std::to_string(c.grid.p_slice);
                 }});
    f.push_back(number("group_size", &C::group_size));
    f.push_back({"mapping",
                 [](C& c, std::string_view v) {
                   if (v == "block") c.mapping = MappingStrategy::Block;
                   else if (v == "cyclic") c.mapping = MappingStrategy::Cyclic;
                   else throw ConfigError("mapping must be block or cyclic, got '" + std::string(v) + "'");
                 },
                 [](const C& c) { return std::string(c.mapping == MappingStrategy::Block ? "block" : "cyclic"); }});
    f.push_back(flag("overlap", &C::overlap));
    f.push_back(flag("fuse", &C::fuse));
    f.push_back(flag("retain_volume", &C::retain_volume));
    f.push_back(number("compute_rate", &C::compute_rate));
    f.push_back(number("memory_per_rank", &C::memory_per_rank));
    f.push_back(nested<double>("link_bandwidth", [](C& c) -> double& { return c.fabric.link_bandwidth; }));
    f.push_back(nested<double>("link_latency", [](C& c) -> double& { return c.fabric.link_latency; }));
    f.push_back(nested<double>("pfs_read_bw", [](C& c) -> double& { return c.storage.pfs_read_bw; }));
    f.push_back(nested<double>("pfs_write_bw", [](C& c) -> double& { return c.storage.pfs_write_bw; }));
    f.push_back(nested<double>("staging_bw", [](C& c) -> double& { return c.storage.staging_bw; }));
    f.push_back(nested<int>("sap_budget", [](C& c) -> int& { return c.sap.budget; }));
    f.push_back(nested<int>("patch_size", [](C& c) -> int& { return c.sap.patch_size; }));
    f.push_back(nested<double>("canny_low", [](C& c) -> double& { return c.sap.canny_low; }));
    f.push_back(nested<double>("canny_high", [](C& c) -> double& { return c.sap.canny_high; }));
    f.push_back(nested<double>("canny_sigma", [](C& c) -> double& { return c.sap.canny_sigma; }));
    f.push_back({"split_criterion",
                 [](C& c, std::string_view v) {
                   if (v == "edges") c.sap.criterion = SplitCriterion::EdgeSum;
                   else if (v == "variance") c.sap.criterion = SplitCriterion::IntensityVariance;
                   else throw ConfigError("split_criterion must be edges or variance, got '" + std::string(v) + "'");
                 },
                 [](const C& c) {
                   return std::string(c.sap.criterion == SplitCriterion::EdgeSum ? "edges" : "variance");
                 }});
    f.push_back({"thresholds",
                 [](C& c, std::string_view v) {
                   if (v == "auto") {
                     c.thresholds.reset();
                     return;
                   }
                   const auto parts = split(v, ',');
                   if (parts.size() != 3) throw ConfigError("thresholds expects auto or three comma-separated values");
                   std::array<std::uint16_t, 3> t{};
                   for (std::size_t i = 0; i < 3; ++i) t[i] = parse_number<std::uint16_t>("thresholds", parts[i]);
                   c.thresholds = t;
                 },
                 [](const C& c) {
                   if (!c.thresholds) return std::string("auto");
                   const auto& t = *c.thresholds;
                   return std::to_string(t[0]) + "," + std::to_string(t[1]) + "," + std::to_string(t[2]);
                 }});
    f.push_back(nested<int>("connectivity", [](C& c) -> int& { return c.components.connectivity; }));
    f.push_back({"size_bins",
                 [](C& c, std::string_view v) {
                   c.components.bin_edges.clear();
                   if (v == "log2") return;
                   for (auto part : split(v, ',')) {
                     c.components.bin_edges.push_back(parse_number<std::size_t>("size_bins", part));
                   }
                 },
                 [](const C& c) {
                   if (c.components.bin_edges.empty()) return std::string("log2");
                   std::string s;
                   for (std::size_t i = 0; i < c.components.bin_edges.size(); ++i) {
                     if (i > 0) s += ',';
                     s += std::to_string(c.components.bin_edges[i]);
                   }
                   return s;
                 }});
    return f;
  }();
  return table;
}

}  // namespace

bool parse_switch(std::string_view text) {
  if (text == "on" || text == "true" || text == "1") return true;
  if (text == "off" || text == "false" || text == "0") return false;
  throw ConfigError("expected on or off, got '" + std::string(text) + "'");
}

RankGrid parse_rank_grid(std::string_view text) {
  const auto parts = split(text, 'x');
  if (parts.size() != 3) throw ConfigError("rank grid must look like PxQxR, got '" + std::string(text) + "'");
  RankGrid g{parse_number<int>("ranks", parts[0]), parse_number<int>("ranks", parts[1]),
             parse_number<int>("ranks", parts[2])};
  try {
    g.validate();
  } catch (const InvalidArgument& e) {
    throw ConfigError(e.what());
  }
  return g;
}

const std::vector<std::string>& config_keys() {
  static const std::vector<std::string> keys = [] {
    std::vector<std::string> k;
    for (const auto& f : fields()) k.push_back(f.key);
    return k;
  }();
  return keys;
}

void ExperimentConfig::set(std::string_view key, std::string_view value) {
  for (const auto& f : fields()) {
    if (f.key == key) {
      f.set(*this, value);
      return;
    }
  }
  throw ConfigError("unknown key '" + std::string(key) + "'");
}

std::string ExperimentConfig::to_text() const {
  std::string out;
  for (const auto& f : fields()) out += f.key + " = " + f.get(*this) + "\n";
  return out;
}

AcquisitionParams ExperimentConfig::acquisition() const {
  AcquisitionParams p = scan_mode == ScanMode::Normal
                            ? AcquisitionParams::normal(n_proj, n_rows, n_chan, pixel_pitch)
                            : AcquisitionParams::offset(n_proj, n_rows, n_chan, offset_chan, pixel_pitch);
  if (angle_span) p.angle_span = *angle_span;
  return p;
}

VolumeDims ExperimentConfig::dims() const {
  VolumeDims d = matching_dims(acquisition());
  d.voxel_pitch = pixel_pitch;
  return d;
}

SpecimenSet ExperimentConfig::specimen_set() const {
  std::vector<Specimen> list;
  for (int i = 0; i < specimens; ++i) list.push_back({acquisition(), dims(), "specimen" + std::to_string(i)});
  return SpecimenSet(std::move(list));
}

PipelineConfig ExperimentConfig::pipeline() const {
  PipelineConfig p;
  p.grid = grid;
  p.group_size = group_size;
  p.mapping = mapping;
  p.overlap = overlap;
  p.fuse_ai = fuse;
  p.retain_volume = retain_volume;
  p.filter = filter;
  p.back_projection.overlap_band = overlap_band;
  p.window = window;
  p.sap = sap;
  p.compute_rate = compute_rate;
  p.memory_per_rank = memory_per_rank;
  p.schedule_seed = seed;
  return p;
}

FabricConfig ExperimentConfig::fabric_config() const {
  FabricConfig f = fabric;
  f.n_ranks = grid.total();
  f.schedule_seed = seed;
  return f;
}

ThresholdSegmenter ExperimentConfig::segmenter() const {
  if (thresholds) return ThresholdSegmenter(*thresholds);
  return ThresholdSegmenter::from_attenuation(microstructure.attenuation, window);
}

void ExperimentConfig::validate() const {
  try {
    require(specimens >= 1, "specimens must be >= 1");
    require(aggregate_fraction >= 0.0 && pore_fraction >= 0.0 && aggregate_fraction + pore_fraction < 1.0,
            "phase fractions must be >= 0 and sum below 1");
    require(projector_supersample >= 1, "projector_supersample must be >= 1");
    require(overlap_band > 0.0, "overlap_band must be > 0");
    require(compute_rate > 0.0, "compute_rate must be > 0");
    acquisition().validate();
    dims().validate();
    degradation.validate();
    filter.validate(n_chan);
    window.validate();
    grid.validate();
    require(grid.p_row <= n_rows, "p_row exceeds n_rows");
    require(grid.p_proj <= n_proj, "p_proj exceeds n_proj");
    tile_slices(n_chan, n_chan, grid.p_slice);
    require(group_size >= 1, "group_size must be >= 1");
    fabric_config().validate();
    storage.validate();
    sap.validate();
    segmenter();
    require(components.connectivity == 6 || components.connectivity == 26, "connectivity must be 6 or 26");
  } catch (const ConfigError&) {
    throw;
  } catch (const Error& e) {
    throw ConfigError(e.what());
  }
}

ExperimentConfig parse_config(std::string_view text, ExperimentConfig base) {
  int line_no = 0;
  for (auto line : split(text, '\n')) {
    ++line_no;
    if (const auto hash = line.find('#'); hash != std::string_view::npos) line = trim(line.substr(0, hash));
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string_view::npos) {
      throw ConfigError("line " + std::to_string(line_no) + ": expected key = value");
    }
    try {
      base.set(trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
    } catch (const ConfigError& e) {
      throw ConfigError("line " + std::to_string(line_no) + ": " + std::string(e.what()).substr(8));
    }
  }
  return base;
}

ExperimentConfig load_config(const std::filesystem::path& path, ExperimentConfig base) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config '" + path.string() + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str(), std::move(base));
}

}  // namespace tomofuse
