#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "tomofuse/fbp.hpp"
#include "tomofuse/geometry.hpp"
#include "tomofuse/partition.hpp"
#include "tomofuse/phantom.hpp"
#include "tomofuse/pipeline.hpp"
#include "tomofuse/ranksim.hpp"
#include "tomofuse/segfuse.hpp"

namespace tomofuse {

/// Every tunable of an experiment. Defaults form the 256^3 preset.
struct ExperimentConfig {
  std::uint64_t seed = 1;
  int specimens = 1;

  // acquisition
  int n_proj = 256;
  int n_rows = 256;
  int n_chan = 256;
  double pixel_pitch = 6.0;
  ScanMode scan_mode = ScanMode::Normal;
  int offset_chan = 0;
  std::optional<double> angle_span;  // pi for normal scans, 2 pi for offset scans

  // phantom
  double aggregate_fraction = 0.35;
  double pore_fraction = 0.03;
  MicrostructureOptions microstructure;
  int projector_supersample = 2;

  // degradation
  bool noise = true;
  DegradationSpec degradation;

  // reconstruction
  FilterSpec filter;
  double overlap_band = 32.0;
  HuWindow window{0.0, 0.005};

  // distribution
  RankGrid grid;
  int group_size = 1;
  MappingStrategy mapping = MappingStrategy::Cyclic;
  bool overlap = true;
  bool fuse = false;
  bool retain_volume = false;
  double compute_rate = 5.0e10;
  std::size_t memory_per_rank = 8ull << 30;
  FabricConfig fabric;
  StorageConfig storage;

  // segmentation
  SapOptions sap;
  std::optional<std::array<std::uint16_t, 3>> thresholds;  // derived from the attenuation when unset
  ComponentOptions components;

  AcquisitionParams acquisition() const;
  VolumeDims dims() const;
  SpecimenSet specimen_set() const;
  PipelineConfig pipeline() const;
  ThresholdSegmenter segmenter() const;
  FabricConfig fabric_config() const;

  /// Applies one key = value pair; throws ConfigError on unknown keys or bad values.
  void set(std::string_view key, std::string_view value);
  /// Cross-field validation through the owning modules; throws ConfigError.
  void validate() const;
  /// Round-trippable key = value rendering.
  std::string to_text() const;
};

/// Parses "key = value" lines; '#' starts a comment. Later keys override earlier ones.
ExperimentConfig parse_config(std::string_view text, ExperimentConfig base = {});
ExperimentConfig load_config(const std::filesystem::path& path, ExperimentConfig base = {});

/// Names accepted by ExperimentConfig::set, in to_text() order.
const std::vector<std::string>& config_keys();

RankGrid parse_rank_grid(std::string_view text);
bool parse_switch(std::string_view text);

}  // namespace tomofuse
