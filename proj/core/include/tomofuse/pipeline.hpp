#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "tomofuse/fbp.hpp"
#include "tomofuse/partition.hpp"
#include "tomofuse/ranksim.hpp"
#include "tomofuse/segfuse.hpp"
#include "tomofuse/sinogram.hpp"

namespace tomofuse {

enum class Stage { Load = 0, Comp = 1, Comm = 2, Store = 3 };
inline constexpr int kStageCount = 4;

std::string_view to_string(Stage stage);

struct StageRecord {
  int group = 0;
  Stage stage = Stage::Load;
  double start = 0.0;
  double end = 0.0;
  std::size_t bytes = 0;         // storage bytes touched (all tiers, read + written)
  std::size_t fabric_bytes = 0;  // link bytes of the stage's collectives
  double flops = 0.0;
};

struct StageTrace {
  std::vector<StageRecord> records;  // execution order
  std::size_t voxels = 0;            // reconstructed voxels over all specimens
  std::size_t sinogram_bytes = 0;    // raw projection bytes read from the PFS
  std::size_t pfs_bytes_read = 0;
  std::size_t pfs_bytes_written = 0;

  double makespan() const;
  /// Per-group stage durations, indexed [group][stage].
  std::vector<std::array<double, kStageCount>> stage_times() const;
  /// group,stage,start,end,bytes,flops
  std::string csv() const;
};

struct PipelineConfig {
  RankGrid grid;
  int group_size = 1;
  MappingStrategy mapping = MappingStrategy::Cyclic;
  bool overlap = true;
  bool fuse_ai = false;
  /// With fuse_ai, also write the u16 volume to the PFS.
  bool retain_volume = false;

  FilterSpec filter;
  BackProjectOptions back_projection;
  double i0 = 0.0;  // > 0: inputs are raw counts
  HuWindow window{0.0, 0.005};
  SapOptions sap;

  double compute_rate = 5.0e10;            // flops/s per rank
  std::size_t memory_per_rank = 8ull << 30;  // bytes of resident sinogram chunks and partial volumes
  std::uint64_t schedule_seed = 0;

  void validate() const;
};

struct PipelineResult {
  std::vector<Volume<float>> volumes;           // per specimen, before quantization
  std::vector<Volume<std::uint16_t>> quantized;
  std::vector<Volume<std::uint8_t>> masks;      // per specimen when fuse_ai
  StageTrace trace;
  GroupPlan plan;
  double makespan = 0.0;
  double predicted_makespan = 0.0;
  double flops = 0.0;
  std::size_t fused_payload_bytes = 0;  // step-2 patch payload of fused inference
  std::size_t fused_raw_bytes = 0;      // u16 bytes of the slices it replaced
};

/// Four-stage reconstruction over the group plan:
///   Load   sinogram slabs PFS -> staging, once per group
///   Comp   per (slab, angle chunk): staging read, broadcast to the slice-tile
///          ranks, preprocess + filter once, back-project every tile
///   Comm   per (slab, tile): reduce_scatter_block of the angle-chunk partials
///   Store  quantize; write u16 to the PFS, or run fused inference and write
///          the 2-bit masks
///
/// Stage timing follows the flow-shop recurrence
///   end[g][s] = max(end[g][s-1], end[g-1][s]) + t_s(g)
/// with overlap, and a serial sum without it. With overlap the ready tasks are
/// executed in a seeded random order; results do not depend on it.
///
/// `sinograms[i]` holds the full acquisition of specimen i. `segmenter` is
/// required when fuse_ai is set.
PipelineResult run_pipeline(const SpecimenSet& set, const std::vector<Sinogram>& sinograms,
                            const PipelineConfig& config, Fabric& fabric, StorageModel& storage,
                            const Segmenter* segmenter = nullptr);

/// Sum of the first group's stage times plus the slowest stage of every later group.
double makespan_model(const std::vector<std::array<double, kStageCount>>& stage_times);

/// Executed flow-shop makespan of the given stage times.
double flow_shop_makespan(const std::vector<std::array<double, kStageCount>>& stage_times);

struct IoAudit {
  std::size_t pfs_bytes_read = 0;
  std::size_t pfs_bytes_written = 0;
  /// sinogram read + u16 volume write + u16 volume read + 32-bit mask write
  std::size_t staged_bytes = 0;
  std::size_t fused_bytes = 0;
  double savings = 0.0;  // 1 - fused / staged; 0 without fusion
  bool degenerate = false;
};

IoAudit io_audit(const StageTrace& trace, bool fuse_ai);

/// max |a - b| / max |reference| over all voxels (0 when both are zero).
double max_relative_error(const Volume<float>& a, const Volume<float>& reference);

}  // namespace tomofuse
