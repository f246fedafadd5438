#pragma once

#include <string>
#include <vector>

#include "tomofuse/array.hpp"
#include "tomofuse/geometry.hpp"

namespace tomofuse {

struct RankGrid {
  int p_row = 1;
  int p_proj = 1;
  int p_slice = 1;

  int total() const { return p_row * p_proj * p_slice; }
  void validate() const;
  friend bool operator==(const RankGrid&, const RankGrid&) = default;
};

/// One back-projection task: a row slab of one specimen, an angle chunk and a
/// slice tile.
struct WorkUnit {
  int specimen = 0;
  int slab = 0;  // global slab index in GroupPlan::slabs
  int angle_chunk = 0;
  int tile_index = 0;
  IndexRange rows;
  IndexRange angles;
  Tile tile;
  double est_cost = 0.0;
};

struct RowSlab {
  int specimen = 0;
  IndexRange rows;
  double cost = 0.0;
};

struct Group {
  std::vector<int> slabs;       // indices into GroupPlan::slabs, ascending
  std::vector<WorkUnit> units;  // slab-major, then angle chunk, then tile
  std::vector<int> ranks;       // rank of units[i]
};

enum class MappingStrategy { Block, Cyclic };

/// Work units batched into groups (pipeline waves) and mapped to ranks.
struct GroupPlan {
  RankGrid grid;
  int group_size = 1;
  MappingStrategy strategy = MappingStrategy::Block;
  std::vector<RowSlab> slabs;
  std::vector<Group> groups;

  int total_ranks() const { return grid.total(); }
};

/// Splits [r.begin, r.end) into `parts` contiguous pieces; the first
/// (size % parts) pieces are one longer.
std::vector<IndexRange> split_range(IndexRange r, int parts);

/// Near-square tiling of an nx x ny slice into exactly p_slice tiles:
/// ceil(sqrt(p_slice)) columns per tile row, the last tile row taking the rest.
std::vector<Tile> tile_slices(int nx, int ny, int p_slice);

/// Number of (angle, voxel) pairs of the unit whose ray lands on the detector,
/// t in [0, n_chan). Counted per angle and tile row by clipping the monotone
/// ray coordinate, so the result matches brute-force enumeration exactly.
double workload_model(const WorkUnit& unit, const AcquisitionParams& params, const VolumeDims& dims);

/// Splits each specimen into p_row row slabs, packs slabs into groups of
/// `group_size` (longest-processing-time first, lowest index on ties), and
/// decomposes every slab into p_proj angle chunks x p_slice tiles. Units are
/// mapped with the Block strategy: unit i of a group goes to rank i mod total.
GroupPlan partition_specimens(const SpecimenSet& set, const RankGrid& grid, int group_size);

/// Remaps unit i of group g to rank (i + g) mod total.
GroupPlan map_cyclic(const GroupPlan& plan);

struct Imbalance {
  double max_over_mean = 1.0;
  double cv = 0.0;
};

struct ImbalanceReport {
  std::vector<Imbalance> per_group;
  Imbalance overall;
  std::vector<double> rank_costs;  // summed over groups
};

/// Rank-load statistics of a plan (mean taken over all ranks).
ImbalanceReport imbalance(const GroupPlan& plan);

/// JSON rendering of a plan (schema documented in README).
std::string plan_to_json(const GroupPlan& plan, const SpecimenSet& set);

}  // namespace tomofuse
