#include <gtest/gtest.h>

#include <algorithm>
#include <map>
#include <set>

#include "oracles.hpp"
#include "tomofuse/partition.hpp"

using namespace tomofuse;

namespace {

SpecimenSet one_normal(int n_proj, int n_rows, int n_chan) {
  const auto p = AcquisitionParams::normal(n_proj, n_rows, n_chan);
  return SpecimenSet({{p, matching_dims(p), "s0"}});
}

// Four offset-scan specimens, the fixture used for the mapping comparison.
SpecimenSet canonical_offset() {
  std::vector<Specimen> v;
  for (int i = 0; i < 4; ++i) {
    const auto p = AcquisitionParams::offset(32, 8, 64, 16);
    v.push_back({p, matching_dims(p), "offset" + std::to_string(i)});
  }
  return SpecimenSet(std::move(v));
}

}  // namespace

TEST(SplitRange, remainder_goes_to_leading_pieces) {
  const auto r = split_range({0, 10}, 3);
  ASSERT_EQ(r.size(), 3u);
  EXPECT_EQ(r[0], (IndexRange{0, 4}));
  EXPECT_EQ(r[1], (IndexRange{4, 7}));
  EXPECT_EQ(r[2], (IndexRange{7, 10}));
}

TEST(TileSlices, near_square_and_exact_cover) {
  for (int p : {1, 2, 3, 4, 5, 7, 9}) {
    const auto tiles = tile_slices(17, 13, p);
    ASSERT_EQ(static_cast<int>(tiles.size()), p);
    std::vector<int> hit(17 * 13, 0);
    for (const auto& t : tiles) {
      EXPECT_FALSE(t.empty());
      for (int y = t.y0; y < t.y1; ++y) {
        for (int x = t.x0; x < t.x1; ++x) ++hit[y * 17 + x];
      }
    }
    for (int h : hit) EXPECT_EQ(h, 1) << p;
  }
  EXPECT_THROW(tile_slices(2, 2, 5), InvalidArgument);
}

TEST(Partition, single_specimen_two_row_slabs) {
  const auto plan = partition_specimens(one_normal(8, 6, 16), {2, 1, 1}, 1);
  ASSERT_EQ(plan.groups.size(), 2u);
  for (const auto& g : plan.groups) {
    ASSERT_EQ(g.slabs.size(), 1u);
    EXPECT_EQ(plan.slabs[g.slabs[0]].rows.size(), 3);
  }
}

TEST(Partition, greedy_packing_within_bound) {
  // Costs 3:1 via row counts; two slabs each, group_size 2 gives 2 groups.
  const auto a = AcquisitionParams::normal(8, 6, 16);
  const auto b = AcquisitionParams::normal(8, 2, 16);
  const SpecimenSet set({{a, matching_dims(a), "a"}, {b, matching_dims(b), "b"}});
  const auto plan = partition_specimens(set, {2, 1, 1}, 2);
  ASSERT_EQ(plan.groups.size(), 2u);
  std::vector<double> cost;
  for (const auto& g : plan.groups) {
    double c = 0.0;
    for (int s : g.slabs) c += plan.slabs[s].cost;
    cost.push_back(c);
  }
  const double ratio = *std::max_element(cost.begin(), cost.end()) / *std::min_element(cost.begin(), cost.end());
  EXPECT_LE(ratio, 1.5);
}

TEST(Partition, units_cover_every_voxel_once_per_angle_chunk) {
  const auto set = canonical_offset();
  const auto plan = partition_specimens(set, {2, 4, 3}, 2);
  // (specimen, chunk) -> per-voxel hit counts
  std::map<std::pair<int, int>, std::vector<int>> hits;
  std::map<int, std::set<std::pair<int, int>>> chunks;
  for (const auto& g : plan.groups) {
    ASSERT_EQ(g.units.size(), g.ranks.size());
    for (const auto& u : g.units) {
      const auto& d = set[u.specimen].dims;
      auto& h = hits[{u.specimen, u.angle_chunk}];
      h.resize(d.voxel_count(), 0);
      for (int z = u.rows.begin; z < u.rows.end; ++z) {
        for (int y = u.tile.y0; y < u.tile.y1; ++y) {
          for (int x = u.tile.x0; x < u.tile.x1; ++x) ++h[(static_cast<std::size_t>(z) * d.ny + y) * d.nx + x];
        }
      }
      chunks[u.specimen].insert({u.angles.begin, u.angles.end});
    }
  }
  EXPECT_EQ(hits.size(), 4u * 4u);
  for (const auto& [key, h] : hits) {
    for (int v : h) ASSERT_EQ(v, 1);
  }
  for (const auto& [s, c] : chunks) {
    int next = 0;
    for (const auto& [b, e] : c) {
      EXPECT_EQ(b, next);
      next = e;
    }
    EXPECT_EQ(next, set[s].acquisition.n_proj);
  }
}

TEST(Partition, rejects_oversized_grids) {
  EXPECT_THROW(partition_specimens(one_normal(8, 2, 16), {3, 1, 1}, 1), InvalidArgument);
  EXPECT_THROW(partition_specimens(one_normal(2, 2, 16), {1, 3, 1}, 1), InvalidArgument);
  EXPECT_THROW(partition_specimens(one_normal(8, 2, 16), {1, 1, 1}, 0), InvalidArgument);
}

TEST(Workload, normal_centered_tile_counts_every_pair) {
  const auto p = AcquisitionParams::normal(12, 4, 32);
  const WorkUnit u{0, 0, 0, 0, {0, 4}, {0, 12}, Tile{8, 24, 8, 24}};
  EXPECT_DOUBLE_EQ(workload_model(u, p, matching_dims(p)), 12.0 * 256.0 * 4.0);
}

TEST(Workload, empty_angle_chunk_costs_nothing) {
  const auto p = AcquisitionParams::normal(12, 4, 32);
  EXPECT_EQ(workload_model(WorkUnit{0, 0, 0, 0, {0, 4}, {3, 3}, Tile{0, 32, 0, 32}}, p, matching_dims(p)), 0.0);
}

TEST(Workload, offset_uncovered_side_costs_less_than_mirror) {
  const auto p = AcquisitionParams::offset(16, 1, 32, 8);
  const auto d = matching_dims(p);
  const WorkUnit far{0, 0, 0, 0, {0, 1}, {0, 2}, Tile{24, 32, 0, 32}};
  const WorkUnit near{0, 0, 0, 0, {0, 1}, {0, 2}, Tile{0, 8, 0, 32}};
  EXPECT_NE(workload_model(far, p, d), workload_model(near, p, d));
  const double a = workload_model(far, p, d), b = workload_model(near, p, d);
  EXPECT_EQ(std::min(a, b), oracle::footprint(a < b ? far : near, p, d));
  EXPECT_LT(std::min(a, b), std::max(a, b));
}

TEST(Workload, matches_brute_force_exhaustively) {
  for (int n : {5, 8, 13, 32}) {
    for (int offset : {0, 1, n / 4}) {
      if (offset >= n / 2 && offset != 0) continue;
      const auto p = offset == 0 ? AcquisitionParams::normal(16, 2, n) : AcquisitionParams::offset(16, 2, n, offset);
      const auto d = matching_dims(p);
      for (const auto& tile : tile_slices(n, n, 4)) {
        for (const auto& angles : split_range({0, 16}, 3)) {
          const WorkUnit u{0, 0, 0, 0, {0, 2}, angles, tile};
          ASSERT_EQ(workload_model(u, p, d), oracle::footprint(u, p, d)) << n << " " << offset;
        }
      }
    }
  }
}

TEST(MapCyclic, single_group_matches_block) {
  const auto block = partition_specimens(one_normal(8, 2, 16), {1, 2, 2}, 1);
  const auto cyc = map_cyclic(block);
  ASSERT_EQ(block.groups.size(), 1u);
  EXPECT_EQ(cyc.groups[0].ranks, block.groups[0].ranks);
  EXPECT_EQ(cyc.strategy, MappingStrategy::Cyclic);
}

TEST(MapCyclic, latin_square_over_groups) {
  GroupPlan block;
  block.grid = {1, 4, 1};
  for (int g = 0; g < 4; ++g) {
    Group group;
    group.units.resize(4);
    group.ranks = {0, 1, 2, 3};
    block.groups.push_back(group);
  }
  const auto cyc = map_cyclic(block);
  for (int r = 0; r < 4; ++r) {
    std::set<int> positions;
    for (const auto& g : cyc.groups) {
      for (int i = 0; i < 4; ++i) {
        if (g.ranks[i] == r) positions.insert(i);
      }
    }
    EXPECT_EQ(positions.size(), 4u) << r;
  }
}

TEST(MapCyclic, rank_loads_within_one_unit_per_group) {
  const auto cyc = map_cyclic(partition_specimens(canonical_offset(), {2, 4, 3}, 2));
  for (const auto& g : cyc.groups) {
    std::vector<int> n(static_cast<std::size_t>(cyc.total_ranks()), 0);
    for (int r : g.ranks) ++n[r];
    EXPECT_LE(*std::max_element(n.begin(), n.end()) - *std::min_element(n.begin(), n.end()), 1);
  }
}

TEST(Imbalance, equal_costs_are_perfectly_balanced) {
  GroupPlan plan;
  plan.grid = {1, 2, 1};
  Group g;
  g.units = {WorkUnit{}, WorkUnit{}};
  g.units[0].est_cost = g.units[1].est_cost = 4.0;
  g.ranks = {0, 1};
  plan.groups.push_back(g);
  EXPECT_DOUBLE_EQ(imbalance(plan).overall.max_over_mean, 1.0);
  EXPECT_DOUBLE_EQ(imbalance(plan).overall.cv, 0.0);
}

TEST(Imbalance, three_to_one_is_one_and_a_half) {
  GroupPlan plan;
  plan.grid = {1, 2, 1};
  Group g;
  g.units = {WorkUnit{}, WorkUnit{}};
  g.units[0].est_cost = 3.0;
  g.units[1].est_cost = 1.0;
  g.ranks = {0, 1};
  plan.groups.push_back(g);
  const auto r = imbalance(plan);
  EXPECT_DOUBLE_EQ(r.overall.max_over_mean, 1.5);
  EXPECT_DOUBLE_EQ(r.per_group[0].max_over_mean, 1.5);
  EXPECT_THROW(imbalance(GroupPlan{}), InvalidArgument);
}

TEST(Imbalance, cyclic_beats_block_on_offset_fixture) {
  const auto block = partition_specimens(canonical_offset(), {2, 4, 3}, 2);
  const auto cyc = map_cyclic(block);
  EXPECT_LT(imbalance(cyc).overall.max_over_mean, imbalance(block).overall.max_over_mean);
}

TEST(Imbalance, cyclic_never_worse_when_groups_are_permutations) {
  for (int p_slice : {1, 2, 3, 4}) {
    const auto block = partition_specimens(canonical_offset(), {2, 4, p_slice}, 2);
    EXPECT_LE(imbalance(map_cyclic(block)).overall.max_over_mean, imbalance(block).overall.max_over_mean + 1e-12);
  }
}

TEST(PlanJson, mentions_every_group_and_strategy) {
  const auto set = canonical_offset();
  const auto json = plan_to_json(map_cyclic(partition_specimens(set, {2, 2, 1}, 2)), set);
  EXPECT_NE(json.find("\"strategy\": \"cyclic\""), std::string::npos) << json.substr(0, 200);
  EXPECT_NE(json.find("offset3"), std::string::npos);
}
