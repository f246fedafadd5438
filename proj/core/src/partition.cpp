#include "tomofuse/partition.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <ranges>

#include <json.hpp>

#include "tomofuse/error.hpp"

namespace tomofuse {

void RankGrid::validate() const {
  require(p_row >= 1 && p_proj >= 1 && p_slice >= 1, "rank grid dimensions must be >= 1");
}

std::vector<IndexRange> split_range(IndexRange r, int parts) {
  require(parts >= 1, "split_range needs parts >= 1");
  std::vector<IndexRange> out;
  out.reserve(static_cast<std::size_t>(parts));
  const int n = r.size();
  const int base = n / parts;
  const int extra = n % parts;
  int at = r.begin;
  for (int i = 0; i < parts; ++i) {
    const int len = base + (i < extra ? 1 : 0);
    out.push_back({at, at + len});
    at += len;
  }
  return out;
}

std::vector<Tile> tile_slices(int nx, int ny, int p_slice) {
  require(p_slice >= 1, "p_slice must be >= 1");
  const int cols = static_cast<int>(std::ceil(std::sqrt(static_cast<double>(p_slice))));
  const int tile_rows = (p_slice + cols - 1) / cols;
  require(nx >= cols && ny >= tile_rows, "slice too small for p_slice tiles");
  std::vector<Tile> tiles;
  const auto ys = split_range({0, ny}, tile_rows);
  for (int tr = 0; tr < tile_rows; ++tr) {
    const int in_row = std::min(cols, p_slice - tr * cols);
    for (const auto& xs : split_range({0, nx}, in_row)) {
      tiles.push_back(Tile{xs.begin, xs.end, ys[static_cast<std::size_t>(tr)].begin,
                           ys[static_cast<std::size_t>(tr)].end});
    }
  }
  return tiles;
}

double workload_model(const WorkUnit& unit, const AcquisitionParams& params, const VolumeDims& dims) {
  if (unit.angles.empty() || unit.rows.empty() || unit.tile.empty()) return 0.0;
  const double limit = static_cast<double>(params.n_chan);
  auto xs = std::views::iota(unit.tile.x0, unit.tile.x1);
  // First x of the tile row for which `pred` is false (pred must be monotone).
  auto first_false = [&](auto pred) {
    return unit.tile.x0 + static_cast<int>(std::ranges::distance(xs.begin(), std::ranges::partition_point(xs, pred)));
  };
  std::int64_t pairs = 0;
  for (int k = unit.angles.begin; k < unit.angles.end; ++k) {
    const double theta = params.angle(k);
    const bool rising = std::cos(theta) >= 0.0;
    for (int y = unit.tile.y0; y < unit.tile.y1; ++y) {
      auto t = [&](int x) { return ray_coordinate(x, y, theta, params, dims); };
      int lo = 0;
      int hi = 0;
      if (rising) {
        lo = first_false([&](int x) { return t(x) < 0.0; });
        hi = first_false([&](int x) { return t(x) < limit; });
      } else {
        lo = first_false([&](int x) { return t(x) >= limit; });
        hi = first_false([&](int x) { return t(x) >= 0.0; });
      }
      pairs += std::max(0, hi - lo);
    }
  }
  return static_cast<double>(pairs) * static_cast<double>(unit.rows.size());
}

GroupPlan partition_specimens(const SpecimenSet& set, const RankGrid& grid, int group_size) {
  set.validate();
  grid.validate();
  require(group_size >= 1, "group size must be >= 1");
  for (const auto& s : set.specimens()) {
    if (grid.p_row > s.acquisition.n_rows || grid.p_proj > s.acquisition.n_proj) {
      throw InvalidArgument("rank grid larger than available work for specimen '" + s.id + "'");
    }
    const int cols = static_cast<int>(std::ceil(std::sqrt(static_cast<double>(grid.p_slice))));
    if (cols > s.dims.nx || (grid.p_slice + cols - 1) / cols > s.dims.ny) {
      throw InvalidArgument("p_slice tiling larger than the slices of specimen '" + s.id + "'");
    }
  }

  GroupPlan plan;
  plan.grid = grid;
  plan.group_size = group_size;
  plan.strategy = MappingStrategy::Block;

  for (std::size_t si = 0; si < set.size(); ++si) {
    const auto& s = set[si];
    for (const auto& rows : split_range({0, s.acquisition.n_rows}, grid.p_row)) {
      WorkUnit whole{static_cast<int>(si), 0, 0, 0, rows, {0, s.acquisition.n_proj}, {0, s.dims.nx, 0, s.dims.ny}, 0.0};
      plan.slabs.push_back({static_cast<int>(si), rows, workload_model(whole, s.acquisition, s.dims)});
    }
  }

  const int n_slabs = static_cast<int>(plan.slabs.size());
  const int n_groups = (n_slabs + group_size - 1) / group_size;
  std::vector<int> order(static_cast<std::size_t>(n_slabs));
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](int a, int b) {
    return plan.slabs[static_cast<std::size_t>(a)].cost > plan.slabs[static_cast<std::size_t>(b)].cost;
  });

  plan.groups.resize(static_cast<std::size_t>(n_groups));
  std::vector<double> load(static_cast<std::size_t>(n_groups), 0.0);
  for (int slab : order) {
    int best = -1;
    for (int g = 0; g < n_groups; ++g) {
      if (static_cast<int>(plan.groups[static_cast<std::size_t>(g)].slabs.size()) >= group_size) continue;
      if (best < 0 || load[static_cast<std::size_t>(g)] < load[static_cast<std::size_t>(best)]) best = g;
    }
    plan.groups[static_cast<std::size_t>(best)].slabs.push_back(slab);
    load[static_cast<std::size_t>(best)] += plan.slabs[static_cast<std::size_t>(slab)].cost;
  }

  const int total = grid.total();
  for (auto& group : plan.groups) {
    std::sort(group.slabs.begin(), group.slabs.end());
    for (int slab_index : group.slabs) {
      const auto& slab = plan.slabs[static_cast<std::size_t>(slab_index)];
      const auto& s = set[static_cast<std::size_t>(slab.specimen)];
      const auto chunks = split_range({0, s.acquisition.n_proj}, grid.p_proj);
      const auto tiles = tile_slices(s.dims.nx, s.dims.ny, grid.p_slice);
      for (int a = 0; a < grid.p_proj; ++a) {
        for (int t = 0; t < grid.p_slice; ++t) {
          WorkUnit u{slab.specimen, slab_index, a, t, slab.rows, chunks[static_cast<std::size_t>(a)],
                     tiles[static_cast<std::size_t>(t)], 0.0};
          u.est_cost = workload_model(u, s.acquisition, s.dims);
          group.ranks.push_back(static_cast<int>(group.units.size()) % total);
          group.units.push_back(u);
        }
      }
    }
  }
  return plan;
}

GroupPlan map_cyclic(const GroupPlan& plan) {
  GroupPlan out = plan;
  const int total = plan.total_ranks();
  for (std::size_t g = 0; g < out.groups.size(); ++g) {
    auto& group = out.groups[g];
    for (std::size_t i = 0; i < group.units.size(); ++i) {
      group.ranks[i] = static_cast<int>((i + g) % static_cast<std::size_t>(total));
    }
  }
  out.strategy = MappingStrategy::Cyclic;
  return out;
}

namespace {

Imbalance stats(const std::vector<double>& costs) {
  const double n = static_cast<double>(costs.size());
  const double mean = std::accumulate(costs.begin(), costs.end(), 0.0) / n;
  if (mean <= 0.0) return {};
  double var = 0.0;
  for (double c : costs) var += (c - mean) * (c - mean);
  var /= n;
  return {*std::max_element(costs.begin(), costs.end()) / mean, std::sqrt(var) / mean};
}

}  // namespace

ImbalanceReport imbalance(const GroupPlan& plan) {
  require(!plan.groups.empty(), "imbalance of an empty plan");
  const auto total = static_cast<std::size_t>(plan.total_ranks());
  ImbalanceReport report;
  report.rank_costs.assign(total, 0.0);
  for (const auto& group : plan.groups) {
    std::vector<double> costs(total, 0.0);
    for (std::size_t i = 0; i < group.units.size(); ++i) {
      costs[static_cast<std::size_t>(group.ranks[i])] += group.units[i].est_cost;
    }
    for (std::size_t r = 0; r < total; ++r) report.rank_costs[r] += costs[r];
    report.per_group.push_back(stats(costs));
  }
  report.overall = stats(report.rank_costs);
  return report;
}

std::string plan_to_json(const GroupPlan& plan, const SpecimenSet& set) {
  using nlohmann::json;
  json j;
  j["grid"] = {{"p_row", plan.grid.p_row}, {"p_proj", plan.grid.p_proj}, {"p_slice", plan.grid.p_slice}};
  j["group_size"] = plan.group_size;
  j["strategy"] = plan.strategy == MappingStrategy::Block ? "block" : "cyclic";
  j["slabs"] = json::array();
  for (const auto& s : plan.slabs) {
    j["slabs"].push_back({{"specimen", set[static_cast<std::size_t>(s.specimen)].id},
                          {"rows", {s.rows.begin, s.rows.end}},
                          {"cost", s.cost}});
  }
  j["groups"] = json::array();
  for (const auto& g : plan.groups) {
    json jg;
    jg["slabs"] = g.slabs;
    jg["units"] = json::array();
    for (std::size_t i = 0; i < g.units.size(); ++i) {
      const auto& u = g.units[i];
      jg["units"].push_back({{"specimen", set[static_cast<std::size_t>(u.specimen)].id},
                             {"slab", u.slab},
                             {"rows", {u.rows.begin, u.rows.end}},
                             {"angles", {u.angles.begin, u.angles.end}},
                             {"tile", {u.tile.x0, u.tile.x1, u.tile.y0, u.tile.y1}},
                             {"cost", u.est_cost},
                             {"rank", g.ranks[i]}});
    }
    j["groups"].push_back(std::move(jg));
  }
  return j.dump(2);
}

}  // namespace tomofuse
