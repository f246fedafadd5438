#include "tomofuse/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <random>
#include <sstream>

#include "tomofuse/error.hpp"

namespace tomofuse {

std::string_view to_string(Stage stage) {
  switch (stage) {
    case Stage::Load:
      return "load";
    case Stage::Comp:
      return "comp";
    case Stage::Comm:
      return "comm";
    case Stage::Store:
      return "store";
  }
  return "?";
}

double StageTrace::makespan() const {
  double m = 0.0;
  for (const auto& r : records) m = std::max(m, r.end);
  return m;
}

std::vector<std::array<double, kStageCount>> StageTrace::stage_times() const {
  int groups = 0;
  for (const auto& r : records) groups = std::max(groups, r.group + 1);
  std::vector<std::array<double, kStageCount>> t(static_cast<std::size_t>(groups), std::array<double, kStageCount>{});
  for (const auto& r : records) {
    t[static_cast<std::size_t>(r.group)][static_cast<std::size_t>(r.stage)] = r.end - r.start;
  }
  return t;
}

std::string StageTrace::csv() const {
  std::ostringstream os;
  os.precision(9);
  os << "group,stage,start,end,bytes,flops\n";
  for (const auto& r : records) {
    os << r.group << ',' << to_string(r.stage) << ',' << r.start << ',' << r.end << ',' << r.bytes << ','
       << r.flops << '\n';
  }
  return os.str();
}

void PipelineConfig::validate() const {
  grid.validate();
  require(group_size >= 1, "group size must be >= 1");
  window.validate();
  require(i0 >= 0.0, "i0 must be >= 0");
  require(compute_rate > 0.0, "compute rate must be > 0");
  require(memory_per_rank > 0, "per-rank memory must be > 0");
  require(back_projection.supersample >= 1, "supersample must be >= 1");
  if (fuse_ai) sap.validate();
}

double makespan_model(const std::vector<std::array<double, kStageCount>>& stage_times) {
  double total = 0.0;
  for (std::size_t g = 0; g < stage_times.size(); ++g) {
    for (double t : stage_times[g]) require(t >= 0.0, "stage times must be >= 0");
    if (g == 0) {
      for (double t : stage_times[g]) total += t;
    } else {
      total += *std::max_element(stage_times[g].begin(), stage_times[g].end());
    }
  }
  return total;
}

double flow_shop_makespan(const std::vector<std::array<double, kStageCount>>& stage_times) {
  std::array<double, kStageCount> prev{};
  for (const auto& t : stage_times) {
    std::array<double, kStageCount> cur{};
    for (int s = 0; s < kStageCount; ++s) {
      const double ready = std::max(s > 0 ? cur[static_cast<std::size_t>(s - 1)] : 0.0, prev[static_cast<std::size_t>(s)]);
      cur[static_cast<std::size_t>(s)] = ready + t[static_cast<std::size_t>(s)];
    }
    prev = cur;
  }
  return prev[kStageCount - 1];
}

IoAudit io_audit(const StageTrace& trace, bool fuse_ai) {
  IoAudit a;
  a.pfs_bytes_read = trace.pfs_bytes_read;
  a.pfs_bytes_written = trace.pfs_bytes_written;
  const std::size_t v = trace.voxels;
  a.staged_bytes = trace.sinogram_bytes + 2 * v + 2 * v + 4 * v;
  a.fused_bytes = trace.pfs_bytes_read + trace.pfs_bytes_written;
  if (v == 0 || a.staged_bytes == 0) {
    a.degenerate = true;
    return a;
  }
  if (fuse_ai) {
    a.savings = 1.0 - static_cast<double>(a.fused_bytes) / static_cast<double>(a.staged_bytes);
  }
  return a;
}

double max_relative_error(const Volume<float>& a, const Volume<float>& reference) {
  if (a.nx() != reference.nx() || a.ny() != reference.ny() || a.nz() != reference.nz()) {
    throw DimensionMismatch("volumes differ in extent");
  }
  double diff = 0.0;
  double scale = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    diff = std::max(diff, std::abs(static_cast<double>(a.data()[i]) - reference.data()[i]));
    scale = std::max(scale, std::abs(static_cast<double>(reference.data()[i])));
  }
  if (scale == 0.0) return diff == 0.0 ? 0.0 : INFINITY;
  return diff / scale;
}

namespace {

struct GroupState {
  std::map<int, Sinogram> staged;     // slab -> raw rows, all angles
  std::vector<PartialVolume> partials;  // per unit
  std::vector<PartialVolume> reduced;   // per (slab position, tile)
};

class Runner {
 public:
  Runner(const SpecimenSet& set, const std::vector<Sinogram>& sinos, const PipelineConfig& cfg, Fabric& fabric,
         StorageModel& storage, const Segmenter* seg)
      : set_(set), sinos_(sinos), cfg_(cfg), fabric_(fabric), storage_(storage), seg_(seg) {}

  PipelineResult run() {
    GroupPlan plan = partition_specimens(set_, cfg_.grid, cfg_.group_size);
    if (cfg_.mapping == MappingStrategy::Cyclic) plan = map_cyclic(plan);
    result_.plan = plan;
    for (const auto& s : set_.specimens()) {
      result_.volumes.emplace_back(s.dims.nx, s.dims.ny, s.dims.nz, 0.0f);
      result_.quantized.emplace_back(s.dims.nx, s.dims.ny, s.dims.nz, std::uint16_t{0});
      if (cfg_.fuse_ai) result_.masks.emplace_back(s.dims.nx, s.dims.ny, s.dims.nz, std::uint8_t{0});
      result_.trace.voxels += s.dims.voxel_count();
    }

    const std::size_t n_groups = plan.groups.size();
    states_.assign(n_groups, GroupState{});
    std::vector<int> next(n_groups, 0);
    std::vector<std::array<double, kStageCount>> end(n_groups, std::array<double, kStageCount>{});
    std::mt19937_64 rng(cfg_.schedule_seed);
    double serial_clock = 0.0;

    for (std::size_t done = 0; done < n_groups * kStageCount; ++done) {
      std::size_t g = 0;
      if (cfg_.overlap) {
        std::vector<std::size_t> ready;
        for (std::size_t i = 0; i < n_groups; ++i) {
          if (next[i] < kStageCount && (i == 0 || next[i - 1] > next[i])) ready.push_back(i);
        }
        g = ready[std::uniform_int_distribution<std::size_t>(0, ready.size() - 1)(rng)];
      } else {
        while (next[g] == kStageCount) ++g;
      }
      const int s = next[g]++;
      StageRecord rec = execute(static_cast<int>(g), static_cast<Stage>(s));
      const double duration = rec.end;
      if (cfg_.overlap) {
        rec.start = std::max(s > 0 ? end[g][static_cast<std::size_t>(s - 1)] : 0.0,
                             g > 0 ? end[g - 1][static_cast<std::size_t>(s)] : 0.0);
      } else {
        rec.start = serial_clock;
      }
      rec.end = rec.start + duration;
      serial_clock = rec.end;
      end[g][static_cast<std::size_t>(s)] = rec.end;
      result_.flops += rec.flops;
      result_.trace.records.push_back(rec);
    }

    result_.trace.pfs_bytes_read = storage_.bytes_read(StorageTier::Pfs) - pfs_read0_;
    result_.trace.pfs_bytes_written = storage_.bytes_written(StorageTier::Pfs) - pfs_written0_;
    result_.makespan = result_.trace.makespan();
    result_.predicted_makespan = makespan_model(result_.trace.stage_times());
    return std::move(result_);
  }

  void snapshot_counters() {
    pfs_read0_ = storage_.bytes_read(StorageTier::Pfs);
    pfs_written0_ = storage_.bytes_written(StorageTier::Pfs);
  }

 private:
  const Group& group(int g) const { return result_.plan.groups[static_cast<std::size_t>(g)]; }
  std::size_t unit_index(std::size_t slab_pos, int chunk, int tile) const {
    const auto& grid = cfg_.grid;
    return (slab_pos * static_cast<std::size_t>(grid.p_proj) + static_cast<std::size_t>(chunk)) *
               static_cast<std::size_t>(grid.p_slice) +
           static_cast<std::size_t>(tile);
  }
  const RowSlab& slab(int index) const { return result_.plan.slabs[static_cast<std::size_t>(index)]; }

  // Returns a record whose `end` holds the stage duration.
  StageRecord execute(int g, Stage stage) {
    StageRecord rec;
    rec.group = g;
    rec.stage = stage;
    const std::size_t fabric_before = fabric_.bytes_moved();
    switch (stage) {
      case Stage::Load:
        load(g, rec);
        break;
      case Stage::Comp:
        compute(g, rec);
        break;
      case Stage::Comm:
        reduce(g, rec);
        break;
      case Stage::Store:
        store(g, rec);
        break;
    }
    rec.fabric_bytes = fabric_.bytes_moved() - fabric_before;
    return rec;
  }

  void load(int g, StageRecord& rec) {
    auto& st = states_[static_cast<std::size_t>(g)];
    for (int si : group(g).slabs) {
      const RowSlab& sl = slab(si);
      const Sinogram& full = sinos_[static_cast<std::size_t>(sl.specimen)];
      Sinogram block = full.block({0, full.params().n_proj}, sl.rows);
      const std::size_t bytes = block.byte_size();
      rec.end += storage_.read(StorageTier::Pfs, bytes);
      rec.end += storage_.write(StorageTier::Staging, bytes);
      rec.bytes += 2 * bytes;
      result_.trace.sinogram_bytes += bytes;
      st.staged.emplace(si, std::move(block));
    }
  }

  void compute(int g, StageRecord& rec) {
    auto& st = states_[static_cast<std::size_t>(g)];
    const Group& grp = group(g);
    const auto& grid = cfg_.grid;
    st.partials.assign(grp.units.size(), PartialVolume{});
    std::vector<double> rank_flops(static_cast<std::size_t>(grid.total()), 0.0);
    std::vector<std::size_t> rank_memory(static_cast<std::size_t>(grid.total()), 0);
    double collective_time = 0.0;

    for (std::size_t sp = 0; sp < grp.slabs.size(); ++sp) {
      const int si = grp.slabs[sp];
      const RowSlab& sl = slab(si);
      const Specimen& spec = set_[static_cast<std::size_t>(sl.specimen)];
      const Sinogram& staged = st.staged.at(si);
      for (int a = 0; a < grid.p_proj; ++a) {
        const WorkUnit& head = grp.units[unit_index(sp, a, 0)];
        Sinogram chunk = staged.block(head.angles, sl.rows);
        const std::size_t chunk_bytes = chunk.byte_size();
        rec.end += storage_.read(StorageTier::Staging, chunk_bytes);
        rec.bytes += chunk_bytes;

        std::vector<int> members;
        for (int t = 0; t < grid.p_slice; ++t) members.push_back(grp.ranks[unit_index(sp, a, t)]);
        collective_time += fabric_
                               .broadcast(members.front(), std::as_bytes(std::span<const float>(chunk.samples())),
                                          members)
                               .time;

        // Preprocessing and filtering are per line, so one filtered copy
        // serves every tile of the chunk.
        const Sinogram depth = cfg_.i0 > 0.0 ? preprocess(chunk, cfg_.i0) : std::move(chunk);
        const Sinogram filtered = ramp_filter(depth, cfg_.filter);
        for (int t = 0; t < grid.p_slice; ++t) {
          const std::size_t ui = unit_index(sp, a, t);
          const WorkUnit& u = grp.units[ui];
          const auto rank = static_cast<std::size_t>(grp.ranks[ui]);
          rank_memory[rank] += chunk_bytes + u.tile.area() * static_cast<std::size_t>(u.rows.size()) * sizeof(float);
          if (rank_memory[rank] > cfg_.memory_per_rank) {
            throw ResourceError("group " + std::to_string(g) + " exceeds the per-rank memory budget on rank " +
                                std::to_string(rank));
          }
          st.partials[ui] = back_project(filtered, spec.dims, u.rows, u.angles, u.tile, cfg_.back_projection);
          const double flops = 32.0 * static_cast<double>(u.angles.size()) * static_cast<double>(u.tile.area()) *
                               static_cast<double>(u.rows.size());
          rec.flops += flops;
          rank_flops[rank] += 32.0 * u.est_cost;
        }
      }
      st.staged.erase(si);
    }
    const double slowest = *std::max_element(rank_flops.begin(), rank_flops.end());
    rec.end += collective_time + slowest / cfg_.compute_rate;
  }

  void reduce(int g, StageRecord& rec) {
    auto& st = states_[static_cast<std::size_t>(g)];
    const Group& grp = group(g);
    const auto& grid = cfg_.grid;
    const auto p = static_cast<std::size_t>(grid.p_proj);
    st.reduced.assign(grp.slabs.size() * static_cast<std::size_t>(grid.p_slice), PartialVolume{});
    for (std::size_t sp = 0; sp < grp.slabs.size(); ++sp) {
      for (int t = 0; t < grid.p_slice; ++t) {
        const WorkUnit& u0 = grp.units[unit_index(sp, 0, t)];
        const std::size_t area = u0.tile.area();
        const auto rows = static_cast<std::size_t>(u0.rows.size());
        const std::size_t padded = (rows + p - 1) / p * p * area;
        std::vector<std::vector<float>> contributions;
        std::vector<int> members;
        for (int a = 0; a < grid.p_proj; ++a) {
          const std::size_t ui = unit_index(sp, a, t);
          auto& data = st.partials[ui].data;
          data.resize(padded, 0.0f);
          contributions.push_back(std::move(data));
          members.push_back(grp.ranks[ui]);
        }
        auto rs = fabric_.reduce_scatter_block(contributions, members);
        rec.end += rs.time;
        PartialVolume out(u0.tile, u0.rows);
        std::size_t at = 0;
        for (const auto& block : rs.blocks) {
          const std::size_t take = std::min(block.size(), out.data.size() - at);
          std::copy_n(block.begin(), take, out.data.begin() + static_cast<std::ptrdiff_t>(at));
          at += take;
        }
        st.reduced[sp * static_cast<std::size_t>(grid.p_slice) + static_cast<std::size_t>(t)] = std::move(out);
      }
    }
    st.partials.clear();
  }

  void store(int g, StageRecord& rec) {
    auto& st = states_[static_cast<std::size_t>(g)];
    const Group& grp = group(g);
    const auto& grid = cfg_.grid;
    std::vector<SliceTile> tiles;
    struct Target {
      int specimen;
    };
    std::vector<Target> targets;

    for (std::size_t sp = 0; sp < grp.slabs.size(); ++sp) {
      const RowSlab& sl = slab(grp.slabs[sp]);
      auto& vol = result_.volumes[static_cast<std::size_t>(sl.specimen)];
      auto& qvol = result_.quantized[static_cast<std::size_t>(sl.specimen)];
      const auto rows = static_cast<std::size_t>(sl.rows.size());
      const std::size_t rows_per_block = (rows + static_cast<std::size_t>(grid.p_proj) - 1) /
                                         static_cast<std::size_t>(grid.p_proj);
      for (int t = 0; t < grid.p_slice; ++t) {
        const PartialVolume& pv = st.reduced[sp * static_cast<std::size_t>(grid.p_slice) + static_cast<std::size_t>(t)];
        for (int z = sl.rows.begin; z < sl.rows.end; ++z) {
          SliceTile tile;
          if (cfg_.fuse_ai) {
            const auto block = static_cast<std::size_t>(z - sl.rows.begin) / rows_per_block;
            tile.z = z;
            tile.tile = pv.tile;
            tile.owner = grp.ranks[unit_index(sp, static_cast<int>(block), t)];
            tile.pixels = Image<std::uint16_t>(pv.tile.width(), pv.tile.height());
          }
          for (int y = pv.tile.y0; y < pv.tile.y1; ++y) {
            for (int x = pv.tile.x0; x < pv.tile.x1; ++x) {
              const float v = pv.at(x, y, z);
              const std::uint16_t q = quantize_value(v, cfg_.window);
              vol.at(x, y, z) = v;
              qvol.at(x, y, z) = q;
              if (cfg_.fuse_ai) tile.pixels.at(x - pv.tile.x0, y - pv.tile.y0) = q;
            }
          }
          if (cfg_.fuse_ai) {
            tiles.push_back(std::move(tile));
            targets.push_back({sl.specimen});
          }
        }
      }
      const std::size_t voxels = static_cast<std::size_t>(vol.nx()) * static_cast<std::size_t>(vol.ny()) * rows;
      std::size_t bytes = 0;
      if (!cfg_.fuse_ai || cfg_.retain_volume) bytes += voxels * sizeof(std::uint16_t);
      if (cfg_.fuse_ai) bytes += (voxels + 3) / 4;
      rec.end += storage_.write(StorageTier::Pfs, bytes);
      rec.bytes += bytes;
    }

    if (cfg_.fuse_ai) {
      const FusedResult fused = fused_infer(tiles, cfg_.sap, *seg_, fabric_);
      rec.end += fused.time;
      result_.fused_payload_bytes += fused.payload_bytes;
      result_.fused_raw_bytes += fused.raw_bytes;
      for (std::size_t i = 0; i < tiles.size(); ++i) {
        auto& mask = result_.masks[static_cast<std::size_t>(targets[i].specimen)];
        const Tile& tl = tiles[i].tile;
        for (int y = tl.y0; y < tl.y1; ++y) {
          for (int x = tl.x0; x < tl.x1; ++x) mask.at(x, y, tiles[i].z) = fused.masks[i].at(x - tl.x0, y - tl.y0);
        }
      }
    }
    st.reduced.clear();
  }

  const SpecimenSet& set_;
  const std::vector<Sinogram>& sinos_;
  const PipelineConfig& cfg_;
  Fabric& fabric_;
  StorageModel& storage_;
  const Segmenter* seg_;
  PipelineResult result_;
  std::vector<GroupState> states_;
  std::size_t pfs_read0_ = 0;
  std::size_t pfs_written0_ = 0;
};

}  // namespace

PipelineResult run_pipeline(const SpecimenSet& set, const std::vector<Sinogram>& sinograms,
                            const PipelineConfig& config, Fabric& fabric, StorageModel& storage,
                            const Segmenter* segmenter) {
  config.validate();
  set.validate();
  if (sinograms.size() != set.size()) throw DimensionMismatch("one sinogram per specimen is required");
  for (std::size_t i = 0; i < set.size(); ++i) {
    const auto& s = set[i];
    s.acquisition.validate();
    s.dims.validate_against(s.acquisition);
    if (!sinograms[i].is_full() || !(sinograms[i].params() == s.acquisition)) {
      throw DimensionMismatch("sinogram of specimen '" + s.id + "' does not match its acquisition");
    }
    config.filter.validate(s.acquisition.n_chan);
  }
  if (fabric.size() != config.grid.total()) {
    throw InvalidArgument("fabric has " + std::to_string(fabric.size()) + " ranks, grid needs " +
                          std::to_string(config.grid.total()));
  }
  if (config.fuse_ai && segmenter == nullptr) throw InvalidArgument("fused inference needs a segmenter");
  Runner runner(set, sinograms, config, fabric, storage, segmenter);
  runner.snapshot_counters();
  return runner.run();
}

}  // namespace tomofuse
