#include <gtest/gtest.h>

#include <algorithm>
#include <numeric>
#include <random>

#include "tomofuse/phantom.hpp"
#include "tomofuse/pipeline.hpp"

using namespace tomofuse;

namespace {

struct Fixture {
  SpecimenSet set;
  std::vector<Sinogram> sinograms;
  std::vector<Volume<float>> reference;
};

Fixture make_fixture() {
  Fixture fx;
  std::vector<Specimen> specimens;
  const auto a = AcquisitionParams::normal(24, 6, 32);
  const auto b = AcquisitionParams::offset(36, 4, 24, 6);
  specimens.push_back({a, matching_dims(a), "normal"});
  specimens.push_back({b, matching_dims(b), "offset"});
  fx.set = SpecimenSet(specimens);
  for (std::size_t i = 0; i < fx.set.size(); ++i) {
    const auto& s = fx.set[i];
    const auto m = generate_microstructure(s.dims, 0.3, 0.05, 40 + i);
    fx.sinograms.push_back(forward_project(m, s.acquisition, ProjectorOptions{1}));
    fx.reference.push_back(reconstruct(fx.sinograms.back(), s.dims));
  }
  return fx;
}

const Fixture& fixture() {
  static const Fixture fx = make_fixture();
  return fx;
}

PipelineResult run(const PipelineConfig& cfg, StorageModel* storage_out = nullptr) {
  Fabric fabric({cfg.grid.total()});
  StorageModel storage;
  auto r = run_pipeline(fixture().set, fixture().sinograms, cfg, fabric, storage);
  if (storage_out) *storage_out = storage;
  return r;
}

}  // namespace

TEST(Pipeline, distributed_volumes_match_serial_reconstruction) {
  for (const RankGrid grid : {RankGrid{1, 1, 1}, RankGrid{2, 1, 1}, RankGrid{1, 3, 1}, RankGrid{1, 1, 4},
                              RankGrid{2, 2, 2}, RankGrid{2, 4, 3}}) {
    for (int group_size : {1, 2}) {
      for (bool overlap : {false, true}) {
        PipelineConfig cfg;
        cfg.grid = grid;
        cfg.group_size = group_size;
        cfg.overlap = overlap;
        cfg.schedule_seed = 5;
        const auto r = run(cfg);
        ASSERT_EQ(r.volumes.size(), 2u);
        for (std::size_t i = 0; i < 2; ++i) {
          EXPECT_LT(max_relative_error(r.volumes[i], fixture().reference[i]), 1e-5)
              << grid.p_row << "x" << grid.p_proj << "x" << grid.p_slice << " g" << group_size << " o" << overlap;
        }
      }
    }
  }
}

TEST(Pipeline, block_and_cyclic_mappings_agree) {
  PipelineConfig cfg;
  cfg.grid = {1, 2, 2};
  cfg.mapping = MappingStrategy::Block;
  const auto a = run(cfg);
  cfg.mapping = MappingStrategy::Cyclic;
  const auto b = run(cfg);
  EXPECT_EQ(a.quantized, b.quantized);
}

TEST(Pipeline, schedule_seed_changes_nothing_but_order) {
  PipelineConfig cfg;
  cfg.grid = {2, 2, 1};
  cfg.schedule_seed = 1;
  const auto a = run(cfg);
  cfg.schedule_seed = 99;
  const auto b = run(cfg);
  EXPECT_EQ(a.quantized, b.quantized);
  EXPECT_DOUBLE_EQ(a.makespan, b.makespan);
}

TEST(Pipeline, single_group_makespan_is_stage_sum) {
  PipelineConfig cfg;
  cfg.grid = {1, 2, 1};
  cfg.group_size = 2;
  const auto r = run(cfg);
  const auto t = r.trace.stage_times();
  ASSERT_EQ(t.size(), 1u);
  EXPECT_NEAR(r.makespan, t[0][0] + t[0][1] + t[0][2] + t[0][3], 1e-12);
  EXPECT_NEAR(r.predicted_makespan, r.makespan, 1e-12);
}

TEST(Pipeline, overlap_shortens_but_respects_bounds) {
  PipelineConfig cfg;
  cfg.grid = {2, 2, 1};
  cfg.overlap = false;
  const auto serial = run(cfg);
  cfg.overlap = true;
  const auto overlapped = run(cfg);
  EXPECT_LT(overlapped.makespan, serial.makespan);
  const auto t = overlapped.trace.stage_times();
  double total = 0.0, max_stage = 0.0;
  for (int s = 0; s < kStageCount; ++s) {
    double col = 0.0;
    for (const auto& g : t) col += g[s];
    max_stage = std::max(max_stage, col);
    total += col;
  }
  EXPECT_GE(overlapped.makespan, max_stage - 1e-12);
  EXPECT_LE(overlapped.makespan, total + 1e-12);
  EXPECT_NEAR(serial.makespan, total, 1e-9);
}

TEST(Pipeline, trace_respects_stage_dependencies) {
  PipelineConfig cfg;
  cfg.grid = {2, 2, 2};
  const auto r = run(cfg);
  std::vector<std::array<double, kStageCount>> start(r.trace.stage_times().size()), end(start.size());
  for (const auto& rec : r.trace.records) {
    EXPECT_GE(rec.end, rec.start);
    start[rec.group][static_cast<int>(rec.stage)] = rec.start;
    end[rec.group][static_cast<int>(rec.stage)] = rec.end;
  }
  for (std::size_t g = 0; g < start.size(); ++g) {
    for (int s = 1; s < kStageCount; ++s) EXPECT_GE(start[g][s], end[g][s - 1] - 1e-12);
    if (g > 0) {
      for (int s = 0; s < kStageCount; ++s) EXPECT_GE(start[g][s], end[g - 1][s] - 1e-12);
    }
  }
}

TEST(Pipeline, stage_bytes_equal_storage_counters) {
  for (bool fuse : {false, true}) {
    PipelineConfig cfg;
    cfg.grid = {2, 2, 1};
    cfg.fuse_ai = fuse;
    Fabric fabric({cfg.grid.total()});
    StorageModel storage;
    const auto seg = ThresholdSegmenter::from_attenuation(kDefaultAttenuation, cfg.window);
    const auto r = run_pipeline(fixture().set, fixture().sinograms, cfg, fabric, storage, &seg);
    std::size_t sum = 0;
    for (const auto& rec : r.trace.records) sum += rec.bytes;
    const std::size_t counters = storage.bytes_read(StorageTier::Pfs) + storage.bytes_written(StorageTier::Pfs) +
                                 storage.bytes_read(StorageTier::Staging) + storage.bytes_written(StorageTier::Staging);
    EXPECT_EQ(sum, counters);
    EXPECT_EQ(r.trace.pfs_bytes_read, storage.bytes_read(StorageTier::Pfs));
    EXPECT_EQ(r.trace.pfs_bytes_written, storage.bytes_written(StorageTier::Pfs));
  }
}

TEST(Pipeline, flops_follow_accounting_convention) {
  PipelineConfig cfg;
  cfg.grid = {1, 2, 2};
  const auto r = run(cfg);
  double expected = 0.0;
  for (const auto& s : fixture().set.specimens()) {
    expected += 32.0 * s.acquisition.n_proj * static_cast<double>(s.dims.voxel_count());
  }
  EXPECT_DOUBLE_EQ(r.flops, expected);
}

TEST(Pipeline, fused_masks_match_thresholded_volume) {
  PipelineConfig cfg;
  cfg.grid = {1, 2, 2};
  cfg.fuse_ai = true;
  cfg.sap.budget = 16;
  cfg.sap.patch_size = 4;
  Fabric fabric({cfg.grid.total()});
  StorageModel storage;
  const auto seg = ThresholdSegmenter::from_attenuation(kDefaultAttenuation, cfg.window);
  const auto r = run_pipeline(fixture().set, fixture().sinograms, cfg, fabric, storage, &seg);
  ASSERT_EQ(r.masks.size(), 2u);
  for (std::size_t i = 0; i < 2; ++i) {
    const auto& q = r.quantized[i];
    for (const Tile& tile : tile_slices(q.nx(), q.ny(), cfg.grid.p_slice)) {
      for (int z = 0; z < q.nz(); ++z) {
        Image<std::uint16_t> pixels(tile.width(), tile.height());
        for (int y = tile.y0; y < tile.y1; ++y) {
          for (int x = tile.x0; x < tile.x1; ++x) pixels.at(x - tile.x0, y - tile.y0) = q.at(x, y, z);
        }
        const auto expected = infer_tile(pixels, cfg.sap, seg);
        for (int y = tile.y0; y < tile.y1; ++y) {
          for (int x = tile.x0; x < tile.x1; ++x) {
            ASSERT_EQ(r.masks[i].at(x, y, z), expected.at(x - tile.x0, y - tile.y0)) << i << " " << x << "," << y << "," << z;
          }
        }
      }
    }
  }
  const auto audit = io_audit(r.trace, true);
  EXPECT_GT(audit.savings, 0.0);
  EXPECT_FALSE(audit.degenerate);
}

TEST(Pipeline, fuse_requires_segmenter_and_memory_guard_trips) {
  PipelineConfig cfg;
  cfg.fuse_ai = true;
  Fabric fabric({1});
  StorageModel storage;
  EXPECT_THROW(run_pipeline(fixture().set, fixture().sinograms, cfg, fabric, storage), InvalidArgument);
  cfg.fuse_ai = false;
  cfg.memory_per_rank = 1024;
  EXPECT_THROW(run_pipeline(fixture().set, fixture().sinograms, cfg, fabric, storage), ResourceError);
  cfg.memory_per_rank = 8ull << 30;
  Fabric wrong({3});
  EXPECT_THROW(run_pipeline(fixture().set, fixture().sinograms, cfg, wrong, storage), InvalidArgument);
}

TEST(MakespanModel, single_group_is_stage_sum) {
  EXPECT_DOUBLE_EQ(makespan_model({{1.0, 4.0, 2.0, 1.0}}), 8.0);
  EXPECT_DOUBLE_EQ(flow_shop_makespan({{1.0, 4.0, 2.0, 1.0}}), 8.0);
}

TEST(MakespanModel, eight_homogeneous_groups) {
  const std::vector<std::array<double, kStageCount>> t(8, {1.0, 4.0, 2.0, 1.0});
  EXPECT_DOUBLE_EQ(makespan_model(t), 8.0 + 7.0 * 4.0);
  EXPECT_DOUBLE_EQ(flow_shop_makespan(t), 36.0);
  EXPECT_GE(makespan_model(t), 32.0);
  EXPECT_LE(makespan_model(t), 64.0);
}

TEST(MakespanModel, zeros_and_bounds_on_random_inputs) {
  EXPECT_EQ(makespan_model(std::vector<std::array<double, kStageCount>>(3)), 0.0);
  EXPECT_EQ(makespan_model({}), 0.0);
  std::mt19937_64 rng(6);
  std::uniform_real_distribution<double> u(0.0, 5.0);
  for (int trial = 0; trial < 200; ++trial) {
    std::vector<std::array<double, kStageCount>> t(1 + trial % 9);
    for (auto& g : t) {
      for (auto& v : g) v = u(rng);
    }
    double total = 0.0, max_stage = 0.0;
    for (int s = 0; s < kStageCount; ++s) {
      double col = 0.0;
      for (const auto& g : t) col += g[s];
      total += col;
      max_stage = std::max(max_stage, col);
    }
    for (double m : {makespan_model(t), flow_shop_makespan(t)}) {
      EXPECT_GE(m, max_stage - 1e-9);
      EXPECT_LE(m, total + 1e-9);
    }
  }
  EXPECT_THROW(makespan_model({{-1.0, 0.0, 0.0, 0.0}}), InvalidArgument);
}

TEST(IoAudit, fused_512_cube_saves_over_forty_percent) {
  StageTrace t;
  const std::size_t v = 512ull * 512 * 512;
  t.voxels = v;
  t.sinogram_bytes = 512ull * 512 * 512 * sizeof(float);
  t.pfs_bytes_read = t.sinogram_bytes;
  t.pfs_bytes_written = (v + 3) / 4;
  const auto a = io_audit(t, true);
  EXPECT_EQ(a.staged_bytes, t.sinogram_bytes + 2 * v + 2 * v + 4 * v);
  EXPECT_EQ(a.fused_bytes, t.sinogram_bytes + v / 4);
  EXPECT_NEAR(a.savings, 1.0 - (4.25 / 12.0), 1e-12);
  EXPECT_GT(a.savings, 0.40);
}

TEST(IoAudit, no_fusion_means_no_savings) {
  StageTrace t;
  t.voxels = 1000;
  t.sinogram_bytes = 4000;
  t.pfs_bytes_read = 4000;
  t.pfs_bytes_written = 2000;
  EXPECT_EQ(io_audit(t, false).savings, 0.0);
}

TEST(IoAudit, zero_volume_is_flagged) {
  const auto a = io_audit(StageTrace{}, true);
  EXPECT_TRUE(a.degenerate);
  EXPECT_EQ(a.savings, 0.0);
}

TEST(StageTrace, csv_has_header_and_one_line_per_record) {
  PipelineConfig cfg;
  cfg.grid = {2, 1, 1};
  const auto r = run(cfg);
  const auto csv = r.trace.csv();
  EXPECT_EQ(csv.rfind("group,stage,start,end,bytes,flops\n", 0), 0u);
  EXPECT_EQ(static_cast<std::size_t>(std::count(csv.begin(), csv.end(), '\n')), r.trace.records.size() + 1);
  EXPECT_EQ(to_string(Stage::Comm), "comm");
}

TEST(MaxRelativeError, max_norm_relative) {
  Volume<float> a(2, 1, 1), b(2, 1, 1);
  b.at(0, 0, 0) = 2.0f;
  b.at(1, 0, 0) = -4.0f;
  a = b;
  a.at(0, 0, 0) = 2.5f;
  EXPECT_DOUBLE_EQ(max_relative_error(a, b), 0.125);
  EXPECT_EQ(max_relative_error(Volume<float>(2, 1, 1), Volume<float>(2, 1, 1)), 0.0);
}
