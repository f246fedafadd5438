#include <fmt/format.h>
#include <spdlog/sinks/stdout_color_sinks.h>
#include <spdlog/spdlog.h>

#include <CLI11.hpp>
#include <cstdlib>
#include <filesystem>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "tomofuse/config.hpp"
#include "tomofuse/fbp.hpp"
#include "tomofuse/formats.hpp"
#include "tomofuse/partition.hpp"
#include "tomofuse/phantom.hpp"
#include "tomofuse/pipeline.hpp"

namespace fs = std::filesystem;
using namespace tomofuse;

namespace {

// Flags shared by every subcommand; they override the config file.
struct CommonOptions {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string out = "out";
  std::optional<std::string> ranks;
  std::optional<int> groups;
  std::optional<std::string> overlap;
  std::optional<std::string> fuse;
  std::vector<std::string> sets;
  std::vector<std::string> inputs;
};

void add_common(CLI::App* cmd, CommonOptions& o, bool takes_inputs) {
  cmd->add_option("--config", o.config, "key = value configuration file");
  cmd->add_option("--seed", o.seed, "random seed");
  cmd->add_option("--out", o.out, "output directory")->capture_default_str();
  cmd->add_option("--ranks", o.ranks, "rank grid PxQxR (row x projection x slice)");
  cmd->add_option("--groups", o.groups, "row slabs per pipeline group");
  cmd->add_option("--overlap", o.overlap, "pipeline stage overlap on|off");
  cmd->add_option("--fuse", o.fuse, "fused in-memory segmentation on|off");
  cmd->add_option("--set", o.sets, "extra key=value override, repeatable");
  if (takes_inputs) cmd->add_option("inputs", o.inputs, "input files")->required();
}

ExperimentConfig resolve_config(const CommonOptions& o) {
  ExperimentConfig c = o.config.empty() ? ExperimentConfig{} : load_config(o.config);
  for (const auto& kv : o.sets) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos) throw ConfigError("--set expects key=value, got '" + kv + "'");
    c.set(kv.substr(0, eq), kv.substr(eq + 1));
  }
  if (o.seed) c.seed = *o.seed;
  if (o.ranks) c.set("ranks", *o.ranks);
  if (o.groups) c.set("group_size", std::to_string(*o.groups));
  if (o.overlap) c.set("overlap", *o.overlap);
  if (o.fuse) c.set("fuse", *o.fuse);
  c.validate();
  return c;
}

fs::path prepare_out(const CommonOptions& o) {
  const fs::path out(o.out);
  std::error_code ec;
  fs::create_directories(out, ec);
  if (ec) throw IoError("cannot create output directory '" + out.string() + "': " + ec.message());
  return out;
}

std::string stem_of(const std::string& path) { return fs::path(path).stem().string(); }

int cmd_simulate(const CommonOptions& o) {
  const auto c = resolve_config(o);
  const auto out = prepare_out(o);
  const auto set = c.specimen_set();
  for (std::size_t i = 0; i < set.size(); ++i) {
    const auto& s = set[i];
    const std::uint64_t seed = c.seed + i;
    spdlog::info("simulating {} ({}x{}x{}, {} angles)", s.id, s.dims.nx, s.dims.ny, s.dims.nz, s.acquisition.n_proj);
    const auto m = generate_microstructure(s.dims, c.aggregate_fraction, c.pore_fraction, seed, c.microstructure);
    auto depth = forward_project(m, s.acquisition, ProjectorOptions{c.projector_supersample});
    if (c.noise) {
      auto spec = c.degradation;
      spec.seed = seed;
      depth = degrade(depth, spec);
    }
    write_sinogram(out / (s.id + ".sino"), to_intensity(depth, c.degradation.poisson_flux));
    write_mask(out / (s.id + "_truth.msk"), encode_bitmap(m.labels));
    spdlog::debug("wrote {} and its truth mask", s.id);
  }
  write_text_atomic(out / "config.txt", c.to_text());
  fmt::print("simulated {} specimen(s) into {}\n", set.size(), out.string());
  return 0;
}

struct LoadedInputs {
  SpecimenSet set;
  std::vector<Sinogram> sinograms;
  std::vector<std::string> stems;
};

LoadedInputs load_inputs(const CommonOptions& o, const ExperimentConfig& c) {
  LoadedInputs in;
  std::vector<Specimen> specimens;
  for (const auto& path : o.inputs) {
    auto s = read_sinogram(path, c.pixel_pitch);
    VolumeDims d = matching_dims(s.params());
    specimens.push_back({s.params(), d, stem_of(path)});
    in.stems.push_back(stem_of(path));
    in.sinograms.push_back(std::move(s));
  }
  in.set = SpecimenSet(std::move(specimens));
  return in;
}

std::string run_report(const PipelineResult& r, bool fused) {
  const auto a = io_audit(r.trace, fused);
  std::ostringstream s;
  s << "makespan_s = " << r.makespan << '\n'
    << "predicted_makespan_s = " << r.predicted_makespan << '\n'
    << "flops = " << r.flops << '\n'
    << "voxels = " << r.trace.voxels << '\n'
    << "pfs_bytes_read = " << a.pfs_bytes_read << '\n'
    << "pfs_bytes_written = " << a.pfs_bytes_written << '\n'
    << "staged_baseline_bytes = " << a.staged_bytes << '\n'
    << "fused_bytes = " << a.fused_bytes << '\n'
    << "savings = " << a.savings << '\n'
    << "degenerate = " << (a.degenerate ? "true" : "false") << '\n';
  if (fused) {
    s << "fused_payload_bytes = " << r.fused_payload_bytes << '\n' << "fused_raw_bytes = " << r.fused_raw_bytes << '\n';
  }
  return s.str();
}

int run_chain(const CommonOptions& o, bool force_fuse) {
  auto c = resolve_config(o);
  if (force_fuse) c.fuse = true;
  const auto out = prepare_out(o);
  const auto in = load_inputs(o, c);
  auto cfg = c.pipeline();
  cfg.i0 = c.degradation.poisson_flux;
  Fabric fabric(c.fabric_config());
  StorageModel storage(c.storage);
  const auto seg = c.segmenter();
  spdlog::info("running {} specimen(s) on {} rank(s), group size {}, overlap {}, fuse {}", in.set.size(),
               c.grid.total(), c.group_size, c.overlap ? "on" : "off", c.fuse ? "on" : "off");
  const auto r = run_pipeline(in.set, in.sinograms, cfg, fabric, storage, c.fuse ? &seg : nullptr);
  for (std::size_t i = 0; i < in.set.size(); ++i) {
    const double pitch = in.set[i].dims.voxel_pitch;
    if (!c.fuse || c.retain_volume) {
      write_volume(out / (in.stems[i] + ".vol"), r.quantized[i], pitch);
      const auto pgm = slice_pgm(r.quantized[i], r.quantized[i].nz() / 2);
      write_text_atomic(out / (in.stems[i] + "_mid.pgm"), pgm);
    }
    if (c.fuse) write_mask(out / (in.stems[i] + ".msk"), encode_bitmap(r.masks[i]));
  }
  write_text_atomic(out / "trace.csv", r.trace.csv());
  write_text_atomic(out / "collectives.csv", fabric.trace_csv());
  const auto report = run_report(r, c.fuse);
  write_text_atomic(out / "report.txt", report);
  fmt::print("{}", report);
  return 0;
}

std::string imbalance_csv(const GroupPlan& block, const GroupPlan& cyclic) {
  std::ostringstream s;
  s << "mapping,group,max_over_mean,cv\n";
  for (const auto& [name, plan] : {std::pair{"block", &block}, std::pair{"cyclic", &cyclic}}) {
    const auto r = imbalance(*plan);
    for (std::size_t g = 0; g < r.per_group.size(); ++g) {
      s << name << ',' << g << ',' << r.per_group[g].max_over_mean << ',' << r.per_group[g].cv << '\n';
    }
    s << name << ",all," << r.overall.max_over_mean << ',' << r.overall.cv << '\n';
  }
  return s.str();
}

int cmd_plan(const CommonOptions& o) {
  const auto c = resolve_config(o);
  const auto out = prepare_out(o);
  const auto set = c.specimen_set();
  const auto block = partition_specimens(set, c.grid, c.group_size);
  const auto cyclic = map_cyclic(block);
  const auto& chosen = c.mapping == MappingStrategy::Cyclic ? cyclic : block;
  write_text_atomic(out / "plan.json", plan_to_json(chosen, set));
  const auto csv = imbalance_csv(block, cyclic);
  write_text_atomic(out / "imbalance.csv", csv);
  fmt::print("{} groups, {} units\nblock  max/mean {:.4f}\ncyclic max/mean {:.4f}\n", chosen.groups.size(),
             chosen.groups.empty() ? 0 : chosen.groups.front().units.size() * chosen.groups.size(),
             imbalance(block).overall.max_over_mean, imbalance(cyclic).overall.max_over_mean);
  return 0;
}

int cmd_analyze(const CommonOptions& o, int label) {
  const auto c = resolve_config(o);
  const auto out = prepare_out(o);
  if (o.inputs.size() > 2) throw InvalidArgument("analyze takes a predicted mask and an optional truth mask");
  const auto pred = decode_bitmap(read_mask(o.inputs[0]));
  if (o.inputs.size() == 2) {
    const auto truth = decode_bitmap(read_mask(o.inputs[1]));
    std::ostringstream s;
    s << "class,dice\n";
    for (int k = 0; k < kMaterialCount; ++k) s << k << ',' << dice(pred, truth, static_cast<std::uint8_t>(k)) << '\n';
    s << "macro," << macro_dice(pred, truth) << '\n';
    write_text_atomic(out / "dice.csv", s.str());
    fmt::print("{}", s.str());
  }
  if (label < 0 || label >= kMaterialCount) throw InvalidArgument("label must be in [0, 4)");
  const auto comps = connected_components(pred, static_cast<std::uint8_t>(label), c.components);
  write_text_atomic(out / "components.csv", comps.csv());
  std::ostringstream h;
  h << "bin,count\n";
  const auto hist = comps.histogram();
  for (std::size_t b = 0; b < hist.size(); ++b) h << b << ',' << hist[b] << '\n';
  write_text_atomic(out / "size_histogram.csv", h.str());
  fmt::print("class {}: {} components\n", label, comps.count());
  return 0;
}

int cmd_bench(const CommonOptions& o) {
  const auto c = resolve_config(o);
  const auto out = prepare_out(o);
  const auto set = c.specimen_set();
  std::vector<Sinogram> sinograms;
  for (std::size_t i = 0; i < set.size(); ++i) {
    const auto m = generate_microstructure(set[i].dims, c.aggregate_fraction, c.pore_fraction, c.seed + i,
                                           c.microstructure);
    sinograms.push_back(forward_project(m, set[i].acquisition, ProjectorOptions{c.projector_supersample}));
  }
  const int p_row = std::min(4, c.n_rows);
  std::ostringstream s;
  s << "p_row,p_proj,p_slice,group_size,groups,model_s,executed_s,relative_gap\n";
  fmt::print("{:>6} {:>6} {:>7} {:>6} {:>12} {:>12} {:>8}\n", "p_proj", "p_slice", "|G|", "groups", "model_s",
             "executed_s", "gap");
  for (int p_proj : {1, 2, 4}) {
    for (int p_slice : {1, 2, 4}) {
      for (int group_size : {1, 2, 4}) {
        auto cfg = c.pipeline();
        cfg.grid = {p_row, p_proj, p_slice};
        cfg.group_size = group_size;
        cfg.fuse_ai = false;
        Fabric fabric({cfg.grid.total(), c.fabric.link_bandwidth, c.fabric.link_latency, c.seed});
        StorageModel storage(c.storage);
        const auto r = run_pipeline(set, sinograms, cfg, fabric, storage);
        const double gap =
            r.predicted_makespan > 0.0 ? (r.makespan - r.predicted_makespan) / r.predicted_makespan : 0.0;
        s << p_row << ',' << p_proj << ',' << p_slice << ',' << group_size << ',' << r.plan.groups.size() << ','
          << r.predicted_makespan << ',' << r.makespan << ',' << gap << '\n';
        fmt::print("{:>6} {:>6} {:>7} {:>6} {:>12.6g} {:>12.6g} {:>7.2f}%\n", p_proj, p_slice, group_size,
                   r.plan.groups.size(), r.predicted_makespan, r.makespan, 100.0 * gap);
      }
    }
  }
  write_text_atomic(out / "bench.csv", s.str());
  return 0;
}

void configure_logging() {
  auto logger = spdlog::stderr_color_mt("tomofuse");
  spdlog::set_default_logger(logger);
  spdlog::set_pattern("[%l] %v");
  const char* level = std::getenv("TOMOFUSE_LOG");
  spdlog::set_level(level ? spdlog::level::from_str(level) : spdlog::level::warn);
}

// Distinct exit codes per failure class; the message prefix names it too.
int exit_code(const Error& e) {
  if (dynamic_cast<const ConfigError*>(&e)) return 2;
  if (dynamic_cast<const FormatError*>(&e)) return 3;
  if (dynamic_cast<const IoError*>(&e)) return 4;
  if (dynamic_cast<const ResourceError*>(&e)) return 5;
  return 6;
}

}  // namespace

int main(int argc, char** argv) {
  configure_logging();
  CLI::App app{"Distributed tomographic reconstruction with fused segmentation"};
  app.require_subcommand(1);

  CommonOptions simulate, reconstruct, plan, fused, analyze, bench;
  int label = static_cast<int>(Material::Pore);
  add_common(app.add_subcommand("simulate", "Simulate specimens: raw-count sinograms and truth masks"), simulate, false);
  add_common(app.add_subcommand("reconstruct", "Reconstruct sinograms to uint16 volumes"), reconstruct, true);
  add_common(app.add_subcommand("plan", "Write the group plan and Block vs Cyclic imbalance"), plan, false);
  add_common(app.add_subcommand("run-fused", "Reconstruct and segment in memory, writing 2-bit masks"), fused, true);
  auto* analyze_cmd = app.add_subcommand("analyze", "Dice against a truth mask and connected components");
  add_common(analyze_cmd, analyze, true);
  analyze_cmd->add_option("--label", label, "class analysed for connected components")->capture_default_str();
  add_common(app.add_subcommand("bench", "Makespan model vs executed schedule over grid sweeps"), bench, false);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  }

  try {
    const auto* cmd = app.get_subcommands().front();
    const std::string name = cmd->get_name();
    if (name == "simulate") return cmd_simulate(simulate);
    if (name == "reconstruct") return run_chain(reconstruct, false);
    if (name == "plan") return cmd_plan(plan);
    if (name == "run-fused") return run_chain(fused, true);
    if (name == "analyze") return cmd_analyze(analyze, label);
    if (name == "bench") return cmd_bench(bench);
  } catch (const Error& e) {
    spdlog::error("{}", e.what());
    return exit_code(e);
  } catch (const std::exception& e) {
    spdlog::error("internal: {}", e.what());
    return 1;
  }
  return 1;
}
