#include "tomofuse/ranksim.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "tomofuse/error.hpp"

namespace tomofuse {

void FabricConfig::validate() const {
  require(n_ranks >= 1, "fabric needs at least one rank");
  require(std::isfinite(link_bandwidth) && link_bandwidth > 0.0, "link bandwidth must be > 0");
  require(std::isfinite(link_latency) && link_latency >= 0.0, "link latency must be >= 0");
}

Fabric::Fabric(FabricConfig config) : config_(config) { config_.validate(); }

void Fabric::check_group(std::span<const int> group) const {
  require(!group.empty(), "collective group is empty");
  for (int r : group) require(r >= 0 && r < config_.n_ranks, "rank " + std::to_string(r) + " outside fabric");
}

void Fabric::record(std::string op, int group_size, std::size_t bytes, double time) {
  trace_.push_back({std::move(op), group_size, bytes, time});
  bytes_moved_ += bytes;
  total_time_ += time;
}

Fabric::BroadcastResult Fabric::broadcast(int root, std::span<const std::byte> payload, std::span<const int> group) {
  check_group(group);
  if (std::find(group.begin(), group.end(), root) == group.end()) {
    throw InvalidArgument("broadcast root " + std::to_string(root) + " is not in the group");
  }
  BroadcastResult out;
  out.delivered.assign(group.size(), Bytes(payload.begin(), payload.end()));
  const auto n = static_cast<double>(group.size());
  if (group.size() > 1) {
    out.time = config_.link_latency * std::ceil(std::log2(n)) +
               static_cast<double>(payload.size()) / config_.link_bandwidth;
  }
  record("broadcast", static_cast<int>(group.size()), group.size() > 1 ? payload.size() : 0, out.time);
  return out;
}

Fabric::ReduceScatterResult Fabric::reduce_scatter_block(const std::vector<std::vector<float>>& contributions,
                                                         std::span<const int> group) {
  check_group(group);
  require(contributions.size() == group.size(), "reduce_scatter_block needs one contribution per group member");
  const std::size_t len = contributions.front().size();
  for (const auto& c : contributions) {
    if (c.size() != len) throw DimensionMismatch("reduce_scatter_block contributions differ in length");
  }
  const std::size_t n = group.size();
  if (len % n != 0) throw DimensionMismatch("reduce_scatter_block length not divisible by group size");
  const std::size_t block = len / n;

  ReduceScatterResult out;
  out.blocks.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    auto& dst = out.blocks[i];
    dst.assign(contributions[0].begin() + static_cast<std::ptrdiff_t>(i * block),
               contributions[0].begin() + static_cast<std::ptrdiff_t>((i + 1) * block));
    for (std::size_t p = 1; p < n; ++p) {
      const float* src = contributions[p].data() + i * block;
      for (std::size_t e = 0; e < block; ++e) dst[e] += src[e];
    }
  }
  const std::size_t bytes = len * sizeof(float);
  const double nn = static_cast<double>(n);
  out.time = (nn - 1.0) / nn * static_cast<double>(bytes) / config_.link_bandwidth + (nn - 1.0) * config_.link_latency;
  record("reduce_scatter_block", static_cast<int>(n), n > 1 ? bytes * (n - 1) / n : 0, out.time);
  return out;
}

Fabric::AllToAllResult Fabric::all_to_all_v(const std::vector<std::vector<Bytes>>& send, std::span<const int> group) {
  check_group(group);
  const std::size_t n = group.size();
  require(send.size() == n, "all_to_all_v needs one send row per group member");
  for (const auto& row : send) require(row.size() == n, "all_to_all_v send matrix must be square");

  AllToAllResult out;
  out.recv.assign(n, std::vector<Bytes>(n));
  std::vector<std::size_t> traffic(n, 0);
  std::size_t link_bytes = 0;
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      out.recv[j][i] = send[i][j];
      if (i != j) {
        traffic[i] += send[i][j].size();
        traffic[j] += send[i][j].size();
        link_bytes += send[i][j].size();
      }
    }
  }
  const double peak = static_cast<double>(*std::max_element(traffic.begin(), traffic.end()));
  out.time = peak / config_.link_bandwidth + static_cast<double>(n - 1) * config_.link_latency;
  record("all_to_all_v", static_cast<int>(n), link_bytes, out.time);
  return out;
}

std::string Fabric::trace_csv() const {
  std::ostringstream os;
  os << "op,group_size,bytes,time\n";
  for (const auto& r : trace_) os << r.op << ',' << r.group_size << ',' << r.bytes << ',' << r.time << '\n';
  return os.str();
}

StorageTier parse_storage_tier(std::string_view name) {
  if (name == "pfs") return StorageTier::Pfs;
  if (name == "staging") return StorageTier::Staging;
  throw InvalidArgument("unknown storage tier '" + std::string(name) + "'");
}

std::string_view to_string(StorageTier tier) { return tier == StorageTier::Pfs ? "pfs" : "staging"; }

void StorageConfig::validate() const {
  require(pfs_read_bw > 0.0 && pfs_write_bw > 0.0 && staging_bw > 0.0, "storage bandwidths must be > 0");
}

StorageModel::StorageModel(StorageConfig config) : config_(config) { config_.validate(); }

StorageModel::Counters& StorageModel::counters(StorageTier tier) {
  switch (tier) {
    case StorageTier::Pfs:
      return pfs_;
    case StorageTier::Staging:
      return staging_;
  }
  throw InvalidArgument("unknown storage tier");
}

const StorageModel::Counters& StorageModel::counters(StorageTier tier) const {
  return const_cast<StorageModel*>(this)->counters(tier);
}

double StorageModel::read(StorageTier tier, std::size_t bytes, int streams) {
  require(streams >= 1, "streams must be >= 1");
  auto& c = counters(tier);
  c.read += bytes;
  const double bw = tier == StorageTier::Pfs ? config_.pfs_read_bw : config_.staging_bw;
  return static_cast<double>(streams) * static_cast<double>(bytes) / bw;
}

double StorageModel::write(StorageTier tier, std::size_t bytes, int streams) {
  require(streams >= 1, "streams must be >= 1");
  auto& c = counters(tier);
  c.written += bytes;
  const double bw = tier == StorageTier::Pfs ? config_.pfs_write_bw : config_.staging_bw;
  return static_cast<double>(streams) * static_cast<double>(bytes) / bw;
}

std::size_t StorageModel::bytes_read(StorageTier tier) const { return counters(tier).read; }
std::size_t StorageModel::bytes_written(StorageTier tier) const { return counters(tier).written; }

std::string StorageModel::counters_csv() const {
  std::ostringstream os;
  os << "tier,bytes_read,bytes_written\n";
  os << "pfs," << pfs_.read << ',' << pfs_.written << '\n';
  os << "staging," << staging_.read << ',' << staging_.written << '\n';
  return os.str();
}

}  // namespace tomofuse
