#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace tomofuse {

using Bytes = std::vector<std::byte>;

struct FabricConfig {
  int n_ranks = 1;
  double link_bandwidth = 1.0e9;  // bytes/s
  double link_latency = 1.0e-6;   // s
  std::uint64_t schedule_seed = 0;

  void validate() const;
};

struct CollectiveRecord {
  std::string op;
  int group_size = 0;
  std::size_t bytes = 0;
  double time = 0.0;
};

/// In-process stand-in for an MPI communicator. Collectives take every
/// participant's buffers at once, compute the result serially in a fixed
/// order, and charge an analytic time:
///
///   broadcast             latency * ceil(log2 n) + bytes / bw      (binomial tree)
///   reduce_scatter_block  (n - 1) / n * bytes / bw + (n - 1) * latency   (ring)
///   all_to_all_v          max_i (out_i + in_i) / bw + (n - 1) * latency
///
/// Groups are lists of rank ids; a rank may appear more than once when it
/// holds several participating work units.
class Fabric {
 public:
  explicit Fabric(FabricConfig config);

  const FabricConfig& config() const { return config_; }
  int size() const { return config_.n_ranks; }

  struct BroadcastResult {
    std::vector<Bytes> delivered;  // per group position
    double time = 0.0;
  };
  BroadcastResult broadcast(int root, std::span<const std::byte> payload, std::span<const int> group);

  struct ReduceScatterResult {
    std::vector<std::vector<float>> blocks;  // block i to group position i
    double time = 0.0;
  };
  /// Element-wise sum over positions in ascending order, scattered in equal blocks.
  ReduceScatterResult reduce_scatter_block(const std::vector<std::vector<float>>& contributions,
                                           std::span<const int> group);

  struct AllToAllResult {
    std::vector<std::vector<Bytes>> recv;  // recv[j][i] == send[i][j]
    double time = 0.0;
  };
  /// Self-messages are copied locally and do not count towards link bytes.
  AllToAllResult all_to_all_v(const std::vector<std::vector<Bytes>>& send, std::span<const int> group);

  const std::vector<CollectiveRecord>& trace() const { return trace_; }
  std::size_t bytes_moved() const { return bytes_moved_; }
  double total_time() const { return total_time_; }
  /// op,group_size,bytes,time
  std::string trace_csv() const;

 private:
  void check_group(std::span<const int> group) const;
  void record(std::string op, int group_size, std::size_t bytes, double time);

  FabricConfig config_;
  std::vector<CollectiveRecord> trace_;
  std::size_t bytes_moved_ = 0;
  double total_time_ = 0.0;
};

enum class StorageTier { Pfs, Staging };

StorageTier parse_storage_tier(std::string_view name);
std::string_view to_string(StorageTier tier);

struct StorageConfig {
  double pfs_read_bw = 2.0e9;   // bytes/s
  double pfs_write_bw = 1.0e9;  // bytes/s
  double staging_bw = 8.0e9;    // bytes/s, node-local tier

  void validate() const;
};

/// Bandwidth-limited storage tiers with exact byte counters. `streams`
/// concurrent accessors share a tier's bandwidth equally, so each one takes
/// streams * bytes / bw.
class StorageModel {
 public:
  explicit StorageModel(StorageConfig config = {});

  double read(StorageTier tier, std::size_t bytes, int streams = 1);
  double write(StorageTier tier, std::size_t bytes, int streams = 1);

  std::size_t bytes_read(StorageTier tier) const;
  std::size_t bytes_written(StorageTier tier) const;
  const StorageConfig& config() const { return config_; }
  /// tier,bytes_read,bytes_written
  std::string counters_csv() const;

 private:
  struct Counters {
    std::size_t read = 0;
    std::size_t written = 0;
  };
  Counters& counters(StorageTier tier);
  const Counters& counters(StorageTier tier) const;

  StorageConfig config_;
  Counters pfs_;
  Counters staging_;
};

}  // namespace tomofuse
