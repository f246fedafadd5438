#include "tomofuse/segfuse.hpp"

#include <algorithm>
#include <bit>
#include <cstring>
#include <numeric>
#include <sstream>

#include "tomofuse/error.hpp"

namespace tomofuse {

ThresholdSegmenter::ThresholdSegmenter(std::array<std::uint16_t, 3> thresholds) : thresholds_(thresholds) {
  require(thresholds_[0] < thresholds_[1] && thresholds_[1] < thresholds_[2],
          "segmenter thresholds must be strictly increasing");
}

ThresholdSegmenter ThresholdSegmenter::from_attenuation(const Attenuation& attenuation, const HuWindow& window) {
  window.validate();
  std::array<std::uint16_t, 3> t{};
  for (std::size_t i = 0; i < 3; ++i) {
    t[i] = quantize_value(0.5 * (attenuation[i] + attenuation[i + 1]), window);
  }
  return ThresholdSegmenter(t);
}

PatchSequence ThresholdSegmenter::segment(const PatchSequence& image) const {
  PatchSequence out;
  out.kind = PayloadKind::Mask;
  out.patch_size = image.patch_size;
  out.regions = image.regions;
  out.values.resize(image.values.size());
  std::transform(image.values.begin(), image.values.end(), out.values.begin(),
                 [this](std::uint16_t v) { return static_cast<std::uint16_t>(label(v)); });
  return out;
}

Volume<std::uint8_t> ThresholdSegmenter::segment(const Volume<std::uint16_t>& volume) const {
  Volume<std::uint8_t> out(volume.nx(), volume.ny(), volume.nz());
  std::transform(volume.data().begin(), volume.data().end(), out.data().begin(),
                 [this](std::uint16_t v) { return label(v); });
  return out;
}

void SapOptions::validate() const {
  require(budget >= 1, "SAP budget must be >= 1");
  require(patch_size >= 1, "patch resolution must be >= 1");
  require(canny_low > 0.0 && canny_low < canny_high && canny_high <= 1.0, "canny needs 0 < low < high <= 1");
  require(canny_sigma >= 0.0, "canny sigma must be >= 0");
}

PatchTree tile_tree(const Image<std::uint16_t>& pixels, const SapOptions& options) {
  Image<float> f(pixels.width(), pixels.height());
  std::transform(pixels.data().begin(), pixels.data().end(), f.data().begin(),
                 [](std::uint16_t v) { return static_cast<float>(v); });
  if (options.criterion == SplitCriterion::IntensityVariance) {
    return build_tree(f, options.budget, options.criterion);
  }
  return build_tree(canny(f, options.canny_low, options.canny_high, options.canny_sigma), options.budget,
                    options.criterion);
}

Image<std::uint8_t> infer_tile(const Image<std::uint16_t>& pixels, const SapOptions& options, const Segmenter& seg) {
  options.validate();
  const PatchTree tree = tile_tree(pixels, options);
  return depatch(seg.segment(patchify(pixels, tree, options.patch_size)), tree);
}

namespace {

void put_u32(Bytes& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::byte>((v >> (8 * i)) & 0xFFu));
}

std::uint32_t get_u32(const Bytes& in, std::size_t& at) {
  if (at + 4 > in.size()) throw FormatError("fused metadata truncated");
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(in[at + static_cast<std::size_t>(i)]) << (8 * i);
  at += 4;
  return v;
}

void append_u16(Bytes& out, std::span<const std::uint16_t> values) {
  const std::size_t at = out.size();
  out.resize(at + values.size() * 2);
  for (std::size_t i = 0; i < values.size(); ++i) {
    out[at + 2 * i] = static_cast<std::byte>(values[i] & 0xFFu);
    out[at + 2 * i + 1] = static_cast<std::byte>(values[i] >> 8);
  }
}

}  // namespace

FusedResult fused_infer(const std::vector<SliceTile>& tiles, const SapOptions& options, const Segmenter& seg,
                        Fabric& fabric) {
  options.validate();
  const int n = fabric.size();
  const auto un = static_cast<std::size_t>(n);
  const std::size_t pp = static_cast<std::size_t>(options.patch_size) * static_cast<std::size_t>(options.patch_size);
  for (const auto& t : tiles) {
    require(t.owner >= 0 && t.owner < n, "tile owner outside the fabric");
    require(t.z >= 0, "tile slice index must be >= 0");
    if (t.pixels.width() != t.tile.width() || t.pixels.height() != t.tile.height()) {
      throw DimensionMismatch("tile pixels do not match the tile extent");
    }
  }

  FusedResult result;
  result.masks.resize(tiles.size());

  // Step 1: trees and patch sequences stay with the owner.
  std::vector<PatchTree> trees(tiles.size());
  std::vector<Bytes> tree_bytes(tiles.size());
  std::vector<PatchSequence> local(tiles.size());
  for (std::size_t i = 0; i < tiles.size(); ++i) {
    trees[i] = tile_tree(tiles[i].pixels, options);
    tree_bytes[i] = trees[i].serialize();
    local[i] = patchify(tiles[i].pixels, trees[i], options.patch_size);
    result.raw_bytes += tiles[i].pixels.size() * sizeof(std::uint16_t);
    result.patch_count += local[i].count();
  }
  auto dest_of = [&](const SliceTile& t) { return t.z % n; };

  // Step 2: payloads to the slice's segmentation rank; trees travel as metadata.
  std::vector<std::vector<Bytes>> meta(un, std::vector<Bytes>(un));
  std::vector<std::vector<Bytes>> payload(un, std::vector<Bytes>(un));
  for (std::size_t i = 0; i < tiles.size(); ++i) {
    const auto src = static_cast<std::size_t>(tiles[i].owner);
    const auto dst = static_cast<std::size_t>(dest_of(tiles[i]));
    Bytes& m = meta[src][dst];
    put_u32(m, static_cast<std::uint32_t>(i));
    put_u32(m, static_cast<std::uint32_t>(tree_bytes[i].size()));
    m.insert(m.end(), tree_bytes[i].begin(), tree_bytes[i].end());
    append_u16(payload[src][dst], local[i].values);
    result.payload_bytes += local[i].values.size() * sizeof(std::uint16_t);
    result.tree_bytes += tree_bytes[i].size();
  }
  std::vector<int> group(un);
  std::iota(group.begin(), group.end(), 0);
  auto meta_recv = fabric.all_to_all_v(meta, group);
  auto payload_recv = fabric.all_to_all_v(payload, group);
  result.time += meta_recv.time + payload_recv.time;

  // Step 3 on each segmentation rank, step 4 packs masks back per source.
  std::vector<std::vector<Bytes>> back(un, std::vector<Bytes>(un));
  for (std::size_t r = 0; r < un; ++r) {
    for (std::size_t src = 0; src < un; ++src) {
      const Bytes& m = meta_recv.recv[r][src];
      const Bytes& values = payload_recv.recv[r][src];
      std::size_t at = 0;
      std::size_t value_at = 0;
      while (at < m.size()) {
        get_u32(m, at);
        const std::size_t len = get_u32(m, at);
        if (at + len > m.size()) throw FormatError("fused metadata truncated");
        const PatchTree tree = PatchTree::deserialize(std::span<const std::byte>(m).subspan(at, len));
        at += len;
        PatchSequence seq;
        seq.kind = PayloadKind::Image;
        seq.patch_size = options.patch_size;
        seq.regions = tree.leaf_regions();
        seq.values.resize(tree.leaf_count() * pp);
        if (value_at + seq.values.size() * 2 > values.size()) throw FormatError("fused payload truncated");
        for (std::size_t k = 0; k < seq.values.size(); ++k) {
          seq.values[k] = static_cast<std::uint16_t>(static_cast<unsigned>(values[value_at + 2 * k]) |
                                                     (static_cast<unsigned>(values[value_at + 2 * k + 1]) << 8));
        }
        value_at += seq.values.size() * 2;
        const PatchSequence masks = seg.segment(seq);
        if (masks.values.size() != seq.values.size() || masks.regions != seq.regions) {
          throw DimensionMismatch("segmenter changed the patch sequence shape");
        }
        std::vector<std::uint8_t> labels(masks.values.size());
        for (std::size_t k = 0; k < labels.size(); ++k) {
          if (masks.values[k] > 3) throw InvalidArgument("segmenter produced a label >= 4");
          labels[k] = static_cast<std::uint8_t>(masks.values[k]);
        }
        const Bytes packed = pack_labels(labels);
        back[r][src].insert(back[r][src].end(), packed.begin(), packed.end());
      }
      if (value_at != values.size()) throw FormatError("fused payload has trailing bytes");
    }
  }
  auto back_recv = fabric.all_to_all_v(back, group);
  result.time += back_recv.time;

  // Step 5: depatch with the retained trees, in the order each rank sent them.
  std::vector<std::vector<std::size_t>> cursor(un, std::vector<std::size_t>(un, 0));
  for (std::size_t i = 0; i < tiles.size(); ++i) {
    const auto owner = static_cast<std::size_t>(tiles[i].owner);
    const auto seg_rank = static_cast<std::size_t>(dest_of(tiles[i]));
    const Bytes& in = back_recv.recv[owner][seg_rank];
    const std::size_t labels = trees[i].leaf_count() * pp;
    const std::size_t nbytes = (labels + 3) / 4;
    std::size_t& at = cursor[owner][seg_rank];
    if (at + nbytes > in.size()) throw FormatError("fused mask reply truncated");
    const auto unpacked = unpack_labels(std::span<const std::byte>(in).subspan(at, nbytes), labels);
    at += nbytes;
    result.mask_bytes += nbytes;
    PatchSequence masks;
    masks.kind = PayloadKind::Mask;
    masks.patch_size = options.patch_size;
    masks.regions = trees[i].leaf_regions();
    masks.values.assign(unpacked.begin(), unpacked.end());
    result.masks[i] = depatch(masks, trees[i]);
  }
  return result;
}

std::vector<std::byte> pack_labels(std::span<const std::uint8_t> labels) {
  std::vector<std::byte> out((labels.size() + 3) / 4, std::byte{0});
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] > 3) throw InvalidArgument("label >= 4 cannot be packed into 2 bits");
    out[i / 4] |= static_cast<std::byte>(labels[i] << (2 * (i % 4)));
  }
  return out;
}

std::vector<std::uint8_t> unpack_labels(std::span<const std::byte> payload, std::size_t count) {
  if (payload.size() != (count + 3) / 4) throw FormatError("bitmap payload size mismatch");
  std::vector<std::uint8_t> out(count);
  for (std::size_t i = 0; i < count; ++i) {
    out[i] = static_cast<std::uint8_t>((static_cast<unsigned>(payload[i / 4]) >> (2 * (i % 4))) & 3u);
  }
  return out;
}

BitmapMask encode_bitmap(const Volume<std::uint8_t>& mask) {
  return BitmapMask{mask.nx(), mask.ny(), mask.nz(), pack_labels(mask.data())};
}

Volume<std::uint8_t> decode_bitmap(const BitmapMask& bitmap) {
  Volume<std::uint8_t> out(bitmap.nx, bitmap.ny, bitmap.nz);
  out.data() = unpack_labels(bitmap.payload, bitmap.voxel_count());
  return out;
}

namespace {

void check_same_dims(const Volume<std::uint8_t>& a, const Volume<std::uint8_t>& b) {
  if (a.nx() != b.nx() || a.ny() != b.ny() || a.nz() != b.nz()) {
    throw DimensionMismatch("masks differ in extent");
  }
}

}  // namespace

double dice(const Volume<std::uint8_t>& pred, const Volume<std::uint8_t>& truth, std::uint8_t label) {
  check_same_dims(pred, truth);
  std::size_t p = 0, t = 0, both = 0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    const bool a = pred.data()[i] == label;
    const bool b = truth.data()[i] == label;
    p += a;
    t += b;
    both += a && b;
  }
  if (p + t == 0) return 1.0;
  return 2.0 * static_cast<double>(both) / static_cast<double>(p + t);
}

double macro_dice(const Volume<std::uint8_t>& pred, const Volume<std::uint8_t>& truth) {
  check_same_dims(pred, truth);
  std::array<bool, 256> present{};
  for (auto v : truth.data()) present[v] = true;
  double sum = 0.0;
  int n = 0;
  for (int c = 0; c < 256; ++c) {
    if (!present[static_cast<std::size_t>(c)]) continue;
    sum += dice(pred, truth, static_cast<std::uint8_t>(c));
    ++n;
  }
  return n == 0 ? 1.0 : sum / n;
}

std::vector<std::size_t> Components::histogram() const {
  const int top = bins.empty() ? -1 : *std::max_element(bins.begin(), bins.end());
  std::vector<std::size_t> h(static_cast<std::size_t>(top + 1), 0);
  for (int b : bins) ++h[static_cast<std::size_t>(b)];
  return h;
}

std::string Components::csv() const {
  std::ostringstream os;
  os << "component,size,rank,bin\n";
  for (std::size_t i = 0; i < sizes.size(); ++i) {
    os << (i + 1) << ',' << sizes[i] << ',' << rank[i] << ',' << bins[i] << '\n';
  }
  return os.str();
}

namespace {

struct DisjointSet {
  std::vector<std::size_t> parent;

  explicit DisjointSet(std::size_t n) : parent(n) { std::iota(parent.begin(), parent.end(), std::size_t{0}); }
  std::size_t find(std::size_t i) {
    while (parent[i] != i) {
      parent[i] = parent[parent[i]];
      i = parent[i];
    }
    return i;
  }
  void unite(std::size_t a, std::size_t b) {
    a = find(a);
    b = find(b);
    if (a == b) return;
    if (a < b) std::swap(a, b);
    parent[a] = b;
  }
};

}  // namespace

Components connected_components(const Volume<std::uint8_t>& mask, std::uint8_t label,
                                const ComponentOptions& options) {
  require(options.connectivity == 6 || options.connectivity == 26, "connectivity must be 6 or 26");
  require(std::is_sorted(options.bin_edges.begin(), options.bin_edges.end()), "size-bin edges must be ascending");
  const int nx = mask.nx(), ny = mask.ny(), nz = mask.nz();

  // Neighbours that precede a voxel in raster order.
  std::vector<std::array<int, 3>> back;
  for (int dz = -1; dz <= 0; ++dz) {
    for (int dy = -1; dy <= 1; ++dy) {
      for (int dx = -1; dx <= 1; ++dx) {
        if (dz == 0 && (dy > 0 || (dy == 0 && dx >= 0))) continue;
        if (options.connectivity == 6 && std::abs(dx) + std::abs(dy) + std::abs(dz) != 1) continue;
        back.push_back({dx, dy, dz});
      }
    }
  }

  DisjointSet ds(mask.size());
  for (int z = 0; z < nz; ++z) {
    for (int y = 0; y < ny; ++y) {
      for (int x = 0; x < nx; ++x) {
        if (mask.at(x, y, z) != label) continue;
        const std::size_t i = mask.index(x, y, z);
        for (const auto& d : back) {
          const int qx = x + d[0], qy = y + d[1], qz = z + d[2];
          if (qx < 0 || qy < 0 || qz < 0 || qx >= nx || qy >= ny) continue;
          if (mask.at(qx, qy, qz) == label) ds.unite(i, mask.index(qx, qy, qz));
        }
      }
    }
  }

  Components out;
  out.labels = Volume<std::int32_t>(nx, ny, nz, 0);
  std::vector<std::int32_t> id_of_root(mask.size(), 0);
  for (std::size_t i = 0; i < mask.size(); ++i) {
    if (mask.data()[i] != label) continue;
    const std::size_t root = ds.find(i);
    if (id_of_root[root] == 0) {
      out.sizes.push_back(0);
      id_of_root[root] = static_cast<std::int32_t>(out.sizes.size());
    }
    const std::int32_t id = id_of_root[root];
    out.labels.data()[i] = id;
    ++out.sizes[static_cast<std::size_t>(id - 1)];
  }

  out.bins.reserve(out.sizes.size());
  for (std::size_t s : out.sizes) {
    if (options.bin_edges.empty()) {
      out.bins.push_back(static_cast<int>(std::bit_width(s)) - 1);
    } else {
      out.bins.push_back(static_cast<int>(
          std::upper_bound(options.bin_edges.begin(), options.bin_edges.end(), s) - options.bin_edges.begin()));
    }
  }
  std::vector<int> order(out.sizes.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](int a, int b) {
    return out.sizes[static_cast<std::size_t>(a)] > out.sizes[static_cast<std::size_t>(b)];
  });
  out.rank.assign(out.sizes.size(), 0);
  for (std::size_t r = 0; r < order.size(); ++r) out.rank[static_cast<std::size_t>(order[r])] = static_cast<int>(r);
  return out;
}

}  // namespace tomofuse
