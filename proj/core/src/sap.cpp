#include "tomofuse/sap.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <functional>
#include <numbers>
#include <queue>

#include "tomofuse/error.hpp"
#include "tomofuse/fbp.hpp"

namespace tomofuse {
namespace {

int next_pow2(int n) {
  int p = 1;
  while (p < n) p <<= 1;
  return p;
}

Image<double> smooth(const Image<float>& image, double sigma) {
  const int w = image.width();
  const int h = image.height();
  const auto k = gaussian_kernel(sigma);
  const int radius = static_cast<int>(k.size() / 2);
  Image<double> tmp(w, h);
  Image<double> out(w, h);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      double acc = 0.0;
      for (int j = -radius; j <= radius; ++j) {
        acc += k[static_cast<std::size_t>(j + radius)] * image.at(std::clamp(x + j, 0, w - 1), y);
      }
      tmp.at(x, y) = acc;
    }
  }
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      double acc = 0.0;
      for (int j = -radius; j <= radius; ++j) {
        acc += k[static_cast<std::size_t>(j + radius)] * tmp.at(x, std::clamp(y + j, 0, h - 1));
      }
      out.at(x, y) = acc;
    }
  }
  return out;
}

}  // namespace

Image<float> canny(const Image<float>& image, double low_ratio, double high_ratio, double sigma) {
  require(low_ratio > 0.0 && low_ratio < high_ratio && high_ratio <= 1.0, "canny needs 0 < low < high <= 1");
  require(sigma >= 0.0, "canny sigma must be >= 0");
  const int w = image.width();
  const int h = image.height();
  Image<float> edges(w, h, 0.0f);
  if (w == 0 || h == 0) return edges;

  const auto s = smooth(image, sigma);
  auto px = [&](int x, int y) { return s.at(std::clamp(x, 0, w - 1), std::clamp(y, 0, h - 1)); };
  Image<double> mag(w, h);
  Image<std::uint8_t> bin(w, h);
  double max_mag = 0.0;
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      const double gx = (px(x + 1, y - 1) + 2.0 * px(x + 1, y) + px(x + 1, y + 1)) -
                        (px(x - 1, y - 1) + 2.0 * px(x - 1, y) + px(x - 1, y + 1));
      const double gy = (px(x - 1, y + 1) + 2.0 * px(x, y + 1) + px(x + 1, y + 1)) -
                        (px(x - 1, y - 1) + 2.0 * px(x, y - 1) + px(x + 1, y - 1));
      const double m = std::hypot(gx, gy);
      mag.at(x, y) = m;
      max_mag = std::max(max_mag, m);
      double a = std::atan2(gy, gx) * 180.0 / std::numbers::pi;
      if (a < 0.0) a += 180.0;
      std::uint8_t b = 0;
      if (a >= 22.5 && a < 67.5) b = 1;
      else if (a >= 67.5 && a < 112.5) b = 2;
      else if (a >= 112.5 && a < 157.5) b = 3;
      bin.at(x, y) = b;
    }
  }
  if (max_mag <= 0.0) return edges;

  // Ties along the gradient keep the pixel on the negative side so plateaus
  // thin to one pixel.
  static constexpr int kDx[4] = {1, 1, 0, -1};
  static constexpr int kDy[4] = {0, 1, 1, 1};
  const double eps = 1e-6 * max_mag;
  auto m_at = [&](int x, int y) { return (x < 0 || y < 0 || x >= w || y >= h) ? 0.0 : mag.at(x, y); };
  const double hi = high_ratio * max_mag;
  const double lo = low_ratio * max_mag;
  Image<std::uint8_t> state(w, h, 0);  // 0 none, 1 weak, 2 strong
  std::vector<std::pair<int, int>> stack;
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      const double m = mag.at(x, y);
      const int b = bin.at(x, y);
      const double before = m_at(x - kDx[b], y - kDy[b]);
      const double after = m_at(x + kDx[b], y + kDy[b]);
      if (!(m > before + eps && m >= after - eps)) continue;
      if (m >= hi) {
        state.at(x, y) = 2;
        stack.emplace_back(x, y);
      } else if (m >= lo) {
        state.at(x, y) = 1;
      }
    }
  }
  while (!stack.empty()) {
    const auto [x, y] = stack.back();
    stack.pop_back();
    edges.at(x, y) = 1.0f;
    for (int dy = -1; dy <= 1; ++dy) {
      for (int dx = -1; dx <= 1; ++dx) {
        const int nx = x + dx;
        const int ny = y + dy;
        if (nx < 0 || ny < 0 || nx >= w || ny >= h) continue;
        if (state.at(nx, ny) == 1) {
          state.at(nx, ny) = 2;
          stack.emplace_back(nx, ny);
        }
      }
    }
  }
  return edges;
}

std::uint64_t z_index(int x, int y, int z, int dimension) {
  require(dimension == 2 || dimension == 3, "z_index dimension must be 2 or 3");
  std::uint64_t out = 0;
  const int coords[3] = {x, y, z};
  for (int bit = 0; bit < 21; ++bit) {
    for (int axis = 0; axis < dimension; ++axis) {
      const std::uint64_t b = (static_cast<std::uint64_t>(coords[axis]) >> bit) & 1u;
      out |= b << (bit * dimension + axis);
    }
  }
  return out;
}

std::vector<Region> PatchTree::leaf_regions() const {
  std::vector<Region> out;
  out.reserve(leaves_.size());
  for (int i : leaves_) out.push_back(nodes_[static_cast<std::size_t>(i)].region);
  return out;
}

void PatchTree::finalize() {
  leaves_.clear();
  splits_ = 0;
  for (std::size_t i = 0; i < nodes_.size(); ++i) {
    if (nodes_[i].is_leaf()) leaves_.push_back(static_cast<int>(i));
    else ++splits_;
  }
  std::sort(leaves_.begin(), leaves_.end(), [&](int a, int b) {
    const auto& ra = nodes_[static_cast<std::size_t>(a)].region;
    const auto& rb = nodes_[static_cast<std::size_t>(b)].region;
    return z_index(ra.x, ra.y, ra.z, dimension_) < z_index(rb.x, rb.y, rb.z, dimension_);
  });
}

class TreeBuilder {
 public:
  using Scorer = std::function<double(const Region&)>;

  static PatchTree build(int dimension, int w, int h, int d, int budget, const Scorer& score) {
    require(budget >= 1, "patch budget must be >= 1");
    PatchTree tree;
    tree.dimension_ = dimension;
    tree.width_ = w;
    tree.height_ = h;
    tree.depth_ = d;
    tree.padded_ = next_pow2(std::max({w, h, dimension == 3 ? d : 1, 1}));
    const Region root{0, 0, 0, tree.padded_};
    tree.nodes_.push_back({root, -1, -1, score(root)});

    struct Entry {
      double score;
      std::uint64_t z;
      int node;
    };
    auto worse = [](const Entry& a, const Entry& b) {
      if (a.score != b.score) return a.score < b.score;
      return a.z > b.z;
    };
    std::priority_queue<Entry, std::vector<Entry>, decltype(worse)> open(worse);
    open.push({tree.nodes_[0].score, 0, 0});

    const int fan = 1 << dimension;
    std::size_t leaves = 1;
    while (leaves + static_cast<std::size_t>(fan - 1) <= static_cast<std::size_t>(budget)) {
      while (!open.empty() && tree.nodes_[static_cast<std::size_t>(open.top().node)].region.size <= 1) open.pop();
      if (open.empty()) break;
      const int parent = open.top().node;
      open.pop();
      const Region pr = tree.nodes_[static_cast<std::size_t>(parent)].region;
      const int half = pr.size / 2;
      const int first = static_cast<int>(tree.nodes_.size());
      tree.nodes_[static_cast<std::size_t>(parent)].first_child = first;
      for (int c = 0; c < fan; ++c) {
        const Region r{pr.x + (c & 1) * half, pr.y + ((c >> 1) & 1) * half, pr.z + ((c >> 2) & 1) * half, half};
        const double v = score(r);
        tree.nodes_.push_back({r, parent, -1, v});
        open.push({v, z_index(r.x, r.y, r.z, dimension), first + c});
      }
      leaves += static_cast<std::size_t>(fan - 1);
    }
    tree.finalize();
    return tree;
  }

  static PatchTree from_flags(int dimension, int w, int h, int d, int padded, const std::vector<bool>& flags) {
    PatchTree tree;
    tree.dimension_ = dimension;
    tree.width_ = w;
    tree.height_ = h;
    tree.depth_ = d;
    tree.padded_ = padded;
    std::size_t at = 0;
    const int fan = 1 << dimension;
    std::function<void(int)> visit = [&](int node) {
      if (at >= flags.size()) throw FormatError("patch tree flags truncated");
      const bool split = flags[at++];
      if (!split) return;
      const Region pr = tree.nodes_[static_cast<std::size_t>(node)].region;
      if (pr.size <= 1) throw FormatError("patch tree splits a unit cell");
      const int half = pr.size / 2;
      const int first = static_cast<int>(tree.nodes_.size());
      tree.nodes_[static_cast<std::size_t>(node)].first_child = first;
      for (int c = 0; c < fan; ++c) {
        const Region r{pr.x + (c & 1) * half, pr.y + ((c >> 1) & 1) * half, pr.z + ((c >> 2) & 1) * half, half};
        tree.nodes_.push_back({r, node, -1, 0.0});
      }
      for (int c = 0; c < fan; ++c) visit(first + c);
    };
    tree.nodes_.push_back({Region{0, 0, 0, padded}, -1, -1, 0.0});
    visit(0);
    if (at != flags.size()) throw FormatError("patch tree has trailing flags");
    tree.finalize();
    return tree;
  }
};

PatchTree build_tree(const Image<float>& field, int budget, SplitCriterion criterion) {
  const int w = field.width();
  const int h = field.height();
  // Summed-area tables over the unpadded image; padding contributes zeros.
  std::vector<double> s1(static_cast<std::size_t>(w + 1) * static_cast<std::size_t>(h + 1), 0.0);
  std::vector<double> s2(s1.size(), 0.0);
  auto idx = [&](int x, int y) { return static_cast<std::size_t>(y) * static_cast<std::size_t>(w + 1) + static_cast<std::size_t>(x); };
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      const double v = field.at(x, y);
      s1[idx(x + 1, y + 1)] = v + s1[idx(x, y + 1)] + s1[idx(x + 1, y)] - s1[idx(x, y)];
      s2[idx(x + 1, y + 1)] = v * v + s2[idx(x, y + 1)] + s2[idx(x + 1, y)] - s2[idx(x, y)];
    }
  }
  auto box = [&](const std::vector<double>& s, const Region& r) {
    const int x0 = std::min(r.x, w), x1 = std::min(r.x + r.size, w);
    const int y0 = std::min(r.y, h), y1 = std::min(r.y + r.size, h);
    return s[idx(x1, y1)] - s[idx(x0, y1)] - s[idx(x1, y0)] + s[idx(x0, y0)];
  };
  auto score = [&](const Region& r) {
    if (criterion == SplitCriterion::EdgeSum) return box(s1, r);
    const double area = static_cast<double>(r.size) * static_cast<double>(r.size);
    const double mean = box(s1, r) / area;
    return std::max(0.0, box(s2, r) / area - mean * mean);
  };
  return TreeBuilder::build(2, w, h, 1, budget, score);
}

PatchTree build_tree(const Volume<float>& field, int budget, SplitCriterion criterion) {
  const int w = field.nx(), h = field.ny(), d = field.nz();
  const auto W = static_cast<std::size_t>(w + 1), H = static_cast<std::size_t>(h + 1);
  std::vector<double> s1(W * H * static_cast<std::size_t>(d + 1), 0.0);
  std::vector<double> s2(s1.size(), 0.0);
  auto idx = [&](int x, int y, int z) {
    return (static_cast<std::size_t>(z) * H + static_cast<std::size_t>(y)) * W + static_cast<std::size_t>(x);
  };
  for (int z = 0; z < d; ++z) {
    for (int y = 0; y < h; ++y) {
      for (int x = 0; x < w; ++x) {
        const double v = field.at(x, y, z);
        for (auto* s : {&s1, &s2}) {
          auto& t = *s;
          const double val = s == &s1 ? v : v * v;
          t[idx(x + 1, y + 1, z + 1)] = val + t[idx(x, y + 1, z + 1)] + t[idx(x + 1, y, z + 1)] +
                                        t[idx(x + 1, y + 1, z)] - t[idx(x, y, z + 1)] - t[idx(x, y + 1, z)] -
                                        t[idx(x + 1, y, z)] + t[idx(x, y, z)];
        }
      }
    }
  }
  auto box = [&](const std::vector<double>& t, const Region& r) {
    const int x0 = std::min(r.x, w), x1 = std::min(r.x + r.size, w);
    const int y0 = std::min(r.y, h), y1 = std::min(r.y + r.size, h);
    const int z0 = std::min(r.z, d), z1 = std::min(r.z + r.size, d);
    return t[idx(x1, y1, z1)] - t[idx(x0, y1, z1)] - t[idx(x1, y0, z1)] - t[idx(x1, y1, z0)] + t[idx(x0, y0, z1)] +
           t[idx(x0, y1, z0)] + t[idx(x1, y0, z0)] - t[idx(x0, y0, z0)];
  };
  auto score = [&](const Region& r) {
    if (criterion == SplitCriterion::EdgeSum) return box(s1, r);
    const double vol = std::pow(static_cast<double>(r.size), 3);
    const double mean = box(s1, r) / vol;
    return std::max(0.0, box(s2, r) / vol - mean * mean);
  };
  return TreeBuilder::build(3, w, h, d, budget, score);
}

namespace {

constexpr char kTreeMagic[4] = {'T', 'P', 'T', 'R'};

void put_u32(std::vector<std::byte>& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::byte>((v >> (8 * i)) & 0xFFu));
}

std::uint32_t get_u32(std::span<const std::byte> in, std::size_t at) {
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(in[at + static_cast<std::size_t>(i)]) << (8 * i);
  return v;
}

}  // namespace

std::vector<std::byte> PatchTree::serialize() const {
  std::vector<bool> flags;
  std::function<void(int)> visit = [&](int node) {
    const auto& n = nodes_[static_cast<std::size_t>(node)];
    flags.push_back(!n.is_leaf());
    if (!n.is_leaf()) {
      for (int c = 0; c < fanout(); ++c) visit(n.first_child + c);
    }
  };
  if (!nodes_.empty()) visit(0);
  std::vector<std::byte> out;
  for (char c : kTreeMagic) out.push_back(static_cast<std::byte>(c));
  out.push_back(static_cast<std::byte>(dimension_));
  put_u32(out, static_cast<std::uint32_t>(width_));
  put_u32(out, static_cast<std::uint32_t>(height_));
  put_u32(out, static_cast<std::uint32_t>(depth_));
  put_u32(out, static_cast<std::uint32_t>(padded_));
  put_u32(out, static_cast<std::uint32_t>(flags.size()));
  std::vector<std::byte> packed((flags.size() + 7) / 8, std::byte{0});
  for (std::size_t i = 0; i < flags.size(); ++i) {
    if (flags[i]) packed[i / 8] |= static_cast<std::byte>(1u << (i % 8));
  }
  out.insert(out.end(), packed.begin(), packed.end());
  return out;
}

PatchTree PatchTree::deserialize(std::span<const std::byte> bytes) {
  constexpr std::size_t kHeader = 4 + 1 + 5 * 4;
  if (bytes.size() < kHeader) throw FormatError("patch tree header truncated");
  if (std::memcmp(bytes.data(), kTreeMagic, 4) != 0) throw FormatError("bad patch tree magic");
  const int dimension = static_cast<int>(bytes[4]);
  if (dimension != 2 && dimension != 3) throw FormatError("bad patch tree dimension");
  const int w = static_cast<int>(get_u32(bytes, 5));
  const int h = static_cast<int>(get_u32(bytes, 9));
  const int d = static_cast<int>(get_u32(bytes, 13));
  const int padded = static_cast<int>(get_u32(bytes, 17));
  const std::size_t count = get_u32(bytes, 21);
  if (padded < 1 || (padded & (padded - 1)) != 0) throw FormatError("bad patch tree padded size");
  if (bytes.size() != kHeader + (count + 7) / 8) throw FormatError("patch tree payload size mismatch");
  std::vector<bool> flags(count);
  for (std::size_t i = 0; i < count; ++i) {
    flags[i] = (static_cast<unsigned>(bytes[kHeader + i / 8]) >> (i % 8)) & 1u;
  }
  return TreeBuilder::from_flags(dimension, w, h, d, padded, flags);
}

std::span<const std::uint16_t> PatchSequence::patch(std::size_t i) const {
  const std::size_t n = static_cast<std::size_t>(patch_size) * static_cast<std::size_t>(patch_size);
  return {values.data() + i * n, n};
}

std::span<std::uint16_t> PatchSequence::patch(std::size_t i) {
  const std::size_t n = static_cast<std::size_t>(patch_size) * static_cast<std::size_t>(patch_size);
  return {values.data() + i * n, n};
}

namespace {

template <typename T>
PatchSequence patchify_impl(const Image<T>& img, const PatchTree& tree, int p, PayloadKind kind) {
  require(p >= 1, "patch resolution must be >= 1");
  require(tree.dimension() == 2, "patchify needs a quadtree");
  if (img.width() != tree.width() || img.height() != tree.height()) {
    throw DimensionMismatch("patchify: slice extent differs from the tree extent");
  }
  PatchSequence seq;
  seq.kind = kind;
  seq.patch_size = p;
  seq.regions = tree.leaf_regions();
  const std::size_t pp = static_cast<std::size_t>(p) * static_cast<std::size_t>(p);
  seq.values.assign(seq.regions.size() * pp, 0);
  const int w = img.width();
  const int h = img.height();
  auto px = [&](int x, int y) -> double {
    return (x < 0 || y < 0 || x >= w || y >= h) ? 0.0 : static_cast<double>(img.at(x, y));
  };
  for (std::size_t li = 0; li < seq.regions.size(); ++li) {
    const Region& r = seq.regions[li];
    auto out = seq.patch(li);
    for (int j = 0; j < p; ++j) {
      for (int i = 0; i < p; ++i) {
        double v = 0.0;
        if (kind == PayloadKind::Mask) {
          const int sx = r.x + static_cast<int>((2LL * i + 1) * r.size / (2LL * p));
          const int sy = r.y + static_cast<int>((2LL * j + 1) * r.size / (2LL * p));
          v = px(sx, sy);
        } else {
          const double scale = static_cast<double>(r.size) / static_cast<double>(p);
          const double fx = r.x + (i + 0.5) * scale - 0.5;
          const double fy = r.y + (j + 0.5) * scale - 0.5;
          // Clamp to the leaf so patches only see their own region.
          const double cx = std::clamp(fx, static_cast<double>(r.x), static_cast<double>(r.x + r.size - 1));
          const double cy = std::clamp(fy, static_cast<double>(r.y), static_cast<double>(r.y + r.size - 1));
          const int x0 = static_cast<int>(std::floor(cx));
          const int y0 = static_cast<int>(std::floor(cy));
          const int x1 = std::min(x0 + 1, r.x + r.size - 1);
          const int y1 = std::min(y0 + 1, r.y + r.size - 1);
          const double ax = cx - x0;
          const double ay = cy - y0;
          v = (1 - ay) * ((1 - ax) * px(x0, y0) + ax * px(x1, y0)) + ay * ((1 - ax) * px(x0, y1) + ax * px(x1, y1));
          v = std::clamp(std::round(v), 0.0, 65535.0);
        }
        out[static_cast<std::size_t>(j) * static_cast<std::size_t>(p) + static_cast<std::size_t>(i)] =
            static_cast<std::uint16_t>(v);
      }
    }
  }
  return seq;
}

}  // namespace

PatchSequence patchify(const Image<std::uint16_t>& slice, const PatchTree& tree, int patch_size) {
  return patchify_impl(slice, tree, patch_size, PayloadKind::Image);
}

PatchSequence patchify(const Image<std::uint8_t>& mask, const PatchTree& tree, int patch_size) {
  return patchify_impl(mask, tree, patch_size, PayloadKind::Mask);
}

Image<std::uint8_t> depatch(const PatchSequence& masks, const PatchTree& tree) {
  require(masks.patch_size >= 1, "patch resolution must be >= 1");
  if (masks.count() != tree.leaf_count()) throw DimensionMismatch("depatch: sequence length differs from leaf count");
  const auto regions = tree.leaf_regions();
  if (!masks.regions.empty() && masks.regions != regions) {
    throw DimensionMismatch("depatch: sequence regions disagree with the tree");
  }
  const int p = masks.patch_size;
  Image<std::uint8_t> out(tree.width(), tree.height(), 0);
  for (std::size_t li = 0; li < regions.size(); ++li) {
    const Region& r = regions[li];
    const auto patch = masks.patch(li);
    const int x_end = std::min(r.x + r.size, tree.width());
    const int y_end = std::min(r.y + r.size, tree.height());
    for (int y = r.y; y < y_end; ++y) {
      const auto j = static_cast<std::size_t>((2LL * (y - r.y) + 1) * p / (2LL * r.size));
      for (int x = r.x; x < x_end; ++x) {
        const auto i = static_cast<std::size_t>((2LL * (x - r.x) + 1) * p / (2LL * r.size));
        out.at(x, y) = static_cast<std::uint8_t>(patch[j * static_cast<std::size_t>(p) + i]);
      }
    }
  }
  return out;
}

}  // namespace tomofuse
