#include "gae/tokensel/select.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "gae/common/error.hpp"
#include "gae/common/hash.hpp"
#include "gae/common/rng.hpp"

namespace gae::tokensel {

PatchGrid make_patch_grid(const RgbImage& image, int patch_size) {
  if (patch_size <= 0) throw UserError("patch size must be positive");
  if (image.width <= 0 || image.height <= 0) throw UserError("cannot patch an empty image");
  PatchGrid grid;
  grid.patch_size = patch_size;
  grid.rows = (image.height + patch_size - 1) / patch_size;
  grid.cols = (image.width + patch_size - 1) / patch_size;
  grid.features.resize(static_cast<std::size_t>(grid.rows) * grid.cols);
  for (int r = 0; r < grid.rows; ++r) {
    for (int c = 0; c < grid.cols; ++c) {
      const int y1 = std::min(image.height, (r + 1) * patch_size);
      const int x1 = std::min(image.width, (c + 1) * patch_size);
      std::array<double, 3> sum{0, 0, 0};
      for (int y = r * patch_size; y < y1; ++y) {
        for (int x = c * patch_size; x < x1; ++x) {
          const auto* px = image.at(x, y);
          for (int k = 0; k < 3; ++k) sum[k] += px[k];
        }
      }
      const double n = static_cast<double>(y1 - r * patch_size) * (x1 - c * patch_size);
      auto& f = grid.features[static_cast<std::size_t>(r * grid.cols + c)];
      for (int k = 0; k < 3; ++k) f[k] = sum[k] / n;
    }
  }
  return grid;
}

namespace {

class DisjointSets {
 public:
  explicit DisjointSets(std::size_t n) : parent_(n), size_(n, 1) { std::iota(parent_.begin(), parent_.end(), 0); }

  int find(int x) {
    while (parent_[x] != x) {
      parent_[x] = parent_[parent_[x]];
      x = parent_[x];
    }
    return x;
  }

  void unite(int a, int b) {
    a = find(a);
    b = find(b);
    if (a == b) return;
    if (size_[a] < size_[b]) std::swap(a, b);
    parent_[b] = a;
    size_[a] += size_[b];
  }

 private:
  std::vector<int> parent_;
  std::vector<int> size_;
};

bool similar(const std::array<double, 3>& a, const std::array<double, 3>& b, double delta) {
  for (int k = 0; k < 3; ++k) {
    if (std::abs(a[k] - b[k]) > delta) return false;
  }
  return true;
}

}  // namespace

std::vector<std::vector<int>> ComponentLabeling::components() const {
  std::vector<std::vector<int>> out;
  std::vector<int> slot(labels.size(), -1);
  for (std::size_t p = 0; p < labels.size(); ++p) {
    const int root = labels[p];
    if (slot[root] < 0) {
      slot[root] = static_cast<int>(out.size());
      out.emplace_back();
    }
    out[slot[root]].push_back(static_cast<int>(p));
  }
  return out;
}

ComponentLabeling build_components(const PatchGrid& grid, double delta) {
  if (delta < 0) throw UserError("similarity threshold must be non-negative");
  const std::size_t n = grid.size();
  DisjointSets sets(n);
  for (int r = 0; r < grid.rows; ++r) {
    for (int c = 0; c < grid.cols; ++c) {
      const int p = r * grid.cols + c;
      if (c + 1 < grid.cols && similar(grid.at(r, c), grid.at(r, c + 1), delta)) sets.unite(p, p + 1);
      if (r + 1 < grid.rows && similar(grid.at(r, c), grid.at(r + 1, c), delta)) sets.unite(p, p + grid.cols);
    }
  }
  ComponentLabeling out;
  out.labels.assign(n, -1);
  std::vector<int> smallest(n, -1);
  for (std::size_t p = 0; p < n; ++p) {
    const int root = sets.find(static_cast<int>(p));
    if (smallest[root] < 0) {
      smallest[root] = static_cast<int>(p);
      ++out.component_count;
    }
    out.labels[p] = smallest[root];
  }
  return out;
}

int keep_count(int m, double mask_ratio) {
  if (m <= 1) return m;
  // The epsilon absorbs representation error in (1 - r) * m, e.g. r = 0.3.
  const double raw = std::ceil((1.0 - mask_ratio) * m - 1e-9);
  return std::clamp(static_cast<int>(raw), 1, m);
}

SelectionMask select_tokens(const ComponentLabeling& labeling, double mask_ratio, std::uint64_t seed,
                            SelectMode mode) {
  if (!(mask_ratio >= 0.0 && mask_ratio < 1.0)) throw UserError("mask ratio must lie in [0, 1)");
  SelectionMask mask;
  mask.keep.assign(labeling.labels.size(), true);
  mask.realized_keep_count = static_cast<int>(labeling.labels.size());
  if (mask_ratio == 0.0) return mask;
  Rng rng(seed);
  for (auto& members : labeling.components()) {
    const int m = static_cast<int>(members.size());
    const int k = keep_count(m, mask_ratio);
    if (k == m) continue;
    if (mode == SelectMode::kRandom) rng.shuffle(std::span<int>(members));
    for (int idx = k; idx < m; ++idx) mask.keep[members[idx]] = false;
    mask.realized_keep_count -= m - k;
  }
  return mask;
}

std::uint64_t mask_seed(const std::string& content_hash, std::uint64_t seed, std::uint64_t step) {
  return mix64(derive_seed(seed, content_hash) ^ mix64(step));
}

std::vector<GridPos> grid_positions(int rows, int cols) {
  std::vector<GridPos> out;
  out.reserve(static_cast<std::size_t>(rows) * cols);
  for (int r = 0; r < rows; ++r) {
    for (int c = 0; c < cols; ++c) out.push_back({r, c});
  }
  return out;
}

std::vector<GridPos> apply_mask(std::span<const GridPos> positions, const SelectionMask& mask) {
  if (positions.size() != mask.keep.size()) {
    throw UserError("mask covers " + std::to_string(mask.keep.size()) + " patches but the image slot has " +
                    std::to_string(positions.size()));
  }
  std::vector<GridPos> out;
  out.reserve(static_cast<std::size_t>(mask.realized_keep_count));
  for (std::size_t p = 0; p < positions.size(); ++p) {
    if (mask.keep[p]) out.push_back(positions[p]);
  }
  return out;
}

std::string mask_rle(int rows, int cols, const SelectionMask& mask) {
  std::string out = std::to_string(rows) + "x" + std::to_string(cols) + ":";
  bool current = true;
  std::size_t run = 0;
  bool first = true;
  auto flush = [&] {
    if (!first) out += ",";
    out += std::to_string(run);
    first = false;
  };
  for (bool k : mask.keep) {
    if (k != current) {
      flush();
      current = k;
      run = 0;
    }
    ++run;
  }
  flush();
  return out;
}

RgbImage mask_overlay(const RgbImage& image, const PatchGrid& grid, const SelectionMask& mask) {
  if (mask.keep.size() != grid.size()) throw UserError("mask does not match the patch grid");
  RgbImage out = image;
  for (int y = 0; y < image.height; ++y) {
    for (int x = 0; x < image.width; ++x) {
      const int p = (y / grid.patch_size) * grid.cols + x / grid.patch_size;
      if (mask.keep[p]) continue;
      auto* px = out.at(x, y);
      for (int k = 0; k < 3; ++k) px[k] = static_cast<std::uint8_t>((px[k] + 2 * 128) / 3);
    }
  }
  return out;
}

}  // namespace gae::tokensel
