#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "gae/common/image.hpp"

namespace gae::tokensel {

inline constexpr int kDefaultPatchSize = 28;

/// Screenshot cut into patch_size squares; edge patches cover the remainder.
struct PatchGrid {
  int rows = 0;
  int cols = 0;
  int patch_size = kDefaultPatchSize;
  std::vector<std::array<double, 3>> features;  // mean RGB in [0,255], row-major

  std::size_t size() const { return features.size(); }
  const std::array<double, 3>& at(int r, int c) const { return features[static_cast<std::size_t>(r * cols + c)]; }
};

PatchGrid make_patch_grid(const RgbImage& image, int patch_size = kDefaultPatchSize);

struct ComponentLabeling {
  std::vector<int> labels;  // smallest patch index in the component
  int component_count = 0;

  /// Members of each component in ascending patch order, components
  /// ordered by label.
  std::vector<std::vector<int>> components() const;
};

/// Connected components over 4-neighbour edges whose endpoint features
/// differ by at most `delta` in L-infinity distance.
ComponentLabeling build_components(const PatchGrid& grid, double delta = 0.0);

enum class SelectMode { kRandom, kFirstPatch };

struct SelectionMask {
  std::vector<bool> keep;
  int realized_keep_count = 0;
};

/// Patches kept in a component of size m at mask ratio r: max(1, ceil((1-r)m)).
int keep_count(int m, double mask_ratio);

/// Keep-mask at `mask_ratio`; singletons always survive. Random mode draws
/// the kept subset of each component from a stream seeded by `seed`.
SelectionMask select_tokens(const ComponentLabeling& labeling, double mask_ratio, std::uint64_t seed,
                            SelectMode mode = SelectMode::kRandom);

/// Per-image stream: same (image hash, seed, step) gives the same mask.
std::uint64_t mask_seed(const std::string& content_hash, std::uint64_t seed, std::uint64_t step);

struct GridPos {
  int row = 0;
  int col = 0;
  auto operator<=>(const GridPos&) const = default;
};

std::vector<GridPos> grid_positions(int rows, int cols);

/// Drops masked positions; survivors keep their original grid coordinates.
/// Throws UserError on a length mismatch.
std::vector<GridPos> apply_mask(std::span<const GridPos> positions, const SelectionMask& mask);

/// "rows x cols:" followed by alternating run lengths starting with kept
/// patches, e.g. "2x2:1,1,2".
std::string mask_rle(int rows, int cols, const SelectionMask& mask);

/// Dropped patches dimmed towards grey, kept patches untouched.
RgbImage mask_overlay(const RgbImage& image, const PatchGrid& grid, const SelectionMask& mask);

}  // namespace gae::tokensel
