#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "gae/trajectory/types.hpp"

namespace gae::trajectory {

/// Generator for small on-disk corpora used by tests, the acceptance suite
/// and `gaetk synth`. Every trajectory gets its own vocabulary and palette,
/// so keys and values are separable by construction.
struct SyntheticOptions {
  std::string source = "Synthetic";
  int trajectories = 10;
  /// Explicit step counts; when empty, lengths are drawn from
  /// [min_steps, max_steps].
  std::vector<int> lengths;
  int min_steps = 1;
  int max_steps = 6;
  int image_width = 56;
  int image_height = 56;
  /// Probability that a state reuses the shared "home page" screenshot,
  /// which produces duplicate content hashes across trajectories.
  double shared_home_probability = 0.0;
  bool fill_descriptions = true;
  std::uint64_t seed = 1;
};

/// Writes `<root>/manifest.jsonl` and `<root>/images/*.png`, then returns
/// the records as re-ingested from disk.
std::vector<TrajectoryRecord> write_synthetic_corpus(const std::filesystem::path& root,
                                                     const SyntheticOptions& options);

/// Deterministic pseudo-word for (seed, k), e.g. "vokari".
std::string synthetic_word(std::uint64_t seed, int k);

}  // namespace gae::trajectory
