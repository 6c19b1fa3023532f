#pragma once

#include <array>
#include <map>
#include <string>
#include <tuple>
#include <vector>

#include "gae/retrieval/store.hpp"

namespace gae::retrieval {

inline constexpr std::array<std::size_t, 3> kRecallKs = {1, 5, 10};

struct RecallCell {
  long queries = 0;
  std::array<long, 3> hits{};  // at K = 1, 5, 10

  double recall(std::size_t which) const { return queries ? static_cast<double>(hits[which]) / queries : 0.0; }
};

/// Grouped by (subtask, source, split).
struct RecallReport {
  std::map<std::tuple<pairs::Subtask, std::string, pairs::Split>, RecallCell> cells;

  /// Pools every subtask of a source within a split.
  std::map<std::pair<std::string, pairs::Split>, RecallCell> by_source() const;
  std::vector<std::string> sources() const;
  std::vector<pairs::Split> splits() const;

  /// One row per split, R@1/5/10 columns per source (percent, 1 decimal).
  std::string overall_tsv() const;
  /// One row per (split, source), one "R@1/R@5/R@10" column per subtask.
  std::string subtask_tsv() const;
};

/// Stores keyed by the pool kind they hold.
struct StoreSet {
  std::map<pairs::PoolKind, EmbeddingStore> stores;
  const EmbeddingStore& get(pairs::PoolKind k) const;
};

/// 1-based rank of `positive_row` under the top_k ordering.
std::size_t rank_of(const EmbeddingStore& store, std::span<const double> query, std::size_t positive_row);

/// R@K over `pairs`, whose key embeddings are given row-aligned in
/// `queries`. Throws IntegrityError naming the first pair whose positive is
/// absent from its pool. Queries are scored on `threads` workers and merged
/// in order.
RecallReport recall_at_k(const std::vector<pairs::RetrievalPair>& pairs, const std::vector<Eigen::VectorXd>& queries,
                         const StoreSet& stores, int threads = 1);

}  // namespace gae::retrieval
