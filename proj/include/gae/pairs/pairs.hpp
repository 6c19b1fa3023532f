#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "gae/annotation/annotate.hpp"
#include "gae/pairs/subtask.hpp"
#include "gae/pairs/templates.hpp"
#include "gae/trajectory/corpus.hpp"

namespace gae::pairs {

/// A state (i == j), an interval τ_{i:j}, or a whole trajectory (1..n).
struct SegmentRef {
  std::string trajectory_id;
  SegmentKind kind = SegmentKind::kState;
  int i = 1;
  int j = 1;

  int length() const { return j - i + 1; }
  /// Pool member id: "T#i" for states, "T" for full trajectories,
  /// "T[i:j]" for intervals.
  std::string id() const;

  static SegmentRef state(std::string trajectory_id, int index) {
    return {std::move(trajectory_id), SegmentKind::kState, index, index};
  }
  static SegmentRef interval(std::string trajectory_id, int i, int j) {
    return {std::move(trajectory_id), SegmentKind::kInterval, i, j};
  }
  static SegmentRef full(std::string trajectory_id, int n) {
    return {std::move(trajectory_id), SegmentKind::kFull, 1, n};
  }

  auto operator<=>(const SegmentRef&) const = default;
  bool operator==(const SegmentRef&) const = default;
};

enum class Split { kUnassigned, kTrain, kInd, kOod };
std::string_view split_name(Split s);
Split parse_split(std::string_view name);

struct RetrievalPair {
  std::string id;             // "<trajectory>/<subtask code>/<ordinal>"
  std::string trajectory_id;  // trajectory the pair was extracted from
  std::string source;
  Subtask subtask = Subtask::kQueryToGold;
  std::string key_query;      // instruction template with the description filled in
  std::optional<SegmentRef> key_segment;
  SegmentRef value_segment;
  Split split = Split::kUnassigned;
};

struct ExtractOptions {
  std::uint64_t seed = 0;
  /// Global screenshot dedup. When null, dedup is local to the trajectory.
  const trajectory::StatePool* state_pool = nullptr;
};

/// All twelve subtasks for one trajectory. `silver` may be null, in which
/// case only the q->τ_∼ pairs are skipped (and a warning is logged).
/// Template choice uses a stream derived from (seed, trajectory id), so the
/// output does not depend on the order trajectories are processed in.
std::vector<RetrievalPair> extract_pairs(const trajectory::TrajectoryRecord& t,
                                         const annotation::SilverSet* silver,
                                         const InstructionTemplateSet& templates,
                                         const ExtractOptions& options);

/// extract_pairs over a corpus with global dedup; silver sets are looked
/// up by trajectory id.
std::vector<RetrievalPair> extract_corpus_pairs(const std::vector<trajectory::TrajectoryRecord>& corpus,
                                                const std::map<std::string, annotation::SilverSet>& silver,
                                                const InstructionTemplateSet& templates,
                                                std::uint64_t seed);

// ---------------------------------------------------------------------------
// Candidate pools
// ---------------------------------------------------------------------------

struct CandidatePool {
  PoolKind kind = PoolKind::kState;
  std::vector<SegmentRef> members;  // sorted by id(), unique

  bool contains(const SegmentRef& s) const;
  std::size_t size() const { return members.size(); }
};

struct CandidatePools {
  CandidatePool state{PoolKind::kState, {}};
  CandidatePool trajectory{PoolKind::kTrajectory, {}};
  CandidatePool interval{PoolKind::kInterval, {}};

  const CandidatePool& get(PoolKind k) const;
  CandidatePool& get(PoolKind k);
};

/// Length limits for the lite benchmark. Whole trajectories are kept when
/// n < trajectory_cap ("fewer than 10 steps"); intervals and other segments
/// when their length <= interval_cap.
struct LiteCap {
  int trajectory_cap = 10;
  int interval_cap = 10;

  bool keeps(const SegmentRef& s) const {
    return s.kind == SegmentKind::kFull ? s.length() < trajectory_cap
           : s.kind == SegmentKind::kInterval ? s.length() <= interval_cap
                                               : true;
  }
};

CandidatePools build_pools(const std::vector<trajectory::TrajectoryRecord>& corpus,
                           const trajectory::StatePool& state_pool,
                           const std::optional<LiteCap>& lite = std::nullopt);

/// Pools restricted to the values referenced by `pairs`.
CandidatePools mini_pools(const std::vector<RetrievalPair>& pairs);

/// Drops pairs whose key or value segment exceeds the cap. State-only pairs
/// always survive.
std::vector<RetrievalPair> apply_lite_cap(std::vector<RetrievalPair> pairs, const LiteCap& cap = {});

/// Throws IntegrityError naming the first pair whose value is missing from
/// the matching pool.
void check_referential_integrity(const std::vector<RetrievalPair>& pairs, const CandidatePools& pools);

// ---------------------------------------------------------------------------
// Splits
// ---------------------------------------------------------------------------

struct SplitOptions {
  double ood_fraction = 0.05;
  double train_fraction = 0.9;
  std::uint64_t seed = 0;
  /// Exactly round(train_fraction * m) train pairs instead of i.i.d. draws.
  bool stratified = false;
};

/// Whole trajectories are held out as OOD first; every pair touching one is
/// OOD. The rest are split into train/IND.
std::vector<RetrievalPair> split_dataset(std::vector<RetrievalPair> pairs,
                                         const std::vector<std::string>& trajectory_ids,
                                         const SplitOptions& options);

// ---------------------------------------------------------------------------
// I/O and counts
// ---------------------------------------------------------------------------

std::string to_json_line(const RetrievalPair& p);
RetrievalPair pair_from_json_line(std::string_view line);
void write_pairs(const std::filesystem::path& path, const std::vector<RetrievalPair>& pairs);
std::vector<RetrievalPair> read_pairs(const std::filesystem::path& path);

void write_pools(const std::filesystem::path& path, const CandidatePools& pools);
CandidatePools read_pools(const std::filesystem::path& path);

/// Counts keyed by (subtask, source).
struct PairCounts {
  std::vector<std::string> sources;  // sorted
  std::map<std::pair<Subtask, std::string>, long> cells;

  long get(Subtask s, const std::string& source) const;
  long task_total(int task, const std::string& source) const;

  /// Rows per task plus a Total row, one column per source.
  std::string task_table_tsv() const;
  /// Rows per subtask, one column per source.
  std::string subtask_table_tsv() const;
};

PairCounts count_pairs(const std::vector<RetrievalPair>& pairs);

/// Closed-form task sizes from corpus aggregates: tasks 1, 2, 4, 5 each
/// 2(S - T); task 3 is 6T (gold + five silver); task 6 is U + T where U is
/// the deduplicated state count.
struct ClosedFormCounts {
  long per_task[kTaskCount] = {};
};
ClosedFormCounts closed_form_counts(long tasks, long states, long unique_states);

}  // namespace gae::pairs
