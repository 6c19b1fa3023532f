#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "gae/trajectory/types.hpp"

namespace gae::trajectory {

// ---------------------------------------------------------------------------
// JSONL manifest I/O
// ---------------------------------------------------------------------------

/// One manifest line (no trailing newline). Key order is fixed so that
/// write -> read -> write is byte-identical.
std::string to_json_line(const TrajectoryRecord& t);

/// Parses one manifest line. Structural problems throw ValidationError; the
/// caller adds file/line context.
TrajectoryRecord from_json_line(std::string_view line);

void write_manifest(const std::filesystem::path& path, const std::vector<TrajectoryRecord>& corpus);

struct LoadOptions {
  /// Decode PNG headers and hash screenshot bytes.
  bool check_images = true;
  /// Reject states whose description is empty.
  bool require_descriptions = false;
};

/// Reads a manifest whose screenshot paths are relative to `image_root`.
/// Every record is validated; output is sorted by id. Errors name the line
/// number, trajectory id and step as applicable. An empty `source` accepts
/// whatever the records carry.
std::vector<TrajectoryRecord> load_manifest(const std::filesystem::path& manifest,
                                            const std::filesystem::path& image_root,
                                            const std::string& source,
                                            const LoadOptions& options = {});

/// Ingests a source directory holding exactly one *.jsonl manifest plus the
/// images it references. An empty (or manifest-less) directory yields an
/// empty list and a warning.
std::vector<TrajectoryRecord> ingest_corpus(const std::filesystem::path& root,
                                            const std::string& source,
                                            const LoadOptions& options = {});

// ---------------------------------------------------------------------------
// Validation
// ---------------------------------------------------------------------------

struct Violation {
  std::optional<int> step;  // 1-based step index, if step-specific
  std::string message;
};

struct ValidationReport {
  std::vector<Violation> violations;

  bool ok() const { return violations.empty(); }
  /// "step 2: target.x out of [0,1]; ..." for error messages.
  std::string summary() const;
};

ValidationReport validate_trajectory(const TrajectoryRecord& t, bool require_descriptions = false);

// ---------------------------------------------------------------------------
// Deduplication and statistics
// ---------------------------------------------------------------------------

/// Screenshot-level deduplication by content hash. The representative of a
/// hash class is its smallest (trajectory id, index).
struct StatePool {
  std::vector<StateId> members;                  // sorted ascending
  std::map<StateId, StateId> representative_of;  // every state -> its representative

  const StateId& canonical(const StateId& s) const;
  bool is_representative(const StateId& s) const { return canonical(s) == s; }
};

StatePool dedup_states(const std::vector<TrajectoryRecord>& corpus);

struct SourceStats {
  std::string source;
  long tasks = 0;
  long states_min = 0;
  long states_max = 0;
  long states_total = 0;
  double states_avg() const {
    return tasks == 0 ? 0.0 : static_cast<double>(states_total) / static_cast<double>(tasks);
  }
};

/// Per-source task and state counts, sorted by source name.
struct CorpusManifest {
  std::vector<SourceStats> sources;

  const SourceStats* find(std::string_view source) const;
  SourceStats total() const;
  /// TSV with columns source, tasks, min, max, avg, total.
  std::string to_tsv() const;
};

CorpusManifest corpus_stats(const std::vector<TrajectoryRecord>& corpus);

}  // namespace gae::trajectory
