#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "gae/annotation/client.hpp"
#include "gae/contrastive/train.hpp"
#include "gae/pairs/pairs.hpp"
#include "gae/retrieval/recall.hpp"

namespace gae::pipeline {

struct SourceSpec {
  std::string name;
  std::filesystem::path root;  // directory with one *.jsonl manifest and its images
};

/// Everything that affects artifact bytes.
struct PipelineConfig {
  std::filesystem::path work_dir = "work";
  std::vector<SourceSpec> sources;
  std::uint64_t seed = 0;

  annotation::AnnotationBackend backend;
  std::optional<std::filesystem::path> mock_dictionary;

  bool lite = false;
  pairs::LiteCap lite_cap;
  pairs::SplitOptions split;

  contrastive::EncoderConfig encoder;
  contrastive::TrainConfig train;
  int patch_size = tokensel::kDefaultPatchSize;
  double similarity_delta = 0.0;

  /// Evaluate against pools restricted to the evaluation pairs' values.
  bool mini_pools = false;
  int threads = 1;

  /// Throws UserError on unknown keys or bad values.
  static PipelineConfig from_json(const nlohmann::json& j);
  static PipelineConfig load(const std::filesystem::path& path);
  nlohmann::ordered_json to_json() const;
};

/// Artifact locations inside the work directory.
struct WorkDir {
  std::filesystem::path root;

  std::filesystem::path sources() const { return root / "sources.json"; }
  std::filesystem::path corpus(const std::string& source) const { return root / "corpus" / (source + ".jsonl"); }
  std::filesystem::path annotated(const std::string& source) const {
    return root / "annotated" / (source + ".jsonl");
  }
  std::filesystem::path corpus_stats() const { return root / "corpus_stats.tsv"; }
  std::filesystem::path silver() const { return root / "silver.jsonl"; }
  std::filesystem::path audit() const { return root / "audit.jsonl"; }
  std::filesystem::path pairs() const { return root / "pairs.jsonl"; }
  std::filesystem::path pools() const { return root / "pools.jsonl"; }
  std::filesystem::path split_pairs() const { return root / "pairs.split.jsonl"; }
  std::filesystem::path contexts() const { return root / "contexts.jsonl"; }
  std::filesystem::path checkpoint() const { return root / "checkpoint.bin"; }
  std::filesystem::path loss_curve() const { return root / "loss.csv"; }
  std::filesystem::path store(pairs::PoolKind k) const {
    return root / ("store_" + std::string(pairs::pool_kind_name(k)) + ".bin");
  }
  std::filesystem::path counts() const { return root / "counts.tsv"; }
  std::filesystem::path recall() const { return root / "recall.tsv"; }
  std::filesystem::path recall_subtask() const { return root / "recall_subtask.tsv"; }
  std::filesystem::path effective_config() const { return root / "config.effective.json"; }
};

/// Pipeline stages. Each reads the artifacts of earlier stages from the
/// work directory and fails with a UserError naming the command to run when
/// one is missing.
class Pipeline {
 public:
  explicit Pipeline(PipelineConfig config);

  void ingest();
  /// Fills empty state descriptions and writes silver query sets.
  void annotate();
  void extract();
  void pools();
  void split();
  void serialize();
  void train();
  void embed();
  void eval();
  /// Every stage in order.
  void run_all();

  /// Count tables (per task, then per subtask) of the extracted pairs.
  std::string report_counts() const;
  /// Overall and per-subtask recall tables.
  std::string report_recall() const;
  /// Writes mask overlays and RLE dumps for up to `limit` screenshots.
  void report_masks(const std::filesystem::path& out_dir, int limit) const;

  const PipelineConfig& config() const { return config_; }
  const WorkDir& work() const { return work_; }

  /// Corpus as of the latest completed stage (annotated if available).
  std::vector<trajectory::TrajectoryRecord> load_corpus(bool require_annotated) const;

 private:
  void echo_config() const;

  PipelineConfig config_;
  WorkDir work_;
};

}  // namespace gae::pipeline
