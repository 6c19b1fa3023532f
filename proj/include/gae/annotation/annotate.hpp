#pragma once

#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "gae/annotation/client.hpp"
#include "gae/trajectory/types.hpp"

namespace gae::annotation {

struct NerEntity {
  std::string surface;
  std::string label;
  std::size_t begin = 0;  // character offsets into the query, [begin, end)
  std::size_t end = 0;
};

/// Gold query plus its five intent-preserving rewrites.
struct SilverSet {
  std::string gold_query;
  std::vector<std::string> rewrites;

  /// Exactly five rewrites, pairwise distinct and distinct from the gold.
  bool valid() const;
};

/// Silver generation output with the intermediate stages kept for audit.
struct SilverResult {
  SilverSet silver;
  std::vector<NerEntity> entities;
  std::map<std::string, std::vector<std::string>> alternatives;
  std::vector<std::string> substituted;  // input to the rewrite stage
};

inline constexpr int kSilverRewrites = 5;

/// Screenshot description via the attached image. Newlines are collapsed to
/// one line. Empty completions raise ContentError.
std::string describe_state(const trajectory::StateRecord& state,
                           const std::filesystem::path& image_root, AnnotationClient& client,
                           const std::string& request_id = "describe");

/// Three-stage silver query generation (entities, alternatives, rewrite).
/// Stage responses that cannot be parsed raise ContentError naming the
/// stage; fewer than five rewrites also raise ContentError.
SilverResult generate_silver(const std::string& query, AnnotationClient& client,
                             const std::string& request_id = "silver");

/// Greedy, non-overlapping placement of entity surfaces in the query
/// (longest first, then earliest occurrence). Entities that do not occur
/// are dropped. Result is sorted by position.
std::vector<NerEntity> locate_entities(const std::string& query,
                                       const std::vector<std::pair<std::string, std::string>>& surfaces_and_labels);

/// Silver file line: {trajectory_id, gold_query, rewrites, entities,
/// alternatives, substituted}.
std::string silver_to_json_line(const std::string& trajectory_id, const SilverResult& result);

/// Reads a silver file into trajectory id -> SilverSet. Invalid sets throw
/// ValidationError naming the line.
std::map<std::string, SilverSet> load_silver_file(const std::filesystem::path& path);

/// Extracts the first JSON object or array embedded in free text (models
/// often wrap JSON in prose or code fences). Throws ContentError.
nlohmann::json extract_json(const std::string& text, const std::string& stage);

}  // namespace gae::annotation
