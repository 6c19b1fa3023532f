#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include "gae/pairs/pairs.hpp"
#include "gae/trajectory/types.hpp"

namespace gae::serialize {

struct TextRun {
  std::string text;
  bool operator==(const TextRun&) const = default;
};

/// Placeholder for one screenshot; carries the state id, never pixels.
struct ImageSlot {
  std::string state_id;  // trajectory::StateId::str()
  bool operator==(const ImageSlot&) const = default;
};

using ContextElement = std::variant<TextRun, ImageSlot>;

enum class Side { kKey, kValue };

/// Model input for one key or value: text runs interleaved with image slots.
struct ContextSequence {
  Side side = Side::kValue;
  std::vector<ContextElement> elements;

  /// Appends text, merging with a trailing text run.
  void append_text(std::string_view text);
  void append_image(std::string state_id);
  void append(const ContextSequence& other);

  /// Text with every image slot rendered as `image_token`.
  std::string render(std::string_view image_token = "[image]") const;
  std::vector<std::string> image_ids() const;
  std::size_t image_count() const;
  std::size_t text_bytes() const;

  bool operator==(const ContextSequence&) const = default;
};

inline constexpr std::string_view kCoordinateConvention =
    "Positions are represented in relative coordinates within the range [0,1] on the observation "
    "screenshot.";

/// "Observation: " followed by the state's image slot.
ContextSequence serialize_state(const std::string& trajectory_id, const trajectory::StateRecord& s);

/// Fixed-point with 4 decimals, ties to even on the exact binary value.
std::string format_coordinate(double v);

/// `Action <index>: {"operation": ..., "value": ..., "target": {...}}`.
std::string serialize_action(const trajectory::ActionRecord& a, int index);

/// "Action Space:" preamble: numbered definitions and the coordinate
/// convention sentence.
std::string serialize_action_space(const trajectory::ActionSpaceDef& space);

/// u_{i:j}: action space preamble, then Observation/Action blocks for
/// steps i..j numbered from 1 within the block. Throws UserError when the
/// range is invalid.
ContextSequence serialize_segment(const trajectory::TrajectoryRecord& t, int i, int j);

/// Key: augmented query, then the optional payload (newline-separated).
ContextSequence serialize_key(const std::string& augmented_query, const std::optional<ContextSequence>& payload);

/// Grammar check: (query)? (action space + Observation/Action blocks |
/// Observation). Numbering must run 1..m and image slots must sit where the
/// observations are.
bool is_well_formed(const ContextSequence& seq);

/// Resolves trajectory ids for pair serialization.
class CorpusIndex {
 public:
  explicit CorpusIndex(const std::vector<trajectory::TrajectoryRecord>& corpus);
  const trajectory::TrajectoryRecord& at(const std::string& trajectory_id) const;
  const trajectory::StateRecord& state(const std::string& state_id) const;
  const std::vector<trajectory::TrajectoryRecord>& corpus() const { return corpus_; }

 private:
  const std::vector<trajectory::TrajectoryRecord>& corpus_;
  std::map<std::string, std::size_t, std::less<>> by_id_;
};

/// s_i for state segments, u_{i:j} for interval and full segments.
ContextSequence serialize_value(const CorpusIndex& index, const pairs::SegmentRef& segment);

ContextSequence serialize_pair_key(const CorpusIndex& index, const pairs::RetrievalPair& pair);

/// Serialized context file line: {pair_id, side, elements}.
std::string to_json_line(const std::string& pair_id, const ContextSequence& seq);
std::pair<std::string, ContextSequence> context_from_json_line(std::string_view line);

}  // namespace gae::serialize
