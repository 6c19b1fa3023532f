#pragma once

#include <compare>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

namespace gae::trajectory {

/// Tolerance for x + width <= 1 and y + height <= 1; annotation tools round
/// coordinates before export.
inline constexpr double kBoxTolerance = 1e-6;

struct ActionDef {
  std::string name;
  std::string description;
};

/// Per-source list of permissible operations.
struct ActionSpaceDef {
  std::string source_name;
  std::vector<ActionDef> actions;

  bool contains(std::string_view operation) const;
};

struct ScreenshotRef {
  std::string path;  // relative to the corpus image root
  int width = 0;
  int height = 0;
};

struct StateRecord {
  int index = 0;  // 1-based
  ScreenshotRef screenshot;
  std::string description;
  std::string content_hash;  // sha256 of the screenshot bytes, filled at ingest
};

/// Target region in relative screenshot coordinates.
struct BoundingBox {
  double x = 0;
  double y = 0;
  double width = 0;
  double height = 0;
};

struct ActionRecord {
  std::string operation;
  /// null, a string, or an array of scalars (e.g. scroll [x, y]).
  nlohmann::json value;
  std::optional<BoundingBox> target;
};

struct Step {
  StateRecord state;
  ActionRecord action;
};

struct TrajectoryRecord {
  std::string id;
  std::string source;
  std::string query;
  std::vector<Step> steps;
  ActionSpaceDef action_space;
  /// Directory the screenshot paths are relative to. Not serialized.
  std::filesystem::path image_root;

  int length() const { return static_cast<int>(steps.size()); }
  const StateRecord& state(int index) const { return steps.at(index - 1).state; }
  const ActionRecord& action(int index) const { return steps.at(index - 1).action; }
};

/// Identifies one state of one trajectory.
struct StateId {
  std::string trajectory_id;
  int index = 0;

  auto operator<=>(const StateId&) const = default;
  bool operator==(const StateId&) const = default;

  /// Canonical text form "<trajectory id>#<index>".
  std::string str() const;
  static StateId parse(std::string_view text);
};

}  // namespace gae::trajectory
