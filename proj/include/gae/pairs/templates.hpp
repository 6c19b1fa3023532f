#pragma once

#include <array>
#include <filesystem>
#include <string>
#include <vector>

#include "gae/pairs/subtask.hpp"

namespace gae::pairs {

inline constexpr int kTemplatesPerSubtask = 10;
inline constexpr std::string_view kDescriptionSlot = "{description}";

/// Ten instruction templates per subtask, each with one {description} slot.
class InstructionTemplateSet {
 public:
  using Templates = std::array<std::vector<std::string>, kSubtaskCount>;

  /// Validates the 10-per-subtask and slot invariants; throws ValidationError.
  explicit InstructionTemplateSet(Templates templates);

  /// The shipped web-navigation templates.
  static const InstructionTemplateSet& builtin();

  /// JSON object {subtask code: [10 strings]}.
  static InstructionTemplateSet from_file(const std::filesystem::path& path);

  const std::vector<std::string>& for_subtask(Subtask s) const {
    return templates_[static_cast<std::size_t>(subtask_index(s))];
  }

  /// Template k of subtask s with the description substituted verbatim.
  std::string instantiate(Subtask s, int k, std::string_view description) const;

 private:
  Templates templates_;
};

}  // namespace gae::pairs
