#include "gae/pairs/subtask.hpp"

#include "gae/common/error.hpp"

namespace gae::pairs {
namespace {

struct SubtaskInfo {
  std::string_view code;
  std::string_view label;
  PoolKind pool;
  bool key_segment;
};

constexpr std::array<SubtaskInfo, kSubtaskCount> kInfo = {{
    {"prefix_to_suffix", "(q,t_{1:i})->t_{i+1:n}", PoolKind::kInterval, true},
    {"suffix_to_prefix", "(q,t_{i+1:n})->t_{1:i}", PoolKind::kInterval, true},
    {"prefix_to_next_state", "(q,t_{1:i})->s_{i+1}", PoolKind::kState, true},
    {"suffix_to_prev_state", "(q,t_{i+1:n})->s_i", PoolKind::kState, true},
    {"query_to_gold", "q->t_gold", PoolKind::kTrajectory, false},
    {"query_to_silver", "q->t_silver", PoolKind::kTrajectory, false},
    {"state_to_next_state", "(q,s_i)->s_{i+1}", PoolKind::kState, true},
    {"state_to_prev_state", "(q,s_{i+1})->s_i", PoolKind::kState, true},
    {"state_to_suffix", "(q,s_i)->t_{i+1:n}", PoolKind::kInterval, true},
    {"state_to_prefix", "(q,s_{i+1})->t_{1:i}", PoolKind::kInterval, true},
    {"query_to_state", "q->s_i", PoolKind::kState, false},
    {"query_to_last_state", "q->s_n", PoolKind::kState, false},
}};

constexpr std::array<std::string_view, kTaskCount> kTaskLabels = {
    "(q,t)->t'", "(q,t)->s", "q->t", "(q,s)->s'", "(q,s)->t", "q->s",
};

}  // namespace

std::string_view subtask_code(Subtask s) { return kInfo[static_cast<std::size_t>(s)].code; }
std::string_view subtask_label(Subtask s) { return kInfo[static_cast<std::size_t>(s)].label; }
PoolKind value_pool(Subtask s) { return kInfo[static_cast<std::size_t>(s)].pool; }
bool has_key_segment(Subtask s) { return kInfo[static_cast<std::size_t>(s)].key_segment; }

Subtask parse_subtask(std::string_view code) {
  for (auto s : kAllSubtasks) {
    if (subtask_code(s) == code) return s;
  }
  throw UserError("unknown subtask code '" + std::string(code) + "'");
}

std::string_view task_label(int task) {
  if (task < 1 || task > kTaskCount) throw UserError("task number out of range");
  return kTaskLabels[static_cast<std::size_t>(task - 1)];
}

std::string_view segment_kind_name(SegmentKind k) {
  switch (k) {
    case SegmentKind::kState: return "state";
    case SegmentKind::kInterval: return "interval";
    case SegmentKind::kFull: return "full";
  }
  return "?";
}

SegmentKind parse_segment_kind(std::string_view name) {
  if (name == "state") return SegmentKind::kState;
  if (name == "interval") return SegmentKind::kInterval;
  if (name == "full") return SegmentKind::kFull;
  throw UserError("unknown segment kind '" + std::string(name) + "'");
}

std::string_view pool_kind_name(PoolKind k) {
  switch (k) {
    case PoolKind::kState: return "state";
    case PoolKind::kTrajectory: return "trajectory";
    case PoolKind::kInterval: return "interval";
  }
  return "?";
}

PoolKind parse_pool_kind(std::string_view name) {
  if (name == "state") return PoolKind::kState;
  if (name == "trajectory") return PoolKind::kTrajectory;
  if (name == "interval") return PoolKind::kInterval;
  throw UserError("unknown pool kind '" + std::string(name) + "'");
}

}  // namespace gae::pairs
