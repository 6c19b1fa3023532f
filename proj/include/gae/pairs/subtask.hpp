#pragma once

#include <array>
#include <string>
#include <string_view>

namespace gae::pairs {

/// The twelve retrieval subtasks, two per task, in benchmark order.
enum class Subtask {
  kPrefixToSuffix,       // (q, τ_{1:i})   -> τ_{i+1:n}
  kSuffixToPrefix,       // (q, τ_{i+1:n}) -> τ_{1:i}
  kPrefixToNextState,    // (q, τ_{1:i})   -> s_{i+1}
  kSuffixToPrevState,    // (q, τ_{i+1:n}) -> s_i
  kQueryToGold,          // q -> τ_≡
  kQueryToSilver,        // q -> τ_∼
  kStateToNextState,     // (q, s_i)     -> s_{i+1}
  kStateToPrevState,     // (q, s_{i+1}) -> s_i
  kStateToSuffix,        // (q, s_i)     -> τ_{i+1:n}
  kStateToPrefix,        // (q, s_{i+1}) -> τ_{1:i}
  kQueryToState,         // q -> s_i
  kQueryToLastState,     // q -> s_n
};

inline constexpr int kSubtaskCount = 12;
inline constexpr int kTaskCount = 6;

inline constexpr std::array<Subtask, kSubtaskCount> kAllSubtasks = {
    Subtask::kPrefixToSuffix,    Subtask::kSuffixToPrefix,   Subtask::kPrefixToNextState,
    Subtask::kSuffixToPrevState, Subtask::kQueryToGold,      Subtask::kQueryToSilver,
    Subtask::kStateToNextState,  Subtask::kStateToPrevState, Subtask::kStateToSuffix,
    Subtask::kStateToPrefix,     Subtask::kQueryToState,     Subtask::kQueryToLastState,
};

enum class SegmentKind { kState, kInterval, kFull };
enum class PoolKind { kState, kTrajectory, kInterval };

inline int subtask_index(Subtask s) { return static_cast<int>(s); }

/// 1-based task number (1..6).
inline int task_of(Subtask s) { return subtask_index(s) / 2 + 1; }

/// Stable machine code, e.g. "state_to_next_state".
std::string_view subtask_code(Subtask s);
Subtask parse_subtask(std::string_view code);

/// Human label, e.g. "(q,s_i)->s_{i+1}".
std::string_view subtask_label(Subtask s);

/// Task label, e.g. "(q,s)->s'".
std::string_view task_label(int task);

/// Candidate pool the subtask's positive value lives in.
PoolKind value_pool(Subtask s);

/// Kind of the key payload, or nothing for query-only keys (tasks 3 and 6).
bool has_key_segment(Subtask s);

std::string_view segment_kind_name(SegmentKind k);
SegmentKind parse_segment_kind(std::string_view name);
std::string_view pool_kind_name(PoolKind k);
PoolKind parse_pool_kind(std::string_view name);

}  // namespace gae::pairs
