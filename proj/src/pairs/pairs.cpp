#include "gae/pairs/pairs.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

#include <nlohmann/json.hpp>

#include "gae/common/error.hpp"
#include "gae/common/hash.hpp"
#include "gae/common/log.hpp"
#include "gae/common/rng.hpp"

namespace gae::pairs {

using trajectory::StateId;
using trajectory::TrajectoryRecord;
using ojson = nlohmann::ordered_json;

std::string SegmentRef::id() const {
  switch (kind) {
    case SegmentKind::kState: return trajectory_id + "#" + std::to_string(i);
    case SegmentKind::kFull: return trajectory_id;
    case SegmentKind::kInterval:
      return trajectory_id + "[" + std::to_string(i) + ":" + std::to_string(j) + "]";
  }
  return trajectory_id;
}

std::string_view split_name(Split s) {
  switch (s) {
    case Split::kUnassigned: return "unassigned";
    case Split::kTrain: return "train";
    case Split::kInd: return "ind";
    case Split::kOod: return "ood";
  }
  return "?";
}

Split parse_split(std::string_view name) {
  if (name == "unassigned") return Split::kUnassigned;
  if (name == "train") return Split::kTrain;
  if (name == "ind") return Split::kInd;
  if (name == "ood") return Split::kOod;
  throw UserError("unknown split '" + std::string(name) + "'");
}

// ---------------------------------------------------------------------------
// Extraction
// ---------------------------------------------------------------------------

namespace {

class PairEmitter {
 public:
  PairEmitter(const TrajectoryRecord& t, const InstructionTemplateSet& templates, std::uint64_t seed,
              std::vector<RetrievalPair>& out)
      : t_(t), templates_(templates), rng_(derive_seed(seed, t.id)), out_(out) {}

  void emit(Subtask s, std::string_view description, std::optional<SegmentRef> key, SegmentRef value) {
    const int k = static_cast<int>(rng_.uniform_index(kTemplatesPerSubtask));
    RetrievalPair p;
    p.id = t_.id + "/" + std::string(subtask_code(s)) + "/" + std::to_string(ordinal_[subtask_index(s)]++);
    p.trajectory_id = t_.id;
    p.source = t_.source;
    p.subtask = s;
    p.key_query = templates_.instantiate(s, k, description);
    p.key_segment = std::move(key);
    p.value_segment = std::move(value);
    out_.push_back(std::move(p));
  }

 private:
  const TrajectoryRecord& t_;
  const InstructionTemplateSet& templates_;
  Rng rng_;
  std::vector<RetrievalPair>& out_;
  int ordinal_[kSubtaskCount] = {};
};

}  // namespace

std::vector<RetrievalPair> extract_pairs(const TrajectoryRecord& t, const annotation::SilverSet* silver,
                                         const InstructionTemplateSet& templates,
                                         const ExtractOptions& options) {
  const int n = t.length();
  if (n == 0) throw ValidationError("trajectory '" + t.id + "' has no steps");

  // Representative of each state: global pool if given, otherwise the
  // earliest state of this trajectory with the same content hash.
  std::vector<int> local_rep(static_cast<std::size_t>(n) + 1);
  for (int i = 1; i <= n; ++i) {
    local_rep[static_cast<std::size_t>(i)] = i;
    const auto& h = t.state(i).content_hash;
    if (h.empty()) continue;
    for (int k = 1; k < i; ++k) {
      if (t.state(k).content_hash == h) {
        local_rep[static_cast<std::size_t>(i)] = k;
        break;
      }
    }
  }
  auto canonical_state = [&](int i) {
    if (options.state_pool) {
      const auto& rep = options.state_pool->canonical(StateId{t.id, i});
      return SegmentRef::state(rep.trajectory_id, rep.index);
    }
    return SegmentRef::state(t.id, local_rep[static_cast<std::size_t>(i)]);
  };
  auto is_representative = [&](int i) {
    if (options.state_pool) return options.state_pool->is_representative(StateId{t.id, i});
    return local_rep[static_cast<std::size_t>(i)] == i;
  };

  std::vector<RetrievalPair> out;
  PairEmitter emit(t, templates, options.seed, out);
  const std::string& q = t.query;

  // Task 1: prefix <-> suffix.
  for (int i = 1; i < n; ++i) {
    emit.emit(Subtask::kPrefixToSuffix, q, SegmentRef::interval(t.id, 1, i), SegmentRef::interval(t.id, i + 1, n));
    emit.emit(Subtask::kSuffixToPrefix, q, SegmentRef::interval(t.id, i + 1, n), SegmentRef::interval(t.id, 1, i));
  }
  // Task 2: trajectory -> adjacent state.
  for (int i = 1; i < n; ++i) {
    emit.emit(Subtask::kPrefixToNextState, q, SegmentRef::interval(t.id, 1, i), canonical_state(i + 1));
    emit.emit(Subtask::kSuffixToPrevState, q, SegmentRef::interval(t.id, i + 1, n), canonical_state(i));
  }
  // Task 3: query -> trajectory, gold then silver.
  emit.emit(Subtask::kQueryToGold, q, std::nullopt, SegmentRef::full(t.id, n));
  if (silver) {
    if (!silver->valid()) throw ValidationError("silver set for '" + t.id + "' is invalid");
    for (const auto& rewrite : silver->rewrites) {
      emit.emit(Subtask::kQueryToSilver, rewrite, std::nullopt, SegmentRef::full(t.id, n));
    }
  } else {
    logger()->warn("no silver set for trajectory '{}'; skipping q->t_silver pairs", t.id);
  }
  // Task 4: state -> adjacent state.
  for (int i = 1; i < n; ++i) {
    emit.emit(Subtask::kStateToNextState, q, SegmentRef::state(t.id, i), canonical_state(i + 1));
    emit.emit(Subtask::kStateToPrevState, q, SegmentRef::state(t.id, i + 1), canonical_state(i));
  }
  // Task 5: state -> remaining / preceding trajectory.
  for (int i = 1; i < n; ++i) {
    emit.emit(Subtask::kStateToSuffix, q, SegmentRef::state(t.id, i), SegmentRef::interval(t.id, i + 1, n));
    emit.emit(Subtask::kStateToPrefix, q, SegmentRef::state(t.id, i + 1), SegmentRef::interval(t.id, 1, i));
  }
  // Task 6: description -> state, one per unique state, plus the terminal state.
  for (int i = 1; i <= n; ++i) {
    if (!is_representative(i)) continue;
    const auto& d = t.state(i).description;
    if (d.empty()) logger()->warn("state {}#{} has no description; using the task query", t.id, i);
    emit.emit(Subtask::kQueryToState, d.empty() ? q : d, std::nullopt, canonical_state(i));
  }
  emit.emit(Subtask::kQueryToLastState, q, std::nullopt, canonical_state(n));
  return out;
}

std::vector<RetrievalPair> extract_corpus_pairs(const std::vector<TrajectoryRecord>& corpus,
                                                const std::map<std::string, annotation::SilverSet>& silver,
                                                const InstructionTemplateSet& templates, std::uint64_t seed) {
  const auto pool = trajectory::dedup_states(corpus);
  std::vector<RetrievalPair> out;
  for (const auto& t : corpus) {
    const auto it = silver.find(t.id);
    auto pairs = extract_pairs(t, it == silver.end() ? nullptr : &it->second, templates, {seed, &pool});
    out.insert(out.end(), std::make_move_iterator(pairs.begin()), std::make_move_iterator(pairs.end()));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Pools
// ---------------------------------------------------------------------------

namespace {

void sort_unique(CandidatePool& pool) {
  std::sort(pool.members.begin(), pool.members.end(),
            [](const SegmentRef& a, const SegmentRef& b) { return a.id() < b.id(); });
  pool.members.erase(std::unique(pool.members.begin(), pool.members.end(),
                                 [](const SegmentRef& a, const SegmentRef& b) { return a.id() == b.id(); }),
                     pool.members.end());
}

}  // namespace

bool CandidatePool::contains(const SegmentRef& s) const {
  const auto id = s.id();
  const auto it = std::lower_bound(members.begin(), members.end(), id,
                                   [](const SegmentRef& m, const std::string& v) { return m.id() < v; });
  return it != members.end() && it->id() == id && it->kind == s.kind;
}

const CandidatePool& CandidatePools::get(PoolKind k) const {
  switch (k) {
    case PoolKind::kState: return state;
    case PoolKind::kTrajectory: return trajectory;
    case PoolKind::kInterval: return interval;
  }
  return state;
}

CandidatePool& CandidatePools::get(PoolKind k) {
  return const_cast<CandidatePool&>(static_cast<const CandidatePools&>(*this).get(k));
}

CandidatePools build_pools(const std::vector<TrajectoryRecord>& corpus, const trajectory::StatePool& state_pool,
                           const std::optional<LiteCap>& lite) {
  CandidatePools pools;
  for (const auto& s : state_pool.members) pools.state.members.push_back(SegmentRef::state(s.trajectory_id, s.index));
  for (const auto& t : corpus) {
    const int n = t.length();
    const auto full = SegmentRef::full(t.id, n);
    if (!lite || lite->keeps(full)) pools.trajectory.members.push_back(full);
    for (int i = 1; i <= n; ++i) {
      for (int j = i; j <= n; ++j) {
        auto seg = SegmentRef::interval(t.id, i, j);
        if (!lite || lite->keeps(seg)) pools.interval.members.push_back(std::move(seg));
      }
    }
  }
  sort_unique(pools.state);
  sort_unique(pools.trajectory);
  sort_unique(pools.interval);
  return pools;
}

CandidatePools mini_pools(const std::vector<RetrievalPair>& pairs) {
  CandidatePools pools;
  for (const auto& p : pairs) pools.get(value_pool(p.subtask)).members.push_back(p.value_segment);
  sort_unique(pools.state);
  sort_unique(pools.trajectory);
  sort_unique(pools.interval);
  return pools;
}

std::vector<RetrievalPair> apply_lite_cap(std::vector<RetrievalPair> pairs, const LiteCap& cap) {
  std::erase_if(pairs, [&](const RetrievalPair& p) {
    return (p.key_segment && !cap.keeps(*p.key_segment)) || !cap.keeps(p.value_segment);
  });
  return pairs;
}

void check_referential_integrity(const std::vector<RetrievalPair>& pairs, const CandidatePools& pools) {
  for (const auto& p : pairs) {
    const auto kind = value_pool(p.subtask);
    if (!pools.get(kind).contains(p.value_segment)) {
      throw IntegrityError("pair " + p.id + ": value " + p.value_segment.id() + " is not in the " +
                           std::string(pool_kind_name(kind)) + " pool");
    }
  }
}

// ---------------------------------------------------------------------------
// Splits
// ---------------------------------------------------------------------------

std::vector<RetrievalPair> split_dataset(std::vector<RetrievalPair> pairs, const std::vector<std::string>& trajectory_ids,
                                         const SplitOptions& options) {
  auto in_open_unit = [](double f) { return f > 0.0 && f < 1.0; };
  if (!in_open_unit(options.ood_fraction) || !in_open_unit(options.train_fraction)) {
    throw UserError("split fractions must lie in (0, 1)");
  }
  std::vector<std::string> ids(trajectory_ids);
  std::sort(ids.begin(), ids.end());
  ids.erase(std::unique(ids.begin(), ids.end()), ids.end());
  if (ids.size() < 2) throw UserError("split_dataset needs at least 2 trajectories");

  Rng ood_rng(derive_seed(options.seed, "split/ood"));
  ood_rng.shuffle(std::span<std::string>(ids));
  const long total = static_cast<long>(ids.size());
  const long n_ood = std::clamp(std::lround(options.ood_fraction * static_cast<double>(total)), 1L, total - 1);
  const std::set<std::string> ood(ids.begin(), ids.begin() + n_ood);

  std::vector<std::size_t> remaining;
  for (std::size_t k = 0; k < pairs.size(); ++k) {
    auto& p = pairs[k];
    const bool touches_ood = ood.count(p.trajectory_id) || ood.count(p.value_segment.trajectory_id) ||
                             (p.key_segment && ood.count(p.key_segment->trajectory_id));
    if (touches_ood) {
      p.split = Split::kOod;
    } else {
      remaining.push_back(k);
    }
  }

  Rng rng(derive_seed(options.seed, "split/train"));
  if (options.stratified) {
    rng.shuffle(std::span<std::size_t>(remaining));
    const auto n_train = static_cast<std::size_t>(std::llround(options.train_fraction * static_cast<double>(remaining.size())));
    for (std::size_t r = 0; r < remaining.size(); ++r) {
      pairs[remaining[r]].split = r < n_train ? Split::kTrain : Split::kInd;
    }
  } else {
    for (const auto k : remaining) pairs[k].split = rng.uniform() < options.train_fraction ? Split::kTrain : Split::kInd;
  }
  return pairs;
}

// ---------------------------------------------------------------------------
// I/O
// ---------------------------------------------------------------------------

namespace {

ojson segment_json(const SegmentRef& s) {
  return ojson{{"trajectory_id", s.trajectory_id}, {"kind", segment_kind_name(s.kind)}, {"i", s.i}, {"j", s.j}};
}

SegmentRef segment_from_json(const nlohmann::json& j) {
  return {j.at("trajectory_id").get<std::string>(), parse_segment_kind(j.at("kind").get<std::string>()),
          j.at("i").get<int>(), j.at("j").get<int>()};
}

template <typename F>
void for_each_line(const std::filesystem::path& path, F&& f) {
  std::ifstream in(path);
  if (!in) throw UserError("cannot open " + path.string());
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    try {
      f(line);
    } catch (const nlohmann::json::exception& e) {
      throw ValidationError(path.string() + ":" + std::to_string(line_no) + ": " + e.what());
    } catch (const UserError& e) {
      throw ValidationError(path.string() + ":" + std::to_string(line_no) + ": " + e.what());
    }
  }
}

}  // namespace

std::string to_json_line(const RetrievalPair& p) {
  ojson j{{"id", p.id},
          {"trajectory_id", p.trajectory_id},
          {"source", p.source},
          {"subtask", subtask_code(p.subtask)},
          {"key_query", p.key_query},
          {"key_segment", p.key_segment ? segment_json(*p.key_segment) : ojson()},
          {"value_segment", segment_json(p.value_segment)},
          {"split", p.split == Split::kUnassigned ? ojson() : ojson(split_name(p.split))}};
  return j.dump();
}

RetrievalPair pair_from_json_line(std::string_view line) {
  const auto j = nlohmann::json::parse(line);
  RetrievalPair p;
  p.id = j.at("id").get<std::string>();
  p.trajectory_id = j.at("trajectory_id").get<std::string>();
  p.source = j.at("source").get<std::string>();
  p.subtask = parse_subtask(j.at("subtask").get<std::string>());
  p.key_query = j.at("key_query").get<std::string>();
  if (!j.at("key_segment").is_null()) p.key_segment = segment_from_json(j.at("key_segment"));
  p.value_segment = segment_from_json(j.at("value_segment"));
  p.split = j.at("split").is_null() ? Split::kUnassigned : parse_split(j.at("split").get<std::string>());
  return p;
}

void write_pairs(const std::filesystem::path& path, const std::vector<RetrievalPair>& pairs) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw UserError("cannot write " + path.string());
  for (const auto& p : pairs) out << to_json_line(p) << '\n';
}

std::vector<RetrievalPair> read_pairs(const std::filesystem::path& path) {
  std::vector<RetrievalPair> out;
  for_each_line(path, [&](const std::string& line) { out.push_back(pair_from_json_line(line)); });
  return out;
}

void write_pools(const std::filesystem::path& path, const CandidatePools& pools) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw UserError("cannot write " + path.string());
  for (auto kind : {PoolKind::kState, PoolKind::kTrajectory, PoolKind::kInterval}) {
    for (const auto& m : pools.get(kind).members) {
      ojson j{{"pool", pool_kind_name(kind)}, {"id", m.id()}, {"segment", segment_json(m)}};
      out << j.dump() << '\n';
    }
  }
}

CandidatePools read_pools(const std::filesystem::path& path) {
  CandidatePools pools;
  for_each_line(path, [&](const std::string& line) {
    const auto j = nlohmann::json::parse(line);
    pools.get(parse_pool_kind(j.at("pool").get<std::string>())).members.push_back(segment_from_json(j.at("segment")));
  });
  sort_unique(pools.state);
  sort_unique(pools.trajectory);
  sort_unique(pools.interval);
  return pools;
}

// ---------------------------------------------------------------------------
// Counts
// ---------------------------------------------------------------------------

long PairCounts::get(Subtask s, const std::string& source) const {
  const auto it = cells.find({s, source});
  return it == cells.end() ? 0 : it->second;
}

long PairCounts::task_total(int task, const std::string& source) const {
  long total = 0;
  for (auto s : kAllSubtasks) {
    if (task_of(s) == task) total += get(s, source);
  }
  return total;
}

std::string PairCounts::task_table_tsv() const {
  std::ostringstream out;
  out << "task";
  for (const auto& s : sources) out << '\t' << s;
  out << '\n';
  std::map<std::string, long> totals;
  for (int task = 1; task <= kTaskCount; ++task) {
    out << task_label(task);
    for (const auto& s : sources) {
      const long v = task_total(task, s);
      totals[s] += v;
      out << '\t' << v;
    }
    out << '\n';
  }
  out << "Total";
  for (const auto& s : sources) out << '\t' << totals[s];
  out << '\n';
  return out.str();
}

std::string PairCounts::subtask_table_tsv() const {
  std::ostringstream out;
  out << "subtask";
  for (const auto& s : sources) out << '\t' << s;
  out << '\n';
  for (auto st : kAllSubtasks) {
    out << subtask_label(st);
    for (const auto& s : sources) out << '\t' << get(st, s);
    out << '\n';
  }
  return out.str();
}

PairCounts count_pairs(const std::vector<RetrievalPair>& pairs) {
  PairCounts c;
  std::set<std::string> sources;
  for (const auto& p : pairs) {
    ++c.cells[{p.subtask, p.source}];
    sources.insert(p.source);
  }
  c.sources.assign(sources.begin(), sources.end());
  return c;
}

ClosedFormCounts closed_form_counts(long tasks, long states, long unique_states) {
  ClosedFormCounts c;
  const long temporal = 2 * (states - tasks);
  c.per_task[0] = temporal;
  c.per_task[1] = temporal;
  c.per_task[2] = 6 * tasks;
  c.per_task[3] = temporal;
  c.per_task[4] = temporal;
  c.per_task[5] = unique_states + tasks;
  return c;
}

}  // namespace gae::pairs
