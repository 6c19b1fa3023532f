#include <gtest/gtest.h>

#include <fstream>
#include <map>
#include <set>

#include "gae/common/error.hpp"
#include "gae/pairs/pairs.hpp"
#include "gae/trajectory/synthetic.hpp"
#include "oracles.hpp"
#include "support.hpp"

using namespace gae;
using namespace gae::pairs;
using gae::test::make_trajectory;

namespace {

annotation::SilverSet silver_for(const std::string& q) {
  return {q, {"r1 " + q, "r2 " + q, "r3 " + q, "r4 " + q, "r5 " + q}};
}

/// Distinct content hashes per state so local dedup keeps everything.
trajectory::TrajectoryRecord hashed(const std::string& id, int n) {
  auto t = make_trajectory(id, n);
  for (auto& s : t.steps) s.state.content_hash = id + "-" + std::to_string(s.state.index);
  return t;
}

std::array<long, 12> per_subtask(const std::vector<RetrievalPair>& pairs) {
  std::array<long, 12> c{};
  for (const auto& p : pairs) ++c[static_cast<std::size_t>(subtask_index(p.subtask))];
  return c;
}

}  // namespace

TEST(Subtasks, CodesAndPools) {
  for (auto s : kAllSubtasks) EXPECT_EQ(parse_subtask(subtask_code(s)), s);
  EXPECT_EQ(task_of(Subtask::kPrefixToSuffix), 1);
  EXPECT_EQ(task_of(Subtask::kQueryToLastState), 6);
  EXPECT_EQ(value_pool(Subtask::kQueryToGold), PoolKind::kTrajectory);
  EXPECT_EQ(value_pool(Subtask::kStateToSuffix), PoolKind::kInterval);
  EXPECT_EQ(value_pool(Subtask::kSuffixToPrevState), PoolKind::kState);
  EXPECT_FALSE(has_key_segment(Subtask::kQueryToState));
  EXPECT_TRUE(has_key_segment(Subtask::kStateToNextState));
}

TEST(Templates, TenPerSubtaskWithSlot) {
  const auto& set = InstructionTemplateSet::builtin();
  for (auto s : kAllSubtasks) {
    ASSERT_EQ(set.for_subtask(s).size(), 10u);
    for (const auto& t : set.for_subtask(s)) EXPECT_NE(t.find("{description}"), std::string::npos);
  }
  EXPECT_EQ(set.instantiate(Subtask::kPrefixToSuffix, 4, "Creating a template on Trello in a new tab."),
            "Apply the request \"Creating a template on Trello in a new tab.\" to the previous web navigation "
            "steps to derive the next trajectory.");
  auto broken = InstructionTemplateSet::Templates{};
  EXPECT_THROW(InstructionTemplateSet{broken}, ValidationError);
}

TEST(Extract, ThreeStepsGives26) {
  const auto t = hashed("t", 3);
  const auto s = silver_for(t.query);
  const auto pairs = extract_pairs(t, &s, InstructionTemplateSet::builtin(), {7, nullptr});
  EXPECT_EQ(pairs.size(), 26u);
  const auto c = per_subtask(pairs);
  for (int task = 1; task <= 6; ++task) {
    long total = 0;
    for (auto st : kAllSubtasks) {
      if (task_of(st) == task) total += c[static_cast<std::size_t>(subtask_index(st))];
    }
    EXPECT_EQ(total, task == 3 ? 6 : 4) << "task " << task;
  }
  EXPECT_EQ(c, test::brute_force_counts(3, 3, 5));
}

TEST(Extract, ThreeStepsValuesByHand) {
  const auto t = hashed("t", 3);
  const auto s = silver_for(t.query);
  std::multiset<std::string> got;
  for (const auto& p : extract_pairs(t, &s, InstructionTemplateSet::builtin(), {})) {
    got.insert(std::string(subtask_code(p.subtask)) + " " + (p.key_segment ? p.key_segment->id() : "-") + " " +
               p.value_segment.id());
  }
  const std::multiset<std::string> want = {
      "prefix_to_suffix t[1:1] t[2:3]",      "prefix_to_suffix t[1:2] t[3:3]",
      "suffix_to_prefix t[2:3] t[1:1]",      "suffix_to_prefix t[3:3] t[1:2]",
      "prefix_to_next_state t[1:1] t#2",     "prefix_to_next_state t[1:2] t#3",
      "suffix_to_prev_state t[2:3] t#1",     "suffix_to_prev_state t[3:3] t#2",
      "query_to_gold - t",                   "query_to_silver - t",
      "query_to_silver - t",                 "query_to_silver - t",
      "query_to_silver - t",                 "query_to_silver - t",
      "state_to_next_state t#1 t#2",         "state_to_next_state t#2 t#3",
      "state_to_prev_state t#2 t#1",         "state_to_prev_state t#3 t#2",
      "state_to_suffix t#1 t[2:3]",          "state_to_suffix t#2 t[3:3]",
      "state_to_prefix t#2 t[1:1]",          "state_to_prefix t#3 t[1:2]",
      "query_to_state - t#1",                "query_to_state - t#2",
      "query_to_state - t#3",                "query_to_last_state - t#3",
  };
  EXPECT_EQ(got, want);
}

TEST(Extract, SingleStep) {
  const auto t = hashed("t", 1);
  const auto s = silver_for(t.query);
  const auto pairs = extract_pairs(t, &s, InstructionTemplateSet::builtin(), {});
  const auto c = per_subtask(pairs);
  EXPECT_EQ(pairs.size(), 8u);  // 6 from task 3, q->s_1 and q->s_n
  EXPECT_EQ(c[10], 1);
  EXPECT_EQ(c[11], 1);
  EXPECT_EQ(c, test::brute_force_counts(1, 1, 5));
}

TEST(Extract, MissingSilverSkipsOnlySilver) {
  const auto t = hashed("t", 4);
  test::LogCapture log;
  const auto pairs = extract_pairs(t, nullptr, InstructionTemplateSet::builtin(), {});
  EXPECT_EQ(per_subtask(pairs), test::brute_force_counts(4, 4, 0));
  EXPECT_NE(log.text().find("no silver set"), std::string::npos);
}

TEST(Extract, KeyQueriesUseTemplates) {
  const auto t = hashed("t", 4);
  const auto s = silver_for(t.query);
  const auto& set = InstructionTemplateSet::builtin();
  for (const auto& p : extract_pairs(t, &s, set, {3, nullptr})) {
    std::string desc = t.query;
    if (p.subtask == Subtask::kQueryToSilver) {
      desc.clear();
    } else if (p.subtask == Subtask::kQueryToState) {
      desc = t.state(p.value_segment.i).description;
    }
    bool matched = false;
    for (int k = 0; k < 10; ++k) {
      if (desc.empty()) {
        for (const auto& r : s.rewrites) matched |= set.instantiate(p.subtask, k, r) == p.key_query;
      } else {
        matched |= set.instantiate(p.subtask, k, desc) == p.key_query;
      }
    }
    EXPECT_TRUE(matched) << p.id << ": " << p.key_query;
  }
}

TEST(Extract, DeterministicAndOrderIndependent) {
  std::vector<trajectory::TrajectoryRecord> corpus = {hashed("a", 3), hashed("b", 5), hashed("c", 2)};
  std::map<std::string, annotation::SilverSet> silver;
  for (const auto& t : corpus) silver[t.id] = silver_for(t.query);
  const auto first = extract_corpus_pairs(corpus, silver, InstructionTemplateSet::builtin(), 11);
  std::reverse(corpus.begin(), corpus.end());
  const auto second = extract_corpus_pairs(corpus, silver, InstructionTemplateSet::builtin(), 11);
  std::set<std::string> l1, l2;
  for (const auto& p : first) l1.insert(to_json_line(p));
  for (const auto& p : second) l2.insert(to_json_line(p));
  EXPECT_EQ(l1, l2);
  const auto other_seed = extract_corpus_pairs(corpus, silver, InstructionTemplateSet::builtin(), 12);
  std::set<std::string> l3;
  for (const auto& p : other_seed) l3.insert(to_json_line(p));
  EXPECT_NE(l1, l3);
}

TEST(Extract, DuplicateStatesPointAtRepresentative) {
  auto a = hashed("a", 2);
  auto b = hashed("b", 2);
  b.steps[1].state.content_hash = a.steps[0].state.content_hash;  // b#2 looks like a#1
  const std::vector<trajectory::TrajectoryRecord> corpus = {a, b};
  const auto pool = trajectory::dedup_states(corpus);
  const auto pairs = extract_pairs(b, nullptr, InstructionTemplateSet::builtin(), {0, &pool});
  long q_to_state = 0;
  for (const auto& p : pairs) {
    if (p.subtask == Subtask::kStateToNextState) {
      EXPECT_EQ(p.value_segment.id(), "a#1");
    }
    if (p.subtask == Subtask::kQueryToLastState) {
      EXPECT_EQ(p.value_segment.id(), "a#1");
    }
    q_to_state += p.subtask == Subtask::kQueryToState;
  }
  EXPECT_EQ(q_to_state, 1);  // only b#1 is a representative
}

TEST(ClosedForm, Mind2WebAndGuiAct) {
  EXPECT_EQ(closed_form_counts(1468, 9621, 9621).per_task[3], 16306);
  EXPECT_EQ(closed_form_counts(5453, 0, 0).per_task[2], 32718);
}

TEST(ClosedForm, AgreesWithExtractionOnSyntheticCorpus) {
  test::TempDir dir;
  trajectory::SyntheticOptions opts;
  opts.trajectories = 15;
  opts.min_steps = 1;
  opts.max_steps = 8;
  const auto corpus = trajectory::write_synthetic_corpus(dir.path(), opts);
  std::map<std::string, annotation::SilverSet> silver;
  long states = 0;
  for (const auto& t : corpus) {
    silver[t.id] = silver_for(t.query);
    states += t.length();
  }
  const auto pairs = extract_corpus_pairs(corpus, silver, InstructionTemplateSet::builtin(), 0);
  const auto counts = count_pairs(pairs);
  const auto cf = closed_form_counts(15, states, static_cast<long>(trajectory::dedup_states(corpus).members.size()));
  for (int task = 1; task <= 6; ++task) EXPECT_EQ(counts.task_total(task, "Synthetic"), cf.per_task[task - 1]);
}

TEST(Pools, IntervalEnumeration) {
  const std::vector<trajectory::TrajectoryRecord> corpus = {hashed("t", 3)};
  const auto pools = build_pools(corpus, trajectory::dedup_states(corpus));
  std::vector<std::string> ids;
  for (const auto& m : pools.interval.members) ids.push_back(m.id());
  EXPECT_EQ(ids, (std::vector<std::string>{"t[1:1]", "t[1:2]", "t[1:3]", "t[2:2]", "t[2:3]", "t[3:3]"}));
  EXPECT_EQ(pools.trajectory.size(), 1u);
  EXPECT_EQ(pools.state.size(), 3u);
}

TEST(Pools, LiteCapTwelveSteps) {
  const std::vector<trajectory::TrajectoryRecord> corpus = {hashed("t", 12), hashed("u", 9), hashed("v", 10)};
  const auto pools = build_pools(corpus, trajectory::dedup_states(corpus), LiteCap{});
  long t_intervals = 0;
  for (const auto& m : pools.interval.members) t_intervals += m.trajectory_id == "t";
  EXPECT_EQ(t_intervals, 75);
  EXPECT_EQ(t_intervals, 10 * 12 - 45);
  EXPECT_EQ(t_intervals, test::capped_interval_count(12, 10));
  // "fewer than 10 steps": only u survives in the trajectory pool.
  ASSERT_EQ(pools.trajectory.size(), 1u);
  EXPECT_EQ(pools.trajectory.members[0].trajectory_id, "u");
}

TEST(Pools, ReferentialIntegrity) {
  std::vector<trajectory::TrajectoryRecord> corpus = {hashed("a", 4), hashed("b", 2)};
  std::map<std::string, annotation::SilverSet> silver;
  for (const auto& t : corpus) silver[t.id] = silver_for(t.query);
  auto pairs = extract_corpus_pairs(corpus, silver, InstructionTemplateSet::builtin(), 0);
  const auto pools = build_pools(corpus, trajectory::dedup_states(corpus));
  EXPECT_NO_THROW(check_referential_integrity(pairs, pools));
  pairs.front().value_segment = SegmentRef::interval("zzz", 1, 2);
  try {
    check_referential_integrity(pairs, pools);
    FAIL();
  } catch (const IntegrityError& e) {
    EXPECT_NE(std::string(e.what()).find(pairs.front().id), std::string::npos);
  }
}

TEST(Pools, FileRoundTrip) {
  test::TempDir dir;
  const std::vector<trajectory::TrajectoryRecord> corpus = {hashed("a", 4), hashed("b", 2)};
  const auto pools = build_pools(corpus, trajectory::dedup_states(corpus));
  write_pools(dir / "pools.jsonl", pools);
  const auto back = read_pools(dir / "pools.jsonl");
  EXPECT_EQ(back.state.members, pools.state.members);
  EXPECT_EQ(back.trajectory.members, pools.trajectory.members);
  EXPECT_EQ(back.interval.members, pools.interval.members);
}

TEST(LiteCapTest, RemovesLongSegmentsKeepsStatePairs) {
  const auto t = hashed("t", 12);
  const auto s = silver_for(t.query);
  const auto pairs = extract_pairs(t, &s, InstructionTemplateSet::builtin(), {});
  const auto capped = apply_lite_cap(pairs);
  const auto before = per_subtask(pairs);
  const auto after = per_subtask(capped);
  EXPECT_EQ(after[6], before[6]);
  EXPECT_EQ(after[7], before[7]);
  for (const auto& p : capped) {
    if (p.key_segment) {
      EXPECT_TRUE(LiteCap{}.keeps(*p.key_segment));
    }
    EXPECT_TRUE(LiteCap{}.keeps(p.value_segment));
    EXPECT_NE(p.value_segment.id(), "t");  // full 12-step trajectory is gone
  }
  RetrievalPair p;
  p.value_segment = SegmentRef::interval("t", 1, 12);
  EXPECT_TRUE(apply_lite_cap({p}).empty());
}

TEST(LiteCapTest, ShortCorpusIsIdentity) {
  const auto t = hashed("t", 9);
  const auto s = silver_for(t.query);
  const auto pairs = extract_pairs(t, &s, InstructionTemplateSet::builtin(), {});
  EXPECT_EQ(apply_lite_cap(pairs).size(), pairs.size());
}

class SplitFixture : public ::testing::Test {
 protected:
  void SetUp() override {
    for (int k = 0; k < 20; ++k) {
      corpus.push_back(hashed("t" + std::to_string(100 + k), 2 + k % 5));
      ids.push_back(corpus.back().id);
    }
    std::map<std::string, annotation::SilverSet> silver;
    for (const auto& t : corpus) silver[t.id] = silver_for(t.query);
    pairs = extract_corpus_pairs(corpus, silver, InstructionTemplateSet::builtin(), 0);
  }
  std::vector<trajectory::TrajectoryRecord> corpus;
  std::vector<std::string> ids;
  std::vector<RetrievalPair> pairs;
};

TEST_F(SplitFixture, OodIsWholeTrajectory) {
  SplitOptions o;
  o.ood_fraction = 0.1;  // 2 of 20
  o.seed = 3;
  const auto split = split_dataset(pairs, ids, o);
  std::set<std::string> ood, rest;
  for (const auto& p : split) {
    ASSERT_NE(p.split, Split::kUnassigned);
    (p.split == Split::kOod ? ood : rest).insert(p.trajectory_id);
  }
  EXPECT_EQ(ood.size(), 2u);
  for (const auto& id : ood) EXPECT_EQ(rest.count(id), 0u);
  EXPECT_EQ(to_json_line(split_dataset(pairs, ids, o)[5]), to_json_line(split[5]));
}

TEST_F(SplitFixture, StratifiedIsExact) {
  std::vector<RetrievalPair> many;
  for (int k = 0; k < 1000; ++k) {
    RetrievalPair p = pairs[static_cast<std::size_t>(k) % pairs.size()];
    p.trajectory_id = p.value_segment.trajectory_id = "x" + std::to_string(k);
    p.key_segment.reset();
    many.push_back(p);
  }
  many.push_back(many.back());
  many.back().trajectory_id = many.back().value_segment.trajectory_id = "held";
  SplitOptions o;
  o.ood_fraction = 1e-6;  // clamps to a single trajectory
  o.train_fraction = 0.9;
  o.stratified = true;
  std::vector<std::string> id_list;
  for (const auto& p : many) id_list.push_back(p.trajectory_id);
  const auto split = split_dataset(many, id_list, o);
  long train = 0, ood = 0;
  for (const auto& p : split) {
    train += p.split == Split::kTrain;
    ood += p.split == Split::kOod;
  }
  EXPECT_EQ(ood, 1);
  EXPECT_EQ(train, 900);
  o.stratified = false;
  train = 0;
  for (const auto& p : split_dataset(many, id_list, o)) train += p.split == Split::kTrain;
  EXPECT_NEAR(train, 900, 3 * std::sqrt(1000 * 0.9 * 0.1));
}

TEST_F(SplitFixture, Errors) {
  SplitOptions o;
  EXPECT_THROW(split_dataset(pairs, {"only"}, o), UserError);
  o.train_fraction = 1.0;
  EXPECT_THROW(split_dataset(pairs, ids, o), UserError);
}

TEST(PairIo, JsonRoundTrip) {
  const auto t = hashed("t", 3);
  const auto s = silver_for(t.query);
  test::TempDir dir;
  const auto pairs = extract_pairs(t, &s, InstructionTemplateSet::builtin(), {});
  write_pairs(dir / "p.jsonl", pairs);
  const auto back = read_pairs(dir / "p.jsonl");
  ASSERT_EQ(back.size(), pairs.size());
  for (std::size_t k = 0; k < pairs.size(); ++k) EXPECT_EQ(to_json_line(back[k]), to_json_line(pairs[k]));
  const auto j = nlohmann::json::parse(to_json_line(pairs.front()));
  for (const char* key : {"subtask", "key_query", "key_segment", "value_segment", "split"}) {
    EXPECT_TRUE(j.contains(key)) << key;
  }
}

TEST(Counts, TablesForThreeTrajectoryFixture) {
  std::vector<trajectory::TrajectoryRecord> corpus = {hashed("a", 1), hashed("b", 2), hashed("c", 3)};
  std::map<std::string, annotation::SilverSet> silver;
  for (const auto& t : corpus) silver[t.id] = silver_for(t.query);
  const auto counts = count_pairs(extract_corpus_pairs(corpus, silver, InstructionTemplateSet::builtin(), 0));
  // S = 6, T = 3: temporal tasks 2(S - T) = 6, task 3 is 18, task 6 is 6 + 3.
  const long want[6] = {6, 6, 18, 6, 6, 9};
  for (int task = 1; task <= 6; ++task) EXPECT_EQ(counts.task_total(task, "Mind2Web"), want[task - 1]);
  const auto tsv = counts.task_table_tsv();
  EXPECT_NE(tsv.find("Total\t51"), std::string::npos) << tsv;
}
