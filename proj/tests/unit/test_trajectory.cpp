#include <gtest/gtest.h>

#include <algorithm>
#include <fstream>
#include <random>

#include "gae/common/error.hpp"
#include "gae/trajectory/action_spaces.hpp"
#include "gae/trajectory/corpus.hpp"
#include "gae/trajectory/synthetic.hpp"
#include "support.hpp"

using namespace gae;
using namespace gae::trajectory;
using gae::test::make_trajectory;
using gae::test::TempDir;

namespace {

std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

}  // namespace

TEST(Ingest, ThreeTrajectoriesSixStates) {
  TempDir dir;
  std::vector<TrajectoryRecord> corpus = {make_trajectory("c", 3), make_trajectory("a", 1), make_trajectory("b", 2)};
  test::write_fixture(dir.path(), corpus);
  const auto loaded = ingest_corpus(dir.path(), "Mind2Web");
  ASSERT_EQ(loaded.size(), 3u);
  EXPECT_EQ(loaded[0].id, "a");  // sorted by id
  EXPECT_EQ(loaded[2].id, "c");
  long states = 0;
  for (const auto& t : loaded) states += t.length();
  EXPECT_EQ(states, 6);
  EXPECT_EQ(corpus_stats(loaded).total().states_total, 6);
  for (const auto& t : loaded) {
    for (const auto& s : t.steps) EXPECT_EQ(s.state.content_hash.size(), 64u);
  }
}

TEST(Ingest, EmptyDirectoryWarns) {
  TempDir dir;
  test::LogCapture log;
  const auto loaded = ingest_corpus(dir.path(), "Mind2Web");
  EXPECT_TRUE(loaded.empty());
  EXPECT_NE(log.text().find("no JSONL manifest"), std::string::npos);
}

TEST(Ingest, MalformedLineNamesLineNumber) {
  TempDir dir;
  test::write_fixture(dir.path(), {make_trajectory("a", 1)});
  {
    std::ofstream out(dir / "manifest.jsonl", std::ios::app);
    out << "{not json\n";
  }
  try {
    ingest_corpus(dir.path(), "Mind2Web");
    FAIL() << "expected an error";
  } catch (const UserError& e) {
    EXPECT_NE(std::string(e.what()).find(":2"), std::string::npos) << e.what();
  }
}

TEST(Ingest, MissingImageNamesPath) {
  TempDir dir;
  test::write_fixture(dir.path(), {make_trajectory("a", 2)});
  std::filesystem::remove(dir / "a_2.png");
  try {
    ingest_corpus(dir.path(), "Mind2Web");
    FAIL() << "expected an error";
  } catch (const UserError& e) {
    EXPECT_NE(std::string(e.what()).find("a_2.png"), std::string::npos) << e.what();
  }
}

TEST(Ingest, UnknownOperationCitesTrajectoryAndStep) {
  TempDir dir;
  auto t = make_trajectory("bad", 3);
  t.steps[1].action.operation = "swipe";
  test::write_fixture(dir.path(), {t});
  try {
    ingest_corpus(dir.path(), "Mind2Web");
    FAIL() << "expected an error";
  } catch (const ValidationError& e) {
    const std::string msg = e.what();
    EXPECT_NE(msg.find("bad"), std::string::npos) << msg;
    EXPECT_NE(msg.find("step 2"), std::string::npos) << msg;
    EXPECT_NE(msg.find("swipe"), std::string::npos) << msg;
  }
}

TEST(Validate, WellFormedPasses) {
  EXPECT_TRUE(validate_trajectory(make_trajectory("a", 3)).ok());
}

TEST(Validate, TargetOutOfRange) {
  auto t = make_trajectory("a", 2);
  t.steps[0].action.target->x = 1.2;
  const auto report = validate_trajectory(t);
  ASSERT_FALSE(report.ok());
  EXPECT_NE(report.summary().find("target.x out of [0,1]"), std::string::npos) << report.summary();
  EXPECT_EQ(report.violations.front().step, 1);
}

TEST(Validate, BoxToleranceAbsorbsRounding) {
  auto t = make_trajectory("a", 1);
  t.steps[0].action.target = BoundingBox{0.6, 0.5, 0.4 + 5e-7, 0.5};
  EXPECT_TRUE(validate_trajectory(t).ok());
  t.steps[0].action.target = BoundingBox{0.6, 0.5, 0.4 + 1e-5, 0.5};
  EXPECT_FALSE(validate_trajectory(t).ok());
}

TEST(Validate, SwipeUnknownUnderMind2Web) {
  auto t = make_trajectory("a", 1);
  t.steps[0].action.operation = "swipe";
  const auto report = validate_trajectory(t);
  ASSERT_FALSE(report.ok());
  EXPECT_NE(report.summary().find("unknown operation"), std::string::npos);
}

TEST(Validate, IndicesMustBeConsecutive) {
  auto t = make_trajectory("a", 3);
  t.steps[2].state.index = 5;
  EXPECT_FALSE(validate_trajectory(t).ok());
}

TEST(Validate, EmptyStepsRejected) {
  auto t = make_trajectory("a", 1);
  t.steps.clear();
  EXPECT_FALSE(validate_trajectory(t).ok());
}

TEST(Validate, ListValuesAccepted) {
  auto t = make_trajectory("a", 1);
  t.action_space = builtin_action_space("WebLINX");
  t.steps[0].action.operation = t.action_space.actions.front().name;
  t.steps[0].action.value = nlohmann::json::array({0, 120});
  EXPECT_TRUE(validate_trajectory(t).ok()) << validate_trajectory(t).summary();
}

TEST(ActionSpaces, FiveSourcesUniqueNames) {
  const auto& spaces = builtin_action_spaces();
  EXPECT_EQ(spaces.size(), 5u);
  for (const auto& s : spaces) {
    EXPECT_FALSE(s.actions.empty());
    std::vector<std::string> names;
    for (const auto& a : s.actions) names.push_back(a.name);
    std::sort(names.begin(), names.end());
    EXPECT_EQ(std::adjacent_find(names.begin(), names.end()), names.end()) << s.source_name;
  }
  const auto& m2w = builtin_action_space("Mind2Web");
  EXPECT_TRUE(m2w.contains("click"));
  EXPECT_TRUE(m2w.contains("type"));
  EXPECT_TRUE(m2w.contains("select"));
  EXPECT_FALSE(m2w.contains("swipe"));
  EXPECT_THROW(builtin_action_space("Nope"), UserError);
}

TEST(Manifest, RoundTripIsByteIdentical) {
  TempDir dir;
  trajectory::SyntheticOptions opts;
  opts.trajectories = 6;
  opts.shared_home_probability = 0.3;
  const auto corpus = write_synthetic_corpus(dir.path(), opts);
  const auto first = slurp(dir / "manifest.jsonl");
  write_manifest(dir / "again.jsonl", corpus);
  EXPECT_EQ(slurp(dir / "again.jsonl"), first);
  for (const auto& t : corpus) EXPECT_EQ(to_json_line(from_json_line(to_json_line(t))), to_json_line(t));
}

TEST(StateIdTest, ParseRoundTrip) {
  const StateId s{"Mind2Web-0001", 4};
  EXPECT_EQ(s.str(), "Mind2Web-0001#4");
  EXPECT_EQ(StateId::parse(s.str()), s);
}

TEST(Dedup, SharedScreenshotRemovesOne) {
  TempDir dir;
  std::vector<TrajectoryRecord> corpus = {make_trajectory("a", 3, {"home.png", "a2.png", "a3.png"}),
                                          make_trajectory("b", 2, {"b1.png", "home.png"})};
  test::write_fixture(dir.path(), corpus);
  const auto loaded = ingest_corpus(dir.path(), "Mind2Web");
  const auto pool = dedup_states(loaded);
  EXPECT_EQ(pool.members.size(), 5u - 1u);
  // Representative is the smallest (trajectory id, index).
  EXPECT_EQ(pool.canonical({"b", 2}), (StateId{"a", 1}));
  EXPECT_FALSE(pool.is_representative({"b", 2}));
}

TEST(Dedup, DistinctScreenshotsKeepAll) {
  TempDir dir;
  std::vector<TrajectoryRecord> corpus = {make_trajectory("a", 3), make_trajectory("b", 2)};
  test::write_fixture(dir.path(), corpus);
  EXPECT_EQ(dedup_states(ingest_corpus(dir.path(), "Mind2Web")).members.size(), 5u);
}

TEST(Dedup, PermutationInvariantAndIdempotent) {
  TempDir dir;
  trajectory::SyntheticOptions opts;
  opts.trajectories = 20;
  opts.shared_home_probability = 0.25;
  auto corpus = write_synthetic_corpus(dir.path(), opts);
  const auto base = dedup_states(corpus);
  long total = 0;
  for (const auto& t : corpus) total += t.length();
  EXPECT_LT(static_cast<long>(base.members.size()), total);
  std::mt19937 g(5);
  for (int k = 0; k < 5; ++k) {
    std::shuffle(corpus.begin(), corpus.end(), g);
    const auto again = dedup_states(corpus);
    EXPECT_EQ(again.members, base.members);
    EXPECT_EQ(again.representative_of, base.representative_of);
  }
}

TEST(Stats, Mind2WebArithmetic) {
  // 1,468 tasks holding 9,621 states in total.
  SourceStats s{"Mind2Web", 1468, 1, 20, 9621};
  EXPECT_NEAR(s.states_avg(), 9621.0 / 1468.0, 1e-12);
  EXPECT_NEAR(s.states_avg(), 6.55, 0.005);
}

TEST(Stats, TotalsEqualSums) {
  TempDir dir;
  trajectory::SyntheticOptions opts;
  opts.trajectories = 12;
  opts.min_steps = 1;
  opts.max_steps = 9;
  const auto corpus = write_synthetic_corpus(dir.path(), opts);
  const auto m = corpus_stats(corpus);
  long sum = 0;
  int lo = 1 << 30, hi = 0;
  for (const auto& t : corpus) {
    sum += t.length();
    lo = std::min(lo, t.length());
    hi = std::max(hi, t.length());
    const auto& last = t.steps.back().state;
    EXPECT_EQ(last.index, t.length());
  }
  const auto* s = m.find("Synthetic");
  ASSERT_NE(s, nullptr);
  EXPECT_EQ(s->tasks, 12);
  EXPECT_EQ(s->states_total, sum);
  EXPECT_EQ(s->states_min, lo);
  EXPECT_EQ(s->states_max, hi);
  EXPECT_NE(m.to_tsv().find("source\ttasks"), std::string::npos);
}
