#include <gtest/gtest.h>

#include <cmath>
#include <fstream>
#include <random>
#include <set>

#include "gae/annotation/annotate.hpp"
#include "gae/common/error.hpp"
#include "gae/contrastive/train.hpp"
#include "gae/pairs/templates.hpp"
#include "gae/trajectory/synthetic.hpp"
#include "support.hpp"

using namespace gae;
using namespace gae::contrastive;

namespace {

SequenceFeatures random_features(std::mt19937_64& g, int buckets) {
  std::uniform_int_distribution<int> n_tok(0, 5), count(1, 3), n_patch(0, 6);
  std::uniform_int_distribution<int> bucket(0, buckets - 1);
  std::uniform_real_distribution<double> u(-0.5, 0.5);
  SequenceFeatures f;
  std::map<std::uint32_t, double> counts;
  for (int k = n_tok(g); k > 0; --k) counts[static_cast<std::uint32_t>(bucket(g))] += count(g);
  for (const auto& [b, c] : counts) f.token_count += static_cast<int>(c);
  f.token_counts.assign(counts.begin(), counts.end());
  f.patch_count = n_patch(g);
  if (f.length() == 0) f.patch_count = 1;
  for (int p = 0; p < f.patch_count; ++p) f.patch_sum += Eigen::Vector3d(u(g), u(g), u(g));
  return f;
}

std::vector<TrainingExample> random_batch(std::mt19937_64& g, int b, int buckets) {
  std::vector<TrainingExample> batch;
  for (int i = 0; i < b; ++i) batch.push_back({random_features(g, buckets), random_features(g, buckets)});
  return batch;
}

Eigen::MatrixXd random_matrix(std::mt19937_64& g, int rows, int cols) {
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  Eigen::MatrixXd m(rows, cols);
  for (int r = 0; r < rows; ++r) {
    for (int c = 0; c < cols; ++c) m(r, c) = u(g);
  }
  return m;
}

double rel_error(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b) {
  return (a - b).norm() / std::max(a.norm() + b.norm(), 1e-12);
}

/// Central differences of f over every entry of m.
template <typename F>
Eigen::MatrixXd numeric_grad(Eigen::MatrixXd& m, F&& f, double h = 1e-6) {
  Eigen::MatrixXd out(m.rows(), m.cols());
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    for (Eigen::Index c = 0; c < m.cols(); ++c) {
      const double keep = m(r, c);
      m(r, c) = keep + h;
      const double up = f();
      m(r, c) = keep - h;
      const double down = f();
      m(r, c) = keep;
      out(r, c) = (up - down) / (2 * h);
    }
  }
  return out;
}

struct SmallCorpus {
  test::TempDir dir;
  std::vector<trajectory::TrajectoryRecord> corpus;
  std::vector<pairs::RetrievalPair> pairs;
  std::unique_ptr<serialize::CorpusIndex> index;
  std::unique_ptr<Featurizer> featurizer;

  explicit SmallCorpus(int trajectories = 6) {
    trajectory::SyntheticOptions opts;
    opts.trajectories = trajectories;
    opts.min_steps = 1;
    opts.max_steps = 3;
    corpus = trajectory::write_synthetic_corpus(dir.path(), opts);
    annotation::AnnotationClient client({}, std::make_shared<annotation::MockTransport>());
    std::map<std::string, annotation::SilverSet> silver;
    for (const auto& t : corpus) silver[t.id] = annotation::generate_silver(t.query, client).silver;
    pairs = pairs::extract_corpus_pairs(corpus, silver, pairs::InstructionTemplateSet::builtin(), 1);
    index = std::make_unique<serialize::CorpusIndex>(corpus);
    featurizer = std::make_unique<Featurizer>(corpus_image_source(*index), FeaturizerOptions{.buckets = 256});
  }

  TrainConfig config() const {
    TrainConfig c;
    c.batch_size = 8;
    c.sub_batch_size = 2;
    c.learning_rate = 0.01;
    c.steps = 3;
    c.seed = 5;
    return c;
  }
};

}  // namespace

TEST(InfoNce, SingletonBatchIsZero) {
  std::mt19937_64 g(1);
  const auto k = random_matrix(g, 1, 4), v = random_matrix(g, 1, 4);
  const auto r = info_nce_loss(k, v, 0.02);
  EXPECT_EQ(r.loss, 0.0);
  EXPECT_EQ(r.grad_keys.norm(), 0.0);
}

TEST(InfoNce, HandComputedTwoByTwo) {
  Eigen::MatrixXd k(2, 2), v(2, 2);
  k << 1, 0, 0, 1;
  v << 0.8, 0, 0.2, 1;  // key 0 scores 0.8 on its value and 0.2 on the other
  const auto r = info_nce_loss(k, v, 1.0);
  EXPECT_NEAR(r.per_key(0), std::log1p(std::exp(-0.6)), 1e-12);
  EXPECT_NEAR(r.per_key(0), 0.437488, 1e-6);
  EXPECT_NEAR(r.per_key(1), std::log1p(std::exp(-1.0)), 1e-12);
  EXPECT_NEAR(r.loss, (r.per_key(0) + r.per_key(1)) / 2, 1e-15);
}

TEST(InfoNce, GradientMatchesFiniteDifferences) {
  std::mt19937_64 g(2);
  for (int inst = 0; inst < 100; ++inst) {
    const int b = 2 + inst % 7, d = 2 + inst % 5;
    const double t = 0.1 + 0.1 * (inst % 5);
    Eigen::MatrixXd k = random_matrix(g, b, d), v = random_matrix(g, b, d);
    const auto r = info_nce_loss(k, v, t);
    const auto nk = numeric_grad(k, [&] { return info_nce_loss(k, v, t).loss; });
    const auto nv = numeric_grad(v, [&] { return info_nce_loss(k, v, t).loss; });
    EXPECT_LE(rel_error(r.grad_keys, nk), 1e-4) << inst;
    EXPECT_LE(rel_error(r.grad_values, nv), 1e-4) << inst;
    EXPECT_GE(r.loss, 0.0);
    EXPECT_GE(r.per_key.minCoeff(), 0.0);
  }
}

TEST(InfoNce, JointPermutationInvariant) {
  std::mt19937_64 g(3);
  const auto k = random_matrix(g, 5, 3), v = random_matrix(g, 5, 3);
  Eigen::PermutationMatrix<Eigen::Dynamic> perm(5);
  perm.indices() << 3, 0, 4, 1, 2;
  const Eigen::MatrixXd pk = perm * k, pv = perm * v;
  EXPECT_NEAR(info_nce_loss(k, v, 0.3).loss, info_nce_loss(pk, pv, 0.3).loss, 1e-14);
}

TEST(InfoNce, RejectsBadInput) {
  Eigen::MatrixXd k = Eigen::MatrixXd::Ones(2, 2), v = Eigen::MatrixXd::Ones(2, 2);
  EXPECT_THROW(info_nce_loss(k, v, 0.0), UserError);
  EXPECT_THROW(info_nce_loss(k, Eigen::MatrixXd::Ones(3, 2), 1.0), UserError);
  k(0, 1) = std::numeric_limits<double>::infinity();
  EXPECT_THROW(info_nce_loss(k, v, 1.0), DivergenceError);
  k(0, 1) = std::nan("");
  EXPECT_THROW(info_nce_loss(k, v, 1.0), DivergenceError);
}

TEST(Encoder, MatchesPoolingFormula) {
  std::mt19937_64 g(4);
  const auto p = EncoderParams::init({.dim = 6, .buckets = 32}, 9);
  for (int k = 0; k < 20; ++k) {
    const auto f = random_features(g, 32);
    Eigen::VectorXd h = p.patch * f.patch_sum;
    for (const auto& [b, c] : f.token_counts) h += c * p.text.row(b).transpose();
    h /= f.length();
    const Eigen::VectorXd z = p.output * h;
    EXPECT_LE((encode(f, p, false) - z).norm(), 1e-12);
    const auto e = encode(f, p, true);
    EXPECT_NEAR(e.norm(), 1.0, 1e-12);
    EXPECT_LE((e - z / z.norm()).norm(), 1e-12);
  }
}

TEST(Encoder, ParameterGradientMatchesFiniteDifferences) {
  std::mt19937_64 g(5);
  for (int inst = 0; inst < 10; ++inst) {
    auto p = EncoderParams::init({.dim = 4, .buckets = 16}, 100 + inst);
    const auto batch = random_batch(g, 3 + inst % 3, 16);
    const double t = 0.5;
    const bool normalize = inst % 2 == 0;
    const auto r = grad_full(batch, p, t, normalize);
    auto loss = [&] { return grad_full(batch, p, t, normalize).loss; };
    EXPECT_LE(rel_error(r.grads.text, numeric_grad(p.text, loss)), 1e-4) << inst;
    EXPECT_LE(rel_error(r.grads.patch, numeric_grad(p.patch, loss)), 1e-4) << inst;
    EXPECT_LE(rel_error(r.grads.output, numeric_grad(p.output, loss)), 1e-4) << inst;
  }
}

TEST(GradCache, MatchesFullBatchGradient) {
  std::mt19937_64 g(6);
  const auto p = EncoderParams::init({.dim = 16, .buckets = 64}, 11);
  for (auto [b, sub] : std::vector<std::pair<int, int>>{{8, 1}, {32, 4}, {64, 64}, {10, 3}}) {
    const auto batch = random_batch(g, b, 64);
    ActivationCounter full_count, cached_count;
    const auto full = grad_full(batch, p, 0.02, true, &full_count);
    const auto cached = grad_cached(batch, p, 0.02, sub, true, &cached_count);
    EXPECT_LE(std::abs(full.loss - cached.loss), 1e-12) << b << "/" << sub;
    EXPECT_LE(full.grads.max_abs_diff(cached.grads), 1e-10) << b << "/" << sub;
    EXPECT_EQ(full_count.peak, 2L * b);
    EXPECT_EQ(cached_count.peak, 2L * std::min(sub, b));
    EXPECT_EQ(cached_count.live, 0);
    if (sub == b) {
      EXPECT_TRUE(full.grads == cached.grads);
    }
  }
  const auto batch = random_batch(g, 4, 64);
  EXPECT_THROW(grad_cached(batch, p, 0.02, 0), UserError);
}

TEST(Checkpoint, RoundTripAndCorruption) {
  test::TempDir dir;
  const auto p = EncoderParams::init({.dim = 5, .buckets = 7}, 3);
  write_checkpoint(dir / "ok.bin", p);
  EXPECT_TRUE(read_checkpoint(dir / "ok.bin") == p);

  std::ifstream in(dir / "ok.bin", std::ios::binary);
  const std::string bytes((std::istreambuf_iterator<char>(in)), {});
  auto write = [&](const std::string& name, const std::string& content) {
    std::ofstream(dir / name, std::ios::binary) << content;
    return dir / name;
  };
  std::string bad_magic = bytes;
  bad_magic[0] = 'X';
  EXPECT_THROW(read_checkpoint(write("magic.bin", bad_magic)), UserError);
  EXPECT_THROW(read_checkpoint(write("short.bin", bytes.substr(0, bytes.size() - 3))), UserError);
  EXPECT_THROW(read_checkpoint(write("long.bin", bytes + "x")), UserError);
  try {
    read_checkpoint(dir / "missing.bin");
    FAIL();
  } catch (const UserError& e) {
    EXPECT_NE(std::string(e.what()).find("run `train` first"), std::string::npos);
  }
}

TEST(Featurize, TokenizeAndBucket) {
  EXPECT_EQ(tokenize("Hello, World-42 \xc3\xbc" "ber!"), (std::vector<std::string>{"hello", "world", "42", "\xc3\xbc" "ber"}));
  EXPECT_TRUE(tokenize("  ,;").empty());
  EXPECT_EQ(token_bucket("hello", 4096), token_bucket("hello", 4096));
  EXPECT_LT(token_bucket("hello", 10), 10u);
}

namespace {

ImageSource solid_source(int size, std::map<std::string, RgbImage>* overrides = nullptr) {
  return [=](const std::string& id) {
    if (overrides) {
      if (auto it = overrides->find(id); it != overrides->end()) return ImageRecord{it->second, "h-" + id};
    }
    return ImageRecord{test::solid_image(size, size, 40, 90, 160), "h-" + id};
  };
}

}  // namespace

TEST(Featurize, CountsTokensAndPatches) {
  const Featurizer f(solid_source(112), {.buckets = 512});
  const auto t = test::make_trajectory("a", 2);
  const auto seq = serialize::serialize_key("alpha beta", serialize::serialize_segment(t, 1, 2));
  std::size_t words = 0;
  for (const auto& e : seq.elements) {
    if (const auto* r = std::get_if<serialize::TextRun>(&e)) words += tokenize(r->text).size();
  }
  const auto feats = f.featurize(seq);
  EXPECT_EQ(feats.token_count, static_cast<int>(words));
  EXPECT_EQ(feats.patch_count, 2 * 16);
  EXPECT_FALSE(feats.truncated);

  // A solid screenshot is one component of 16 patches; half are kept.
  const MaskSpec mask{0.5, 1, 1};
  EXPECT_EQ(f.featurize(seq, &mask).patch_count, 2 * 8);
  const MaskSpec none{0.0, 1, 1};
  EXPECT_EQ(f.featurize(seq, &none).patch_count, 2 * 16);
}

TEST(Featurize, TruncationKeepsQueryLine) {
  test::LogCapture log;
  const Featurizer f(solid_source(56), {.buckets = 1 << 20, .max_sequence_tokens = 12});
  const auto seq = serialize::serialize_key("zyzzyva quokka", serialize::serialize_segment(test::make_trajectory("a", 3), 1, 3));
  const auto feats = f.featurize(seq);
  EXPECT_TRUE(feats.truncated);
  EXPECT_EQ(feats.length(), 12);
  std::set<std::uint32_t> present;
  for (const auto& [b, c] : feats.token_counts) present.insert(b);
  EXPECT_TRUE(present.count(token_bucket("zyzzyva", 1 << 20)));
  EXPECT_TRUE(present.count(token_bucket("quokka", 1 << 20)));
  EXPECT_NE(log.text().find("truncated"), std::string::npos);
}

TEST(Featurize, PatchPerturbationChangesEmbedding) {
  std::map<std::string, RgbImage> overrides;
  const auto t = test::make_trajectory("a", 1);
  const auto seq = serialize::serialize_state("a", t.state(1));
  const auto p = EncoderParams::init({.dim = 8, .buckets = 64}, 2);
  const Featurizer base(solid_source(56), {.buckets = 64});
  auto img = test::solid_image(56, 56, 40, 90, 160);
  for (int y = 0; y < 28; ++y) {
    for (int x = 0; x < 28; ++x) img.at(x, y)[0] = 250;
  }
  overrides["a#1"] = img;
  const Featurizer changed(solid_source(56, &overrides), {.buckets = 64});
  const auto e0 = encode(base.featurize(seq), p, true);
  const auto e1 = encode(changed.featurize(seq), p, true);
  EXPECT_GT((e0 - e1).norm(), 1e-6);
}

TEST(Schedule, WarmupThenConstant) {
  TrainConfig c;
  c.learning_rate = 1e-3;
  c.steps = 100;
  c.warmup_fraction = 0.05;
  EXPECT_EQ(warmup_steps(c), 5);
  EXPECT_DOUBLE_EQ(learning_rate_at(c, 1), 1e-3 / 5);
  EXPECT_DOUBLE_EQ(learning_rate_at(c, 3), 3e-3 / 5);
  EXPECT_DOUBLE_EQ(learning_rate_at(c, 5), 1e-3);
  EXPECT_DOUBLE_EQ(learning_rate_at(c, 80), 1e-3);
  c.steps = 30;
  EXPECT_EQ(warmup_steps(c), 2);
  c.warmup_fraction = 0;
  EXPECT_DOUBLE_EQ(learning_rate_at(c, 1), 1e-3);
}

TEST(Config, ValidateNamesField) {
  TrainConfig c;
  c.sub_batch_size = c.batch_size + 1;
  try {
    c.validate();
    FAIL();
  } catch (const UserError& e) {
    EXPECT_NE(std::string(e.what()).find("sub_batch_size"), std::string::npos);
  }
  c = {};
  c.mask_ratio = 1.0;
  EXPECT_THROW(c.validate(), UserError);
}

TEST(Sampler, DistinctValuesAndCap) {
  SmallCorpus sc;
  for (double inter : {0.0, 0.25}) {
    BatchSampler s(sc.pairs, 8, inter, 3);
    for (int k = 0; k < 30; ++k) {
      const auto b = s.next();
      ASSERT_EQ(b.size(), 8u);
      std::set<std::string> values;
      for (auto i : b) values.insert(sc.pairs[i].value_segment.id());
      EXPECT_EQ(values.size(), b.size());
    }
  }
  std::set<std::string> all_values;
  for (const auto& p : sc.pairs) all_values.insert(p.value_segment.id());
  test::LogCapture log;
  BatchSampler capped(sc.pairs, 100000, 0.0, 1);
  EXPECT_EQ(capped.effective_batch_size(), static_cast<int>(all_values.size()));
  EXPECT_NE(log.text().find("exceeds"), std::string::npos);
  EXPECT_THROW(BatchSampler({}, 4, 0.0, 1), UserError);
}

TEST(Train, ZeroLearningRateLeavesParameters) {
  SmallCorpus sc;
  auto c = sc.config();
  c.learning_rate = 0;
  const auto init = EncoderParams::init({.dim = 8, .buckets = 256}, 1);
  const auto r = train(sc.pairs, *sc.index, *sc.featurizer, init, c);
  EXPECT_TRUE(r.params == init);
  ASSERT_EQ(r.curve.size(), 3u);
  for (const auto& pt : r.curve) EXPECT_GT(pt.loss, 0.0);
}

TEST(Train, DeterministicForSeed) {
  SmallCorpus sc;
  const auto init = EncoderParams::init({.dim = 8, .buckets = 256}, 1);
  const auto a = train(sc.pairs, *sc.index, *sc.featurizer, init, sc.config());
  const auto b = train(sc.pairs, *sc.index, *sc.featurizer, init, sc.config());
  EXPECT_TRUE(a.params == b.params);
  ASSERT_EQ(a.curve.size(), b.curve.size());
  for (std::size_t k = 0; k < a.curve.size(); ++k) EXPECT_EQ(a.curve[k].loss, b.curve[k].loss);
  EXPECT_FALSE(a.params == init);
}

TEST(Train, DivergenceNamesStep) {
  SmallCorpus sc;
  auto c = sc.config();
  c.learning_rate = 1e300;
  c.warmup_fraction = 0;
  c.steps = 5;
  try {
    train(sc.pairs, *sc.index, *sc.featurizer, EncoderParams::init({.dim = 8, .buckets = 256}, 1), c);
    FAIL() << "expected divergence";
  } catch (const DivergenceError& e) {
    EXPECT_NE(std::string(e.what()).find("step"), std::string::npos) << e.what();
  }
}

TEST(Train, LossCsv) {
  test::TempDir dir;
  write_loss_csv(dir / "loss.csv", {{1, 0.5, 0.001}, {2, 0.25, 0.002}});
  std::ifstream in(dir / "loss.csv");
  const std::string text((std::istreambuf_iterator<char>(in)), {});
  EXPECT_EQ(text, "step,loss,lr\n1,0.500000000,0.001\n2,0.250000000,0.002\n");
}
