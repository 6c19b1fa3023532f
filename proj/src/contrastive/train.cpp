#include "gae/contrastive/train.hpp"

#include <cmath>
#include <fstream>
#include <set>

#include "gae/common/error.hpp"
#include "gae/common/hash.hpp"
#include "gae/common/log.hpp"

namespace gae::contrastive {

void TrainConfig::validate() const {
  auto fail = [](const std::string& what) { throw UserError("invalid training config: " + what); };
  if (!(temperature > 0)) fail("temperature must be > 0");
  if (batch_size < 1) fail("batch_size must be >= 1");
  if (sub_batch_size < 1 || sub_batch_size > batch_size) fail("sub_batch_size must lie in [1, batch_size]");
  if (!(learning_rate >= 0)) fail("learning_rate must be >= 0");
  if (!(warmup_fraction >= 0 && warmup_fraction <= 1)) fail("warmup_fraction must lie in [0, 1]");
  if (!(mask_ratio >= 0 && mask_ratio < 1)) fail("mask_ratio must lie in [0, 1)");
  if (max_sequence_tokens < 1) fail("max_sequence_tokens must be >= 1");
  if (!(interleave_ratio >= 0 && interleave_ratio <= 1)) fail("interleave_ratio must lie in [0, 1]");
  if (steps < 0) fail("steps must be >= 0");
  if (!(beta1 >= 0 && beta1 < 1 && beta2 >= 0 && beta2 < 1 && epsilon > 0)) fail("bad Adam hyper-parameters");
}

int warmup_steps(const TrainConfig& config) {
  return static_cast<int>(std::ceil(config.warmup_fraction * config.steps - 1e-9));
}

double learning_rate_at(const TrainConfig& config, int step) {
  const int w = warmup_steps(config);
  if (w > 0 && step <= w) return config.learning_rate * step / w;
  return config.learning_rate;
}

// ---------------------------------------------------------------------------
// Batches
// ---------------------------------------------------------------------------

BatchSampler::BatchSampler(const std::vector<pairs::RetrievalPair>& pairs, int batch_size, double interleave_ratio,
                           std::uint64_t seed)
    : pairs_(pairs), batch_size_(batch_size), chunk_(0), rng_(derive_seed(seed, "batches")) {
  if (pairs.empty()) throw UserError("training split is empty (run `split` first)");
  std::set<std::string> values;
  queues_.assign(1 + pairs::kSubtaskCount, {});
  for (std::size_t i = 0; i < pairs.size(); ++i) {
    values.insert(pairs[i].value_segment.id());
    queues_[0].push_back(i);
    queues_[1 + static_cast<std::size_t>(pairs[i].subtask)].push_back(i);
  }
  if (static_cast<std::size_t>(batch_size_) > values.size()) {
    logger()->warn("batch size {} exceeds the {} distinct values in the training split; using {}", batch_size_,
                   values.size(), values.size());
    batch_size_ = static_cast<int>(values.size());
  }
  if (interleave_ratio > 0) chunk_ = std::max(1, static_cast<int>(std::lround(interleave_ratio * batch_size_)));
  for (auto& q : queues_) rng_.shuffle(std::span<std::size_t>(q));
  cursor_.assign(queues_.size(), 0);

  quota_.assign(queues_.size(), 0);
  std::vector<std::pair<double, std::size_t>> remainders;
  std::size_t assigned = 0;
  for (std::size_t q = 1; q < queues_.size(); ++q) {
    const double exact = static_cast<double>(batch_size_) * queues_[q].size() / pairs.size();
    quota_[q] = static_cast<std::size_t>(exact);
    assigned += quota_[q];
    remainders.emplace_back(exact - quota_[q], q);
  }
  std::stable_sort(remainders.begin(), remainders.end(), [](const auto& a, const auto& b) { return a.first > b.first; });
  for (std::size_t k = 0; assigned < static_cast<std::size_t>(batch_size_) && k < remainders.size(); ++k, ++assigned) {
    ++quota_[remainders[k].second];
  }
}

std::size_t BatchSampler::draw(std::size_t queue) {
  auto& q = queues_[queue];
  if (cursor_[queue] == q.size()) {
    rng_.shuffle(std::span<std::size_t>(q));
    cursor_[queue] = 0;
  }
  return q[cursor_[queue]++];
}

std::vector<std::size_t> BatchSampler::next() {
  std::vector<std::size_t> batch;
  std::set<std::string> seen;
  auto try_add = [&](std::size_t idx) {
    if (!seen.insert(pairs_[idx].value_segment.id()).second) return false;
    batch.push_back(idx);
    return true;
  };
  auto add_from_all = [&] {
    for (std::size_t attempt = 0; attempt < queues_[0].size() * 2; ++attempt) {
      if (try_add(draw(0))) return;
    }
    throw Error("batch sampler could not find a distinct value");
  };
  if (chunk_ == 0) {
    // Proportional quota per subtask (largest remainder), so batch
    // composition does not vary from step to step.
    for (std::size_t q = 1; q < queues_.size(); ++q) {
      for (std::size_t k = 0, added = 0; added < quota_[q] && k < queues_[q].size(); ++k) {
        if (try_add(draw(q))) ++added;
      }
    }
    while (batch.size() < static_cast<std::size_t>(batch_size_)) add_from_all();
    return batch;
  }
  while (batch.size() < static_cast<std::size_t>(batch_size_)) {
    std::size_t r = rng_.uniform_index(pairs_.size());
    std::size_t q = 1;
    while (r >= queues_[q].size()) r -= queues_[q++].size();
    const std::size_t take = std::min<std::size_t>(chunk_, batch_size_ - batch.size());
    std::size_t added = 0;
    for (std::size_t attempt = 0; added < take && attempt < queues_[q].size(); ++attempt) {
      if (try_add(draw(q))) ++added;
    }
    if (added == 0) add_from_all();
  }
  return batch;
}

// ---------------------------------------------------------------------------
// Optimizer
// ---------------------------------------------------------------------------

Adam::Adam(const EncoderParams& shape, double beta1, double beta2, double epsilon)
    : m_(shape.zeros_like()), v_(shape.zeros_like()), beta1_(beta1), beta2_(beta2), epsilon_(epsilon) {}

void Adam::step(EncoderParams& params, const EncoderParams& grads, double lr) {
  ++t_;
  const double c1 = 1.0 - std::pow(beta1_, t_);
  const double c2 = 1.0 - std::pow(beta2_, t_);
  auto update = [&](Eigen::MatrixXd& p, const Eigen::MatrixXd& g, Eigen::MatrixXd& m, Eigen::MatrixXd& v) {
    m = beta1_ * m + (1.0 - beta1_) * g;
    v = beta2_ * v + (1.0 - beta2_) * g.cwiseProduct(g);
    p.array() -= lr * (m.array() / c1) / ((v.array() / c2).sqrt() + epsilon_);
  };
  update(params.text, grads.text, m_.text, v_.text);
  update(params.patch, grads.patch, m_.patch, v_.patch);
  update(params.output, grads.output, m_.output, v_.output);
}

// ---------------------------------------------------------------------------
// Loop
// ---------------------------------------------------------------------------

TrainResult train(const std::vector<pairs::RetrievalPair>& train_pairs, const serialize::CorpusIndex& index,
                  const Featurizer& featurizer, EncoderParams init, const TrainConfig& config,
                  const StepCallback& on_step) {
  config.validate();
  BatchSampler sampler(train_pairs, config.batch_size, config.interleave_ratio, config.seed);
  const int sub = std::min(config.sub_batch_size, sampler.effective_batch_size());
  TrainResult result{std::move(init), {}};
  Adam adam(result.params, config.beta1, config.beta2, config.epsilon);

  for (int step = 1; step <= config.steps; ++step) {
    const auto picked = sampler.next();
    std::vector<TrainingExample> batch;
    batch.reserve(picked.size());
    const MaskSpec mask{config.mask_ratio, config.seed, static_cast<std::uint64_t>(step)};
    const MaskSpec* mask_ptr = config.mask_ratio > 0 ? &mask : nullptr;
    for (std::size_t idx : picked) {
      const auto& pair = train_pairs[idx];
      batch.push_back({featurizer.featurize(serialize::serialize_pair_key(index, pair), mask_ptr),
                       featurizer.featurize(serialize::serialize_value(index, pair.value_segment), mask_ptr)});
    }
    GradResult g;
    try {
      g = grad_cached(batch, result.params, config.temperature, sub, config.normalize);
    } catch (const DivergenceError& e) {
      throw DivergenceError("training diverged at step " + std::to_string(step) + ": " + e.what());
    }
    if (!std::isfinite(g.loss)) throw DivergenceError("training diverged at step " + std::to_string(step));
    const double lr = learning_rate_at(config, step);
    adam.step(result.params, g.grads, lr);
    if (!result.params.finite()) {
      throw DivergenceError("non-finite parameters after step " + std::to_string(step));
    }
    result.curve.push_back({step, g.loss, lr});
    if (on_step) on_step(result.curve.back());
  }
  return result;
}

void write_loss_csv(const std::filesystem::path& path, const std::vector<LossPoint>& curve) {
  std::ofstream out(path);
  if (!out) throw UserError("cannot write " + path.string());
  out << "step,loss,lr\n";
  char buf[96];
  for (const auto& p : curve) {
    std::snprintf(buf, sizeof buf, "%d,%.9f,%.9g\n", p.step, p.loss, p.lr);
    out << buf;
  }
}

}  // namespace gae::contrastive
