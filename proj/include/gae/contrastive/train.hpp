#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <vector>

#include "gae/common/rng.hpp"
#include "gae/contrastive/encoder.hpp"
#include "gae/contrastive/loss.hpp"
#include "gae/pairs/pairs.hpp"

namespace gae::contrastive {

struct TrainConfig {
  double temperature = kDefaultTemperature;
  int batch_size = 2048;
  int sub_batch_size = 1;
  double learning_rate = 5e-5;
  double warmup_fraction = 0.05;
  std::uint64_t seed = 0;
  double mask_ratio = 0.5;
  int max_sequence_tokens = 65536;
  /// Fraction of a batch drawn as one same-subtask chunk; 0 mixes freely.
  double interleave_ratio = 0.2;
  int steps = 256;
  bool normalize = true;
  // Adam
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;

  /// Throws UserError naming the first bad field.
  void validate() const;
};

/// Warm-up length: ceil(warmup_fraction * steps).
int warmup_steps(const TrainConfig& config);
/// Rate used at 1-based step k: linear ramp lr * k / warmup, then constant.
double learning_rate_at(const TrainConfig& config, int step);

struct LossPoint {
  int step = 0;
  double loss = 0;
  double lr = 0;
};

struct TrainResult {
  EncoderParams params;
  std::vector<LossPoint> curve;
};

/// Draws batches of distinct-valued pairs. With interleaving, the batch is
/// filled with chunks of round(interleave_ratio * batch) pairs that share a
/// subtask; the subtask of each chunk is drawn proportionally to its size.
/// Without it, every batch holds each subtask in proportion to its size.
class BatchSampler {
 public:
  BatchSampler(const std::vector<pairs::RetrievalPair>& pairs, int batch_size, double interleave_ratio,
               std::uint64_t seed);
  std::vector<std::size_t> next();
  int effective_batch_size() const { return batch_size_; }

 private:
  std::size_t draw(std::size_t queue);

  const std::vector<pairs::RetrievalPair>& pairs_;
  int batch_size_;
  int chunk_;
  Rng rng_;
  std::vector<std::vector<std::size_t>> queues_;  // [0] = all pairs, then one per subtask
  std::vector<std::size_t> cursor_;
  std::vector<std::size_t> quota_;  // per-queue share of a batch without interleaving
};

/// Adam over the three parameter matrices.
class Adam {
 public:
  Adam(const EncoderParams& shape, double beta1, double beta2, double epsilon);
  void step(EncoderParams& params, const EncoderParams& grads, double lr);

 private:
  EncoderParams m_, v_;
  double beta1_, beta2_, epsilon_;
  int t_ = 0;
};

using StepCallback = std::function<void(const LossPoint&)>;

/// Runs config.steps optimizer steps of GradCache InfoNCE over
/// `train_pairs`. Keys and values are serialized through `index`; token
/// selection masks are drawn per (image, seed, step). Throws
/// DivergenceError naming the step on a non-finite loss.
TrainResult train(const std::vector<pairs::RetrievalPair>& train_pairs, const serialize::CorpusIndex& index,
                  const Featurizer& featurizer, EncoderParams init, const TrainConfig& config,
                  const StepCallback& on_step = {});

/// "step,loss,lr" CSV.
void write_loss_csv(const std::filesystem::path& path, const std::vector<LossPoint>& curve);

}  // namespace gae::contrastive
