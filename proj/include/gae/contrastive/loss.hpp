#pragma once

#include <span>

#include <Eigen/Dense>

#include "gae/contrastive/encoder.hpp"

namespace gae::contrastive {

inline constexpr double kDefaultTemperature = 0.02;

struct InfoNceResult {
  double loss = 0;                 // mean over keys
  Eigen::VectorXd per_key;         // -log softmax of the positive, per key
  Eigen::MatrixXd grad_keys;       // dL/dK, B x d
  Eigen::MatrixXd grad_values;     // dL/dV, B x d
};

/// In-batch InfoNCE: row i of `keys` pairs with row i of `values`, every
/// other value is a negative. Throws DivergenceError on a non-finite
/// similarity.
InfoNceResult info_nce_loss(const Eigen::MatrixXd& keys, const Eigen::MatrixXd& values, double temperature);

/// One (key, value) training example after featurization.
struct TrainingExample {
  SequenceFeatures key;
  SequenceFeatures value;
};

struct GradResult {
  double loss = 0;
  EncoderParams grads;
};

/// Single pass: forward every sequence with activations kept, loss, then
/// backprop through each.
GradResult grad_full(std::span<const TrainingExample> batch, const EncoderParams& params, double temperature,
                     bool normalize = true, ActivationCounter* counter = nullptr);

/// Gradient caching: (1) embed all sub-batches without keeping
/// activations, (2) loss and embedding gradients over the whole batch,
/// (3) re-forward each sub-batch and backprop the cached embedding
/// gradients. Reduction order matches grad_full.
GradResult grad_cached(std::span<const TrainingExample> batch, const EncoderParams& params, double temperature,
                       int sub_batch_size, bool normalize = true, ActivationCounter* counter = nullptr);

}  // namespace gae::contrastive
