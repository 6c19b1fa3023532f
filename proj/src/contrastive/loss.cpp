#include "gae/contrastive/loss.hpp"

#include <cmath>

#include "gae/common/error.hpp"

namespace gae::contrastive {

InfoNceResult info_nce_loss(const Eigen::MatrixXd& keys, const Eigen::MatrixXd& values, double temperature) {
  if (!(temperature > 0)) throw UserError("temperature must be positive");
  if (keys.rows() < 1 || keys.rows() != values.rows() || keys.cols() != values.cols()) {
    throw UserError("info_nce_loss: key and value batches must be non-empty and of equal shape");
  }
  const Eigen::Index b = keys.rows();
  const Eigen::MatrixXd logits = (keys * values.transpose()) / temperature;
  if (!logits.allFinite()) throw DivergenceError("non-finite similarity in contrastive loss");

  InfoNceResult r;
  r.per_key.resize(b);
  Eigen::MatrixXd dlogits(b, b);
  for (Eigen::Index i = 0; i < b; ++i) {
    const double m = logits.row(i).maxCoeff();
    const Eigen::RowVectorXd e = (logits.row(i).array() - m).exp();
    const double z = e.sum();
    r.per_key(i) = m + std::log(z) - logits(i, i);
    dlogits.row(i) = e / z;
    dlogits(i, i) -= 1.0;
  }
  r.loss = r.per_key.mean();
  dlogits /= static_cast<double>(b);
  r.grad_keys = (dlogits * values) / temperature;
  r.grad_values = (dlogits.transpose() * keys) / temperature;
  return r;
}

namespace {

Eigen::MatrixXd stack(const std::vector<Eigen::VectorXd>& rows, int dim) {
  Eigen::MatrixXd m(static_cast<Eigen::Index>(rows.size()), dim);
  for (std::size_t i = 0; i < rows.size(); ++i) m.row(static_cast<Eigen::Index>(i)) = rows[i].transpose();
  return m;
}

}  // namespace

GradResult grad_full(std::span<const TrainingExample> batch, const EncoderParams& params, double temperature,
                     bool normalize, ActivationCounter* counter) {
  std::vector<ForwardCache> keys, values;
  keys.reserve(batch.size());
  values.reserve(batch.size());
  for (const auto& ex : batch) {
    keys.push_back(forward(ex.key, params, normalize));
    if (counter) counter->acquire();
    values.push_back(forward(ex.value, params, normalize));
    if (counter) counter->acquire();
  }
  std::vector<Eigen::VectorXd> ke, ve;
  for (std::size_t i = 0; i < batch.size(); ++i) {
    ke.push_back(keys[i].embedding);
    ve.push_back(values[i].embedding);
  }
  const auto loss = info_nce_loss(stack(ke, params.dim()), stack(ve, params.dim()), temperature);

  GradResult out{loss.loss, params.zeros_like()};
  for (std::size_t i = 0; i < batch.size(); ++i) {
    const auto row = static_cast<Eigen::Index>(i);
    backward(batch[i].key, keys[i], loss.grad_keys.row(row).transpose(), params, normalize, out.grads);
    backward(batch[i].value, values[i], loss.grad_values.row(row).transpose(), params, normalize, out.grads);
  }
  if (counter) counter->live -= static_cast<long>(2 * batch.size());
  return out;
}

GradResult grad_cached(std::span<const TrainingExample> batch, const EncoderParams& params, double temperature,
                       int sub_batch_size, bool normalize, ActivationCounter* counter) {
  if (sub_batch_size < 1) throw UserError("sub-batch size must be at least 1");
  const std::size_t n = batch.size();
  const auto sub = static_cast<std::size_t>(sub_batch_size);

  // Phase 1: embeddings only; intermediates are dropped immediately.
  std::vector<Eigen::VectorXd> ke(n), ve(n);
  for (std::size_t i = 0; i < n; ++i) {
    ke[i] = encode(batch[i].key, params, normalize);
    ve[i] = encode(batch[i].value, params, normalize);
  }

  // Phase 2: full-batch loss and gradients w.r.t. the cached embeddings.
  const auto loss = info_nce_loss(stack(ke, params.dim()), stack(ve, params.dim()), temperature);

  // Phase 3: re-forward each sub-batch with activations and inject the cached gradients.
  GradResult out{loss.loss, params.zeros_like()};
  for (std::size_t begin = 0; begin < n; begin += sub) {
    const std::size_t end = std::min(n, begin + sub);
    std::vector<ForwardCache> kc, vc;
    for (std::size_t i = begin; i < end; ++i) {
      kc.push_back(forward(batch[i].key, params, normalize));
      if (counter) counter->acquire();
      vc.push_back(forward(batch[i].value, params, normalize));
      if (counter) counter->acquire();
      if (kc.back().embedding != ke[i] || vc.back().embedding != ve[i]) {
        throw Error("gradient cache misaligned with sub-batch at example " + std::to_string(i));
      }
    }
    for (std::size_t i = begin; i < end; ++i) {
      const auto row = static_cast<Eigen::Index>(i);
      backward(batch[i].key, kc[i - begin], loss.grad_keys.row(row).transpose(), params, normalize, out.grads);
      backward(batch[i].value, vc[i - begin], loss.grad_values.row(row).transpose(), params, normalize, out.grads);
    }
    if (counter) counter->live -= static_cast<long>(2 * (end - begin));
  }
  return out;
}

}  // namespace gae::contrastive
