#include "nbslu/model.h"

#include "nbslu/random.h"

namespace nbslu {

SluModel SluModel::create(const EncoderConfig& config, const LabelSpace& labels, uint64_t seed) {
  SluModel m;
  m.config = config;
  m.encoder = init_params(config, derive_seed(seed, "encoder-init"));
  m.head = init_stc_params(labels, config.d_model, derive_seed(seed, "stc-init"));
  return m;
}

SluModel SluModel::zeros_like() const {
  SluModel g;
  g.config = config;
  g.encoder = EncoderParams::zeros(config);
  g.head = head;
  for (auto& t : tensors(g.head)) t.tensor->zero();
  return g;
}

std::vector<TensorRef> tensors(SluModel& model) {
  auto out = tensors(model.encoder);
  for (auto& t : tensors(model.head)) out.push_back(t);
  return out;
}

size_t parameter_count(const SluModel& model) {
  size_t n = 0;
  for (const auto& t : tensors(const_cast<SluModel&>(model))) n += t.tensor->size();
  return n;
}

double loss_and_gradients(const SluModel& model, const Batch& batch, bool train_mode, uint64_t dropout_seed,
                          SluModel* grads) {
  EncoderCache cache;
  encoder_forward(batch, model.encoder, model.config, train_mode, derive_seed(dropout_seed, "encoder"), &cache);

  Matrix pooled = cache.pooled;
  std::vector<double> mask;
  if (train_mode && model.config.dropout > 0.0) {
    Rng rng(derive_seed(dropout_seed, "head"));
    const double keep = 1.0 / (1.0 - model.config.dropout);
    mask.resize(pooled.size());
    for (size_t i = 0; i < pooled.size(); ++i) {
      mask[i] = rng.uniform() < model.config.dropout ? 0.0 : keep;
      pooled.data[i] *= mask[i];
    }
  }

  const StcScores scores = stc_forward(pooled, model.head);
  Matrix d_pooled;
  const double loss = stc_loss(scores, batch, pooled, model.head, grads ? &grads->head : nullptr,
                               grads ? &d_pooled : nullptr);
  if (grads) {
    for (size_t i = 0; i < mask.size(); ++i) d_pooled.data[i] *= mask[i];
    encoder_backward(d_pooled, cache, model.encoder, model.config, grads->encoder);
  }
  return loss;
}

StcScores score_batch(const SluModel& model, const Batch& batch) {
  const EncoderOutput out = encoder_forward(batch, model.encoder, model.config, false, 0);
  return stc_forward(out.pooled, model.head);
}

}  // namespace nbslu
