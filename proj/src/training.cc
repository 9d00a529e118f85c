#include "nbslu/training.h"

#include <cmath>
#include <fstream>
#include <ostream>
#include <stdexcept>

#include "nbslu/checkpoint.h"
#include "nbslu/random.h"

namespace nbslu {

size_t warmup_steps(size_t total_steps, double warmup_ratio) {
  auto w = static_cast<size_t>(std::ceil(warmup_ratio * static_cast<double>(total_steps)));
  // Keep a decay phase so the schedule returns to 0 at total_steps.
  if (total_steps > 1 && w >= total_steps) w = total_steps - 1;
  return w;
}

double lr_schedule(size_t step, size_t total_steps, double warmup_ratio, double lr) {
  if (total_steps == 0) throw std::invalid_argument("lr_schedule: total_steps must be >= 1");
  if (step > total_steps) throw std::invalid_argument("lr_schedule: step beyond total_steps");
  const size_t warm = warmup_steps(total_steps, warmup_ratio);
  if (step < warm) return lr * static_cast<double>(step) / static_cast<double>(warm);
  if (total_steps == warm) return 0.0;
  return lr * static_cast<double>(total_steps - step) / static_cast<double>(total_steps - warm);
}

void optimizer_step(const std::vector<TensorRef>& params, const std::vector<TensorRef>& grads, TrainState& state,
                    double lr, const OptimizerConfig& config) {
  if (params.size() != grads.size()) throw std::invalid_argument("optimizer_step: parameter/gradient count mismatch");
  for (size_t i = 0; i < params.size(); ++i) {
    if (!params[i].tensor->same_shape(*grads[i].tensor))
      throw std::invalid_argument("optimizer_step: gradient shape mismatch for " + params[i].name);
    for (double g : grads[i].tensor->data)
      if (!std::isfinite(g)) throw std::domain_error("non-finite gradient in " + params[i].name);
  }
  if (state.m.empty()) {
    for (const auto& p : params) {
      state.m.emplace_back(p.tensor->rows, p.tensor->cols);
      state.v.emplace_back(p.tensor->rows, p.tensor->cols);
    }
  }
  ++state.step;
  const double t = static_cast<double>(state.step);
  const double bc1 = 1.0 - std::pow(config.beta1, t);
  const double bc2 = 1.0 - std::pow(config.beta2, t);
  for (size_t i = 0; i < params.size(); ++i) {
    auto& w = params[i].tensor->data;
    const auto& g = grads[i].tensor->data;
    auto& m = state.m[i].data;
    auto& v = state.v[i].data;
    const double wd = params[i].decay() ? config.weight_decay : 0.0;
    for (size_t j = 0; j < w.size(); ++j) {
      m[j] = config.beta1 * m[j] + (1.0 - config.beta1) * g[j];
      v[j] = config.beta2 * v[j] + (1.0 - config.beta2) * g[j] * g[j];
      const double m_hat = m[j] / bc1;
      const double v_hat = v[j] / bc2;
      w[j] -= lr * (m_hat / (std::sqrt(v_hat) + config.eps) + wd * w[j]);
    }
  }
}

double clip_global_norm(const std::vector<TensorRef>& grads, double max_norm) {
  double sq = 0.0;
  for (const auto& g : grads)
    for (double x : g.tensor->data) sq += x * x;
  const double norm = std::sqrt(sq);
  if (max_norm > 0.0 && norm > max_norm) {
    const double s = max_norm / norm;
    for (const auto& g : grads)
      for (double& x : g.tensor->data) x *= s;
  }
  return norm;
}

nlohmann::ordered_json to_json(const EpochRecord& r) {
  nlohmann::ordered_json j = {{"epoch", r.epoch},   {"train_loss", r.train_loss}, {"dev_f1", r.dev_f1},
                              {"dev_accuracy", r.dev_accuracy}, {"lr", r.lr}, {"improved", r.improved}};
  if (r.train_accuracy) j["train_accuracy"] = *r.train_accuracy;
  return j;
}

TrainResult train(const DatasetSplit& train_split, const DatasetSplit& dev_split, const LabelSpace& labels,
                  const Vocabulary& vocab, const RunConfig& config, const TrainOptions& options) {
  config.validate();
  if (train_split.samples.empty()) throw std::invalid_argument("training split is empty");
  if (dev_split.samples.empty()) throw std::invalid_argument("dev split is empty");
  const TrainConfig& tc = config.train;
  const EncoderConfig enc = config.encoder_config(vocab.size());

  std::ofstream log_file;
  if (options.out_dir) {
    std::filesystem::create_directories(*options.out_dir);
    const auto path = *options.out_dir / "train_log.jsonl";
    log_file.open(path);
    if (!log_file) throw std::runtime_error("cannot write " + path.string());
  }

  SluModel model = SluModel::create(enc, labels, tc.seed);
  SluModel grads = model.zeros_like();
  auto param_refs = tensors(model);
  auto grad_refs = tensors(grads);
  TrainState state;
  const OptimizerConfig opt{tc.beta1, tc.beta2, tc.adam_eps, tc.weight_decay};

  const size_t steps_per_epoch = (train_split.size() + tc.batch_size - 1) / tc.batch_size;
  TrainResult result;
  result.total_steps = steps_per_epoch * tc.max_epochs;
  result.best = model;
  const uint64_t shuffle_base = derive_seed(tc.seed, "shuffle");
  const uint64_t dropout_base = derive_seed(tc.seed, "dropout");

  BatchOptions bopts;
  bopts.batch_size = tc.batch_size;
  bopts.shuffle = true;
  bopts.strict_labels = true;
  bopts.input = config.data.input;

  double current_lr = 0.0;
  for (size_t epoch = 1; epoch <= tc.max_epochs; ++epoch) {
    bopts.shuffle_seed = derive_seed(shuffle_base, epoch);
    const auto batches = make_batches(train_split, labels, vocab, bopts);
    double loss_sum = 0.0;
    for (size_t bi = 0; bi < batches.size(); ++bi) {
      for (auto& g : grad_refs) g.tensor->zero();
      const double loss = loss_and_gradients(model, batches[bi], true, derive_seed(dropout_base, state.step), &grads);
      if (!std::isfinite(loss))
        throw std::runtime_error("non-finite loss at epoch " + std::to_string(epoch) + ", batch " + std::to_string(bi));
      loss_sum += loss;
      clip_global_norm(grad_refs, tc.clip_norm);
      current_lr = lr_schedule(state.step + 1, result.total_steps, tc.warmup_ratio, tc.lr);
      optimizer_step(param_refs, grad_refs, state, current_lr, opt);
    }

    EpochRecord rec;
    rec.epoch = epoch;
    rec.train_loss = loss_sum / static_cast<double>(batches.size());
    rec.lr = current_lr;
    const EvalResult dev = evaluate(model, dev_split, labels, vocab, tc.threshold, config.data.input);
    rec.dev_f1 = dev.metrics.f1;
    rec.dev_accuracy = dev.metrics.accuracy;
    if (tc.eval_train)
      rec.train_accuracy = evaluate(model, train_split, labels, vocab, tc.threshold, config.data.input).metrics.accuracy;
    rec.improved = rec.dev_f1 > state.best_dev_f1;
    if (rec.improved) {
      state.best_dev_f1 = rec.dev_f1;
      state.epochs_since_improvement = 0;
      result.best = model;
      result.best_epoch = epoch;
      result.best_dev_f1 = rec.dev_f1;
      if (options.out_dir) save_checkpoint(*options.out_dir / "model", model, vocab, labels, config, options.provenance);
    } else {
      ++state.epochs_since_improvement;
    }
    result.log.push_back(rec);
    if (log_file) {
      log_file << to_json(rec).dump() << '\n';
      log_file.flush();
    }
    if (options.progress) {
      *options.progress << "epoch " << epoch << "/" << tc.max_epochs << "  loss " << rec.train_loss << "  dev f1 "
                        << rec.dev_f1 << "  dev acc " << rec.dev_accuracy;
      if (rec.train_accuracy) *options.progress << "  train acc " << *rec.train_accuracy;
      *options.progress << (rec.improved ? "  *" : "") << std::endl;
    }
    if (state.epochs_since_improvement >= tc.patience) break;
    if (options.stop_when && options.stop_when(rec)) break;
  }
  return result;
}

}  // namespace nbslu
