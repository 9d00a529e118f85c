#ifndef NBSLU_TRAINING_H_
#define NBSLU_TRAINING_H_

#include <filesystem>
#include <functional>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "nbslu/config.h"
#include "nbslu/corpus.h"
#include "nbslu/evaluation.h"
#include "nbslu/model.h"
#include "nbslu/representation.h"

namespace nbslu {

// Linear warmup from 0 to `lr` over the first ceil(wr * total) steps, then
// linear decay to 0 at `total_steps`.
double lr_schedule(size_t step, size_t total_steps, double warmup_ratio, double lr);
size_t warmup_steps(size_t total_steps, double warmup_ratio);

struct OptimizerConfig {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-6;
  double weight_decay = 0.01;
};

struct TrainState {
  size_t step = 0;
  std::vector<Matrix> m;  // first moments, parameter-shaped
  std::vector<Matrix> v;  // second moments
  double best_dev_f1 = -1.0;
  size_t epochs_since_improvement = 0;
};

// One bias-corrected Adam update with decoupled weight decay on tensors whose
// decay() flag is set:  w -= lr * (m_hat / (sqrt(v_hat) + eps) + wd * w).
// Throws std::domain_error naming the first non-finite gradient, before any
// parameter is touched.
void optimizer_step(const std::vector<TensorRef>& params, const std::vector<TensorRef>& grads, TrainState& state,
                    double lr, const OptimizerConfig& config);

// Scales grads so their global L2 norm is at most max_norm; returns the norm
// before scaling.
double clip_global_norm(const std::vector<TensorRef>& grads, double max_norm);

struct EpochRecord {
  size_t epoch = 0;  // 1-based
  double train_loss = 0.0;
  double dev_f1 = 0.0;
  double dev_accuracy = 0.0;
  double lr = 0.0;
  std::optional<double> train_accuracy;
  bool improved = false;

  friend bool operator==(const EpochRecord&, const EpochRecord&) = default;
};

nlohmann::ordered_json to_json(const EpochRecord& r);

struct TrainResult {
  SluModel best;
  size_t best_epoch = 0;
  double best_dev_f1 = 0.0;
  size_t total_steps = 0;
  std::vector<EpochRecord> log;
};

struct TrainOptions {
  // When set: checkpoints go to out_dir/model, the epoch log to
  // out_dir/train_log.jsonl.
  std::optional<std::filesystem::path> out_dir;
  std::ostream* progress = nullptr;
  nlohmann::json provenance;
  // Checked after every epoch; returning true ends training there.
  std::function<bool(const EpochRecord&)> stop_when;
};

// Trains from a seeded initialization, evaluating dev F1 after each epoch and
// keeping the best model; stops at max_epochs or after `patience` epochs
// without strict improvement. Throws std::runtime_error naming the batch on a
// non-finite loss.
TrainResult train(const DatasetSplit& train_split, const DatasetSplit& dev_split, const LabelSpace& labels,
                  const Vocabulary& vocab, const RunConfig& config, const TrainOptions& options = {});

}  // namespace nbslu

#endif  // NBSLU_TRAINING_H_
