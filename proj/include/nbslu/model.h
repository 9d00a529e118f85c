#ifndef NBSLU_MODEL_H_
#define NBSLU_MODEL_H_

#include <cstdint>
#include <vector>

#include "nbslu/corpus.h"
#include "nbslu/encoder.h"
#include "nbslu/representation.h"
#include "nbslu/stc_head.h"

namespace nbslu {

// Encoder plus tuple classifier. The same type doubles as the gradient
// accumulator (see zeros_like).
struct SluModel {
  EncoderConfig config;
  EncoderParams encoder;
  StcParams head;

  static SluModel create(const EncoderConfig& config, const LabelSpace& labels, uint64_t seed);
  SluModel zeros_like() const;
};

// Encoder tensors followed by head tensors, in a fixed order.
std::vector<TensorRef> tensors(SluModel& model);
size_t parameter_count(const SluModel& model);

// Forward pass, loss and (when `grads` is non-null) backward pass for one
// batch. In train mode dropout is applied inside the encoder and to the
// pooled vector ahead of the heads, all driven by `dropout_seed`.
double loss_and_gradients(const SluModel& model, const Batch& batch, bool train_mode, uint64_t dropout_seed,
                          SluModel* grads);

// Dropout-free head outputs for a batch.
StcScores score_batch(const SluModel& model, const Batch& batch);

}  // namespace nbslu

#endif  // NBSLU_MODEL_H_
