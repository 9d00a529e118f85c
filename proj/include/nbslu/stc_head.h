#ifndef NBSLU_STC_HEAD_H_
#define NBSLU_STC_HEAD_H_

// Semantic tuple classifier: one sigmoid presence score per act-slot pair
// and one softmax value classifier per pair that carries values.

#include <cstdint>
#include <vector>

#include "nbslu/corpus.h"
#include "nbslu/encoder.h"
#include "nbslu/representation.h"
#include "nbslu/tensor.h"

namespace nbslu {

struct ValueHead {
  size_t pair = 0;
  Matrix weight;  // |values| x d_model
  Matrix bias;    // 1 x |values|
};

struct StcParams {
  Matrix presence_weight;  // |pairs| x d_model
  Matrix presence_bias;    // 1 x |pairs|
  std::vector<ValueHead> value_heads;  // valued pairs only, ascending
  std::vector<int> head_of_pair;       // -1 for valueless pairs

  size_t num_pairs() const { return presence_bias.cols; }
  static StcParams zeros(const LabelSpace& labels, size_t d_model);
};

std::vector<TensorRef> tensors(StcParams& params);

// Truncated normal(0, 0.02^2) weights, zero biases.
StcParams init_stc_params(const LabelSpace& labels, size_t d_model, uint64_t seed);

// Batch-level head outputs.
struct StcScores {
  Matrix presence;                 // rows x |pairs|, probabilities
  std::vector<Matrix> value_probs; // per value head: rows x |values|

  size_t rows() const { return presence.rows; }
};

struct Prediction {
  std::vector<double> presence;                    // per pair
  std::vector<std::vector<double>> value_probs;    // per pair; empty when valueless
};

StcScores stc_forward(const Matrix& pooled, const StcParams& params);
Prediction prediction_at(const StcScores& scores, const StcParams& params, size_t row);

inline constexpr double kProbFloor = 1e-12;

// Mean over rows of summed binary cross-entropy over all pairs plus
// categorical cross-entropy over gold-present valued pairs. Gradients are
// accumulated into `grads` and written to `d_pooled` when non-null. Throws
// std::out_of_range for a gold value index outside its head.
double stc_loss(const StcScores& scores, const Batch& gold, const Matrix& pooled, const StcParams& params,
                StcParams* grads, Matrix* d_pooled);

// Emits a triplet for every pair with presence > threshold; ties between
// values go to the lower index.
TripletSet decode(const Prediction& prediction, const LabelSpace& labels, double threshold = 0.5);

}  // namespace nbslu

#endif  // NBSLU_STC_HEAD_H_
