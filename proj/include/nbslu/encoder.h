#ifndef NBSLU_ENCODER_H_
#define NBSLU_ENCODER_H_

// Post-layernorm transformer encoder (BERT layout) with exact reverse-mode
// gradients. Rows of a Batch are packed: only the unmasked prefix of each row
// is computed, so a padded key never enters any softmax (equivalent to a -inf
// score) and padded positions report zero hidden states.

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "nbslu/representation.h"
#include "nbslu/tensor.h"

namespace nbslu {

struct EncoderConfig {
  size_t vocab_size = 0;
  size_t d_model = 128;
  size_t n_layers = 4;
  size_t n_heads = 4;
  size_t d_ff = 512;
  size_t max_positions = 128;
  double dropout = 0.1;
  double layernorm_eps = 1e-12;
  // Feed tanh(W h_cls + b) to the classifier instead of the raw [CLS] state.
  bool use_pooler = true;

  size_t head_dim() const { return d_model / n_heads; }
  // Throws std::invalid_argument naming the broken constraint.
  void validate() const;

  friend bool operator==(const EncoderConfig&, const EncoderConfig&) = default;
};

struct LayerParams {
  // Projection weights are stored input-major (in x out): y = x W + b.
  Matrix wq, bq, wk, bk, wv, bv, wo, bo;
  Matrix ln1_gain, ln1_bias;
  Matrix w1, b1, w2, b2;
  Matrix ln2_gain, ln2_bias;
};

struct EncoderParams {
  Matrix token_embedding;     // vocab_size x d_model
  Matrix position_embedding;  // max_positions x d_model
  Matrix segment_embedding;   // 2 x d_model
  Matrix emb_ln_gain, emb_ln_bias;
  std::vector<LayerParams> layers;
  Matrix pooler_w, pooler_b;

  // Correctly shaped, all zero (also the gradient accumulator layout).
  static EncoderParams zeros(const EncoderConfig& config);
};

enum class TensorKind { kWeight, kBias, kNorm, kEmbedding };

// Named view of one parameter tensor; the decay flag marks tensors that take
// decoupled weight decay (everything except biases and layernorm terms).
struct TensorRef {
  std::string name;
  Matrix* tensor;
  TensorKind kind;
  bool decay() const { return kind == TensorKind::kWeight || kind == TensorKind::kEmbedding; }
};

// Stable enumeration order; identical for parameters and their gradients.
std::vector<TensorRef> tensors(EncoderParams& params);

EncoderParams init_params(const EncoderConfig& config, uint64_t seed);

struct LayerNormCache {
  Matrix xhat;
  std::vector<double> rstd;
};

struct LayerCache {
  Matrix input;
  Matrix q, k, v;
  std::vector<double> probs;      // per row, per head: L x L softmax weights
  std::vector<double> prob_mask;  // dropout scale per weight, empty if off
  Matrix context;
  std::vector<double> attn_out_mask;
  LayerNormCache ln1;
  Matrix h1;
  Matrix ff_pre, ff_act;
  std::vector<double> ff_out_mask;
  LayerNormCache ln2;
};

struct EncoderCache {
  bool valid = false;
  bool train_mode = false;
  size_t rows = 0;
  std::vector<size_t> offsets;       // rows + 1 packed row starts
  std::vector<size_t> prob_offsets;  // rows + 1 starts into LayerCache::probs
  std::vector<int> token_ids, segment_ids;
  std::vector<size_t> positions;
  LayerNormCache emb_ln;
  std::vector<double> emb_mask;
  std::vector<LayerCache> layers;
  Matrix output;  // final hidden states, packed
  Matrix cls;     // rows x d_model
  Matrix pooled;  // rows x d_model

  // Attention weight of query i on key j; 0 for keys beyond the row length.
  double attention(size_t layer, size_t row, size_t head, size_t i, size_t j, size_t n_heads) const;
};

struct EncoderOutput {
  size_t rows = 0;
  size_t width = 0;
  std::vector<size_t> offsets;
  Matrix hidden;  // packed: row r occupies [offsets[r], offsets[r+1])
  Matrix pooled;  // rows x d_model

  // Hidden state of (row, position); zero vector for padded positions.
  std::vector<double> hidden_at(size_t row, size_t pos) const;
};

// Throws std::out_of_range for token ids >= vocab_size or positions >=
// max_positions, and std::invalid_argument for a mask that is not a prefix,
// before any computation. Dropout is active only in train mode and is fully
// determined by `rng_seed`.
EncoderOutput encoder_forward(const Batch& batch, const EncoderParams& params, const EncoderConfig& config,
                              bool train_mode, uint64_t rng_seed, EncoderCache* cache = nullptr);

// Adds d(loss)/d(param) to `grads` given d(loss)/d(pooled). Throws
// std::logic_error when `cache` was not filled by encoder_forward.
void encoder_backward(const Matrix& d_pooled, const EncoderCache& cache, const EncoderParams& params,
                      const EncoderConfig& config, EncoderParams& grads);

}  // namespace nbslu

#endif  // NBSLU_ENCODER_H_
