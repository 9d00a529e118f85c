#include "nbslu/encoder.h"

#include <cmath>
#include <numbers>
#include <stdexcept>

#include "nbslu/kernels.h"
#include "nbslu/random.h"

namespace nbslu {
namespace {

using kernels::add_row_bias;
using kernels::column_sums;
using kernels::gemm_nn;
using kernels::gemm_nt;
using kernels::gemm_tn;

void layernorm_forward(const Matrix& x, const Matrix& gain, const Matrix& bias, double eps, LayerNormCache& cache,
                       Matrix& y) {
  const size_t n = x.cols;
  cache.xhat.reset(x.rows, n);
  cache.rstd.assign(x.rows, 0.0);
  y.reset(x.rows, n);
  for (size_t r = 0; r < x.rows; ++r) {
    const auto xr = x.row(r);
    double mean = 0.0;
    for (double v : xr) mean += v;
    mean /= static_cast<double>(n);
    double var = 0.0;
    for (double v : xr) var += (v - mean) * (v - mean);
    var /= static_cast<double>(n);
    const double rstd = 1.0 / std::sqrt(var + eps);
    cache.rstd[r] = rstd;
    auto xh = cache.xhat.row(r);
    auto yr = y.row(r);
    for (size_t j = 0; j < n; ++j) {
      xh[j] = (xr[j] - mean) * rstd;
      yr[j] = gain.data[j] * xh[j] + bias.data[j];
    }
  }
}

// dx = rstd * (g*dy - mean(g*dy) - xhat * mean(g*dy*xhat)).
void layernorm_backward(const Matrix& dy, const LayerNormCache& cache, const Matrix& gain, Matrix& d_gain,
                        Matrix& d_bias, Matrix& dx) {
  const size_t n = dy.cols;
  dx.reset(dy.rows, n);
  std::vector<double> g(n);
  for (size_t r = 0; r < dy.rows; ++r) {
    const auto dyr = dy.row(r);
    const auto xh = cache.xhat.row(r);
    double mean_g = 0.0, mean_gx = 0.0;
    for (size_t j = 0; j < n; ++j) {
      d_gain.data[j] += dyr[j] * xh[j];
      d_bias.data[j] += dyr[j];
      g[j] = gain.data[j] * dyr[j];
      mean_g += g[j];
      mean_gx += g[j] * xh[j];
    }
    mean_g /= static_cast<double>(n);
    mean_gx /= static_cast<double>(n);
    auto dxr = dx.row(r);
    for (size_t j = 0; j < n; ++j) dxr[j] = cache.rstd[r] * (g[j] - mean_g - xh[j] * mean_gx);
  }
}

// Inverted dropout: fills `mask` with 0 or 1/(1-rate) and scales x in place.
void dropout_forward(Matrix& x, double rate, bool active, Rng& rng, std::vector<double>& mask) {
  mask.clear();
  if (!active || rate <= 0.0) return;
  const double scale = 1.0 / (1.0 - rate);
  mask.resize(x.size());
  for (size_t i = 0; i < x.size(); ++i) {
    mask[i] = rng.uniform() < rate ? 0.0 : scale;
    x.data[i] *= mask[i];
  }
}

void dropout_backward(Matrix& dx, const std::vector<double>& mask) {
  if (mask.empty()) return;
  for (size_t i = 0; i < dx.size(); ++i) dx.data[i] *= mask[i];
}

constexpr double kInvSqrt2 = 0.70710678118654752440;

double gelu(double x) { return 0.5 * x * (1.0 + std::erf(x * kInvSqrt2)); }

double gelu_grad(double x) {
  const double cdf = 0.5 * (1.0 + std::erf(x * kInvSqrt2));
  const double pdf = std::exp(-0.5 * x * x) * 0.5 * std::numbers::inv_sqrtpi * std::numbers::sqrt2;
  return cdf + x * pdf;
}

void linear(const Matrix& x, const Matrix& w, const Matrix& b, Matrix& y) {
  gemm_nn(x, w, y);
  add_row_bias(y, b);
}

// Accumulates dW, db and writes (or adds) dx for y = x W + b.
void linear_backward(const Matrix& x, const Matrix& w, const Matrix& dy, Matrix& dw, Matrix& db, Matrix& dx,
                     bool accumulate_dx) {
  gemm_tn(x, dy, dw, true);
  column_sums(dy, db, true);
  gemm_nt(dy, w, dx, accumulate_dx);
}

void check_inputs(const Batch& batch, const EncoderConfig& config) {
  for (size_t r = 0; r < batch.rows; ++r) {
    bool in_padding = false;
    size_t len = 0;
    for (size_t c = 0; c < batch.width; ++c) {
      const int m = batch.mask(r, c);
      if (m == 0) {
        in_padding = true;
        continue;
      }
      if (in_padding) throw std::invalid_argument("attention mask of row " + std::to_string(r) + " is not a prefix");
      ++len;
      const int tok = batch.token(r, c);
      if (tok < 0 || static_cast<size_t>(tok) >= config.vocab_size)
        throw std::out_of_range("token id " + std::to_string(tok) + " outside vocabulary of " +
                                std::to_string(config.vocab_size));
      const int seg = batch.segment(r, c);
      if (seg != 0 && seg != 1) throw std::out_of_range("segment id must be 0 or 1");
    }
    if (len == 0) throw std::invalid_argument("row " + std::to_string(r) + " has no unmasked tokens");
    if (len > config.max_positions)
      throw std::out_of_range("position " + std::to_string(len - 1) + " exceeds max_positions " +
                              std::to_string(config.max_positions));
  }
}

}  // namespace

void EncoderConfig::validate() const {
  if (vocab_size < static_cast<size_t>(kNumReserved)) throw std::invalid_argument("vocab_size below reserved ids");
  if (d_model == 0 || n_heads == 0 || n_layers == 0 || d_ff == 0) throw std::invalid_argument("zero-sized encoder");
  if (d_model % n_heads != 0) throw std::invalid_argument("d_model must be divisible by n_heads");
  if (max_positions == 0) throw std::invalid_argument("max_positions must be positive");
  if (!(dropout >= 0.0 && dropout < 1.0)) throw std::invalid_argument("dropout must be in [0, 1)");
  if (!(layernorm_eps > 0.0)) throw std::invalid_argument("layernorm_eps must be positive");
}

EncoderParams EncoderParams::zeros(const EncoderConfig& c) {
  EncoderParams p;
  const size_t d = c.d_model;
  p.token_embedding.reset(c.vocab_size, d);
  p.position_embedding.reset(c.max_positions, d);
  p.segment_embedding.reset(2, d);
  p.emb_ln_gain.reset(1, d);
  p.emb_ln_bias.reset(1, d);
  p.layers.resize(c.n_layers);
  for (auto& l : p.layers) {
    for (Matrix* w : {&l.wq, &l.wk, &l.wv, &l.wo}) w->reset(d, d);
    for (Matrix* b : {&l.bq, &l.bk, &l.bv, &l.bo, &l.ln1_gain, &l.ln1_bias, &l.b2, &l.ln2_gain, &l.ln2_bias})
      b->reset(1, d);
    l.w1.reset(d, c.d_ff);
    l.b1.reset(1, c.d_ff);
    l.w2.reset(c.d_ff, d);
  }
  p.pooler_w.reset(d, d);
  p.pooler_b.reset(1, d);
  return p;
}

std::vector<TensorRef> tensors(EncoderParams& p) {
  using K = TensorKind;
  std::vector<TensorRef> out = {
      {"embeddings.token", &p.token_embedding, K::kEmbedding},
      {"embeddings.position", &p.position_embedding, K::kEmbedding},
      {"embeddings.segment", &p.segment_embedding, K::kEmbedding},
      {"embeddings.ln.gain", &p.emb_ln_gain, K::kNorm},
      {"embeddings.ln.bias", &p.emb_ln_bias, K::kNorm},
  };
  for (size_t i = 0; i < p.layers.size(); ++i) {
    auto& l = p.layers[i];
    const std::string pre = "layer" + std::to_string(i) + ".";
    out.push_back({pre + "attn.q.weight", &l.wq, K::kWeight});
    out.push_back({pre + "attn.q.bias", &l.bq, K::kBias});
    out.push_back({pre + "attn.k.weight", &l.wk, K::kWeight});
    out.push_back({pre + "attn.k.bias", &l.bk, K::kBias});
    out.push_back({pre + "attn.v.weight", &l.wv, K::kWeight});
    out.push_back({pre + "attn.v.bias", &l.bv, K::kBias});
    out.push_back({pre + "attn.out.weight", &l.wo, K::kWeight});
    out.push_back({pre + "attn.out.bias", &l.bo, K::kBias});
    out.push_back({pre + "ln1.gain", &l.ln1_gain, K::kNorm});
    out.push_back({pre + "ln1.bias", &l.ln1_bias, K::kNorm});
    out.push_back({pre + "ffn.in.weight", &l.w1, K::kWeight});
    out.push_back({pre + "ffn.in.bias", &l.b1, K::kBias});
    out.push_back({pre + "ffn.out.weight", &l.w2, K::kWeight});
    out.push_back({pre + "ffn.out.bias", &l.b2, K::kBias});
    out.push_back({pre + "ln2.gain", &l.ln2_gain, K::kNorm});
    out.push_back({pre + "ln2.bias", &l.ln2_bias, K::kNorm});
  }
  out.push_back({"pooler.weight", &p.pooler_w, K::kWeight});
  out.push_back({"pooler.bias", &p.pooler_b, K::kBias});
  return out;
}

EncoderParams init_params(const EncoderConfig& config, uint64_t seed) {
  config.validate();
  EncoderParams p = EncoderParams::zeros(config);
  Rng rng(seed);
  for (auto& t : tensors(p)) {
    switch (t.kind) {
      case TensorKind::kWeight:
      case TensorKind::kEmbedding:
        for (double& v : t.tensor->data) v = rng.truncated_normal(0.02);
        break;
      case TensorKind::kNorm:
        // Gains start at 1, biases at 0.
        if (t.name.ends_with("gain")) std::fill(t.tensor->data.begin(), t.tensor->data.end(), 1.0);
        break;
      case TensorKind::kBias:
        break;
    }
  }
  return p;
}

double EncoderCache::attention(size_t layer, size_t row, size_t head, size_t i, size_t j, size_t n_heads) const {
  const size_t len = offsets[row + 1] - offsets[row];
  if (i >= len || head >= n_heads) throw std::out_of_range("attention query index");
  if (j >= len) return 0.0;
  return layers.at(layer).probs[prob_offsets[row] + (head * len + i) * len + j];
}

std::vector<double> EncoderOutput::hidden_at(size_t row, size_t pos) const {
  const size_t len = offsets[row + 1] - offsets[row];
  if (pos >= len) return std::vector<double>(hidden.cols, 0.0);
  const auto r = hidden.row(offsets[row] + pos);
  return {r.begin(), r.end()};
}

EncoderOutput encoder_forward(const Batch& batch, const EncoderParams& params, const EncoderConfig& config,
                              bool train_mode, uint64_t rng_seed, EncoderCache* cache) {
  config.validate();
  check_inputs(batch, config);

  EncoderCache local;
  EncoderCache& c = cache ? *cache : local;
  c = EncoderCache{};
  c.train_mode = train_mode;
  c.rows = batch.rows;
  const bool drop = train_mode && config.dropout > 0.0;
  Rng rng(rng_seed);

  const size_t d = config.d_model;
  const size_t heads = config.n_heads;
  const size_t dh = config.head_dim();
  const double scale = 1.0 / std::sqrt(static_cast<double>(dh));

  c.offsets.assign(1, 0);
  c.prob_offsets.assign(1, 0);
  for (size_t r = 0; r < batch.rows; ++r) {
    const size_t len = batch.length(r);
    c.offsets.push_back(c.offsets.back() + len);
    c.prob_offsets.push_back(c.prob_offsets.back() + heads * len * len);
    for (size_t p = 0; p < len; ++p) {
      c.token_ids.push_back(batch.token(r, p));
      c.segment_ids.push_back(batch.segment(r, p));
      c.positions.push_back(p);
    }
  }
  const size_t total = c.offsets.back();

  // Embeddings.
  Matrix x(total, d);
  for (size_t t = 0; t < total; ++t) {
    const auto tok = params.token_embedding.row(static_cast<size_t>(c.token_ids[t]));
    const auto pos = params.position_embedding.row(c.positions[t]);
    const auto seg = params.segment_embedding.row(static_cast<size_t>(c.segment_ids[t]));
    auto xr = x.row(t);
    for (size_t j = 0; j < d; ++j) xr[j] = tok[j] + pos[j] + seg[j];
  }
  Matrix h;
  layernorm_forward(x, params.emb_ln_gain, params.emb_ln_bias, config.layernorm_eps, c.emb_ln, h);
  dropout_forward(h, config.dropout, drop, rng, c.emb_mask);

  c.layers.resize(config.n_layers);
  for (size_t li = 0; li < config.n_layers; ++li) {
    const LayerParams& lp = params.layers[li];
    LayerCache& lc = c.layers[li];
    lc.input = std::move(h);
    linear(lc.input, lp.wq, lp.bq, lc.q);
    linear(lc.input, lp.wk, lp.bk, lc.k);
    linear(lc.input, lp.wv, lp.bv, lc.v);

    lc.probs.assign(c.prob_offsets.back(), 0.0);
    lc.context.reset(total, d);
    if (drop) lc.prob_mask.assign(lc.probs.size(), 0.0);
    const double keep_scale = drop ? 1.0 / (1.0 - config.dropout) : 1.0;
    for (size_t r = 0; r < batch.rows; ++r) {
      const size_t base = c.offsets[r];
      const size_t len = c.offsets[r + 1] - base;
      for (size_t hd = 0; hd < heads; ++hd) {
        const size_t col = hd * dh;
        for (size_t i = 0; i < len; ++i) {
          double* p = lc.probs.data() + c.prob_offsets[r] + (hd * len + i) * len;
          const double* qi = &lc.q(base + i, col);
          double mx = -INFINITY;
          for (size_t j = 0; j < len; ++j) {
            const double* kj = &lc.k(base + j, col);
            double s = 0.0;
            for (size_t e = 0; e < dh; ++e) s += qi[e] * kj[e];
            p[j] = s * scale;
            mx = std::max(mx, p[j]);
          }
          double z = 0.0;
          for (size_t j = 0; j < len; ++j) {
            p[j] = std::exp(p[j] - mx);
            z += p[j];
          }
          for (size_t j = 0; j < len; ++j) p[j] /= z;
          double* ctx = &lc.context(base + i, col);
          double* m = drop ? lc.prob_mask.data() + (p - lc.probs.data()) : nullptr;
          for (size_t j = 0; j < len; ++j) {
            double w = p[j];
            if (m) {
              m[j] = rng.uniform() < config.dropout ? 0.0 : keep_scale;
              w *= m[j];
            }
            if (w == 0.0) continue;
            const double* vj = &lc.v(base + j, col);
            for (size_t e = 0; e < dh; ++e) ctx[e] += w * vj[e];
          }
        }
      }
    }

    Matrix a;
    linear(lc.context, lp.wo, lp.bo, a);
    dropout_forward(a, config.dropout, drop, rng, lc.attn_out_mask);
    for (size_t i = 0; i < a.size(); ++i) a.data[i] += lc.input.data[i];
    layernorm_forward(a, lp.ln1_gain, lp.ln1_bias, config.layernorm_eps, lc.ln1, lc.h1);

    linear(lc.h1, lp.w1, lp.b1, lc.ff_pre);
    lc.ff_act.reset(total, config.d_ff);
    for (size_t i = 0; i < lc.ff_pre.size(); ++i) lc.ff_act.data[i] = gelu(lc.ff_pre.data[i]);
    Matrix o;
    linear(lc.ff_act, lp.w2, lp.b2, o);
    dropout_forward(o, config.dropout, drop, rng, lc.ff_out_mask);
    for (size_t i = 0; i < o.size(); ++i) o.data[i] += lc.h1.data[i];
    layernorm_forward(o, lp.ln2_gain, lp.ln2_bias, config.layernorm_eps, lc.ln2, h);
  }
  c.output = std::move(h);

  c.cls.reset(batch.rows, d);
  for (size_t r = 0; r < batch.rows; ++r) {
    const auto src = c.output.row(c.offsets[r]);
    std::copy(src.begin(), src.end(), c.cls.row(r).begin());
  }
  if (config.use_pooler) {
    linear(c.cls, params.pooler_w, params.pooler_b, c.pooled);
    for (double& v : c.pooled.data) v = std::tanh(v);
  } else {
    c.pooled = c.cls;
  }
  c.valid = true;

  EncoderOutput out;
  out.rows = batch.rows;
  out.width = batch.width;
  out.offsets = c.offsets;
  if (cache) {
    out.hidden = c.output;
    out.pooled = c.pooled;
  } else {
    out.hidden = std::move(local.output);
    out.pooled = std::move(local.pooled);
  }
  return out;
}

void encoder_backward(const Matrix& d_pooled, const EncoderCache& c, const EncoderParams& params,
                      const EncoderConfig& config, EncoderParams& grads) {
  if (!c.valid) throw std::logic_error("encoder_backward called without a forward activation cache");
  if (d_pooled.rows != c.rows || d_pooled.cols != config.d_model)
    throw std::invalid_argument("d_pooled shape does not match the cached batch");

  const size_t d = config.d_model;
  const size_t heads = config.n_heads;
  const size_t dh = config.head_dim();
  const double scale = 1.0 / std::sqrt(static_cast<double>(dh));
  const size_t total = c.offsets.back();

  Matrix d_cls;
  if (config.use_pooler) {
    Matrix dz = d_pooled;
    for (size_t i = 0; i < dz.size(); ++i) dz.data[i] *= 1.0 - c.pooled.data[i] * c.pooled.data[i];
    linear_backward(c.cls, params.pooler_w, dz, grads.pooler_w, grads.pooler_b, d_cls, false);
  } else {
    d_cls = d_pooled;
  }

  Matrix dh_out(total, d);
  for (size_t r = 0; r < c.rows; ++r) {
    const auto src = d_cls.row(r);
    std::copy(src.begin(), src.end(), dh_out.row(c.offsets[r]).begin());
  }

  Matrix d_ff, d_h1, d_ctx, dq, dk, dv;
  for (size_t li = config.n_layers; li-- > 0;) {
    const LayerParams& lp = params.layers[li];
    LayerParams& lg = grads.layers[li];
    const LayerCache& lc = c.layers[li];

    // out = LN2(h1 + dropout(W2 gelu(W1 h1 + b1) + b2))
    Matrix d_s2;
    layernorm_backward(dh_out, lc.ln2, lp.ln2_gain, lg.ln2_gain, lg.ln2_bias, d_s2);
    d_h1 = d_s2;
    dropout_backward(d_s2, lc.ff_out_mask);
    linear_backward(lc.ff_act, lp.w2, d_s2, lg.w2, lg.b2, d_ff, false);
    for (size_t i = 0; i < d_ff.size(); ++i) d_ff.data[i] *= gelu_grad(lc.ff_pre.data[i]);
    linear_backward(lc.h1, lp.w1, d_ff, lg.w1, lg.b1, d_h1, true);

    // h1 = LN1(x + dropout(Wo ctx + bo))
    Matrix d_s1;
    layernorm_backward(d_h1, lc.ln1, lp.ln1_gain, lg.ln1_gain, lg.ln1_bias, d_s1);
    Matrix d_x = d_s1;
    dropout_backward(d_s1, lc.attn_out_mask);
    linear_backward(lc.context, lp.wo, d_s1, lg.wo, lg.bo, d_ctx, false);

    dq.reset(total, d);
    dk.reset(total, d);
    dv.reset(total, d);
    std::vector<double> dp;
    for (size_t r = 0; r < c.rows; ++r) {
      const size_t base = c.offsets[r];
      const size_t len = c.offsets[r + 1] - base;
      dp.resize(len);
      for (size_t hd = 0; hd < heads; ++hd) {
        const size_t col = hd * dh;
        for (size_t i = 0; i < len; ++i) {
          const size_t off = c.prob_offsets[r] + (hd * len + i) * len;
          const double* p = lc.probs.data() + off;
          const double* m = lc.prob_mask.empty() ? nullptr : lc.prob_mask.data() + off;
          const double* dci = &d_ctx(base + i, col);
          // dP'_ij = dctx_i . v_j ; dV_j += P'_ij dctx_i ; dP = dP' * mask
          double dot = 0.0;
          for (size_t j = 0; j < len; ++j) {
            const double mj = m ? m[j] : 1.0;
            const double* vj = &lc.v(base + j, col);
            double s = 0.0;
            for (size_t e = 0; e < dh; ++e) s += dci[e] * vj[e];
            dp[j] = s * mj;
            dot += dp[j] * p[j];
            const double w = p[j] * mj;
            if (w != 0.0) {
              double* dvj = &dv(base + j, col);
              for (size_t e = 0; e < dh; ++e) dvj[e] += w * dci[e];
            }
          }
          // Softmax backward, then through the scaled dot product.
          const double* qi = &lc.q(base + i, col);
          double* dqi = &dq(base + i, col);
          for (size_t j = 0; j < len; ++j) {
            const double ds = p[j] * (dp[j] - dot) * scale;
            if (ds == 0.0) continue;
            const double* kj = &lc.k(base + j, col);
            double* dkj = &dk(base + j, col);
            for (size_t e = 0; e < dh; ++e) {
              dqi[e] += ds * kj[e];
              dkj[e] += ds * qi[e];
            }
          }
        }
      }
    }
    linear_backward(lc.input, lp.wq, dq, lg.wq, lg.bq, d_x, true);
    linear_backward(lc.input, lp.wk, dk, lg.wk, lg.bk, d_x, true);
    linear_backward(lc.input, lp.wv, dv, lg.wv, lg.bv, d_x, true);
    dh_out = std::move(d_x);
  }

  dropout_backward(dh_out, c.emb_mask);
  Matrix d_emb;
  layernorm_backward(dh_out, c.emb_ln, params.emb_ln_gain, grads.emb_ln_gain, grads.emb_ln_bias, d_emb);
  for (size_t t = 0; t < total; ++t) {
    const auto src = d_emb.row(t);
    auto tok = grads.token_embedding.row(static_cast<size_t>(c.token_ids[t]));
    auto pos = grads.position_embedding.row(c.positions[t]);
    auto seg = grads.segment_embedding.row(static_cast<size_t>(c.segment_ids[t]));
    for (size_t j = 0; j < d; ++j) {
      tok[j] += src[j];
      pos[j] += src[j];
      seg[j] += src[j];
    }
  }
}

}  // namespace nbslu
