#include "nbslu/stc_head.h"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "nbslu/kernels.h"
#include "nbslu/random.h"

namespace nbslu {

StcParams StcParams::zeros(const LabelSpace& labels, size_t d_model) {
  StcParams p;
  const size_t n = labels.num_pairs();
  p.presence_weight.reset(n, d_model);
  p.presence_bias.reset(1, n);
  p.head_of_pair.assign(n, -1);
  for (size_t k = 0; k < n; ++k) {
    if (labels.valueless(k)) continue;
    p.head_of_pair[k] = static_cast<int>(p.value_heads.size());
    ValueHead h;
    h.pair = k;
    h.weight.reset(labels.values(k).size(), d_model);
    h.bias.reset(1, labels.values(k).size());
    p.value_heads.push_back(std::move(h));
  }
  return p;
}

std::vector<TensorRef> tensors(StcParams& p) {
  std::vector<TensorRef> out = {
      {"stc.presence.weight", &p.presence_weight, TensorKind::kWeight},
      {"stc.presence.bias", &p.presence_bias, TensorKind::kBias},
  };
  for (auto& h : p.value_heads) {
    const std::string pre = "stc.value" + std::to_string(h.pair) + ".";
    out.push_back({pre + "weight", &h.weight, TensorKind::kWeight});
    out.push_back({pre + "bias", &h.bias, TensorKind::kBias});
  }
  return out;
}

StcParams init_stc_params(const LabelSpace& labels, size_t d_model, uint64_t seed) {
  StcParams p = StcParams::zeros(labels, d_model);
  Rng rng(seed);
  for (auto& t : tensors(p))
    if (t.kind == TensorKind::kWeight)
      for (double& v : t.tensor->data) v = rng.truncated_normal(0.02);
  return p;
}

StcScores stc_forward(const Matrix& pooled, const StcParams& params) {
  StcScores s;
  kernels::gemm_nt(pooled, params.presence_weight, s.presence);
  kernels::add_row_bias(s.presence, params.presence_bias);
  for (double& z : s.presence.data) z = 1.0 / (1.0 + std::exp(-z));
  for (const auto& h : params.value_heads) {
    Matrix logits;
    kernels::gemm_nt(pooled, h.weight, logits);
    kernels::add_row_bias(logits, h.bias);
    for (size_t r = 0; r < logits.rows; ++r) {
      auto row = logits.row(r);
      const double mx = *std::max_element(row.begin(), row.end());
      double z = 0.0;
      for (double& v : row) z += (v = std::exp(v - mx));
      for (double& v : row) v /= z;
    }
    s.value_probs.push_back(std::move(logits));
  }
  return s;
}

Prediction prediction_at(const StcScores& scores, const StcParams& params, size_t row) {
  Prediction p;
  const auto pres = scores.presence.row(row);
  p.presence.assign(pres.begin(), pres.end());
  p.value_probs.resize(params.num_pairs());
  for (size_t h = 0; h < params.value_heads.size(); ++h) {
    const auto v = scores.value_probs[h].row(row);
    p.value_probs[params.value_heads[h].pair].assign(v.begin(), v.end());
  }
  return p;
}

double stc_loss(const StcScores& scores, const Batch& gold, const Matrix& pooled, const StcParams& params,
                StcParams* grads, Matrix* d_pooled) {
  const size_t rows = scores.rows();
  const size_t pairs = params.num_pairs();
  if (gold.rows != rows || gold.num_pairs != pairs) throw std::invalid_argument("stc_loss: gold/batch shape mismatch");
  const double inv_rows = rows ? 1.0 / static_cast<double>(rows) : 0.0;

  double loss = 0.0;
  Matrix d_presence(rows, pairs);
  std::vector<Matrix> d_values;
  for (size_t h = 0; h < params.value_heads.size(); ++h)
    d_values.emplace_back(rows, params.value_heads[h].weight.rows);

  for (size_t r = 0; r < rows; ++r) {
    for (size_t k = 0; k < pairs; ++k) {
      const double p = scores.presence(r, k);
      const double y = gold.presence[r * pairs + k];
      // Clipped BCE; the gradient is that of the clipped function.
      if (y > 0.5) {
        loss -= std::log(std::max(p, kProbFloor));
        d_presence(r, k) = p > kProbFloor ? -(1.0 - p) * inv_rows : 0.0;
      } else {
        loss -= std::log(std::max(1.0 - p, kProbFloor));
        d_presence(r, k) = 1.0 - p > kProbFloor ? p * inv_rows : 0.0;
      }
      const int vi = gold.value_index[r * pairs + k];
      if (vi == Batch::kAbsentValue || y < 0.5) continue;
      const int head = params.head_of_pair[k];
      if (head < 0) throw std::out_of_range("gold value given for a valueless pair");
      const Matrix& q = scores.value_probs[static_cast<size_t>(head)];
      if (vi < 0 || static_cast<size_t>(vi) >= q.cols) throw std::out_of_range("gold value index out of range");
      const double qg = q(r, static_cast<size_t>(vi));
      loss -= std::log(std::max(qg, kProbFloor));
      if (qg > kProbFloor) {
        auto dv = d_values[static_cast<size_t>(head)].row(r);
        for (size_t c = 0; c < q.cols; ++c) dv[c] = q(r, c) * inv_rows;
        dv[static_cast<size_t>(vi)] -= inv_rows;
      }
    }
  }

  if (d_pooled) kernels::gemm_nn(d_presence, params.presence_weight, *d_pooled);
  if (grads) {
    kernels::gemm_tn(d_presence, pooled, grads->presence_weight, true);
    kernels::column_sums(d_presence, grads->presence_bias, true);
  }
  for (size_t h = 0; h < params.value_heads.size(); ++h) {
    if (d_pooled) kernels::gemm_nn(d_values[h], params.value_heads[h].weight, *d_pooled, true);
    if (grads) {
      kernels::gemm_tn(d_values[h], pooled, grads->value_heads[h].weight, true);
      kernels::column_sums(d_values[h], grads->value_heads[h].bias, true);
    }
  }
  return loss * inv_rows;
}

TripletSet decode(const Prediction& prediction, const LabelSpace& labels, double threshold) {
  std::vector<SemanticTriplet> out;
  for (size_t k = 0; k < labels.num_pairs(); ++k) {
    if (!(prediction.presence[k] > threshold)) continue;
    const auto& [act, slot] = labels.pairs()[k];
    if (labels.valueless(k)) {
      out.push_back({act, slot, ""});
      continue;
    }
    const auto& probs = prediction.value_probs[k];
    // max_element returns the first maximum: lowest index wins ties.
    const auto best = static_cast<size_t>(std::max_element(probs.begin(), probs.end()) - probs.begin());
    out.push_back({act, slot, labels.values(k)[best]});
  }
  return make_triplet_set(std::move(out));
}

}  // namespace nbslu
