#include <cmath>

#include "doctest.h"
#include "nbslu/encoder.h"
#include "test_util.h"

using namespace nbslu;
using nbslu::testing::random_matrix;

namespace {

EncoderConfig tiny_config() {
  EncoderConfig c;
  c.vocab_size = 30;
  c.d_model = 16;
  c.n_layers = 2;
  c.n_heads = 2;
  c.d_ff = 32;
  c.max_positions = 40;
  c.dropout = 0.0;
  return c;
}

// Rows of the given lengths, padded to `width`; segment flips after 3 tokens.
Batch make_batch(const std::vector<size_t>& lengths, size_t width, uint64_t seed, int vocab = 30) {
  Rng rng(seed);
  Batch b;
  b.rows = lengths.size();
  b.width = width;
  for (size_t r = 0; r < b.rows; ++r)
    for (size_t c = 0; c < width; ++c) {
      const bool real = c < lengths[r];
      b.token_ids.push_back(!real ? kPadId : c == 0 ? kClsId : 4 + static_cast<int>(rng.below(vocab - 4)));
      b.segment_ids.push_back(real && c >= 3 ? 1 : 0);
      b.attention_mask.push_back(real ? 1 : 0);
    }
  return b;
}

// Scalar objective sum(pooled .* weights) and its gradient w.r.t. pooled.
double objective(const EncoderOutput& out, const Matrix& weights) {
  double s = 0.0;
  for (size_t i = 0; i < out.pooled.size(); ++i) s += out.pooled.data[i] * weights.data[i];
  return s;
}

}  // namespace

TEST_CASE("shapes and validation") {
  EncoderConfig c = tiny_config();
  c.d_model = 4;
  c.n_heads = 2;
  const EncoderParams p = init_params(c, 1);
  const Batch b = make_batch({2}, 2, 3);
  const EncoderOutput out = encoder_forward(b, p, c, false, 0);
  CHECK(out.hidden.rows == 2);
  CHECK(out.hidden.cols == 4);
  CHECK(out.pooled.rows == 1);
  CHECK(out.pooled.cols == 4);

  EncoderConfig bad = tiny_config();
  bad.n_heads = 3;
  CHECK_THROWS_AS(bad.validate(), std::invalid_argument);

  Batch oob = make_batch({3}, 3, 4);
  oob.token_ids[1] = 30;
  CHECK_THROWS_AS(encoder_forward(oob, p, c, false, 0), std::out_of_range);
  const Batch too_long = make_batch({41}, 41, 4);
  CHECK_THROWS_AS(encoder_forward(too_long, init_params(tiny_config(), 1), tiny_config(), false, 0),
                  std::out_of_range);
  Batch holes = make_batch({3}, 4, 4);
  holes.attention_mask = {1, 0, 1, 0};
  CHECK_THROWS_AS(encoder_forward(holes, p, c, false, 0), std::invalid_argument);

  EncoderCache empty;
  EncoderParams g = EncoderParams::zeros(c);
  CHECK_THROWS_AS(encoder_backward(Matrix(1, 4), empty, p, c, g), std::logic_error);
}

TEST_CASE("initialization") {
  EncoderConfig c = tiny_config();
  c.d_model = 128;
  c.d_ff = 128;
  c.n_heads = 4;
  c.vocab_size = 200;
  const EncoderParams a = init_params(c, 5), b = init_params(c, 5), other = init_params(c, 6);
  CHECK(a.token_embedding == b.token_embedding);
  CHECK(a.layers[1].w1 == b.layers[1].w1);
  CHECK_FALSE(a.layers[1].w1 == other.layers[1].w1);
  for (double g : a.emb_ln_gain.data) CHECK(g == 1.0);
  for (const auto& l : a.layers) {
    for (double g : l.ln1_gain.data) CHECK(g == 1.0);
    for (double g : l.ln2_gain.data) CHECK(g == 1.0);
    for (double x : l.bq.data) CHECK(x == 0.0);
  }
  // 10^4 weights from one matrix.
  double s = 0.0, s2 = 0.0;
  const auto& w = a.token_embedding.data;
  const size_t n = 10000;
  REQUIRE(w.size() >= n);
  for (size_t i = 0; i < n; ++i) {
    s += w[i];
    s2 += w[i] * w[i];
  }
  const double sd = std::sqrt(s2 / n - (s / n) * (s / n));
  CHECK(sd >= 0.015);
  CHECK(sd <= 0.025);
}

TEST_CASE("zero projections give uniform attention over real keys") {
  const EncoderConfig c = tiny_config();
  EncoderParams p = init_params(c, 2);
  for (auto& l : p.layers) {
    l.wq.zero();
    l.wk.zero();
  }
  const Batch b = make_batch({5, 3}, 5, 9);
  EncoderCache cache;
  encoder_forward(b, p, c, false, 0, &cache);
  for (size_t li = 0; li < c.n_layers; ++li)
    for (size_t r = 0; r < b.rows; ++r) {
      const size_t len = b.length(r);
      for (size_t h = 0; h < c.n_heads; ++h)
        for (size_t i = 0; i < len; ++i) {
          for (size_t j = 0; j < len; ++j) CHECK(cache.attention(li, r, h, i, j, c.n_heads) == doctest::Approx(1.0 / len));
          for (size_t j = len; j < b.width; ++j) CHECK(cache.attention(li, r, h, i, j, c.n_heads) == 0.0);
        }
    }
}

TEST_CASE("attention rows are distributions and padding is inert") {
  const EncoderConfig c = tiny_config();
  const EncoderParams p = init_params(c, 3);
  const Batch b = make_batch({9, 4, 1}, 9, 10);
  EncoderCache cache;
  const EncoderOutput out = encoder_forward(b, p, c, false, 0, &cache);
  for (size_t li = 0; li < c.n_layers; ++li)
    for (size_t r = 0; r < b.rows; ++r)
      for (size_t h = 0; h < c.n_heads; ++h)
        for (size_t i = 0; i < b.length(r); ++i) {
          double s = 0.0;
          for (size_t j = 0; j < b.width; ++j) s += cache.attention(li, r, h, i, j, c.n_heads);
          CHECK(std::abs(s - 1.0) < 1e-12);
        }

  const Batch wider = make_batch({9, 4, 1}, 17, 10);
  const EncoderOutput out2 = encoder_forward(wider, p, c, false, 0);
  for (size_t i = 0; i < out.pooled.size(); ++i) CHECK(out.pooled.data[i] == out2.pooled.data[i]);
  for (double x : out2.hidden_at(1, 12)) CHECK(x == 0.0);
}

TEST_CASE("determinism and dropout") {
  EncoderConfig c = tiny_config();
  c.dropout = 0.2;
  const EncoderParams p = init_params(c, 3);
  const Batch b = make_batch({7, 5}, 7, 11);
  const auto a1 = encoder_forward(b, p, c, true, 42);
  const auto a2 = encoder_forward(b, p, c, true, 42);
  const auto a3 = encoder_forward(b, p, c, true, 43);
  const auto e1 = encoder_forward(b, p, c, false, 42);
  const auto e2 = encoder_forward(b, p, c, false, 99);
  CHECK(a1.pooled == a2.pooled);
  CHECK_FALSE(a1.pooled == a3.pooled);
  CHECK(e1.pooled == e2.pooled);
  CHECK_FALSE(a1.pooled == e1.pooled);
}

TEST_CASE("gradients") {
  for (bool train : {false, true}) {
    CAPTURE(train);
    EncoderConfig c = tiny_config();
    c.dropout = train ? 0.1 : 0.0;
    EncoderParams p = init_params(c, 4);
    // Larger weights than the 0.02 init make every path contribute.
    for (auto& t : tensors(p))
      if (t.kind == TensorKind::kWeight)
        for (double& x : t.tensor->data) x *= 10.0;
    const Batch b = make_batch({6, 4}, 6, 12);
    const Matrix w = random_matrix(2, c.d_model, 13);
    const uint64_t seed = 77;

    EncoderCache cache;
    encoder_forward(b, p, c, train, seed, &cache);
    EncoderParams g = EncoderParams::zeros(c);
    encoder_backward(w, cache, p, c, g);

    auto refs = tensors(p);
    auto grefs = tensors(g);
    Rng pick(5);
    const double h = 1e-5;
    double worst = 0.0;
    for (int trial = 0; trial < 120; ++trial) {
      const size_t ti = pick.below(refs.size());
      Matrix& t = *refs[ti].tensor;
      const size_t k = pick.below(t.size());
      const double saved = t.data[k];
      t.data[k] = saved + h;
      const double up = objective(encoder_forward(b, p, c, train, seed), w);
      t.data[k] = saved - h;
      const double down = objective(encoder_forward(b, p, c, train, seed), w);
      t.data[k] = saved;
      const double numeric = (up - down) / (2 * h);
      const double analytic = grefs[ti].tensor->data[k];
      const double denom = std::max({std::abs(numeric), std::abs(analytic), 1e-5});
      worst = std::max(worst, std::abs(numeric - analytic) / denom);
      CAPTURE(refs[ti].name);
    }
    CHECK(worst < 1e-4);
  }
}

TEST_CASE("unused parameters get exactly zero gradient; gradients are linear in the upstream signal") {
  const EncoderConfig c = tiny_config();
  const EncoderParams p = init_params(c, 6);
  Batch b = make_batch({5, 5}, 5, 14);
  std::fill(b.segment_ids.begin(), b.segment_ids.end(), 0);
  EncoderCache cache;
  encoder_forward(b, p, c, false, 0, &cache);
  const Matrix w = random_matrix(2, c.d_model, 15);
  Matrix w2 = w;
  for (double& x : w2.data) x *= 2.0;
  EncoderParams g1 = EncoderParams::zeros(c), g2 = EncoderParams::zeros(c);
  encoder_backward(w, cache, p, c, g1);
  encoder_backward(w2, cache, p, c, g2);
  for (size_t j = 0; j < c.d_model; ++j) CHECK(g1.segment_embedding(1, j) == 0.0);
  for (size_t j = 0; j < c.d_model; ++j) CHECK(g1.position_embedding(7, j) == 0.0);
  auto r1 = tensors(g1), r2 = tensors(g2);
  for (size_t t = 0; t < r1.size(); ++t)
    for (size_t i = 0; i < r1[t].tensor->size(); ++i) CHECK(r2[t].tensor->data[i] == 2.0 * r1[t].tensor->data[i]);
}

TEST_CASE("pooler switch") {
  EncoderConfig c = tiny_config();
  c.use_pooler = false;
  const EncoderParams p = init_params(c, 7);
  const Batch b = make_batch({4}, 4, 16);
  const EncoderOutput out = encoder_forward(b, p, c, false, 0);
  const auto cls = out.hidden_at(0, 0);
  for (size_t j = 0; j < c.d_model; ++j) CHECK(out.pooled(0, j) == cls[j]);
}
