// Parallel kernels against the serial reference loops, plus one encoder
// forward/backward step at the desk-profile shape.

#include <benchmark/benchmark.h>

#include "nbslu/encoder.h"
#include "nbslu/kernels.h"
#include "nbslu/random.h"
#include "nbslu/representation.h"

namespace {

using nbslu::Matrix;

Matrix random_matrix(size_t r, size_t c, uint64_t seed) {
  nbslu::Rng rng(seed);
  Matrix m(r, c);
  for (double& x : m.data) x = rng.uniform() - 0.5;
  return m;
}

// Shapes: (tokens in a batch) x d_model times d_model x d_ff.
template <void (*Gemm)(const Matrix&, const Matrix&, Matrix&, bool)>
void BM_gemm_nn(benchmark::State& state) {
  const size_t m = state.range(0), k = state.range(1), n = state.range(2);
  const Matrix a = random_matrix(m, k, 1), b = random_matrix(k, n, 2);
  Matrix c;
  for (auto _ : state) {
    Gemm(a, b, c, false);
    benchmark::DoNotOptimize(c.data.data());
  }
  state.counters["GFLOPS"] = benchmark::Counter(2.0 * m * n * k, benchmark::Counter::kIsIterationInvariantRate,
                                                benchmark::Counter::kIs1000);
}

template <void (*Gemm)(const Matrix&, const Matrix&, Matrix&, bool)>
void BM_gemm_nt(benchmark::State& state) {
  const size_t m = state.range(0), k = state.range(1), n = state.range(2);
  const Matrix a = random_matrix(m, k, 1), b = random_matrix(n, k, 2);
  Matrix c;
  for (auto _ : state) {
    Gemm(a, b, c, false);
    benchmark::DoNotOptimize(c.data.data());
  }
  state.counters["GFLOPS"] = benchmark::Counter(2.0 * m * n * k, benchmark::Counter::kIsIterationInvariantRate,
                                                benchmark::Counter::kIs1000);
}

template <void (*Gemm)(const Matrix&, const Matrix&, Matrix&, bool)>
void BM_gemm_tn(benchmark::State& state) {
  const size_t m = state.range(0), k = state.range(1), n = state.range(2);
  const Matrix a = random_matrix(k, m, 1), b = random_matrix(k, n, 2);
  Matrix c;
  for (auto _ : state) {
    Gemm(a, b, c, false);
    benchmark::DoNotOptimize(c.data.data());
  }
  state.counters["GFLOPS"] = benchmark::Counter(2.0 * m * n * k, benchmark::Counter::kIsIterationInvariantRate,
                                                benchmark::Counter::kIs1000);
}

void shapes(benchmark::internal::Benchmark* b) {
  b->Args({432, 128, 128})->Args({432, 128, 512})->Args({432, 512, 128})->Args({64, 768, 768});
}
void tn_shapes(benchmark::internal::Benchmark* b) {
  b->Args({128, 432, 128})->Args({128, 432, 512})->Args({512, 432, 128});
}

BENCHMARK(BM_gemm_nn<nbslu::kernels::gemm_nn>)->Apply(shapes);
BENCHMARK(BM_gemm_nn<nbslu::kernels::reference::gemm_nn>)->Apply(shapes);
BENCHMARK(BM_gemm_nt<nbslu::kernels::gemm_nt>)->Apply(shapes);
BENCHMARK(BM_gemm_nt<nbslu::kernels::reference::gemm_nt>)->Apply(shapes);
BENCHMARK(BM_gemm_tn<nbslu::kernels::gemm_tn>)->Apply(tn_shapes);
BENCHMARK(BM_gemm_tn<nbslu::kernels::reference::gemm_tn>)->Apply(tn_shapes);

// One training step of the encoder on a 16 x 27 batch.
void BM_encoder_step(benchmark::State& state) {
  nbslu::EncoderConfig cfg;
  cfg.vocab_size = 200;
  const nbslu::EncoderParams params = nbslu::init_params(cfg, 3);
  nbslu::EncoderParams grads = nbslu::EncoderParams::zeros(cfg);
  nbslu::Batch batch;
  batch.rows = 16;
  batch.width = 27;
  nbslu::Rng rng(4);
  for (size_t i = 0; i < batch.rows * batch.width; ++i) {
    batch.token_ids.push_back(4 + static_cast<int>(rng.below(196)));
    batch.segment_ids.push_back(i % batch.width < 8 ? 0 : 1);
    batch.attention_mask.push_back(1);
  }
  Matrix d_pooled = random_matrix(batch.rows, cfg.d_model, 5);
  nbslu::EncoderCache cache;
  for (auto _ : state) {
    nbslu::encoder_forward(batch, params, cfg, true, 7, &cache);
    nbslu::encoder_backward(d_pooled, cache, params, cfg, grads);
  }
}
BENCHMARK(BM_encoder_step)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
