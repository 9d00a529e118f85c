#include "nbslu/kernels.h"

#include <omp.h>

#include <algorithm>
#include <stdexcept>
#include <string>

namespace nbslu::kernels {
namespace {

// Below this many multiply-adds the fork/join cost dominates.
constexpr size_t kParallelWork = 1 << 15;

void check(bool ok, const char* what, const Matrix& a, const Matrix& b) {
  if (!ok) {
    throw std::invalid_argument(std::string(what) + ": shape mismatch (" +
                                std::to_string(a.rows) + "x" + std::to_string(a.cols) + ", " +
                                std::to_string(b.rows) + "x" + std::to_string(b.cols) + ")");
  }
}

void prepare_output(Matrix& c, size_t m, size_t n, bool accumulate) {
  if (accumulate) {
    if (c.rows != m || c.cols != n) throw std::invalid_argument("accumulate into wrong-shaped output");
  } else {
    c.reset(m, n);
  }
}

// Register tile: kMr rows of c by kNr columns, accumulated over the whole
// k range before being added to c once.
constexpr size_t kMr = 4;
constexpr size_t kNr = 16;

// Eight doubles, loaded and stored without alignment requirements.
typedef double Vec8 __attribute__((vector_size(64), aligned(8)));

// c[0:kMr, 0:kNr] += sum_k a(i, k) * b(k, j), where a(i, k) = a[i * rs + k * cs].
inline void tile_full(size_t k_dim, const double* a, size_t rs, size_t cs, const double* b, size_t ldb, double* c,
                      size_t ldc) {
  static_assert(kMr == 4 && kNr == 16);
  Vec8 c00 = {}, c01 = {}, c10 = {}, c11 = {}, c20 = {}, c21 = {}, c30 = {}, c31 = {};
  for (size_t k = 0; k < k_dim; ++k) {
    const Vec8 b0 = *reinterpret_cast<const Vec8*>(b + k * ldb);
    const Vec8 b1 = *reinterpret_cast<const Vec8*>(b + k * ldb + 8);
    const double* ak = a + k * cs;
    const double a0 = ak[0], a1 = ak[rs], a2 = ak[2 * rs], a3 = ak[3 * rs];
    c00 += a0 * b0;
    c01 += a0 * b1;
    c10 += a1 * b0;
    c11 += a1 * b1;
    c20 += a2 * b0;
    c21 += a2 * b1;
    c30 += a3 * b0;
    c31 += a3 * b1;
  }
  const Vec8 acc[kMr][2] = {{c00, c01}, {c10, c11}, {c20, c21}, {c30, c31}};
  for (size_t i = 0; i < kMr; ++i)
    for (size_t h = 0; h < 2; ++h) *reinterpret_cast<Vec8*>(c + i * ldc + 8 * h) += acc[i][h];
}

// Partial tile of mr x nr (mr <= kMr, nr <= kNr) at the matrix edges.
inline void tile_edge(size_t mr, size_t nr, size_t k_dim, const double* a, size_t rs, size_t cs, const double* b,
                      size_t ldb, double* c, size_t ldc) {
  double acc[kMr][kNr] = {};
  for (size_t k = 0; k < k_dim; ++k) {
    const double* bk = b + k * ldb;
    for (size_t i = 0; i < mr; ++i) {
      const double aik = a[i * rs + k * cs];
      for (size_t j = 0; j < nr; ++j) acc[i][j] += aik * bk[j];
    }
  }
  for (size_t i = 0; i < mr; ++i)
    for (size_t j = 0; j < nr; ++j) c[i * ldc + j] += acc[i][j];
}

// c (m x n) += A * b with A(i, k) = a[i * rs + k * cs] and b row-major k x n.
// Tiles are distributed over threads; each tile's arithmetic does not depend
// on which thread runs it.
void tiled_gemm(size_t m, size_t n, size_t k_dim, const double* a, size_t rs, size_t cs, const double* b, double* c) {
  const size_t row_tiles = (m + kMr - 1) / kMr;
  const size_t col_tiles = (n + kNr - 1) / kNr;
  const size_t tiles = row_tiles * col_tiles;
  const bool par = m * n * k_dim >= kParallelWork && tiles > 1;
#pragma omp parallel for schedule(static) if (par)
  for (size_t t = 0; t < tiles; ++t) {
    // Column-tile-major order keeps one k x kNr panel of b hot across row tiles.
    const size_t jt = t / row_tiles;
    const size_t it = t % row_tiles;
    const size_t i0 = it * kMr;
    const size_t j0 = jt * kNr;
    const size_t mr = std::min(kMr, m - i0);
    const size_t nr = std::min(kNr, n - j0);
    const double* at = a + i0 * rs;
    const double* bt = b + j0;
    double* ct = c + i0 * n + j0;
    if (mr == kMr && nr == kNr) {
      tile_full(k_dim, at, rs, cs, bt, n, ct, n);
    } else {
      tile_edge(mr, nr, k_dim, at, rs, cs, bt, n, ct, n);
    }
  }
}

}  // namespace

int num_threads() { return omp_get_max_threads(); }
void set_num_threads(int n) { omp_set_num_threads(n < 1 ? 1 : n); }

void gemm_nn(const Matrix& a, const Matrix& b, Matrix& c, bool accumulate) {
  check(a.cols == b.rows, "gemm_nn", a, b);
  prepare_output(c, a.rows, b.cols, accumulate);
  tiled_gemm(a.rows, b.cols, a.cols, a.data.data(), a.cols, 1, b.data.data(), c.data.data());
}

void gemm_nt(const Matrix& a, const Matrix& b, Matrix& c, bool accumulate) {
  check(a.cols == b.cols, "gemm_nt", a, b);
  // Transposing b makes the tile's inner loop read contiguous memory.
  Matrix bt(b.cols, b.rows);
  for (size_t r = 0; r < b.rows; ++r)
    for (size_t k = 0; k < b.cols; ++k) bt(k, r) = b(r, k);
  gemm_nn(a, bt, c, accumulate);
}

void gemm_tn(const Matrix& a, const Matrix& b, Matrix& c, bool accumulate) {
  check(a.rows == b.rows, "gemm_tn", a, b);
  prepare_output(c, a.cols, b.cols, accumulate);
  tiled_gemm(a.cols, b.cols, a.rows, a.data.data(), 1, a.cols, b.data.data(), c.data.data());
}

void add_row_bias(Matrix& y, const Matrix& bias) {
  check(bias.rows == 1 && bias.cols == y.cols, "add_row_bias", y, bias);
  const size_t n = y.cols;
  for (size_t r = 0; r < y.rows; ++r) {
    double* __restrict yr = y.data.data() + r * n;
    const double* __restrict b = bias.data.data();
    for (size_t j = 0; j < n; ++j) yr[j] += b[j];
  }
}

void column_sums(const Matrix& x, Matrix& out, bool accumulate) {
  prepare_output(out, 1, x.cols, accumulate);
  const size_t n = x.cols;
  double* __restrict o = out.data.data();
  for (size_t r = 0; r < x.rows; ++r) {
    const double* __restrict xr = x.data.data() + r * n;
    for (size_t j = 0; j < n; ++j) o[j] += xr[j];
  }
}

namespace reference {

void gemm_nn(const Matrix& a, const Matrix& b, Matrix& c, bool accumulate) {
  check(a.cols == b.rows, "reference::gemm_nn", a, b);
  prepare_output(c, a.rows, b.cols, accumulate);
  for (size_t i = 0; i < a.rows; ++i)
    for (size_t j = 0; j < b.cols; ++j) {
      double s = 0.0;
      for (size_t k = 0; k < a.cols; ++k) s += a(i, k) * b(k, j);
      c(i, j) += s;
    }
}

void gemm_nt(const Matrix& a, const Matrix& b, Matrix& c, bool accumulate) {
  check(a.cols == b.cols, "reference::gemm_nt", a, b);
  prepare_output(c, a.rows, b.rows, accumulate);
  for (size_t i = 0; i < a.rows; ++i)
    for (size_t j = 0; j < b.rows; ++j) {
      double s = 0.0;
      for (size_t k = 0; k < a.cols; ++k) s += a(i, k) * b(j, k);
      c(i, j) += s;
    }
}

void gemm_tn(const Matrix& a, const Matrix& b, Matrix& c, bool accumulate) {
  check(a.rows == b.rows, "reference::gemm_tn", a, b);
  prepare_output(c, a.cols, b.cols, accumulate);
  for (size_t i = 0; i < a.cols; ++i)
    for (size_t j = 0; j < b.cols; ++j) {
      double s = 0.0;
      for (size_t k = 0; k < a.rows; ++k) s += a(k, i) * b(k, j);
      c(i, j) += s;
    }
}

void add_row_bias(Matrix& y, const Matrix& bias) {
  check(bias.rows == 1 && bias.cols == y.cols, "reference::add_row_bias", y, bias);
  for (size_t r = 0; r < y.rows; ++r)
    for (size_t j = 0; j < y.cols; ++j) y(r, j) += bias(0, j);
}

void column_sums(const Matrix& x, Matrix& out, bool accumulate) {
  prepare_output(out, 1, x.cols, accumulate);
  for (size_t j = 0; j < x.cols; ++j) {
    double s = 0.0;
    for (size_t r = 0; r < x.rows; ++r) s += x(r, j);
    out(0, j) += s;
  }
}

}  // namespace reference
}  // namespace nbslu::kernels
