#ifndef NBSLU_KERNELS_H_
#define NBSLU_KERNELS_H_

// Dense linear-algebra kernels used by the encoder and the tuple classifier.
//
// The top-level functions are the production kernels: register-tiled
// products with OpenMP work-sharing over output tiles. Every output element is
// produced by exactly one thread with a fixed summation order, so results are
// bit-identical for any thread count. The `reference` namespace holds plain
// serial triple loops kept as the test oracle and the benchmark baseline.
//
// All functions overwrite `c` unless `accumulate` is set, in which case the
// product is added to the existing contents. Shapes are checked and a
// std::invalid_argument is thrown on mismatch.

#include "nbslu/tensor.h"

namespace nbslu::kernels {

// c = a * b             a: m x k, b: k x n, c: m x n
void gemm_nn(const Matrix& a, const Matrix& b, Matrix& c, bool accumulate = false);
// c = a * b^T           a: m x k, b: n x k, c: m x n
void gemm_nt(const Matrix& a, const Matrix& b, Matrix& c, bool accumulate = false);
// c = a^T * b           a: k x m, b: k x n, c: m x n
void gemm_tn(const Matrix& a, const Matrix& b, Matrix& c, bool accumulate = false);

// y[r, :] += bias[0, :] for every row.
void add_row_bias(Matrix& y, const Matrix& bias);
// out[0, :] (+)= sum over rows of x.
void column_sums(const Matrix& x, Matrix& out, bool accumulate = false);

// Threads used by the parallel kernels (OpenMP max threads).
int num_threads();
void set_num_threads(int n);

namespace reference {
void gemm_nn(const Matrix& a, const Matrix& b, Matrix& c, bool accumulate = false);
void gemm_nt(const Matrix& a, const Matrix& b, Matrix& c, bool accumulate = false);
void gemm_tn(const Matrix& a, const Matrix& b, Matrix& c, bool accumulate = false);
void add_row_bias(Matrix& y, const Matrix& bias);
void column_sums(const Matrix& x, Matrix& out, bool accumulate = false);
}  // namespace reference

}  // namespace nbslu::kernels

#endif  // NBSLU_KERNELS_H_
