#ifndef NBSLU_TENSOR_H_
#define NBSLU_TENSOR_H_

#include <algorithm>
#include <cstddef>
#include <span>
#include <vector>

namespace nbslu {

// Dense row-major matrix of doubles. Vectors are 1 x n matrices.
struct Matrix {
  size_t rows = 0;
  size_t cols = 0;
  std::vector<double> data;

  Matrix() = default;
  Matrix(size_t r, size_t c, double fill = 0.0) : rows(r), cols(c), data(r * c, fill) {}

  double& operator()(size_t r, size_t c) { return data[r * cols + c]; }
  const double& operator()(size_t r, size_t c) const { return data[r * cols + c]; }

  std::span<double> row(size_t r) { return {data.data() + r * cols, cols}; }
  std::span<const double> row(size_t r) const { return {data.data() + r * cols, cols}; }

  size_t size() const { return data.size(); }
  bool empty() const { return data.empty(); }
  void zero() { std::fill(data.begin(), data.end(), 0.0); }
  void reset(size_t r, size_t c) {
    rows = r;
    cols = c;
    data.assign(r * c, 0.0);
  }
  bool same_shape(const Matrix& o) const { return rows == o.rows && cols == o.cols; }

  friend bool operator==(const Matrix&, const Matrix&) = default;
};

}  // namespace nbslu

#endif  // NBSLU_TENSOR_H_
