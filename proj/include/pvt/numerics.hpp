#pragma once

#include <vector>

#include "pvt/matrix.hpp"

namespace pvt {

template <typename T>
struct LayerNormParams {
  std::vector<T> gamma;
  std::vector<T> beta;
  T eps = T(1e-5);

  static LayerNormParams unit(std::size_t dim) {
    return {std::vector<T>(dim, T(1)), std::vector<T>(dim, T(0)), T(1e-5)};
  }
  std::size_t dim() const { return gamma.size(); }
};

// Two-layer perceptron D -> H -> D with a ReLU between the layers.
template <typename T>
struct MlpParams {
  BasicMatrix<T> w1;  // D x H
  std::vector<T> b1;  // H
  BasicMatrix<T> w2;  // H x D
  std::vector<T> b2;  // D

  static MlpParams zeros(std::size_t dim, std::size_t hidden) {
    return {BasicMatrix<T>(dim, hidden), std::vector<T>(hidden, T(0)),
            BasicMatrix<T>(hidden, dim), std::vector<T>(dim, T(0))};
  }
  std::size_t in_dim() const { return w1.rows(); }
  std::size_t hidden_dim() const { return w1.cols(); }
  std::size_t out_dim() const { return w2.cols(); }
};

// a (m x k) * b (k x n). Rows are distributed over OpenMP workers.
template <typename T>
BasicMatrix<T> matmul(const BasicMatrix<T>& a, const BasicMatrix<T>& b);

// a (m x k) * b^T where b is (n x k).
template <typename T>
BasicMatrix<T> matmul_transposed(const BasicMatrix<T>& a, const BasicMatrix<T>& b);

// Row-wise softmax with max subtraction. Throws NumericError on NaN input.
template <typename T>
BasicMatrix<T> softmax_rows(const BasicMatrix<T>& m);

// Per-row normalization to zero mean and unit (population) variance followed
// by the elementwise affine gamma * x + beta.
template <typename T>
BasicMatrix<T> layer_norm(const BasicMatrix<T>& m, const LayerNormParams<T>& p);

// relu(m * w1 + b1) * w2 + b2
template <typename T>
BasicMatrix<T> mlp_forward(const BasicMatrix<T>& m, const MlpParams<T>& p);

// m * w + b, optionally followed by ReLU.
template <typename T>
BasicMatrix<T> linear(const BasicMatrix<T>& m, const BasicMatrix<T>& w,
                      const std::vector<T>& b, bool relu);

template <typename T>
BasicMatrix<T> add(const BasicMatrix<T>& a, const BasicMatrix<T>& b);

template <typename T>
void add_inplace(BasicMatrix<T>& a, const BasicMatrix<T>& b);

}  // namespace pvt
