#include "pvt/numerics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <string>

namespace pvt {

namespace {

std::string shape_str(std::size_t r, std::size_t c) {
  return std::to_string(r) + "x" + std::to_string(c);
}

}  // namespace

template <typename T>
BasicMatrix<T> matmul(const BasicMatrix<T>& a, const BasicMatrix<T>& b) {
  if (a.cols() != b.rows()) {
    throw ShapeError("matmul: " + shape_str(a.rows(), a.cols()) + " * " +
                     shape_str(b.rows(), b.cols()));
  }
  const std::size_t m = a.rows(), k = a.cols(), n = b.cols();
  BasicMatrix<T> c(m, n);
#pragma omp parallel for schedule(static)
  for (std::int64_t i = 0; i < static_cast<std::int64_t>(m); ++i) {
    T* crow = c.row(i).data();
    const T* arow = a.row(i).data();
    for (std::size_t p = 0; p < k; ++p) {
      const T av = arow[p];
      const T* brow = b.row(p).data();
      for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
    }
  }
  return c;
}

template <typename T>
BasicMatrix<T> matmul_transposed(const BasicMatrix<T>& a, const BasicMatrix<T>& b) {
  if (a.cols() != b.cols()) {
    throw ShapeError("matmul_transposed: " + shape_str(a.rows(), a.cols()) +
                     " * (" + shape_str(b.rows(), b.cols()) + ")^T");
  }
  const std::size_t m = a.rows(), k = a.cols(), n = b.rows();
  BasicMatrix<T> c(m, n);
#pragma omp parallel for schedule(static)
  for (std::int64_t i = 0; i < static_cast<std::int64_t>(m); ++i) {
    const T* arow = a.row(i).data();
    for (std::size_t j = 0; j < n; ++j) {
      const T* brow = b.row(j).data();
      T s = T(0);
      for (std::size_t p = 0; p < k; ++p) s += arow[p] * brow[p];
      c(i, j) = s;
    }
  }
  return c;
}

template <typename T>
BasicMatrix<T> softmax_rows(const BasicMatrix<T>& m) {
  for (T v : m.data()) {
    if (std::isnan(v)) throw NumericError("softmax_rows: NaN input");
  }
  BasicMatrix<T> out(m.rows(), m.cols());
#pragma omp parallel for schedule(static)
  for (std::int64_t i = 0; i < static_cast<std::int64_t>(m.rows()); ++i) {
    const auto in = m.row(i);
    auto o = out.row(i);
    const T mx = *std::max_element(in.begin(), in.end());
    T sum = T(0);
    for (std::size_t j = 0; j < in.size(); ++j) {
      o[j] = std::exp(in[j] - mx);
      sum += o[j];
    }
    for (auto& v : o) v /= sum;
  }
  return out;
}

template <typename T>
BasicMatrix<T> layer_norm(const BasicMatrix<T>& m, const LayerNormParams<T>& p) {
  if (p.gamma.size() != m.cols() || p.beta.size() != m.cols()) {
    throw ShapeError("layer_norm: params of width " +
                     std::to_string(p.gamma.size()) + " for rows of width " +
                     std::to_string(m.cols()));
  }
  if (!(p.eps > T(0))) throw ConfigError("layer_norm: eps must be positive");
  const std::size_t d = m.cols();
  BasicMatrix<T> out(m.rows(), d);
#pragma omp parallel for schedule(static)
  for (std::int64_t i = 0; i < static_cast<std::int64_t>(m.rows()); ++i) {
    const auto in = m.row(i);
    auto o = out.row(i);
    T mean = T(0);
    for (T v : in) mean += v;
    mean /= static_cast<T>(d);
    T var = T(0);
    for (T v : in) var += (v - mean) * (v - mean);
    var /= static_cast<T>(d);
    const T inv = T(1) / std::sqrt(var + p.eps);
    for (std::size_t j = 0; j < d; ++j) {
      o[j] = p.gamma[j] * ((in[j] - mean) * inv) + p.beta[j];
    }
  }
  return out;
}

template <typename T>
BasicMatrix<T> linear(const BasicMatrix<T>& m, const BasicMatrix<T>& w,
                      const std::vector<T>& b, bool relu) {
  if (b.size() != w.cols()) throw ShapeError("linear: bias width mismatch");
  BasicMatrix<T> out = matmul(m, w);
#pragma omp parallel for schedule(static)
  for (std::int64_t i = 0; i < static_cast<std::int64_t>(out.rows()); ++i) {
    auto o = out.row(i);
    for (std::size_t j = 0; j < o.size(); ++j) {
      o[j] += b[j];
      if (relu && o[j] < T(0)) o[j] = T(0);
    }
  }
  return out;
}

template <typename T>
BasicMatrix<T> mlp_forward(const BasicMatrix<T>& m, const MlpParams<T>& p) {
  if (m.cols() != p.w1.rows() || p.w1.cols() != p.w2.rows() ||
      p.b1.size() != p.w1.cols() || p.b2.size() != p.w2.cols()) {
    throw ShapeError("mlp_forward: shapes do not chain for input width " +
                     std::to_string(m.cols()));
  }
  return linear(linear(m, p.w1, p.b1, true), p.w2, p.b2, false);
}

template <typename T>
void add_inplace(BasicMatrix<T>& a, const BasicMatrix<T>& b) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) {
    throw ShapeError("add: " + shape_str(a.rows(), a.cols()) + " + " +
                     shape_str(b.rows(), b.cols()));
  }
  auto ad = a.data();
  const auto bd = b.data();
  for (std::size_t i = 0; i < ad.size(); ++i) ad[i] += bd[i];
}

template <typename T>
BasicMatrix<T> add(const BasicMatrix<T>& a, const BasicMatrix<T>& b) {
  BasicMatrix<T> out = a;
  add_inplace(out, b);
  return out;
}

#define PVT_INSTANTIATE(T)                                                     \
  template BasicMatrix<T> matmul(const BasicMatrix<T>&, const BasicMatrix<T>&); \
  template BasicMatrix<T> matmul_transposed(const BasicMatrix<T>&,              \
                                            const BasicMatrix<T>&);             \
  template BasicMatrix<T> softmax_rows(const BasicMatrix<T>&);                  \
  template BasicMatrix<T> layer_norm(const BasicMatrix<T>&,                     \
                                     const LayerNormParams<T>&);                \
  template BasicMatrix<T> linear(const BasicMatrix<T>&, const BasicMatrix<T>&,  \
                                 const std::vector<T>&, bool);                  \
  template BasicMatrix<T> mlp_forward(const BasicMatrix<T>&,                    \
                                      const MlpParams<T>&);                     \
  template BasicMatrix<T> add(const BasicMatrix<T>&, const BasicMatrix<T>&);    \
  template void add_inplace(BasicMatrix<T>&, const BasicMatrix<T>&);

PVT_INSTANTIATE(float)
PVT_INSTANTIATE(double)

}  // namespace pvt
