#include "pvt/reference.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "pvt/errors.hpp"

namespace pvt::serial {

namespace {

std::vector<std::size_t> identity_order(std::size_t n) {
  std::vector<std::size_t> o(n);
  std::iota(o.begin(), o.end(), std::size_t{0});
  return o;
}

}  // namespace

template <typename T>
BasicMatrix<T> matmul(const BasicMatrix<T>& a, const BasicMatrix<T>& b) {
  if (a.cols() != b.rows()) throw ShapeError("serial::matmul: inner dimension mismatch");
  BasicMatrix<T> c(a.rows(), b.cols());
  for (std::size_t i = 0; i < a.rows(); ++i) {
    for (std::size_t j = 0; j < b.cols(); ++j) {
      T s = T(0);
      for (std::size_t p = 0; p < a.cols(); ++p) s += a(i, p) * b(p, j);
      c(i, j) = s;
    }
  }
  return c;
}

template <typename T>
BasicMatrix<T> attention_rows(const BasicMatrix<T>& q, const BasicMatrix<T>& k,
                              const BasicMatrix<T>& v, T scale,
                              const BasicMatrix<T>* bias,
                              std::span<const std::size_t> key_order) {
  const std::size_t n = q.rows(), m = k.rows();
  const std::vector<std::size_t> fallback = identity_order(key_order.empty() ? m : 0);
  if (key_order.empty()) key_order = fallback;
  if (q.cols() != k.cols() || v.rows() != m || key_order.size() != m) {
    throw ShapeError("serial::attention_rows: shape mismatch");
  }
  BasicMatrix<T> out(n, v.cols());
  std::vector<T> w(m);
  for (std::size_t i = 0; i < n; ++i) {
    T mx = -std::numeric_limits<T>::infinity();
    for (std::size_t j = 0; j < m; ++j) {
      T s = T(0);
      for (std::size_t c = 0; c < q.cols(); ++c) s += q(i, c) * k(j, c);
      s *= scale;
      if (bias) s += (*bias)(i, j);
      w[j] = s;
      mx = std::max(mx, s);
    }
    T sum = T(0);
    for (std::size_t j : key_order) {
      w[j] = std::exp(w[j] - mx);
      sum += w[j];
    }
    for (std::size_t c = 0; c < v.cols(); ++c) {
      T acc = T(0);
      for (std::size_t j : key_order) acc += w[j] / sum * v(j, c);
      out(i, c) = acc;
    }
  }
  return out;
}

template <typename T>
SparseVoxelGrid<T> swa_forward(const SparseVoxelGrid<T>& grid, const RuleBook& rb,
                               const SwaParams<T>& p) {
  const std::size_t d = grid.feature_dim();
  p.validate(d);
  const BasicMatrix<T> q = serial::matmul(grid.features, p.wq);
  const BasicMatrix<T> k = serial::matmul(grid.features, p.wk);
  const BasicMatrix<T> v = serial::matmul(grid.features, p.wv);
  const std::size_t hd = d / static_cast<std::size_t>(p.heads);
  const T scale = T(1) / std::sqrt(static_cast<T>(hd));
  BasicMatrix<T> out(grid.size(), d);
  std::vector<T> w;
  for (const auto& win : rb.windows) {
    const auto& mem = win.members;
    if (mem.size() == 1) {
      for (std::size_t c = 0; c < d; ++c) out(mem[0], c) = v(mem[0], c);
      continue;
    }
    w.resize(mem.size());
    for (std::size_t qi : mem) {
      for (int h = 0; h < p.heads; ++h) {
        const std::size_t off = static_cast<std::size_t>(h) * hd;
        T mx = -std::numeric_limits<T>::infinity();
        for (std::size_t a = 0; a < mem.size(); ++a) {
          if (!rb.region.empty() && rb.region[mem[a]] != rb.region[qi]) {
            w[a] = -std::numeric_limits<T>::infinity();
            continue;
          }
          T s = T(0);
          for (std::size_t c = 0; c < hd; ++c) s += q(qi, off + c) * k(mem[a], off + c);
          w[a] = s * scale;
          mx = std::max(mx, w[a]);
        }
        T sum = T(0);
        for (auto& x : w) {
          x = std::exp(x - mx);
          sum += x;
        }
        for (auto& x : w) x /= sum;
        for (std::size_t c = 0; c < hd; ++c) {
          T acc = T(0);
          for (std::size_t a = 0; a < mem.size(); ++a) acc += w[a] * v(mem[a], off + c);
          out(qi, off + c) = acc;
        }
      }
    }
  }
  return grid.with_features(std::move(out));
}

template <typename T>
BasicMatrix<T> external_attention(const BasicMatrix<T>& f, const EaMemories<T>& ea,
                                  std::span<const std::size_t> key_order) {
  const std::size_t n = f.rows(), s = ea.slots(), d = f.cols();
  const std::vector<std::size_t> fallback = identity_order(key_order.empty() ? n : 0);
  if (key_order.empty()) key_order = fallback;
  if (ea.m_k.cols() != d || key_order.size() != n) {
    throw ShapeError("serial::external_attention: shape mismatch");
  }
  BasicMatrix<T> a(n, s);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t c = 0; c < s; ++c) {
      T acc = T(0);
      for (std::size_t j = 0; j < d; ++j) acc += f(i, j) * ea.m_k(c, j);
      a(i, c) = acc;
    }
  }
  for (std::size_t c = 0; c < s; ++c) {
    T mx = -std::numeric_limits<T>::infinity();
    for (std::size_t i = 0; i < n; ++i) mx = std::max(mx, a(i, c));
    T sum = T(0);
    for (std::size_t i : key_order) {
      a(i, c) = std::exp(a(i, c) - mx);
      sum += a(i, c);
    }
    for (std::size_t i = 0; i < n; ++i) a(i, c) /= sum;
  }
  for (std::size_t i = 0; i < n; ++i) {
    T l1 = T(0);
    for (std::size_t c = 0; c < s; ++c) l1 += std::abs(a(i, c));
    for (std::size_t c = 0; c < s; ++c) a(i, c) /= l1;
  }
  return serial::matmul(a, ea.m_v);
}

#define PVT_INSTANTIATE(T)                                                          \
  template BasicMatrix<T> matmul(const BasicMatrix<T>&, const BasicMatrix<T>&);     \
  template BasicMatrix<T> attention_rows(const BasicMatrix<T>&, const BasicMatrix<T>&, \
                                         const BasicMatrix<T>&, T,                  \
                                         const BasicMatrix<T>*,                     \
                                         std::span<const std::size_t>);             \
  template SparseVoxelGrid<T> swa_forward(const SparseVoxelGrid<T>&, const RuleBook&, \
                                          const SwaParams<T>&);                     \
  template BasicMatrix<T> external_attention(const BasicMatrix<T>&,                 \
                                             const EaMemories<T>&,                  \
                                             std::span<const std::size_t>);

PVT_INSTANTIATE(float)
PVT_INSTANTIATE(double)

}  // namespace pvt::serial
