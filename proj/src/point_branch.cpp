#include "pvt/point_branch.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <string>

#include "pvt/errors.hpp"

namespace pvt {

namespace {

std::vector<std::size_t> identity_order(std::size_t n) {
  std::vector<std::size_t> o(n);
  std::iota(o.begin(), o.end(), std::size_t{0});
  return o;
}

template <typename T>
void check_square(const BasicMatrix<T>& w, std::size_t d, const char* name) {
  if (w.rows() != d || w.cols() != d) {
    throw ShapeError(std::string(name) + " is " + std::to_string(w.rows()) + "x" +
                     std::to_string(w.cols()) + ", expected " + std::to_string(d) +
                     "x" + std::to_string(d));
  }
}

template <typename T>
void check_projections(const BasicMatrix<T>& f, const PointBranchParams<T>& p) {
  check_square(p.wq, f.cols(), "wq");
  check_square(p.wk, f.cols(), "wk");
  check_square(p.wv, f.cols(), "wv");
}

}  // namespace

template <typename T>
void RprTables<T>::validate() const {
  if (table[0].empty()) throw ConfigError("RPR table needs at least one bin");
  if (table[1].size() != table[0].size() || table[2].size() != table[0].size()) {
    throw ShapeError("RPR tables must share one bin count");
  }
  if (!(s_max > 0)) throw ConfigError("RPR s_max must be positive");
}

template <typename T>
BasicMatrix<T> attention_rows(const BasicMatrix<T>& q, const BasicMatrix<T>& k,
                              const BasicMatrix<T>& v, T scale,
                              const BasicMatrix<T>* bias,
                              std::span<const std::size_t> key_order) {
  const std::size_t n = q.rows();
  const std::size_t m = k.rows();
  if (q.cols() != k.cols() || v.rows() != m) {
    throw ShapeError("attention_rows: Q/K/V shapes do not chain");
  }
  if (bias && (bias->rows() != n || bias->cols() != m)) {
    throw ShapeError("attention_rows: bias must be N x M");
  }
  std::vector<std::size_t> fallback;
  if (key_order.empty()) {
    fallback = identity_order(m);
    key_order = fallback;
  }
  if (key_order.size() != m) throw ShapeError("attention_rows: key order length");
  for (T x : q.data()) {
    if (std::isnan(x)) throw NumericError("attention_rows: NaN query");
  }

  const std::size_t dq = q.cols();
  const std::size_t dv = v.cols();
  BasicMatrix<T> out(n, dv);
#pragma omp parallel
  {
    std::vector<T> w(m);
#pragma omp for schedule(static)
    for (std::int64_t i = 0; i < static_cast<std::int64_t>(n); ++i) {
      const T* qi = q.row(i).data();
      T mx = -std::numeric_limits<T>::infinity();
      for (std::size_t j = 0; j < m; ++j) {
        const T* kj = k.row(j).data();
        T s = T(0);
        for (std::size_t c = 0; c < dq; ++c) s += qi[c] * kj[c];
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
      auto o = out.row(i);
      for (std::size_t j : key_order) {
        const T wj = w[j] / sum;
        const T* vj = v.row(j).data();
        for (std::size_t c = 0; c < dv; ++c) o[c] += wj * vj[c];
      }
    }
  }
  return out;
}

template <typename T>
BasicMatrix<T> self_attention(const BasicMatrix<T>& f, const PointBranchParams<T>& p) {
  check_projections(f, p);
  const auto order = canonical_row_order(f);
  const T scale = T(1) / std::sqrt(static_cast<T>(f.cols()));
  return attention_rows(matmul(f, p.wq), matmul(f, p.wk), matmul(f, p.wv), scale,
                        static_cast<const BasicMatrix<T>*>(nullptr), order);
}

std::array<Matrix, 3> relative_deltas(const PointCloud& pc) {
  const std::size_t n = pc.size();
  std::array<Matrix, 3> b{Matrix(n, n), Matrix(n, n), Matrix(n, n)};
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      for (int m = 0; m < 3; ++m) b[m](i, j) = pc.points[i][m] - pc.points[j][m];
    }
  }
  return b;
}

template <typename T>
int quantize_index(double delta, const RprTables<T>& rpr) {
  if (!std::isfinite(delta)) throw NumericError("quantize_index: non-finite delta");
  const int bins = rpr.bins();
  const double raw = std::floor((delta + rpr.s_max) / rpr.s_quad());
  return static_cast<int>(std::clamp(raw, 0.0, static_cast<double>(bins - 1)));
}

template <typename T>
BasicMatrix<T> relative_bias(const PointCloud& pc, const RprTables<T>& rpr) {
  rpr.validate();
  const std::size_t n = pc.size();
  BasicMatrix<T> b(n, n);
#pragma omp parallel for schedule(static)
  for (std::int64_t i = 0; i < static_cast<std::int64_t>(n); ++i) {
    const auto& pi = pc.points[i];
    for (std::size_t j = 0; j < n; ++j) {
      const auto& pj = pc.points[j];
      T s = T(0);
      for (int m = 0; m < 3; ++m) s += rpr.table[m][quantize_index(pi[m] - pj[m], rpr)];
      b(i, j) = s;
    }
  }
  return b;
}

template <typename T>
BasicMatrix<T> relative_attention(const BasicMatrix<T>& f, const PointCloud& pc,
                                  const PointBranchParams<T>& p) {
  const std::size_t n = f.rows();
  if (pc.size() != n) throw ShapeError("relative_attention: cloud/feature row mismatch");
  if (n > p.ra_cap) {
    throw CapacityError("relative attention over " + std::to_string(n) +
                        " points exceeds the cap of " + std::to_string(p.ra_cap) +
                        "; use external attention mode");
  }
  check_projections(f, p);
  const BasicMatrix<T> bias = relative_bias(pc, p.rpr);
  const auto order = canonical_order(pc.points, &f);
  const T scale = T(1) / std::sqrt(static_cast<T>(f.cols()));
  return attention_rows(matmul(f, p.wq), matmul(f, p.wk), matmul(f, p.wv), scale,
                        &bias, order);
}

template <typename T>
ExternalAttentionMaps<T> external_attention_maps(const BasicMatrix<T>& f,
                                                 const EaMemories<T>& ea,
                                                 std::span<const std::size_t> key_order) {
  if (ea.m_k.cols() != f.cols() || ea.m_v.rows() != ea.m_k.rows()) {
    throw ShapeError("external_attention: memories do not match feature width " +
                     std::to_string(f.cols()));
  }
  if (ea.slots() == 0) throw ConfigError("external attention needs S >= 1");
  const std::size_t n = f.rows();
  const std::size_t s = ea.slots();
  std::vector<std::size_t> fallback;
  if (key_order.empty()) {
    fallback = identity_order(n);
    key_order = fallback;
  }
  if (key_order.size() != n) throw ShapeError("external_attention: key order length");

  ExternalAttentionMaps<T> maps;
  maps.column_softmax = matmul_transposed(f, ea.m_k);
  for (T x : maps.column_softmax.data()) {
    if (std::isnan(x)) throw NumericError("external_attention: NaN logits");
  }
  auto& a = maps.column_softmax;
#pragma omp parallel for schedule(static)
  for (std::int64_t c = 0; c < static_cast<std::int64_t>(s); ++c) {
    T mx = -std::numeric_limits<T>::infinity();
    for (std::size_t i = 0; i < n; ++i) mx = std::max(mx, a(i, c));
    T sum = T(0);
    for (std::size_t i : key_order) {
      a(i, c) = std::exp(a(i, c) - mx);
      sum += a(i, c);
    }
    for (std::size_t i = 0; i < n; ++i) a(i, c) /= sum;
  }
  maps.attention = BasicMatrix<T>(n, s);
#pragma omp parallel for schedule(static)
  for (std::int64_t i = 0; i < static_cast<std::int64_t>(n); ++i) {
    const auto in = a.row(i);
    auto o = maps.attention.row(i);
    T l1 = T(0);
    for (T x : in) l1 += std::abs(x);
    for (std::size_t c = 0; c < s; ++c) o[c] = in[c] / l1;
  }
  maps.output = matmul(maps.attention, ea.m_v);
  return maps;
}

template <typename T>
BasicMatrix<T> external_attention(const BasicMatrix<T>& f, const EaMemories<T>& ea,
                                  std::span<const std::size_t> key_order) {
  return external_attention_maps(f, ea, key_order).output;
}

std::uint64_t external_attention_ops(std::uint64_t n, std::uint64_t d,
                                     std::uint64_t slots) {
  const std::uint64_t logits = 2 * n * slots * d;   // f m_k^T
  const std::uint64_t column_softmax = 4 * n * slots;  // max, exp, sum, divide
  const std::uint64_t row_l1 = 2 * n * slots;          // sum, divide
  const std::uint64_t readout = 2 * n * slots * d;  // A m_v
  return logits + column_softmax + row_l1 + readout;
}

template <typename T>
BasicMatrix<T> point_branch_forward(const BasicMatrix<T>& f, const PointCloud& pc,
                                    const PointBranchParams<T>& p) {
  BasicMatrix<T> attn;
  if (p.mode == PointAttentionMode::Relative) {
    attn = relative_attention(f, pc, p);
  } else {
    attn = external_attention(f, p.ea, canonical_row_order(f));
  }
  BasicMatrix<T> out = mlp_forward(attn, p.mlp);
  add_inplace(out, f);
  return out;
}

template struct RprTables<float>;
template struct RprTables<double>;

#define PVT_INSTANTIATE(T)                                                          \
  template BasicMatrix<T> attention_rows(const BasicMatrix<T>&, const BasicMatrix<T>&, \
                                         const BasicMatrix<T>&, T,                  \
                                         const BasicMatrix<T>*,                     \
                                         std::span<const std::size_t>);             \
  template BasicMatrix<T> self_attention(const BasicMatrix<T>&,                     \
                                         const PointBranchParams<T>&);              \
  template int quantize_index(double, const RprTables<T>&);                         \
  template BasicMatrix<T> relative_bias(const PointCloud&, const RprTables<T>&);    \
  template BasicMatrix<T> relative_attention(const BasicMatrix<T>&, const PointCloud&, \
                                             const PointBranchParams<T>&);          \
  template ExternalAttentionMaps<T> external_attention_maps(                       \
      const BasicMatrix<T>&, const EaMemories<T>&, std::span<const std::size_t>);   \
  template BasicMatrix<T> external_attention(const BasicMatrix<T>&,                 \
                                             const EaMemories<T>&,                  \
                                             std::span<const std::size_t>);         \
  template BasicMatrix<T> point_branch_forward(const BasicMatrix<T>&,               \
                                               const PointCloud&,                   \
                                               const PointBranchParams<T>&);

PVT_INSTANTIATE(float)
PVT_INSTANTIATE(double)

}  // namespace pvt
