#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "pvt/numerics.hpp"
#include "pvt/point_cloud.hpp"

namespace pvt {

// One learnable scalar per quantization bin and axis. Looked-up values only
// depend on the bin, so a per-axis vector of length L carries the whole table.
template <typename T>
struct RprTables {
  std::array<std::vector<T>, 3> table;  // t_x, t_y, t_z, each of length L
  double s_max = 1.0;

  static RprTables zeros(int bins, double s_max = 1.0) {
    RprTables t;
    for (auto& v : t.table) v.assign(static_cast<std::size_t>(bins), T(0));
    t.s_max = s_max;
    return t;
  }
  int bins() const { return static_cast<int>(table[0].size()); }
  double s_quad() const { return 2.0 * s_max / bins(); }
  void validate() const;
};

template <typename T>
struct EaMemories {
  BasicMatrix<T> m_k;  // S x D
  BasicMatrix<T> m_v;  // S x D
  std::size_t slots() const { return m_k.rows(); }
};

enum class PointAttentionMode { Relative, External };

template <typename T>
struct PointBranchParams {
  BasicMatrix<T> wq, wk, wv;  // D x D
  MlpParams<T> mlp;
  RprTables<T> rpr;
  EaMemories<T> ea;
  PointAttentionMode mode = PointAttentionMode::Relative;
  // Relative attention refuses clouds larger than this (N x N memory).
  std::size_t ra_cap = 4096;
};

// softmax(Q K^T * scale + bias) V, one OpenMP work item per query row. Sums
// over keys follow `key_order` (defaults to 0..N-1). `bias` is N x N or null.
template <typename T>
BasicMatrix<T> attention_rows(const BasicMatrix<T>& q, const BasicMatrix<T>& k,
                              const BasicMatrix<T>& v, T scale,
                              const BasicMatrix<T>* bias,
                              std::span<const std::size_t> key_order = {});

// softmax(Q K^T / sqrt(D)) V with Q = f wq, K = f wk, V = f wv. Key sums run
// in lexicographic feature-row order.
template <typename T>
BasicMatrix<T> self_attention(const BasicMatrix<T>& f, const PointBranchParams<T>& p);

// Per-axis coordinate differences p_i - p_j.
std::array<Matrix, 3> relative_deltas(const PointCloud& pc);

// clamp(floor((delta + s_max) / s_quad), 0, L - 1)
template <typename T>
int quantize_index(double delta, const RprTables<T>& rpr);

template <typename T>
BasicMatrix<T> relative_bias(const PointCloud& pc, const RprTables<T>& rpr);

// softmax(Q K^T / sqrt(D) + B) V. Throws CapacityError when N > p.ra_cap.
template <typename T>
BasicMatrix<T> relative_attention(const BasicMatrix<T>& f, const PointCloud& pc,
                                  const PointBranchParams<T>& p);

template <typename T>
struct ExternalAttentionMaps {
  BasicMatrix<T> column_softmax;  // N x S, columns sum to 1
  BasicMatrix<T> attention;       // N x S, rows sum to 1
  BasicMatrix<T> output;          // N x D
};

// A = f m_k^T, softmax over the point axis, then per-row L1 normalization,
// output = A m_v. `key_order` fixes the summation order over points.
template <typename T>
ExternalAttentionMaps<T> external_attention_maps(
    const BasicMatrix<T>& f, const EaMemories<T>& ea,
    std::span<const std::size_t> key_order = {});

template <typename T>
BasicMatrix<T> external_attention(const BasicMatrix<T>& f, const EaMemories<T>& ea,
                                  std::span<const std::size_t> key_order = {});

// Counted multiply/add/exp/divide operations of external_attention.
std::uint64_t external_attention_ops(std::uint64_t n, std::uint64_t d,
                                     std::uint64_t slots);

// MLP(attention(f)) + f, attention chosen by p.mode.
template <typename T>
BasicMatrix<T> point_branch_forward(const BasicMatrix<T>& f, const PointCloud& pc,
                                    const PointBranchParams<T>& p);

}  // namespace pvt
