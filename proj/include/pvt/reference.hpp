#pragma once

// Single-threaded reference versions of the OpenMP kernels. They follow the
// same per-element arithmetic order, so results must match bit for bit; the
// parallel-vs-serial tests and the benchmark compare against these.

#include <span>

#include "pvt/matrix.hpp"
#include "pvt/point_branch.hpp"
#include "pvt/sparse_window_attention.hpp"

namespace pvt::serial {

template <typename T>
BasicMatrix<T> matmul(const BasicMatrix<T>& a, const BasicMatrix<T>& b);

template <typename T>
BasicMatrix<T> attention_rows(const BasicMatrix<T>& q, const BasicMatrix<T>& k,
                              const BasicMatrix<T>& v, T scale,
                              const BasicMatrix<T>* bias,
                              std::span<const std::size_t> key_order);

template <typename T>
SparseVoxelGrid<T> swa_forward(const SparseVoxelGrid<T>& grid, const RuleBook& rb,
                               const SwaParams<T>& p);

template <typename T>
BasicMatrix<T> external_attention(const BasicMatrix<T>& f, const EaMemories<T>& ea,
                                  std::span<const std::size_t> key_order);

}  // namespace pvt::serial
