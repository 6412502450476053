#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <unordered_map>
#include <vector>

#include "pvt/numerics.hpp"
#include "pvt/voxel_grid.hpp"

namespace pvt {

struct WindowConfig {
  int window = 4;                  // W, window side in voxels
  std::array<int, 3> shift{0, 0, 0};
  // Swin-style masking after the cyclic shift: voxels that wrapped around the
  // grid edge only attend to other wrapped voxels in the same window.
  bool mask_wrapped = false;

  // Throws ConfigError unless 1 <= W <= R, W | R and 0 <= shift < W.
  void validate(int resolution) const;
};

// Hash table and per-window member lists over the non-empty voxel array.
struct RuleBook {
  struct Window {
    std::int64_t id = 0;               // raster index of the window
    std::vector<std::size_t> members;  // non-empty indices, ascending key
  };

  int resolution = 0;
  int window = 0;
  std::vector<std::int64_t> window_of;   // non-empty index -> window id
  std::vector<std::int64_t> hashed_key;  // non-empty index -> linear key
  std::vector<Window> windows;           // non-empty windows, ascending id
  // Per-voxel wrap-region label (bit m set when axis m wrapped); all zeros
  // unless the config asked for masking.
  std::vector<std::uint8_t> region;

  // Hash table from linear key to non-empty index.
  std::optional<std::size_t> lookup(std::int64_t key) const;
  const Window* find_window(std::int64_t id) const;

  std::unordered_map<std::int64_t, std::size_t> table;
};

template <typename T>
struct SwaParams {
  BasicMatrix<T> wq, wk, wv;  // D x D
  int heads = 1;
  LayerNormParams<T> norm1, norm2, norm3, norm4;
  MlpParams<T> mlp1, mlp2;

  std::size_t dim() const { return wq.rows(); }
  // Throws ConfigError when shapes are inconsistent with `dim`.
  void validate(std::size_t dim) const;
};

// Translates every voxel by `shift` modulo R; features travel with their
// voxels and point_to_voxel is remapped.
template <typename T>
SparseVoxelGrid<T> cyclic_shift(const SparseVoxelGrid<T>& grid,
                                const std::array<int, 3>& shift);

template <typename T>
SparseVoxelGrid<T> reverse_cyclic_shift(const SparseVoxelGrid<T>& grid,
                                        const std::array<int, 3>& shift);

template <typename T>
RuleBook build_rule_book(const SparseVoxelGrid<T>& grid, const WindowConfig& cfg);

// Multi-head scaled dot-product attention restricted to each window's
// non-empty voxels. One OpenMP work item per window.
template <typename T>
SparseVoxelGrid<T> swa_forward(const SparseVoxelGrid<T>& grid, const RuleBook& rb,
                               const SwaParams<T>& p);

// Reference semantics for swa_forward: densifies the grid, attends over every
// window cell with -inf logits on empty cells, reads back non-empty cells.
// Throws CapacityError if the dense R^3 x D buffer would exceed
// `max_dense_elements`.
template <typename T>
SparseVoxelGrid<T> dense_window_attention_oracle(
    const SparseVoxelGrid<T>& grid, const WindowConfig& cfg, const SwaParams<T>& p,
    std::size_t max_dense_elements = std::size_t{1} << 26);

// Per-stage wall time of the voxel branch, seconds.
struct VoxelBranchTimings {
  double voxelize = 0;
  double shift = 0;
  double rulebook = 0;
  double attention = 0;  // SWA + norms + MLPs
  double devoxelize = 0;
};

struct VoxelBranchOptions {
  int resolution = 32;
  WindowConfig window;  // window.shift is used for the shifted layer
  DevoxelizeMode devoxelize = DevoxelizeMode::Trilinear;
};

// voxelize -> shift -> [SWA(LN) + x] -> [MLP(LN) + x] -> reverse shift ->
// [SWA(LN) + x] -> [MLP(LN) + x] -> devoxelize.
template <typename T>
BasicMatrix<T> voxel_branch_forward(const PointCloud& pc, const BasicMatrix<T>& f,
                                    const VoxelBranchOptions& opt,
                                    const SwaParams<T>& p,
                                    VoxelBranchTimings* timings = nullptr);

struct SwaCost {
  std::uint64_t projection = 0;    // 4 * |non-empty| * D^2
  std::uint64_t attention = 0;     // sum over windows of 2 * n_w^2 * D
  std::uint64_t sparse_total = 0;
  std::uint64_t dense_window = 0;  // 4 R^3 D^2 + 2 W^3 R^3 D
  std::uint64_t global = 0;        // 4 R^3 D^2 + 2 (R^3)^2 D
};

// Analytic operation count from per-window non-empty counts.
SwaCost swa_cost(int resolution, int window, std::uint64_t dim,
                 const std::vector<std::uint32_t>& count_per_window);
// Same, from the occupancy fractions (n_w = round(r_w * W^3)).
SwaCost swa_cost(int resolution, int window, std::uint64_t dim,
                 const std::vector<double>& r_per_window);

std::uint64_t global_sa_count(std::uint64_t resolution, std::uint64_t dim);
std::uint64_t window_sa_count(std::uint64_t resolution, std::uint64_t window,
                              std::uint64_t dim);

}  // namespace pvt
