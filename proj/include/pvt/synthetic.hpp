#pragma once

#include <cstdint>

#include "pvt/point_branch.hpp"
#include "pvt/sparse_window_attention.hpp"

namespace pvt {

// One point in each of round(occupancy * W^3) distinct voxels of every
// window (at least one), jittered inside its cell. Gives exactly the same
// non-empty count in every window.
PointCloud synthetic_occupancy_cloud(int resolution, int window, double occupancy,
                                     std::uint64_t seed);

// Every voxel occupied independently with probability `occupancy` (at least
// one voxel overall), one point per voxel, features uniform(-1, 1).
template <typename T>
SparseVoxelGrid<T> random_sparse_grid(int resolution, std::size_t dim,
                                      double occupancy, std::uint64_t seed);

template <typename T>
BasicMatrix<T> random_matrix(std::size_t rows, std::size_t cols, double bound,
                             std::uint64_t seed);

// Projections uniform(-bound, bound), unit norms, MLPs with hidden 2 * dim.
template <typename T>
SwaParams<T> random_swa_params(std::size_t dim, int heads, std::uint64_t seed,
                               double bound = 1.0);

// Random projections/MLP/memories; RPR tables random when `random_tables`,
// zero otherwise.
template <typename T>
PointBranchParams<T> random_point_params(std::size_t dim, int bins, std::size_t slots,
                                         PointAttentionMode mode, std::uint64_t seed,
                                         bool random_tables = true);

}  // namespace pvt
