#pragma once

#include <array>
#include <compare>
#include <cstdint>
#include <optional>
#include <unordered_map>
#include <vector>

#include "pvt/matrix.hpp"
#include "pvt/point_cloud.hpp"

namespace pvt {

struct VoxelCoord {
  int i = 0;
  int j = 0;
  int k = 0;
  auto operator<=>(const VoxelCoord&) const = default;
};

// Collision-free hash of a coordinate in an R^3 grid: i*R^2 + j*R + k.
inline std::int64_t linear_key(const VoxelCoord& c, int resolution) {
  const std::int64_t r = resolution;
  return (static_cast<std::int64_t>(c.i) * r + c.j) * r + c.k;
}

// u_m = clamp(floor((p_m + 1) / 2 * R), 0, R - 1). Throws NumericError on
// non-finite coordinates.
VoxelCoord point_to_voxel_coord(const Point3& p, int resolution);

// Center of voxel index `i` along one axis: (i + 0.5) / R * 2 - 1.
inline double voxel_center(int i, int resolution) {
  return (i + 0.5) / resolution * 2.0 - 1.0;
}

// Only non-empty voxels are stored. The non-empty array is kept sorted by
// linear key, so its order is a function of the occupied coordinate set.
template <typename T>
struct SparseVoxelGrid {
  int resolution = 0;
  std::vector<VoxelCoord> coords;          // non-empty voxels, ascending key
  BasicMatrix<T> features;                 // |coords| x D
  std::vector<std::uint32_t> point_count;  // >= 1 per stored voxel
  std::vector<std::size_t> point_to_voxel; // point index -> non-empty index

  std::size_t size() const { return coords.size(); }
  std::size_t feature_dim() const { return features.cols(); }

  std::optional<std::size_t> find(const VoxelCoord& c) const;
  // Rebuilds the key -> index table; called by every constructor path.
  void reindex();

  // Same sparsity pattern and bookkeeping, different features.
  SparseVoxelGrid with_features(BasicMatrix<T> f) const;

  bool operator==(const SparseVoxelGrid& o) const {
    return resolution == o.resolution && coords == o.coords &&
           features == o.features && point_count == o.point_count &&
           point_to_voxel == o.point_to_voxel;
  }

 private:
  std::unordered_map<std::int64_t, std::size_t> index_;
};

// Average pooling of point features into the non-empty voxels. Means
// accumulate in canonical point order, so the grid is identical under input
// permutation.
template <typename T>
SparseVoxelGrid<T> voxelize(const PointCloud& pc, const BasicMatrix<T>& features,
                            int resolution);

enum class DevoxelizeMode { Trilinear, Nearest };

// Trilinear interpolation from the 8 surrounding voxel centers. Absent or
// out-of-bounds neighbors contribute zero; weights are fixed by geometry and
// never renormalized. Nearest mode returns each point's own voxel feature.
template <typename T>
BasicMatrix<T> devoxelize(const SparseVoxelGrid<T>& grid, const PointCloud& pc,
                          DevoxelizeMode mode = DevoxelizeMode::Trilinear);

// Weight each of the 8 neighbor corners receives for point p (for tests and
// diagnostics); out-of-bounds corners are reported with in_bounds = false.
struct TrilinearCorner {
  VoxelCoord coord;
  double weight = 0;
  bool in_bounds = false;
};
std::array<TrilinearCorner, 8> trilinear_corners(const Point3& p, int resolution);

struct OccupancyStats {
  int resolution = 0;
  int window = 0;
  double r_global = 0;                 // |non-empty| / R^3
  std::vector<double> r_per_window;    // raster order over (R/W)^3 windows
  std::vector<std::uint32_t> count_per_window;
  std::size_t nonempty = 0;
};

// Throws ConfigError if W does not divide R.
template <typename T>
OccupancyStats occupancy_stats(const SparseVoxelGrid<T>& grid, int window);

}  // namespace pvt
