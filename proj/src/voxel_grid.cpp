#include "pvt/voxel_grid.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "pvt/errors.hpp"

namespace pvt {

VoxelCoord point_to_voxel_coord(const Point3& p, int resolution) {
  if (resolution < 1) throw ConfigError("resolution must be >= 1");
  std::array<int, 3> u{};
  for (int m = 0; m < 3; ++m) {
    if (!std::isfinite(p[m])) throw NumericError("non-finite point coordinate");
    const double s = std::floor((p[m] + 1.0) / 2.0 * resolution);
    u[m] = static_cast<int>(std::clamp(s, 0.0, static_cast<double>(resolution - 1)));
  }
  return {u[0], u[1], u[2]};
}

template <typename T>
std::optional<std::size_t> SparseVoxelGrid<T>::find(const VoxelCoord& c) const {
  if (c.i < 0 || c.j < 0 || c.k < 0 || c.i >= resolution || c.j >= resolution ||
      c.k >= resolution) {
    return std::nullopt;
  }
  const auto it = index_.find(linear_key(c, resolution));
  if (it == index_.end()) return std::nullopt;
  return it->second;
}

template <typename T>
void SparseVoxelGrid<T>::reindex() {
  index_.clear();
  index_.reserve(coords.size());
  for (std::size_t v = 0; v < coords.size(); ++v) {
    index_.emplace(linear_key(coords[v], resolution), v);
  }
}

template <typename T>
SparseVoxelGrid<T> SparseVoxelGrid<T>::with_features(BasicMatrix<T> f) const {
  if (f.rows() != coords.size()) {
    throw ShapeError("with_features: " + std::to_string(f.rows()) +
                     " rows for " + std::to_string(coords.size()) + " voxels");
  }
  SparseVoxelGrid out = *this;
  out.features = std::move(f);
  return out;
}

template <typename T>
SparseVoxelGrid<T> voxelize(const PointCloud& pc, const BasicMatrix<T>& features,
                            int resolution) {
  const std::size_t n = pc.size();
  if (n == 0) throw EmptyInputError("voxelize: no points");
  if (features.rows() != n) {
    throw ShapeError("voxelize: " + std::to_string(features.rows()) +
                     " feature rows for " + std::to_string(n) + " points");
  }
  std::vector<std::int64_t> key(n);
  std::vector<VoxelCoord> coord(n);
  for (std::size_t p = 0; p < n; ++p) {
    coord[p] = point_to_voxel_coord(pc.points[p], resolution);
    key[p] = linear_key(coord[p], resolution);
  }
  std::vector<std::size_t> order = canonical_order(pc.points, &features);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return key[a] < key[b]; });

  const std::size_t d = features.cols();
  SparseVoxelGrid<T> grid;
  grid.resolution = resolution;
  grid.point_to_voxel.resize(n);
  std::vector<T> acc;
  for (std::size_t s = 0; s < n;) {
    std::size_t e = s;
    const std::size_t v = grid.coords.size();
    // Running mean: a voxel whose points share one value keeps it exactly.
    std::vector<T> mean(d, T(0));
    while (e < n && key[order[e]] == key[order[s]]) {
      const auto row = features.row(order[e]);
      const T k = static_cast<T>(e - s + 1);
      for (std::size_t j = 0; j < d; ++j) mean[j] += (row[j] - mean[j]) / k;
      grid.point_to_voxel[order[e]] = v;
      ++e;
    }
    const auto count = static_cast<std::uint32_t>(e - s);
    acc.insert(acc.end(), mean.begin(), mean.end());
    grid.coords.push_back(coord[order[s]]);
    grid.point_count.push_back(count);
    s = e;
  }
  grid.features = BasicMatrix<T>(grid.coords.size(), d, std::move(acc));
  grid.reindex();
  return grid;
}

std::array<TrilinearCorner, 8> trilinear_corners(const Point3& p, int resolution) {
  std::array<int, 3> base{};
  std::array<double, 3> frac{};
  for (int m = 0; m < 3; ++m) {
    const double u = (p[m] + 1.0) / 2.0 * resolution - 0.5;
    const double f = std::floor(u);
    base[m] = static_cast<int>(f);
    frac[m] = u - f;
  }
  std::array<TrilinearCorner, 8> out{};
  for (int c = 0; c < 8; ++c) {
    const int dx = (c >> 2) & 1, dy = (c >> 1) & 1, dz = c & 1;
    TrilinearCorner& tc = out[c];
    tc.coord = {base[0] + dx, base[1] + dy, base[2] + dz};
    tc.weight = (dx ? frac[0] : 1 - frac[0]) * (dy ? frac[1] : 1 - frac[1]) *
                (dz ? frac[2] : 1 - frac[2]);
    tc.in_bounds = tc.coord.i >= 0 && tc.coord.j >= 0 && tc.coord.k >= 0 &&
                   tc.coord.i < resolution && tc.coord.j < resolution &&
                   tc.coord.k < resolution;
  }
  return out;
}

template <typename T>
BasicMatrix<T> devoxelize(const SparseVoxelGrid<T>& grid, const PointCloud& pc,
                          DevoxelizeMode mode) {
  const std::size_t n = pc.size();
  const std::size_t d = grid.feature_dim();
  BasicMatrix<T> out(n, d);
  if (mode == DevoxelizeMode::Nearest) {
    if (grid.point_to_voxel.size() != n) {
      throw ShapeError("devoxelize: grid was built from a different cloud");
    }
    for (std::size_t p = 0; p < n; ++p) {
      std::ranges::copy(grid.features.row(grid.point_to_voxel[p]),
                        out.row(p).begin());
    }
    return out;
  }
  const int r = grid.resolution;
#pragma omp parallel for schedule(static)
  for (std::int64_t p = 0; p < static_cast<std::int64_t>(n); ++p) {
    std::array<int, 3> base{};
    std::array<T, 3> t{};
    for (int m = 0; m < 3; ++m) {
      const double u = (pc.points[p][m] + 1.0) / 2.0 * r - 0.5;
      const double f = std::floor(u);
      base[m] = static_cast<int>(f);
      t[m] = static_cast<T>(u - f);
    }
    // Corner rows in (dx, dy, dz) bit order; nullptr marks an absent voxel.
    std::array<const T*, 8> corner{};
    for (int c = 0; c < 8; ++c) {
      const auto idx = grid.find({base[0] + ((c >> 2) & 1),
                                  base[1] + ((c >> 1) & 1), base[2] + (c & 1)});
      corner[c] = idx ? grid.features.row(*idx).data() : nullptr;
    }
    auto o = out.row(p);
    // Nested lerps a + t (b - a): a constant field is reproduced exactly.
    const auto val = [&](int c, std::size_t j) {
      return corner[c] ? corner[c][j] : T(0);
    };
    const auto lerp = [](T a, T b, T w) { return a + w * (b - a); };
    for (std::size_t j = 0; j < d; ++j) {
      const T x00 = lerp(val(0, j), val(4, j), t[0]);
      const T x01 = lerp(val(1, j), val(5, j), t[0]);
      const T x10 = lerp(val(2, j), val(6, j), t[0]);
      const T x11 = lerp(val(3, j), val(7, j), t[0]);
      const T y0 = lerp(x00, x10, t[1]);
      const T y1 = lerp(x01, x11, t[1]);
      o[j] = lerp(y0, y1, t[2]);
    }
  }
  return out;
}

template <typename T>
OccupancyStats occupancy_stats(const SparseVoxelGrid<T>& grid, int window) {
  const int r = grid.resolution;
  if (window < 1 || window > r || r % window != 0) {
    throw ConfigError("window size W=" + std::to_string(window) +
                      " does not divide resolution R=" + std::to_string(r));
  }
  const int per_axis = r / window;
  OccupancyStats s;
  s.resolution = r;
  s.window = window;
  s.nonempty = grid.size();
  s.r_global = static_cast<double>(grid.size()) / (double(r) * r * r);
  s.count_per_window.assign(static_cast<std::size_t>(per_axis) * per_axis * per_axis, 0);
  for (const auto& c : grid.coords) {
    const VoxelCoord w{c.i / window, c.j / window, c.k / window};
    ++s.count_per_window[static_cast<std::size_t>(linear_key(w, per_axis))];
  }
  const double cells = double(window) * window * window;
  s.r_per_window.reserve(s.count_per_window.size());
  for (auto c : s.count_per_window) s.r_per_window.push_back(c / cells);
  return s;
}

template struct SparseVoxelGrid<float>;
template struct SparseVoxelGrid<double>;

#define PVT_INSTANTIATE(T)                                                     \
  template SparseVoxelGrid<T> voxelize(const PointCloud&, const BasicMatrix<T>&, \
                                       int);                                   \
  template BasicMatrix<T> devoxelize(const SparseVoxelGrid<T>&,                \
                                     const PointCloud&, DevoxelizeMode);       \
  template OccupancyStats occupancy_stats(const SparseVoxelGrid<T>&, int);

PVT_INSTANTIATE(float)
PVT_INSTANTIATE(double)

}  // namespace pvt
