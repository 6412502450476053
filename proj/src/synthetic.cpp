#include "pvt/synthetic.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "pvt/errors.hpp"
#include "pvt/rng.hpp"

namespace pvt {

PointCloud synthetic_occupancy_cloud(int resolution, int window, double occupancy,
                                     std::uint64_t seed) {
  WindowConfig{window, {0, 0, 0}, false}.validate(resolution);
  const int cells = window * window * window;
  const int k = std::clamp(static_cast<int>(std::lround(occupancy * cells)), 1, cells);
  const int per_axis = resolution / window;
  const double width = 2.0 / resolution;
  Rng rng(seed);
  std::vector<int> slots(static_cast<std::size_t>(cells));
  PointCloud pc;
  pc.points.reserve(static_cast<std::size_t>(per_axis) * per_axis * per_axis * k);
  for (int wi = 0; wi < per_axis; ++wi) {
    for (int wj = 0; wj < per_axis; ++wj) {
      for (int wk = 0; wk < per_axis; ++wk) {
        std::iota(slots.begin(), slots.end(), 0);
        rng.shuffle(slots);
        for (int s = 0; s < k; ++s) {
          const int li = slots[s] / (window * window);
          const int lj = (slots[s] / window) % window;
          const int lk = slots[s] % window;
          const int idx[3] = {wi * window + li, wj * window + lj, wk * window + lk};
          Point3 p{};
          for (int m = 0; m < 3; ++m) {
            p[m] = voxel_center(idx[m], resolution) + rng.uniform(-0.25, 0.25) * width;
          }
          pc.points.push_back(p);
        }
      }
    }
  }
  return pc;
}

template <typename T>
BasicMatrix<T> random_matrix(std::size_t rows, std::size_t cols, double bound,
                             std::uint64_t seed) {
  Rng rng(seed);
  BasicMatrix<T> m(rows, cols);
  for (auto& x : m.data()) x = static_cast<T>(rng.uniform(-bound, bound));
  return m;
}

template <typename T>
SparseVoxelGrid<T> random_sparse_grid(int resolution, std::size_t dim,
                                      double occupancy, std::uint64_t seed) {
  Rng rng(seed);
  SparseVoxelGrid<T> g;
  g.resolution = resolution;
  for (int i = 0; i < resolution; ++i)
    for (int j = 0; j < resolution; ++j)
      for (int k = 0; k < resolution; ++k)
        if (rng.unit() < occupancy) g.coords.push_back({i, j, k});
  if (g.coords.empty()) {
    const auto pick = [&] { return static_cast<int>(rng.below(resolution)); };
    g.coords.push_back({pick(), pick(), pick()});
  }
  const std::size_t n = g.coords.size();
  g.features = random_matrix<T>(n, dim, 1.0, rng.next());
  g.point_count.assign(n, 1);
  g.point_to_voxel.resize(n);
  std::iota(g.point_to_voxel.begin(), g.point_to_voxel.end(), std::size_t{0});
  g.reindex();
  return g;
}

template <typename T>
static MlpParams<T> random_mlp(std::size_t dim, Rng& rng) {
  const double b1 = 1.0 / std::sqrt(static_cast<double>(dim));
  const double b2 = 1.0 / std::sqrt(2.0 * dim);
  MlpParams<T> m;
  m.w1 = random_matrix<T>(dim, 2 * dim, b1, rng.next());
  m.w2 = random_matrix<T>(2 * dim, dim, b2, rng.next());
  m.b1.resize(2 * dim);
  m.b2.resize(dim);
  for (auto& x : m.b1) x = static_cast<T>(rng.uniform(-0.1, 0.1));
  for (auto& x : m.b2) x = static_cast<T>(rng.uniform(-0.1, 0.1));
  return m;
}

template <typename T>
SwaParams<T> random_swa_params(std::size_t dim, int heads, std::uint64_t seed,
                               double bound) {
  Rng rng(seed);
  SwaParams<T> p;
  p.wq = random_matrix<T>(dim, dim, bound, rng.next());
  p.wk = random_matrix<T>(dim, dim, bound, rng.next());
  p.wv = random_matrix<T>(dim, dim, bound, rng.next());
  p.heads = heads;
  p.norm1 = p.norm2 = p.norm3 = p.norm4 = LayerNormParams<T>::unit(dim);
  p.mlp1 = random_mlp<T>(dim, rng);
  p.mlp2 = random_mlp<T>(dim, rng);
  return p;
}

template <typename T>
PointBranchParams<T> random_point_params(std::size_t dim, int bins, std::size_t slots,
                                         PointAttentionMode mode, std::uint64_t seed,
                                         bool random_tables) {
  Rng rng(seed);
  const double bound = 1.0 / std::sqrt(static_cast<double>(dim));
  PointBranchParams<T> p;
  p.wq = random_matrix<T>(dim, dim, 1.0, rng.next());
  p.wk = random_matrix<T>(dim, dim, 1.0, rng.next());
  p.wv = random_matrix<T>(dim, dim, 1.0, rng.next());
  p.mlp = random_mlp<T>(dim, rng);
  p.rpr = RprTables<T>::zeros(bins, 1.0);
  if (random_tables) {
    for (auto& t : p.rpr.table) {
      for (auto& x : t) x = static_cast<T>(rng.uniform(-1, 1));
    }
  }
  p.ea.m_k = random_matrix<T>(slots, dim, bound, rng.next());
  p.ea.m_v = random_matrix<T>(slots, dim, bound, rng.next());
  p.mode = mode;
  return p;
}

#define PVT_INSTANTIATE(T)                                                          \
  template BasicMatrix<T> random_matrix(std::size_t, std::size_t, double,           \
                                        std::uint64_t);                             \
  template SparseVoxelGrid<T> random_sparse_grid(int, std::size_t, double,          \
                                                 std::uint64_t);                    \
  template SwaParams<T> random_swa_params(std::size_t, int, std::uint64_t, double); \
  template PointBranchParams<T> random_point_params(std::size_t, int, std::size_t,  \
                                                    PointAttentionMode, std::uint64_t, \
                                                    bool);

PVT_INSTANTIATE(float)
PVT_INSTANTIATE(double)

}  // namespace pvt
