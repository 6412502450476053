#include "pvt/sparse_window_attention.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>
#include <string>

#include "pvt/errors.hpp"

namespace pvt {

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

std::array<int, 3> checked_shift(const std::array<int, 3>& shift, int r) {
  for (int s : shift) {
    if (s < 0 || s >= r) {
      throw ConfigError("cyclic shift component " + std::to_string(s) +
                        " outside [0, " + std::to_string(r) + ")");
    }
  }
  return shift;
}

// Attention of one window. Writes the output rows of every member.
template <typename T>
void attend_window(const RuleBook::Window& w, const RuleBook& rb,
                   const BasicMatrix<T>& q, const BasicMatrix<T>& k,
                   const BasicMatrix<T>& v, int heads, BasicMatrix<T>& out) {
  const auto& mem = w.members;
  if (mem.size() == 1) {
    std::ranges::copy(v.row(mem[0]), out.row(mem[0]).begin());
    return;
  }
  const std::size_t d = q.cols();
  const std::size_t hd = d / static_cast<std::size_t>(heads);
  const T scale = T(1) / std::sqrt(static_cast<T>(hd));
  const bool masked = !rb.region.empty();
  std::vector<T> weight(mem.size());
  for (std::size_t qi : mem) {
    auto o = out.row(qi);
    for (int h = 0; h < heads; ++h) {
      const std::size_t off = static_cast<std::size_t>(h) * hd;
      const T* qrow = q.row(qi).data() + off;
      T mx = -std::numeric_limits<T>::infinity();
      for (std::size_t a = 0; a < mem.size(); ++a) {
        if (masked && rb.region[mem[a]] != rb.region[qi]) {
          weight[a] = -std::numeric_limits<T>::infinity();
          continue;
        }
        const T* krow = k.row(mem[a]).data() + off;
        T s = T(0);
        for (std::size_t c = 0; c < hd; ++c) s += qrow[c] * krow[c];
        weight[a] = s * scale;
        mx = std::max(mx, weight[a]);
      }
      T sum = T(0);
      for (auto& x : weight) {
        x = std::exp(x - mx);
        sum += x;
      }
      for (auto& x : weight) x /= sum;
      for (std::size_t c = 0; c < hd; ++c) {
        T acc = T(0);
        for (std::size_t a = 0; a < mem.size(); ++a) {
          acc += weight[a] * v(mem[a], off + c);
        }
        o[off + c] = acc;
      }
    }
  }
}

}  // namespace

void WindowConfig::validate(int resolution) const {
  if (window < 1 || window > resolution || resolution % window != 0) {
    throw ConfigError("window size W=" + std::to_string(window) +
                      " does not divide resolution R=" + std::to_string(resolution));
  }
  for (int s : shift) {
    if (s < 0 || s >= window) {
      throw ConfigError("window shift " + std::to_string(s) + " outside [0, W=" +
                        std::to_string(window) + ")");
    }
  }
}

std::optional<std::size_t> RuleBook::lookup(std::int64_t key) const {
  const auto it = table.find(key);
  if (it == table.end()) return std::nullopt;
  return it->second;
}

const RuleBook::Window* RuleBook::find_window(std::int64_t id) const {
  const auto it = std::lower_bound(
      windows.begin(), windows.end(), id,
      [](const Window& w, std::int64_t x) { return w.id < x; });
  return it != windows.end() && it->id == id ? &*it : nullptr;
}

template <typename T>
void SwaParams<T>::validate(std::size_t d) const {
  if (heads < 1 || d % static_cast<std::size_t>(heads) != 0) {
    throw ConfigError("heads=" + std::to_string(heads) +
                      " does not divide feature width D=" + std::to_string(d));
  }
  for (const auto* w : {&wq, &wk, &wv}) {
    if (w->rows() != d || w->cols() != d) {
      throw ConfigError("SWA projection is " + std::to_string(w->rows()) + "x" +
                       std::to_string(w->cols()) + ", expected " +
                       std::to_string(d) + "x" + std::to_string(d));
    }
  }
  for (const auto* n : {&norm1, &norm2, &norm3, &norm4}) {
    if (n->dim() != d) throw ConfigError("SWA layer norm width mismatch");
  }
  for (const auto* m : {&mlp1, &mlp2}) {
    if (m->in_dim() != d || m->out_dim() != d) {
      throw ConfigError("SWA MLP width mismatch");
    }
  }
}

template <typename T>
SparseVoxelGrid<T> cyclic_shift(const SparseVoxelGrid<T>& grid,
                                const std::array<int, 3>& shift) {
  const int r = grid.resolution;
  checked_shift(shift, r);
  const std::size_t n = grid.size();
  std::vector<VoxelCoord> moved(n);
  std::vector<std::pair<std::int64_t, std::size_t>> order(n);
  for (std::size_t v = 0; v < n; ++v) {
    const auto& c = grid.coords[v];
    moved[v] = {(c.i + shift[0]) % r, (c.j + shift[1]) % r, (c.k + shift[2]) % r};
    order[v] = {linear_key(moved[v], r), v};
  }
  std::sort(order.begin(), order.end());

  SparseVoxelGrid<T> out;
  out.resolution = r;
  out.coords.resize(n);
  out.point_count.resize(n);
  out.features = BasicMatrix<T>(n, grid.feature_dim());
  std::vector<std::size_t> new_index(n);
  for (std::size_t dst = 0; dst < n; ++dst) {
    const std::size_t src = order[dst].second;
    new_index[src] = dst;
    out.coords[dst] = moved[src];
    out.point_count[dst] = grid.point_count[src];
    std::ranges::copy(grid.features.row(src), out.features.row(dst).begin());
  }
  out.point_to_voxel.resize(grid.point_to_voxel.size());
  for (std::size_t p = 0; p < grid.point_to_voxel.size(); ++p) {
    out.point_to_voxel[p] = new_index[grid.point_to_voxel[p]];
  }
  out.reindex();
  return out;
}

template <typename T>
SparseVoxelGrid<T> reverse_cyclic_shift(const SparseVoxelGrid<T>& grid,
                                        const std::array<int, 3>& shift) {
  const int r = grid.resolution;
  checked_shift(shift, r);
  return cyclic_shift(grid, {(r - shift[0]) % r, (r - shift[1]) % r,
                             (r - shift[2]) % r});
}

template <typename T>
RuleBook build_rule_book(const SparseVoxelGrid<T>& grid, const WindowConfig& cfg) {
  const int r = grid.resolution;
  cfg.validate(r);
  const int w = cfg.window;
  const int per_axis = r / w;
  const std::size_t n = grid.size();

  RuleBook rb;
  rb.resolution = r;
  rb.window = w;
  rb.window_of.resize(n);
  rb.hashed_key.resize(n);
#pragma omp parallel for schedule(static)
  for (std::int64_t v = 0; v < static_cast<std::int64_t>(n); ++v) {
    const auto& c = grid.coords[v];
    rb.hashed_key[v] = linear_key(c, r);
    rb.window_of[v] = linear_key({c.i / w, c.j / w, c.k / w}, per_axis);
  }
  rb.table.reserve(n);
  for (std::size_t v = 0; v < n; ++v) rb.table.emplace(rb.hashed_key[v], v);

  // Non-empty array is in ascending key order, so a stable sort by window id
  // leaves each member list sorted by key.
  std::vector<std::size_t> by_window(n);
  for (std::size_t v = 0; v < n; ++v) by_window[v] = v;
  std::stable_sort(by_window.begin(), by_window.end(),
                   [&](std::size_t a, std::size_t b) {
                     return rb.window_of[a] < rb.window_of[b];
                   });
  for (std::size_t v : by_window) {
    if (rb.windows.empty() || rb.windows.back().id != rb.window_of[v]) {
      rb.windows.push_back({rb.window_of[v], {}});
    }
    rb.windows.back().members.push_back(v);
  }

  if (cfg.mask_wrapped) {
    rb.region.resize(n);
    for (std::size_t v = 0; v < n; ++v) {
      const auto& c = grid.coords[v];
      rb.region[v] = static_cast<std::uint8_t>((c.i < cfg.shift[0] ? 1 : 0) |
                                               (c.j < cfg.shift[1] ? 2 : 0) |
                                               (c.k < cfg.shift[2] ? 4 : 0));
    }
  }
  return rb;
}

template <typename T>
SparseVoxelGrid<T> swa_forward(const SparseVoxelGrid<T>& grid, const RuleBook& rb,
                               const SwaParams<T>& p) {
  const std::size_t d = grid.feature_dim();
  p.validate(d);
  if (rb.window_of.size() != grid.size()) {
    throw ConfigError("rule book was built for a different grid");
  }
  const BasicMatrix<T> q = matmul(grid.features, p.wq);
  const BasicMatrix<T> k = matmul(grid.features, p.wk);
  const BasicMatrix<T> v = matmul(grid.features, p.wv);
  BasicMatrix<T> out(grid.size(), d);
  const auto nw = static_cast<std::int64_t>(rb.windows.size());
#pragma omp parallel for schedule(dynamic, 4)
  for (std::int64_t w = 0; w < nw; ++w) {
    attend_window(rb.windows[w], rb, q, k, v, p.heads, out);
  }
  return grid.with_features(std::move(out));
}

template <typename T>
SparseVoxelGrid<T> dense_window_attention_oracle(const SparseVoxelGrid<T>& grid,
                                                 const WindowConfig& cfg,
                                                 const SwaParams<T>& p,
                                                 std::size_t max_dense_elements) {
  const int r = grid.resolution;
  cfg.validate(r);
  const std::size_t d = grid.feature_dim();
  p.validate(d);
  const std::size_t cells = static_cast<std::size_t>(r) * r * r;
  if (cells * d > max_dense_elements) {
    throw CapacityError("dense oracle needs " + std::to_string(cells * d) +
                        " elements, cap is " + std::to_string(max_dense_elements));
  }
  const auto cell = [r](int i, int j, int k) {
    return (static_cast<std::size_t>(i) * r + j) * r + k;
  };

  std::vector<T> dense(cells * d, T(0));
  std::vector<char> occupied(cells, 0);
  std::vector<std::uint8_t> region(cells, 0);
  for (std::size_t v = 0; v < grid.size(); ++v) {
    const auto& c = grid.coords[v];
    const std::size_t x = cell(c.i, c.j, c.k);
    occupied[x] = 1;
    if (cfg.mask_wrapped) {
      region[x] = static_cast<std::uint8_t>((c.i < cfg.shift[0] ? 1 : 0) |
                                            (c.j < cfg.shift[1] ? 2 : 0) |
                                            (c.k < cfg.shift[2] ? 4 : 0));
    }
    for (std::size_t j = 0; j < d; ++j) dense[x * d + j] = grid.features(v, j);
  }

  // Projections of every cell, empty ones included.
  std::vector<T> q(cells * d), k(cells * d), val(cells * d);
  for (std::size_t x = 0; x < cells; ++x) {
    for (std::size_t j = 0; j < d; ++j) {
      T sq = 0, sk = 0, sv = 0;
      for (std::size_t c = 0; c < d; ++c) {
        const T f = dense[x * d + c];
        sq += f * p.wq(c, j);
        sk += f * p.wk(c, j);
        sv += f * p.wv(c, j);
      }
      q[x * d + j] = sq;
      k[x * d + j] = sk;
      val[x * d + j] = sv;
    }
  }

  const int w = cfg.window;
  const std::size_t hd = d / static_cast<std::size_t>(p.heads);
  const T scale = T(1) / std::sqrt(static_cast<T>(hd));
  const T neg_inf = -std::numeric_limits<T>::infinity();
  std::vector<T> result(cells * d, T(0));
  std::vector<std::size_t> window_cells;
  std::vector<T> logit;
  for (int wi = 0; wi < r; wi += w) {
    for (int wj = 0; wj < r; wj += w) {
      for (int wk = 0; wk < r; wk += w) {
        window_cells.clear();
        for (int i = wi; i < wi + w; ++i)
          for (int j = wj; j < wj + w; ++j)
            for (int kk = wk; kk < wk + w; ++kk) window_cells.push_back(cell(i, j, kk));
        logit.assign(window_cells.size(), T(0));
        for (std::size_t qx : window_cells) {
          if (!occupied[qx]) continue;
          for (int h = 0; h < p.heads; ++h) {
            const std::size_t off = static_cast<std::size_t>(h) * hd;
            T mx = neg_inf;
            for (std::size_t a = 0; a < window_cells.size(); ++a) {
              const std::size_t kx = window_cells[a];
              if (!occupied[kx] || region[kx] != region[qx]) {
                logit[a] = neg_inf;
                continue;
              }
              T s = 0;
              for (std::size_t c = 0; c < hd; ++c) {
                s += q[qx * d + off + c] * k[kx * d + off + c];
              }
              logit[a] = s * scale;
              mx = std::max(mx, logit[a]);
            }
            T sum = 0;
            for (auto& l : logit) {
              l = std::exp(l - mx);
              sum += l;
            }
            for (std::size_t c = 0; c < hd; ++c) {
              T acc = 0;
              for (std::size_t a = 0; a < window_cells.size(); ++a) {
                acc += logit[a] / sum * val[window_cells[a] * d + off + c];
              }
              result[qx * d + off + c] = acc;
            }
          }
        }
      }
    }
  }

  BasicMatrix<T> out(grid.size(), d);
  for (std::size_t v = 0; v < grid.size(); ++v) {
    const auto& c = grid.coords[v];
    const std::size_t x = cell(c.i, c.j, c.k);
    for (std::size_t j = 0; j < d; ++j) out(v, j) = result[x * d + j];
  }
  return grid.with_features(std::move(out));
}

template <typename T>
BasicMatrix<T> voxel_branch_forward(const PointCloud& pc, const BasicMatrix<T>& f,
                                    const VoxelBranchOptions& opt,
                                    const SwaParams<T>& p,
                                    VoxelBranchTimings* timings) {
  opt.window.validate(opt.resolution);
  p.validate(f.cols());
  VoxelBranchTimings local;
  VoxelBranchTimings& tm = timings ? *timings : local;

  auto t0 = Clock::now();
  const SparseVoxelGrid<T> g0 = voxelize(pc, f, opt.resolution);
  tm.voxelize += seconds_since(t0);

  t0 = Clock::now();
  const SparseVoxelGrid<T> g1 = cyclic_shift(g0, opt.window.shift);
  tm.shift += seconds_since(t0);

  t0 = Clock::now();
  const RuleBook shifted_rb = build_rule_book(g1, opt.window);
  tm.rulebook += seconds_since(t0);

  // Residual sub-layer: x + op(layer_norm(x)).
  const auto attention_layer = [&](const SparseVoxelGrid<T>& g, const RuleBook& rb,
                                   const LayerNormParams<T>& ln) {
    auto out = swa_forward(g.with_features(layer_norm(g.features, ln)), rb, p);
    add_inplace(out.features, g.features);
    return out;
  };
  const auto mlp_layer = [&](const SparseVoxelGrid<T>& g, const LayerNormParams<T>& ln,
                             const MlpParams<T>& mlp) {
    auto x = mlp_forward(layer_norm(g.features, ln), mlp);
    add_inplace(x, g.features);
    return g.with_features(std::move(x));
  };

  t0 = Clock::now();
  SparseVoxelGrid<T> g2 = attention_layer(g1, shifted_rb, p.norm1);
  g2 = mlp_layer(g2, p.norm2, p.mlp1);
  tm.attention += seconds_since(t0);

  t0 = Clock::now();
  g2 = reverse_cyclic_shift(g2, opt.window.shift);
  tm.shift += seconds_since(t0);

  t0 = Clock::now();
  WindowConfig regular = opt.window;
  regular.shift = {0, 0, 0};
  regular.mask_wrapped = false;
  const RuleBook regular_rb = build_rule_book(g2, regular);
  tm.rulebook += seconds_since(t0);

  t0 = Clock::now();
  SparseVoxelGrid<T> g3 = attention_layer(g2, regular_rb, p.norm3);
  g3 = mlp_layer(g3, p.norm4, p.mlp2);
  tm.attention += seconds_since(t0);

  t0 = Clock::now();
  BasicMatrix<T> local_features = devoxelize(g3, pc, opt.devoxelize);
  tm.devoxelize += seconds_since(t0);
  return local_features;
}

std::uint64_t global_sa_count(std::uint64_t r, std::uint64_t d) {
  const std::uint64_t cells = r * r * r;
  return 4 * cells * d * d + 2 * cells * cells * d;
}

std::uint64_t window_sa_count(std::uint64_t r, std::uint64_t w, std::uint64_t d) {
  const std::uint64_t cells = r * r * r;
  return 4 * cells * d * d + 2 * w * w * w * cells * d;
}

SwaCost swa_cost(int resolution, int window, std::uint64_t dim,
                 const std::vector<std::uint32_t>& count_per_window) {
  if (window < 1 || resolution % window != 0) {
    throw ConfigError("window size W=" + std::to_string(window) +
                      " does not divide resolution R=" + std::to_string(resolution));
  }
  SwaCost c;
  std::uint64_t nonempty = 0;
  for (std::uint64_t n : count_per_window) {
    nonempty += n;
    c.attention += 2 * n * n * dim;
  }
  c.projection = 4 * nonempty * dim * dim;
  c.sparse_total = c.projection + c.attention;
  c.dense_window = window_sa_count(resolution, window, dim);
  c.global = global_sa_count(resolution, dim);
  return c;
}

SwaCost swa_cost(int resolution, int window, std::uint64_t dim,
                 const std::vector<double>& r_per_window) {
  const double cells = double(window) * window * window;
  std::vector<std::uint32_t> counts;
  counts.reserve(r_per_window.size());
  for (double r : r_per_window) {
    counts.push_back(static_cast<std::uint32_t>(std::llround(r * cells)));
  }
  return swa_cost(resolution, window, dim, counts);
}

template struct SwaParams<float>;
template struct SwaParams<double>;

#define PVT_INSTANTIATE(T)                                                          \
  template SparseVoxelGrid<T> cyclic_shift(const SparseVoxelGrid<T>&,               \
                                           const std::array<int, 3>&);              \
  template SparseVoxelGrid<T> reverse_cyclic_shift(const SparseVoxelGrid<T>&,       \
                                                   const std::array<int, 3>&);      \
  template RuleBook build_rule_book(const SparseVoxelGrid<T>&, const WindowConfig&); \
  template SparseVoxelGrid<T> swa_forward(const SparseVoxelGrid<T>&,                \
                                          const RuleBook&, const SwaParams<T>&);    \
  template SparseVoxelGrid<T> dense_window_attention_oracle(                       \
      const SparseVoxelGrid<T>&, const WindowConfig&, const SwaParams<T>&,          \
      std::size_t);                                                                 \
  template BasicMatrix<T> voxel_branch_forward(                                     \
      const PointCloud&, const BasicMatrix<T>&, const VoxelBranchOptions&,          \
      const SwaParams<T>&, VoxelBranchTimings*);

PVT_INSTANTIATE(float)
PVT_INSTANTIATE(double)

}  // namespace pvt
