#include "pvt/pvt_block.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <iostream>
#include <limits>

#include "pvt/errors.hpp"
#include "pvt/rng.hpp"

namespace pvt {

namespace {

using Clock = std::chrono::steady_clock;

Matrix uniform_matrix(Rng& rng, std::size_t rows, std::size_t cols, double bound) {
  Matrix m(rows, cols);
  for (auto& x : m.data()) x = rng.uniform(-bound, bound);
  return m;
}

Matrix fan_in_matrix(Rng& rng, std::size_t rows, std::size_t cols) {
  return uniform_matrix(rng, rows, cols, 1.0 / std::sqrt(static_cast<double>(rows)));
}

MlpParams<double> init_mlp(Rng& rng, std::size_t dim, std::size_t hidden) {
  return {fan_in_matrix(rng, dim, hidden), std::vector<double>(hidden, 0.0),
          fan_in_matrix(rng, hidden, dim), std::vector<double>(dim, 0.0)};
}

template <typename U, typename T>
std::vector<U> cast_vec(const std::vector<T>& v) {
  return std::vector<U>(v.begin(), v.end());
}

template <typename U, typename T>
LayerNormParams<U> cast_norm(const LayerNormParams<T>& n) {
  return {cast_vec<U>(n.gamma), cast_vec<U>(n.beta), static_cast<U>(n.eps)};
}

template <typename U, typename T>
MlpParams<U> cast_mlp(const MlpParams<T>& m) {
  return {m.w1.template cast<U>(), cast_vec<U>(m.b1), m.w2.template cast<U>(),
          cast_vec<U>(m.b2)};
}

template <typename T>
std::uint64_t count_norm(const LayerNormParams<T>& n) {
  return n.gamma.size() + n.beta.size();
}

template <typename T>
std::uint64_t count_mlp(const MlpParams<T>& m) {
  return m.w1.size() + m.b1.size() + m.w2.size() + m.b2.size();
}

}  // namespace

WindowConfig PvtConfig::window_config() const {
  const int s = effective_shift();
  return {window, {s, s, s}, mask_wrapped};
}

void PvtConfig::validate() const {
  if (resolution < 1) throw ConfigError("resolution R must be >= 1");
  window_config().validate(resolution);
  if (block_widths.empty()) throw ConfigError("num_blocks must be >= 1");
  for (std::size_t w : block_widths) {
    if (w == 0) throw ConfigError("block width must be positive");
    if (heads < 1 || w % static_cast<std::size_t>(heads) != 0) {
      throw ConfigError("heads=" + std::to_string(heads) +
                        " does not divide block width " + std::to_string(w));
    }
  }
  if (rpr_bins < 1) throw ConfigError("rpr_bins L must be >= 1");
  if (!(s_max > 0)) throw ConfigError("s_max must be positive");
  if (ea_slots < 1) throw ConfigError("ea_slots S must be >= 1");
  if (lift_width < 1) throw ConfigError("lift_width must be >= 1");
  if (mlp_ratio < 1) throw ConfigError("mlp_ratio must be >= 1");
}

std::size_t concat_width(const PvtConfig& cfg) {
  std::size_t w = cfg.lift_width;
  for (std::size_t b : cfg.block_widths) w += b;
  return w;
}

PointAttentionMode resolve_mode(const PvtConfig& cfg, std::size_t n, bool warn) {
  if (cfg.mode == PointAttentionMode::Relative && n > cfg.ra_cap && cfg.auto_external) {
    if (warn) {
      std::cerr << "warning: " << n << " points exceed the relative attention cap of "
                << cfg.ra_cap << "; using external attention\n";
    }
    return PointAttentionMode::External;
  }
  return cfg.mode;
}

PvtParams<double> init_params(const PvtConfig& cfg, std::size_t input_feature_dim,
                              std::uint64_t seed) {
  cfg.validate();
  Rng rng(seed);
  PvtParams<double> p;
  const std::size_t d0 = cfg.block_widths.front();
  p.embed_w = fan_in_matrix(rng, 3 + input_feature_dim, d0);
  p.embed_b.assign(d0, 0.0);
  std::size_t incoming = d0;
  for (std::size_t d : cfg.block_widths) {
    PvtBlockParams<double> b;
    if (d != incoming) b.input_proj = fan_in_matrix(rng, incoming, d);
    const std::size_t hidden = cfg.mlp_ratio * d;
    auto& s = b.swa;
    s.wq = fan_in_matrix(rng, d, d);
    s.wk = fan_in_matrix(rng, d, d);
    s.wv = fan_in_matrix(rng, d, d);
    s.heads = cfg.heads;
    s.norm1 = s.norm2 = s.norm3 = s.norm4 = LayerNormParams<double>::unit(d);
    s.mlp1 = init_mlp(rng, d, hidden);
    s.mlp2 = init_mlp(rng, d, hidden);
    auto& pt = b.point;
    pt.wq = fan_in_matrix(rng, d, d);
    pt.wk = fan_in_matrix(rng, d, d);
    pt.wv = fan_in_matrix(rng, d, d);
    pt.mlp = init_mlp(rng, d, hidden);
    pt.rpr = RprTables<double>::zeros(cfg.rpr_bins, cfg.s_max);
    const double bound = 1.0 / std::sqrt(static_cast<double>(d));
    pt.ea.m_k = uniform_matrix(rng, cfg.ea_slots, d, bound);
    pt.ea.m_v = uniform_matrix(rng, cfg.ea_slots, d, bound);
    pt.mode = cfg.mode;
    pt.ra_cap = cfg.ra_cap;
    p.blocks.push_back(std::move(b));
    incoming = d;
  }
  p.lift_w = fan_in_matrix(rng, incoming, cfg.lift_width);
  p.lift_b.assign(cfg.lift_width, 0.0);
  const std::size_t dc = concat_width(cfg);
  p.head_w = fan_in_matrix(rng, dc, dc);
  p.head_b.assign(dc, 0.0);
  return p;
}

template <typename T>
template <typename U>
PvtParams<U> PvtParams<T>::cast() const {
  PvtParams<U> out;
  out.embed_w = embed_w.template cast<U>();
  out.embed_b = cast_vec<U>(embed_b);
  for (const auto& b : blocks) {
    PvtBlockParams<U> c;
    if (b.input_proj) c.input_proj = b.input_proj->template cast<U>();
    c.swa.wq = b.swa.wq.template cast<U>();
    c.swa.wk = b.swa.wk.template cast<U>();
    c.swa.wv = b.swa.wv.template cast<U>();
    c.swa.heads = b.swa.heads;
    c.swa.norm1 = cast_norm<U>(b.swa.norm1);
    c.swa.norm2 = cast_norm<U>(b.swa.norm2);
    c.swa.norm3 = cast_norm<U>(b.swa.norm3);
    c.swa.norm4 = cast_norm<U>(b.swa.norm4);
    c.swa.mlp1 = cast_mlp<U>(b.swa.mlp1);
    c.swa.mlp2 = cast_mlp<U>(b.swa.mlp2);
    c.point.wq = b.point.wq.template cast<U>();
    c.point.wk = b.point.wk.template cast<U>();
    c.point.wv = b.point.wv.template cast<U>();
    c.point.mlp = cast_mlp<U>(b.point.mlp);
    for (int m = 0; m < 3; ++m) c.point.rpr.table[m] = cast_vec<U>(b.point.rpr.table[m]);
    c.point.rpr.s_max = b.point.rpr.s_max;
    c.point.ea.m_k = b.point.ea.m_k.template cast<U>();
    c.point.ea.m_v = b.point.ea.m_v.template cast<U>();
    c.point.mode = b.point.mode;
    c.point.ra_cap = b.point.ra_cap;
    out.blocks.push_back(std::move(c));
  }
  out.lift_w = lift_w.template cast<U>();
  out.lift_b = cast_vec<U>(lift_b);
  out.head_w = head_w.template cast<U>();
  out.head_b = cast_vec<U>(head_b);
  return out;
}

template <typename T>
BasicMatrix<T> embed_points(const PointCloud& pc, const PvtParams<T>& params) {
  const std::size_t d = pc.feature_dim();
  if (params.embed_w.rows() != 3 + d) {
    throw ShapeError("embedding expects " + std::to_string(params.embed_w.rows() - 3) +
                     " input feature columns, cloud has " + std::to_string(d));
  }
  BasicMatrix<T> in(pc.size(), 3 + d);
  for (std::size_t i = 0; i < pc.size(); ++i) {
    for (int m = 0; m < 3; ++m) in(i, m) = static_cast<T>(pc.points[i][m]);
    for (std::size_t j = 0; j < d; ++j) in(i, 3 + j) = static_cast<T>((*pc.features)(i, j));
  }
  return linear(in, params.embed_w, params.embed_b, false);
}

template <typename T>
BasicMatrix<T> pvt_block_forward(const PointCloud& pc, const BasicMatrix<T>& f,
                                 const PvtConfig& cfg, const PvtBlockParams<T>& params,
                                 BlockTimings* timings) {
  const auto t0 = Clock::now();
  VoxelBranchOptions vopt;
  vopt.resolution = cfg.resolution;
  vopt.window = cfg.window_config();
  vopt.devoxelize = cfg.devoxelize;
  BasicMatrix<T> fused = voxel_branch_forward(pc, f, vopt, params.swa,
                                              timings ? &timings->voxel : nullptr);
  const auto t1 = Clock::now();
  const PointAttentionMode mode = resolve_mode(cfg, f.rows());
  BasicMatrix<T> global;
  if (mode == params.point.mode) {
    global = point_branch_forward(f, pc, params.point);
  } else {
    PointBranchParams<T> p = params.point;
    p.mode = mode;
    global = point_branch_forward(f, pc, p);
  }
  add_inplace(fused, global);
  if (timings) {
    const auto t2 = Clock::now();
    timings->point_branch += std::chrono::duration<double>(t2 - t1).count();
    timings->total += std::chrono::duration<double>(t2 - t0).count();
  }
  return fused;
}

template <typename T>
BasicMatrix<T> EncoderOutput<T>::repeated_global() const {
  BasicMatrix<T> r(per_point.rows(), global.size());
  for (std::size_t i = 0; i < r.rows(); ++i) {
    std::ranges::copy(global, r.row(i).begin());
  }
  return r;
}

template <typename T>
EncoderOutput<T> encoder_forward(const PointCloud& pc, const PvtConfig& cfg,
                                 const PvtParams<T>& params, BlockTimings* timings) {
  cfg.validate();
  if (params.blocks.size() != cfg.num_blocks()) {
    throw ShapeError("params hold " + std::to_string(params.blocks.size()) +
                     " blocks, config asks for " + std::to_string(cfg.num_blocks()));
  }
  const std::size_t n = pc.size();
  if (n == 0) throw EmptyInputError("encoder_forward: no points");
  BasicMatrix<T> f = embed_points(pc, params);
  std::vector<BasicMatrix<T>> outputs;
  for (const auto& block : params.blocks) {
    if (block.input_proj) f = matmul(f, *block.input_proj);
    f = pvt_block_forward(pc, f, cfg, block, timings);
    outputs.push_back(f);
  }
  outputs.push_back(linear(f, params.lift_w, params.lift_b, true));

  std::size_t width = 0;
  for (const auto& o : outputs) width += o.cols();
  if (params.head_w.rows() != width) {
    throw ShapeError("head expects width " + std::to_string(params.head_w.rows()) +
                     ", concat is " + std::to_string(width));
  }
  BasicMatrix<T> cat(n, width);
  for (std::size_t i = 0; i < n; ++i) {
    auto dst = cat.row(i).begin();
    for (const auto& o : outputs) dst = std::ranges::copy(o.row(i), dst).out;
  }

  EncoderOutput<T> out;
  out.per_point = linear(cat, params.head_w, params.head_b, true);
  out.global.assign(out.per_point.cols(), -std::numeric_limits<T>::infinity());
  for (std::size_t i = 0; i < n; ++i) {
    const auto r = out.per_point.row(i);
    for (std::size_t j = 0; j < r.size(); ++j) out.global[j] = std::max(out.global[j], r[j]);
  }
  return out;
}

template <typename T>
std::uint64_t count_parameters(const PvtParams<T>& p) {
  std::uint64_t total = p.embed_w.size() + p.embed_b.size();
  for (const auto& b : p.blocks) {
    if (b.input_proj) total += b.input_proj->size();
    total += b.swa.wq.size() + b.swa.wk.size() + b.swa.wv.size();
    total += count_norm(b.swa.norm1) + count_norm(b.swa.norm2) +
             count_norm(b.swa.norm3) + count_norm(b.swa.norm4);
    total += count_mlp(b.swa.mlp1) + count_mlp(b.swa.mlp2);
    total += b.point.wq.size() + b.point.wk.size() + b.point.wv.size();
    total += count_mlp(b.point.mlp);
    for (const auto& t : b.point.rpr.table) total += t.size();
    total += b.point.ea.m_k.size() + b.point.ea.m_v.size();
  }
  total += p.lift_w.size() + p.lift_b.size();
  total += p.head_w.size() + p.head_b.size();
  return total;
}

template struct EncoderOutput<float>;
template struct EncoderOutput<double>;
template PvtParams<float> PvtParams<double>::cast<float>() const;
template PvtParams<double> PvtParams<double>::cast<double>() const;

#define PVT_INSTANTIATE(T)                                                          \
  template BasicMatrix<T> embed_points(const PointCloud&, const PvtParams<T>&);     \
  template BasicMatrix<T> pvt_block_forward(const PointCloud&, const BasicMatrix<T>&, \
                                            const PvtConfig&,                       \
                                            const PvtBlockParams<T>&, BlockTimings*); \
  template EncoderOutput<T> encoder_forward(const PointCloud&, const PvtConfig&,    \
                                            const PvtParams<T>&, BlockTimings*);    \
  template std::uint64_t count_parameters(const PvtParams<T>&);

PVT_INSTANTIATE(float)
PVT_INSTANTIATE(double)

}  // namespace pvt
