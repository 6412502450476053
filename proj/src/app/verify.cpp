#include <algorithm>
#include <cmath>
#include <filesystem>
#include <numeric>

#include "pvt/app.hpp"
#include "pvt/errors.hpp"
#include "pvt/point_branch.hpp"
#include "pvt/rng.hpp"
#include "pvt/sparse_window_attention.hpp"
#include "pvt/synthetic.hpp"

namespace pvt::app {

namespace {

struct Tracker {
  PropertyResult r;
  Tracker(std::string suite, std::string name, double tol) {
    r.suite = std::move(suite);
    r.name = std::move(name);
    r.tolerance = tol;
  }
  void observe(double err) {
    // NaN must fail, so compare with !(<=).
    if (!(err <= r.max_error)) r.max_error = std::isnan(err) ? INFINITY : err;
  }
  PropertyResult done() {
    r.passed = r.max_error <= r.tolerance;
    return r;
  }
};

std::vector<std::size_t> random_permutation(std::size_t n, Rng& rng) {
  std::vector<std::size_t> p(n);
  std::iota(p.begin(), p.end(), std::size_t{0});
  rng.shuffle(p);
  return p;
}

Matrix permute_rows(const Matrix& m, const std::vector<std::size_t>& perm) {
  Matrix out(perm.size(), m.cols());
  for (std::size_t i = 0; i < perm.size(); ++i) {
    std::ranges::copy(m.row(perm[i]), out.row(i).begin());
  }
  return out;
}

void suite_swa_oracle(const VerifyOptions& opt, std::vector<PropertyResult>& out) {
  Tracker equiv("swa-oracle", "sparse_vs_dense", 1e-9);
  Tracker masked("swa-oracle", "sparse_vs_dense_masked", 1e-9);
  Tracker sparsity("swa-oracle", "sparsity_preserved", 0);
  Tracker locality("swa-oracle", "window_locality", 0);
  Rng rng(opt.seed);
  for (int t = 0; t < opt.trials; ++t) {
    const int r = rng.below(2) ? 8 : 4;
    const int w = rng.below(2) ? 4 : 2;
    const std::size_t d = rng.below(2) ? 16 : 8;
    const int heads = rng.below(2) ? 2 : 1;
    const double occ = rng.uniform(0.05, 0.5);
    auto grid = random_sparse_grid<double>(r, d, occ, rng.next());
    const auto p = random_swa_params<double>(d, heads, rng.next());
    WindowConfig wc{w, {0, 0, 0}, false};

    auto sparse = swa_forward(grid, build_rule_book(grid, wc), p);
    if (opt.inject_fault) sparse.features.data()[0] = -sparse.features.data()[0];
    const auto dense = dense_window_attention_oracle(grid, wc, p);
    equiv.observe(max_abs_diff(sparse.features, dense.features));
    sparsity.observe(sparse.coords == grid.coords ? 0.0 : 1.0);

    WindowConfig mc = wc;
    const int s = static_cast<int>(rng.below(static_cast<std::uint64_t>(w)));
    mc.shift = {s, s, s};
    mc.mask_wrapped = true;
    const auto shifted = cyclic_shift(grid, mc.shift);
    masked.observe(max_abs_diff(swa_forward(shifted, build_rule_book(shifted, mc), p).features,
                                dense_window_attention_oracle(shifted, mc, p).features));

    // Perturb one voxel; everything outside its window must be unchanged.
    const RuleBook rb = build_rule_book(grid, wc);
    const std::size_t victim = rng.below(grid.size());
    auto bumped = grid;
    bumped.features(victim, rng.below(d)) += 0.5;
    const auto after = swa_forward(bumped, rb, p);
    const auto before = swa_forward(grid, rb, p);
    double diff = 0;
    for (std::size_t v = 0; v < grid.size(); ++v) {
      if (rb.window_of[v] == rb.window_of[victim]) continue;
      for (std::size_t j = 0; j < d; ++j) {
        diff = std::max(diff, std::abs(after.features(v, j) - before.features(v, j)));
      }
    }
    locality.observe(diff);
  }
  out.push_back(equiv.done());
  out.push_back(masked.done());
  out.push_back(sparsity.done());
  out.push_back(locality.done());
}

void suite_permutation(const VerifyOptions& opt, std::vector<PropertyResult>& out) {
  Tracker ra("permutation", "relative_attention_equivariance", 1e-9);
  Tracker ea("permutation", "external_attention_equivariance", 1e-9);
  Tracker pooled("permutation", "encoder_global_invariance", 0);
  Rng rng(opt.seed + 1);
  const int trials = std::max(1, opt.trials / 2);
  for (int t = 0; t < trials; ++t) {
    const std::size_t n = 8 + rng.below(249);
    const std::size_t d = rng.below(2) ? 16 : 8;
    const PointCloud pc = normalize_unit_sphere(random_cloud(n, rng.next()));
    const Matrix f = random_matrix<double>(n, d, 1.0, rng.next());
    const auto perm = random_permutation(n, rng);
    const PointCloud pcp = pc.permuted(perm);
    const Matrix fp = permute_rows(f, perm);
    for (auto mode : {PointAttentionMode::Relative, PointAttentionMode::External}) {
      const auto p = random_point_params<double>(d, 16, 32, mode, rng.next());
      const Matrix base = permute_rows(point_branch_forward(f, pc, p), perm);
      const double err = max_abs_diff(point_branch_forward(fp, pcp, p), base);
      (mode == PointAttentionMode::Relative ? ra : ea).observe(err);
    }
  }
  // Whole encoder on a small config: pooled vector must be bit-identical.
  PvtConfig cfg;
  cfg.resolution = 8;
  cfg.window = 2;
  cfg.block_widths = {16, 16, 32};
  cfg.lift_width = 64;
  cfg.ea_slots = 16;
  for (int t = 0; t < std::max(1, opt.trials / 20); ++t) {
    const PointCloud pc = normalize_unit_sphere(random_cloud(64 + rng.below(64), rng.next()));
    const auto params = init_params(cfg, 0, rng.next());
    const auto perm = random_permutation(pc.size(), rng);
    const auto a = encoder_forward(pc, cfg, params);
    const auto b = encoder_forward(pc.permuted(perm), cfg, params);
    double err = 0;
    for (std::size_t j = 0; j < a.global.size(); ++j) {
      err = std::max(err, std::abs(a.global[j] - b.global[j]));
    }
    pooled.observe(err);
  }
  out.push_back(ra.done());
  out.push_back(ea.done());
  out.push_back(pooled.done());
}

void suite_roundtrip(const VerifyOptions& opt, std::vector<PropertyResult>& out) {
  Tracker shift("roundtrip", "cyclic_shift_round_trip", 0);
  Tracker io("roundtrip", "binary_cloud_round_trip", 0);
  Rng rng(opt.seed + 2);
  for (int t = 0; t < opt.trials; ++t) {
    const int r = 2 + static_cast<int>(rng.below(15));
    const auto g = random_sparse_grid<double>(r, 4, rng.uniform(0.05, 0.6), rng.next());
    const std::array<int, 3> s{static_cast<int>(rng.below(r)), static_cast<int>(rng.below(r)),
                               static_cast<int>(rng.below(r))};
    shift.observe(reverse_cyclic_shift(cyclic_shift(g, s), s) == g ? 0.0 : 1.0);
  }
  const auto dir = std::filesystem::temp_directory_path();
  for (int t = 0; t < std::max(1, opt.trials / 10); ++t) {
    PointCloud pc = random_cloud(1 + rng.below(200), rng.next());
    if (rng.below(2)) pc.features = random_matrix<double>(pc.size(), 1 + rng.below(5), 1e3, rng.next());
    const auto path = dir / ("pvt_verify_roundtrip_" + std::to_string(rng.next()) + ".bin");
    save_point_cloud(path, pc, CloudFormat::Binary);
    const PointCloud back = load_point_cloud(path, CloudFormat::Binary);
    std::filesystem::remove(path);
    io.observe(back == pc ? 0.0 : 1.0);
  }
  out.push_back(shift.done());
  out.push_back(io.done());
}

void suite_rpr(const VerifyOptions& opt, std::vector<PropertyResult>& out) {
  Tracker total("rpr", "quantize_index_in_range", 0);
  Tracker zero_bin("rpr", "zero_delta_bin_is_8", 0);
  Tracker reduce("rpr", "ra_equals_sa_with_zero_tables", 1e-12);
  Tracker translate("rpr", "bias_translation_invariance", 0);
  Rng rng(opt.seed + 3);
  const auto tables = RprTables<double>::zeros(16, 1.0);
  std::size_t bad = 0;
  for (int i = 0; i < 1'000'000; ++i) {
    const int idx = quantize_index(rng.uniform(-2.0, 2.0), tables);
    if (idx < 0 || idx > 15) ++bad;
  }
  total.observe(static_cast<double>(bad));
  zero_bin.observe(std::abs(quantize_index(0.0, tables) - 8));
  for (int t = 0; t < std::max(1, opt.trials / 5); ++t) {
    const std::size_t n = 4 + rng.below(60);
    const std::size_t d = 8;
    const PointCloud pc = normalize_unit_sphere(random_cloud(n, rng.next()));
    const Matrix f = random_matrix<double>(n, d, 1.0, rng.next());
    const auto p = random_point_params<double>(d, 16, 8, PointAttentionMode::Relative,
                                               rng.next(), false);
    reduce.observe(max_abs_diff(relative_attention(f, pc, p), self_attention(f, p)));

    // Dyadic coordinates keep p + c exact, so deltas are bit-identical.
    PointCloud grid_pc;
    for (std::size_t i = 0; i < n; ++i) {
      Point3 q{};
      for (auto& x : q) x = (static_cast<double>(rng.below(33)) - 16.0) / 64.0;
      grid_pc.points.push_back(q);
    }
    PointCloud moved = grid_pc;
    const Point3 c{(static_cast<double>(rng.below(17)) - 8.0) / 32.0,
                   (static_cast<double>(rng.below(17)) - 8.0) / 32.0,
                   (static_cast<double>(rng.below(17)) - 8.0) / 32.0};
    for (auto& q : moved.points) {
      for (int m = 0; m < 3; ++m) q[m] += c[m];
    }
    const auto rp = random_point_params<double>(d, 16, 8, PointAttentionMode::Relative,
                                                rng.next(), true);
    translate.observe(relative_bias(grid_pc, rp.rpr) == relative_bias(moved, rp.rpr) ? 0.0 : 1.0);
  }
  out.push_back(total.done());
  out.push_back(zero_bin.done());
  out.push_back(reduce.done());
  out.push_back(translate.done());
}

void suite_ea(const VerifyOptions& opt, std::vector<PropertyResult>& out) {
  Tracker cols("ea", "column_softmax_sums", 1e-12);
  Tracker rows("ea", "row_l1_sums", 1e-12);
  Tracker linear("ea", "op_count_doubles_with_n", 0);
  Rng rng(opt.seed + 4);
  for (int t = 0; t < std::max(1, opt.trials / 5); ++t) {
    const std::size_t n = 2 + rng.below(300);
    const std::size_t d = 8 + rng.below(9);
    const std::size_t s = 1 + rng.below(64);
    const Matrix f = random_matrix<double>(n, d, 2.0, rng.next());
    EaMemories<double> ea{random_matrix<double>(s, d, 1.0, rng.next()),
                          random_matrix<double>(s, d, 1.0, rng.next())};
    const auto maps = external_attention_maps(f, ea);
    for (std::size_t c = 0; c < s; ++c) {
      double sum = 0;
      for (std::size_t i = 0; i < n; ++i) sum += maps.column_softmax(i, c);
      cols.observe(std::abs(sum - 1.0));
    }
    for (std::size_t i = 0; i < n; ++i) {
      double sum = 0;
      for (std::size_t c = 0; c < s; ++c) sum += maps.attention(i, c);
      rows.observe(std::abs(sum - 1.0));
    }
    const auto once = external_attention_ops(n, d, s);
    const auto twice = external_attention_ops(2 * n, d, s);
    linear.observe(static_cast<double>(twice > 2 * once ? twice - 2 * once : 2 * once - twice));
  }
  out.push_back(cols.done());
  out.push_back(rows.done());
  out.push_back(linear.done());
}

}  // namespace

const std::vector<std::string>& verify_suite_names() {
  static const std::vector<std::string> names{"swa-oracle", "permutation", "roundtrip",
                                              "rpr", "ea"};
  return names;
}

std::vector<PropertyResult> run_verify(const VerifyOptions& opt) {
  std::vector<std::string> selected;
  for (const auto& s : opt.suites) {
    if (s == "all") {
      selected = verify_suite_names();
      break;
    }
    if (std::ranges::find(verify_suite_names(), s) == verify_suite_names().end()) {
      throw ConfigError("unknown verify suite '" + s + "'");
    }
    selected.push_back(s);
  }
  if (opt.trials < 1) throw ConfigError("--trials must be >= 1");
  std::vector<PropertyResult> out;
  for (const auto& s : selected) {
    if (s == "swa-oracle") suite_swa_oracle(opt, out);
    if (s == "permutation") suite_permutation(opt, out);
    if (s == "roundtrip") suite_roundtrip(opt, out);
    if (s == "rpr") suite_rpr(opt, out);
    if (s == "ea") suite_ea(opt, out);
  }
  return out;
}

}  // namespace pvt::app
