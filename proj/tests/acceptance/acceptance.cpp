// Acceptance gate: one PASS/FAIL line per criterion, nonzero exit on any FAIL.
#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iterator>
#include <numeric>
#include <set>
#include <string>
#include <vector>

#include "pvt/app.hpp"
#include "pvt/cost_model.hpp"
#include "pvt/parallel.hpp"
#include "pvt/point_branch.hpp"
#include "pvt/pvt_block.hpp"
#include "pvt/rng.hpp"
#include "pvt/sparse_window_attention.hpp"
#include "pvt/synthetic.hpp"

using namespace pvt;
namespace fs = std::filesystem;

namespace {

using Clock = std::chrono::steady_clock;

int failures = 0;

void report(int id, const char* name, bool ok, const std::string& detail) {
  std::printf("%s  [%2d] %-34s %s\n", ok ? "PASS" : "FAIL", id, name, detail.c_str());
  std::fflush(stdout);
  if (!ok) ++failures;
}

std::string fmt(const char* f, double a, double b = 0, double c = 0) {
  char buf[256];
  std::snprintf(buf, sizeof buf, f, a, b, c);
  return buf;
}

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

// Median over `reps` samples of the per-call time of f, each sample looping
// until at least `min_ms` has elapsed. One untimed warmup call.
double per_call_ms(const std::function<void()>& f, int reps = 7, double min_ms = 30) {
  f();
  std::vector<double> samples;
  for (int r = 0; r < reps; ++r) {
    int calls = 0;
    const auto t0 = Clock::now();
    double ms = 0;
    do {
      f();
      ++calls;
      ms = std::chrono::duration<double, std::milli>(Clock::now() - t0).count();
    } while (ms < min_ms);
    samples.push_back(ms / calls);
  }
  std::sort(samples.begin(), samples.end());
  return samples[samples.size() / 2];
}

std::vector<std::size_t> shuffled(std::size_t n, std::uint64_t seed) {
  std::vector<std::size_t> p(n);
  std::iota(p.begin(), p.end(), std::size_t{0});
  Rng(seed).shuffle(p);
  return p;
}

void sparse_dense_equivalence() {
  const auto t0 = Clock::now();
  Rng rng(1001);
  double worst = 0;
  const int trials = 120;
  for (int t = 0; t < trials; ++t) {
    const int r = rng.below(2) ? 8 : 4;
    const int w = rng.below(2) ? 4 : 2;
    const std::size_t d = rng.below(2) ? 16 : 8;
    const int heads = 1 + static_cast<int>(rng.below(2));
    const double occ = 0.05 + 0.45 * rng.unit();
    const auto g = random_sparse_grid<double>(r, d, occ, 5000 + t);
    const auto p = random_swa_params<double>(d, heads, 6000 + t);
    const WindowConfig cfg{w};
    const auto a = swa_forward(g, build_rule_book(g, cfg), p);
    const auto b = dense_window_attention_oracle(g, cfg, p);
    worst = a.coords == b.coords ? std::max(worst, max_abs_diff(a.features, b.features))
                                 : INFINITY;
  }
  const double secs = seconds_since(t0);
  report(1, "sparse/dense SWA equivalence", worst <= 1e-9 && secs < 60,
         fmt("trials=120 max_err=%.3e tol=1e-9 runtime=%.2fs", worst, secs));
}

void permutation_equivariance() {
  PvtConfig cfg;
  cfg.resolution = 8;
  cfg.window = 2;
  cfg.heads = 2;
  cfg.block_widths = {16, 16, 32};
  cfg.lift_width = 64;
  cfg.ea_slots = 16;
  double worst = 0;
  bool global_identical = true;
  const int clouds = 50;
  for (int t = 0; t < clouds; ++t) {
    const std::size_t n = 16 + (t * 97) % 497;  // up to 512
    PointCloud pc = normalize_unit_sphere(random_cloud(n, 7000 + t));
    pc.features = random_matrix<double>(n, 16, 1.0, 7100 + t);
    const auto perm = shuffled(n, 7200 + t);
    const PointCloud q = pc.permuted(perm);
    for (auto mode : {PointAttentionMode::Relative, PointAttentionMode::External}) {
      const auto p = random_point_params<double>(16, 16, 16, mode, 7300 + t);
      const Matrix a = point_branch_forward(*pc.features, pc, p);
      const Matrix b = point_branch_forward(*q.features, q, p);
      for (std::size_t i = 0; i < n; ++i)
        for (std::size_t c = 0; c < 16; ++c)
          worst = std::max(worst, std::abs(b(i, c) - a(perm[i], c)));

      cfg.mode = mode;
      PointCloud bare = pc;
      bare.features.reset();
      const auto params = init_params(cfg, 0, 7400 + t);
      const auto ga = encoder_forward(bare, cfg, params).global;
      const auto gb = encoder_forward(bare.permuted(perm), cfg, params).global;
      global_identical = global_identical && ga == gb;
    }
  }
  report(2, "point-branch permutation equivariance", worst <= 1e-9 && global_identical,
         fmt("clouds=50 modes=RA,EA max_err=%.3e tol=1e-9 pooled_identical=", worst) +
             (global_identical ? "yes" : "no"));
}

void ra_reduces_to_sa() {
  double worst = 0;
  for (int t = 0; t < 50; ++t) {
    const std::size_t n = 8 + (t * 37) % 250;
    const std::size_t d = t % 2 ? 16 : 8;
    const PointCloud pc = random_cloud(n, 8000 + t);
    const Matrix f = random_matrix<double>(n, d, 1.0, 8100 + t);
    const auto p =
        random_point_params<double>(d, 16, 8, PointAttentionMode::Relative, 8200 + t, false);
    worst = std::max(worst, max_abs_diff(relative_attention(f, pc, p), self_attention(f, p)));
  }
  report(3, "RA -> SA with zero RPR tables", worst <= 1e-12,
         fmt("instances=50 max_err=%.3e tol=1e-12", worst));
}

void cost_formulas() {
  PvtConfig cfg;
  cfg.resolution = 4;
  cfg.window = 2;
  cfg.block_widths = {8};
  const auto stats = occupancy_stats(random_sparse_grid<double>(4, 1, 0.5, 9000), 2);
  const CostReport r = complexity_report(cfg, stats, 64);
  bool ok = r.layers.global_sa_exact == 81920 && r.layers.window_sa_exact == 24576;
  Rng rng(9001);
  int sampled = 0;
  for (int t = 0; t < 300; ++t) {
    PvtConfig c;
    c.resolution = 1 << (1 + rng.below(6));
    c.window = 1 << rng.below(6);
    if (c.window >= c.resolution) continue;
    c.block_widths = {1 + rng.below(256)};
    const auto g = random_sparse_grid<double>(c.resolution, 1, 0.01 + 0.5 * rng.unit(), 9100 + t);
    const CostReport cr = complexity_report(c, occupancy_stats(g, c.window), 1 + rng.below(4096));
    ok = ok && cr.layers.window_sa_exact < cr.layers.global_sa_exact;
    ++sampled;
  }
  report(4, "closed-form attention counts", ok,
         "global(R=4,D=8)=" + std::to_string(r.layers.global_sa_exact) +
             " window(R=4,W=2,D=8)=" + std::to_string(r.layers.window_sa_exact) +
             " window<global on " + std::to_string(sampled) + " sampled configs");
}

void shift_round_trip() {
  Rng rng(10001);
  bool ok = true;
  std::size_t wrapped = 0;
  for (int t = 0; t < 150; ++t) {
    const int r = 1 << (1 + rng.below(5));
    const auto g = random_sparse_grid<double>(r, 4, 0.05 + 0.6 * rng.unit(), 10100 + t);
    std::array<int, 3> s{};
    for (auto& x : s) x = static_cast<int>(rng.below(r));
    for (const auto& c : g.coords)
      wrapped += (c.i + s[0] >= r) || (c.j + s[1] >= r) || (c.k + s[2] >= r);
    ok = ok && reverse_cyclic_shift(cyclic_shift(g, s), s) == g;
  }
  report(5, "cyclic-shift round trip", ok && wrapped > 0,
         "grids=150 bit_exact=" + std::string(ok ? "yes" : "no") +
             " wrapped_voxels=" + std::to_string(wrapped));
}

void window_locality() {
  Rng rng(11001);
  bool ok = true;
  std::size_t checked = 0;
  for (int t = 0; t < 60; ++t) {
    const int r = rng.below(2) ? 16 : 8;
    const int w = rng.below(2) ? 4 : 2;
    const auto g = random_sparse_grid<double>(r, 8, 0.3, 11100 + t);
    const auto p = random_swa_params<double>(8, 2, 11200 + t);
    const RuleBook rb = build_rule_book(g, WindowConfig{w});
    const auto base = swa_forward(g, rb, p);
    const std::size_t v = rng.below(g.size());
    Matrix f = g.features;
    for (std::size_t c = 0; c < 8; ++c) f(v, c) += rng.uniform(-1, 1);
    const auto bumped = swa_forward(g.with_features(f), rb, p);
    for (std::size_t u = 0; u < g.size(); ++u) {
      if (rb.window_of[u] == rb.window_of[v]) continue;
      ++checked;
      for (std::size_t c = 0; c < 8; ++c)
        ok = ok && bumped.features(u, c) == base.features(u, c);
    }
  }
  report(6, "window locality", ok,
         "trials=60 outside-window voxels checked=" + std::to_string(checked) +
             (ok ? " all unchanged" : " CHANGED"));
}

void swa_linear_scaling() {
  const auto t0 = Clock::now();
  ThreadCountScope single(1);
  const int w = 4;
  const double occ = 0.25;
  const std::size_t d = 32;
  const auto p = random_swa_params<double>(d, 2, 12000, 1.0 / std::sqrt(double(d)));
  std::vector<double> xs, ys;
  std::vector<std::uint64_t> counts, nonempty;
  std::string detail;
  for (int r : {8, 16, 32}) {
    const PointCloud pc = synthetic_occupancy_cloud(r, w, occ, 12001);
    const auto g = voxelize(pc, random_matrix<double>(pc.size(), d, 1.0, 12002), r);
    const RuleBook rb = build_rule_book(g, WindowConfig{w});
    const double ms = per_call_ms([&] { (void)swa_forward(g, rb, p); });
    xs.push_back(std::pow(double(r), 3));
    ys.push_back(ms);
    counts.push_back(swa_cost(r, w, d, occupancy_stats(g, w).count_per_window).sparse_total);
    nonempty.push_back(g.size());
    detail += fmt("R=%.0f:%.3fms ", r, ms);
  }
  const double slope = app::loglog_slope(xs, ys);
  bool linear = true;
  for (std::size_t i = 1; i < counts.size(); ++i)
    linear = linear && counts[i] * nonempty[0] == counts[0] * nonempty[i];
  const double secs = seconds_since(t0);
  report(7, "SWA linear scaling", slope >= 0.7 && slope <= 1.3 && linear && secs < 300,
         detail + fmt("slope=%.3f in [0.7,1.3] runtime=%.1fs", slope, secs) +
             " count_linear_in_nonempty=" + (linear ? "yes" : "no"));
}

void ea_linearity() {
  ThreadCountScope single(1);
  const std::size_t d = 64, s = 64;
  const auto ea = random_point_params<double>(d, 16, s, PointAttentionMode::External, 13000).ea;
  std::vector<double> xs, ys;
  bool doubles = true;
  std::string detail;
  for (std::size_t n : {1024, 2048, 4096}) {
    const Matrix f = random_matrix<double>(n, d, 1.0, 13001 + n);
    const double ms = per_call_ms([&] { (void)external_attention(f, ea); });
    xs.push_back(double(n));
    ys.push_back(ms);
    doubles = doubles && external_attention_ops(2 * n, d, s) == 2 * external_attention_ops(n, d, s);
    detail += fmt("N=%.0f:%.3fms ", double(n), ms);
  }
  const double slope = app::loglog_slope(xs, ys);
  report(8, "EA linearity", doubles && slope >= 0.7 && slope <= 1.3,
         detail + fmt("slope=%.3f in [0.7,1.3]", slope) + " ops_double=" + (doubles ? "yes" : "no"));
}

void quantization_totality() {
  Rng rng(14000);
  const double s_max = 1.0;
  const auto t = RprTables<double>::zeros(16, s_max);
  bool in_range = true;
  for (int i = 0; i < 1000000; ++i) {
    const int idx = quantize_index(rng.uniform(-2 * s_max, 2 * s_max), t);
    in_range = in_range && idx >= 0 && idx <= 15;
  }
  const int zero_bin = quantize_index(0.0, t);
  report(9, "quantization totality", in_range && zero_bin == 8,
         std::string("fuzz=1e6 in_range=") + (in_range ? "yes" : "no") +
             " bin(0)=" + std::to_string(zero_bin));
}

void voxel_fidelity() {
  const int r = 8;
  bool exact = true;
  std::size_t covered = 0;
  for (int t = 0; t < 5; ++t) {
    const PointCloud pc = random_cloud(20000, 15000 + t);
    const double c = 0.1 * (t + 1) + 1.0 / 3;
    const auto g = voxelize(pc, Matrix(pc.size(), 3, c), r);
    const Matrix out = devoxelize(g, pc);
    for (std::size_t p = 0; p < pc.size(); ++p) {
      bool full = true;
      for (const auto& k : trilinear_corners(pc.points[p], r))
        full = full && k.in_bounds && g.find(k.coord).has_value();
      if (!full) continue;
      ++covered;
      for (std::size_t j = 0; j < 3; ++j) exact = exact && out(p, j) == c;
    }
  }
  double worst = 0;
  for (int t = 0; t < 20; ++t) {
    const PointCloud pc = random_cloud(3000, 15100 + t);
    const Matrix f = random_matrix<double>(pc.size(), 4, 1.0, 15200 + t);
    const auto g = voxelize(pc, f, 4 << (t % 3));
    for (std::size_t c = 0; c < 4; ++c) {
      double in = 0, out = 0;
      for (std::size_t p = 0; p < pc.size(); ++p) in += f(p, c);
      for (std::size_t v = 0; v < g.size(); ++v) out += g.features(v, c) * g.point_count[v];
      worst = std::max(worst, std::abs(in - out));
    }
  }
  report(10, "voxelize/devoxelize fidelity", exact && covered > 0 && worst <= 1e-9,
         "constant exact on " + std::to_string(covered) + " fully-surrounded points; " +
             fmt("mass max_err=%.3e tol=1e-9", worst));
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void forward_determinism() {
  const fs::path root = fs::temp_directory_path() / "pvt_acceptance_forward";
  fs::remove_all(root);
  std::set<int> threads{1, available_cores(), std::max(available_cores(), 4)};
  std::string features, global;
  bool ok = true;
  int runs = 0;
  for (int t : threads) {
    for (int rep = 0; rep < 2; ++rep) {
      app::ForwardOptions opt;
      opt.points = 1024;
      opt.seed = 42;
      opt.threads = t;
      opt.out_dir = root / ("t" + std::to_string(t) + "_" + std::to_string(rep));
      const auto r = app::run_forward(opt);
      const std::string f = slurp(r.features_path), g = slurp(r.global_path);
      if (features.empty()) {
        features = f;
        global = g;
      }
      ok = ok && f == features && g == global && !f.empty();
      ++runs;
    }
  }
  std::string tl;
  for (int t : threads) tl += (tl.empty() ? "" : ",") + std::to_string(t);
  report(11, "end-to-end determinism", ok,
         "runs=" + std::to_string(runs) + " threads={" + tl + "} features " +
             std::to_string(features.size()) + " bytes, " +
             (ok ? "bit-identical" : "DIFFER"));
  fs::remove_all(root);
}

}  // namespace

int main() {
  const auto t0 = Clock::now();
  const std::vector<std::function<void()>> criteria{
      sparse_dense_equivalence, permutation_equivariance, ra_reduces_to_sa,
      cost_formulas,            shift_round_trip,         window_locality,
      swa_linear_scaling,       ea_linearity,             quantization_totality,
      voxel_fidelity,           forward_determinism};
  for (const auto& c : criteria) {
    try {
      c();
    } catch (const std::exception& e) {
      std::printf("FAIL  criterion threw: %s\n", e.what());
      ++failures;
    }
  }
  std::printf("%d/%zu criteria passed in %.1fs\n",
              static_cast<int>(criteria.size()) - failures, criteria.size(), seconds_since(t0));
  return failures == 0 ? 0 : 1;
}
