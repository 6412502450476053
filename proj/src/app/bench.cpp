#include <algorithm>
#include <chrono>
#include <cmath>
#include <sstream>

#include "pvt/app.hpp"
#include "pvt/errors.hpp"
#include "pvt/point_branch.hpp"
#include "pvt/sparse_window_attention.hpp"
#include "pvt/synthetic.hpp"

namespace pvt::app {

namespace {

using Clock = std::chrono::steady_clock;

double median(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

template <typename F>
double time_ms(F&& f) {
  const auto t0 = Clock::now();
  f();
  return std::chrono::duration<double, std::milli>(Clock::now() - t0).count();
}

struct StageSamples {
  std::vector<double> voxelize, rulebook, swa, devoxelize, point;
};

// Times every stage of one block on (pc, f): warmup run discarded, then
// `reps` timed runs.
BenchRow measure(const PointCloud& pc, const Matrix& f, const PvtConfig& cfg,
                 const SwaParams<double>& swa, const PointBranchParams<double>& point,
                 int reps) {
  WindowConfig wc = cfg.window_config();
  wc.shift = {0, 0, 0};
  StageSamples s;
  std::size_t nonempty = 0;
  std::vector<std::uint32_t> per_window;
  for (int rep = -1; rep < reps; ++rep) {
    SparseVoxelGrid<double> grid;
    RuleBook rb;
    SparseVoxelGrid<double> attended;
    const double tv = time_ms([&] { grid = voxelize(pc, f, cfg.resolution); });
    const double tr = time_ms([&] { rb = build_rule_book(grid, wc); });
    const double ts = time_ms([&] { attended = swa_forward(grid, rb, swa); });
    Matrix back;
    const double td = time_ms([&] { back = devoxelize(attended, pc, cfg.devoxelize); });
    Matrix global;
    const double tp = time_ms([&] { global = point_branch_forward(f, pc, point); });
    if (rep < 0) {
      nonempty = grid.size();
      per_window = occupancy_stats(grid, cfg.window).count_per_window;
      continue;
    }
    s.voxelize.push_back(tv);
    s.rulebook.push_back(tr);
    s.swa.push_back(ts);
    s.devoxelize.push_back(td);
    s.point.push_back(tp);
  }
  BenchRow row;
  row.resolution = cfg.resolution;
  row.window = cfg.window;
  row.dim = f.cols();
  row.points = pc.size();
  row.nonempty = nonempty;
  row.voxelize_ms = median(s.voxelize);
  row.rulebook_ms = median(s.rulebook);
  row.swa_ms = median(s.swa);
  row.devoxelize_ms = median(s.devoxelize);
  row.point_ms = median(s.point);
  row.total_ms = row.voxelize_ms + row.rulebook_ms + row.swa_ms + row.devoxelize_ms +
                 row.point_ms;
  row.structuring_fraction =
      row.total_ms > 0
          ? std::clamp((row.voxelize_ms + row.rulebook_ms + row.devoxelize_ms) / row.total_ms,
                       0.0, 1.0)
          : 0.0;
  const SwaCost cost = swa_cost(cfg.resolution, cfg.window, row.dim, per_window);
  row.swa_sparse_ops = cost.sparse_total;
  row.window_sa_ops = cost.dense_window;
  row.global_sa_ops = cost.global;
  row.ea_ops = external_attention_ops(row.points, row.dim, point.ea.slots());
  row.ra_ops = static_cast<std::uint64_t>(row.points) * row.points * row.dim;
  return row;
}

}  // namespace

Sweep parse_sweep(std::string_view name) {
  if (name == "resolution") return Sweep::Resolution;
  if (name == "points") return Sweep::Points;
  if (name == "occupancy") return Sweep::Occupancy;
  throw ConfigError("unknown sweep '" + std::string(name) +
                    "' (expected resolution|points|occupancy)");
}

double loglog_slope(const std::vector<double>& x, const std::vector<double>& y) {
  if (x.size() != y.size() || x.size() < 2) {
    throw ConfigError("loglog_slope needs at least two points");
  }
  double mx = 0, my = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    mx += std::log(x[i]);
    my += std::log(y[i]);
  }
  mx /= x.size();
  my /= y.size();
  double sxy = 0, sxx = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double dx = std::log(x[i]) - mx;
    sxy += dx * (std::log(y[i]) - my);
    sxx += dx * dx;
  }
  return sxy / sxx;
}

BenchResult run_bench(const BenchOptions& opt) {
  if (opt.values.empty()) throw ConfigError("bench sweep range is empty");
  if (opt.repetitions < 1) throw ConfigError("--reps must be >= 1");
  const std::size_t dim = opt.dim ? opt.dim : opt.config.block_widths.front();
  const auto swa = random_swa_params<double>(dim, opt.config.heads, opt.seed + 11,
                                             1.0 / std::sqrt(static_cast<double>(dim)));
  BenchResult result;
  std::vector<double> xs, ys;
  for (double value : opt.values) {
    PvtConfig cfg = opt.config;
    PointCloud pc;
    switch (opt.sweep) {
      case Sweep::Resolution:
        cfg.resolution = static_cast<int>(value);
        cfg.validate();
        pc = synthetic_occupancy_cloud(cfg.resolution, cfg.window, opt.occupancy, opt.seed);
        break;
      case Sweep::Occupancy:
        if (!(value > 0 && value <= 1)) throw ConfigError("occupancy must be in (0, 1]");
        cfg.validate();
        pc = synthetic_occupancy_cloud(cfg.resolution, cfg.window, value, opt.seed);
        break;
      case Sweep::Points:
        if (!(value >= 1)) throw ConfigError("point count must be >= 1");
        cfg.validate();
        pc = normalize_unit_sphere(random_cloud(static_cast<std::size_t>(value), opt.seed));
        break;
    }
    const PointAttentionMode mode = resolve_mode(cfg, pc.size(), false);
    const Matrix f = random_matrix<double>(pc.size(), dim, 1.0, opt.seed + 7);
    const auto point = random_point_params<double>(dim, cfg.rpr_bins, cfg.ea_slots, mode,
                                                   opt.seed + 13);
    BenchRow row = measure(pc, f, cfg, swa, point, opt.repetitions);
    row.value = value;
    switch (opt.sweep) {
      case Sweep::Resolution:
        xs.push_back(std::pow(static_cast<double>(cfg.resolution), 3));
        ys.push_back(row.swa_ms);
        break;
      case Sweep::Points:
        xs.push_back(static_cast<double>(row.points));
        ys.push_back(row.point_ms);
        break;
      case Sweep::Occupancy:
        xs.push_back(static_cast<double>(row.nonempty));
        ys.push_back(row.swa_ms);
        break;
    }
    result.rows.push_back(row);
  }
  result.loglog_slope = xs.size() >= 2 ? loglog_slope(xs, ys) : 0.0;
  return result;
}

std::string bench_csv(const BenchOptions& opt, const BenchResult& r) {
  const char* sweep = opt.sweep == Sweep::Resolution ? "resolution"
                      : opt.sweep == Sweep::Points   ? "points"
                                                     : "occupancy";
  std::ostringstream os;
  os.precision(10);
  os << "sweep,value,R,W,D,N,nonempty,voxelize_ms,rulebook_ms,swa_ms,devoxelize_ms,"
        "point_ms,total_ms,structuring_fraction,swa_sparse_ops,window_sa_ops,"
        "global_sa_ops,ea_ops,ra_ops\n";
  for (const auto& row : r.rows) {
    os << sweep << ',' << row.value << ',' << row.resolution << ',' << row.window << ','
       << row.dim << ',' << row.points << ',' << row.nonempty << ',' << row.voxelize_ms
       << ',' << row.rulebook_ms << ',' << row.swa_ms << ',' << row.devoxelize_ms << ','
       << row.point_ms << ',' << row.total_ms << ',' << row.structuring_fraction << ','
       << row.swa_sparse_ops << ',' << row.window_sa_ops << ',' << row.global_sa_ops << ','
       << row.ea_ops << ',' << row.ra_ops << '\n';
  }
  return os.str();
}

}  // namespace pvt::app
