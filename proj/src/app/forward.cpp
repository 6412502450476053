#include <chrono>
#include <fstream>

#include <json.hpp>

#include "pvt/app.hpp"
#include "pvt/cost_model.hpp"
#include "pvt/errors.hpp"
#include "pvt/parallel.hpp"
#include "pvt/sparse_window_attention.hpp"

namespace pvt::app {

namespace {

// Parameters draw from a stream separate from the random input cloud.
constexpr std::uint64_t kParamSeedSalt = 0x9e3779b97f4a7c15ULL;

void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path.string());
  out << text << '\n';
  if (!out) throw IoError("write failed: " + path.string());
}

template <typename T>
EncoderOutput<double> forward_as(const PointCloud& pc, const PvtConfig& cfg,
                                 const PvtParams<double>& params, BlockTimings& tm) {
  if constexpr (std::is_same_v<T, double>) {
    return encoder_forward(pc, cfg, params, &tm);
  } else {
    const auto out = encoder_forward(pc, cfg, params.template cast<T>(), &tm);
    return {out.per_point.template cast<double>(),
            std::vector<double>(out.global.begin(), out.global.end())};
  }
}

OccupancyStats cloud_occupancy(const PointCloud& pc, const PvtConfig& cfg) {
  const auto grid = voxelize(pc, Matrix(pc.size(), 1), cfg.resolution);
  return occupancy_stats(grid, cfg.window);
}

}  // namespace

PointCloud prepare_cloud(const std::optional<std::filesystem::path>& input,
                         std::optional<CloudFormat> format, std::size_t points,
                         std::uint64_t seed) {
  if (input) {
    const CloudFormat f = format.value_or(format_from_extension(*input));
    return normalize_unit_sphere(load_point_cloud(*input, f));
  }
  if (points == 0) throw ConfigError("--points must be >= 1");
  return normalize_unit_sphere(random_cloud(points, seed));
}

ForwardResult run_forward(const ForwardOptions& opt) {
  const PvtConfig& cfg = opt.config;
  cfg.validate();
  const int threads = opt.threads > 0 ? opt.threads : available_cores();
  ThreadCountScope scope(threads);

  const auto t0 = std::chrono::steady_clock::now();
  const PointCloud pc = prepare_cloud(opt.input, opt.format, opt.points, opt.seed);
  const PvtParams<double> params =
      init_params(cfg, pc.feature_dim(), opt.seed ^ kParamSeedSalt);
  BlockTimings tm;
  const EncoderOutput<double> out =
      cfg.precision == Precision::F64 ? forward_as<double>(pc, cfg, params, tm)
                                      : forward_as<float>(pc, cfg, params, tm);
  const double wall = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();

  std::filesystem::create_directories(opt.out_dir);
  ForwardResult r;
  r.points = pc.size();
  r.feature_dim = out.per_point.cols();
  r.features_path = opt.out_dir / "features.bin";
  r.global_path = opt.out_dir / "global.json";
  r.manifest_path = opt.out_dir / "manifest.json";

  save_point_cloud(r.features_path, PointCloud{pc.points, out.per_point},
                   CloudFormat::Binary);

  nlohmann::ordered_json g;
  g["schema_version"] = 1;
  g["dim"] = out.global.size();
  g["values"] = out.global;
  write_text(r.global_path, g.dump());

  const CostReport cost = complexity_report(cfg, cloud_occupancy(pc, cfg), pc.size(), 0,
                                            count_parameters(params),
                                            MeasuredTimings::from(tm));
  nlohmann::ordered_json m;
  m["schema_version"] = 1;
  m["command"] = "forward";
  m["config"] = nlohmann::ordered_json::parse(config_to_json(cfg));
  m["input"] = opt.input ? opt.input->string() : std::string("random");
  m["seed"] = opt.seed;
  m["precision"] = cfg.precision == Precision::F64 ? "f64" : "f32";
  m["threads"] = threads;
  m["points"] = pc.size();
  m["timings_s"] = {{"voxelize", tm.voxel.voxelize},
                    {"shift", tm.voxel.shift},
                    {"rulebook", tm.voxel.rulebook},
                    {"voxel_attention", tm.voxel.attention},
                    {"devoxelize", tm.voxel.devoxelize},
                    {"point_branch", tm.point_branch},
                    {"blocks_total", tm.total},
                    {"wall", wall}};
  m["outputs"] = {
      {"features", {{"path", r.features_path.string()}, {"rows", r.points}, {"cols", r.feature_dim}}},
      {"global", {{"path", r.global_path.string()}, {"dim", out.global.size()}}}};
  m["cost_report"] = nlohmann::ordered_json::parse(cost.to_json());
  write_text(r.manifest_path, m.dump(2));
  return r;
}

std::string dump_rulebook_json(const PointCloud& pc, const PvtConfig& cfg) {
  cfg.validate();
  const auto grid = voxelize(pc, Matrix(pc.size(), 1), cfg.resolution);
  WindowConfig wc = cfg.window_config();
  wc.shift = {0, 0, 0};
  const RuleBook rb = build_rule_book(grid, wc);
  nlohmann::ordered_json j;
  j["schema_version"] = 1;
  j["resolution"] = cfg.resolution;
  j["window"] = cfg.window;
  nlohmann::ordered_json windows = nlohmann::ordered_json::object();
  for (const auto& w : rb.windows) {
    std::vector<std::int64_t> keys;
    keys.reserve(w.members.size());
    for (std::size_t v : w.members) keys.push_back(rb.hashed_key[v]);
    windows[std::to_string(w.id)] = keys;
  }
  j["windows"] = std::move(windows);
  return j.dump(2);
}

std::string dump_grid_json(const PointCloud& pc, const PvtConfig& cfg) {
  cfg.validate();
  const Matrix f = pc.features ? *pc.features : Matrix(pc.size(), 0);
  const auto grid = voxelize(pc, f, cfg.resolution);
  const auto stats = occupancy_stats(grid, cfg.window);
  nlohmann::ordered_json j;
  j["schema_version"] = 1;
  j["resolution"] = grid.resolution;
  j["nonempty"] = grid.size();
  j["r_global"] = stats.r_global;
  nlohmann::ordered_json voxels = nlohmann::ordered_json::array();
  for (std::size_t v = 0; v < grid.size(); ++v) {
    const auto& c = grid.coords[v];
    const auto row = grid.features.row(v);
    voxels.push_back({{"coord", {c.i, c.j, c.k}},
                      {"key", linear_key(c, grid.resolution)},
                      {"count", grid.point_count[v]},
                      {"feature", std::vector<double>(row.begin(), row.end())}});
  }
  j["voxels"] = std::move(voxels);
  return j.dump(2);
}

}  // namespace pvt::app
