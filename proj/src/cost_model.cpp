#include "pvt/cost_model.hpp"

#include <algorithm>
#include <sstream>

#include <json.hpp>

namespace pvt {

LayerCosts layer_costs(const CostInputs& in) {
  const std::uint64_t cells = in.resolution * in.resolution * in.resolution;
  const std::uint64_t v = in.window * in.window * in.window;
  const std::uint64_t d = in.dim;
  LayerCosts c;
  c.conv3d = in.kernel * cells * d * d;
  c.window_attention = v * cells * d;
  c.swa = in.occupancy * in.occupancy * static_cast<double>(v) *
          static_cast<double>(cells) * static_cast<double>(d);
  c.conv1d = in.kernel * in.points * d * d;
  c.relative_attention = in.points * in.points * d;
  c.external_attention = in.points * d;
  c.global_sa_exact = global_sa_count(in.resolution, d);
  c.window_sa_exact = window_sa_count(in.resolution, in.window, d);
  return c;
}

double MeasuredTimings::structuring_fraction() const {
  if (!(total > 0)) return 0.0;
  return std::clamp((voxelize + rulebook + devoxelize) / total, 0.0, 1.0);
}

MeasuredTimings MeasuredTimings::from(const BlockTimings& t) {
  MeasuredTimings m;
  m.voxelize = t.voxel.voxelize;
  m.shift = t.voxel.shift;
  m.rulebook = t.voxel.rulebook;
  m.attention = t.voxel.attention;
  m.devoxelize = t.voxel.devoxelize;
  m.point_branch = t.point_branch;
  m.total = t.total;
  return m;
}

CostReport complexity_report(const PvtConfig& cfg, const OccupancyStats& stats,
                             std::uint64_t points, std::uint64_t dim,
                             std::uint64_t parameter_count,
                             const MeasuredTimings& timings) {
  CostReport r;
  r.inputs.kernel = static_cast<std::uint64_t>(cfg.conv_kernel);
  r.inputs.resolution = static_cast<std::uint64_t>(cfg.resolution);
  r.inputs.window = static_cast<std::uint64_t>(cfg.window);
  r.inputs.occupancy = stats.r_global;
  r.inputs.points = points;
  r.inputs.dim = dim ? dim : cfg.block_widths.front();
  r.inputs.ea_slots = cfg.ea_slots;
  r.layers = layer_costs(r.inputs);
  r.swa_sparse = swa_cost(cfg.resolution, cfg.window, r.inputs.dim,
                          stats.count_per_window);
  r.ea_counted_ops = external_attention_ops(points, r.inputs.dim, cfg.ea_slots);
  r.parameter_count = parameter_count;
  r.timings = timings;
  r.structuring_fraction = timings.structuring_fraction();
  return r;
}

std::string CostReport::to_json() const {
  using nlohmann::ordered_json;
  ordered_json j;
  j["schema_version"] = kSchemaVersion;
  j["inputs"] = {{"k", inputs.kernel},      {"R", inputs.resolution},
                 {"W", inputs.window},      {"v", inputs.window * inputs.window * inputs.window},
                 {"r", inputs.occupancy},   {"N", inputs.points},
                 {"D", inputs.dim},         {"S", inputs.ea_slots}};
  j["order_forms"] = {{"conv3d", layers.conv3d},
                      {"window_attention", layers.window_attention},
                      {"swa", layers.swa},
                      {"conv1d", layers.conv1d},
                      {"relative_attention", layers.relative_attention},
                      {"external_attention", layers.external_attention}};
  j["exact"] = {{"global_sa", layers.global_sa_exact},
                {"window_sa", layers.window_sa_exact},
                {"swa_sparse_projection", swa_sparse.projection},
                {"swa_sparse_attention", swa_sparse.attention},
                {"swa_sparse_total", swa_sparse.sparse_total},
                {"external_attention_ops", ea_counted_ops}};
  j["parameter_count"] = parameter_count;
  j["timings_s"] = {{"voxelize", timings.voxelize},   {"shift", timings.shift},
                    {"rulebook", timings.rulebook},   {"attention", timings.attention},
                    {"devoxelize", timings.devoxelize},
                    {"point_branch", timings.point_branch},
                    {"total", timings.total}};
  j["structuring_fraction"] = structuring_fraction;
  return j.dump(2);
}

std::string CostReport::to_csv() const {
  std::ostringstream os;
  os.precision(17);
  os << "metric,value\n";
  const auto row = [&](const char* k, auto v) { os << k << ',' << v << '\n'; };
  row("schema_version", kSchemaVersion);
  row("k", inputs.kernel);
  row("R", inputs.resolution);
  row("W", inputs.window);
  row("r", inputs.occupancy);
  row("N", inputs.points);
  row("D", inputs.dim);
  row("S", inputs.ea_slots);
  row("conv3d", layers.conv3d);
  row("window_attention", layers.window_attention);
  row("swa", layers.swa);
  row("conv1d", layers.conv1d);
  row("relative_attention", layers.relative_attention);
  row("external_attention", layers.external_attention);
  row("global_sa_exact", layers.global_sa_exact);
  row("window_sa_exact", layers.window_sa_exact);
  row("swa_sparse_total", swa_sparse.sparse_total);
  row("external_attention_ops", ea_counted_ops);
  row("parameter_count", parameter_count);
  row("time_voxelize_s", timings.voxelize);
  row("time_rulebook_s", timings.rulebook);
  row("time_attention_s", timings.attention);
  row("time_devoxelize_s", timings.devoxelize);
  row("time_point_branch_s", timings.point_branch);
  row("time_total_s", timings.total);
  row("structuring_fraction", structuring_fraction);
  return os.str();
}

}  // namespace pvt
