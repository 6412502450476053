#include <doctest.h>

#include <json.hpp>

#include "pvt/cost_model.hpp"
#include "pvt/rng.hpp"
#include "pvt/synthetic.hpp"

using namespace pvt;

TEST_CASE("closed-form attention counts") {
  CostInputs in;
  in.resolution = 4;
  in.window = 2;
  in.dim = 8;
  const LayerCosts c = layer_costs(in);
  CHECK(c.global_sa_exact == 81920);
  CHECK(c.window_sa_exact == 24576);
}

TEST_CASE("order-form rows") {
  CostInputs in;
  in.kernel = 3;
  in.resolution = 32;
  in.window = 4;
  in.occupancy = 0.25;
  in.points = 1024;
  in.dim = 64;
  const LayerCosts c = layer_costs(in);
  CHECK(c.relative_attention == 67108864);
  CHECK(c.external_attention == 65536);
  CHECK(c.relative_attention / c.external_attention == 1024);
  CHECK(c.conv3d == 3ull * 32768 * 64 * 64);
  CHECK(c.conv1d == 3ull * 1024 * 64 * 64);
  CHECK(c.window_attention == 64ull * 32768 * 64);
  CHECK(c.swa == 0.0625 * 64 * 32768 * 64);
}

TEST_CASE("window count stays below the global count whenever W < R") {
  Rng rng(1);
  for (int t = 0; t < 500; ++t) {
    const std::uint64_t r = std::uint64_t{1} << (1 + rng.below(6));
    const std::uint64_t w = std::uint64_t{1} << rng.below(6);
    if (w >= r) continue;
    CostInputs in;
    in.resolution = r;
    in.window = w;
    in.dim = 1 + rng.below(256);
    const LayerCosts c = layer_costs(in);
    CHECK(c.window_sa_exact < c.global_sa_exact);
  }
}

TEST_CASE("complexity report from a grid") {
  PvtConfig cfg;
  cfg.resolution = 4;
  cfg.window = 2;
  cfg.block_widths = {8};
  const auto grid = random_sparse_grid<double>(4, 1, 0.3, 2);
  const auto stats = occupancy_stats(grid, 2);
  MeasuredTimings tm;
  tm.voxelize = 1;
  tm.rulebook = 1;
  tm.devoxelize = 2;
  tm.total = 8;
  const CostReport r = complexity_report(cfg, stats, 100, 0, 1234, tm);
  CHECK(r.inputs.dim == 8);
  CHECK(r.layers.global_sa_exact == 81920);
  CHECK(r.layers.window_sa_exact == 24576);
  CHECK(r.swa_sparse.sparse_total == swa_cost(4, 2, 8, stats.count_per_window).sparse_total);
  CHECK(r.swa_sparse.sparse_total <= r.layers.window_sa_exact);
  CHECK(r.ea_counted_ops == external_attention_ops(100, 8, cfg.ea_slots));
  CHECK(r.structuring_fraction == 0.5);

  const auto j = nlohmann::json::parse(r.to_json());
  CHECK(j["schema_version"] == CostReport::kSchemaVersion);
  CHECK(j["exact"]["global_sa"] == 81920);
  CHECK(j["parameter_count"] == 1234);

  const std::string csv = r.to_csv();
  CHECK(csv.rfind("metric,value\n", 0) == 0);
  CHECK(csv.find("window_sa_exact,24576\n") != std::string::npos);
}

TEST_CASE("structuring fraction is clamped") {
  MeasuredTimings t;
  CHECK(t.structuring_fraction() == 0.0);
  t.voxelize = 5;
  t.total = 1;
  CHECK(t.structuring_fraction() == 1.0);
}
