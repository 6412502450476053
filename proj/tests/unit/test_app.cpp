#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>

#include <json.hpp>

#include "pvt/app.hpp"
#include "pvt/errors.hpp"

using namespace pvt;
using namespace pvt::app;
namespace fs = std::filesystem;

TEST_CASE("config text parsing") {
  const PvtConfig cfg = parse_config_text(
      "# model\nR = 16\nwindow=2\nmode = external\nblock_widths = 8, 16\n\nprecision=f32 # fast\n");
  CHECK(cfg.resolution == 16);
  CHECK(cfg.window == 2);
  CHECK(cfg.mode == PointAttentionMode::External);
  CHECK(cfg.block_widths == std::vector<std::size_t>{8, 16});
  CHECK(cfg.precision == Precision::F32);

  try {
    parse_config_text("R=8\nbogus=1\n");
    FAIL("expected ConfigError");
  } catch (const ConfigError& e) {
    CHECK(std::string(e.what()).find("line 2") != std::string::npos);
  }
  CHECK_THROWS_AS(parse_config_text("R=eight\n"), ConfigError);
  CHECK_THROWS_AS(parse_config_text("R 8\n"), ConfigError);
  CHECK_THROWS_AS(load_config_file("/nonexistent.cfg"), IoError);
}

TEST_CASE("overrides and json echo") {
  PvtConfig cfg;
  apply_override(cfg, "W=8");
  apply_override(cfg, "num_blocks=2");
  CHECK(cfg.window == 8);
  CHECK(cfg.block_widths.size() == 2);
  const auto j = nlohmann::json::parse(config_to_json(cfg));
  CHECK(j["window"] == 8);
  CHECK(j["shift"] == 4);
  CHECK(j["mode"] == "relative");
}

TEST_CASE("forward writes declared shapes") {
  ForwardOptions opt;
  opt.points = 200;
  opt.seed = 4;
  opt.threads = 2;
  opt.config = parse_config_text("R=8\nW=4\nblock_widths=8,16\nlift_width=16\n");
  opt.out_dir = fs::temp_directory_path() / "pvt_unit_forward";
  const ForwardResult r = run_forward(opt);
  CHECK(r.points == 200);
  CHECK(r.feature_dim == 8 + 16 + 16);
  const PointCloud out = load_point_cloud(r.features_path, CloudFormat::Binary);
  CHECK(out.size() == 200);
  CHECK(out.feature_dim() == 40);

  std::ifstream g(r.global_path);
  const auto gj = nlohmann::json::parse(g);
  CHECK(gj["schema_version"] == 1);
  CHECK(gj["values"].size() == 40);

  std::ifstream m(r.manifest_path);
  const auto mj = nlohmann::json::parse(m);
  CHECK(mj["seed"] == 4);
  CHECK(mj["threads"] == 2);
  CHECK(mj["config"]["resolution"] == 8);
  CHECK(mj["cost_report"]["schema_version"] == 1);
  CHECK(mj["outputs"]["features"]["cols"] == 40);
}

TEST_CASE("verify suites") {
  VerifyOptions opt;
  opt.trials = 5;
  for (const auto& r : run_verify(opt)) {
    CAPTURE(r.suite);
    CAPTURE(r.name);
    CHECK(r.passed);
  }
  opt.suites = {"roundtrip"};
  for (const auto& r : run_verify(opt)) CHECK(r.max_error == 0.0);

  opt.suites = {"swa-oracle"};
  opt.inject_fault = true;
  bool any_failed = false;
  for (const auto& r : run_verify(opt)) any_failed = any_failed || !r.passed;
  CHECK(any_failed);

  opt.suites = {"nope"};
  CHECK_THROWS_AS(run_verify(opt), ConfigError);
}

TEST_CASE("bench sweeps") {
  BenchOptions opt;
  opt.config = parse_config_text("W=4\nmode=external\nblock_widths=8\n");
  opt.repetitions = 1;
  CHECK_THROWS_AS(run_bench(opt), ConfigError);

  opt.sweep = Sweep::Points;
  opt.values = {512, 1024, 2048};
  const BenchResult p = run_bench(opt);
  REQUIRE(p.rows.size() == 3);
  CHECK(p.rows[1].ea_ops == 2 * p.rows[0].ea_ops);
  CHECK(p.rows[2].ea_ops == 2 * p.rows[1].ea_ops);

  opt.sweep = Sweep::Resolution;
  opt.values = {8, 16};
  const BenchResult r = run_bench(opt);
  CHECK(r.rows[1].swa_sparse_ops == 8 * r.rows[0].swa_sparse_ops);
  const std::string csv = bench_csv(opt, r);
  CHECK(csv.rfind("sweep,value,R,W,D,N,nonempty,", 0) == 0);
  CHECK(std::count(csv.begin(), csv.end(), '\n') == 3);

  opt.values = {10};
  CHECK_THROWS_AS(run_bench(opt), ConfigError);
  CHECK_THROWS_AS(parse_sweep("depth"), ConfigError);
}

TEST_CASE("log-log slope of a power law") {
  CHECK(std::abs(loglog_slope({1, 2, 4, 8}, {3, 12, 48, 192}) - 2.0) <= 1e-12);
  CHECK_THROWS_AS(loglog_slope({1}, {1}), ConfigError);
}

TEST_CASE("rule book dump") {
  PvtConfig cfg;
  cfg.resolution = 4;
  cfg.window = 2;
  PointCloud pc{{{-0.9, -0.9, -0.9}, {0.9, 0.9, 0.9}}, std::nullopt};
  const auto j = nlohmann::json::parse(dump_rulebook_json(pc, cfg));
  CHECK(j["windows"]["0"] == std::vector<int>{0});
  CHECK(j["windows"]["7"] == std::vector<int>{63});
  const auto g = nlohmann::json::parse(dump_grid_json(pc, cfg));
  CHECK(g["nonempty"] == 2);
}
