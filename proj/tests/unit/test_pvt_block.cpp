#include <doctest.h>

#include <numeric>

#include "pvt/errors.hpp"
#include "pvt/pvt_block.hpp"
#include "pvt/rng.hpp"
#include "pvt/synthetic.hpp"

using namespace pvt;

namespace {

PvtConfig small_config() {
  PvtConfig cfg;
  cfg.resolution = 8;
  cfg.window = 2;
  cfg.block_widths = {8, 8, 16};
  cfg.lift_width = 32;
  cfg.ea_slots = 8;
  return cfg;
}

void kill_voxel_branch(SwaParams<double>& s) {
  const std::size_t d = s.dim();
  s.wq = s.wk = s.wv = Matrix(d, d);
  LayerNormParams<double> dead{std::vector<double>(d, 0), std::vector<double>(d, 0)};
  s.norm1 = s.norm2 = s.norm3 = s.norm4 = dead;
  s.mlp1 = s.mlp2 = MlpParams<double>::zeros(d, 2 * d);
}

std::uint64_t mat(std::uint64_t r, std::uint64_t c) { return r * c; }

}  // namespace

TEST_CASE("config validation names the offending values") {
  PvtConfig cfg;
  cfg.window = 5;
  try {
    cfg.validate();
    FAIL("expected ConfigError");
  } catch (const ConfigError& e) {
    const std::string msg = e.what();
    CHECK(msg.find("W=5") != std::string::npos);
    CHECK(msg.find("R=32") != std::string::npos);
  }
  cfg = PvtConfig{};
  cfg.heads = 3;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
  cfg = PvtConfig{};
  cfg.block_widths.clear();
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
  cfg = PvtConfig{};
  cfg.shift = 4;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
  CHECK_NOTHROW(PvtConfig{}.validate());
  CHECK(PvtConfig{}.effective_shift() == 2);
}

TEST_CASE("dead voxel branch leaves the point branch plus the resampled input") {
  const PvtConfig cfg = small_config();
  const PointCloud pc = random_cloud(100, 1);
  const Matrix f = random_matrix<double>(100, 8, 1.0, 2);
  auto params = init_params(cfg, 0, 3);
  auto block = params.blocks[0];
  block.point = random_point_params<double>(8, 16, 8, PointAttentionMode::Relative, 4);
  kill_voxel_branch(block.swa);
  const Matrix passthrough = devoxelize(voxelize(pc, f, cfg.resolution), pc);
  const Matrix want = add(passthrough, point_branch_forward(f, pc, block.point));
  CHECK(pvt_block_forward(pc, f, cfg, block) == want);

  block.point.mlp = MlpParams<double>::zeros(8, 16);
  CHECK(pvt_block_forward(pc, f, cfg, block) == add(passthrough, f));
}

TEST_CASE("fusion is commutative") {
  const Matrix a = random_matrix<double>(30, 5, 1.0, 5);
  const Matrix b = random_matrix<double>(30, 5, 1.0, 6);
  CHECK(add(a, b) == add(b, a));
}

TEST_CASE("encoder shapes") {
  const PvtConfig cfg = small_config();
  const PointCloud pc = random_cloud(64, 7);
  const auto params = init_params(cfg, 0, 8);
  BlockTimings tm;
  const auto out = encoder_forward(pc, cfg, params, &tm);
  CHECK(concat_width(cfg) == 8 + 8 + 16 + 32);
  CHECK(out.per_point.rows() == 64);
  CHECK(out.per_point.cols() == concat_width(cfg));
  CHECK(out.global.size() == concat_width(cfg));
  CHECK(tm.total > 0);
  const Matrix rep = out.repeated_global();
  CHECK(rep.rows() == 64);
  for (std::size_t i = 0; i < 64; ++i)
    for (std::size_t c = 0; c < rep.cols(); ++c) CHECK(rep(i, c) == out.global[c]);
}

TEST_CASE("single-point encoder pools to that point") {
  const PvtConfig cfg = small_config();
  const PointCloud pc{{{0.2, -0.1, 0.3}}, std::nullopt};
  const auto out = encoder_forward(pc, cfg, init_params(cfg, 0, 9));
  for (std::size_t c = 0; c < out.global.size(); ++c) CHECK(out.global[c] == out.per_point(0, c));
}

TEST_CASE("encoder uses input features when present") {
  const PvtConfig cfg = small_config();
  PointCloud pc = random_cloud(50, 10);
  pc.features = random_matrix<double>(50, 3, 1.0, 11);
  const auto params = init_params(cfg, 3, 12);
  CHECK(params.embed_w.rows() == 6);
  CHECK(encoder_forward(pc, cfg, params).per_point.rows() == 50);
  CHECK_THROWS_AS(encoder_forward(random_cloud(50, 10), cfg, params), ShapeError);
}

TEST_CASE("pooled global vector is identical under permutation") {
  for (auto mode : {PointAttentionMode::Relative, PointAttentionMode::External}) {
    PvtConfig cfg = small_config();
    cfg.mode = mode;
    cfg.heads = 2;
    const PointCloud pc = random_cloud(150, 13);
    std::vector<std::size_t> perm(150);
    std::iota(perm.begin(), perm.end(), std::size_t{0});
    Rng(14).shuffle(perm);
    const auto params = init_params(cfg, 0, 15);
    const auto a = encoder_forward(pc, cfg, params);
    const auto b = encoder_forward(pc.permuted(perm), cfg, params);
    CHECK(a.global == b.global);
    double worst = 0;
    for (std::size_t i = 0; i < perm.size(); ++i)
      for (std::size_t c = 0; c < a.per_point.cols(); ++c)
        worst = std::max(worst, std::abs(b.per_point(i, c) - a.per_point(perm[i], c)));
    CHECK(worst <= 1e-9);
  }
}

TEST_CASE("float precision tracks double") {
  const PvtConfig cfg = small_config();
  const PointCloud pc = random_cloud(80, 16);
  const auto params = init_params(cfg, 0, 17);
  const auto d = encoder_forward(pc, cfg, params);
  const auto f = encoder_forward(pc, cfg, params.cast<float>());
  CHECK(max_abs_diff(f.per_point.cast<double>(), d.per_point) <= 1e-3);
}

TEST_CASE("relative mode falls back to external attention above the cap") {
  PvtConfig cfg;
  cfg.ra_cap = 100;
  CHECK(resolve_mode(cfg, 100, false) == PointAttentionMode::Relative);
  CHECK(resolve_mode(cfg, 101, false) == PointAttentionMode::External);
  cfg.auto_external = false;
  CHECK(resolve_mode(cfg, 101, false) == PointAttentionMode::Relative);
  cfg.mode = PointAttentionMode::External;
  CHECK(resolve_mode(cfg, 5, false) == PointAttentionMode::External);

  PvtConfig small = small_config();
  small.ra_cap = 20;
  small.auto_external = false;
  CHECK_THROWS_AS(encoder_forward(random_cloud(21, 1), small, init_params(small, 0, 1)),
                  CapacityError);
  small.auto_external = true;
  CHECK_NOTHROW(encoder_forward(random_cloud(21, 1), small, init_params(small, 0, 1)));
}

TEST_CASE("init_params is seeded") {
  const PvtConfig cfg = small_config();
  const auto a = init_params(cfg, 0, 1);
  const auto b = init_params(cfg, 0, 1);
  const auto c = init_params(cfg, 0, 2);
  CHECK(a.head_w == b.head_w);
  CHECK_FALSE(a.head_w == c.head_w);
}

TEST_CASE("parameter count against a shape ledger") {
  PvtParams<double> single;
  single.embed_w = Matrix(7, 7);
  CHECK(count_parameters(single) == 49);

  PvtParams<double> no_blocks;
  no_blocks.embed_w = Matrix(3, 16);
  no_blocks.embed_b.assign(16, 0);
  no_blocks.lift_w = Matrix(16, 32);
  no_blocks.lift_b.assign(32, 0);
  no_blocks.head_w = Matrix(48, 48);
  no_blocks.head_b.assign(48, 0);
  CHECK(count_parameters(no_blocks) == 3 * 16 + 16 + 16 * 32 + 32 + 48 * 48 + 48);

  // Default config, xyz input only: every tensor listed by shape.
  const std::uint64_t l = 16, s = 64;
  std::vector<std::uint64_t> ledger{mat(3, 64), 64};
  std::uint64_t incoming = 64;
  for (std::uint64_t d : {64, 64, 128}) {
    const std::uint64_t h = 2 * d;
    if (d != incoming) ledger.push_back(mat(incoming, d));
    for (int i = 0; i < 3; ++i) ledger.push_back(mat(d, d));           // SWA q, k, v
    for (int i = 0; i < 8; ++i) ledger.push_back(d);                   // 4 norms
    for (int i = 0; i < 3; ++i) {                                      // 2 SWA MLPs + point MLP
      ledger.push_back(mat(d, h));
      ledger.push_back(h);
      ledger.push_back(mat(h, d));
      ledger.push_back(d);
    }
    for (int i = 0; i < 3; ++i) ledger.push_back(mat(d, d));           // point q, k, v
    for (int i = 0; i < 3; ++i) ledger.push_back(l);                   // RPR tables
    ledger.push_back(mat(s, d));                                       // m_k
    ledger.push_back(mat(s, d));                                       // m_v
    incoming = d;
  }
  ledger.push_back(mat(128, 1024));
  ledger.push_back(1024);
  ledger.push_back(mat(1280, 1280));
  ledger.push_back(1280);
  const std::uint64_t want = std::accumulate(ledger.begin(), ledger.end(), std::uint64_t{0});
  CHECK(want == 2259856);
  CHECK(count_parameters(init_params(PvtConfig{}, 0, 1)) == want);
  CHECK(count_parameters(init_params(PvtConfig{}, 0, 1).cast<float>()) == want);
}
