#pragma once

#include <cstdint>
#include <string>

#include "pvt/pvt_block.hpp"
#include "pvt/voxel_grid.hpp"

namespace pvt {

struct CostInputs {
  std::uint64_t kernel = 3;      // k
  std::uint64_t resolution = 0;  // R
  std::uint64_t window = 0;      // W, v = W^3
  double occupancy = 0;          // r
  std::uint64_t points = 0;      // N
  std::uint64_t dim = 0;         // D
  std::uint64_t ea_slots = 0;    // S
};

// Per-layer cost in the order-notation forms (constant 1), plus the exact
// two-term counts for global and window self-attention.
struct LayerCosts {
  std::uint64_t conv3d = 0;            // k R^3 D^2
  std::uint64_t window_attention = 0;  // v R^3 D
  double swa = 0;                      // r^2 v R^3 D
  std::uint64_t conv1d = 0;            // k N D^2
  std::uint64_t relative_attention = 0;  // N^2 D
  std::uint64_t external_attention = 0;  // N D
  std::uint64_t global_sa_exact = 0;     // 4 R^3 D^2 + 2 (R^3)^2 D
  std::uint64_t window_sa_exact = 0;     // 4 R^3 D^2 + 2 W^3 R^3 D
};

LayerCosts layer_costs(const CostInputs& in);

struct MeasuredTimings {
  double voxelize = 0;
  double shift = 0;
  double rulebook = 0;
  double attention = 0;
  double devoxelize = 0;
  double point_branch = 0;
  double total = 0;

  // (voxelize + rulebook + devoxelize) / total, clamped to [0, 1].
  double structuring_fraction() const;
  static MeasuredTimings from(const BlockTimings& t);
};

struct CostReport {
  static constexpr int kSchemaVersion = 1;
  CostInputs inputs;
  LayerCosts layers;
  SwaCost swa_sparse;                  // counted over the actual grid
  std::uint64_t ea_counted_ops = 0;    // external_attention_ops(N, D, S)
  std::uint64_t parameter_count = 0;
  MeasuredTimings timings;
  double structuring_fraction = 0;

  std::string to_json() const;
  // Two columns: metric,value.
  std::string to_csv() const;
};

// Evaluates every cost row at the config's values for the first block width
// (or `dim` when non-zero) and the measured grid occupancy.
CostReport complexity_report(const PvtConfig& cfg, const OccupancyStats& stats,
                             std::uint64_t points, std::uint64_t dim = 0,
                             std::uint64_t parameter_count = 0,
                             const MeasuredTimings& timings = {});

}  // namespace pvt
