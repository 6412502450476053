#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "pvt/point_branch.hpp"
#include "pvt/sparse_window_attention.hpp"

namespace pvt {

enum class Precision { F32, F64 };

struct PvtConfig {
  int resolution = 32;                     // R
  int window = 4;                          // W
  std::optional<int> shift;                // per-axis cyclic shift, default W/2
  bool mask_wrapped = false;
  int heads = 1;
  int rpr_bins = 16;                       // L
  double s_max = 1.0;
  std::size_t ea_slots = 64;               // S
  PointAttentionMode mode = PointAttentionMode::Relative;
  std::size_t ra_cap = 4096;
  bool auto_external = true;               // RA over ra_cap falls back to EA
  std::vector<std::size_t> block_widths{64, 64, 128};
  std::size_t lift_width = 1024;           // width of the pre-pool lift
  std::size_t mlp_ratio = 2;               // MLP hidden = ratio * width
  DevoxelizeMode devoxelize = DevoxelizeMode::Trilinear;
  Precision precision = Precision::F64;
  int conv_kernel = 3;                     // k in the convolution cost rows

  std::size_t num_blocks() const { return block_widths.size(); }
  int effective_shift() const { return shift.value_or(window / 2); }
  WindowConfig window_config() const;
  // Throws ConfigError naming the offending values.
  void validate() const;
};

template <typename T>
struct PvtBlockParams {
  // Present when the block width differs from the incoming width.
  std::optional<BasicMatrix<T>> input_proj;
  SwaParams<T> swa;
  PointBranchParams<T> point;
};

template <typename T>
struct PvtParams {
  BasicMatrix<T> embed_w;  // (3 + input feature dim) x D0
  std::vector<T> embed_b;
  std::vector<PvtBlockParams<T>> blocks;
  BasicMatrix<T> lift_w;   // D_last x lift_width
  std::vector<T> lift_b;
  BasicMatrix<T> head_w;   // D_cat x D_cat
  std::vector<T> head_b;

  template <typename U>
  PvtParams<U> cast() const;
};

// Seeded initialization: weights uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)),
// biases zero, layer norms unit, RPR tables zero, EA memories
// uniform(-1/sqrt(D), 1/sqrt(D)).
PvtParams<double> init_params(const PvtConfig& cfg, std::size_t input_feature_dim,
                              std::uint64_t seed);

// Learned linear lift of [xyz, features] to the first block width.
template <typename T>
BasicMatrix<T> embed_points(const PointCloud& pc, const PvtParams<T>& params);

struct BlockTimings {
  VoxelBranchTimings voxel;
  double point_branch = 0;
  double total = 0;
};

// F_local + F_global for one block at the width of `f`.
template <typename T>
BasicMatrix<T> pvt_block_forward(const PointCloud& pc, const BasicMatrix<T>& f,
                                 const PvtConfig& cfg, const PvtBlockParams<T>& params,
                                 BlockTimings* timings = nullptr);

template <typename T>
struct EncoderOutput {
  BasicMatrix<T> per_point;  // N x D_cat
  std::vector<T> global;     // D_cat, max over points
  // Global vector repeated for every point (segmentation-shaped output).
  BasicMatrix<T> repeated_global() const;
};

// Embedding, stacked blocks, concat of every block output with the lifted
// last output, one MLP layer over the concat, then max pooling.
template <typename T>
EncoderOutput<T> encoder_forward(const PointCloud& pc, const PvtConfig& cfg,
                                 const PvtParams<T>& params,
                                 BlockTimings* timings = nullptr);

// Attention mode actually used for N points; warns on stderr when falling
// back from relative to external attention.
PointAttentionMode resolve_mode(const PvtConfig& cfg, std::size_t n, bool warn = true);

std::size_t concat_width(const PvtConfig& cfg);

template <typename T>
std::uint64_t count_parameters(const PvtParams<T>& params);

}  // namespace pvt
