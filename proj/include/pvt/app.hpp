#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "pvt/point_cloud.hpp"
#include "pvt/pvt_block.hpp"

namespace pvt::app {

// Process exit codes shared by every subcommand.
enum ExitCode : int {
  kOk = 0,
  kVerificationFailed = 1,
  kUsageError = 2,
  kIoError = 3,
};

// ---- configuration -------------------------------------------------------

// Parses "key = value" lines ('#' comments). Unknown keys and bad values
// throw ConfigError.
PvtConfig parse_config_text(std::string_view text, PvtConfig base = {});
PvtConfig load_config_file(const std::filesystem::path& path, PvtConfig base = {});
// Applies one "key=value" override on top of `cfg`.
void apply_override(PvtConfig& cfg, std::string_view assignment);
// Effective config as JSON (echoed into every manifest).
std::string config_to_json(const PvtConfig& cfg);

// ---- forward -------------------------------------------------------------

struct ForwardOptions {
  std::optional<std::filesystem::path> input;
  std::optional<CloudFormat> format;  // default: from extension
  std::size_t points = 1024;          // random cloud size when no input
  std::uint64_t seed = 0;
  int threads = 0;                    // 0: available cores
  PvtConfig config;
  std::filesystem::path out_dir = "pvt_out";
};

struct ForwardResult {
  std::filesystem::path features_path;  // binary cloud, per-point features
  std::filesystem::path global_path;    // JSON pooled vector
  std::filesystem::path manifest_path;  // JSON run manifest
  std::size_t points = 0;
  std::size_t feature_dim = 0;
};

ForwardResult run_forward(const ForwardOptions& opt);

// ---- verify --------------------------------------------------------------

struct PropertyResult {
  std::string suite;
  std::string name;
  double max_error = 0;
  double tolerance = 0;
  bool passed = false;
};

struct VerifyOptions {
  std::vector<std::string> suites{"all"};
  int trials = 100;
  std::uint64_t seed = 1;
  // Flips a sign inside the sparse attention output before comparison; the
  // suite must then fail.
  bool inject_fault = false;
};

const std::vector<std::string>& verify_suite_names();
// Throws ConfigError for unknown suite names.
std::vector<PropertyResult> run_verify(const VerifyOptions& opt);

// ---- bench ---------------------------------------------------------------

enum class Sweep { Resolution, Points, Occupancy };
Sweep parse_sweep(std::string_view name);

struct BenchOptions {
  Sweep sweep = Sweep::Resolution;
  std::vector<double> values;
  PvtConfig config;
  std::size_t dim = 0;          // feature width; 0 -> first block width
  double occupancy = 0.25;      // fixed occupancy for resolution sweeps
  int repetitions = 5;
  std::uint64_t seed = 0;
};

struct BenchRow {
  double value = 0;
  int resolution = 0;
  int window = 0;
  std::size_t dim = 0;
  std::size_t points = 0;
  std::size_t nonempty = 0;
  double voxelize_ms = 0;
  double rulebook_ms = 0;
  double swa_ms = 0;
  double devoxelize_ms = 0;
  double point_ms = 0;
  double total_ms = 0;
  double structuring_fraction = 0;
  std::uint64_t swa_sparse_ops = 0;
  std::uint64_t window_sa_ops = 0;
  std::uint64_t global_sa_ops = 0;
  std::uint64_t ea_ops = 0;
  std::uint64_t ra_ops = 0;
};

struct BenchResult {
  std::vector<BenchRow> rows;
  // Log-log slope: SWA time vs R^3 (resolution), point-branch time vs N
  // (points), SWA time vs non-empty count (occupancy).
  double loglog_slope = 0;
};

BenchResult run_bench(const BenchOptions& opt);
std::string bench_csv(const BenchOptions& opt, const BenchResult& r);

// Least-squares slope of log(y) against log(x).
double loglog_slope(const std::vector<double>& x, const std::vector<double>& y);

// ---- debug dumps ---------------------------------------------------------

// {"schema_version":1, "resolution":R, "window":W, "windows":{id:[keys]}}
std::string dump_rulebook_json(const PointCloud& pc, const PvtConfig& cfg);
// Non-empty voxels with coordinates, counts and mean features.
std::string dump_grid_json(const PointCloud& pc, const PvtConfig& cfg);

// Loads `input` (or a seeded random cloud) and normalizes it.
PointCloud prepare_cloud(const std::optional<std::filesystem::path>& input,
                         std::optional<CloudFormat> format, std::size_t points,
                         std::uint64_t seed);

}  // namespace pvt::app
