// pvt: forward passes, property suites, scaling sweeps and debug dumps.
#include <cstdio>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "pvt/app.hpp"
#include "pvt/errors.hpp"
#include "pvt/parallel.hpp"

namespace {

using namespace pvt;
using namespace pvt::app;

struct Common {
  std::string config_path;
  std::vector<std::string> overrides;
  std::string precision;
  std::uint64_t seed = 0;
  int threads = 0;
};

void add_common(CLI::App* cmd, Common& c) {
  cmd->add_option("--config", c.config_path, "key=value config file")->check(CLI::ExistingFile);
  cmd->add_option("--set", c.overrides, "config override key=value (repeatable)");
  cmd->add_option("--precision", c.precision, "f32 or f64")
      ->check(CLI::IsMember({"f32", "f64"}));
  cmd->add_option("--seed", c.seed, "seed for every randomized input");
  cmd->add_option("--threads", c.threads, "worker threads (default: available cores)")
      ->check(CLI::NonNegativeNumber);
}

PvtConfig effective_config(const Common& c) {
  PvtConfig cfg = c.config_path.empty() ? PvtConfig{} : load_config_file(c.config_path);
  for (const auto& o : c.overrides) apply_override(cfg, o);
  if (!c.precision.empty()) apply_override(cfg, "precision=" + c.precision);
  cfg.validate();
  return cfg;
}

std::optional<CloudFormat> format_opt(const std::string& s) {
  if (s.empty()) return std::nullopt;
  return parse_cloud_format(s);
}

void write_or_print(const std::string& out, const std::string& text) {
  if (out.empty() || out == "-") {
    std::cout << text << '\n';
    return;
  }
  std::ofstream f(out);
  if (!f) throw IoError("cannot write " + out);
  f << text << '\n';
  if (!f) throw IoError("write failed: " + out);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"point-voxel attention toolkit"};
  app.require_subcommand(1);

  Common common;
  std::string input, format, out;
  std::string out_dir = "pvt_out";
  std::size_t points = 1024;

  auto* fwd = app.add_subcommand("forward", "run the encoder on a cloud");
  add_common(fwd, common);
  fwd->add_option("--input", input, "point cloud (.xyz, .xyzd, .bin)");
  fwd->add_option("--format", format, "xyz, xyzd or binary (default: by extension)");
  fwd->add_option("--points", points, "random cloud size when --input is absent");
  fwd->add_option("--out", out_dir, "output directory")->capture_default_str();

  std::vector<std::string> suites;
  int trials = 100;
  bool inject_fault = false;
  auto* ver = app.add_subcommand("verify", "run property suites");
  ver->add_option("--suite", suites, "suite name (repeatable): swa-oracle, permutation, "
                                     "roundtrip, rpr, ea, all");
  ver->add_option("--trials", trials, "randomized trials per property")
      ->check(CLI::PositiveNumber);
  ver->add_option("--seed", common.seed, "seed");
  ver->add_option("--threads", common.threads, "worker threads")->check(CLI::NonNegativeNumber);
  ver->add_flag("--inject-fault", inject_fault, "corrupt the sparse attention output");

  std::string sweep = "resolution";
  std::vector<std::string> values;
  int reps = 5;
  double occupancy = 0.25;
  std::size_t dim = 0;
  auto* bench = app.add_subcommand("bench", "scaling sweep to CSV");
  add_common(bench, common);
  bench->add_option("--sweep", sweep, "resolution, points or occupancy");
  bench->add_option("--values", values, "sweep values")->delimiter(',');
  bench->add_option("--reps", reps, "timed repetitions (median reported)");
  bench->add_option("--occupancy", occupancy, "fixed occupancy for resolution sweeps");
  bench->add_option("--dim", dim, "feature width (default: first block width)");
  bench->add_option("--out", out, "CSV path (default: stdout)");

  auto* dump_rb = app.add_subcommand("dump-rulebook", "print window membership as JSON");
  auto* dump_grid = app.add_subcommand("dump-grid", "print the sparse voxel grid as JSON");
  for (auto* cmd : {dump_rb, dump_grid}) {
    add_common(cmd, common);
    cmd->add_option("--input", input, "point cloud");
    cmd->add_option("--format", format, "xyz, xyzd or binary");
    cmd->add_option("--points", points, "random cloud size when --input is absent");
    cmd->add_option("--out", out, "JSON path (default: stdout)");
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? kOk : kUsageError;
  }

  try {
    if (common.threads > 0) set_num_threads(common.threads);

    if (fwd->parsed()) {
      ForwardOptions opt;
      if (!input.empty()) opt.input = input;
      opt.format = format_opt(format);
      opt.points = points;
      opt.seed = common.seed;
      opt.threads = common.threads;
      opt.config = effective_config(common);
      opt.out_dir = out_dir;
      const ForwardResult r = run_forward(opt);
      std::cout << "features " << r.features_path.string() << " (" << r.points << " x "
                << r.feature_dim << ")\n"
                << "global   " << r.global_path.string() << '\n'
                << "manifest " << r.manifest_path.string() << '\n';
      return kOk;
    }

    if (ver->parsed()) {
      VerifyOptions opt;
      if (!suites.empty()) opt.suites = suites;
      opt.trials = trials;
      opt.seed = common.seed;
      opt.inject_fault = inject_fault;
      const auto results = run_verify(opt);
      bool ok = true;
      for (const auto& r : results) {
        std::printf("%-4s %-12s %-36s max_err=%.3e tol=%.1e\n", r.passed ? "PASS" : "FAIL",
                    r.suite.c_str(), r.name.c_str(), r.max_error, r.tolerance);
        ok = ok && r.passed;
      }
      std::printf("%s\n", ok ? "all properties passed" : "verification FAILED");
      return ok ? kOk : kVerificationFailed;
    }

    if (bench->parsed()) {
      BenchOptions opt;
      opt.sweep = parse_sweep(sweep);
      for (const auto& v : values) {
        if (v.find_first_not_of(" \t") == std::string::npos) continue;
        try {
          opt.values.push_back(std::stod(v));
        } catch (const std::exception&) {
          throw ConfigError("bad sweep value '" + v + "'");
        }
      }
      opt.config = effective_config(common);
      opt.dim = dim;
      opt.occupancy = occupancy;
      opt.repetitions = reps;
      opt.seed = common.seed;
      const BenchResult r = run_bench(opt);
      write_or_print(out, bench_csv(opt, r));
      const char* what = opt.sweep == Sweep::Resolution ? "SWA time vs R^3"
                         : opt.sweep == Sweep::Points   ? "point-branch time vs N"
                                                        : "SWA time vs non-empty voxels";
      std::fprintf(stderr, "log-log slope (%s): %.3f\n", what, r.loglog_slope);
      return kOk;
    }

    const PvtConfig cfg = effective_config(common);
    const PointCloud pc =
        prepare_cloud(input.empty() ? std::nullopt : std::optional<std::filesystem::path>(input),
                      format_opt(format), points, common.seed);
    write_or_print(out, dump_rb->parsed() ? dump_rulebook_json(pc, cfg) : dump_grid_json(pc, cfg));
    return kOk;
  } catch (const IoError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kIoError;
  } catch (const ParseError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kIoError;
  } catch (const NumericError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kIoError;
  } catch (const EmptyInputError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kIoError;
  } catch (const std::filesystem::filesystem_error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kIoError;
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kUsageError;
  } catch (const CapacityError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kUsageError;
  } catch (const ShapeError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kUsageError;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kUsageError;
  }
}
