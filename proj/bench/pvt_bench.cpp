// Serial reference kernels vs their OpenMP versions: median wall time,
// speedup, and whether outputs match bit for bit.
#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "pvt/parallel.hpp"
#include "pvt/reference.hpp"
#include "pvt/synthetic.hpp"

namespace {

using namespace pvt;

double median_ms(const std::function<void()>& f, int reps) {
  f();
  std::vector<double> t;
  for (int i = 0; i < reps; ++i) {
    const auto t0 = std::chrono::steady_clock::now();
    f();
    t.push_back(
        std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count());
  }
  std::sort(t.begin(), t.end());
  return t[t.size() / 2];
}

template <typename Out>
void row(const char* name, int reps, const std::function<Out()>& serial,
         const std::function<Out()>& parallel) {
  Out a, b;
  const double ts = median_ms([&] { a = serial(); }, reps);
  const double tp = median_ms([&] { b = parallel(); }, reps);
  std::printf("%-20s %10.3f %10.3f %8.2fx  %s\n", name, ts, tp, ts / tp,
              a == b ? "identical" : "MISMATCH");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"serial vs OpenMP kernel benchmark"};
  int threads = 0;
  int reps = 5;
  std::size_t n = 2048;
  std::size_t dim = 64;
  int resolution = 32;
  app.add_option("--threads", threads, "OpenMP threads (default: available cores)");
  app.add_option("--reps", reps, "timed repetitions")->check(CLI::PositiveNumber);
  app.add_option("--points", n, "rows for the point kernels");
  app.add_option("--dim", dim, "feature width");
  app.add_option("--resolution", resolution, "grid resolution for swa_forward");
  CLI11_PARSE(app, argc, argv);

  ThreadCountScope scope(threads > 0 ? threads : available_cores());
  std::printf("threads=%d N=%zu D=%zu R=%d reps=%d\n", num_threads(), n, dim, resolution, reps);
  std::printf("%-20s %10s %10s %9s\n", "kernel", "serial_ms", "omp_ms", "speedup");

  const Matrix a = random_matrix<double>(n, dim, 1.0, 1);
  const Matrix b = random_matrix<double>(dim, dim, 1.0, 2);
  row<Matrix>("matmul", reps, [&] { return serial::matmul(a, b); },
              [&] { return matmul(a, b); });

  const std::size_t na = std::min<std::size_t>(n, 1024);
  const Matrix q = random_matrix<double>(na, dim, 1.0, 3);
  const Matrix k = random_matrix<double>(na, dim, 1.0, 4);
  const Matrix v = random_matrix<double>(na, dim, 1.0, 5);
  const double scale = 1.0 / std::sqrt(static_cast<double>(dim));
  row<Matrix>("attention_rows", reps,
              [&] { return serial::attention_rows(q, k, v, scale, static_cast<const Matrix*>(nullptr), {}); },
              [&] { return attention_rows(q, k, v, scale, static_cast<const Matrix*>(nullptr), {}); });

  const auto ea = random_point_params<double>(dim, 16, 64, PointAttentionMode::External, 6).ea;
  row<Matrix>("external_attention", reps,
              [&] { return serial::external_attention(a, ea, {}); },
              [&] { return external_attention(a, ea, {}); });

  const auto grid = random_sparse_grid<double>(resolution, dim, 0.1, 7);
  const RuleBook rb = build_rule_book(grid, WindowConfig{});
  const auto swa = random_swa_params<double>(dim, 2, 8, scale);
  row<SparseVoxelGrid<double>>("swa_forward", reps,
                               [&] { return serial::swa_forward(grid, rb, swa); },
                               [&] { return swa_forward(grid, rb, swa); });
  return 0;
}
