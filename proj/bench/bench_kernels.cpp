// Serial vs OpenMP matrix-product kernels: wall time per call and a bitwise
// agreement check on every shape.

#include <array>
#include <chrono>
#include <cstdio>
#include <functional>
#include <vector>

#include <CLI11.hpp>

#include "itimer/kernels.hpp"
#include "itimer/rng.hpp"

using namespace itimer;

namespace {

Matrix random(std::size_t r, std::size_t c, Rng& rng) {
  Matrix m(r, c);
  for (std::size_t i = 0; i < m.size(); ++i) m[i] = rng.uniform(-1.0, 1.0);
  return m;
}

double seconds_per_call(const std::function<void()>& f, int reps) {
  f();
  const auto t0 = std::chrono::steady_clock::now();
  for (int i = 0; i < reps; ++i) f();
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count() / reps;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"matmul kernel benchmark"};
  int reps = 20;
  bool quick = false;
  app.add_option("--reps", reps, "timed calls per kernel")->check(CLI::PositiveNumber);
  app.add_flag("--quick", quick, "small shapes only");
  CLI11_PARSE(app, argc, argv);

  std::vector<std::array<std::size_t, 3>> shapes{{16, 16, 16}, {64, 64, 64}, {50, 96, 32}};
  if (!quick) shapes.insert(shapes.end(), {{128, 128, 128}, {256, 256, 256}, {512, 64, 512}});

  std::printf("openmp %s, max threads %d\n", kernels::openmp_enabled() ? "on" : "off", kernels::max_threads());
  std::printf("%-8s %-16s %12s %12s %8s %s\n", "kernel", "shape", "serial_us", "parallel_us", "speedup", "equal");
  Rng rng(7);
  bool all_equal = true;
  for (auto [m, k, n] : shapes) {
    const Matrix a = random(m, k, rng), b = random(k, n, rng);
    const Matrix at = random(k, m, rng), bt = random(n, k, rng);
    struct Case {
      const char* name;
      std::function<void(Matrix&)> serial, parallel;
    };
    const Case cases[] = {
        {"ab", [&](Matrix& o) { kernels::serial::matmul(a, b, o); },
         [&](Matrix& o) { kernels::parallel::matmul(a, b, o); }},
        {"atb", [&](Matrix& o) { kernels::serial::matmul_at_b_acc(at, b, o); },
         [&](Matrix& o) { kernels::parallel::matmul_at_b_acc(at, b, o); }},
        {"abt", [&](Matrix& o) { kernels::serial::matmul_a_bt_acc(a, bt, o); },
         [&](Matrix& o) { kernels::parallel::matmul_a_bt_acc(a, bt, o); }},
    };
    for (const auto& c : cases) {
      Matrix os(m, n), op(m, n);
      c.serial(os);
      c.parallel(op);
      const bool equal = os == op;
      all_equal = all_equal && equal;
      Matrix scratch(m, n);
      const double ts = seconds_per_call([&] { c.serial(scratch); }, reps);
      const double tp = seconds_per_call([&] { c.parallel(scratch); }, reps);
      char shape[32];
      std::snprintf(shape, sizeof(shape), "%zux%zux%zu", m, k, n);
      std::printf("%-8s %-16s %12.1f %12.1f %8.2f %s\n", c.name, shape, ts * 1e6, tp * 1e6, ts / tp,
                  equal ? "yes" : "NO");
    }
  }
  return all_equal ? 0 : 1;
}
