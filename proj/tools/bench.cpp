// Compares the OpenMP loss evaluation against the serial reference loop.

#include <chrono>
#include <cmath>
#include <cstdlib>
#include <iostream>
#include <string>
#include <vector>

#ifdef _OPENMP
#include <omp.h>
#endif

#include "pinnplace/oracle.hpp"
#include "pinnplace/trainer.hpp"

using namespace pinnplace;
using Clock = std::chrono::steady_clock;

namespace {

double time_eval(const LossModel& m, bool reference, int reps, double* loss) {
  std::vector<double> grad;
  const auto t0 = Clock::now();
  for (int r = 0; r < reps; ++r)
    *loss = reference ? m.eval_reference(m.initial_flat(), &grad, nullptr)
                      : m.eval(m.initial_flat(), &grad, nullptr);
  return std::chrono::duration<double, std::milli>(Clock::now() - t0).count() / reps;
}

void run(const std::string& name, const LossModel& m, int reps) {
  double lp = 0.0, ls = 0.0;
  const double tp = time_eval(m, false, reps, &lp);
  const double ts = time_eval(m, true, reps, &ls);
  std::cout << name << ": parallel " << tp << " ms, serial " << ts << " ms, speedup "
            << ts / tp << "x, |loss diff| " << std::abs(lp - ls) << "\n";
}

}  // namespace

int main(int argc, char** argv) {
  const int reps = argc > 1 ? std::atoi(argv[1]) : 5;
#ifdef _OPENMP
  std::cout << "threads: " << omp_get_max_threads() << "\n";
#else
  std::cout << "threads: 1 (OpenMP disabled)\n";
#endif

  {
    NetworkParams net = init_glorot(LayerSpec{{2, 32, 32, 32, 1}}, 1);
    net.scaling = InputScaling::from_box({0.0, -0.9}, {10.0, 1.1});
    run("adr1d sensitivity, 4000 points", LossModel::adr1d_sensitivity(net, 0.1, 1.0, 4000),
        reps);
  }
  {
    Geometry2D geom;
    Nondim nd;
    NetworkParams net = init_glorot(LayerSpec{{2, 32, 32, 32, 2}}, 2);
    net.scaling = InputScaling::from_box({0.0, 0.0}, {1.0, geom.aspect()});
    PointCounts counts{.collocation = 2000, .inlet = 200, .outlet = 200, .wall = 200,
                       .obstacle = 200};
    run("flow2d, 2800 points", LossModel::flow2d(net, geom, nd, counts, 3), reps);
  }
  {
    Geometry2D geom;
    Nondim nd;
    NetworkParams net = init_glorot(LayerSpec{{3, 32, 32, 32, 3}}, 4);
    net.scaling = InputScaling::from_box({0.0, 0.0, 0.0}, {1.0, geom.aspect(), nd.t_end});
    VelocityFn vel = [](double, double) { return std::array<double, 2>{1.0, 0.0}; };
    PointCounts counts{.collocation = 1000, .inlet = 150, .outlet = 0, .wall = 150,
                       .obstacle = 150, .initial = 300};
    run("adr2d sensitivity, 1750 points",
        LossModel::adr2d_sensitivity(net, vel, geom, nd, 7.0, 18.0, counts, 5), reps);
  }
  return 0;
}
