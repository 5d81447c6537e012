#include <doctest.h>

#include <cmath>
#include <random>

#include "pinnplace/optim.hpp"

using namespace pinnplace;

TEST_CASE("adam first step moves by about lr in the sign direction") {
  AdamState st = AdamState::make(2, 1e-3);
  st.eps = 1e-16;
  std::vector<double> x{1.0, -2.0}, g{0.5, -3.0};
  adam_step(st, x, g, {});
  CHECK(x[0] == doctest::Approx(1.0 - 1e-3).epsilon(1e-6));
  CHECK(x[1] == doctest::Approx(-2.0 + 1e-3).epsilon(1e-6));
}

TEST_CASE("adam with zero gradient leaves parameters unchanged") {
  AdamState st = AdamState::make(2, 1e-2);
  std::vector<double> x{1.0, 2.0}, g{0.0, 0.0};
  adam_step(st, x, g, {});
  CHECK(x[0] == 1.0);
  CHECK(x[1] == 2.0);
  g[0] = std::nan("");
  CHECK_THROWS(adam_step(st, x, g, {}));
}

TEST_CASE("adam converges on a scalar quadratic") {
  AdamState st = AdamState::make(1, 1e-2);
  std::vector<double> x{5.0}, g{0.0};
  for (int i = 0; i < 1000; ++i) {
    g[0] = 2.0 * (x[0] - 2.0);
    adam_step(st, x, g, {});
  }
  CHECK(std::abs(x[0] - 2.0) < 1e-3);
}

TEST_CASE("lbfgs solves a 5D SPD quadratic to tight gradient norm") {
  // f(x) = 0.5 x^T A x with A = diag(1..5) plus mild coupling.
  auto fn = [](const std::vector<double>& x, std::vector<double>& g) {
    double f = 0.0;
    const int n = int(x.size());
    for (int i = 0; i < n; ++i) {
      const double d = double(i + 1);
      g[i] = d * x[i];
      f += 0.5 * d * x[i] * x[i];
    }
    for (int i = 0; i + 1 < n; ++i) {
      f += 0.3 * x[i] * x[i + 1];
      g[i] += 0.3 * x[i + 1];
      g[i + 1] += 0.3 * x[i];
    }
    return f;
  };
  LbfgsState st = LbfgsState::make();
  std::vector<double> x{1.0, -2.0, 3.0, -4.0, 5.0};
  double prev = 1e300;
  for (int it = 0; it < 10; ++it) {
    const double f = lbfgs_step(st, x, fn, {});
    CHECK(f <= prev + 1e-12);  // monotone on SPD quadratics
    prev = f;
  }
  std::vector<double> g(5);
  fn(x, g);
  double gn = 0.0;
  for (double v : g) gn += v * v;
  CHECK(std::sqrt(gn) < 1e-10);
}

TEST_CASE("lbfgs zero step at a minimum") {
  auto fn = [](const std::vector<double>& x, std::vector<double>& g) {
    g[0] = 2.0 * x[0];
    return x[0] * x[0];
  };
  LbfgsState st = LbfgsState::make();
  std::vector<double> x{0.0};
  lbfgs_step(st, x, fn, {});
  CHECK(x[0] == 0.0);
}

TEST_CASE("lbfgs solves Rosenbrock from the standard start") {
  auto fn = [](const std::vector<double>& x, std::vector<double>& g) {
    const double a = 1.0 - x[0];
    const double b = x[1] - x[0] * x[0];
    g[0] = -2.0 * a - 400.0 * x[0] * b;
    g[1] = 200.0 * b;
    return a * a + 100.0 * b * b;
  };
  LbfgsState st = LbfgsState::make();
  std::vector<double> x{-1.2, 1.0};
  double f = 1e300;
  for (int it = 0; it < 200 && f > 1e-8; ++it) f = lbfgs_step(st, x, fn, {});
  CHECK(f < 1e-8);
}

TEST_CASE("lbfgs respects frozen entries") {
  auto fn = [](const std::vector<double>& x, std::vector<double>& g) {
    g[0] = 2.0 * (x[0] - 1.0);
    g[1] = 2.0 * (x[1] - 1.0);
    return (x[0] - 1.0) * (x[0] - 1.0) + (x[1] - 1.0) * (x[1] - 1.0);
  };
  LbfgsState st = LbfgsState::make();
  std::vector<double> x{5.0, 5.0};
  std::vector<uint8_t> frozen{1, 0};
  for (int it = 0; it < 20; ++it) lbfgs_step(st, x, fn, frozen);
  CHECK(x[0] == 5.0);
  CHECK(std::abs(x[1] - 1.0) < 1e-8);
}

TEST_CASE("cma-es default population size") {
  CmaConfig cfg;
  cfg.sigma0 = 0.5;
  CmaEs es(std::vector<double>(5, 1.0), cfg);
  CHECK(es.population_size() == 4 + int(std::floor(3.0 * std::log(5.0))));
}

TEST_CASE("cma-es reaches 1e-10 on the 5D sphere within 3000 evaluations") {
  CmaConfig cfg;
  cfg.sigma0 = 0.5;
  cfg.max_evals = 3000;
  cfg.seed = 3;
  CmaEs es(std::vector<double>(5, 1.0), cfg);
  es.optimize([](const std::vector<double>& x) {
    double s = 0.0;
    for (double v : x) s += v * v;
    return s;
  }, 1e-10);
  CHECK(es.best_f() < 1e-10);
  CHECK(es.evals() <= 3000);
}

TEST_CASE("cma-es selection is invariant to adding a constant to fitness") {
  CmaConfig cfg;
  cfg.sigma0 = 0.4;
  cfg.seed = 7;
  auto sphere = [](const std::vector<double>& x) {
    double s = 0.0;
    for (double v : x) s += v * v;
    return s;
  };
  CmaEs a(std::vector<double>(3, 1.0), cfg);
  CmaEs b(std::vector<double>(3, 1.0), cfg);
  for (int gen = 0; gen < 20; ++gen) {
    auto pa = a.ask();
    auto pb = b.ask();
    std::vector<double> fa, fb;
    for (auto& x : pa) fa.push_back(sphere(x));
    for (auto& x : pb) fb.push_back(sphere(x) + 123.0);
    a.tell(pa, fa);
    b.tell(pb, fb);
  }
  CHECK(a.sigma() == doctest::Approx(b.sigma()).epsilon(1e-12));
  for (size_t i = 0; i < a.best_x().size(); ++i)
    CHECK(a.best_x()[i] == doctest::Approx(b.best_x()[i]).epsilon(1e-12));
}

TEST_CASE("cma-es is deterministic given a seed") {
  CmaConfig cfg;
  cfg.sigma0 = 0.4;
  cfg.seed = 9;
  cfg.max_evals = 600;
  auto fn = [](const std::vector<double>& x) {
    double s = 0.0;
    for (size_t i = 0; i < x.size(); ++i) s += (x[i] - double(i)) * (x[i] - double(i));
    return s;
  };
  CmaEs a(std::vector<double>(4, 0.5), cfg), b(std::vector<double>(4, 0.5), cfg);
  a.optimize(fn);
  b.optimize(fn);
  CHECK(a.best_f() == b.best_f());
  CHECK(a.best_x() == b.best_x());
}
