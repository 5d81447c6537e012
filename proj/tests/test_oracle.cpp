#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <filesystem>

#include "pinnplace/oracle.hpp"

using namespace pinnplace;

namespace {
constexpr double kPi = 3.14159265358979323846;
}

TEST_CASE("1d transport without reaction has the constant solution") {
  // Pe c_x = c_xx, c(0)=1, c'(10)=0 admits only c = 1.
  Grid1D g{201};
  auto c = fd_solve_adr1d(0.5, 0.0, g);
  for (double v : c) CHECK(v == doctest::Approx(1.0).epsilon(1e-10));
}

TEST_CASE("1d solution with reaction decays monotonically from the inlet") {
  Grid1D g{2001};
  auto c = fd_solve_adr1d(0.1, 1.0, g);
  CHECK(c[0] == doctest::Approx(1.0));
  for (int i = 1; i < g.n; ++i) {
    CHECK(c[i] <= c[i - 1] + 1e-12);
    CHECK(c[i] >= 0.0);
  }
  CHECK(c[g.n - 1] < 0.35);
}

TEST_CASE("1d solver is second-order on a manufactured solution") {
  // c*(x) = 1 + cos(pi x / 10): inlet value 2, zero outlet slope.
  const double pe = 0.7, da = 1.2, w = kPi / 10.0;
  auto cstar = [&](double x) { return 1.0 + std::cos(w * x); };
  Adr1dConfig cfg;
  cfg.c_inlet = 2.0;
  cfg.source = [&](double x) {
    const double c = cstar(x);
    return pe * (-w * std::sin(w * x)) + w * w * std::cos(w * x) + da * c * c;
  };
  std::vector<double> errs;
  for (int n : {101, 201, 401}) {
    Grid1D g{n};
    auto c = fd_solve_adr1d(pe, da, g, cfg);
    double e = 0.0;
    for (int i = 0; i < n; ++i) e = std::max(e, std::abs(c[i] - cstar(g.x(i))));
    errs.push_back(e);
  }
  const double o1 = std::log2(errs[0] / errs[1]);
  const double o2 = std::log2(errs[1] / errs[2]);
  CHECK(o1 == doctest::Approx(2.0).epsilon(0.1));
  CHECK(o2 == doctest::Approx(2.0).epsilon(0.1));
}

TEST_CASE("1d parameter sensitivity is step-size converged") {
  Grid1D g{801};
  auto s = fd_sensitivity_1d(0.1, 1.0, g);
  // Compare against a 10x larger central difference.
  const double d = 1e-3;
  auto cp = fd_solve_adr1d(0.1 + d, 1.0, g), cm = fd_solve_adr1d(0.1 - d, 1.0, g);
  double worst = 0.0, scale = 0.0;
  for (int i = 0; i < g.n; ++i) {
    worst = std::max(worst, std::abs(s[i] - (cp[i] - cm[i]) / (2 * d)));
    scale = std::max(scale, std::abs(s[i]));
  }
  CHECK(scale > 0.1);           // the sensitivity is not trivially zero
  CHECK(worst <= 1e-4 * scale);
}

TEST_CASE("velocity grid text format round-trips bitwise") {
  Geometry2D geom;
  Grid2D g = Grid2D::make(geom, 25, 15);
  VelocityGrid v = analytic_test_velocity(g, geom);
  const std::string path = std::filesystem::temp_directory_path() / "pp_vgrid_test.txt";
  v.save(path);
  VelocityGrid w = VelocityGrid::load(path);
  CHECK(w.nx == v.nx);
  CHECK(w.ly == v.ly);
  CHECK(w.vx == v.vx);
  CHECK(w.vy == v.vy);
  std::remove(path.c_str());
  CHECK_THROWS(VelocityGrid::load(path));
}

TEST_CASE("analytic test velocity is divergence-free away from the obstacle") {
  Geometry2D geom;
  Grid2D g = Grid2D::make(geom, 121, 71);
  VelocityGrid v = analytic_test_velocity(g, geom);
  double worst = 0.0;
  for (int j = 1; j < g.ny - 1; ++j)
    for (int i = 1; i < g.nx - 1; ++i) {
      const double dx = g.x(i) - geom.ox(), dy = g.y(j) - geom.oy();
      if (std::sqrt(dx * dx + dy * dy) < 4.0 * geom.r()) continue;
      const double div = (v.vx[g.idx(i + 1, j)] - v.vx[g.idx(i - 1, j)]) / (2 * g.hx()) +
                         (v.vy[g.idx(i, j + 1)] - v.vy[g.idx(i, j - 1)]) / (2 * g.hy());
      worst = std::max(worst, std::abs(div));
    }
  CHECK(worst < 0.02);
  CHECK(velocity_divergence_rms(v, g) < 1.0);  // finite even through the near field
}

TEST_CASE("2d upwind solve respects the maximum principle") {
  Geometry2D geom;
  Grid2D g = Grid2D::make(geom, 61, 36);
  VelocityGrid v = analytic_test_velocity(g, geom);
  Adr2dConfig cfg;
  cfg.dt = 1e-3;
  cfg.t_end = 0.03;
  cfg.sample_every = 5e-3;
  for (double da : {0.0, 22.0}) {
    Solution2D sol = fd_solve_adr2d(7.0, da, v, g, cfg);
    REQUIRE(sol.snapshots.size() >= 5);
    for (const auto& snap : sol.snapshots)
      for (size_t q = 0; q < snap.size(); ++q)
        if (g.mask[q]) {
          CHECK(snap[q] >= -1e-9);
          CHECK(snap[q] <= 1.3 + 1e-9);
        }
    // Concentration builds up over time from the zero initial state.
    double last = 0.0, first = 0.0;
    for (size_t q = 0; q < g.size(); ++q)
      if (g.mask[q]) {
        first += sol.snapshots[1][q];
        last += sol.snapshots.back()[q];
      }
    CHECK(last > first);
  }
}

TEST_CASE("2d solver converges at second order in h on a manufactured solution") {
  Geometry2D geom;
  geom.radius_m = 0.0;  // no obstacle: smooth manufactured field
  const double pe = 7.0, da = 18.0, a = geom.aspect();
  Nondim nd;
  auto cstar = [&](double x, double y, double t) {
    return std::exp(-t) * std::cos(kPi * x) * std::cos(kPi * y / a) + 1.0;
  };
  std::vector<double> errs;
  for (int nx : {41, 81}) {
    const int ny = (nx - 1) * 7 / 12 + 1;
    Grid2D g = Grid2D::make(geom, nx, ny);
    VelocityGrid v;
    v.nx = nx;
    v.ny = ny;
    v.ly = a;
    v.vx.assign(g.size(), 1.0);
    v.vy.assign(g.size(), 0.0);
    Adr2dConfig cfg;
    cfg.advection = Adr2dConfig::Advection::Central;
    cfg.dt = 1e-4;
    cfg.t_end = 0.005;
    cfg.sample_every = 0.005;
    cfg.inlet = [&](double y, double t) { return cstar(0.0, y, t); };
    cfg.source = [&](double x, double y, double t) {
      const double c = cstar(x, y, t);
      const double e = c - 1.0;
      const double ct = -e;
      const double cx = -kPi * std::exp(-t) * std::sin(kPi * x) * std::cos(kPi * y / a);
      const double lap = -(kPi * kPi + kPi * kPi / (a * a)) * e;
      return pe * (nd.time_coeff() * ct + 1.0 * cx) - lap + da * c * c;
    };
    cfg.initial = [&](double x, double y) { return cstar(x, y, 0.0); };
    Solution2D sol = fd_solve_adr2d(pe, da, v, g, cfg);
    double e = 0.0;
    for (int j = 0; j < ny; ++j)
      for (int i = 0; i < nx; ++i)
        e = std::max(e, std::abs(sol.snapshots.back()[g.idx(i, j)] -
                                 cstar(g.x(i), g.y(j), cfg.t_end)));
    errs.push_back(e);
  }
  CHECK(std::log2(errs[0] / errs[1]) >= 1.8);
}

TEST_CASE("2d solver is first-order in dt (self-convergence)") {
  Geometry2D geom;
  Grid2D g = Grid2D::make(geom, 49, 29);
  VelocityGrid v = analytic_test_velocity(g, geom);
  Adr2dConfig cfg;
  cfg.t_end = 0.006;
  cfg.sample_every = 0.006;
  std::vector<std::vector<double>> finals;
  for (double dt : {6e-4, 3e-4, 1.5e-4}) {
    cfg.dt = dt;
    finals.push_back(fd_solve_adr2d(7.0, 18.0, v, g, cfg).snapshots.back());
  }
  auto dist = [&](const std::vector<double>& p, const std::vector<double>& q) {
    double m = 0.0;
    for (size_t k = 0; k < p.size(); ++k)
      if (g.mask[k]) m = std::max(m, std::abs(p[k] - q[k]));
    return m;
  };
  const double e1 = dist(finals[0], finals[1]);
  const double e2 = dist(finals[1], finals[2]);
  CHECK(e1 > 0.0);
  CHECK(std::log2(e1 / e2) >= 0.8);
}

TEST_CASE("2d parameter sensitivities are finite and informative") {
  Geometry2D geom;
  Grid2D g = Grid2D::make(geom, 49, 29);
  VelocityGrid v = analytic_test_velocity(g, geom);
  Adr2dConfig cfg;
  cfg.dt = 1e-3;
  cfg.t_end = 0.012;
  cfg.sample_every = 3e-3;
  auto [s_pe, s_da] = fd_sensitivity_2d(7.0, 18.0, v, g, cfg);
  double mx_pe = 0.0, mx_da = 0.0;
  for (const auto& snap : s_pe.snapshots)
    for (double x : snap) {
      REQUIRE(std::isfinite(x));
      mx_pe = std::max(mx_pe, std::abs(x));
    }
  for (const auto& snap : s_da.snapshots)
    for (double x : snap) mx_da = std::max(mx_da, std::abs(x));
  CHECK(mx_pe > 1e-4);
  CHECK(mx_da > 1e-5);
  // More reaction consumes reactant: dc/dDa <= 0 where c > 0.
  double worst = 1.0;
  for (double x : s_da.snapshots.back()) worst = std::min(worst, x);
  CHECK(worst < 0.0);
}

TEST_CASE("time series sampling, noise determinism and csv round-trip") {
  Geometry2D geom;
  Grid2D g = Grid2D::make(geom, 49, 29);
  VelocityGrid v = analytic_test_velocity(g, geom);
  Adr2dConfig cfg;
  cfg.dt = 1e-3;
  cfg.t_end = 0.009;
  cfg.sample_every = 3e-3;
  Solution2D sol = fd_solve_adr2d(7.0, 18.0, v, g, cfg);
  std::vector<std::array<double, 2>> sensors{{0.5, 0.3}, {0.8, 0.1}};
  auto clean = make_timeseries(sol, sensors, false, 0.1, 1);
  REQUIRE(clean.size() == 2);
  REQUIRE(clean[0].times.size() == sol.times.size());
  CHECK(clean[0].values[2] == doctest::Approx(sol.interp(2, 0.5, 0.3)));
  auto n1 = make_timeseries(sol, sensors, true, 0.1, 7);
  auto n2 = make_timeseries(sol, sensors, true, 0.1, 7);
  auto n3 = make_timeseries(sol, sensors, true, 0.1, 8);
  CHECK(n1[0].values == n2[0].values);
  CHECK(n1[0].values != n3[0].values);
  // Relative perturbations stay on the order of sigma.
  for (size_t k = 0; k < n1[0].values.size(); ++k)
    if (std::abs(clean[0].values[k]) > 1e-6)
      CHECK(std::abs(n1[0].values[k] / clean[0].values[k] - 1.0) < 0.6);

  const std::string path = std::filesystem::temp_directory_path() / "pp_ts_test.csv";
  save_timeseries_csv(path, n1);
  auto back = load_timeseries_csv(path);
  REQUIRE(back.size() == 2);
  CHECK(back[1].x == n1[1].x);
  CHECK(back[0].values == n1[0].values);
  CHECK(back[1].times == n1[1].times);
  std::remove(path.c_str());
}

TEST_CASE("flow_velocity is divergence-free and satisfies hard boundary structure") {
  // An untrained random network must already give an exactly solenoidal field
  // with wall no-slip and balanced flux: these are built into the velocity
  // transform, not learned.
  Geometry2D geom;
  const double a = geom.aspect();
  NetworkParams net = init_glorot(LayerSpec{{2, 8, 8, 2}}, 77);
  net.scaling = InputScaling::from_box({0.0, 0.0}, {1.0, a});

  const double h = 1e-5;
  for (auto [x, y] : {std::pair{0.3, 0.2}, {0.7, 0.45}, {0.12, 0.5}}) {
    const double dvx =
        (flow_velocity(net, geom, x + h, y)[0] - flow_velocity(net, geom, x - h, y)[0]) /
        (2 * h);
    const double dvy =
        (flow_velocity(net, geom, x, y + h)[1] - flow_velocity(net, geom, x, y - h)[1]) /
        (2 * h);
    CHECK(std::abs(dvx + dvy) < 1e-6);
  }
  for (double x : {0.1, 0.5, 0.9}) {
    for (double y : {0.0, a}) {
      auto v = flow_velocity(net, geom, x, y);
      CHECK(std::abs(v[0]) < 1e-9);
      CHECK(std::abs(v[1]) < 1e-9);
    }
  }
  for (int i = 0; i < 16; ++i) {
    const double th = 2.0 * 3.14159265358979323846 * i / 16.0;
    auto v = flow_velocity(net, geom, geom.ox() + geom.r() * std::cos(th),
                           geom.oy() + geom.r() * std::sin(th));
    CHECK(std::abs(v[0]) < 1e-9);
    CHECK(std::abs(v[1]) < 1e-9);
  }
  auto flux = [&](double x) {
    const int m = 401;
    double q = 0.0;
    for (int i = 0; i < m; ++i) {
      const double y = a * double(i) / (m - 1);
      q += (i == 0 || i == m - 1 ? 0.5 : 1.0) * flow_velocity(net, geom, x, y)[0];
    }
    return q * a / (m - 1);
  };
  CHECK(flux(0.25) == doctest::Approx(flux(0.75)).epsilon(1e-4));
}
