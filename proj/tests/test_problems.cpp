#include <doctest.h>

#include <cmath>

#include "pinnplace/problems.hpp"

using namespace pinnplace;

TEST_CASE("dimensionless groups match the physical constants") {
  Nondim nd;
  CHECK(nd.reynolds() == doctest::Approx(300.0));
  CHECK(nd.time_coeff() == doctest::Approx(0.048));
  CHECK(nd.aspect() == doctest::Approx(7.0 / 12.0));
  Geometry2D g;
  CHECK(g.ox() == doctest::Approx(0.375));
  CHECK(g.oy() == doctest::Approx(7.0 / 24.0));
  CHECK(g.r() == doctest::Approx(1.0 / 24.0));
}

TEST_CASE("inlet profiles: parabolic velocity with unit mean, linear concentration") {
  const double a = 7.0 / 12.0;
  CHECK(inlet_velocity_profile(0.0, a) == 0.0);
  CHECK(inlet_velocity_profile(a, a) == doctest::Approx(0.0));
  CHECK(inlet_velocity_profile(0.5 * a, a) == doctest::Approx(1.5));
  // mean over the inlet via midpoint rule
  double mean = 0.0;
  const int n = 2000;
  for (int i = 0; i < n; ++i) mean += inlet_velocity_profile(a * (i + 0.5) / n, a);
  CHECK(mean / n == doctest::Approx(1.0).epsilon(1e-6));
  CHECK(inlet_concentration(0.0, a) == doctest::Approx(0.3));
  CHECK(inlet_concentration(a, a) == doctest::Approx(1.3));
}

TEST_CASE("adr1d residual on a manufactured solution") {
  // c*(x) = sin(x): r = Pe cos x + sin x + Da sin^2 x.
  JetSpec s = specs::adr1d_sensitivity();
  const double pe = 0.7, da = 1.3;
  for (double x : {0.3, 1.7, 4.4}) {
    Jet c = jet_sin(jet_input(s, 0, x));
    Jet r = residual_adr1d(c, jet_input(s, 1, pe), da);
    CHECK(r.value() ==
          doctest::Approx(pe * std::cos(x) + std::sin(x) + da * std::sin(x) * std::sin(x))
              .epsilon(1e-12));
    // c* does not depend on Pe, so the Pe slot of the residual is c_x.
    CHECK(r[s.unit_index(1)] == doctest::Approx(std::cos(x)).epsilon(1e-12));
  }
}

TEST_CASE("ns2d residual on a divergence-free manufactured field") {
  // vx = sin(x) cos(y), vy = -cos(x) sin(y), p = sin(x + y).
  JetSpec s = specs::flow2d();
  const double re = 300.0;
  for (auto [x, y] : {std::pair{0.2, 0.4}, {0.8, 0.1}}) {
    Jet jx = jet_input(s, 0, x), jy = jet_input(s, 1, y);
    Jet vx = jet_mul(jet_sin(jx), jet_cos(jy));
    Jet vy = jet_neg(jet_mul(jet_cos(jx), jet_sin(jy)));
    Jet p = jet_sin(jx + jy);
    NsResidual r = residual_ns2d(vx, vy, p, re);
    CHECK(r.cont.value() == doctest::Approx(0.0).epsilon(1e-14));
    const double sx = std::sin(x), cx = std::cos(x), sy = std::sin(y), cy = std::cos(y);
    const double vxv = sx * cy, vyv = -cx * sy;
    const double mx = vxv * (cx * cy) + vyv * (-sx * sy) + std::cos(x + y) + (2.0 / re) * vxv;
    const double my = vxv * (sx * sy) + vyv * (-cx * cy) + std::cos(x + y) + (2.0 / re) * vyv;
    CHECK(r.mx.value() == doctest::Approx(mx).epsilon(1e-12));
    CHECK(r.my.value() == doctest::Approx(my).epsilon(1e-12));
  }
}

TEST_CASE("adr2d residual on a manufactured transient solution") {
  // c*(x,y,t) = sin(x) sin(y) exp(-t) with constant velocity (vx, vy).
  JetSpec s = specs::adr2d_sensitivity();
  Nondim nd;
  const double pe = 7.0, da = 18.0, vx = 0.9, vy = -0.2;
  for (auto [x, y, t] : {std::tuple{0.3, 0.2, 0.01}, {0.7, 0.5, 0.025}}) {
    Jet jx = jet_input(s, 0, x), jy = jet_input(s, 1, y), jt = jet_input(s, 2, t);
    Jet c = jet_mul(jet_mul(jet_sin(jx), jet_sin(jy)), jet_exp(jet_scale(jt, -1.0)));
    Jet r = residual_adr2d(c, vx, vy, jet_input(s, 3, pe), jet_input(s, 4, da), nd);
    const double cv = std::sin(x) * std::sin(y) * std::exp(-t);
    const double cx = std::cos(x) * std::sin(y) * std::exp(-t);
    const double cy = std::sin(x) * std::cos(y) * std::exp(-t);
    const double expect =
        pe * (nd.time_coeff() * (-cv) + vx * cx + vy * cy) + 2.0 * cv + da * cv * cv;
    CHECK(r.value() == doctest::Approx(expect).epsilon(1e-12));
    // c* is parameter-independent: dr/dPe and dr/dDa come out analytically.
    CHECK(r[s.unit_index(3)] ==
          doctest::Approx(nd.time_coeff() * (-cv) + vx * cx + vy * cy).epsilon(1e-12));
    CHECK(r[s.unit_index(4)] == doctest::Approx(cv * cv).epsilon(1e-12));
  }
}

TEST_CASE("1d sampling is equispaced and inclusive of both ends") {
  PointSet ps = sample_points_1d(0.0, 10.0, 11);
  REQUIRE(ps.size() == 11);
  for (int i = 0; i < 11; ++i) CHECK(ps.coords[i] == doctest::Approx(double(i)));
}

TEST_CASE("2d interior sampling rejects the obstacle disk at the expected rate") {
  Geometry2D g;
  PointSet ps = sample_points_2d(g, PointRole::Collocation, 40000, 5);
  REQUIRE(ps.size() == 40000);
  for (size_t i = 0; i < ps.size(); ++i) {
    const double* p = ps.point(i);
    CHECK(g.feasible(p[0], p[1]));
  }
  const double disk_frac = 3.14159265358979323846 * g.r() * g.r() / (1.0 * g.aspect());
  const double rej = 1.0 - double(ps.size()) / double(ps.attempts);
  CHECK(rej == doctest::Approx(disk_frac).epsilon(0.25));
}

TEST_CASE("boundary and obstacle sampling sit on their manifolds") {
  Geometry2D g;
  const double a = g.aspect();
  auto in = sample_points_2d(g, PointRole::Inlet, 50, 1);
  for (size_t i = 0; i < in.size(); ++i) CHECK(in.point(i)[0] == 0.0);
  auto wall = sample_points_2d(g, PointRole::WallUp, 50, 2);
  for (size_t i = 0; i < wall.size(); ++i) CHECK(wall.point(i)[1] == doctest::Approx(a));
  auto obs = sample_points_2d(g, PointRole::Obstacle, 50, 3);
  REQUIRE(obs.normals.size() == 100);
  for (size_t i = 0; i < obs.size(); ++i) {
    const double dx = obs.point(i)[0] - g.ox(), dy = obs.point(i)[1] - g.oy();
    CHECK(std::sqrt(dx * dx + dy * dy) == doctest::Approx(g.r()).epsilon(1e-12));
    CHECK(obs.normals[2 * i] == doctest::Approx(dx / g.r()).epsilon(1e-12));
  }
  auto init = sample_points_2d(g, PointRole::Initial, 30, 4, true, 0.03);
  for (size_t i = 0; i < init.size(); ++i) CHECK(init.point(i)[2] == 0.0);
  auto col = sample_points_2d(g, PointRole::Collocation, 30, 4, true, 0.03);
  for (size_t i = 0; i < col.size(); ++i) {
    CHECK(col.point(i)[2] > 0.0);
    CHECK(col.point(i)[2] <= 0.03);
  }
}

TEST_CASE("bc residual jets") {
  JetSpec s = specs::adr2d_state();
  Nondim nd;
  const double a = nd.aspect();
  const double pt[] = {0.0, 0.25 * a, 0.01};
  Jet c = jet_mul(jet_input(s, 0, pt[0]), jet_input(s, 1, pt[1]));  // c = x*y
  auto inlet = bc_residuals(BcKind::MassInlet, pt, nullptr, {c}, nd);
  CHECK(inlet[0].value() == doctest::Approx(0.0 - inlet_concentration(pt[1], a)));
  const double nrm[] = {0.6, 0.8};
  auto flux = bc_residuals(BcKind::MassFlux, pt, nrm, {c}, nd);
  // grad(x*y) = (y, x): n . grad = 0.6*y + 0.8*x.
  CHECK(flux[0].value() == doctest::Approx(0.6 * pt[1] + 0.8 * pt[0]).epsilon(1e-13));
}
