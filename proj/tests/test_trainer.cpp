#include <doctest.h>

#include <cmath>
#include <random>
#include <sstream>

#include "pinnplace/trainer.hpp"

using namespace pinnplace;

namespace {

NetworkParams small_net(std::vector<int> sizes, const std::vector<double>& lo,
                        const std::vector<double>& hi, uint64_t seed) {
  NetworkParams p = init_glorot(LayerSpec{std::move(sizes)}, seed);
  p.scaling = InputScaling::from_box(lo, hi);
  return p;
}

void check_gradient(const LossModel& m, int trials, double tol) {
  std::vector<double> flat = m.initial_flat();
  std::vector<double> g;
  const double l0 = m.eval(flat, &g, nullptr);
  CHECK(l0 >= 0.0);
  std::mt19937_64 rng(3);
  for (int t = 0; t < trials; ++t) {
    const size_t i = rng() % flat.size();
    const double h = 1e-5 * std::max(1.0, std::abs(flat[i]));
    auto fp = flat, fm = flat;
    fp[i] += h;
    fm[i] -= h;
    const double fd = (m.eval_reference(fp, nullptr, nullptr) -
                       m.eval_reference(fm, nullptr, nullptr)) / (2 * h);
    CHECK(std::abs(fd - g[i]) <= tol * std::max(1.0, std::abs(fd)));
  }
  // always probe the trailing (lambda) entries
  for (size_t i = m.n_net_params(); i < flat.size(); ++i) {
    const double h = 1e-6 * std::max(1.0, std::abs(flat[i]));
    auto fp = flat, fm = flat;
    fp[i] += h;
    fm[i] -= h;
    const double fd = (m.eval_reference(fp, nullptr, nullptr) -
                       m.eval_reference(fm, nullptr, nullptr)) / (2 * h);
    CHECK(std::abs(fd - g[i]) <= tol * std::max(1.0, std::abs(fd)));
  }
}

}  // namespace

TEST_CASE("adr1d sensitivity loss gradient matches finite differences") {
  auto net = small_net({2, 10, 10, 1}, {0.0, -0.9}, {10.0, 1.1}, 1);
  auto m = LossModel::adr1d_sensitivity(net, 0.1, 1.0, 40);
  CHECK(m.terms().size() == 3);
  CHECK(m.terms()[0].pinned);
  check_gradient(m, 25, 2e-4);
}

TEST_CASE("adr1d inverse loss gradient including the Pe entry") {
  auto net = small_net({1, 10, 10, 1}, {0.0}, {10.0}, 2);
  std::vector<std::array<double, 2>> data{{1.8, 0.8}, {5.0, 0.5}};
  auto m = LossModel::adr1d_inverse(net, 1.0, data, 0.1, 40, 100.0);
  REQUIRE(m.n_params() == m.n_net_params() + 1);
  CHECK(m.lambda_names() == std::vector<std::string>{"Pe"});
  check_gradient(m, 20, 2e-4);
}

TEST_CASE("flow2d loss gradient matches finite differences") {
  Geometry2D geom;
  Nondim nd;
  auto net = small_net({2, 12, 12, 2}, {0.0, 0.0}, {1.0, geom.aspect()}, 3);
  PointCounts counts{30, 8, 8, 8, 8, 0};
  auto m = LossModel::flow2d(net, geom, nd, counts, 11);
  CHECK(m.terms().size() == 3);
  check_gradient(m, 25, 5e-4);
}

TEST_CASE("adr2d sensitivity loss gradient matches finite differences") {
  Geometry2D geom;
  Nondim nd;
  auto net = small_net({3, 10, 10, 3}, {0.0, 0.0, 0.0}, {1.0, geom.aspect(), nd.t_end}, 4);
  PointCounts counts{25, 6, 6, 6, 6, 8};
  VelocityFn vel = [](double, double) { return std::array<double, 2>{1.0, 0.1}; };
  auto m = LossModel::adr2d_sensitivity(net, vel, geom, nd, 7.0, 18.0, counts, 13);
  check_gradient(m, 25, 5e-4);
}

TEST_CASE("adr2d inverse loss gradient including both lambda entries") {
  Geometry2D geom;
  Nondim nd;
  auto net = small_net({3, 10, 10, 1}, {0.0, 0.0, 0.0}, {1.0, geom.aspect(), nd.t_end}, 5);
  PointCounts counts{25, 6, 6, 6, 6, 8};
  VelocityFn vel = [](double, double) { return std::array<double, 2>{1.0, 0.0}; };
  std::vector<TimeSeries> data(1);
  data[0].x = 0.5;
  data[0].y = 0.3;
  data[0].times = {0.0, 0.01, 0.02};
  data[0].values = {0.0, 0.4, 0.6};
  auto m = LossModel::adr2d_inverse(net, vel, geom, nd, data, 7.0, 18.0, counts, 17, 100.0);
  REQUIRE(m.n_params() == m.n_net_params() + 2);
  CHECK(m.terms().back().name == "data");
  CHECK(m.terms().back().pinned);
  check_gradient(m, 25, 5e-4);
}

TEST_CASE("parallel eval agrees with the serial reference") {
  auto net = small_net({2, 16, 16, 1}, {0.0, -0.9}, {10.0, 1.1}, 6);
  auto m = LossModel::adr1d_sensitivity(net, 0.1, 1.0, 700);
  std::vector<double> g1, g2;
  LossBreakdown b1, b2;
  const double l1 = m.eval(m.initial_flat(), &g1, &b1);
  const double l2 = m.eval_reference(m.initial_flat(), &g2, &b2);
  CHECK(l1 == doctest::Approx(l2).epsilon(1e-13));
  REQUIRE(g1.size() == g2.size());
  for (size_t i = 0; i < g1.size(); ++i)
    CHECK(g1[i] == doctest::Approx(g2[i]).epsilon(1e-10));
  for (size_t t = 0; t < b1.values.size(); ++t)
    CHECK(b1.values[t] == doctest::Approx(b2.values[t]).epsilon(1e-13));
}

TEST_CASE("dynamic weight update pins the pde term and balances the rest") {
  auto net = small_net({2, 10, 10, 1}, {0.0, -0.9}, {10.0, 1.1}, 7);
  auto m = LossModel::adr1d_sensitivity(net, 0.1, 1.0, 60);
  auto norms = m.term_grad_norms(m.initial_flat());
  REQUIRE(norms.size() == 3);
  for (double n : norms) CHECK(n > 0.0);
  m.update_dynamic_weights(m.initial_flat(), 0.1);
  CHECK(m.terms()[0].weight == 1.0);
  double gmax = *std::max_element(norms.begin(), norms.end());
  for (size_t t = 1; t < 3; ++t) {
    const double expect = 0.9 * 1.0 + 0.1 * std::min(gmax / (norms[t] + 1e-12), 100.0);
    CHECK(m.terms()[t].weight == doctest::Approx(expect).epsilon(1e-10));
  }
}

TEST_CASE("residual-adaptive refinement grows the collocation set deterministically") {
  auto net = small_net({2, 10, 10, 1}, {0.0, -0.9}, {10.0, 1.1}, 8);
  auto m1 = LossModel::adr1d_sensitivity(net, 0.1, 1.0, 60);
  auto m2 = LossModel::adr1d_sensitivity(net, 0.1, 1.0, 60);
  const size_t before = m1.total_points();
  m1.rar_resample(m1.initial_flat(), {{"collocation", 15}}, 99);
  m2.rar_resample(m2.initial_flat(), {{"collocation", 15}}, 99);
  CHECK(m1.total_points() == before + 15);
  CHECK(m1.programs()[0].points.coords == m2.programs()[0].points.coords);
  CHECK(m1.terms()[0].count == 75);
  for (size_t i = before; i < m1.programs()[0].points.size(); ++i) {
    const double x = m1.programs()[0].points.coords[i];
    CHECK(x >= 0.0);
    CHECK(x <= 10.0);
  }
}

TEST_CASE("a short training run reduces the loss and logs history") {
  auto net = small_net({2, 16, 16, 1}, {0.0, -0.9}, {10.0, 1.1}, 9);
  auto m = LossModel::adr1d_sensitivity(net, 0.1, 1.0, 120);
  const double l0 = m.eval(m.initial_flat(), nullptr, nullptr);
  TrainConfig cfg;
  cfg.adam_iters = 300;
  cfg.adam_lr = 2e-3;
  cfg.lbfgs_iters = 40;
  cfg.weight_every = 100;
  cfg.log_every = 50;
  std::ostringstream hist;
  TrainResult res = train(m, cfg, &hist);
  CHECK(res.final_loss < 0.2 * l0);
  CHECK(res.iters == 340);
  const std::string h = hist.str();
  CHECK(h.rfind("iteration,loss,pde,sens,bc,w_pde,w_sens,w_bc", 0) == 0);
  CHECK(std::count(h.begin(), h.end(), '\n') >= 7);
  NetworkParams out = result_params(m, res);
  CHECK(out.flat.size() == m.n_net_params());
  CHECK(out.scaling.center == net.scaling.center);
}

TEST_CASE("inverse training moves lambda and records its trajectory") {
  auto net = small_net({1, 12, 12, 1}, {0.0}, {10.0}, 10);
  std::vector<std::array<double, 2>> data{{1.0, 0.9}, {3.0, 0.7}, {6.0, 0.55}};
  auto m = LossModel::adr1d_inverse(net, 1.0, data, 0.1, 60, 100.0);
  TrainConfig cfg;
  cfg.adam_iters = 50;
  cfg.dynamic_weights = false;
  TrainResult res = train(m, cfg, nullptr);
  REQUIRE(res.lambda.count("Pe") == 1);
  CHECK(res.lambda_history.size() == 50);
  CHECK(res.lambda.at("Pe") != doctest::Approx(0.1).epsilon(1e-12));
  CHECK(res.lambda_history.front().at("Pe") != res.lambda_history.back().at("Pe"));
}

TEST_CASE("training throws on divergence") {
  auto net = small_net({2, 8, 1}, {0.0, -0.9}, {10.0, 1.1}, 11);
  auto m = LossModel::adr1d_sensitivity(net, 0.1, 1.0, 30);
  TrainConfig cfg;
  cfg.adam_iters = 5;
  cfg.divergence_loss = 1e-12;  // force the abort path
  CHECK_THROWS(train(m, cfg, nullptr));
}
