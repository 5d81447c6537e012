#include <doctest.h>

#include <cmath>
#include <random>

#include "pinnplace/net.hpp"
#include "pinnplace/tape.hpp"

using namespace pinnplace;

TEST_CASE("backward of w^2 gives 2w") {
  JetSpec s = specs::scalar_1d();
  Tape t(s);
  Var w = t.weight_leaf();
  Var loss = t.square(w);
  auto work = t.make_work();
  const double wv[] = {3.0};
  t.set_weights(work, wv);
  t.forward(work);
  CHECK(t.value(work, loss) == doctest::Approx(9.0));
  auto g = t.backward_loss(work, loss);
  REQUIRE(g.size() == 1);
  CHECK(g[0] == doctest::Approx(6.0));
}

TEST_CASE("leaves untouched by the loss get zero gradient") {
  JetSpec s = specs::scalar_1d();
  Tape t(s);
  Var w0 = t.weight_leaf();
  Var w1 = t.weight_leaf();
  (void)w1;
  Var loss = t.square(w0);
  auto work = t.make_work();
  const double wv[] = {2.0, 5.0};
  t.set_weights(work, wv);
  t.forward(work);
  auto g = t.backward_loss(work, loss);
  CHECK(g[0] == doctest::Approx(4.0));
  CHECK(g[1] == 0.0);
}

TEST_CASE("node id out of range throws") {
  Tape t(specs::scalar_1d());
  t.weight_leaf();
  auto work = t.make_work();
  Tape::Seed bad{Var{99}, 0, 1.0};
  std::vector<double> g(1, 0.0);
  CHECK_THROWS(t.backward(work, std::span<const Tape::Seed>(&bad, 1), g));
}

namespace {

// Random two-layer network emitted on a tape; loss = sum of squared
// residual-like components mixing value, dx and dxx extractions.
struct SmallNetFixture {
  JetSpec spec = specs::scalar_1d();
  LayerSpec lspec{{1, 8, 8, 1}};
  NetworkParams params;
  Tape tape{spec};
  Var x_leaf, out;
  std::vector<double> xs{0.2, -0.7, 1.1};

  SmallNetFixture() : params(init_glorot(lspec, 42)) {
    x_leaf = tape.input_leaf(0);
    auto o = emit_network(tape, lspec, params.scaling, {x_leaf});
    out = o[0];
  }

  double loss_and_grad(const std::vector<double>& flat, std::vector<double>* grad) {
    auto work = tape.make_work();
    tape.set_weights(work, flat);
    if (grad) std::fill(grad->begin(), grad->end(), 0.0);
    double total = 0.0;
    for (double x : xs) {
      tape.set_input(work, x_leaf, x);
      tape.forward(work);
      const double v = tape.value(work, out, 0);
      const double vx = tape.value(work, out, spec.unit_index(0));
      const double vxx = tape.value(work, out, 2);
      const double r = vxx - 2.0 * vx + v * v;
      total += r * r;
      if (grad) {
        std::vector<Tape::Seed> seeds{
            {out, uint16_t(2), 2.0 * r},
            {out, uint16_t(spec.unit_index(0)), -4.0 * r},
            {out, uint16_t(0), 4.0 * r * v},
        };
        tape.backward(work, seeds, *grad);
      }
    }
    return total;
  }
};

}  // namespace

TEST_CASE("gradient of a residual loss matches central finite differences") {
  SmallNetFixture f;
  std::vector<double> flat = f.params.flat;
  std::vector<double> grad(flat.size(), 0.0);
  const double l0 = f.loss_and_grad(flat, &grad);
  CHECK(l0 >= 0.0);
  std::mt19937_64 rng(1);
  for (int trial = 0; trial < 40; ++trial) {
    const size_t i = rng() % flat.size();
    const double h = 1e-4;
    auto fp = flat, fm = flat;
    fp[i] += h;
    fm[i] -= h;
    const double fd = (f.loss_and_grad(fp, nullptr) - f.loss_and_grad(fm, nullptr)) / (2 * h);
    CHECK(std::abs(fd - grad[i]) <= 1e-5 * std::max(1.0, std::abs(fd)));
  }
}

TEST_CASE("replay determinism: identical inputs give bitwise-identical gradients") {
  SmallNetFixture f;
  std::vector<double> g1(f.params.flat.size(), 0.0), g2 = g1;
  const double l1 = f.loss_and_grad(f.params.flat, &g1);
  const double l2 = f.loss_and_grad(f.params.flat, &g2);
  CHECK(l1 == l2);
  CHECK(g1 == g2);
}

TEST_CASE("tape forward agrees with double-jet forward") {
  SmallNetFixture f;
  auto work = f.tape.make_work();
  f.tape.set_weights(work, f.params.flat);
  for (double x : {0.4, -1.2}) {
    f.tape.set_input(work, f.x_leaf, x);
    f.tape.forward(work);
    auto jets = forward(f.params, {jet_input(f.spec, 0, x)});
    for (int k = 0; k < f.spec.size(); ++k)
      CHECK(f.tape.value(work, f.out, k) == doctest::Approx(jets[0][k]).epsilon(1e-13));
  }
}

TEST_CASE("tanh and mul node VJPs against finite differences on jet coefficients") {
  // Perturb individual input-jet coefficients and verify the adjoint.
  JetSpec s = specs::adr1d_sensitivity();
  Tape t(s);
  Var a = t.input_leaf(0);
  Var b = t.input_leaf(1);
  Var y = t.tanh_(t.mul(a, b));
  auto work = t.make_work();

  auto run = [&](const std::vector<double>& ac, int out_slot) {
    t.set_input(work, b, 0.3);
    std::copy(ac.begin(), ac.end(), work.vals.begin() + a.id * s.size());
    t.forward(work);
    return t.value(work, y, out_slot);
  };

  std::vector<double> ac(s.size(), 0.0);
  ac[0] = 0.9;
  ac[s.unit_index(0)] = 1.0;
  ac[2] = 0.4;  // some curvature
  for (int out_slot : {0, 1, 2, 3, 4, 5}) {
    run(ac, out_slot);
    std::vector<double> g;
    t.backward(work, std::array{Tape::Seed{y, uint16_t(out_slot), 1.0}}, g);
    for (int in_slot = 0; in_slot < s.size(); ++in_slot) {
      const double h = 1e-6;
      auto ap = ac, am = ac;
      ap[in_slot] += h;
      am[in_slot] -= h;
      const double fd = (run(ap, out_slot) - run(am, out_slot)) / (2 * h);
      const double ad = work.adj[a.id * s.size() + in_slot];
      CHECK(std::abs(fd - ad) <= 1e-6 * std::max(1.0, std::abs(fd)) + 1e-8);
    }
  }
}
