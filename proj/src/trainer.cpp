#include "pinnplace/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <ostream>
#include <random>
#include <stdexcept>

#ifdef _OPENMP
#include <omp.h>
#endif

#include "pinnplace/optim.hpp"

namespace pinnplace {

namespace {

double u01(std::mt19937_64& rng) { return double(rng() >> 11) * 0x1.0p-53; }

int thread_count() {
#ifdef _OPENMP
  return omp_get_max_threads();
#else
  return 1;
#endif
}

int thread_id() {
#ifdef _OPENMP
  return omp_get_thread_num();
#else
  return 0;
#endif
}

constexpr size_t kBlock = 256;

}  // namespace

// ----------------------------------------------------------------- helpers

namespace {

struct NetOnTape {
  std::vector<Var> inputs;  // input leaves in input order
  std::vector<Var> outs;
};

NetOnTape emit_net(LossModel::Prog& p, const LayerSpec& ls, const InputScaling& sc) {
  NetOnTape r;
  const int d = ls.sizes.front();
  for (int i = 0; i < d; ++i) r.inputs.push_back(p.tape.input_leaf(i));
  r.outs = emit_network(p.tape, ls, sc, r.inputs);
  p.inputs = r.inputs;
  return r;
}

Var lap2(Tape& t, Var f) {
  const Var fx = t.shift(f, 0), fy = t.shift(f, 1);
  return t.add(t.shift(fx, 0), t.shift(fy, 1));
}

}  // namespace

// --------------------------------------------------------------- factories

LossModel LossModel::adr1d_sensitivity(const NetworkParams& net, double pe_prior, double da,
                                       int n_colloc) {
  LossModel m;
  m.layer_spec_ = net.spec;
  m.scaling_ = net.scaling;
  m.flat_init_ = net.flat;
  m.n_net_ = net.flat.size();
  m.frozen_ = net.frozen_mask();
  m.terms_ = {{"pde", 1.0, true, 0}, {"sens", 1.0, false, 0}, {"bc", 1.0, false, 0}};
  const JetSpec& spec = specs::adr1d_sensitivity();

  {  // collocation
    Prog p(spec);
    auto n = emit_net(p, net.spec, net.scaling);
    const Var c = n.outs[0];
    const Var cx = p.tape.shift(c, 0);
    const Var cxx = p.tape.shift(cx, 0);
    const Var r = p.tape.add(p.tape.sub(p.tape.mul(n.inputs[1], cx), cxx),
                             p.tape.scale(p.tape.square(c), da));
    p.comps = {{r, 0, 0}, {r, uint16_t(spec.unit_index(1)), 1}};
    p.points = sample_points_1d(0.0, 10.0, n_colloc);
    p.fixed_inputs = {pe_prior};
    p.sampler = [](int cnt, uint64_t s) {
      std::mt19937_64 rng(s);
      PointSet ps;
      ps.dim = 1;
      for (int i = 0; i < cnt; ++i) ps.coords.push_back(10.0 * u01(rng));
      return ps;
    };
    m.progs_.push_back(std::move(p));
  }
  {  // inlet: c(0) = 1 and its Pe-derivative
    Prog p(spec);
    auto n = emit_net(p, net.spec, net.scaling);
    const Var c = n.outs[0];
    const Var defect = p.tape.add_const(c, -1.0);
    p.comps = {{defect, 0, 2}, {c, uint16_t(spec.unit_index(1)), 2}};
    p.points.dim = 1;
    p.points.coords = {0.0};
    p.fixed_inputs = {pe_prior};
    m.progs_.push_back(std::move(p));
  }
  {  // outlet: c'(10) = 0 and its Pe-derivative
    Prog p(spec);
    auto n = emit_net(p, net.spec, net.scaling);
    const Var cx = p.tape.shift(n.outs[0], 0);
    p.comps = {{cx, 0, 2}, {cx, uint16_t(spec.unit_index(1)), 2}};
    p.points.dim = 1;
    p.points.coords = {10.0};
    p.fixed_inputs = {pe_prior};
    m.progs_.push_back(std::move(p));
  }
  m.refresh_counts();
  return m;
}

LossModel LossModel::adr1d_inverse(const NetworkParams& net, double da,
                                   const std::vector<std::array<double, 2>>& data,
                                   double pe_init, int n_colloc, double data_weight) {
  LossModel m;
  m.layer_spec_ = net.spec;
  m.scaling_ = net.scaling;
  m.flat_init_ = net.flat;
  m.flat_init_.push_back(pe_init);
  m.n_net_ = net.flat.size();
  m.frozen_ = net.frozen_mask();
  m.frozen_.push_back(0);
  m.lambda_names_ = {"Pe"};
  m.terms_ = {{"pde", 1.0, true, 0}, {"bc", 1.0, false, 0}, {"data", data_weight, true, 0}};
  const JetSpec& spec = specs::scalar_1d();

  {  // collocation with trainable Pe
    Prog p(spec);
    auto n = emit_net(p, net.spec, net.scaling);
    const Var pe = p.tape.weight_leaf();
    const Var c = n.outs[0];
    const Var cx = p.tape.shift(c, 0);
    const Var cxx = p.tape.shift(cx, 0);
    const Var r = p.tape.add(p.tape.sub(p.tape.mul_scalar(pe, cx), cxx),
                             p.tape.scale(p.tape.square(c), da));
    p.comps = {{r, 0, 0}};
    p.points = sample_points_1d(0.0, 10.0, n_colloc);
    p.sampler = [](int cnt, uint64_t s) {
      std::mt19937_64 rng(s);
      PointSet ps;
      ps.dim = 1;
      for (int i = 0; i < cnt; ++i) ps.coords.push_back(10.0 * u01(rng));
      return ps;
    };
    m.progs_.push_back(std::move(p));
  }
  {  // boundary conditions
    Prog p(spec);
    auto n = emit_net(p, net.spec, net.scaling);
    p.tape.weight_leaf();  // keep the leaf layout aligned with the other programs
    p.comps = {{p.tape.add_const(n.outs[0], -1.0), 0, 1}};
    p.points.dim = 1;
    p.points.coords = {0.0};
    m.progs_.push_back(std::move(p));
  }
  {
    Prog p(spec);
    auto n = emit_net(p, net.spec, net.scaling);
    p.tape.weight_leaf();
    p.comps = {{p.tape.shift(n.outs[0], 0), 0, 1}};
    p.points.dim = 1;
    p.points.coords = {10.0};
    m.progs_.push_back(std::move(p));
  }
  {  // sensor data
    Prog p(spec);
    auto n = emit_net(p, net.spec, net.scaling);
    p.tape.weight_leaf();
    const Var target = p.tape.scalar_leaf();
    p.scalars = {target};
    p.aux_cols = 1;
    p.comps = {{p.tape.sub(n.outs[0], target), 0, 2}};
    p.points.dim = 1;
    for (const auto& d : data) {
      p.points.coords.push_back(d[0]);
      p.aux.push_back(d[1]);
    }
    m.progs_.push_back(std::move(p));
  }
  m.refresh_counts();
  return m;
}

LossModel LossModel::flow2d(const NetworkParams& net, const Geometry2D& geom, const Nondim& nd,
                            const PointCounts& counts, uint64_t seed) {
  LossModel m;
  m.layer_spec_ = net.spec;
  m.scaling_ = net.scaling;
  m.flat_init_ = net.flat;
  m.n_net_ = net.flat.size();
  m.frozen_ = net.frozen_mask();
  m.terms_ = {{"pde", 1.0, true, 0}, {"inlet", 1.0, false, 0}, {"outlet", 1.0, false, 0}};
  const JetSpec& spec = specs::flow2d_psi();
  const double re = nd.reynolds();
  const double a = geom.aspect();

  // The network predicts (psi_raw, p). The velocity derives from a
  // streamfunction that blends the inlet profile integral with its stagnation
  // value on the obstacle and masks the learned correction so it vanishes to
  // second order on every solid boundary. Continuity, wall and obstacle
  // no-slip and the inlet/outlet flux budget then hold by construction; only
  // momentum and the inlet profile shape are trained.
  struct FlowVars {
    Var vx, vy, pr;
  };
  auto emit_flow = [a, geom](LossModel::Prog& p, const NetOnTape& n) {
    Tape& t = p.tape;
    const Var x = n.inputs[0], y = n.inputs[1];
    const Var g = t.mul(y, t.neg(t.add_const(y, -a)));           // y (a - y)
    const Var w = t.scale(t.square(g), 16.0 / (a * a * a * a));  // in [0, 1]
    const Var y2 = t.square(y);
    // psi_inlet(y) = 3 y^2 / a - 2 y^3 / a^2 integrates the parabolic profile
    const Var psi_in = t.sub(t.scale(y2, 3.0 / a), t.scale(t.mul(y2, y), 2.0 / (a * a)));
    // s vanishes linearly on the obstacle circle, so exp(-(s/sigma)^2) is 1
    // with zero gradient there and negligible at walls and inlet/outlet
    const Var s = t.add_const(t.add(t.square(t.add_const(x, -geom.ox())),
                                    t.square(t.add_const(y, -geom.oy()))),
                              -geom.r() * geom.r());
    const double sig = kFlowObstacleBlend;
    const Var h = t.exp_(t.scale(t.square(s), -1.0 / (sig * sig)));
    const Var mask = t.mul(w, t.square(t.add_const(t.neg(h), 1.0)));
    const double oy = geom.oy();
    const double c_stag = 3.0 * oy * oy / a - 2.0 * oy * oy * oy / (a * a);
    const Var psi = t.add(psi_in, t.add(t.mul(t.add_const(t.neg(psi_in), c_stag), h),
                                        t.mul(mask, n.outs[0])));
    return FlowVars{t.shift(psi, 1), t.neg(t.shift(psi, 0)), n.outs[1]};
  };

  auto sampler_for = [geom](PointRole role) {
    return [geom, role](int cnt, uint64_t s) {
      return sample_points_2d(geom, role, cnt, s, false, 0.0);
    };
  };

  {  // momentum (continuity is identically zero for a streamfunction field)
    Prog p(spec);
    auto n = emit_net(p, net.spec, net.scaling);
    Tape& t = p.tape;
    const auto f = emit_flow(p, n);
    const Var vx_x = t.shift(f.vx, 0), vx_y = t.shift(f.vx, 1);
    const Var vy_x = t.shift(f.vy, 0), vy_y = t.shift(f.vy, 1);
    const Var mx = t.sub(t.add(t.add(t.mul(f.vx, vx_x), t.mul(f.vy, vx_y)), t.shift(f.pr, 0)),
                         t.scale(lap2(t, f.vx), 1.0 / re));
    const Var my = t.sub(t.add(t.add(t.mul(f.vx, vy_x), t.mul(f.vy, vy_y)), t.shift(f.pr, 1)),
                         t.scale(lap2(t, f.vy), 1.0 / re));
    p.comps = {{mx, 0, 0}, {my, 0, 0}};
    p.points = sample_points_2d(geom, PointRole::Collocation, counts.collocation, seed);
    p.sampler = sampler_for(PointRole::Collocation);
    m.progs_.push_back(std::move(p));
  }
  {  // inlet: vx matches the parabolic profile, vy = 0
    Prog p(spec);
    auto n = emit_net(p, net.spec, net.scaling);
    const auto f = emit_flow(p, n);
    const Var target = p.tape.scalar_leaf();
    p.scalars = {target};
    p.aux_cols = 1;
    p.comps = {{p.tape.sub(f.vx, target), 0, 1}, {f.vy, 0, 1}};
    p.points = sample_points_2d(geom, PointRole::Inlet, counts.inlet, seed + 1);
    p.fill_aux = [a](const double* c, double* aux) { aux[0] = inlet_velocity_profile(c[1], a); };
    p.sampler = sampler_for(PointRole::Inlet);
    m.progs_.push_back(std::move(p));
  }
  {  // outlet reference pressure
    Prog p(spec);
    auto n = emit_net(p, net.spec, net.scaling);
    p.comps = {{n.outs[1], 0, 2}};
    p.points = sample_points_2d(geom, PointRole::Outlet, counts.outlet, seed + 7);
    p.sampler = sampler_for(PointRole::Outlet);
    m.progs_.push_back(std::move(p));
  }
  m.refresh_counts();
  return m;
}

LossModel LossModel::adr2d_forward(const NetworkParams& net, const VelocityFn& vel,
                                   const Geometry2D& geom, const Nondim& nd, double pe,
                                   double da, const PointCounts& counts, uint64_t seed) {
  return adr2d_inverse(net, vel, geom, nd, {}, pe, da, counts, seed, 0.0);
}

LossModel LossModel::adr2d_sensitivity(const NetworkParams& net, const VelocityFn& vel,
                                       const Geometry2D& geom, const Nondim& nd,
                                       double pe_prior, double da_prior,
                                       const PointCounts& counts, uint64_t seed) {
  LossModel m;
  m.layer_spec_ = net.spec;
  m.scaling_ = net.scaling;
  m.flat_init_ = net.flat;
  m.n_net_ = net.flat.size();
  m.frozen_ = net.frozen_mask();
  m.terms_ = {{"pde", 1.0, true, 0}, {"sens", 1.0, false, 0}, {"flux", 1.0, false, 0}};
  // Forward-sensitivity system: the network maps (x, y, t) to
  // (c, s, q) = (state, dc/dPe, dc/dDa) and the s, q residuals are the
  // Pe- and Da-derivatives of the transport residual at the prior. The inlet
  // Dirichlet profile and the zero initial condition are imposed through the
  // output transform, so only the residuals and the flux BCs are trained.
  const JetSpec& spec = specs::adr2d_state();
  const double a = geom.aspect(), t_end = nd.t_end;
  const double tc = nd.time_coeff();

  struct TransportVars {
    Var c, s, q;
  };
  auto emit_state = [a, t_end](LossModel::Prog& p, const NetOnTape& n) {
    Tape& t = p.tape;
    const Var x = n.inputs[0], y = n.inputs[1], tt = n.inputs[2];
    const Var ramp =
        t.add_const(t.neg(t.exp_(t.scale(tt, -1.0 / (kStartupRampFrac * t_end)))), 1.0);
    const Var bx = t.exp_(t.scale(x, -1.0 / kInletBlendLength));
    const Var one_m_bx = t.add_const(t.neg(bx), 1.0);
    const Var cin = t.add_const(t.scale(y, 1.0 / a), 0.3);
    const Var c = t.mul(ramp, t.add(t.mul(bx, cin), t.mul(one_m_bx, n.outs[0])));
    const Var gate = t.mul(ramp, one_m_bx);
    return TransportVars{c, t.mul(gate, n.outs[1]), t.mul(gate, n.outs[2])};
  };

  auto sampler_for = [geom, t_end](PointRole role) {
    return [geom, role, t_end](int cnt, uint64_t s) {
      return sample_points_2d(geom, role, cnt, s, true, t_end);
    };
  };

  {  // transport residual and the differentiated residuals for s and q
    Prog p(spec);
    auto n = emit_net(p, net.spec, net.scaling);
    Tape& t = p.tape;
    const Var vx = t.scalar_leaf(), vy = t.scalar_leaf();
    p.scalars = {vx, vy};
    p.aux_cols = 2;
    auto adv = [&](Var u) {  // tc u_t + v . grad u
      return t.add(t.scale(t.shift(u, 2), tc),
                   t.add(t.mul_scalar(vx, t.shift(u, 0)), t.mul_scalar(vy, t.shift(u, 1))));
    };
    auto lap = [&](Var u) { return t.add(t.shift(t.shift(u, 0), 0), t.shift(t.shift(u, 1), 1)); };
    const auto st = emit_state(p, n);
    const Var c = st.c, s = st.s, q = st.q;
    const Var rc = t.add(t.sub(t.scale(adv(c), pe_prior), lap(c)),
                         t.scale(t.square(c), da_prior));
    const Var rs = t.add(t.add(adv(c), t.sub(t.scale(adv(s), pe_prior), lap(s))),
                         t.scale(t.mul(c, s), 2.0 * da_prior));
    const Var rq = t.add(t.sub(t.scale(adv(q), pe_prior), lap(q)),
                         t.add(t.square(c), t.scale(t.mul(c, q), 2.0 * da_prior)));
    p.comps = {{rc, 0, 0}, {rs, 0, 1}, {rq, 0, 1}};
    p.points = sample_points_2d(geom, PointRole::Collocation, counts.collocation, seed, true,
                                t_end);
    p.fill_aux = [vel](const double* cd, double* aux) {
      auto v = vel(cd[0], cd[1]);
      aux[0] = v[0];
      aux[1] = v[1];
    };
    p.sampler = sampler_for(PointRole::Collocation);
    m.progs_.push_back(std::move(p));
  }
  auto flux_prog = [&](PointRole role, int cnt, uint64_t sd,
                       std::function<void(const double*, double*)> normal_of) {
    Prog p(spec);
    auto n = emit_net(p, net.spec, net.scaling);
    Tape& t = p.tape;
    const Var nx = t.scalar_leaf(), ny = t.scalar_leaf();
    p.scalars = {nx, ny};
    p.aux_cols = 2;
    const auto st = emit_state(p, n);
    auto flux = [&](Var u) {
      return t.add(t.mul_scalar(nx, t.shift(u, 0)), t.mul_scalar(ny, t.shift(u, 1)));
    };
    p.comps = {{flux(st.c), 0, 2}, {flux(st.s), 0, 2}, {flux(st.q), 0, 2}};
    p.points = sample_points_2d(geom, role, cnt, sd, true, t_end);
    p.fill_aux = std::move(normal_of);
    p.sampler = sampler_for(role);
    m.progs_.push_back(std::move(p));
  };
  flux_prog(PointRole::WallLow, counts.wall, seed + 2, [](const double*, double* x) {
    x[0] = 0.0;
    x[1] = -1.0;
  });
  flux_prog(PointRole::WallUp, counts.wall, seed + 3, [](const double*, double* x) {
    x[0] = 0.0;
    x[1] = 1.0;
  });
  flux_prog(PointRole::Outlet, counts.outlet, seed + 4, [](const double*, double* x) {
    x[0] = 1.0;
    x[1] = 0.0;
  });
  flux_prog(PointRole::Obstacle, counts.obstacle, seed + 5, [geom](const double* cd, double* x) {
    const double dx = cd[0] - geom.ox(), dy = cd[1] - geom.oy();
    const double r = std::sqrt(dx * dx + dy * dy);
    x[0] = dx / r;
    x[1] = dy / r;
  });
  m.refresh_counts();
  return m;
}


LossModel LossModel::adr2d_inverse(const NetworkParams& net, const VelocityFn& vel,
                                   const Geometry2D& geom, const Nondim& nd,
                                   const std::vector<TimeSeries>& data, double pe_init,
                                   double da_init, const PointCounts& counts, uint64_t seed,
                                   double data_weight) {
  const bool inverse = !data.empty();
  LossModel m;
  m.layer_spec_ = net.spec;
  m.scaling_ = net.scaling;
  m.flat_init_ = net.flat;
  m.n_net_ = net.flat.size();
  m.frozen_ = net.frozen_mask();
  if (inverse) {
    m.flat_init_.push_back(pe_init);
    m.flat_init_.push_back(da_init);
    m.frozen_.push_back(0);
    m.frozen_.push_back(0);
    m.lambda_names_ = {"Pe", "Da"};
  }
  m.terms_ = {{"pde", 1.0, true, 0}, {"flux", 1.0, false, 0}};
  if (inverse) m.terms_.push_back({"data", data_weight, true, 0});
  // The inlet Dirichlet profile and the zero initial condition are imposed
  // through the same output transform as the sensitivity factory, so only the
  // residual and the flux BCs (and sensor data, when present) are trained.
  const JetSpec& spec = specs::adr2d_state();
  const double a = geom.aspect(), t_end = nd.t_end;

  auto emit_c = [a, t_end](LossModel::Prog& p, const NetOnTape& n) {
    Tape& t = p.tape;
    const Var x = n.inputs[0], y = n.inputs[1], tt = n.inputs[2];
    const Var ramp =
        t.add_const(t.neg(t.exp_(t.scale(tt, -1.0 / (kStartupRampFrac * t_end)))), 1.0);
    const Var bx = t.exp_(t.scale(x, -1.0 / kInletBlendLength));
    const Var one_m_bx = t.add_const(t.neg(bx), 1.0);
    const Var cin = t.add_const(t.scale(y, 1.0 / a), 0.3);
    return t.mul(ramp, t.add(t.mul(bx, cin), t.mul(one_m_bx, n.outs[0])));
  };

  auto sampler_for = [geom, t_end](PointRole role) {
    return [geom, role, t_end](int cnt, uint64_t s) {
      return sample_points_2d(geom, role, cnt, s, true, t_end);
    };
  };
  auto lambda_leaves = [&](Prog& p) -> std::pair<Var, Var> {
    const Var pe = p.tape.weight_leaf();
    const Var da = p.tape.weight_leaf();
    return {pe, da};
  };

  {  // transport residual
    Prog p(spec);
    auto n = emit_net(p, net.spec, net.scaling);
    auto [peL, daL] = lambda_leaves(p);
    Tape& t = p.tape;
    const Var vx = t.scalar_leaf(), vy = t.scalar_leaf();
    p.scalars = {vx, vy};
    p.aux_cols = 2;
    const Var c = emit_c(p, n);
    const Var cx = t.shift(c, 0), cy = t.shift(c, 1), ct = t.shift(c, 2);
    const Var adv = t.add(t.scale(ct, nd.time_coeff()),
                          t.add(t.mul_scalar(vx, cx), t.mul_scalar(vy, cy)));
    Var pe_adv, da_c2;
    if (inverse) {
      pe_adv = t.mul_scalar(peL, adv);
      da_c2 = t.mul_scalar(daL, t.square(c));
    } else {
      pe_adv = t.scale(adv, pe_init);
      da_c2 = t.scale(t.square(c), da_init);
    }
    const Var r = t.add(t.sub(pe_adv, t.add(t.shift(cx, 0), t.shift(cy, 1))), da_c2);
    p.comps = {{r, 0, 0}};
    p.points = sample_points_2d(geom, PointRole::Collocation, counts.collocation, seed, true,
                                t_end);
    p.fill_aux = [vel](const double* cd, double* aux) {
      auto v = vel(cd[0], cd[1]);
      aux[0] = v[0];
      aux[1] = v[1];
    };
    p.sampler = sampler_for(PointRole::Collocation);
    m.progs_.push_back(std::move(p));
  }
  auto flux_prog = [&](PointRole role, int cnt, uint64_t sd,
                       std::function<void(const double*, double*)> normal_of) {
    Prog p(spec);
    auto n = emit_net(p, net.spec, net.scaling);
    if (inverse) lambda_leaves(p);
    Tape& t = p.tape;
    const Var nx = t.scalar_leaf(), ny = t.scalar_leaf();
    p.scalars = {nx, ny};
    p.aux_cols = 2;
    const Var c = emit_c(p, n);
    const Var flux = t.add(t.mul_scalar(nx, t.shift(c, 0)), t.mul_scalar(ny, t.shift(c, 1)));
    p.comps = {{flux, 0, 1}};
    p.points = sample_points_2d(geom, role, cnt, sd, true, t_end);
    p.fill_aux = std::move(normal_of);
    p.sampler = sampler_for(role);
    m.progs_.push_back(std::move(p));
  };
  flux_prog(PointRole::WallLow, counts.wall, seed + 2, [](const double*, double* x) {
    x[0] = 0.0;
    x[1] = -1.0;
  });
  flux_prog(PointRole::WallUp, counts.wall, seed + 3, [](const double*, double* x) {
    x[0] = 0.0;
    x[1] = 1.0;
  });
  flux_prog(PointRole::Outlet, counts.outlet, seed + 4, [](const double*, double* x) {
    x[0] = 1.0;
    x[1] = 0.0;
  });
  flux_prog(PointRole::Obstacle, counts.obstacle, seed + 5, [geom](const double* cd, double* x) {
    const double dx = cd[0] - geom.ox(), dy = cd[1] - geom.oy();
    const double r = std::sqrt(dx * dx + dy * dy);
    x[0] = dx / r;
    x[1] = dy / r;
  });
  if (inverse) {  // sensor samples
    Prog p(spec);
    auto n = emit_net(p, net.spec, net.scaling);
    lambda_leaves(p);
    const Var target = p.tape.scalar_leaf();
    p.scalars = {target};
    p.aux_cols = 1;
    p.comps = {{p.tape.sub(emit_c(p, n), target), 0, 2}};
    p.points.dim = 3;
    for (const auto& ts : data)
      for (size_t k = 0; k < ts.times.size(); ++k) {
        p.points.coords.insert(p.points.coords.end(), {ts.x, ts.y, ts.times[k]});
        p.aux.push_back(ts.values[k]);
      }
    m.progs_.push_back(std::move(p));
  }
  m.refresh_counts();
  return m;
}

// -------------------------------------------------------------- evaluation

void LossModel::refresh_counts() {
  for (auto& t : terms_) t.count = 0;
  for (auto& p : progs_) {
    for (const auto& c : p.comps) terms_[c.term].count += long(p.points.size());
    // fill aux rows for any points added since the last refresh
    if (p.aux_cols > 0 && p.aux.size() < p.points.size() * size_t(p.aux_cols)) {
      if (!p.fill_aux) throw std::logic_error("program has aux columns but no fill_aux");
      const size_t first = p.aux.size() / size_t(p.aux_cols);
      p.aux.resize(p.points.size() * size_t(p.aux_cols));
      for (size_t i = first; i < p.points.size(); ++i)
        p.fill_aux(p.points.point(i), p.aux.data() + i * size_t(p.aux_cols));
    }
  }
}

size_t LossModel::total_points() const {
  size_t n = 0;
  for (const auto& p : progs_) n += p.points.size();
  return n;
}

void LossModel::set_frozen_layers(int n) {
  NetworkParams tmp;
  tmp.spec = layer_spec_;
  tmp.flat.assign(n_net_, 0.0);
  tmp.layer_frozen.assign(layer_spec_.num_layers(), 0);
  tmp = apply_freeze(std::move(tmp), n);
  auto mask = tmp.frozen_mask();
  for (size_t i = 0; i < n_net_; ++i) frozen_[i] = mask[i];
}

double LossModel::eval(const std::vector<double>& flat, std::vector<double>* grad,
                       LossBreakdown* bd) const {
  const size_t T = terms_.size();
  std::vector<double> term_sum(T, 0.0);
  if (grad) {
    grad->assign(n_params(), 0.0);
  }
  for (const auto& p : progs_) {
    const size_t N = p.points.size();
    if (N == 0) continue;
    const size_t nb = (N + kBlock - 1) / kBlock;
    std::vector<double> block_sums(nb * T, 0.0);
    const size_t nw = p.tape.num_weights();
    const int nt = thread_count();
    std::vector<std::vector<double>> tgrads;
    if (grad) tgrads.assign(size_t(nt), std::vector<double>(nw, 0.0));

#pragma omp parallel for schedule(static)
    for (long ib = 0; ib < long(nb); ++ib) {
      Tape::Work work = p.tape.make_work();
      p.tape.set_weights(work, std::span<const double>(flat.data(), nw));
      std::vector<double>* g = grad ? &tgrads[size_t(thread_id())] : nullptr;
      std::vector<Tape::Seed> seeds;
      const size_t lo = size_t(ib) * kBlock, hi = std::min(N, lo + kBlock);
      for (size_t i = lo; i < hi; ++i) {
        const double* cd = p.points.point(i);
        for (size_t k = 0; k < p.inputs.size(); ++k) {
          const double v = int(k) < p.points.dim ? cd[k]
                                                 : p.fixed_inputs[k - size_t(p.points.dim)];
          p.tape.set_input(work, p.inputs[k], v);
        }
        for (size_t s = 0; s < p.scalars.size(); ++s)
          p.tape.set_scalar(work, p.scalars[s], p.aux[i * p.aux_cols + s]);
        p.tape.forward(work);
        seeds.clear();
        for (const auto& c : p.comps) {
          const double v = work.vals[c.node.id * size_t(p.tape.spec().size()) + c.coeff];
          block_sums[size_t(ib) * T + c.term] += v * v;
          if (g)
            seeds.push_back({c.node, c.coeff,
                             2.0 * terms_[c.term].weight * v / double(terms_[c.term].count)});
        }
        if (g) p.tape.backward(work, seeds, *g);
      }
    }
    for (size_t ib = 0; ib < nb; ++ib)
      for (size_t t = 0; t < T; ++t) term_sum[t] += block_sums[ib * T + t];
    if (grad)
      for (int t = 0; t < nt; ++t)
        for (size_t i = 0; i < nw; ++i) (*grad)[i] += tgrads[size_t(t)][i];
  }
  double loss = 0.0;
  if (bd) {
    bd->terms = terms_;
    bd->values.assign(T, 0.0);
  }
  for (size_t t = 0; t < T; ++t) {
    const double mse = terms_[t].count ? term_sum[t] / double(terms_[t].count) : 0.0;
    loss += terms_[t].weight * mse;
    if (bd) bd->values[t] = mse;
  }
  if (bd) bd->total = loss;
  return loss;
}

double LossModel::eval_reference(const std::vector<double>& flat, std::vector<double>* grad,
                                 LossBreakdown* bd) const {
  const size_t T = terms_.size();
  std::vector<double> term_sum(T, 0.0);
  if (grad) grad->assign(n_params(), 0.0);
  for (const auto& p : progs_) {
    const size_t N = p.points.size();
    if (N == 0) continue;
    Tape::Work work = p.tape.make_work();
    const size_t nw = p.tape.num_weights();
    p.tape.set_weights(work, std::span<const double>(flat.data(), nw));
    std::vector<Tape::Seed> seeds;
    std::vector<double> pg(grad ? nw : 0, 0.0);
    for (size_t i = 0; i < N; ++i) {
      const double* cd = p.points.point(i);
      for (size_t k = 0; k < p.inputs.size(); ++k) {
        const double v =
            int(k) < p.points.dim ? cd[k] : p.fixed_inputs[k - size_t(p.points.dim)];
        p.tape.set_input(work, p.inputs[k], v);
      }
      for (size_t s = 0; s < p.scalars.size(); ++s)
        p.tape.set_scalar(work, p.scalars[s], p.aux[i * p.aux_cols + s]);
      p.tape.forward(work);
      seeds.clear();
      for (const auto& c : p.comps) {
        const double v = work.vals[c.node.id * size_t(p.tape.spec().size()) + c.coeff];
        term_sum[c.term] += v * v;
        if (grad)
          seeds.push_back({c.node, c.coeff,
                           2.0 * terms_[c.term].weight * v / double(terms_[c.term].count)});
      }
      if (grad) p.tape.backward(work, seeds, pg);
    }
    if (grad)
      for (size_t i = 0; i < nw; ++i) (*grad)[i] += pg[i];
  }
  double loss = 0.0;
  if (bd) {
    bd->terms = terms_;
    bd->values.assign(T, 0.0);
  }
  for (size_t t = 0; t < T; ++t) {
    const double mse = terms_[t].count ? term_sum[t] / double(terms_[t].count) : 0.0;
    loss += terms_[t].weight * mse;
    if (bd) bd->values[t] = mse;
  }
  if (bd) bd->total = loss;
  return loss;
}

std::vector<double> LossModel::term_grad_norms(const std::vector<double>& flat) const {
  const size_t T = terms_.size();
  std::vector<std::vector<double>> tg(T, std::vector<double>(n_params(), 0.0));
  for (const auto& p : progs_) {
    const size_t N = p.points.size();
    if (N == 0) continue;
    const size_t nw = p.tape.num_weights();
    const size_t nb = (N + kBlock - 1) / kBlock;
    const int nt = thread_count();
    // per-thread, per-term buffers
    std::vector<std::vector<double>> buf(size_t(nt) * T, std::vector<double>(nw, 0.0));
#pragma omp parallel for schedule(static)
    for (long ib = 0; ib < long(nb); ++ib) {
      Tape::Work work = p.tape.make_work();
      p.tape.set_weights(work, std::span<const double>(flat.data(), nw));
      const size_t base = size_t(thread_id()) * T;
      const size_t lo = size_t(ib) * kBlock, hi = std::min(N, lo + kBlock);
      std::vector<Tape::Seed> seed(1);
      for (size_t i = lo; i < hi; ++i) {
        const double* cd = p.points.point(i);
        for (size_t k = 0; k < p.inputs.size(); ++k) {
          const double v =
              int(k) < p.points.dim ? cd[k] : p.fixed_inputs[k - size_t(p.points.dim)];
          p.tape.set_input(work, p.inputs[k], v);
        }
        for (size_t s = 0; s < p.scalars.size(); ++s)
          p.tape.set_scalar(work, p.scalars[s], p.aux[i * p.aux_cols + s]);
        p.tape.forward(work);
        for (const auto& c : p.comps) {
          const double v = work.vals[c.node.id * size_t(p.tape.spec().size()) + c.coeff];
          seed[0] = {c.node, c.coeff, 2.0 * v / double(terms_[c.term].count)};
          p.tape.backward(work, seed, buf[base + size_t(c.term)]);
        }
      }
    }
    for (int t = 0; t < nt; ++t)
      for (size_t term = 0; term < T; ++term)
        for (size_t i = 0; i < nw; ++i) tg[term][i] += buf[size_t(t) * T + term][i];
  }
  std::vector<double> norms(T, 0.0);
  for (size_t t = 0; t < T; ++t) {
    double s = 0.0;
    for (double v : tg[t]) s += v * v;
    norms[t] = std::sqrt(s);
  }
  return norms;
}

void LossModel::update_dynamic_weights(const std::vector<double>& flat, double rho) {
  auto norms = term_grad_norms(flat);
  double gmax = 0.0;
  for (double n : norms) gmax = std::max(gmax, n);
  if (gmax == 0.0) return;
  for (size_t t = 0; t < terms_.size(); ++t) {
    if (terms_[t].pinned) continue;
    // Clamp the balancing ratio: near-converged terms have vanishing gradients
    // and would otherwise acquire unbounded weights.
    const double target = std::min(gmax / (norms[t] + 1e-12), 100.0);
    terms_[t].weight = (1.0 - rho) * terms_[t].weight + rho * target;
  }
}

void LossModel::rar_resample(const std::vector<double>& flat,
                             const std::map<std::string, int>& add, uint64_t seed) {
  std::mt19937_64 rng(seed);
  for (auto& p : progs_) {
    if (!p.sampler) continue;
    const auto it = add.find(role_name(p.points.role));
    if (it == add.end() || it->second <= 0) continue;
    const int k = it->second;
    PointSet pool = p.sampler(10 * k, rng());
    std::vector<double> pool_aux(pool.size() * size_t(p.aux_cols), 0.0);
    if (p.fill_aux)
      for (size_t i = 0; i < pool.size(); ++i)
        p.fill_aux(pool.point(i), pool_aux.data() + i * p.aux_cols);

    Tape::Work work = p.tape.make_work();
    const size_t nw = p.tape.num_weights();
    p.tape.set_weights(work, std::span<const double>(flat.data(), nw));
    std::vector<double> r2(pool.size(), 0.0);
    for (size_t i = 0; i < pool.size(); ++i) {
      const double* cd = pool.point(i);
      for (size_t kk = 0; kk < p.inputs.size(); ++kk) {
        const double v =
            int(kk) < pool.dim ? cd[kk] : p.fixed_inputs[kk - size_t(pool.dim)];
        p.tape.set_input(work, p.inputs[kk], v);
      }
      for (size_t s = 0; s < p.scalars.size(); ++s)
        p.tape.set_scalar(work, p.scalars[s], pool_aux[i * p.aux_cols + s]);
      p.tape.forward(work);
      for (const auto& c : p.comps) {
        const double v = work.vals[c.node.id * size_t(p.tape.spec().size()) + c.coeff];
        r2[i] += v * v;
      }
    }
    double mean = std::accumulate(r2.begin(), r2.end(), 0.0) / double(pool.size());
    if (mean <= 0.0) mean = 1.0;
    // weighted sampling without replacement (exponential-keys method)
    std::vector<std::pair<double, size_t>> keys(pool.size());
    for (size_t i = 0; i < pool.size(); ++i) {
      const double w = r2[i] / mean + 1.0;
      keys[i] = {std::pow(std::max(u01(rng), 1e-300), 1.0 / w), i};
    }
    std::partial_sort(keys.begin(), keys.begin() + k, keys.end(),
                      [](const auto& a, const auto& b) { return a.first > b.first; });
    for (int i = 0; i < k; ++i) {
      const size_t q = keys[size_t(i)].second;
      p.points.coords.insert(p.points.coords.end(), pool.point(q), pool.point(q) + pool.dim);
      for (int s = 0; s < p.aux_cols; ++s)
        p.aux.push_back(pool_aux[q * size_t(p.aux_cols) + size_t(s)]);
    }
  }
  refresh_counts();
}

// ----------------------------------------------------------------- training

TrainResult train(LossModel& model, const TrainConfig& cfg, std::ostream* history) {
  std::vector<double> flat = model.initial_flat();
  const auto& frozen = model.frozen_mask();
  const bool has_lambda = !model.lambda_names().empty();
  TrainResult res;

  if (history) {
    *history << "iteration,loss";
    for (const auto& t : model.terms()) *history << "," << t.name;
    for (const auto& t : model.terms()) *history << ",w_" << t.name;
    for (const auto& n : model.lambda_names()) *history << "," << n;
    *history << "\n";
  }
  auto log_row = [&](long it, double loss, const LossBreakdown& bd) {
    if (!history) return;
    *history << it << "," << loss;
    for (double v : bd.values) *history << "," << v;
    for (const auto& t : model.terms()) *history << "," << t.weight;
    for (size_t k = 0; k < model.lambda_names().size(); ++k)
      *history << "," << flat[model.n_net_params() + k];
    *history << "\n";
  };
  auto record_lambda = [&]() {
    if (!has_lambda) return;
    std::map<std::string, double> row;
    for (size_t k = 0; k < model.lambda_names().size(); ++k)
      row[model.lambda_names()[k]] = flat[model.n_net_params() + k];
    res.lambda_history.push_back(std::move(row));
  };

  std::vector<double> g(flat.size());
  LossBreakdown bd;
  long iter = 0;
  double loss = 0.0;

  AdamState adam = AdamState::make(flat.size(), cfg.adam_lr);
  for (long it = 1; it <= cfg.adam_iters; ++it) {
    loss = model.eval(flat, &g, &bd);
    if (!std::isfinite(loss) || loss > cfg.divergence_loss)
      throw DivergenceError("training diverged at iteration " + std::to_string(iter));
    adam_step(adam, flat, g, frozen);
    ++iter;
    record_lambda();
    if (cfg.dynamic_weights && cfg.weight_every > 0 && it % cfg.weight_every == 0)
      model.update_dynamic_weights(flat, cfg.weight_rho);
    if (cfg.rar_every > 0 && it % cfg.rar_every == 0 && !cfg.rar_add.empty())
      model.rar_resample(flat, cfg.rar_add, cfg.seed + uint64_t(it));
    if (cfg.lr_decay_every > 0 && it % cfg.lr_decay_every == 0) adam.lr *= cfg.lr_decay;
    if (history && (has_lambda || it % std::max<long>(1, cfg.log_every) == 0 || it == 1))
      log_row(iter, loss, bd);
  }

  LbfgsState lb = LbfgsState::make();
  auto fn = [&](const std::vector<double>& x, std::vector<double>& gg) {
    return model.eval(x, &gg, nullptr);
  };
  for (long it = 1; it <= cfg.lbfgs_iters; ++it) {
    loss = lbfgs_step(lb, flat, fn, frozen);
    if (!std::isfinite(loss) || loss > cfg.divergence_loss)
      throw DivergenceError("training diverged at iteration " + std::to_string(iter));
    ++iter;
    record_lambda();
    if (cfg.rar_every > 0 && it % cfg.rar_every == 0 && !cfg.rar_add.empty()) {
      model.rar_resample(flat, cfg.rar_add, cfg.seed + 1000000 + uint64_t(it));
      lb.reset_history();
    }
    if (history && (has_lambda || it % std::max<long>(1, cfg.log_every) == 0)) {
      model.eval(flat, nullptr, &bd);
      log_row(iter, loss, bd);
    }
  }

  model.eval(flat, nullptr, &bd);
  res.flat = std::move(flat);
  res.final_loss = bd.total;
  res.breakdown = bd;
  res.iters = iter;
  for (size_t k = 0; k < model.lambda_names().size(); ++k)
    res.lambda[model.lambda_names()[k]] = res.flat[model.n_net_params() + k];
  return res;
}

NetworkParams result_params(const LossModel& model, const TrainResult& res) {
  NetworkParams p;
  p.spec = model.layer_spec();
  p.scaling = model.scaling();
  p.flat.assign(res.flat.begin(), res.flat.begin() + long(model.n_net_params()));
  p.layer_frozen.assign(p.spec.num_layers(), 0);
  return p;
}

}  // namespace pinnplace
