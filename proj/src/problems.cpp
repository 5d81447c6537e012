#include "pinnplace/problems.hpp"

#include <cmath>
#include <random>
#include <stdexcept>

namespace pinnplace {

namespace {

double u01(std::mt19937_64& rng) { return double(rng() >> 11) * 0x1.0p-53; }

constexpr double kPi = 3.14159265358979323846;

}  // namespace

std::string role_name(PointRole r) {
  switch (r) {
    case PointRole::Collocation: return "collocation";
    case PointRole::Inlet: return "inlet";
    case PointRole::Outlet: return "outlet";
    case PointRole::WallUp: return "wall_up";
    case PointRole::WallLow: return "wall_low";
    case PointRole::Obstacle: return "obstacle";
    case PointRole::Initial: return "initial";
  }
  return "?";
}

PointSet sample_points_1d(double lo, double hi, int count) {
  if (count < 2) throw std::invalid_argument("sample_points_1d: count < 2");
  PointSet ps;
  ps.dim = 1;
  ps.coords.resize(count);
  const double h = (hi - lo) / (count - 1);
  for (int i = 0; i < count; ++i) ps.coords[i] = lo + h * i;
  ps.attempts = size_t(count);
  return ps;
}

PointSet sample_points_2d(const Geometry2D& geom, PointRole role, int count, uint64_t seed,
                          bool with_time, double t_end) {
  PointSet ps;
  ps.role = role;
  ps.dim = with_time ? 3 : 2;
  ps.coords.reserve(size_t(count) * ps.dim);
  std::mt19937_64 rng(seed);
  const double a = geom.aspect();
  auto push = [&](double x, double y) {
    ps.coords.push_back(x);
    ps.coords.push_back(y);
    if (with_time) {
      // Initial condition points sit at t = 0; everything else is uniform in
      // (0, t_end].
      ps.coords.push_back(role == PointRole::Initial ? 0.0 : t_end * (1.0 - u01(rng)));
    }
  };
  switch (role) {
    case PointRole::Collocation:
    case PointRole::Initial:
      for (int i = 0; i < count;) {
        const double x = u01(rng), y = a * u01(rng);
        ++ps.attempts;
        if (geom.inside_obstacle(x, y)) continue;
        push(x, y);
        ++i;
      }
      break;
    case PointRole::Inlet:
      for (int i = 0; i < count; ++i) push(0.0, a * u01(rng));
      break;
    case PointRole::Outlet:
      for (int i = 0; i < count; ++i) push(1.0, a * u01(rng));
      break;
    case PointRole::WallLow:
      for (int i = 0; i < count; ++i) push(u01(rng), 0.0);
      break;
    case PointRole::WallUp:
      for (int i = 0; i < count; ++i) push(u01(rng), a);
      break;
    case PointRole::Obstacle:
      ps.normals.reserve(size_t(count) * 2);
      for (int i = 0; i < count; ++i) {
        const double th = 2.0 * kPi * u01(rng);
        const double nx = std::cos(th), ny = std::sin(th);
        push(geom.ox() + geom.r() * nx, geom.oy() + geom.r() * ny);
        ps.normals.push_back(nx);
        ps.normals.push_back(ny);
      }
      break;
  }
  if (ps.attempts == 0) ps.attempts = size_t(count);
  return ps;
}

double inlet_velocity_profile(double y, double aspect) {
  const double yh = y / aspect;
  return 6.0 * yh * (1.0 - yh);
}

double inlet_concentration(double y, double aspect) { return y / aspect + 0.3; }

Jet residual_adr1d(const Jet& c, const Jet& pe, double da) {
  const Jet cx = jet_shift(c, 0);
  const Jet cxx = jet_shift(cx, 0);
  return jet_mul(pe, cx) - cxx + jet_scale(jet_square(c), da);
}

NsResidual residual_ns2d(const Jet& vx, const Jet& vy, const Jet& p, double re) {
  const Jet vx_x = jet_shift(vx, 0), vx_y = jet_shift(vx, 1);
  const Jet vy_x = jet_shift(vy, 0), vy_y = jet_shift(vy, 1);
  const Jet lap_vx = jet_shift(vx_x, 0) + jet_shift(vx_y, 1);
  const Jet lap_vy = jet_shift(vy_x, 0) + jet_shift(vy_y, 1);
  NsResidual r;
  r.mx = jet_mul(vx, vx_x) + jet_mul(vy, vx_y) + jet_shift(p, 0) - jet_scale(lap_vx, 1.0 / re);
  r.my = jet_mul(vx, vy_x) + jet_mul(vy, vy_y) + jet_shift(p, 1) - jet_scale(lap_vy, 1.0 / re);
  r.cont = vx_x + vy_y;
  return r;
}

Jet residual_adr2d(const Jet& c, double vx, double vy, const Jet& pe, const Jet& da,
                   const Nondim& nd) {
  const Jet cx = jet_shift(c, 0), cy = jet_shift(c, 1), ct = jet_shift(c, 2);
  const Jet lap = jet_shift(cx, 0) + jet_shift(cy, 1);
  const Jet adv = jet_scale(ct, nd.time_coeff()) + jet_scale(cx, vx) + jet_scale(cy, vy);
  return jet_mul(pe, adv) - lap + jet_mul(da, jet_square(c));
}

std::vector<Jet> bc_residuals(BcKind kind, const double* point, const double* normal,
                              const std::vector<Jet>& state, const Nondim& nd) {
  const double a = nd.aspect();
  switch (kind) {
    case BcKind::FlowInlet:
      return {jet_add_const(state[0], -inlet_velocity_profile(point[1], a)), state[1]};
    case BcKind::FlowWall:
      return {state[0], state[1]};
    case BcKind::FlowOutlet:
      return {state[2]};
    case BcKind::MassInlet:
      return {jet_add_const(state[0], -inlet_concentration(point[1], a))};
    case BcKind::MassFlux: {
      const Jet gx = jet_shift(state[0], 0), gy = jet_shift(state[0], 1);
      return {jet_scale(gx, normal[0]) + jet_scale(gy, normal[1])};
    }
    case BcKind::MassInitial:
      return {state[0]};
  }
  throw std::logic_error("bc_residuals: bad kind");
}

}  // namespace pinnplace
