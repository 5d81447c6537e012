#pragma once

#include <array>
#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "pinnplace/jet.hpp"

namespace pinnplace {

/// Physical constants and derived dimensionless groups for the 2D channel.
struct Nondim {
  double rho = 1000.0;   // kg/m^3
  double mu = 0.001;     // Pa s
  double U = 0.00125;    // m/s mean inlet velocity
  double L = 0.24;       // m channel length (characteristic length)
  double H = 0.14;       // m channel height
  double tau = 4000.0;   // s characteristic time
  double c0 = 1.0;       // kg/m^3 concentration scale
  double t_end = 0.03;   // dimensionless observation horizon

  double reynolds() const { return rho * U * L / mu; }
  double time_coeff() const { return L / (tau * U); }
  double aspect() const { return H / L; }
};

struct Geometry2D {
  double length_m = 0.24, height_m = 0.14;
  double obstacle_x_m = 0.09, obstacle_y_m = 0.07, radius_m = 0.01;

  double aspect() const { return height_m / length_m; }
  double ox() const { return obstacle_x_m / length_m; }
  double oy() const { return obstacle_y_m / length_m; }
  double r() const { return radius_m / length_m; }

  bool inside_obstacle(double x, double y) const {
    const double dx = x - ox(), dy = y - oy();
    return dx * dx + dy * dy < r() * r();
  }
  bool inside_channel(double x, double y) const {
    return x >= 0.0 && x <= 1.0 && y >= 0.0 && y <= aspect();
  }
  bool feasible(double x, double y) const {
    return inside_channel(x, y) && !inside_obstacle(x, y);
  }
};

enum class PointRole { Collocation, Inlet, Outlet, WallUp, WallLow, Obstacle, Initial };

std::string role_name(PointRole);

struct PointSet {
  PointRole role = PointRole::Collocation;
  int dim = 0;                  // columns per point (x | x,y | x,y,t)
  std::vector<double> coords;   // row-major
  std::vector<double> normals;  // 2 columns for obstacle points, else empty
  size_t attempts = 0;          // rejection-sampling attempts (2D collocation)

  size_t size() const { return dim ? coords.size() / dim : 0; }
  const double* point(size_t i) const { return coords.data() + i * dim; }
};

/// 1D equispaced grid over [lo, hi].
PointSet sample_points_1d(double lo, double hi, int count);

/// 2D channel sampling. Interior points are uniform with obstacle rejection;
/// boundary points uniform on their segment or circle; with_time appends a
/// uniform t in (0, t_end] (Initial role pins t = 0).
PointSet sample_points_2d(const Geometry2D& geom, PointRole role, int count, uint64_t seed,
                          bool with_time = false, double t_end = 0.0);

// Dimensionless boundary profiles.
/// Width, in r^2 units, of the Gaussian blend that pins the streamfunction to
/// its stagnation value (with zero gradient) on the obstacle boundary. Shared
/// by the flow loss and the derived-velocity evaluation.
inline constexpr double kFlowObstacleBlend = 0.01;

/// Hard inlet/initial-condition constraints of the 2D transport networks:
/// c = r(t) [ b(x) c_in(y) + (1 - b(x)) N_c ] with b(x) = exp(-x / length)
/// and r(t) = 1 - exp(-t / (frac * t_end)); sensitivities carry the factor
/// r(t) (1 - b(x)). The ramp resolves the inlet/initial incompatibility at
/// the t = 0 slice on roughly the oracle's first-step scale.
inline constexpr double kInletBlendLength = 0.05;
inline constexpr double kStartupRampFrac = 0.02;

double inlet_velocity_profile(double y, double aspect);  // parabolic, mean 1
double inlet_concentration(double y, double aspect);     // y*L/H + 0.3

/// r = Pe c_x - c_xx + Da c^2 over the (x, Pe) jet spec.
Jet residual_adr1d(const Jet& c, const Jet& pe, double da);

struct NsResidual {
  Jet mx, my, cont;
};
/// Steady incompressible Navier-Stokes over the (x, y) jet spec.
NsResidual residual_ns2d(const Jet& vx, const Jet& vy, const Jet& p, double re);

/// r = Pe tc c_t + Pe (v . grad c) - lap c + Da c^2 over (x, y, t[, Pe, Da]).
/// pe/da may be input jets (sensitivity nets) or constant jets.
Jet residual_adr2d(const Jet& c, double vx, double vy, const Jet& pe, const Jet& da,
                   const Nondim& nd);

enum class BcKind {
  FlowInlet,      // vx - profile (component 0), vy (component 1)
  FlowWall,       // vx, vy
  FlowOutlet,     // p
  MassInlet,      // c - (y L/H + 0.3)
  MassFlux,       // n . grad c (walls, outlet, obstacle)
  MassInitial,    // c - 0
};

/// Defect jets for a boundary point; the meaning of the state jets depends on
/// the kind (flow kinds: vx, vy, p; mass kinds: c).
std::vector<Jet> bc_residuals(BcKind kind, const double* point, const double* normal,
                              const std::vector<Jet>& state, const Nondim& nd);

}  // namespace pinnplace
