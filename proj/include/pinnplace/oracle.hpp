#pragma once

#include <array>
#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "pinnplace/net.hpp"
#include "pinnplace/problems.hpp"

namespace pinnplace {

// ---------------------------------------------------------------- 1D oracle

struct Grid1D {
  int n = 2001;
  double lo = 0.0, hi = 10.0;

  double h() const { return (hi - lo) / (n - 1); }
  double x(int i) const { return lo + h() * i; }
};

struct Adr1dConfig {
  double c_inlet = 1.0;                          // Dirichlet value at lo
  std::function<double(double)> source;          // optional manufactured source
  double newton_tol = 1e-12;
  int max_newton = 50;
};

/// Steady Pe c_x = c_xx - Da c^2 with Dirichlet inlet and zero-gradient
/// outlet (second-order ghost); damped Newton with a tridiagonal solve.
std::vector<double> fd_solve_adr1d(double pe, double da, const Grid1D& g,
                                   const Adr1dConfig& cfg = {});

/// dc/dPe by central parameter differences, delta = 1e-4 max(1, |Pe|).
std::vector<double> fd_sensitivity_1d(double pe, double da, const Grid1D& g);

double interp_1d(const Grid1D& g, const std::vector<double>& v, double x);

// ---------------------------------------------------------------- 2D grids

struct Grid2D {
  int nx = 0, ny = 0;
  double lx = 1.0, ly = 7.0 / 12.0;
  std::vector<uint8_t> mask;  // 1 = fluid node

  static Grid2D make(const Geometry2D& geom, int nx, int ny);

  double hx() const { return lx / (nx - 1); }
  double hy() const { return ly / (ny - 1); }
  double x(int i) const { return hx() * i; }
  double y(int j) const { return hy() * j; }
  size_t idx(int i, int j) const { return size_t(j) * nx + i; }
  bool active(int i, int j) const { return mask[idx(i, j)] != 0; }
  size_t size() const { return size_t(nx) * ny; }
};

/// Node-collocated velocity samples with a small text format:
/// header "VGRID1 nx ny Lx Ly", then one "i j vx vy" row per node.
struct VelocityGrid {
  int nx = 0, ny = 0;
  double lx = 1.0, ly = 7.0 / 12.0;
  std::vector<double> vx, vy;  // row-major, j * nx + i

  void save(const std::string& path) const;
  static VelocityGrid load(const std::string& path);
  std::array<double, 2> interp(double x, double y) const;  // bilinear
};

/// Velocity implied by a trained flow network (outputs psi_raw, p): the
/// streamfunction blends the inlet profile integral with its stagnation value
/// on the obstacle and masks the learned correction at all solid boundaries,
/// then v = (psi_y, -psi_x). Mirrors the construction in the flow loss.
std::array<double, 2> flow_velocity(const NetworkParams& flow_net, const Geometry2D& geom,
                                    double x, double y);

/// Samples the flow-network velocity onto grid nodes; obstacle nodes get zero
/// velocity.
VelocityGrid velocity_from_net(const NetworkParams& flow_net, const Grid2D& g,
                               const Geometry2D& geom);

/// Divergence-free potential flow around the obstacle (uniform + doublet);
/// analytic stand-in used by tests so the transport oracle can be exercised
/// without a trained flow model.
VelocityGrid analytic_test_velocity(const Grid2D& g, const Geometry2D& geom);

/// RMS of the discrete divergence over interior fluid nodes.
double velocity_divergence_rms(const VelocityGrid& v, const Grid2D& g);

// ------------------------------------------------------------ 2D transport

struct Adr2dConfig {
  double dt = 2.5e-4;
  double t_end = 0.03;
  double sample_every = 3.0 / 4000.0;  // dimensionless spacing of stored snapshots
  enum class Advection { Upwind, Central };
  Advection advection = Advection::Upwind;
  int newton_iters = 3;
  std::function<double(double, double, double)> source;  // (x, y, t)
  std::function<double(double, double)> inlet;           // c_in(y, t); default profile
  std::function<double(double, double)> initial;         // c(x, y, 0); default zero
  Nondim nd;
};

struct Solution2D {
  Grid2D grid;
  std::vector<double> times;
  std::vector<std::vector<double>> snapshots;

  /// Mask-aware bilinear interpolation of snapshot k.
  double interp(int k, double x, double y) const;
  /// Linear interpolation in time between bracketing snapshots.
  double value(double x, double y, double t) const;
};

/// Fully implicit (backward Euler) transport solve of
/// Pe (tc c_t + v . grad c) = lap c - Da c^2, c(0) = 0, Dirichlet inlet,
/// zero-flux walls/outlet/obstacle via mirrored ghosts. Newton-linearized
/// each step; sparse LU on a fixed pattern.
Solution2D fd_solve_adr2d(double pe, double da, const VelocityGrid& vel, const Grid2D& g,
                          const Adr2dConfig& cfg);

/// Parameter sensitivities (dc/dPe, dc/dDa) by central differences with
/// delta = 1e-4 max(1, |lambda|): four extra solves.
std::pair<Solution2D, Solution2D> fd_sensitivity_2d(double pe, double da,
                                                    const VelocityGrid& vel, const Grid2D& g,
                                                    const Adr2dConfig& cfg);

// ------------------------------------------------------------- time series

struct TimeSeries {
  int sensor_id = 0;
  double x = 0.0, y = 0.0;
  std::vector<double> times;   // dimensionless
  std::vector<double> values;
};

/// Samples the solution at sensor locations at every stored snapshot time.
/// With noise, each sample is drawn from N(c, (sigma_rel c)^2), deterministic
/// in the seed.
std::vector<TimeSeries> make_timeseries(const Solution2D& sol,
                                        const std::vector<std::array<double, 2>>& sensors,
                                        bool noise, double sigma_rel, uint64_t seed);

/// CSV with header sensor_id,x,y,t,c.
void save_timeseries_csv(const std::string& path, const std::vector<TimeSeries>& series);
std::vector<TimeSeries> load_timeseries_csv(const std::string& path);

}  // namespace pinnplace
