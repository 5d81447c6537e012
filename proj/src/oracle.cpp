#include "pinnplace/oracle.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <random>
#include <sstream>
#include <stdexcept>

#include <Eigen/Sparse>

namespace pinnplace {

namespace {

double u01(std::mt19937_64& rng) { return double(rng() >> 11) * 0x1.0p-53; }

double normal01(std::mt19937_64& rng) {
  const double u1 = std::max(u01(rng), 0x1.0p-53);
  const double u2 = u01(rng);
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * 3.14159265358979323846 * u2);
}

void thomas_solve(std::vector<double>& sub, std::vector<double>& diag, std::vector<double>& sup,
                  std::vector<double>& rhs) {
  const int n = int(diag.size());
  for (int i = 1; i < n; ++i) {
    const double w = sub[i] / diag[i - 1];
    diag[i] -= w * sup[i - 1];
    rhs[i] -= w * rhs[i - 1];
  }
  rhs[n - 1] /= diag[n - 1];
  for (int i = n - 2; i >= 0; --i) rhs[i] = (rhs[i] - sup[i] * rhs[i + 1]) / diag[i];
}

}  // namespace

// ---------------------------------------------------------------- 1D oracle

std::vector<double> fd_solve_adr1d(double pe, double da, const Grid1D& g,
                                   const Adr1dConfig& cfg) {
  const int n = g.n;
  const double h = g.h();
  std::vector<double> c(n, cfg.c_inlet);

  auto residual = [&](const std::vector<double>& u, std::vector<double>& f) {
    f[0] = u[0] - cfg.c_inlet;
    for (int i = 1; i < n - 1; ++i) {
      f[i] = pe * (u[i + 1] - u[i - 1]) / (2 * h) - (u[i + 1] - 2 * u[i] + u[i - 1]) / (h * h) +
             da * u[i] * u[i];
      if (cfg.source) f[i] -= cfg.source(g.x(i));
    }
    // zero-gradient outlet through the mirrored ghost u[n] = u[n-2]
    f[n - 1] = -(2 * u[n - 2] - 2 * u[n - 1]) / (h * h) + da * u[n - 1] * u[n - 1];
    if (cfg.source) f[n - 1] -= cfg.source(g.x(n - 1));
  };

  std::vector<double> f(n), fn(n);
  auto norm_inf = [](const std::vector<double>& v) {
    double m = 0.0;
    for (double x : v) m = std::max(m, std::abs(x));
    return m;
  };

  residual(c, f);
  for (int it = 0; it < cfg.max_newton && norm_inf(f) > cfg.newton_tol; ++it) {
    std::vector<double> sub(n, 0.0), diag(n, 0.0), sup(n, 0.0), rhs(n);
    diag[0] = 1.0;
    for (int i = 1; i < n - 1; ++i) {
      sub[i] = -pe / (2 * h) - 1.0 / (h * h);
      diag[i] = 2.0 / (h * h) + 2.0 * da * c[i];
      sup[i] = pe / (2 * h) - 1.0 / (h * h);
    }
    sub[n - 1] = -2.0 / (h * h);
    diag[n - 1] = 2.0 / (h * h) + 2.0 * da * c[n - 1];
    for (int i = 0; i < n; ++i) rhs[i] = -f[i];
    thomas_solve(sub, diag, sup, rhs);

    double step = 1.0;
    for (int half = 0; half < 30; ++half) {
      std::vector<double> trial = c;
      for (int i = 0; i < n; ++i) trial[i] += step * rhs[i];
      residual(trial, fn);
      if (norm_inf(fn) < norm_inf(f) || half == 29) {
        c.swap(trial);
        f.swap(fn);
        break;
      }
      step *= 0.5;
    }
  }
  if (norm_inf(f) > 1e-8) throw std::runtime_error("fd_solve_adr1d: Newton did not converge");
  return c;
}

std::vector<double> fd_sensitivity_1d(double pe, double da, const Grid1D& g) {
  const double d = 1e-4 * std::max(1.0, std::abs(pe));
  const auto cp = fd_solve_adr1d(pe + d, da, g);
  const auto cm = fd_solve_adr1d(pe - d, da, g);
  std::vector<double> s(g.n);
  for (int i = 0; i < g.n; ++i) s[i] = (cp[i] - cm[i]) / (2 * d);
  return s;
}

double interp_1d(const Grid1D& g, const std::vector<double>& v, double x) {
  const double h = g.h();
  double r = (x - g.lo) / h;
  r = std::clamp(r, 0.0, double(g.n - 1));
  const int i = std::min(int(r), g.n - 2);
  const double f = r - i;
  return (1.0 - f) * v[i] + f * v[i + 1];
}

// ---------------------------------------------------------------- 2D grids

Grid2D Grid2D::make(const Geometry2D& geom, int nx, int ny) {
  Grid2D g;
  g.nx = nx;
  g.ny = ny;
  g.lx = 1.0;
  g.ly = geom.aspect();
  g.mask.assign(g.size(), 1);
  for (int j = 0; j < ny; ++j)
    for (int i = 0; i < nx; ++i)
      if (geom.inside_obstacle(g.x(i), g.y(j))) g.mask[g.idx(i, j)] = 0;
  return g;
}

void VelocityGrid::save(const std::string& path) const {
  std::ofstream f(path);
  if (!f) throw std::runtime_error("cannot write " + path);
  f << "VGRID1 " << nx << " " << ny << " ";
  char buf[128];
  std::snprintf(buf, sizeof buf, "%.17g %.17g\n", lx, ly);
  f << buf;
  for (int j = 0; j < ny; ++j)
    for (int i = 0; i < nx; ++i) {
      const size_t k = size_t(j) * nx + i;
      std::snprintf(buf, sizeof buf, "%d %d %.17g %.17g\n", i, j, vx[k], vy[k]);
      f << buf;
    }
}

VelocityGrid VelocityGrid::load(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw std::runtime_error("cannot read " + path);
  std::string magic;
  VelocityGrid v;
  f >> magic >> v.nx >> v.ny >> v.lx >> v.ly;
  if (magic != "VGRID1" || v.nx < 2 || v.ny < 2)
    throw std::runtime_error("bad velocity grid header in " + path);
  v.vx.assign(size_t(v.nx) * v.ny, 0.0);
  v.vy.assign(size_t(v.nx) * v.ny, 0.0);
  int i, j;
  double a, b;
  size_t rows = 0;
  while (f >> i >> j >> a >> b) {
    if (i < 0 || i >= v.nx || j < 0 || j >= v.ny)
      throw std::runtime_error("velocity grid index out of range in " + path);
    v.vx[size_t(j) * v.nx + i] = a;
    v.vy[size_t(j) * v.nx + i] = b;
    ++rows;
  }
  if (rows != size_t(v.nx) * v.ny)
    throw std::runtime_error("velocity grid row count mismatch in " + path);
  return v;
}

std::array<double, 2> VelocityGrid::interp(double x, double y) const {
  const double hx = lx / (nx - 1), hy = ly / (ny - 1);
  double rx = std::clamp(x / hx, 0.0, double(nx - 1));
  double ry = std::clamp(y / hy, 0.0, double(ny - 1));
  const int i = std::min(int(rx), nx - 2), j = std::min(int(ry), ny - 2);
  const double fx = rx - i, fy = ry - j;
  auto at = [&](int ii, int jj, const std::vector<double>& v) {
    return v[size_t(jj) * nx + ii];
  };
  auto bil = [&](const std::vector<double>& v) {
    return (1 - fx) * (1 - fy) * at(i, j, v) + fx * (1 - fy) * at(i + 1, j, v) +
           (1 - fx) * fy * at(i, j + 1, v) + fx * fy * at(i + 1, j + 1, v);
  };
  return {bil(vx), bil(vy)};
}

std::array<double, 2> flow_velocity(const NetworkParams& flow_net, const Geometry2D& geom,
                                    double x, double y) {
  const JetSpec& s = specs::flow2d();
  const std::vector<Jet> in = {jet_input(s, 0, x), jet_input(s, 1, y)};
  const auto outs = forward(flow_net, in);
  const double a = geom.aspect();
  const Jet& xj = in[0];
  const Jet& yj = in[1];
  const Jet g = jet_mul(yj, jet_neg(jet_add_const(yj, -a)));  // y (a - y)
  const Jet w = jet_scale(jet_square(g), 16.0 / (a * a * a * a));
  const Jet y2 = jet_square(yj);
  const Jet psi_in = jet_sub(jet_scale(y2, 3.0 / a), jet_scale(jet_mul(y2, yj), 2.0 / (a * a)));
  const Jet sd = jet_add_const(jet_add(jet_square(jet_add_const(xj, -geom.ox())),
                                       jet_square(jet_add_const(yj, -geom.oy()))),
                               -geom.r() * geom.r());
  const double sig = kFlowObstacleBlend;
  const Jet h = jet_exp(jet_scale(jet_square(sd), -1.0 / (sig * sig)));
  const Jet mask = jet_mul(w, jet_square(jet_add_const(jet_neg(h), 1.0)));
  const double oy = geom.oy();
  const double c_stag = 3.0 * oy * oy / a - 2.0 * oy * oy * oy / (a * a);
  const Jet psi =
      jet_add(psi_in, jet_add(jet_mul(jet_add_const(jet_neg(psi_in), c_stag), h),
                              jet_mul(mask, outs[0])));
  return {psi[s.unit_index(1)], -psi[s.unit_index(0)]};
}

VelocityGrid velocity_from_net(const NetworkParams& flow_net, const Grid2D& g,
                               const Geometry2D& geom) {
  VelocityGrid v;
  v.nx = g.nx;
  v.ny = g.ny;
  v.lx = g.lx;
  v.ly = g.ly;
  v.vx.assign(g.size(), 0.0);
  v.vy.assign(g.size(), 0.0);
  for (int j = 0; j < g.ny; ++j)
    for (int i = 0; i < g.nx; ++i) {
      if (!g.active(i, j)) continue;
      auto out = flow_velocity(flow_net, geom, g.x(i), g.y(j));
      v.vx[g.idx(i, j)] = out[0];
      v.vy[g.idx(i, j)] = out[1];
    }
  return v;
}

VelocityGrid analytic_test_velocity(const Grid2D& g, const Geometry2D& geom) {
  VelocityGrid v;
  v.nx = g.nx;
  v.ny = g.ny;
  v.lx = g.lx;
  v.ly = g.ly;
  v.vx.assign(g.size(), 0.0);
  v.vy.assign(g.size(), 0.0);
  const double R2 = geom.r() * geom.r();
  for (int j = 0; j < g.ny; ++j)
    for (int i = 0; i < g.nx; ++i) {
      const double dx = g.x(i) - geom.ox(), dy = g.y(j) - geom.oy();
      const double r2 = dx * dx + dy * dy;
      if (r2 < R2) continue;
      const double r4 = r2 * r2;
      v.vx[g.idx(i, j)] = 1.0 - R2 * (dx * dx - dy * dy) / r4;
      v.vy[g.idx(i, j)] = -2.0 * R2 * dx * dy / r4;
    }
  return v;
}

double velocity_divergence_rms(const VelocityGrid& v, const Grid2D& g) {
  double acc = 0.0;
  long cnt = 0;
  for (int j = 1; j < g.ny - 1; ++j)
    for (int i = 1; i < g.nx - 1; ++i) {
      if (!g.active(i, j) || !g.active(i - 1, j) || !g.active(i + 1, j) || !g.active(i, j - 1) ||
          !g.active(i, j + 1))
        continue;
      const double div = (v.vx[g.idx(i + 1, j)] - v.vx[g.idx(i - 1, j)]) / (2 * g.hx()) +
                         (v.vy[g.idx(i, j + 1)] - v.vy[g.idx(i, j - 1)]) / (2 * g.hy());
      acc += div * div;
      ++cnt;
    }
  return cnt ? std::sqrt(acc / cnt) : 0.0;
}

// ------------------------------------------------------------ 2D transport

double Solution2D::interp(int k, double x, double y) const {
  const Grid2D& g = grid;
  double rx = std::clamp(x / g.hx(), 0.0, double(g.nx - 1));
  double ry = std::clamp(y / g.hy(), 0.0, double(g.ny - 1));
  const int i = std::min(int(rx), g.nx - 2), j = std::min(int(ry), g.ny - 2);
  const double fx = rx - i, fy = ry - j;
  const double w[4] = {(1 - fx) * (1 - fy), fx * (1 - fy), (1 - fx) * fy, fx * fy};
  const int ii[4] = {i, i + 1, i, i + 1}, jj[4] = {j, j, j + 1, j + 1};
  double num = 0.0, den = 0.0;
  for (int q = 0; q < 4; ++q) {
    if (!g.active(ii[q], jj[q])) continue;
    num += w[q] * snapshots[k][g.idx(ii[q], jj[q])];
    den += w[q];
  }
  return den > 0.0 ? num / den : 0.0;
}

double Solution2D::value(double x, double y, double t) const {
  if (times.empty()) throw std::runtime_error("Solution2D: no snapshots");
  if (t <= times.front()) return interp(0, x, y);
  if (t >= times.back()) return interp(int(times.size()) - 1, x, y);
  const auto it = std::upper_bound(times.begin(), times.end(), t);
  const int k = int(it - times.begin());
  const double f = (t - times[k - 1]) / (times[k] - times[k - 1]);
  return (1 - f) * interp(k - 1, x, y) + f * interp(k, x, y);
}

namespace {

// Resolution of the stencil neighbor in direction (dx, dy): a plain node, the
// center itself (masked face, zero flux), the mirror node (domain boundary,
// zero flux) or nothing.
struct Nbr {
  enum Kind { Node, Center, Drop } kind = Drop;
  size_t node = 0;
};

Nbr resolve(const Grid2D& g, int i, int j, int dx, int dy) {
  const int ni = i + dx, nj = j + dy;
  if (ni >= 0 && ni < g.nx && nj >= 0 && nj < g.ny) {
    if (g.active(ni, nj)) return {Nbr::Node, g.idx(ni, nj)};
    return {Nbr::Center, g.idx(i, j)};  // ghost mirrors the center across the face
  }
  // Outside the rectangle: mirror across the boundary node.
  const int mi = i - dx, mj = j - dy;
  if (mi >= 0 && mi < g.nx && mj >= 0 && mj < g.ny && g.active(mi, mj))
    return {Nbr::Node, g.idx(mi, mj)};
  return {Nbr::Drop, 0};
}

}  // namespace

Solution2D fd_solve_adr2d(double pe, double da, const VelocityGrid& vel, const Grid2D& g,
                          const Adr2dConfig& cfg) {
  if (vel.nx != g.nx || vel.ny != g.ny)
    throw std::invalid_argument("fd_solve_adr2d: velocity grid mismatch");
  const size_t n = g.size();
  const double tc = cfg.nd.time_coeff();
  const double ax = 1.0 / (g.hx() * g.hx()), ay = 1.0 / (g.hy() * g.hy());

  auto inlet_value = [&](double y, double t) {
    return cfg.inlet ? cfg.inlet(y, t) : inlet_concentration(y, cfg.nd.aspect());
  };

  // Constant part of the Jacobian: time term + advection - laplacian.
  // Only the diagonal changes across Newton iterations (2 Da c term).
  using Trip = Eigen::Triplet<double>;
  std::vector<Trip> trips;
  std::vector<double> const_diag(n, 0.0);
  const bool upwind = cfg.advection == Adr2dConfig::Advection::Upwind;

  auto add = [&](size_t row, const Nbr& nb, double coef, double& diag) {
    if (nb.kind == Nbr::Drop || coef == 0.0) return;
    if (nb.node == row)
      diag += coef;
    else
      trips.emplace_back(int(row), int(nb.node), coef);
  };

  for (int j = 0; j < g.ny; ++j)
    for (int i = 0; i < g.nx; ++i) {
      const size_t p = g.idx(i, j);
      if (!g.active(i, j) || i == 0) {  // masked node or Dirichlet inlet
        const_diag[p] = 1.0;
        continue;
      }
      double diag = pe * tc / cfg.dt;
      const Nbr E = resolve(g, i, j, 1, 0), W = resolve(g, i, j, -1, 0);
      const Nbr N = resolve(g, i, j, 0, 1), S = resolve(g, i, j, 0, -1);
      // -laplacian
      diag += 2.0 * ax + 2.0 * ay;
      add(p, E, -ax, diag);
      add(p, W, -ax, diag);
      add(p, N, -ay, diag);
      add(p, S, -ay, diag);
      // Pe v . grad c
      const double vx = vel.vx[p], vy = vel.vy[p];
      if (upwind) {
        if (vx >= 0.0) {
          diag += pe * vx / g.hx();
          add(p, W, -pe * vx / g.hx(), diag);
        } else {
          diag += -pe * vx / g.hx();
          add(p, E, pe * vx / g.hx(), diag);
        }
        if (vy >= 0.0) {
          diag += pe * vy / g.hy();
          add(p, S, -pe * vy / g.hy(), diag);
        } else {
          diag += -pe * vy / g.hy();
          add(p, N, pe * vy / g.hy(), diag);
        }
      } else {
        add(p, E, pe * vx / (2 * g.hx()), diag);
        add(p, W, -pe * vx / (2 * g.hx()), diag);
        add(p, N, pe * vy / (2 * g.hy()), diag);
        add(p, S, -pe * vy / (2 * g.hy()), diag);
      }
      const_diag[p] = diag;
    }
  for (size_t p = 0; p < n; ++p) trips.emplace_back(int(p), int(p), const_diag[p]);

  const Eigen::Index ni = Eigen::Index(n);
  Eigen::SparseMatrix<double> A(ni, ni);
  A.setFromTriplets(trips.begin(), trips.end());
  A.makeCompressed();
  Eigen::SparseLU<Eigen::SparseMatrix<double>> lu;
  lu.analyzePattern(A);

  // Apply the matrix without the nonlinear diagonal shift to form residuals.
  auto apply_linear = [&](const Eigen::VectorXd& c) { return Eigen::VectorXd(A * c); };

  Eigen::VectorXd c = Eigen::VectorXd::Zero(int(n));
  if (cfg.initial)
    for (int j = 0; j < g.ny; ++j)
      for (int i = 0; i < g.nx; ++i)
        if (g.active(i, j)) c[int(g.idx(i, j))] = cfg.initial(g.x(i), g.y(j));
  for (int j = 0; j < g.ny; ++j)
    if (g.active(0, j)) c[int(g.idx(0, j))] = inlet_value(g.y(j), 0.0);

  Solution2D sol;
  sol.grid = g;
  const int steps = int(std::llround(cfg.t_end / cfg.dt));
  const int stride = std::max(1, int(std::llround(cfg.sample_every / cfg.dt)));
  sol.times.push_back(0.0);
  sol.snapshots.emplace_back(c.data(), c.data() + n);

  Eigen::VectorXd f = Eigen::VectorXd::Zero(Eigen::Index(n));
  for (int m = 1; m <= steps; ++m) {
    const double t = m * cfg.dt;
    Eigen::VectorXd cp = c;  // previous step
    for (int nit = 0; nit < cfg.newton_iters; ++nit) {
      // residual F(c) = A c + Da c^2 - Pe tc/dt c_prev - src  (inlet/mask rows: c - bc)
      f = apply_linear(c);
      for (int j = 0; j < g.ny; ++j)
        for (int i = 0; i < g.nx; ++i) {
          const size_t p = g.idx(i, j);
          if (!g.active(i, j)) {
            f[int(p)] = c[int(p)];
          } else if (i == 0) {
            f[int(p)] = c[int(p)] - inlet_value(g.y(j), t);
          } else {
            f[int(p)] += da * c[int(p)] * c[int(p)] - pe * tc / cfg.dt * cp[int(p)];
            if (cfg.source) f[int(p)] -= cfg.source(g.x(i), g.y(j), t);
          }
        }
      // J = A + 2 Da diag(c) on interior rows.
      Eigen::SparseMatrix<double> J = A;
      for (int jj = 0; jj < g.ny; ++jj)
        for (int ii = 1; ii < g.nx; ++ii) {
          const size_t p = g.idx(ii, jj);
          if (g.active(ii, jj)) J.coeffRef(int(p), int(p)) += 2.0 * da * c[int(p)];
        }
      lu.factorize(J);
      if (lu.info() != Eigen::Success)
        throw std::runtime_error("fd_solve_adr2d: factorization failed");
      c -= lu.solve(f);
    }
    if (m % stride == 0 || m == steps) {
      sol.times.push_back(t);
      sol.snapshots.emplace_back(c.data(), c.data() + n);
    }
  }
  return sol;
}

std::pair<Solution2D, Solution2D> fd_sensitivity_2d(double pe, double da,
                                                    const VelocityGrid& vel, const Grid2D& g,
                                                    const Adr2dConfig& cfg) {
  const double dp = 1e-4 * std::max(1.0, std::abs(pe));
  const double dd = 1e-4 * std::max(1.0, std::abs(da));
  Solution2D pp = fd_solve_adr2d(pe + dp, da, vel, g, cfg);
  Solution2D pm = fd_solve_adr2d(pe - dp, da, vel, g, cfg);
  Solution2D dpj = fd_solve_adr2d(pe, da + dd, vel, g, cfg);
  Solution2D dm = fd_solve_adr2d(pe, da - dd, vel, g, cfg);
  Solution2D s_pe = pp, s_da = dpj;
  for (size_t k = 0; k < pp.snapshots.size(); ++k)
    for (size_t q = 0; q < pp.snapshots[k].size(); ++q) {
      s_pe.snapshots[k][q] = (pp.snapshots[k][q] - pm.snapshots[k][q]) / (2 * dp);
      s_da.snapshots[k][q] = (dpj.snapshots[k][q] - dm.snapshots[k][q]) / (2 * dd);
    }
  return {std::move(s_pe), std::move(s_da)};
}

// ------------------------------------------------------------- time series

std::vector<TimeSeries> make_timeseries(const Solution2D& sol,
                                        const std::vector<std::array<double, 2>>& sensors,
                                        bool noise, double sigma_rel, uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::vector<TimeSeries> out;
  out.reserve(sensors.size());
  for (size_t s = 0; s < sensors.size(); ++s) {
    TimeSeries ts;
    ts.sensor_id = int(s);
    ts.x = sensors[s][0];
    ts.y = sensors[s][1];
    for (size_t k = 0; k < sol.times.size(); ++k) {
      double v = sol.interp(int(k), ts.x, ts.y);
      if (noise) v += sigma_rel * v * normal01(rng);
      ts.times.push_back(sol.times[k]);
      ts.values.push_back(v);
    }
    out.push_back(std::move(ts));
  }
  return out;
}

void save_timeseries_csv(const std::string& path, const std::vector<TimeSeries>& series) {
  std::ofstream f(path);
  if (!f) throw std::runtime_error("cannot write " + path);
  f << "sensor_id,x,y,t,c\n";
  char buf[256];
  for (const auto& ts : series)
    for (size_t k = 0; k < ts.times.size(); ++k) {
      std::snprintf(buf, sizeof buf, "%d,%.17g,%.17g,%.17g,%.17g\n", ts.sensor_id, ts.x, ts.y,
                    ts.times[k], ts.values[k]);
      f << buf;
    }
}

std::vector<TimeSeries> load_timeseries_csv(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw std::runtime_error("cannot read " + path);
  std::string line;
  if (!std::getline(f, line) || line.rfind("sensor_id,x,y,t,c", 0) != 0)
    throw std::runtime_error("bad time-series header in " + path);
  std::vector<TimeSeries> out;
  while (std::getline(f, line)) {
    if (line.empty()) continue;
    std::replace(line.begin(), line.end(), ',', ' ');
    std::istringstream ss(line);
    int id;
    double x, y, t, c;
    if (!(ss >> id >> x >> y >> t >> c))
      throw std::runtime_error("bad time-series row in " + path);
    if (out.empty() || out.back().sensor_id != id) {
      TimeSeries ts;
      ts.sensor_id = id;
      ts.x = x;
      ts.y = y;
      out.push_back(std::move(ts));
    }
    out.back().times.push_back(t);
    out.back().values.push_back(c);
  }
  return out;
}

}  // namespace pinnplace
