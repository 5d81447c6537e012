#include "pinnplace/placement.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <random>
#include <stdexcept>

#include <json.hpp>

namespace pinnplace {

namespace {

double u01(std::mt19937_64& rng) { return double(rng() >> 11) * 0x1.0p-53; }

}  // namespace

SensitivityField field_from_net_1d(const NetworkParams& net, double pe_prior) {
  const JetSpec& spec = specs::adr1d_sensitivity();
  SensitivityField f;
  f.n_params = 1;
  f.eval = [net, pe_prior, &spec](double x, double, double) {
    auto out = forward(net, {jet_input(spec, 0, x), jet_input(spec, 1, pe_prior)});
    Eigen::VectorXd v(1);
    v[0] = out[0][spec.unit_index(1)];
    return v;
  };
  return f;
}

SensitivityField field_from_net_2d(const NetworkParams& net, double pe_prior, double da_prior,
                                   const std::vector<double>& times, double t_end) {
  // The sensitivity network predicts (c, dc/dPe, dc/dDa) directly; the raw
  // outputs carry the same inlet/startup gate the training transform applies.
  (void)pe_prior;
  (void)da_prior;
  SensitivityField f;
  f.n_params = 2;
  f.transient = true;
  f.times = times;
  f.eval = [net, t_end](double x, double y, double t) {
    auto out = forward_scalar(net, {x, y, t});
    const double gate = (1.0 - std::exp(-t / (kStartupRampFrac * t_end))) *
                        (1.0 - std::exp(-x / kInletBlendLength));
    Eigen::VectorXd v(2);
    v[0] = gate * out[1];
    v[1] = gate * out[2];
    return v;
  };
  return f;
}

SensitivityField field_from_fd_1d(const Grid1D& g, double pe, double da) {
  auto s = fd_sensitivity_1d(pe, da, g);
  SensitivityField f;
  f.n_params = 1;
  f.eval = [g, s = std::move(s)](double x, double, double) {
    Eigen::VectorXd v(1);
    v[0] = interp_1d(g, s, x);
    return v;
  };
  return f;
}

SensitivityField field_from_fd_2d(const Solution2D& s_pe, const Solution2D& s_da) {
  SensitivityField f;
  f.n_params = 2;
  f.transient = true;
  f.times = s_pe.times;
  f.eval = [s_pe, s_da](double x, double y, double t) {
    Eigen::VectorXd v(2);
    v[0] = s_pe.value(x, y, t);
    v[1] = s_da.value(x, y, t);
    return v;
  };
  return f;
}

FimMatrix fim_at(const SensitivityField& f, const std::vector<std::array<double, 2>>& sensors) {
  FimMatrix m = FimMatrix::Zero(f.n_params, f.n_params);
  for (const auto& s : sensors) {
    if (!f.transient) {
      const Eigen::VectorXd v = f.eval(s[0], s[1], 0.0);
      m += v * v.transpose();
    } else {
      const size_t nt = f.times.size();
      if (nt < 2) throw std::runtime_error("transient field needs quadrature times");
      for (size_t k = 0; k < nt; ++k) {
        double w;
        if (k == 0)
          w = 0.5 * (f.times[1] - f.times[0]);
        else if (k + 1 == nt)
          w = 0.5 * (f.times[nt - 1] - f.times[nt - 2]);
        else
          w = 0.5 * (f.times[k + 1] - f.times[k - 1]);
        const Eigen::VectorXd v = f.eval(s[0], s[1], f.times[k]);
        m += w * v * v.transpose();
      }
    }
  }
  return m;
}

std::string criterion_name(Criterion c) { return c == Criterion::Trace ? "trace" : "det"; }

double criterion_value(const FimMatrix& m, Criterion c) {
  Eigen::SelfAdjointEigenSolver<FimMatrix> es(m);
  double out = 0.0;
  for (int i = 0; i < m.rows(); ++i) {
    const double ev = std::max(0.0, es.eigenvalues()[i]);
    if (c == Criterion::Trace)
      out += ev;
    else
      out += std::log(std::max(ev, 1e-300));
  }
  return out;
}

void save_sensors_json(const std::string& path, const SensorSet& s) {
  nlohmann::json j;
  j["locations"] = s.locations;
  j["criterion"] = s.criterion;
  j["value"] = s.value;
  j["lambda_prior"] = s.lambda_prior;
  j["seed"] = s.seed;
  std::ofstream f(path);
  if (!f) throw std::runtime_error("cannot write " + path);
  f << j.dump(2) << "\n";
}

SensorSet load_sensors_json(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw std::runtime_error("cannot read " + path);
  nlohmann::json j = nlohmann::json::parse(f);
  SensorSet s;
  for (const auto& loc : j.at("locations"))
    s.locations.push_back({loc.at(0).get<double>(), loc.at(1).get<double>()});
  s.criterion = j.at("criterion").get<std::string>();
  s.value = j.at("value").get<double>();
  if (j.contains("lambda_prior"))
    s.lambda_prior = j["lambda_prior"].get<std::map<std::string, double>>();
  if (j.contains("seed")) s.seed = j["seed"].get<uint64_t>();
  return s;
}

std::vector<double> criterion_landscape_1d(const SensitivityField& f,
                                           const std::vector<double>& xs, Criterion c) {
  std::vector<double> out(xs.size());
  for (size_t i = 0; i < xs.size(); ++i)
    out[i] = criterion_value(fim_at(f, {{xs[i], 0.0}}), c);
  return out;
}

SensorSet place_grid_1d(const SensitivityField& f, const std::vector<double>& xs, Criterion c) {
  auto land = criterion_landscape_1d(f, xs, c);
  const size_t best = size_t(std::max_element(land.begin(), land.end()) - land.begin());
  SensorSet s;
  s.locations = {{xs[best], 0.0}};
  s.criterion = criterion_name(c);
  s.value = land[best];
  return s;
}

bool sensor_feasible(const Geometry2D& geom, double x, double y) {
  const double mg = kSensorMargin, a = geom.aspect();
  if (x < mg || x > 1.0 - mg || y < mg || y > a - mg) return false;
  const double dx = x - geom.ox(), dy = y - geom.oy();
  return dx * dx + dy * dy >= (geom.r() + mg) * (geom.r() + mg);
}

SensorSet place_cma(const SensitivityField& f, int n_sensors, const Geometry2D& geom,
                    Criterion c, const CmaConfig& cma, int restarts) {
  const int dim = 2 * n_sensors;
  const double a = geom.aspect();
  const double diag = std::sqrt(1.0 + a * a);

  const double mg = kSensorMargin;
  auto violation = [&](const std::vector<double>& x) {
    double v = 0.0;
    for (int s = 0; s < n_sensors; ++s) {
      const double px = x[2 * s], py = x[2 * s + 1];
      v += std::max(0.0, mg - px) + std::max(0.0, px - (1.0 - mg));
      v += std::max(0.0, mg - py) + std::max(0.0, py - (a - mg));
      const double dx = px - geom.ox(), dy = py - geom.oy();
      const double d = geom.r() + mg - std::sqrt(dx * dx + dy * dy);
      v += std::max(0.0, d);
    }
    return v;
  };
  auto fitness = [&](const std::vector<double>& x) {
    const double v = violation(x);
    if (v > 0.0) return 1e6 + v * v;
    std::vector<std::array<double, 2>> sensors(n_sensors);
    for (int s = 0; s < n_sensors; ++s) sensors[s] = {x[2 * s], x[2 * s + 1]};
    return -criterion_value(fim_at(f, sensors), c);
  };

  std::mt19937_64 rng(cma.seed);
  SensorSet best;
  best.criterion = criterion_name(c);
  best.value = -1e300;
  best.seed = cma.seed;
  for (int run = 0; run <= restarts; ++run) {
    std::vector<double> mean0(dim);
    for (int s = 0; s < n_sensors; ++s) {
      double px, py;
      do {
        px = u01(rng);
        py = a * u01(rng);
      } while (!sensor_feasible(geom, px, py));
      mean0[2 * s] = px;
      mean0[2 * s + 1] = py;
    }
    CmaConfig cfg = cma;
    cfg.sigma0 = 0.1 * diag;
    cfg.seed = rng();
    if (run > 0 && cfg.lambda_pop == 0)
      cfg.lambda_pop = 2 * (4 + int(std::floor(3.0 * std::log(double(dim)))));
    else if (run > 0)
      cfg.lambda_pop *= 2;
    CmaEs es(mean0, cfg);
    es.optimize(fitness);
    if (-es.best_f() > best.value && violation(es.best_x()) == 0.0) {
      best.value = -es.best_f();
      best.locations.assign(size_t(n_sensors), {0.0, 0.0});
      for (int s = 0; s < n_sensors; ++s)
        best.locations[size_t(s)] = {es.best_x()[2 * s], es.best_x()[2 * s + 1]};
    }
  }
  if (best.locations.empty()) throw std::runtime_error("place_cma: no feasible placement found");
  return best;
}

}  // namespace pinnplace
