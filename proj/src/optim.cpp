#include "pinnplace/optim.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace pinnplace {

AdamState AdamState::make(size_t n, double lr) {
  AdamState st;
  st.m.assign(n, 0.0);
  st.v.assign(n, 0.0);
  st.lr = lr;
  return st;
}

void adam_step(AdamState& st, std::vector<double>& x, const std::vector<double>& g,
               const std::vector<uint8_t>& frozen) {
  if (x.size() != g.size() || x.size() != st.m.size())
    throw std::invalid_argument("adam_step: shape mismatch");
  for (size_t i = 0; i < g.size(); ++i)
    if (!std::isfinite(g[i]))
      throw std::runtime_error("adam_step: non-finite gradient at entry " + std::to_string(i));
  ++st.t;
  const double bc1 = 1.0 - std::pow(st.beta1, double(st.t));
  const double bc2 = 1.0 - std::pow(st.beta2, double(st.t));
  for (size_t i = 0; i < x.size(); ++i) {
    if (!frozen.empty() && frozen[i]) continue;
    st.m[i] = st.beta1 * st.m[i] + (1.0 - st.beta1) * g[i];
    st.v[i] = st.beta2 * st.v[i] + (1.0 - st.beta2) * g[i] * g[i];
    const double mhat = st.m[i] / bc1;
    const double vhat = st.v[i] / bc2;
    x[i] -= st.lr * mhat / (std::sqrt(vhat) + st.eps);
  }
}

LbfgsState LbfgsState::make(int memory) {
  LbfgsState st;
  st.m = memory;
  return st;
}

void LbfgsState::reset_history() {
  s_hist.clear();
  y_hist.clear();
  rho_hist.clear();
  have_prev = false;
}

namespace {

double dot(const std::vector<double>& a, const std::vector<double>& b) {
  double r = 0.0;
  for (size_t i = 0; i < a.size(); ++i) r += a[i] * b[i];
  return r;
}

}  // namespace

double lbfgs_step(LbfgsState& st, std::vector<double>& x, const LossGradFn& fn,
                  const std::vector<uint8_t>& frozen) {
  const size_t n = x.size();
  std::vector<double> g(n);
  double f;
  if (st.have_prev && st.x_prev == x) {
    f = st.f_prev;
    g = st.g_prev;
  } else {
    f = fn(x, g);
  }
  if (!std::isfinite(f)) throw std::runtime_error("lbfgs_step: loss not finite");
  for (size_t i = 0; i < n; ++i)
    if (!frozen.empty() && frozen[i]) g[i] = 0.0;

  // Two-loop recursion.
  std::vector<double> d = g;
  const int h = int(st.s_hist.size());
  std::vector<double> alpha(h);
  for (int i = h - 1; i >= 0; --i) {
    alpha[i] = st.rho_hist[i] * dot(st.s_hist[i], d);
    for (size_t k = 0; k < n; ++k) d[k] -= alpha[i] * st.y_hist[i][k];
  }
  if (h > 0) {
    const double gamma =
        dot(st.s_hist[h - 1], st.y_hist[h - 1]) / dot(st.y_hist[h - 1], st.y_hist[h - 1]);
    for (auto& v : d) v *= gamma;
  }
  for (int i = 0; i < h; ++i) {
    const double beta = st.rho_hist[i] * dot(st.y_hist[i], d);
    for (size_t k = 0; k < n; ++k) d[k] += (alpha[i] - beta) * st.s_hist[i][k];
  }
  for (auto& v : d) v = -v;
  for (size_t i = 0; i < n; ++i)
    if (!frozen.empty() && frozen[i]) d[i] = 0.0;

  double g_dot_d = dot(g, d);
  if (!(g_dot_d < 0.0)) {  // fallback to steepest descent
    for (size_t i = 0; i < n; ++i) d[i] = -g[i];
    g_dot_d = dot(g, d);
    st.reset_history();
    if (!(g_dot_d < 0.0)) {  // at a stationary point: zero step
      st.x_prev = x;
      st.g_prev = g;
      st.f_prev = f;
      st.have_prev = true;
      ++st.iter;
      return f;
    }
  }

  // Strong-Wolfe line search (Nocedal-Wright bracketing + zoom).
  const double c1 = st.c1, c2 = st.c2;
  const double f0 = f, d0 = g_dot_d;
  std::vector<double> xt(n), gt(n);
  auto eval = [&](double t, double& ft, double& dt_out) {
    for (size_t i = 0; i < n; ++i) xt[i] = x[i] + t * d[i];
    ft = fn(xt, gt);
    for (size_t i = 0; i < n; ++i)
      if (!frozen.empty() && frozen[i]) gt[i] = 0.0;
    dt_out = dot(gt, d);
  };

  int evals = 0;
  double t = 1.0, t_prev = 0.0, f_prevstep = f0, d_prevstep = d0;
  double t_lo = 0.0, t_hi = 0.0, f_lo = f0, d_lo = d0;
  bool bracketed = false, found = false;
  double ft = f0, dt = d0;
  const double t_max = 1e8;

  while (evals < st.max_line_evals) {
    eval(t, ft, dt);
    ++evals;
    if (!std::isfinite(ft) || ft > f0 + c1 * t * d0 || (evals > 1 && ft >= f_prevstep)) {
      t_lo = t_prev;
      f_lo = f_prevstep;
      d_lo = d_prevstep;
      t_hi = t;
      bracketed = true;
      break;
    }
    if (std::abs(dt) <= -c2 * d0) {
      found = true;
      break;
    }
    if (dt >= 0.0) {
      t_lo = t;
      f_lo = ft;
      d_lo = dt;
      t_hi = t_prev;
      bracketed = true;
      break;
    }
    t_prev = t;
    f_prevstep = ft;
    d_prevstep = dt;
    t = std::min(2.0 * t, t_max);
  }

  if (bracketed && !found) {
    while (evals < st.max_line_evals) {
      // Bisection with a quadratic-interpolation bias.
      double tq = t_lo - 0.5 * d_lo * (t_hi - t_lo) * (t_hi - t_lo) /
                           (f0 - f_lo - d_lo * (t_hi - t_lo) + 1e-300);
      double tm = 0.5 * (t_lo + t_hi);
      double tc = (std::isfinite(tq) && tq > std::min(t_lo, t_hi) && tq < std::max(t_lo, t_hi))
                      ? 0.5 * (tq + tm)
                      : tm;
      eval(tc, ft, dt);
      ++evals;
      if (!std::isfinite(ft) || ft > f0 + c1 * tc * d0 || ft >= f_lo) {
        t_hi = tc;
      } else {
        if (std::abs(dt) <= -c2 * d0) {
          t = tc;
          found = true;
          break;
        }
        if (dt * (t_hi - t_lo) >= 0.0) t_hi = t_lo;
        t_lo = tc;
        f_lo = ft;
        d_lo = dt;
      }
      if (std::abs(t_hi - t_lo) < 1e-16 * std::max(1.0, std::abs(t_lo))) break;
      t = tc;
    }
  }

  if (found && evals < st.max_line_evals && std::abs(dt) > 0.1 * std::abs(d0)) {
    // Secant refinement toward the 1D minimizer; exact for quadratics.
    const double t2 = t - dt * t / (dt - d0);
    if (std::isfinite(t2) && t2 > 0.0) {
      const double ft_old = ft;
      double f2, d2;
      eval(t2, f2, d2);
      ++evals;
      if (std::isfinite(f2) && f2 <= ft_old && f2 <= f0 + c1 * t2 * d0) {
        t = t2;
        ft = f2;
        dt = d2;
      } else {
        eval(t, ft, dt);  // restore xt/gt for the accepted step
      }
    }
  }

  if (!found && !(std::isfinite(ft) && ft < f0)) {
    // Line search failed: keep parameters, mark stalled.
    st.stalled = true;
    st.x_prev = x;
    st.g_prev = g;
    st.f_prev = f0;
    st.have_prev = true;
    ++st.iter;
    return f0;
  }
  // Accept the last evaluated point (xt, gt, ft).
  std::vector<double> s(n), y(n);
  for (size_t i = 0; i < n; ++i) {
    s[i] = xt[i] - x[i];
    y[i] = gt[i] - g[i];
  }
  const double sy = dot(s, y);
  if (sy > 1e-12 * std::sqrt(dot(s, s)) * std::sqrt(dot(y, y)) && sy > 0.0) {
    st.s_hist.push_back(std::move(s));
    st.y_hist.push_back(std::move(y));
    st.rho_hist.push_back(1.0 / sy);
    while (int(st.s_hist.size()) > st.m) {
      st.s_hist.pop_front();
      st.y_hist.pop_front();
      st.rho_hist.pop_front();
    }
  }
  x = xt;
  st.x_prev = x;
  st.g_prev = gt;
  st.f_prev = ft;
  st.have_prev = true;
  st.stalled = false;
  ++st.iter;
  return ft;
}

CmaEs::CmaEs(const std::vector<double>& mean0, const CmaConfig& cfg)
    : n_(int(mean0.size())), sigma_(cfg.sigma0), rng_(cfg.seed), max_evals_(cfg.max_evals) {
  lambda_ = cfg.lambda_pop > 0 ? cfg.lambda_pop : 4 + int(std::floor(3.0 * std::log(double(n_))));
  mu_ = lambda_ / 2;
  mean_ = Eigen::Map<const Eigen::VectorXd>(mean0.data(), n_);

  weights_ = Eigen::VectorXd(mu_);
  for (int i = 0; i < mu_; ++i)
    weights_[i] = std::log(mu_ + 0.5) - std::log(double(i + 1));
  weights_ /= weights_.sum();
  mu_eff_ = 1.0 / weights_.squaredNorm();

  c_sigma_ = (mu_eff_ + 2.0) / (n_ + mu_eff_ + 5.0);
  d_sigma_ = 1.0 + 2.0 * std::max(0.0, std::sqrt((mu_eff_ - 1.0) / (n_ + 1.0)) - 1.0) + c_sigma_;
  c_c_ = (4.0 + mu_eff_ / n_) / (n_ + 4.0 + 2.0 * mu_eff_ / n_);
  c_1_ = 2.0 / ((n_ + 1.3) * (n_ + 1.3) + mu_eff_);
  c_mu_ = std::min(1.0 - c_1_, 2.0 * (mu_eff_ - 2.0 + 1.0 / mu_eff_) /
                                   ((n_ + 2.0) * (n_ + 2.0) + mu_eff_));
  chi_n_ = std::sqrt(double(n_)) * (1.0 - 1.0 / (4.0 * n_) + 1.0 / (21.0 * n_ * n_));

  p_sigma_ = Eigen::VectorXd::Zero(n_);
  p_c_ = Eigen::VectorXd::Zero(n_);
  C_ = Eigen::MatrixXd::Identity(n_, n_);
  B_ = Eigen::MatrixXd::Identity(n_, n_);
  D_ = Eigen::VectorXd::Ones(n_);
}

void CmaEs::repair_covariance() {
  C_ = 0.5 * (C_ + C_.transpose().eval());
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(C_);
  Eigen::VectorXd ev = es.eigenvalues();
  bool repaired = false;
  for (int i = 0; i < n_; ++i) {
    if (ev[i] < 1e-14) {
      ev[i] = 1e-14;
      repaired = true;
    }
  }
  B_ = es.eigenvectors();
  D_ = ev.cwiseSqrt();
  if (repaired) C_ = B_ * ev.asDiagonal() * B_.transpose();
}

std::vector<std::vector<double>> CmaEs::ask() {
  repair_covariance();
  std::vector<std::vector<double>> pop(lambda_);
  pending_z_.assign(lambda_, {});
  auto gauss = [&]() {
    // Box-Muller on explicit 53-bit uniforms for portability.
    double u1, u2;
    do {
      u1 = double(rng_() >> 11) * 0x1.0p-53;
    } while (u1 <= 0.0);
    u2 = double(rng_() >> 11) * 0x1.0p-53;
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * M_PI * u2);
  };
  for (int i = 0; i < lambda_; ++i) {
    Eigen::VectorXd z(n_);
    for (int k = 0; k < n_; ++k) z[k] = gauss();
    Eigen::VectorXd y = B_ * (D_.asDiagonal() * z);
    Eigen::VectorXd x = mean_ + sigma_ * y;
    pop[i].assign(x.data(), x.data() + n_);
    pending_z_[i].assign(y.data(), y.data() + n_);
  }
  return pop;
}

void CmaEs::tell(const std::vector<std::vector<double>>& pop,
                 const std::vector<double>& fitness) {
  if (int(pop.size()) != lambda_ || fitness.size() != pop.size())
    throw std::invalid_argument("CmaEs::tell: population size mismatch");
  for (double f : fitness)
    if (std::isnan(f)) throw std::invalid_argument("CmaEs::tell: NaN fitness");
  evals_ += lambda_;

  std::vector<int> order(lambda_);
  for (int i = 0; i < lambda_; ++i) order[i] = i;
  std::stable_sort(order.begin(), order.end(),
                   [&](int a, int b) { return fitness[a] < fitness[b]; });

  if (fitness[order[0]] < best_f_) {
    best_f_ = fitness[order[0]];
    best_x_ = pop[order[0]];
  }

  Eigen::VectorXd y_w = Eigen::VectorXd::Zero(n_);
  for (int i = 0; i < mu_; ++i) {
    const auto& y = pending_z_[order[i]];
    for (int k = 0; k < n_; ++k) y_w[k] += weights_[i] * y[k];
  }
  mean_ += sigma_ * y_w;

  // CSA step-size path. C^{-1/2} y = B D^{-1} B^T y.
  Eigen::VectorXd c_inv_half_yw = B_ * D_.cwiseInverse().asDiagonal() * (B_.transpose() * y_w);
  p_sigma_ = (1.0 - c_sigma_) * p_sigma_ +
             std::sqrt(c_sigma_ * (2.0 - c_sigma_) * mu_eff_) * c_inv_half_yw;
  sigma_ *= std::exp(c_sigma_ / d_sigma_ * (p_sigma_.norm() / chi_n_ - 1.0));

  const double ps_norm = p_sigma_.norm();
  const bool h_sigma =
      ps_norm / std::sqrt(1.0 - std::pow(1.0 - c_sigma_, 2.0 * (gen_ + 1))) / chi_n_ <
      1.4 + 2.0 / (n_ + 1.0);
  p_c_ = (1.0 - c_c_) * p_c_ +
         (h_sigma ? std::sqrt(c_c_ * (2.0 - c_c_) * mu_eff_) : 0.0) * y_w;

  Eigen::MatrixXd rank_mu = Eigen::MatrixXd::Zero(n_, n_);
  for (int i = 0; i < mu_; ++i) {
    Eigen::Map<const Eigen::VectorXd> y(pending_z_[order[i]].data(), n_);
    rank_mu += weights_[i] * y * y.transpose();
  }
  const double delta_h = h_sigma ? 0.0 : c_1_ * c_c_ * (2.0 - c_c_);
  C_ = (1.0 - c_1_ - c_mu_ + delta_h) * C_ + c_1_ * p_c_ * p_c_.transpose() + c_mu_ * rank_mu;
  ++gen_;
}

void CmaEs::optimize(const std::function<double(const std::vector<double>&)>& fn,
                     double f_target) {
  while (evals_ < max_evals_) {
    auto pop = ask();
    std::vector<double> fit(pop.size());
    for (size_t i = 0; i < pop.size(); ++i) fit[i] = fn(pop[i]);
    tell(pop, fit);
    if (best_f_ <= f_target) return;
    if (sigma_ < 1e-14) return;
  }
}

}  // namespace pinnplace
