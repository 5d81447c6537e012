#pragma once

#include <cstdint>
#include <deque>
#include <functional>
#include <random>
#include <vector>

#include <Eigen/Dense>

namespace pinnplace {

struct AdamState {
  std::vector<double> m, v;
  long t = 0;
  double lr = 1e-3;
  double beta1 = 0.9, beta2 = 0.999, eps = 1e-8;

  static AdamState make(size_t n, double lr);
};

/// Bias-corrected Adam update. Entries with frozen[i] != 0 are skipped.
/// Throws on non-finite gradients.
void adam_step(AdamState& st, std::vector<double>& x, const std::vector<double>& g,
               const std::vector<uint8_t>& frozen);

/// loss and gradient at x; gradient written into g (same size as x).
using LossGradFn = std::function<double(const std::vector<double>& x, std::vector<double>& g)>;

struct LbfgsState {
  int m = 20;
  double c1 = 1e-4, c2 = 0.9;
  int max_line_evals = 25;
  long iter = 0;
  bool stalled = false;

  std::deque<std::vector<double>> s_hist, y_hist;
  std::deque<double> rho_hist;
  std::vector<double> x_prev, g_prev;
  double f_prev = 0.0;
  bool have_prev = false;

  static LbfgsState make(int memory = 20);
  void reset_history();
};

/// One L-BFGS iteration: two-loop-recursion direction, strong-Wolfe line
/// search (cubic/bisection zoom), steepest-descent fallback when the direction
/// is not a descent direction. Frozen entries keep zero step and are excluded
/// from curvature pairs. Returns the loss at the new point.
double lbfgs_step(LbfgsState& st, std::vector<double>& x, const LossGradFn& fn,
                  const std::vector<uint8_t>& frozen);

struct CmaConfig {
  int lambda_pop = 0;  // 0 -> 4 + floor(3 ln n)
  double sigma0 = 0.3;
  int max_evals = 10000;
  uint64_t seed = 0;
};

/// Minimizing (mu/mu_w, lambda)-CMA-ES with CSA step-size control and
/// rank-one + rank-mu covariance adaptation.
class CmaEs {
 public:
  CmaEs(const std::vector<double>& mean0, const CmaConfig& cfg);

  int population_size() const { return lambda_; }
  long evals() const { return evals_; }
  long generation() const { return gen_; }
  double sigma() const { return sigma_; }

  std::vector<std::vector<double>> ask();
  void tell(const std::vector<std::vector<double>>& pop, const std::vector<double>& fitness);

  const std::vector<double>& best_x() const { return best_x_; }
  double best_f() const { return best_f_; }

  /// Run until max_evals or f_target reached; fn must be pure.
  void optimize(const std::function<double(const std::vector<double>&)>& fn,
                double f_target = -1e300);

 private:
  void repair_covariance();

  int n_, lambda_, mu_;
  double sigma_;
  Eigen::VectorXd mean_, weights_, p_sigma_, p_c_;
  Eigen::MatrixXd C_, B_;     // C = B diag(D^2) B^T
  Eigen::VectorXd D_;
  double mu_eff_, c_sigma_, d_sigma_, c_c_, c_1_, c_mu_, chi_n_;
  long gen_ = 0, evals_ = 0;
  std::mt19937_64 rng_;
  std::vector<std::vector<double>> pending_z_;
  std::vector<double> best_x_;
  double best_f_ = 1e300;
  int max_evals_;
};

}  // namespace pinnplace
