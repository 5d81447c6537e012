#pragma once

#include <array>
#include <cstdint>
#include <functional>
#include <iosfwd>
#include <map>
#include <string>
#include <stdexcept>
#include <vector>

#include "pinnplace/net.hpp"
#include "pinnplace/oracle.hpp"
#include "pinnplace/problems.hpp"
#include "pinnplace/tape.hpp"

namespace pinnplace {

struct PointCounts {
  int collocation = 0, inlet = 0, outlet = 0, wall = 0, obstacle = 0, initial = 0;
};

struct TermDef {
  std::string name;
  double weight = 1.0;
  bool pinned = false;  // excluded from dynamic rebalancing
  long count = 0;       // residual components currently in the MSE
};

struct LossBreakdown {
  std::vector<TermDef> terms;
  double total = 0.0;
  std::vector<double> values;  // unweighted MSE per term
};

using VelocityFn = std::function<std::array<double, 2>(double, double)>;

/// A differentiable training objective: a set of recorded tape programs, each
/// replayed over its point set, with per-term dynamic weights. Parameters are
/// the flattened network weights, optionally followed by trainable physical
/// parameters (lambda).
class LossModel {
 public:
  // ---- factories -------------------------------------------------------
  /// 1D sensitivity training: state + dc/dPe residuals at fixed Pe = prior.
  static LossModel adr1d_sensitivity(const NetworkParams& net, double pe_prior, double da,
                                     int n_colloc);
  /// 1D inverse: Pe is trainable, data points are (x, c_obs) pairs.
  static LossModel adr1d_inverse(const NetworkParams& net, double da,
                                 const std::vector<std::array<double, 2>>& data, double pe_init,
                                 int n_colloc, double data_weight);
  /// Steady flow in the channel with the obstacle. The network outputs
  /// (psi_raw, p); velocity derives from a masked streamfunction so
  /// continuity, wall no-slip and the flux budget hold exactly.
  static LossModel flow2d(const NetworkParams& net, const Geometry2D& geom, const Nondim& nd,
                          const PointCounts& counts, uint64_t seed);
  /// 2D transport forward-sensitivity system at (Pe, Da) = prior: the
  /// network maps (x, y, t) to (c, dc/dPe, dc/dDa) and the sensitivity
  /// outputs obey the parameter-differentiated transport residuals. The
  /// inlet profile and zero initial condition are exact by construction
  /// (ramped inlet-blend output transform); only residuals and flux BCs
  /// are trained. All 2D transport factories share this transform.
  static LossModel adr2d_sensitivity(const NetworkParams& net, const VelocityFn& vel,
                                     const Geometry2D& geom, const Nondim& nd, double pe_prior,
                                     double da_prior, const PointCounts& counts, uint64_t seed);
  /// 2D transport forward solve at fixed (Pe, Da).
  static LossModel adr2d_forward(const NetworkParams& net, const VelocityFn& vel,
                                 const Geometry2D& geom, const Nondim& nd, double pe, double da,
                                 const PointCounts& counts, uint64_t seed);
  /// 2D inverse: (Pe, Da) trainable, sensor time series as data rows.
  static LossModel adr2d_inverse(const NetworkParams& net, const VelocityFn& vel,
                                 const Geometry2D& geom, const Nondim& nd,
                                 const std::vector<TimeSeries>& data, double pe_init,
                                 double da_init, const PointCounts& counts, uint64_t seed,
                                 double data_weight);

  // ---- objective -------------------------------------------------------
  size_t n_params() const { return flat_init_.size(); }
  size_t n_net_params() const { return n_net_; }
  const std::vector<std::string>& lambda_names() const { return lambda_names_; }
  const std::vector<double>& initial_flat() const { return flat_init_; }
  const std::vector<uint8_t>& frozen_mask() const { return frozen_; }
  const std::vector<TermDef>& terms() const { return terms_; }
  const LayerSpec& layer_spec() const { return layer_spec_; }
  const InputScaling& scaling() const { return scaling_; }

  void set_frozen_layers(int n);  // refreshes the mask from the layer spec

  /// Loss, gradient (optional) and per-term breakdown (optional); OpenMP over
  /// points with deterministic block-ordered reductions.
  double eval(const std::vector<double>& flat, std::vector<double>* grad,
              LossBreakdown* bd) const;
  /// Plain single-threaded loop kept as the reference implementation.
  double eval_reference(const std::vector<double>& flat, std::vector<double>* grad,
                        LossBreakdown* bd) const;

  /// Per-term gradient norms (over all parameters) at flat.
  std::vector<double> term_grad_norms(const std::vector<double>& flat) const;
  /// Gradient-norm balancing: w_k <- (1-rho) w_k + rho max_j g_j / (g_k + eps);
  /// pinned terms keep their weight.
  void update_dynamic_weights(const std::vector<double>& flat, double rho);

  /// Residual-adaptive refinement: draws a 10x candidate pool per eligible
  /// program, adds `add` points sampled with probability proportional to
  /// |r|^2 / mean + 1. Keys of `add` are role names.
  void rar_resample(const std::vector<double>& flat, const std::map<std::string, int>& add,
                    uint64_t seed);

  size_t total_points() const;

  // ---- internals exposed for the programs' tests -----------------------
  struct Comp {
    Var node;
    uint16_t coeff = 0;
    int term = 0;
  };
  struct Prog {
    Tape tape;
    std::vector<Var> inputs;    // input leaves, bound to coords columns
    std::vector<Var> scalars;   // scalar leaves, bound to aux columns
    std::vector<Comp> comps;
    PointSet points;
    int aux_cols = 0;
    std::vector<double> aux;    // row-major per point
    std::vector<double> fixed_inputs;  // values for input leaves beyond coords
    std::function<PointSet(int, uint64_t)> sampler;          // RAR candidates
    std::function<void(const double*, double*)> fill_aux;    // coords -> aux row
    explicit Prog(const JetSpec& s) : tape(s) {}
  };
  const std::vector<Prog>& programs() const { return progs_; }

 private:
  void refresh_counts();

  std::vector<Prog> progs_;
  std::vector<TermDef> terms_;
  std::vector<double> flat_init_;
  std::vector<uint8_t> frozen_;
  std::vector<std::string> lambda_names_;
  size_t n_net_ = 0;
  LayerSpec layer_spec_;
  InputScaling scaling_;
};

struct TrainConfig {
  long adam_iters = 0;
  double adam_lr = 1e-3;
  long lr_decay_every = 0;     // 0 = no decay
  double lr_decay = 0.5;
  long lbfgs_iters = 0;
  bool dynamic_weights = true;
  long weight_every = 100;
  double weight_rho = 0.1;
  long rar_every = 0;          // 0 = off; applies in both phases
  std::map<std::string, int> rar_add;
  long log_every = 100;
  uint64_t seed = 0;
  double divergence_loss = 1e6;
};

struct DivergenceError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct TrainResult {
  std::vector<double> flat;
  std::map<std::string, double> lambda;
  double final_loss = 0.0;
  LossBreakdown breakdown;
  long iters = 0;
  std::vector<std::map<std::string, double>> lambda_history;  // one row per iter
};

/// Adam phase (with dynamic weights and optional RAR) followed by an L-BFGS
/// phase. Writes a loss-history CSV (iteration, per-term values, weights,
/// lambda) to `history` when given. Throws on divergence.
TrainResult train(LossModel& model, const TrainConfig& cfg, std::ostream* history);

/// Extracts the network portion of a result into checkpoint-ready params.
NetworkParams result_params(const LossModel& model, const TrainResult& res);

}  // namespace pinnplace
