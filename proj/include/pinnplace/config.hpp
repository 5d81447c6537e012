#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "pinnplace/problems.hpp"
#include "pinnplace/trainer.hpp"

namespace pinnplace {

struct NetCfg {
  int hidden = 4;
  int width = 32;
  std::vector<int> sizes(int inputs, int outputs) const;
};

struct StageTrainCfg {
  long adam_iters = 0;
  double adam_lr = 1e-3;
  long lr_decay_every = 0;
  double lr_decay = 0.5;
  long lbfgs_iters = 0;
  bool dynamic_weights = true;
  long weight_every = 100;
  long rar_every = 0;
  std::map<std::string, int> rar_add;
  int freeze_layers = 0;
  double data_weight = 1.0;
  long log_every = 100;

  TrainConfig to_train_config(uint64_t seed) const;
};

struct PlacementCfg {
  std::string criterion = "det";  // "trace" | "det"
  int n_sensors = 3;
  int max_evals = 4000;
  int restarts = 3;
  int popsize = 0;
  double intuitive_radius_factor = 2.0;
  // angles (degrees) of the intuitive ring layout, keyed by sensor count
  std::map<int, std::vector<double>> intuitive_angles = {
      {1, {0.0}}, {2, {90.0, 270.0}}, {3, {0.0, 120.0, 240.0}},
      {5, {0.0, 72.0, 144.0, 216.0, 288.0}}};
};

struct OracleCfg {
  int grid_1d = 2001;
  int nx = 241, ny = 141;
  double dt = 2.5e-4;
  std::string advection = "upwind";
  double sample_every_s = 3.0;
};

struct NoiseCfg {
  bool enabled = false;
  double sigma_rel = 0.1;
  int repeats = 5;
};

struct ExperimentConfig {
  std::string problem = "adr1d";  // "adr1d" | "adr2d"
  uint64_t seed = 0;
  double desk_scale = 1.0;
  double domain_length = 10.0;  // 1D
  double da_fixed = 1.0;        // 1D: Da is known
  Nondim nd;
  Geometry2D geom;
  std::map<std::string, double> lambda_prior, lambda_true;
  std::map<std::string, NetCfg> networks;       // flow, sensitivity, inference
  std::map<std::string, PointCounts> points;    // flow, sensitivity, inference
  std::map<std::string, StageTrainCfg> train;   // flow, sensitivity, inference
  PlacementCfg placement;
  OracleCfg oracle;
  NoiseCfg noise;

  const NetCfg& net(const std::string& stage) const;
  const PointCounts& pts(const std::string& stage) const;
  const StageTrainCfg& stage(const std::string& name) const;

  /// Returns a copy with point counts, iteration budgets and RAR additions
  /// multiplied by desk_scale (floored at 1 where nonzero).
  ExperimentConfig scaled() const;

  /// Sensor ring around the obstacle at radius_factor * r, angles per layout.
  std::vector<std::array<double, 2>> intuitive_layout(int n_sensors) const;
};

/// Parses and validates a config; unknown keys anywhere are an error.
ExperimentConfig load_config(const std::string& path);
/// Snapshot of the effective configuration.
void save_config(const ExperimentConfig& cfg, const std::string& path);

}  // namespace pinnplace
