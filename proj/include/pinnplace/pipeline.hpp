#pragma once

#include <iosfwd>
#include <map>
#include <string>
#include <vector>

#include "pinnplace/config.hpp"
#include "pinnplace/placement.hpp"
#include "pinnplace/trainer.hpp"

namespace pinnplace::pipeline {

// All stages read and write artifacts under a run directory:
//   flow.ckpt, flow_history.csv, velocity.grid
//   sens.ckpt, sens_history.csv
//   sensors_optimal.json, sensors_intuitive.json, landscape.csv
//   data_<layout>[ _r<k> ].csv
//   forward.ckpt, estimate.json, lambda_trajectory.csv
//   config.json (effective snapshot)

void snapshot_config(const ExperimentConfig& cfg, const std::string& out);

NetworkParams train_flow(const ExperimentConfig& cfg, const std::string& out,
                         std::ostream* log);
NetworkParams train_sensitivity(const ExperimentConfig& cfg, const std::string& out,
                                std::ostream* log);

/// Velocity lookup backed by <out>/velocity.grid.
VelocityFn velocity_provider(const ExperimentConfig& cfg, const std::string& out);

SensorSet place(const ExperimentConfig& cfg, const std::string& out, std::ostream* log);

void gen_data(const ExperimentConfig& cfg, const std::string& out, std::ostream* log);

struct InferResult {
  // layout -> one estimate map per repeat, plus mean/stddev across repeats
  std::map<std::string, std::vector<std::map<std::string, double>>> repeats;
  std::map<std::string, std::map<std::string, double>> mean, stddev;
};
InferResult infer(const ExperimentConfig& cfg, const std::string& out, int repeats,
                  std::ostream* log);

bool verify(std::ostream& log);

void report(const std::string& out, std::ostream& log);

}  // namespace pinnplace::pipeline
