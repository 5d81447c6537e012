// Experiment runner: config-driven subcommands writing persistent artifacts
// into a run directory.

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <stdexcept>
#include <string>

#ifdef _OPENMP
#include <omp.h>
#endif

#include <CLI11.hpp>

#include "pinnplace/config.hpp"
#include "pinnplace/pipeline.hpp"

#ifndef PINNPLACE_VERSION
#define PINNPLACE_VERSION "unknown"
#endif

namespace {

constexpr int kOk = 0, kConfigError = 2, kDivergence = 3, kVerificationFailure = 4;

void set_threads(int threads) {
  if (threads <= 0) {
    if (const char* env = std::getenv("PINNPLACE_THREADS")) threads = std::atoi(env);
  }
#ifdef _OPENMP
  if (threads > 0) omp_set_num_threads(threads);
#else
  (void)threads;
#endif
}

void stamp_run_dir(const std::string& out) {
  std::filesystem::create_directories(out);
  std::ofstream v(std::filesystem::path(out) / "version.txt");
  v << PINNPLACE_VERSION << "\n";
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"PINN-based sensor placement and parameter inference"};
  app.set_version_flag("--version", std::string(PINNPLACE_VERSION));
  app.require_subcommand(1);

  std::string config_path, out = "run";
  long seed = -1;
  double desk_scale = -1.0;
  int repeats = 1, threads = 0;

  auto add_common = [&](CLI::App* cmd, bool needs_config) {
    if (needs_config)
      cmd->add_option("--config", config_path, "experiment config JSON")->required();
    cmd->add_option("--out", out, "run directory");
    cmd->add_option("--seed", seed, "override config seed");
    cmd->add_option("--desk-scale", desk_scale, "override config desk_scale");
    cmd->add_option("--threads", threads, "OpenMP threads (or PINNPLACE_THREADS)");
    return cmd;
  };

  auto* c_flow = add_common(app.add_subcommand("train-flow", "train the flow network"), true);
  auto* c_sens =
      add_common(app.add_subcommand("train-sensitivity", "train the sensitivity network"), true);
  auto* c_place = add_common(app.add_subcommand("place", "optimize sensor locations"), true);
  auto* c_data =
      add_common(app.add_subcommand("gen-data", "generate pseudo-experimental data"), true);
  auto* c_infer = add_common(app.add_subcommand("infer", "recover parameters from data"), true);
  c_infer->add_option("--repeats", repeats, "independent noisy repeats");
  auto* c_verify =
      add_common(app.add_subcommand("verify", "run oracle and gradient checks"), false);
  auto* c_report = add_common(app.add_subcommand("report", "summarize a run directory"), false);

  CLI11_PARSE(app, argc, argv);
  set_threads(threads);

  try {
    if (c_verify->parsed()) {
      return pinnplace::pipeline::verify(std::cout) ? kOk : kVerificationFailure;
    }
    if (c_report->parsed()) {
      pinnplace::pipeline::report(out, std::cout);
      return kOk;
    }

    pinnplace::ExperimentConfig cfg;
    try {
      cfg = pinnplace::load_config(config_path);
    } catch (const std::exception& e) {
      std::cerr << "config error: " << e.what() << "\n";
      return kConfigError;
    }
    if (seed >= 0) cfg.seed = uint64_t(seed);
    if (desk_scale > 0.0) cfg.desk_scale = desk_scale;
    cfg = cfg.scaled();
    stamp_run_dir(out);

    if (c_flow->parsed())
      pinnplace::pipeline::train_flow(cfg, out, &std::cout);
    else if (c_sens->parsed())
      pinnplace::pipeline::train_sensitivity(cfg, out, &std::cout);
    else if (c_place->parsed())
      pinnplace::pipeline::place(cfg, out, &std::cout);
    else if (c_data->parsed())
      pinnplace::pipeline::gen_data(cfg, out, &std::cout);
    else if (c_infer->parsed())
      pinnplace::pipeline::infer(cfg, out, repeats, &std::cout);
    return kOk;
  } catch (const pinnplace::DivergenceError& e) {
    std::cerr << "diverged: " << e.what() << "\n";
    return kDivergence;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kConfigError;
  }
}
