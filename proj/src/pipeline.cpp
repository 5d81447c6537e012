#include "pinnplace/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <memory>
#include <ostream>
#include <random>
#include <sstream>
#include <stdexcept>

#include <json.hpp>

#include "pinnplace/oracle.hpp"

namespace pinnplace::pipeline {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

std::string at(const std::string& out, const std::string& name) {
  return (fs::path(out) / name).string();
}

std::vector<double> sample_times(const ExperimentConfig& cfg) {
  const double every = cfg.oracle.sample_every_s / cfg.nd.tau;
  std::vector<double> ts;
  for (double t = 0.0; t <= cfg.nd.t_end + 1e-12; t += every) ts.push_back(t);
  return ts;
}

Adr2dConfig oracle_config(const ExperimentConfig& cfg) {
  Adr2dConfig oc;
  oc.dt = cfg.oracle.dt;
  oc.t_end = cfg.nd.t_end;
  oc.sample_every = cfg.oracle.sample_every_s / cfg.nd.tau;
  oc.advection = cfg.oracle.advection == "central" ? Adr2dConfig::Advection::Central
                                                   : Adr2dConfig::Advection::Upwind;
  oc.nd = cfg.nd;
  return oc;
}

NetworkParams make_net(const ExperimentConfig& cfg, const std::string& stage,
                       const std::vector<double>& lo, const std::vector<double>& hi,
                       int outputs) {
  const NetCfg& n = cfg.net(stage);
  NetworkParams p = init_glorot(LayerSpec{n.sizes(int(lo.size()), outputs)}, cfg.seed);
  p.scaling = InputScaling::from_box(lo, hi);
  return p;
}

void write_history(const std::string& path, const std::string& text) {
  std::ofstream f(path);
  if (!f) throw std::runtime_error("cannot write " + path);
  f << text;
}

double require_lambda(const ExperimentConfig& cfg, const std::map<std::string, double>& m,
                      const std::string& key, const std::string& what) {
  const auto it = m.find(key);
  if (it == m.end())
    throw std::runtime_error("config is missing " + what + "." + key + " for " + cfg.problem);
  return it->second;
}

}  // namespace

void snapshot_config(const ExperimentConfig& cfg, const std::string& out) {
  fs::create_directories(out);
  save_config(cfg, at(out, "config.json"));
}

NetworkParams train_flow(const ExperimentConfig& cfg, const std::string& out,
                         std::ostream* log) {
  if (cfg.problem != "adr2d") throw std::runtime_error("train-flow applies to adr2d only");
  snapshot_config(cfg, out);
  const double a = cfg.geom.aspect();
  NetworkParams net = make_net(cfg, "flow", {0.0, 0.0}, {1.0, a}, 2);
  LossModel model = LossModel::flow2d(net, cfg.geom, cfg.nd, cfg.pts("flow"), cfg.seed);
  std::ostringstream hist;
  TrainResult res = train(model, cfg.stage("flow").to_train_config(cfg.seed), &hist);
  write_history(at(out, "flow_history.csv"), hist.str());
  NetworkParams trained = result_params(model, res);
  CheckpointMeta meta;
  meta.spec = trained.spec;
  meta.scaling = trained.scaling;
  meta.seed = cfg.seed;
  meta.problem_id = "flow2d";
  meta.iterations = res.iters;
  save_checkpoint(trained, meta, at(out, "flow.ckpt"));

  Grid2D g = Grid2D::make(cfg.geom, cfg.oracle.nx, cfg.oracle.ny);
  VelocityGrid vg = velocity_from_net(trained, g, cfg.geom);
  vg.save(at(out, "velocity.grid"));
  if (log)
    *log << "flow trained: loss " << res.final_loss << ", divergence rms "
         << velocity_divergence_rms(vg, g) << "\n";
  return trained;
}

VelocityFn velocity_provider(const ExperimentConfig& cfg, const std::string& out) {
  (void)cfg;
  auto vg = std::make_shared<VelocityGrid>(VelocityGrid::load(at(out, "velocity.grid")));
  return [vg](double x, double y) { return vg->interp(x, y); };
}

NetworkParams train_sensitivity(const ExperimentConfig& cfg, const std::string& out,
                                std::ostream* log) {
  snapshot_config(cfg, out);
  NetworkParams trained;
  TrainResult res;
  std::ostringstream hist;
  CheckpointMeta meta;
  meta.seed = cfg.seed;
  if (cfg.problem == "adr1d") {
    const double pe = require_lambda(cfg, cfg.lambda_prior, "Pe", "lambda_prior");
    NetworkParams net =
        make_net(cfg, "sensitivity", {0.0, pe - 1.0}, {cfg.domain_length, pe + 1.0}, 1);
    LossModel model =
        LossModel::adr1d_sensitivity(net, pe, cfg.da_fixed, cfg.pts("sensitivity").collocation);
    res = train(model, cfg.stage("sensitivity").to_train_config(cfg.seed), &hist);
    trained = result_params(model, res);
    meta.problem_id = "adr1d";
    meta.lambda = {{"Pe", pe}, {"Da", cfg.da_fixed}};
  } else {
    const double pe = require_lambda(cfg, cfg.lambda_prior, "Pe", "lambda_prior");
    const double da = require_lambda(cfg, cfg.lambda_prior, "Da", "lambda_prior");
    VelocityFn vel = velocity_provider(cfg, out);
    const double a = cfg.geom.aspect();
    NetworkParams net =
        make_net(cfg, "sensitivity", {0.0, 0.0, 0.0}, {1.0, a, cfg.nd.t_end}, 3);
    LossModel model = LossModel::adr2d_sensitivity(net, vel, cfg.geom, cfg.nd, pe, da,
                                                   cfg.pts("sensitivity"), cfg.seed);
    res = train(model, cfg.stage("sensitivity").to_train_config(cfg.seed), &hist);
    trained = result_params(model, res);
    meta.problem_id = "adr2d";
    meta.lambda = {{"Pe", pe}, {"Da", da}};
  }
  write_history(at(out, "sens_history.csv"), hist.str());
  meta.spec = trained.spec;
  meta.scaling = trained.scaling;
  meta.iterations = res.iters;
  save_checkpoint(trained, meta, at(out, "sens.ckpt"));
  if (log) *log << "sensitivity trained: loss " << res.final_loss << "\n";
  return trained;
}

SensorSet place(const ExperimentConfig& cfg, const std::string& out, std::ostream* log) {
  snapshot_config(cfg, out);
  CheckpointMeta meta;
  NetworkParams net = load_checkpoint(at(out, "sens.ckpt"), &meta);
  SensorSet best;
  if (cfg.problem == "adr1d") {
    const double pe = meta.lambda.at("Pe");
    SensitivityField f = field_from_net_1d(net, pe);
    std::vector<double> xs(1001);
    for (size_t i = 0; i < xs.size(); ++i)
      xs[i] = cfg.domain_length * double(i) / double(xs.size() - 1);
    const Criterion c = Criterion::Trace;
    best = place_grid_1d(f, xs, c);
    best.lambda_prior = meta.lambda;
    best.seed = cfg.seed;
    auto land = criterion_landscape_1d(f, xs, c);
    std::ofstream lf(at(out, "landscape.csv"));
    lf << "x,value\n";
    for (size_t i = 0; i < xs.size(); ++i) lf << xs[i] << "," << land[i] << "\n";
  } else {
    const double pe = meta.lambda.at("Pe"), da = meta.lambda.at("Da");
    SensitivityField f = field_from_net_2d(net, pe, da, sample_times(cfg), cfg.nd.t_end);
    const Criterion c =
        cfg.placement.criterion == "trace" ? Criterion::Trace : Criterion::LogDet;
    CmaConfig cc;
    cc.max_evals = cfg.placement.max_evals;
    cc.lambda_pop = cfg.placement.popsize;
    cc.seed = cfg.seed;
    best = place_cma(f, cfg.placement.n_sensors, cfg.geom, c, cc, cfg.placement.restarts);
    best.lambda_prior = meta.lambda;
    best.seed = cfg.seed;

    SensorSet intuitive;
    intuitive.locations = cfg.intuitive_layout(cfg.placement.n_sensors);
    intuitive.criterion = criterion_name(c);
    intuitive.value = criterion_value(fim_at(f, intuitive.locations), c);
    intuitive.lambda_prior = meta.lambda;
    intuitive.seed = cfg.seed;
    save_sensors_json(at(out, "sensors_intuitive.json"), intuitive);

    // single-sensor criterion landscape on a coarse grid
    std::ofstream lf(at(out, "landscape.csv"));
    lf << "x,y,value\n";
    const int gx = 49, gy = 29;
    for (int j = 0; j < gy; ++j)
      for (int i = 0; i < gx; ++i) {
        const double x = double(i) / (gx - 1), y = cfg.geom.aspect() * double(j) / (gy - 1);
        if (!cfg.geom.feasible(x, y)) continue;
        lf << x << "," << y << "," << criterion_value(fim_at(f, {{x, y}}), c) << "\n";
      }
  }
  save_sensors_json(at(out, "sensors_optimal.json"), best);
  if (log)
    *log << "placed " << best.locations.size() << " sensor(s), " << best.criterion << " = "
         << best.value << "\n";
  return best;
}

void gen_data(const ExperimentConfig& cfg, const std::string& out, std::ostream* log) {
  snapshot_config(cfg, out);
  if (cfg.problem == "adr1d") {
    const double pe = require_lambda(cfg, cfg.lambda_true, "Pe", "lambda_true");
    Grid1D g{cfg.oracle.grid_1d, 0.0, cfg.domain_length};
    auto c = fd_solve_adr1d(pe, cfg.da_fixed, g);
    auto emit = [&](const std::string& name, const std::vector<double>& xs) {
      std::vector<TimeSeries> series;
      for (size_t i = 0; i < xs.size(); ++i) {
        TimeSeries ts;
        ts.sensor_id = int(i);
        ts.x = xs[i];
        ts.times = {0.0};
        ts.values = {interp_1d(g, c, xs[i])};
        series.push_back(std::move(ts));
      }
      save_timeseries_csv(at(out, name), series);
    };
    SensorSet opt = load_sensors_json(at(out, "sensors_optimal.json"));
    std::vector<double> xs;
    for (const auto& s : opt.locations) xs.push_back(s[0]);
    emit("data_optimal.csv", xs);
    emit("data_outlet.csv", {cfg.domain_length});
    if (log) *log << "1d data generated at Pe " << pe << "\n";
  } else {
    const double pe = require_lambda(cfg, cfg.lambda_true, "Pe", "lambda_true");
    const double da = require_lambda(cfg, cfg.lambda_true, "Da", "lambda_true");
    VelocityGrid vg = VelocityGrid::load(at(out, "velocity.grid"));
    Grid2D g = Grid2D::make(cfg.geom, vg.nx, vg.ny);
    Solution2D sol = fd_solve_adr2d(pe, da, vg, g, oracle_config(cfg));
    for (const std::string layout : {"optimal", "intuitive"}) {
      const std::string sensors_path = at(out, "sensors_" + layout + ".json");
      if (!fs::exists(sensors_path)) continue;
      SensorSet ss = load_sensors_json(sensors_path);
      save_timeseries_csv(at(out, "data_" + layout + ".csv"),
                          make_timeseries(sol, ss.locations, false, 0.0, cfg.seed));
      if (cfg.noise.enabled)
        for (int k = 0; k < cfg.noise.repeats; ++k)
          save_timeseries_csv(
              at(out, "data_" + layout + "_r" + std::to_string(k) + ".csv"),
              make_timeseries(sol, ss.locations, true, cfg.noise.sigma_rel,
                              cfg.seed + 101 + uint64_t(k)));
    }
    if (log) *log << "2d data generated at (Pe, Da) = (" << pe << ", " << da << ")\n";
  }
}

namespace {

std::map<std::string, double> infer_once_1d(const ExperimentConfig& cfg,
                                            const std::vector<TimeSeries>& series,
                                            std::string* trajectory) {
  const double pe0 = require_lambda(cfg, cfg.lambda_prior, "Pe", "lambda_prior");
  std::vector<std::array<double, 2>> data;
  for (const auto& ts : series)
    for (size_t k = 0; k < ts.times.size(); ++k) data.push_back({ts.x, ts.values[k]});
  NetworkParams net = make_net(cfg, "inference", {0.0}, {cfg.domain_length}, 1);
  const StageTrainCfg& st = cfg.stage("inference");
  LossModel model = LossModel::adr1d_inverse(net, cfg.da_fixed, data, pe0,
                                             cfg.pts("inference").collocation, st.data_weight);
  std::ostringstream hist;
  TrainResult res = train(model, st.to_train_config(cfg.seed), &hist);
  if (trajectory) *trajectory = hist.str();
  return res.lambda;
}

std::map<std::string, double> infer_once_2d(const ExperimentConfig& cfg,
                                            const NetworkParams& forward_net,
                                            const VelocityFn& vel,
                                            const std::vector<TimeSeries>& series,
                                            std::string* trajectory) {
  const double pe0 = require_lambda(cfg, cfg.lambda_prior, "Pe", "lambda_prior");
  const double da0 = require_lambda(cfg, cfg.lambda_prior, "Da", "lambda_prior");
  const StageTrainCfg& st = cfg.stage("finetune");
  LossModel model = LossModel::adr2d_inverse(forward_net, vel, cfg.geom, cfg.nd, series, pe0,
                                             da0, cfg.pts("inference"), cfg.seed, st.data_weight);
  if (st.freeze_layers > 0) model.set_frozen_layers(st.freeze_layers);
  std::ostringstream hist;
  TrainResult res = train(model, st.to_train_config(cfg.seed), &hist);
  if (trajectory) *trajectory = hist.str();
  return res.lambda;
}

}  // namespace

InferResult infer(const ExperimentConfig& cfg, const std::string& out, int repeats,
                  std::ostream* log) {
  snapshot_config(cfg, out);
  InferResult result;
  std::vector<std::string> layouts;
  NetworkParams forward_net;
  VelocityFn vel;

  if (cfg.problem == "adr1d") {
    layouts = {"optimal", "outlet"};
  } else {
    layouts = {"optimal", "intuitive"};
    vel = velocity_provider(cfg, out);
    const std::string fwd = at(out, "forward.ckpt");
    if (fs::exists(fwd)) {
      forward_net = load_checkpoint(fwd);
    } else {
      const double pe0 = require_lambda(cfg, cfg.lambda_prior, "Pe", "lambda_prior");
      const double da0 = require_lambda(cfg, cfg.lambda_prior, "Da", "lambda_prior");
      NetworkParams net = make_net(cfg, "inference", {0.0, 0.0, 0.0},
                                   {1.0, cfg.geom.aspect(), cfg.nd.t_end}, 1);
      LossModel model = LossModel::adr2d_forward(net, vel, cfg.geom, cfg.nd, pe0, da0,
                                                 cfg.pts("inference"), cfg.seed);
      std::ostringstream hist;
      TrainResult res = train(model, cfg.stage("forward").to_train_config(cfg.seed), &hist);
      write_history(at(out, "forward_history.csv"), hist.str());
      forward_net = result_params(model, res);
      CheckpointMeta meta;
      meta.spec = forward_net.spec;
      meta.scaling = forward_net.scaling;
      meta.seed = cfg.seed;
      meta.problem_id = "adr2d";
      meta.lambda = {{"Pe", pe0}, {"Da", da0}};
      meta.iterations = res.iters;
      save_checkpoint(forward_net, meta, fwd);
      if (log) *log << "forward model pretrained: loss " << res.final_loss << "\n";
    }
  }

  for (const auto& layout : layouts) {
    const std::string base = at(out, "data_" + layout);
    for (int k = 0; k < std::max(1, repeats); ++k) {
      std::string path = base + (repeats > 1 ? "_r" + std::to_string(k) : "") + ".csv";
      if (!fs::exists(path)) {
        if (k == 0 && fs::exists(base + ".csv"))
          path = base + ".csv";
        else
          break;
      }
      auto series = load_timeseries_csv(path);
      std::string traj;
      std::map<std::string, double> est =
          cfg.problem == "adr1d"
              ? infer_once_1d(cfg, series, &traj)
              : infer_once_2d(cfg, forward_net, vel, series, &traj);
      if (layout == "optimal" && k == 0) write_history(at(out, "lambda_trajectory.csv"), traj);
      result.repeats[layout].push_back(est);
      if (log) {
        *log << layout << " repeat " << k << ":";
        for (const auto& [name, v] : est) *log << " " << name << " = " << v;
        *log << "\n";
      }
    }
  }

  json j;
  for (const auto& [layout, reps] : result.repeats) {
    std::map<std::string, double> mean, stddev;
    for (const auto& r : reps)
      for (const auto& [name, v] : r) mean[name] += v / double(reps.size());
    for (const auto& r : reps)
      for (const auto& [name, v] : r) stddev[name] += (v - mean[name]) * (v - mean[name]);
    for (auto& [name, v] : stddev)
      v = reps.size() > 1 ? std::sqrt(v / double(reps.size() - 1)) : 0.0;
    result.mean[layout] = mean;
    result.stddev[layout] = stddev;
    j[layout] = {{"mean", mean}, {"stddev", stddev}, {"repeats", reps}};
    if (!cfg.lambda_true.empty()) {
      std::map<std::string, double> err;
      for (const auto& [name, v] : mean)
        if (cfg.lambda_true.count(name))
          err[name] = 100.0 * std::abs(v - cfg.lambda_true.at(name)) /
                      std::abs(cfg.lambda_true.at(name));
      j[layout]["error_pct"] = err;
    }
  }
  std::ofstream f(at(out, "estimate.json"));
  f << j.dump(2) << "\n";
  return result;
}

bool verify(std::ostream& log) {
  bool ok = true;
  auto check = [&](bool cond, const std::string& what) {
    log << (cond ? "PASS " : "FAIL ") << what << "\n";
    ok = ok && cond;
  };
  {  // jet derivatives against finite differences of the scalar forward pass
    NetworkParams p = init_glorot(LayerSpec{{1, 16, 16, 1}}, 5);
    p.scaling = InputScaling::from_box({0.0}, {10.0});
    const JetSpec& s = specs::scalar_1d();
    double worst = 0.0;
    for (double x : {1.0, 4.2, 8.7}) {
      auto out = forward(p, {jet_input(s, 0, x)});
      const double h = 1e-4;
      const double fd =
          (forward_scalar(p, {x + h})[0] - forward_scalar(p, {x - h})[0]) / (2 * h);
      worst = std::max(worst, std::abs(out[0][s.unit_index(0)] - fd) / std::max(1.0, std::abs(fd)));
    }
    check(worst < 1e-6, "jet spatial derivative matches finite differences");
  }
  {  // loss gradient against finite differences
    NetworkParams p = init_glorot(LayerSpec{{2, 12, 12, 1}}, 7);
    p.scaling = InputScaling::from_box({0.0, -0.9}, {10.0, 1.1});
    LossModel m = LossModel::adr1d_sensitivity(p, 0.1, 1.0, 30);
    std::vector<double> g;
    m.eval(m.initial_flat(), &g, nullptr);
    std::mt19937_64 rng(1);
    double worst = 0.0;
    for (int t = 0; t < 10; ++t) {
      const size_t i = rng() % m.n_params();
      auto fp = m.initial_flat(), fm = m.initial_flat();
      fp[i] += 1e-5;
      fm[i] -= 1e-5;
      const double fd =
          (m.eval_reference(fp, nullptr, nullptr) - m.eval_reference(fm, nullptr, nullptr)) /
          2e-5;
      worst = std::max(worst, std::abs(fd - g[i]) / std::max(1.0, std::abs(fd)));
    }
    check(worst < 1e-5, "loss gradient matches finite differences");
  }
  {  // 1D oracle convergence order
    const double pe = 0.7, da = 1.2, w = 3.14159265358979323846 / 10.0;
    Adr1dConfig oc;
    oc.c_inlet = 2.0;
    oc.source = [&](double x) {
      const double c = 1.0 + std::cos(w * x);
      return pe * (-w * std::sin(w * x)) + w * w * std::cos(w * x) + da * c * c;
    };
    std::vector<double> errs;
    for (int n : {101, 201}) {
      Grid1D g{n};
      auto c = fd_solve_adr1d(pe, da, g, oc);
      double e = 0.0;
      for (int i = 0; i < n; ++i)
        e = std::max(e, std::abs(c[i] - (1.0 + std::cos(w * g.x(i)))));
      errs.push_back(e);
    }
    const double order = std::log2(errs[0] / errs[1]);
    check(std::abs(order - 2.0) < 0.2, "1d oracle is second order (observed " +
                                           std::to_string(order) + ")");
  }
  {  // checkpoint round-trip
    NetworkParams p = init_glorot(LayerSpec{{2, 6, 1}}, 3);
    CheckpointMeta meta;
    meta.spec = p.spec;
    meta.problem_id = "verify";
    const std::string tmp = (fs::temp_directory_path() / "pp_verify.ckpt").string();
    save_checkpoint(p, meta, tmp);
    NetworkParams q = load_checkpoint(tmp);
    fs::remove(tmp);
    check(q.flat == p.flat, "checkpoint round-trips bitwise");
  }
  return ok;
}

void report(const std::string& out, std::ostream& log) {
  std::ofstream md(at(out, "report.md"));
  if (!md) throw std::runtime_error("cannot write report to " + out);
  md << "# Run report\n\n";
  auto missing = [&](const std::string& name) {
    md << "- `" << name << "`: missing\n";
  };
  md << "## Artifacts\n\n";
  for (const char* name :
       {"config.json", "flow.ckpt", "velocity.grid", "sens.ckpt", "sensors_optimal.json",
        "sensors_intuitive.json", "landscape.csv", "data_optimal.csv", "estimate.json"}) {
    if (fs::exists(at(out, name)))
      md << "- `" << name << "`: present\n";
    else
      missing(name);
  }
  md << "\n";
  for (const std::string layout : {"optimal", "intuitive"}) {
    const std::string p = at(out, "sensors_" + layout + ".json");
    if (!fs::exists(p)) continue;
    SensorSet s = load_sensors_json(p);
    md << "## Sensors (" << layout << ")\n\n| # | x | y |\n|---|---|---|\n";
    for (size_t i = 0; i < s.locations.size(); ++i)
      md << "| " << i << " | " << s.locations[i][0] << " | " << s.locations[i][1] << " |\n";
    md << "\ncriterion " << s.criterion << " = " << s.value << "\n\n";
  }
  if (fs::exists(at(out, "estimate.json"))) {
    std::ifstream f(at(out, "estimate.json"));
    json j = json::parse(f);
    md << "## Estimates\n\n| layout | parameter | mean | stddev |\n|---|---|---|---|\n";
    for (const auto& [layout, body] : j.items())
      for (const auto& [name, v] : body.at("mean").items())
        md << "| " << layout << " | " << name << " | " << v.get<double>() << " | "
           << body.at("stddev").at(name).get<double>() << " |\n";
    md << "\n";
  }
  log << "report written to " << at(out, "report.md") << "\n";
}

}  // namespace pinnplace::pipeline
