#include "pinnplace/config.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <stdexcept>

#include <json.hpp>

namespace pinnplace {

using nlohmann::json;

namespace {

constexpr double kPi = 3.14159265358979323846;

void check_keys(const json& j, std::initializer_list<const char*> allowed,
                const std::string& ctx) {
  for (const auto& [key, _] : j.items()) {
    if (std::find_if(allowed.begin(), allowed.end(),
                     [&](const char* a) { return key == a; }) == allowed.end())
      throw std::runtime_error("unknown key '" + key + "' in " + ctx);
  }
}

template <typename T>
void get_if(const json& j, const char* key, T& out) {
  if (j.contains(key)) out = j.at(key).get<T>();
}

NetCfg parse_net(const json& j, const std::string& ctx) {
  check_keys(j, {"hidden", "width"}, ctx);
  NetCfg n;
  get_if(j, "hidden", n.hidden);
  get_if(j, "width", n.width);
  if (n.hidden < 1 || n.width < 1) throw std::runtime_error("bad network size in " + ctx);
  return n;
}

PointCounts parse_points(const json& j, const std::string& ctx) {
  check_keys(j, {"collocation", "inlet", "outlet", "wall", "obstacle", "initial"}, ctx);
  PointCounts p;
  get_if(j, "collocation", p.collocation);
  get_if(j, "inlet", p.inlet);
  get_if(j, "outlet", p.outlet);
  get_if(j, "wall", p.wall);
  get_if(j, "obstacle", p.obstacle);
  get_if(j, "initial", p.initial);
  return p;
}

StageTrainCfg parse_train(const json& j, const std::string& ctx) {
  check_keys(j,
             {"adam_iters", "adam_lr", "lr_decay_every", "lr_decay", "lbfgs_iters",
              "dynamic_weights", "weight_every", "rar_every", "rar_add", "freeze_layers",
              "data_weight", "log_every"},
             ctx);
  StageTrainCfg t;
  get_if(j, "adam_iters", t.adam_iters);
  get_if(j, "adam_lr", t.adam_lr);
  get_if(j, "lr_decay_every", t.lr_decay_every);
  get_if(j, "lr_decay", t.lr_decay);
  get_if(j, "lbfgs_iters", t.lbfgs_iters);
  get_if(j, "dynamic_weights", t.dynamic_weights);
  get_if(j, "weight_every", t.weight_every);
  get_if(j, "rar_every", t.rar_every);
  get_if(j, "freeze_layers", t.freeze_layers);
  get_if(j, "data_weight", t.data_weight);
  get_if(j, "log_every", t.log_every);
  if (j.contains("rar_add")) t.rar_add = j.at("rar_add").get<std::map<std::string, int>>();
  return t;
}

}  // namespace

std::vector<int> NetCfg::sizes(int inputs, int outputs) const {
  std::vector<int> s{inputs};
  for (int i = 0; i < hidden; ++i) s.push_back(width);
  s.push_back(outputs);
  return s;
}

TrainConfig StageTrainCfg::to_train_config(uint64_t seed) const {
  TrainConfig c;
  c.adam_iters = adam_iters;
  c.adam_lr = adam_lr;
  c.lr_decay_every = lr_decay_every;
  c.lr_decay = lr_decay;
  c.lbfgs_iters = lbfgs_iters;
  c.dynamic_weights = dynamic_weights;
  c.weight_every = weight_every;
  c.rar_every = rar_every;
  c.rar_add = rar_add;
  c.log_every = log_every;
  c.seed = seed;
  return c;
}

const NetCfg& ExperimentConfig::net(const std::string& stage) const {
  const auto it = networks.find(stage);
  if (it == networks.end()) throw std::runtime_error("no network config for stage " + stage);
  return it->second;
}

const PointCounts& ExperimentConfig::pts(const std::string& stage) const {
  const auto it = points.find(stage);
  if (it == points.end()) throw std::runtime_error("no point config for stage " + stage);
  return it->second;
}

const StageTrainCfg& ExperimentConfig::stage(const std::string& name) const {
  const auto it = train.find(name);
  if (it == train.end()) throw std::runtime_error("no train config for stage " + name);
  return it->second;
}

namespace {

int scale_count(int v, double f) { return v > 0 ? std::max(1, int(std::lround(v * f))) : 0; }
long scale_iters(long v, double f) {
  return v > 0 ? std::max<long>(1, long(std::llround(double(v) * f))) : 0;
}

}  // namespace

ExperimentConfig ExperimentConfig::scaled() const {
  ExperimentConfig c = *this;
  const double f = desk_scale;
  if (f == 1.0) return c;
  c.desk_scale = 1.0;  // a snapshot of a scaled config must not scale again
  for (auto& [_, p] : c.points) {
    p.collocation = scale_count(p.collocation, f);
    p.inlet = scale_count(p.inlet, f);
    p.outlet = scale_count(p.outlet, f);
    p.wall = scale_count(p.wall, f);
    p.obstacle = scale_count(p.obstacle, f);
    p.initial = scale_count(p.initial, f);
  }
  for (auto& [_, t] : c.train) {
    t.adam_iters = scale_iters(t.adam_iters, f);
    t.lbfgs_iters = scale_iters(t.lbfgs_iters, f);
    t.lr_decay_every = scale_iters(t.lr_decay_every, f);
    t.rar_every = scale_iters(t.rar_every, f);
    for (auto& [__, n] : t.rar_add) n = scale_count(n, f);
  }
  if (f < 0.5 && problem == "adr2d") {  // desk runs also halve the pseudo-data grid
    c.oracle.nx = c.oracle.nx / 2 + 1;
    c.oracle.ny = c.oracle.ny / 2 + 1;
  }
  return c;
}

std::vector<std::array<double, 2>> ExperimentConfig::intuitive_layout(int n_sensors) const {
  const auto it = placement.intuitive_angles.find(n_sensors);
  if (it == placement.intuitive_angles.end())
    throw std::runtime_error("no intuitive layout for " + std::to_string(n_sensors) +
                             " sensors");
  const double rr = placement.intuitive_radius_factor * geom.r();
  std::vector<std::array<double, 2>> out;
  for (double deg : it->second) {
    const double th = deg * kPi / 180.0;
    out.push_back({geom.ox() + rr * std::cos(th), geom.oy() + rr * std::sin(th)});
  }
  return out;
}

ExperimentConfig load_config(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw std::runtime_error("cannot read config " + path);
  json j = json::parse(f);
  check_keys(j,
             {"problem", "seed", "desk_scale", "domain_length", "da_fixed", "physical",
              "lambda_prior", "lambda_true", "networks", "points", "train", "placement",
              "oracle", "noise"},
             "config");
  ExperimentConfig c;
  get_if(j, "problem", c.problem);
  if (c.problem != "adr1d" && c.problem != "adr2d")
    throw std::runtime_error("unknown problem '" + c.problem + "'");
  get_if(j, "seed", c.seed);
  get_if(j, "desk_scale", c.desk_scale);
  if (c.desk_scale <= 0.0) throw std::runtime_error("desk_scale must be positive");
  get_if(j, "domain_length", c.domain_length);
  get_if(j, "da_fixed", c.da_fixed);
  if (j.contains("physical")) {
    const json& p = j["physical"];
    check_keys(p, {"rho", "mu", "U", "L", "H", "tau", "c0", "t_end",
                   "obstacle_x", "obstacle_y", "radius"},
               "physical");
    get_if(p, "rho", c.nd.rho);
    get_if(p, "mu", c.nd.mu);
    get_if(p, "U", c.nd.U);
    get_if(p, "L", c.nd.L);
    get_if(p, "H", c.nd.H);
    get_if(p, "tau", c.nd.tau);
    get_if(p, "c0", c.nd.c0);
    get_if(p, "t_end", c.nd.t_end);
    c.geom.length_m = c.nd.L;
    c.geom.height_m = c.nd.H;
    get_if(p, "obstacle_x", c.geom.obstacle_x_m);
    get_if(p, "obstacle_y", c.geom.obstacle_y_m);
    get_if(p, "radius", c.geom.radius_m);
  }
  if (j.contains("lambda_prior"))
    c.lambda_prior = j["lambda_prior"].get<std::map<std::string, double>>();
  if (j.contains("lambda_true"))
    c.lambda_true = j["lambda_true"].get<std::map<std::string, double>>();
  if (j.contains("networks"))
    for (const auto& [k, v] : j["networks"].items())
      c.networks[k] = parse_net(v, "networks." + k);
  if (j.contains("points"))
    for (const auto& [k, v] : j["points"].items()) c.points[k] = parse_points(v, "points." + k);
  if (j.contains("train"))
    for (const auto& [k, v] : j["train"].items()) c.train[k] = parse_train(v, "train." + k);
  if (j.contains("placement")) {
    const json& p = j["placement"];
    check_keys(p,
               {"criterion", "n_sensors", "max_evals", "restarts", "popsize",
                "intuitive_radius_factor", "intuitive_angles"},
               "placement");
    get_if(p, "criterion", c.placement.criterion);
    if (c.placement.criterion != "trace" && c.placement.criterion != "det")
      throw std::runtime_error("placement.criterion must be trace or det");
    get_if(p, "n_sensors", c.placement.n_sensors);
    get_if(p, "max_evals", c.placement.max_evals);
    get_if(p, "restarts", c.placement.restarts);
    get_if(p, "popsize", c.placement.popsize);
    get_if(p, "intuitive_radius_factor", c.placement.intuitive_radius_factor);
    if (p.contains("intuitive_angles")) {
      c.placement.intuitive_angles.clear();
      for (const auto& [k, v] : p["intuitive_angles"].items())
        c.placement.intuitive_angles[std::stoi(k)] = v.get<std::vector<double>>();
    }
  }
  if (j.contains("oracle")) {
    const json& p = j["oracle"];
    check_keys(p, {"grid_1d", "nx", "ny", "dt", "advection", "sample_every_s"}, "oracle");
    get_if(p, "grid_1d", c.oracle.grid_1d);
    get_if(p, "nx", c.oracle.nx);
    get_if(p, "ny", c.oracle.ny);
    get_if(p, "dt", c.oracle.dt);
    get_if(p, "advection", c.oracle.advection);
    if (c.oracle.advection != "upwind" && c.oracle.advection != "central")
      throw std::runtime_error("oracle.advection must be upwind or central");
    get_if(p, "sample_every_s", c.oracle.sample_every_s);
  }
  if (j.contains("noise")) {
    const json& p = j["noise"];
    check_keys(p, {"enabled", "sigma_rel", "repeats"}, "noise");
    get_if(p, "enabled", c.noise.enabled);
    get_if(p, "sigma_rel", c.noise.sigma_rel);
    get_if(p, "repeats", c.noise.repeats);
  }
  return c;
}

void save_config(const ExperimentConfig& c, const std::string& path) {
  json j;
  j["problem"] = c.problem;
  j["seed"] = c.seed;
  j["desk_scale"] = c.desk_scale;
  j["domain_length"] = c.domain_length;
  j["da_fixed"] = c.da_fixed;
  j["physical"] = {{"rho", c.nd.rho},
                   {"mu", c.nd.mu},
                   {"U", c.nd.U},
                   {"L", c.nd.L},
                   {"H", c.nd.H},
                   {"tau", c.nd.tau},
                   {"c0", c.nd.c0},
                   {"t_end", c.nd.t_end},
                   {"obstacle_x", c.geom.obstacle_x_m},
                   {"obstacle_y", c.geom.obstacle_y_m},
                   {"radius", c.geom.radius_m}};
  j["lambda_prior"] = c.lambda_prior;
  j["lambda_true"] = c.lambda_true;
  for (const auto& [k, n] : c.networks)
    j["networks"][k] = {{"hidden", n.hidden}, {"width", n.width}};
  for (const auto& [k, p] : c.points)
    j["points"][k] = {{"collocation", p.collocation}, {"inlet", p.inlet},
                      {"outlet", p.outlet},           {"wall", p.wall},
                      {"obstacle", p.obstacle},       {"initial", p.initial}};
  for (const auto& [k, t] : c.train) {
    json tt = {{"adam_iters", t.adam_iters},
               {"adam_lr", t.adam_lr},
               {"lr_decay_every", t.lr_decay_every},
               {"lr_decay", t.lr_decay},
               {"lbfgs_iters", t.lbfgs_iters},
               {"dynamic_weights", t.dynamic_weights},
               {"weight_every", t.weight_every},
               {"rar_every", t.rar_every},
               {"freeze_layers", t.freeze_layers},
               {"data_weight", t.data_weight},
               {"log_every", t.log_every}};
    if (!t.rar_add.empty()) tt["rar_add"] = t.rar_add;
    j["train"][k] = tt;
  }
  {
    json p = {{"criterion", c.placement.criterion},
              {"n_sensors", c.placement.n_sensors},
              {"max_evals", c.placement.max_evals},
              {"restarts", c.placement.restarts},
              {"popsize", c.placement.popsize},
              {"intuitive_radius_factor", c.placement.intuitive_radius_factor}};
    json angles;
    for (const auto& [k, v] : c.placement.intuitive_angles) angles[std::to_string(k)] = v;
    p["intuitive_angles"] = angles;
    j["placement"] = p;
  }
  j["oracle"] = {{"grid_1d", c.oracle.grid_1d}, {"nx", c.oracle.nx},
                 {"ny", c.oracle.ny},           {"dt", c.oracle.dt},
                 {"advection", c.oracle.advection},
                 {"sample_every_s", c.oracle.sample_every_s}};
  j["noise"] = {{"enabled", c.noise.enabled},
                {"sigma_rel", c.noise.sigma_rel},
                {"repeats", c.noise.repeats}};
  std::ofstream f(path);
  if (!f) throw std::runtime_error("cannot write " + path);
  f << j.dump(2) << "\n";
}

}  // namespace pinnplace
