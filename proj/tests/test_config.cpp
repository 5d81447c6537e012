#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>

#include "pinnplace/config.hpp"

using namespace pinnplace;

namespace {

std::string write_tmp(const std::string& name, const std::string& body) {
  const std::string path = std::filesystem::temp_directory_path() / name;
  std::ofstream f(path);
  f << body;
  return path;
}

const char* kGood = R"({
  "problem": "adr2d",
  "seed": 3,
  "desk_scale": 0.1,
  "lambda_prior": {"Pe": 7.0, "Da": 18.0},
  "lambda_true": {"Pe": 12.0, "Da": 22.0},
  "networks": {"sensitivity": {"hidden": 4, "width": 50}},
  "points": {"sensitivity": {"collocation": 40000, "inlet": 1500, "outlet": 1500,
                             "wall": 1500, "obstacle": 1200, "initial": 3000}},
  "train": {"sensitivity": {"adam_iters": 30000, "adam_lr": 1e-3, "lbfgs_iters": 2000,
                            "rar_every": 2000, "rar_add": {"collocation": 300}}},
  "placement": {"criterion": "det", "n_sensors": 3},
  "oracle": {"nx": 241, "ny": 141, "dt": 2.5e-4},
  "noise": {"enabled": true, "repeats": 5}
})";

}  // namespace

TEST_CASE("a full config parses with defaults filled in") {
  auto path = write_tmp("pp_cfg_good.json", kGood);
  ExperimentConfig c = load_config(path);
  CHECK(c.problem == "adr2d");
  CHECK(c.seed == 3);
  CHECK(c.lambda_true.at("Pe") == 12.0);
  CHECK(c.net("sensitivity").width == 50);
  CHECK(c.pts("sensitivity").collocation == 40000);
  CHECK(c.stage("sensitivity").adam_iters == 30000);
  CHECK(c.stage("sensitivity").rar_add.at("collocation") == 300);
  CHECK(c.placement.criterion == "det");
  CHECK(c.oracle.advection == "upwind");
  CHECK(c.noise.sigma_rel == 0.1);
  CHECK(c.nd.reynolds() == doctest::Approx(300.0));
  std::remove(path.c_str());
}

TEST_CASE("unknown keys are rejected at any nesting level") {
  auto p1 = write_tmp("pp_cfg_bad1.json", R"({"problem": "adr1d", "sead": 1})");
  CHECK_THROWS(load_config(p1));
  std::remove(p1.c_str());
  auto p2 = write_tmp("pp_cfg_bad2.json",
                      R"({"problem": "adr1d", "oracle": {"grid_1d": 100, "nz": 3}})");
  CHECK_THROWS(load_config(p2));
  std::remove(p2.c_str());
  auto p3 = write_tmp("pp_cfg_bad3.json",
                      R"({"problem": "adr1d", "train": {"s": {"adamiters": 5}}})");
  CHECK_THROWS(load_config(p3));
  std::remove(p3.c_str());
  auto p4 = write_tmp("pp_cfg_bad4.json", R"({"problem": "adr3d"})");
  CHECK_THROWS(load_config(p4));
  std::remove(p4.c_str());
}

TEST_CASE("desk scaling multiplies budgets and clamps at one") {
  auto path = write_tmp("pp_cfg_scale.json", kGood);
  ExperimentConfig c = load_config(path).scaled();
  CHECK(c.pts("sensitivity").collocation == 4000);
  CHECK(c.pts("sensitivity").obstacle == 120);
  CHECK(c.stage("sensitivity").adam_iters == 3000);
  CHECK(c.stage("sensitivity").rar_add.at("collocation") == 30);
  std::remove(path.c_str());

  auto p2 = write_tmp("pp_cfg_scale2.json",
                      R"({"problem": "adr1d", "desk_scale": 0.001,
                          "points": {"inference": {"collocation": 100}}})");
  ExperimentConfig tiny = load_config(p2).scaled();
  CHECK(tiny.pts("inference").collocation == 1);
  std::remove(p2.c_str());
}

TEST_CASE("intuitive layouts sit on the ring around the obstacle") {
  auto path = write_tmp("pp_cfg_ring.json", kGood);
  ExperimentConfig c = load_config(path);
  for (int n : {1, 2, 3, 5}) {
    auto ring = c.intuitive_layout(n);
    REQUIRE(int(ring.size()) == n);
    for (const auto& s : ring) {
      const double d = std::hypot(s[0] - c.geom.ox(), s[1] - c.geom.oy());
      CHECK(d == doctest::Approx(2.0 * c.geom.r()).epsilon(1e-12));
      CHECK(c.geom.feasible(s[0], s[1]));
    }
  }
  auto one = c.intuitive_layout(1);
  CHECK(one[0][0] == doctest::Approx(c.geom.ox() + 2.0 * c.geom.r()));
  CHECK(one[0][1] == doctest::Approx(c.geom.oy()));
  CHECK_THROWS(c.intuitive_layout(4));
  std::remove(path.c_str());
}

TEST_CASE("config snapshot round-trips through save and load") {
  auto path = write_tmp("pp_cfg_rt.json", kGood);
  ExperimentConfig c = load_config(path);
  const std::string out = std::filesystem::temp_directory_path() / "pp_cfg_rt_out.json";
  save_config(c, out);
  ExperimentConfig b = load_config(out);
  CHECK(b.problem == c.problem);
  CHECK(b.desk_scale == c.desk_scale);
  CHECK(b.lambda_prior == c.lambda_prior);
  CHECK(b.pts("sensitivity").initial == c.pts("sensitivity").initial);
  CHECK(b.stage("sensitivity").rar_add == c.stage("sensitivity").rar_add);
  CHECK(b.placement.intuitive_angles == c.placement.intuitive_angles);
  CHECK(b.oracle.dt == c.oracle.dt);
  std::remove(path.c_str());
  std::remove(out.c_str());
}
