#include "pinnplace/net.hpp"

#include <cmath>
#include <cstring>
#include <fstream>
#include <random>
#include <stdexcept>

#include <json.hpp>

namespace pinnplace {

size_t LayerSpec::param_count() const {
  size_t n = 0;
  for (int l = 0; l + 1 < int(sizes.size()); ++l)
    n += size_t(sizes[l]) * sizes[l + 1] + sizes[l + 1];
  return n;
}

InputScaling InputScaling::from_box(const std::vector<double>& lo, const std::vector<double>& hi) {
  InputScaling s;
  for (size_t i = 0; i < lo.size(); ++i) {
    s.center.push_back(0.5 * (lo[i] + hi[i]));
    const double h = 0.5 * (hi[i] - lo[i]);
    s.halfwidth.push_back(h > 0 ? h : 1.0);
  }
  return s;
}

size_t NetworkParams::layer_offset(int layer) const {
  size_t off = 0;
  for (int l = 0; l < layer; ++l)
    off += size_t(spec.sizes[l]) * spec.sizes[l + 1] + spec.sizes[l + 1];
  return off;
}

double* NetworkParams::bias(int layer) {
  return flat.data() + layer_offset(layer) + size_t(spec.sizes[layer]) * spec.sizes[layer + 1];
}

const double* NetworkParams::bias(int layer) const {
  return flat.data() + layer_offset(layer) + size_t(spec.sizes[layer]) * spec.sizes[layer + 1];
}

std::vector<uint8_t> NetworkParams::frozen_mask() const {
  std::vector<uint8_t> m(flat.size(), 0);
  for (int l = 0; l < spec.num_layers(); ++l) {
    if (l < int(layer_frozen.size()) && layer_frozen[l]) {
      const size_t off = layer_offset(l);
      const size_t n = size_t(spec.sizes[l]) * spec.sizes[l + 1] + spec.sizes[l + 1];
      std::fill(m.begin() + off, m.begin() + off + n, uint8_t(1));
    }
  }
  return m;
}

namespace {
// Portable uniform double in [0, 1) from the top 53 bits.
double u01(std::mt19937_64& rng) {
  return double(rng() >> 11) * 0x1.0p-53;
}
}  // namespace

NetworkParams init_glorot(const LayerSpec& spec, uint64_t seed) {
  if (spec.sizes.size() < 2) throw std::invalid_argument("init_glorot: need >= 2 layer sizes");
  for (int s : spec.sizes)
    if (s <= 0) throw std::invalid_argument("init_glorot: layer sizes must be positive");
  NetworkParams p;
  p.spec = spec;
  p.scaling = InputScaling::identity(spec.sizes[0]);
  p.flat.assign(spec.param_count(), 0.0);
  p.layer_frozen.assign(spec.num_layers(), 0);
  std::mt19937_64 rng(seed);
  for (int l = 0; l < spec.num_layers(); ++l) {
    const int fi = spec.sizes[l], fo = spec.sizes[l + 1];
    const double a = std::sqrt(6.0 / (fi + fo));
    double* w = p.weight(l);
    for (int i = 0; i < fi * fo; ++i) w[i] = a * (2.0 * u01(rng) - 1.0);
    // biases stay zero
  }
  return p;
}

NetworkParams apply_freeze(NetworkParams params, int n_frozen_layers) {
  const int L = params.spec.num_layers();
  if (n_frozen_layers >= L)
    throw std::invalid_argument("apply_freeze: nothing would remain trainable");
  params.layer_frozen.assign(L, 0);
  for (int l = 0; l < n_frozen_layers; ++l) params.layer_frozen[l] = 1;
  return params;
}

std::vector<Jet> forward(const NetworkParams& params, const std::vector<Jet>& inputs) {
  const LayerSpec& sp = params.spec;
  if (int(inputs.size()) != sp.sizes[0])
    throw std::invalid_argument("forward: input count mismatch");
  const JetSpec& js = inputs[0].spec();
  std::vector<Jet> h(inputs.size());
  for (size_t i = 0; i < inputs.size(); ++i) {
    h[i] = jet_scale(jet_add_const(inputs[i], -params.scaling.center[i]),
                     1.0 / params.scaling.halfwidth[i]);
  }
  for (int l = 0; l < sp.num_layers(); ++l) {
    const int fi = sp.sizes[l], fo = sp.sizes[l + 1];
    const double* W = params.weight(l);
    const double* b = params.bias(l);
    std::vector<Jet> out(fo);
    for (int j = 0; j < fo; ++j) {
      Jet acc = jet_const(js, b[j]);
      for (int i = 0; i < fi; ++i)
        acc = jet_add(acc, jet_scale(h[i], W[size_t(j) * fi + i]));
      out[j] = (l + 1 < sp.num_layers()) ? jet_tanh(acc) : acc;
    }
    h = std::move(out);
  }
  return h;
}

std::vector<double> forward_scalar(const NetworkParams& params, const std::vector<double>& x) {
  const LayerSpec& sp = params.spec;
  std::vector<double> h(x.size());
  for (size_t i = 0; i < x.size(); ++i)
    h[i] = (x[i] - params.scaling.center[i]) / params.scaling.halfwidth[i];
  for (int l = 0; l < sp.num_layers(); ++l) {
    const int fi = sp.sizes[l], fo = sp.sizes[l + 1];
    const double* W = params.weight(l);
    const double* b = params.bias(l);
    std::vector<double> out(fo);
    for (int j = 0; j < fo; ++j) {
      double acc = b[j];
      for (int i = 0; i < fi; ++i) acc += W[size_t(j) * fi + i] * h[i];
      out[j] = (l + 1 < sp.num_layers()) ? std::tanh(acc) : acc;
    }
    h = std::move(out);
  }
  return h;
}

std::vector<Var> emit_network(Tape& tape, const LayerSpec& spec, const InputScaling& scaling,
                              const std::vector<Var>& inputs) {
  if (int(inputs.size()) != spec.sizes[0])
    throw std::invalid_argument("emit_network: input count mismatch");
  std::vector<Var> h(inputs.size());
  for (size_t i = 0; i < inputs.size(); ++i)
    h[i] = tape.scale(tape.add_const(inputs[i], -scaling.center[i]), 1.0 / scaling.halfwidth[i]);
  for (int l = 0; l < spec.num_layers(); ++l) {
    const int fi = spec.sizes[l], fo = spec.sizes[l + 1];
    // Weight leaves must be created in flat order: all weights, then biases.
    std::vector<Var> W(size_t(fi) * fo), b(fo);
    for (auto& v : W) v = tape.weight_leaf();
    for (auto& v : b) v = tape.weight_leaf();
    std::vector<Var> out(fo);
    for (int j = 0; j < fo; ++j) {
      Var acc = b[j];
      for (int i = 0; i < fi; ++i) acc = tape.fma(acc, W[size_t(j) * fi + i], h[i]);
      out[j] = (l + 1 < spec.num_layers()) ? tape.tanh_(acc) : acc;
    }
    h = std::move(out);
  }
  return h;
}

namespace {
constexpr char kMagic[8] = {'P', 'N', 'N', 'C', 'K', 'P', 'T', '1'};
}

void save_checkpoint(const NetworkParams& params, const CheckpointMeta& meta,
                     const std::string& path) {
  nlohmann::json j;
  j["version"] = 1;
  j["sizes"] = params.spec.sizes;
  j["scaling_center"] = params.scaling.center;
  j["scaling_halfwidth"] = params.scaling.halfwidth;
  j["seed"] = meta.seed;
  j["problem_id"] = meta.problem_id;
  j["lambda"] = meta.lambda;
  j["iterations"] = meta.iterations;
  const std::string m = j.dump();

  std::ofstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("save_checkpoint: cannot open " + path);
  f.write(kMagic, 8);
  const uint64_t len = m.size();
  f.write(reinterpret_cast<const char*>(&len), 8);
  f.write(m.data(), std::streamsize(len));
  f.write(reinterpret_cast<const char*>(params.flat.data()),
          std::streamsize(params.flat.size() * sizeof(double)));
  if (!f) throw std::runtime_error("save_checkpoint: write failed for " + path);
}

NetworkParams load_checkpoint(const std::string& path, CheckpointMeta* meta_out) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("load_checkpoint: cannot open " + path);
  char magic[8];
  f.read(magic, 8);
  if (!f || std::memcmp(magic, kMagic, 8) != 0)
    throw std::runtime_error("load_checkpoint: bad magic in " + path);
  uint64_t len = 0;
  f.read(reinterpret_cast<char*>(&len), 8);
  if (!f || len > (1u << 20)) throw std::runtime_error("load_checkpoint: corrupt header");
  std::string m(len, '\0');
  f.read(m.data(), std::streamsize(len));
  nlohmann::json j = nlohmann::json::parse(m, nullptr, false);
  if (j.is_discarded() || j.value("version", 0) != 1)
    throw std::runtime_error("load_checkpoint: unsupported metadata in " + path);

  NetworkParams p;
  p.spec.sizes = j.at("sizes").get<std::vector<int>>();
  p.scaling.center = j.at("scaling_center").get<std::vector<double>>();
  p.scaling.halfwidth = j.at("scaling_halfwidth").get<std::vector<double>>();
  p.layer_frozen.assign(p.spec.num_layers(), 0);
  p.flat.assign(p.spec.param_count(), 0.0);
  f.read(reinterpret_cast<char*>(p.flat.data()),
         std::streamsize(p.flat.size() * sizeof(double)));
  if (!f) throw std::runtime_error("load_checkpoint: truncated parameter block in " + path);

  if (meta_out) {
    meta_out->spec = p.spec;
    meta_out->scaling = p.scaling;
    meta_out->seed = j.value("seed", uint64_t(0));
    meta_out->problem_id = j.value("problem_id", std::string());
    meta_out->iterations = j.value("iterations", 0L);
    meta_out->lambda.clear();
    if (j.contains("lambda"))
      meta_out->lambda = j.at("lambda").get<std::map<std::string, double>>();
  }
  return p;
}

}  // namespace pinnplace
