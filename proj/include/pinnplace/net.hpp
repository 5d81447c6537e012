#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "pinnplace/jet.hpp"
#include "pinnplace/tape.hpp"

namespace pinnplace {

/// Layer widths: input, hidden..., output. tanh on hidden layers, linear output.
struct LayerSpec {
  std::vector<int> sizes;

  int num_layers() const { return int(sizes.size()) - 1; }
  size_t param_count() const;
  bool operator==(const LayerSpec&) const = default;
};

/// Per-input affine normalization applied before the first layer:
/// x_hat = (x - center) / halfwidth.
struct InputScaling {
  std::vector<double> center, halfwidth;

  static InputScaling identity(int dim) {
    return {std::vector<double>(dim, 0.0), std::vector<double>(dim, 1.0)};
  }
  static InputScaling from_box(const std::vector<double>& lo, const std::vector<double>& hi);
};

struct NetworkParams {
  LayerSpec spec;
  InputScaling scaling;
  std::vector<double> flat;          // per layer: row-major weights then biases
  std::vector<uint8_t> layer_frozen;  // one flag per layer

  size_t layer_offset(int layer) const;  // offset of layer's weight block
  double* weight(int layer) { return flat.data() + layer_offset(layer); }
  const double* weight(int layer) const { return flat.data() + layer_offset(layer); }
  double* bias(int layer);
  const double* bias(int layer) const;

  /// Per-entry trainability mask derived from layer_frozen.
  std::vector<uint8_t> frozen_mask() const;
};

NetworkParams init_glorot(const LayerSpec& spec, uint64_t seed);

/// Marks the first n layers (counting from the input side) as frozen.
/// Throws if nothing would remain trainable.
NetworkParams apply_freeze(NetworkParams params, int n_frozen_layers);

/// Jet-valued forward pass. The zero-order coefficients equal the plain
/// scalar forward pass.
std::vector<Jet> forward(const NetworkParams& params, const std::vector<Jet>& inputs);
/// Plain scalar forward pass.
std::vector<double> forward_scalar(const NetworkParams& params, const std::vector<double>& x);

/// Emits the network onto a tape. Weight leaves are created in flat-parameter
/// order so leaf ordinal i corresponds to params.flat[i + weight_base] with
/// weight_base = tape.num_weights() before the call.
std::vector<Var> emit_network(Tape& tape, const LayerSpec& spec, const InputScaling& scaling,
                              const std::vector<Var>& inputs);

struct CheckpointMeta {
  LayerSpec spec;
  InputScaling scaling;
  uint64_t seed = 0;
  std::string problem_id;
  std::map<std::string, double> lambda;  // parameter values used in training
  long iterations = 0;
};

void save_checkpoint(const NetworkParams& params, const CheckpointMeta& meta,
                     const std::string& path);
NetworkParams load_checkpoint(const std::string& path, CheckpointMeta* meta = nullptr);

}  // namespace pinnplace
