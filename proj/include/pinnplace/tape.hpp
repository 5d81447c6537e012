#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "pinnplace/jet.hpp"

namespace pinnplace {

struct Var {
  uint32_t id = 0;
};

/// Append-only program of jet-valued operations with trainable scalar leaves.
///
/// The node list is recorded once; evaluation state lives in a TapeWork so one
/// recorded program can be replayed for many points (and from many threads,
/// one workspace each). Replays are deterministic: the node order fixes the
/// floating-point evaluation order.
class Tape {
 public:
  enum class Op : uint8_t {
    WeightLeaf,  // trainable scalar, value from set_weights
    ScalarLeaf,  // per-point scalar input (constant jet)
    InputLeaf,   // per-point seeded jet input, aux = input index
    Const,
    Add,
    Sub,
    Neg,
    Scale,     // aux = factor
    AddConst,  // aux = offset
    Mul,
    MulScalar,  // a scalar-valued (only zero coeff used), b jet
    Fma,        // a + b0 * c, b scalar-valued
    Tanh,
    Exp,
    Square,
    Shift,    // aux = input index
    Extract,  // aux = coefficient slot; result is a scalar jet
  };

  explicit Tape(const JetSpec& spec) : spec_(&spec) {}

  const JetSpec& spec() const { return *spec_; }
  size_t num_nodes() const { return nodes_.size(); }
  size_t num_weights() const { return weight_leaves_.size(); }
  std::span<const uint32_t> weight_leaves() const { return weight_leaves_; }

  Var weight_leaf();
  Var scalar_leaf();
  Var input_leaf(int input_index);
  Var constant(double v);
  Var add(Var a, Var b) { return push(Op::Add, a.id, b.id); }
  Var sub(Var a, Var b) { return push(Op::Sub, a.id, b.id); }
  Var neg(Var a) { return push(Op::Neg, a.id); }
  Var scale(Var a, double s) { return push(Op::Scale, a.id, 0, 0, s); }
  Var add_const(Var a, double s) { return push(Op::AddConst, a.id, 0, 0, s); }
  Var mul(Var a, Var b) { return push(Op::Mul, a.id, b.id); }
  Var mul_scalar(Var scalar, Var jet) { return push(Op::MulScalar, scalar.id, jet.id); }
  Var fma(Var acc, Var scalar, Var jet) { return push(Op::Fma, acc.id, scalar.id, jet.id); }
  Var tanh_(Var a) { return push(Op::Tanh, a.id); }
  Var exp_(Var a) { return push(Op::Exp, a.id); }
  Var square(Var a) { return push(Op::Square, a.id); }
  Var shift(Var a, int input) { return push(Op::Shift, a.id, 0, 0, double(input)); }
  Var extract_coeff(Var a, int slot);

  struct Work {
    std::vector<double> vals, adj, ws;
  };
  Work make_work() const;

  void set_weights(Work& w, std::span<const double> weights) const;
  void set_input(Work& w, Var leaf, double value) const;
  void set_scalar(Work& w, Var leaf, double value) const;

  void forward(Work& w) const;

  struct Seed {
    Var node;
    uint16_t coeff;
    double weight;
  };
  /// Reverse sweep; adds dL/d(weight leaf) into grad (size num_weights()).
  void backward(Work& w, std::span<const Seed> seeds, std::span<double> grad) const;
  /// Spec-level convenience: seed the zero coefficient of loss_node with 1
  /// and return the full weight-leaf gradient.
  std::vector<double> backward_loss(Work& w, Var loss_node) const;

  double value(const Work& w, Var v, int coeff = 0) const;

 private:
  struct Node {
    Op op;
    uint32_t a = 0, b = 0, c = 0;
    double aux = 0.0;
  };
  Var push(Op op, uint32_t a = 0, uint32_t b = 0, uint32_t c = 0, double aux = 0.0);

  const JetSpec* spec_;
  std::vector<Node> nodes_;
  std::vector<uint32_t> weight_leaves_;
  std::vector<int32_t> weight_ordinal_;  // node id -> weight slot, -1 otherwise
};

}  // namespace pinnplace
