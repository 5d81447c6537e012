#include "pinnplace/tape.hpp"

#include <cmath>
#include <cstring>
#include <stdexcept>

namespace pinnplace {

Var Tape::push(Op op, uint32_t a, uint32_t b, uint32_t c, double aux) {
  const uint32_t id = uint32_t(nodes_.size());
  nodes_.push_back({op, a, b, c, aux});
  weight_ordinal_.push_back(-1);
  return Var{id};
}

Var Tape::weight_leaf() {
  Var v = push(Op::WeightLeaf);
  weight_ordinal_[v.id] = int32_t(weight_leaves_.size());
  weight_leaves_.push_back(v.id);
  return v;
}

Var Tape::scalar_leaf() { return push(Op::ScalarLeaf); }

Var Tape::input_leaf(int input_index) {
  if (input_index < 0 || input_index >= spec_->input_dim())
    throw std::out_of_range("Tape::input_leaf: index out of range");
  return push(Op::InputLeaf, 0, 0, 0, double(input_index));
}

Var Tape::constant(double v) { return push(Op::Const, 0, 0, 0, v); }

Var Tape::extract_coeff(Var a, int slot) {
  if (slot < 0 || slot >= spec_->size())
    throw std::out_of_range("Tape::extract_coeff: untracked slot");
  return push(Op::Extract, a.id, 0, 0, double(slot));
}

Tape::Work Tape::make_work() const {
  Work w;
  const size_t K = size_t(spec_->size());
  w.vals.assign(nodes_.size() * K, 0.0);
  w.adj.assign(nodes_.size() * K, 0.0);
  w.ws.assign(size_t(spec_->max_order() + 4) * K + 8, 0.0);
  return w;
}

void Tape::set_weights(Work& w, std::span<const double> weights) const {
  if (weights.size() != weight_leaves_.size())
    throw std::invalid_argument("Tape::set_weights: size mismatch");
  const size_t K = size_t(spec_->size());
  for (size_t i = 0; i < weights.size(); ++i) {
    double* v = &w.vals[weight_leaves_[i] * K];
    std::memset(v, 0, sizeof(double) * K);
    v[0] = weights[i];
  }
}

void Tape::set_input(Work& w, Var leaf, double value) const {
  const Node& n = nodes_[leaf.id];
  if (n.op != Op::InputLeaf) throw std::invalid_argument("set_input: not an input leaf");
  const size_t K = size_t(spec_->size());
  double* v = &w.vals[leaf.id * K];
  std::memset(v, 0, sizeof(double) * K);
  v[0] = value;
  v[spec_->unit_index(int(n.aux))] = 1.0;
}

void Tape::set_scalar(Work& w, Var leaf, double value) const {
  if (nodes_[leaf.id].op != Op::ScalarLeaf)
    throw std::invalid_argument("set_scalar: not a scalar leaf");
  const size_t K = size_t(spec_->size());
  double* v = &w.vals[leaf.id * K];
  std::memset(v, 0, sizeof(double) * K);
  v[0] = value;
}

void Tape::forward(Work& w) const {
  const JetSpec& s = *spec_;
  const int K = s.size();
  double* vals = w.vals.data();
  double* ws = w.ws.data();
  double d[6];
  for (size_t i = 0; i < nodes_.size(); ++i) {
    const Node& n = nodes_[i];
    double* out = vals + i * size_t(K);
    const double* a = vals + n.a * size_t(K);
    const double* b = vals + n.b * size_t(K);
    switch (n.op) {
      case Op::WeightLeaf:
      case Op::ScalarLeaf:
      case Op::InputLeaf:
        break;  // values written by setters
      case Op::Const:
        std::memset(out, 0, sizeof(double) * K);
        out[0] = n.aux;
        break;
      case Op::Add:
        for (int k = 0; k < K; ++k) out[k] = a[k] + b[k];
        break;
      case Op::Sub:
        for (int k = 0; k < K; ++k) out[k] = a[k] - b[k];
        break;
      case Op::Neg:
        for (int k = 0; k < K; ++k) out[k] = -a[k];
        break;
      case Op::Scale:
        for (int k = 0; k < K; ++k) out[k] = n.aux * a[k];
        break;
      case Op::AddConst:
        for (int k = 0; k < K; ++k) out[k] = a[k];
        out[0] += n.aux;
        break;
      case Op::Mul:
        jetk::mul(s, a, b, out);
        break;
      case Op::MulScalar: {
        const double f = a[0];
        for (int k = 0; k < K; ++k) out[k] = f * b[k];
        break;
      }
      case Op::Fma: {
        const double f = b[0];
        const double* c = vals + n.c * size_t(K);
        for (int k = 0; k < K; ++k) out[k] = a[k] + f * c[k];
        break;
      }
      case Op::Tanh:
        jetk::tanh_derivs(a[0], s.max_order(), d);
        jetk::univariate(s, a, d, out, ws);
        break;
      case Op::Exp:
        jetk::exp_derivs(a[0], s.max_order(), d);
        jetk::univariate(s, a, d, out, ws);
        break;
      case Op::Square:
        jetk::mul(s, a, a, out);
        break;
      case Op::Shift:
        jetk::shift(s, a, int(n.aux), out);
        break;
      case Op::Extract:
        std::memset(out, 0, sizeof(double) * K);
        out[0] = a[int(n.aux)];
        break;
    }
  }
}

void Tape::backward(Work& w, std::span<const Seed> seeds, std::span<double> grad) const {
  const JetSpec& s = *spec_;
  const int K = s.size();
  std::memset(w.adj.data(), 0, w.adj.size() * sizeof(double));
  for (const auto& seed : seeds) {
    if (seed.node.id >= nodes_.size()) throw std::out_of_range("backward: node id out of range");
    w.adj[seed.node.id * size_t(K) + seed.coeff] += seed.weight;
  }
  double* vals = w.vals.data();
  double* adj = w.adj.data();
  double* ws = w.ws.data();
  double d[6];
  for (size_t ii = nodes_.size(); ii-- > 0;) {
    const Node& n = nodes_[ii];
    const double* cbar = adj + ii * size_t(K);
    double* abar = adj + n.a * size_t(K);
    double* bbar = adj + n.b * size_t(K);
    const double* a = vals + n.a * size_t(K);
    const double* b = vals + n.b * size_t(K);
    switch (n.op) {
      case Op::WeightLeaf: {
        const int32_t ord = weight_ordinal_[ii];
        grad[size_t(ord)] += cbar[0];
        break;
      }
      case Op::ScalarLeaf:
      case Op::InputLeaf:
      case Op::Const:
        break;
      case Op::Add:
        for (int k = 0; k < K; ++k) {
          abar[k] += cbar[k];
          bbar[k] += cbar[k];
        }
        break;
      case Op::Sub:
        for (int k = 0; k < K; ++k) {
          abar[k] += cbar[k];
          bbar[k] -= cbar[k];
        }
        break;
      case Op::Neg:
        for (int k = 0; k < K; ++k) abar[k] -= cbar[k];
        break;
      case Op::Scale:
        for (int k = 0; k < K; ++k) abar[k] += n.aux * cbar[k];
        break;
      case Op::AddConst:
        for (int k = 0; k < K; ++k) abar[k] += cbar[k];
        break;
      case Op::Mul:
        jetk::mul_vjp(s, cbar, a, b, abar, bbar);
        break;
      case Op::MulScalar: {
        double dot = 0.0;
        const double f = a[0];
        for (int k = 0; k < K; ++k) {
          dot += cbar[k] * b[k];
          bbar[k] += f * cbar[k];
        }
        abar[0] += dot;
        break;
      }
      case Op::Fma: {
        double* ccbar = adj + n.c * size_t(K);
        const double* c = vals + n.c * size_t(K);
        const double f = b[0];
        double dot = 0.0;
        for (int k = 0; k < K; ++k) {
          abar[k] += cbar[k];
          dot += cbar[k] * c[k];
          ccbar[k] += f * cbar[k];
        }
        bbar[0] += dot;
        break;
      }
      case Op::Tanh:
        jetk::tanh_derivs(a[0], s.max_order() + 1, d);
        jetk::univariate_vjp(s, a, d, cbar, abar, ws);
        break;
      case Op::Exp:
        jetk::exp_derivs(a[0], s.max_order() + 1, d);
        jetk::univariate_vjp(s, a, d, cbar, abar, ws);
        break;
      case Op::Square:
        jetk::mul_vjp(s, cbar, a, a, abar, abar);
        break;
      case Op::Shift:
        jetk::shift_vjp(s, cbar, int(n.aux), abar);
        break;
      case Op::Extract:
        abar[int(n.aux)] += cbar[0];
        break;
    }
  }
}

std::vector<double> Tape::backward_loss(Work& w, Var loss_node) const {
  std::vector<double> grad(weight_leaves_.size(), 0.0);
  const Seed seed{loss_node, 0, 1.0};
  backward(w, std::span<const Seed>(&seed, 1), grad);
  return grad;
}

double Tape::value(const Work& w, Var v, int coeff) const {
  return w.vals[v.id * size_t(spec_->size()) + coeff];
}

}  // namespace pinnplace
