#include "pinnplace/jet.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <map>
#include <numeric>
#include <set>
#include <stdexcept>

namespace pinnplace {

MultiIndex MultiIndex::unit(int dim, int i) {
  std::vector<uint8_t> e(dim, 0);
  e[i] = 1;
  return MultiIndex(std::move(e));
}

int MultiIndex::total() const {
  return std::accumulate(exponents.begin(), exponents.end(), 0);
}

std::string MultiIndex::str() const {
  std::string s = "(";
  for (size_t i = 0; i < exponents.size(); ++i) {
    if (i) s += ",";
    s += std::to_string(int(exponents[i]));
  }
  return s + ")";
}

bool multi_index_less(const MultiIndex& a, const MultiIndex& b) {
  if (a.total() != b.total()) return a.total() < b.total();
  return a.exponents < b.exponents;
}

namespace {

double binom(int n, int k) {
  double r = 1.0;
  for (int i = 1; i <= k; ++i) r = r * (n - k + i) / i;
  return r;
}

bool leq(const MultiIndex& a, const MultiIndex& b) {
  for (size_t i = 0; i < a.exponents.size(); ++i)
    if (a.exponents[i] > b.exponents[i]) return false;
  return true;
}

MultiIndex diff(const MultiIndex& a, const MultiIndex& b) {
  MultiIndex r = a;
  for (size_t i = 0; i < r.exponents.size(); ++i) r.exponents[i] -= b.exponents[i];
  return r;
}

}  // namespace

JetSpec JetSpec::make(int input_dim, const std::vector<MultiIndex>& requested) {
  if (input_dim <= 0) throw std::invalid_argument("JetSpec: input_dim must be positive");
  std::set<std::vector<uint8_t>> all;
  all.insert(std::vector<uint8_t>(input_dim, 0));
  for (int i = 0; i < input_dim; ++i) all.insert(MultiIndex::unit(input_dim, i).exponents);
  // Downward closure of every requested index.
  std::vector<std::vector<uint8_t>> stack;
  for (const auto& m : requested) {
    if (static_cast<int>(m.exponents.size()) != input_dim)
      throw std::invalid_argument("JetSpec: index dimension mismatch");
    stack.push_back(m.exponents);
  }
  while (!stack.empty()) {
    auto e = stack.back();
    stack.pop_back();
    if (!all.insert(e).second) continue;
    for (int i = 0; i < input_dim; ++i) {
      if (e[i] > 0) {
        auto f = e;
        --f[i];
        stack.push_back(f);
      }
    }
  }

  JetSpec s;
  s.input_dim_ = input_dim;
  for (auto& e : all) s.tracked_.emplace_back(e);
  std::sort(s.tracked_.begin(), s.tracked_.end(), multi_index_less);

  std::map<std::vector<uint8_t>, int> pos;
  for (size_t k = 0; k < s.tracked_.size(); ++k) pos[s.tracked_[k].exponents] = int(k);

  s.max_order_ = 0;
  for (auto& m : s.tracked_) s.max_order_ = std::max(s.max_order_, m.total());

  s.unit_index_.resize(input_dim);
  for (int i = 0; i < input_dim; ++i)
    s.unit_index_[i] = pos.at(MultiIndex::unit(input_dim, i).exponents);

  for (size_t c = 0; c < s.tracked_.size(); ++c) {
    const auto& g = s.tracked_[c];
    for (size_t a = 0; a < s.tracked_.size(); ++a) {
      const auto& al = s.tracked_[a];
      if (!leq(al, g)) continue;
      auto be = diff(g, al);
      auto it = pos.find(be.exponents);
      if (it == pos.end()) continue;  // cannot happen for downward-closed sets
      double w = 1.0;
      for (int i = 0; i < input_dim; ++i) w *= binom(g.exponents[i], al.exponents[i]);
      s.mul_triples_.push_back({uint16_t(c), uint16_t(a), uint16_t(it->second), w});
    }
  }

  s.shift_.assign(s.tracked_.size() * input_dim, -1);
  for (size_t k = 0; k < s.tracked_.size(); ++k) {
    for (int i = 0; i < input_dim; ++i) {
      auto e = s.tracked_[k].exponents;
      ++e[i];
      auto it = pos.find(e);
      if (it != pos.end()) s.shift_[k * input_dim + i] = it->second;
    }
  }
  return s;
}

int JetSpec::index_of(const MultiIndex& m) const {
  for (size_t k = 0; k < tracked_.size(); ++k)
    if (tracked_[k] == m) return int(k);
  return -1;
}

namespace specs {

namespace {
MultiIndex mi(std::vector<uint8_t> e) { return MultiIndex(std::move(e)); }
}  // namespace

const JetSpec& scalar_1d() {
  static const JetSpec s = JetSpec::make(1, {mi({2})});
  return s;
}

const JetSpec& adr1d_sensitivity() {
  static const JetSpec s = JetSpec::make(2, {mi({2, 0}), mi({1, 1}), mi({2, 1})});
  return s;
}

const JetSpec& flow2d() {
  static const JetSpec s = JetSpec::make(2, {mi({2, 0}), mi({0, 2})});
  return s;
}

const JetSpec& flow2d_psi() {
  // Full cubic closure in (x, y): the streamfunction needs third derivatives
  // so the velocity components carry exact second derivatives.
  static const JetSpec s =
      JetSpec::make(2, {mi({3, 0}), mi({2, 1}), mi({1, 2}), mi({0, 3})});
  return s;
}

const JetSpec& adr2d_state() {
  static const JetSpec s = JetSpec::make(3, {mi({2, 0, 0}), mi({0, 2, 0})});
  return s;
}

const JetSpec& adr2d_sensitivity() {
  static const JetSpec s = [] {
  std::vector<MultiIndex> req;
  for (int l = 3; l <= 4; ++l) {
    for (auto base : {std::vector<uint8_t>{2, 0, 0, 0, 0}, {0, 2, 0, 0, 0}, {0, 0, 1, 0, 0}}) {
      auto e = base;
      e[l] = 1;
      req.push_back(mi(e));
    }
  }
  return JetSpec::make(5, req);
  }();
  return s;
}

}  // namespace specs

namespace jetk {

void mul(const JetSpec& s, const double* a, const double* b, double* out) {
  const int K = s.size();
  std::memset(out, 0, sizeof(double) * K);
  for (const auto& t : s.mul_triples()) out[t.c] += t.w * a[t.a] * b[t.b];
}

void mul_vjp(const JetSpec& s, const double* cbar, const double* a, const double* b,
             double* abar, double* bbar) {
  for (const auto& t : s.mul_triples()) {
    const double cb = cbar[t.c];
    abar[t.a] += t.w * cb * b[t.b];
    bbar[t.b] += t.w * cb * a[t.a];
  }
}

void shift(const JetSpec& s, const double* a, int input, double* out) {
  const int K = s.size();
  for (int k = 0; k < K; ++k) {
    const int src = s.shift_source(k, input);
    out[k] = src >= 0 ? a[src] : 0.0;
  }
}

void shift_vjp(const JetSpec& s, const double* cbar, int input, double* abar) {
  const int K = s.size();
  for (int k = 0; k < K; ++k) {
    const int src = s.shift_source(k, input);
    if (src >= 0) abar[src] += cbar[k];
  }
}

void univariate(const JetSpec& s, const double* a, const double* d, double* out, double* ws) {
  const int K = s.size();
  const int m = s.max_order();
  double* delta = ws;
  double* pk = ws + K;
  double* tmp = ws + 2 * K;
  std::memcpy(delta, a, sizeof(double) * K);
  delta[0] = 0.0;
  std::memset(out, 0, sizeof(double) * K);
  out[0] = d[0];
  std::memcpy(pk, delta, sizeof(double) * K);
  double fact = 1.0;
  for (int k = 1; k <= m; ++k) {
    fact *= k;
    const double g = d[k] / fact;
    for (int j = 0; j < K; ++j) out[j] += g * pk[j];
    if (k < m) {
      mul(s, pk, delta, tmp);
      std::memcpy(pk, tmp, sizeof(double) * K);
    }
  }
}

void univariate_vjp(const JetSpec& s, const double* a, const double* d, const double* cbar,
                    double* abar, double* ws) {
  const int K = s.size();
  const int m = s.max_order();
  // ws layout: delta | delta^0..delta^m | dbar, (m + 3) * K doubles total.
  double* delta = ws;
  double* pows = ws + K;
  double* dbar = ws + (m + 2) * K;
  std::memcpy(delta, a, sizeof(double) * K);
  delta[0] = 0.0;
  std::memset(pows, 0, sizeof(double) * (m + 1) * K);
  std::memset(dbar, 0, sizeof(double) * K);
  pows[0] = 1.0;  // delta^0 = unit at the zero index
  for (int k = 1; k <= m; ++k)
    mul(s, &pows[(k - 1) * K], delta, &pows[k * K]);

  // d/d(a0): sum_k f^(k+1)(a0)/k! <cbar, delta^k>.
  double fact = 1.0;
  double acc0 = 0.0;
  for (int k = 0; k <= m; ++k) {
    if (k > 0) fact *= k;
    double dot = 0.0;
    for (int j = 0; j < K; ++j) dot += cbar[j] * pows[k * K + j];
    acc0 += d[k + 1] / fact * dot;
  }
  abar[0] += acc0;

  // d/d(delta): sum_{k>=1} f^(k)(a0)/(k-1)! * M_{delta^{k-1}}^T cbar.
  fact = 1.0;
  for (int k = 1; k <= m; ++k) {
    if (k > 1) fact *= (k - 1);
    const double g = d[k] / fact;
    const double* b = &pows[(k - 1) * K];
    for (const auto& t : s.mul_triples())
      dbar[t.a] += g * t.w * cbar[t.c] * b[t.b];
  }
  for (int j = 1; j < K; ++j) abar[j] += dbar[j];
}

void tanh_derivs(double a0, int n, double* d) {
  const double t = std::tanh(a0);
  const double u = 1.0 - t * t;
  d[0] = t;
  if (n >= 1) d[1] = u;
  if (n >= 2) d[2] = -2.0 * t * u;
  if (n >= 3) d[3] = -2.0 * u * u + 4.0 * t * t * u;
  if (n >= 4) d[4] = 16.0 * t * u * u - 8.0 * t * t * t * u;
  if (n >= 5) throw std::invalid_argument("tanh_derivs: order too high");
}

void exp_derivs(double a0, int n, double* d) {
  const double e = std::exp(a0);
  for (int k = 0; k <= n; ++k) d[k] = e;
}

void sin_derivs(double a0, int n, double* d) {
  const double s = std::sin(a0), c = std::cos(a0);
  const double cyc[4] = {s, c, -s, -c};
  for (int k = 0; k <= n; ++k) d[k] = cyc[k % 4];
}

void cos_derivs(double a0, int n, double* d) {
  const double s = std::sin(a0), c = std::cos(a0);
  const double cyc[4] = {c, -s, -c, s};
  for (int k = 0; k <= n; ++k) d[k] = cyc[k % 4];
}

}  // namespace jetk

Jet::Jet(const JetSpec& spec, double value) : spec_(&spec), coeffs_(spec.size(), 0.0) {
  coeffs_[0] = value;
}

Jet jet_const(const JetSpec& spec, double value) { return Jet(spec, value); }

Jet jet_input(const JetSpec& spec, int input_index, double value) {
  if (input_index < 0 || input_index >= spec.input_dim())
    throw std::out_of_range("jet_input: input index out of range");
  Jet j(spec, value);
  j[spec.unit_index(input_index)] = 1.0;
  return j;
}

namespace {
void check_same(const Jet& a, const Jet& b) {
  if (!(a.spec() == b.spec())) throw std::invalid_argument("jet: spec mismatch");
}
}  // namespace

Jet jet_add(const Jet& a, const Jet& b) {
  check_same(a, b);
  Jet r = a;
  for (int k = 0; k < a.spec().size(); ++k) r[k] += b[k];
  return r;
}

Jet jet_sub(const Jet& a, const Jet& b) {
  check_same(a, b);
  Jet r = a;
  for (int k = 0; k < a.spec().size(); ++k) r[k] -= b[k];
  return r;
}

Jet jet_neg(const Jet& a) { return jet_scale(a, -1.0); }

Jet jet_scale(const Jet& a, double s) {
  Jet r = a;
  for (int k = 0; k < a.spec().size(); ++k) r[k] *= s;
  return r;
}

Jet jet_add_const(const Jet& a, double s) {
  Jet r = a;
  r[0] += s;
  return r;
}

Jet jet_mul(const Jet& a, const Jet& b) {
  check_same(a, b);
  Jet r(a.spec());
  jetk::mul(a.spec(), a.coeffs().data(), b.coeffs().data(), r.coeffs().data());
  return r;
}

Jet jet_square(const Jet& a) { return jet_mul(a, a); }

namespace {
Jet compose(const Jet& a, void (*derivs)(double, int, double*)) {
  const JetSpec& s = a.spec();
  Jet r(s);
  std::vector<double> d(s.max_order() + 1), ws(3 * s.size());
  derivs(a.value(), s.max_order(), d.data());
  jetk::univariate(s, a.coeffs().data(), d.data(), r.coeffs().data(), ws.data());
  return r;
}
}  // namespace

Jet jet_tanh(const Jet& a) { return compose(a, jetk::tanh_derivs); }
Jet jet_exp(const Jet& a) { return compose(a, jetk::exp_derivs); }
Jet jet_sin(const Jet& a) { return compose(a, jetk::sin_derivs); }
Jet jet_cos(const Jet& a) { return compose(a, jetk::cos_derivs); }

Jet jet_shift(const Jet& a, int input) {
  Jet r(a.spec());
  jetk::shift(a.spec(), a.coeffs().data(), input, r.coeffs().data());
  return r;
}

double extract(const Jet& a, const MultiIndex& idx) {
  const int k = a.spec().index_of(idx);
  if (k < 0) throw std::out_of_range("extract: untracked index " + idx.str());
  return a[k];
}

}  // namespace pinnplace
