#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace pinnplace {

/// Derivative multi-index: one exponent per network input.
struct MultiIndex {
  std::vector<uint8_t> exponents;

  MultiIndex() = default;
  explicit MultiIndex(std::vector<uint8_t> e) : exponents(std::move(e)) {}
  static MultiIndex zero(int dim) { return MultiIndex(std::vector<uint8_t>(dim, 0)); }
  static MultiIndex unit(int dim, int i);

  int total() const;
  bool operator==(const MultiIndex&) const = default;
  std::string str() const;
};

/// Canonical ordering: total order first, then lexicographic.
bool multi_index_less(const MultiIndex& a, const MultiIndex& b);

/// The set of Taylor coefficients propagated through jet arithmetic.
///
/// Tracked sets are always downward-closed (every beta <= alpha is tracked
/// whenever alpha is), which makes every tracked coefficient of a truncated
/// product or composition exact.
class JetSpec {
 public:
  struct Triple {
    uint16_t c, a, b;  // out, left, right coefficient slots
    double w;          // multinomial weight, prod_i C(gamma_i, alpha_i)
  };

  /// Builds a spec from requested indices; the zero index, all first-order
  /// unit indices and the downward closure are added automatically.
  static JetSpec make(int input_dim, const std::vector<MultiIndex>& requested);

  int input_dim() const { return input_dim_; }
  int size() const { return static_cast<int>(tracked_.size()); }
  int max_order() const { return max_order_; }

  const std::vector<MultiIndex>& tracked() const { return tracked_; }
  const MultiIndex& at(int k) const { return tracked_[k]; }
  /// Slot of the given index, or -1 if untracked.
  int index_of(const MultiIndex&) const;
  int zero_index() const { return 0; }
  int unit_index(int input) const { return unit_index_[input]; }

  std::span<const Triple> mul_triples() const { return mul_triples_; }
  /// Slot of alpha + e_input, or -1 when it leaves the tracked set.
  int shift_source(int k, int input) const { return shift_[k * input_dim_ + input]; }

  bool operator==(const JetSpec& o) const {
    return input_dim_ == o.input_dim_ && tracked_ == o.tracked_;
  }

 private:
  int input_dim_ = 0;
  int max_order_ = 0;
  std::vector<MultiIndex> tracked_;
  std::vector<int> unit_index_;
  std::vector<Triple> mul_triples_;
  std::vector<int> shift_;
};

/// Commonly used specs.
namespace specs {
/// (x): value, d/dx, d2/dx2.
const JetSpec& scalar_1d();
/// (x, lambda): up to d2/dx2, d/dl, d2/dxdl, d3/dx2dl.
const JetSpec& adr1d_sensitivity();
/// (x, y): value, gradients, dxx, dyy.
const JetSpec& flow2d();
const JetSpec& flow2d_psi();
/// (x, y, t): value, dx, dy, dt, dxx, dyy.
const JetSpec& adr2d_state();
/// (x, y, t, Pe, Da): adr2d_state plus first order in each lambda and the
/// mixed indices needed for residual lambda-derivatives.
const JetSpec& adr2d_sensitivity();
}  // namespace specs

// Low-level kernels on raw coefficient arrays (length spec.size()).
// Coefficients are raw partial derivatives, not factorial-normalized.
namespace jetk {

void mul(const JetSpec& s, const double* a, const double* b, double* out);
/// Accumulates d(out)/d(a) and d(out)/d(b) transposed against cbar.
void mul_vjp(const JetSpec& s, const double* cbar, const double* a, const double* b,
             double* abar, double* bbar);
/// out(alpha) = a(alpha + e_input) where tracked, else 0.
void shift(const JetSpec& s, const double* a, int input, double* out);
void shift_vjp(const JetSpec& s, const double* cbar, int input, double* abar);

/// Truncated composition out = f o a given univariate derivatives
/// d[k] = f^(k)(a0) for k = 0..spec.max_order().
/// ws must hold 3 * spec.size() doubles.
void univariate(const JetSpec& s, const double* a, const double* d, double* out, double* ws);
/// VJP of the composition; d must hold k = 0..max_order()+1.
void univariate_vjp(const JetSpec& s, const double* a, const double* d, const double* cbar,
                    double* abar, double* ws);

void tanh_derivs(double a0, int n, double* d);  // d[0..n]
void exp_derivs(double a0, int n, double* d);
void sin_derivs(double a0, int n, double* d);
void cos_derivs(double a0, int n, double* d);

}  // namespace jetk

/// Value-semantics truncated Taylor expansion over a JetSpec.
class Jet {
 public:
  Jet() = default;
  Jet(const JetSpec& spec, double value = 0.0);

  const JetSpec& spec() const { return *spec_; }
  std::span<const double> coeffs() const { return coeffs_; }
  std::span<double> coeffs() { return coeffs_; }
  double value() const { return coeffs_[0]; }

  double operator[](int k) const { return coeffs_[k]; }
  double& operator[](int k) { return coeffs_[k]; }

 private:
  const JetSpec* spec_ = nullptr;
  std::vector<double> coeffs_;
};

Jet jet_const(const JetSpec& spec, double value);
/// Seed for input i: value at the zero index, 1 at the unit index.
Jet jet_input(const JetSpec& spec, int input_index, double value);

Jet jet_add(const Jet& a, const Jet& b);
Jet jet_sub(const Jet& a, const Jet& b);
Jet jet_neg(const Jet& a);
Jet jet_scale(const Jet& a, double s);
Jet jet_add_const(const Jet& a, double s);
Jet jet_mul(const Jet& a, const Jet& b);
Jet jet_square(const Jet& a);
Jet jet_tanh(const Jet& a);
Jet jet_exp(const Jet& a);
Jet jet_sin(const Jet& a);
Jet jet_cos(const Jet& a);
/// Derivative promotion: (shift result)(alpha) = a(alpha + e_input).
Jet jet_shift(const Jet& a, int input);

inline Jet operator+(const Jet& a, const Jet& b) { return jet_add(a, b); }
inline Jet operator-(const Jet& a, const Jet& b) { return jet_sub(a, b); }
inline Jet operator*(const Jet& a, const Jet& b) { return jet_mul(a, b); }
inline Jet operator-(const Jet& a) { return jet_neg(a); }

double extract(const Jet& a, const MultiIndex& idx);
inline double extract(const Jet& a, int slot) { return a[slot]; }

}  // namespace pinnplace
