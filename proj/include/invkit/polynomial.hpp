#pragma once

// Sparse multivariate polynomial arithmetic over a fixed variable count.
// Monomials are exponent vectors ordered graded-lexicographically; that
// order is total, so term iteration is deterministic everywhere.

#include <algorithm>
#include <cmath>
#include <compare>
#include <cstdint>
#include <map>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include "invkit/errors.hpp"

namespace invkit {

inline std::uint64_t binomial(int n, int k) {
  if (k < 0 || k > n) return 0;
  k = std::min(k, n - k);
  std::uint64_t r = 1;
  for (int i = 1; i <= k; ++i) r = r * std::uint64_t(n - k + i) / std::uint64_t(i);
  return r;
}

struct Monomial {
  std::vector<std::uint8_t> exp;

  Monomial() = default;
  explicit Monomial(int nvars) : exp(nvars, 0) {}
  Monomial(std::initializer_list<int> e) {
    exp.reserve(e.size());
    for (int v : e) exp.push_back(static_cast<std::uint8_t>(v));
  }

  int nvars() const { return static_cast<int>(exp.size()); }
  int degree() const { return std::accumulate(exp.begin(), exp.end(), 0); }

  Monomial operator*(const Monomial& o) const {
    Monomial r = *this;
    for (std::size_t i = 0; i < exp.size(); ++i) r.exp[i] = static_cast<std::uint8_t>(r.exp[i] + o.exp[i]);
    return r;
  }

  bool operator==(const Monomial& o) const { return exp == o.exp; }

  // Graded lex: total degree first, then lexicographic on exponents.
  bool operator<(const Monomial& o) const {
    int da = degree(), db = o.degree();
    if (da != db) return da < db;
    return std::lexicographical_compare(o.exp.begin(), o.exp.end(), exp.begin(), exp.end());
  }
};

class Polynomial {
 public:
  using TermMap = std::map<Monomial, double>;

  // Kept coefficients have magnitude above this after every operation.
  static double& prune_tolerance() {
    static double tol = 1e-14;
    return tol;
  }

  Polynomial() : nvars_(0) {}
  explicit Polynomial(int nvars) : nvars_(nvars) {}

  static Polynomial constant(int nvars, double c) {
    Polynomial p(nvars);
    p.add_term(Monomial(nvars), c);
    return p;
  }
  static Polynomial variable(int nvars, int i) {
    Polynomial p(nvars);
    Monomial m(nvars);
    m.exp[i] = 1;
    p.add_term(m, 1.0);
    return p;
  }

  int nvars() const { return nvars_; }
  const TermMap& terms() const { return terms_; }
  bool is_zero() const { return terms_.empty(); }
  int n_terms() const { return static_cast<int>(terms_.size()); }

  int degree() const {
    int d = 0;
    for (const auto& [m, c] : terms_) d = std::max(d, m.degree());
    return d;
  }

  double coefficient(const Monomial& m) const {
    auto it = terms_.find(m);
    return it == terms_.end() ? 0.0 : it->second;
  }

  void add_term(const Monomial& m, double c) {
    if (static_cast<int>(m.exp.size()) != nvars_)
      throw DimensionError("add_term: monomial has " + std::to_string(m.exp.size()) + " vars, polynomial has " +
                           std::to_string(nvars_));
    double& v = terms_[m];
    v += c;
    if (std::abs(v) <= prune_tolerance()) terms_.erase(m);
  }

  double max_abs_coefficient() const {
    double m = 0.0;
    for (const auto& [mono, c] : terms_) m = std::max(m, std::abs(c));
    return m;
  }

  Polynomial& operator+=(const Polynomial& o) {
    check_same_vars(o);
    for (const auto& [m, c] : o.terms_) add_term(m, c);
    return *this;
  }
  Polynomial& operator-=(const Polynomial& o) {
    check_same_vars(o);
    for (const auto& [m, c] : o.terms_) add_term(m, -c);
    return *this;
  }
  friend Polynomial operator+(Polynomial a, const Polynomial& b) { return a += b; }
  friend Polynomial operator-(Polynomial a, const Polynomial& b) { return a -= b; }
  friend Polynomial operator-(const Polynomial& a) { return -1.0 * a; }

  friend Polynomial operator*(double s, const Polynomial& p) {
    Polynomial r(p.nvars_);
    for (const auto& [m, c] : p.terms_) r.add_term(m, s * c);
    return r;
  }
  friend Polynomial operator*(const Polynomial& p, double s) { return s * p; }

  friend Polynomial operator*(const Polynomial& a, const Polynomial& b) {
    a.check_same_vars(b);
    Polynomial r(a.nvars_);
    for (const auto& [ma, ca] : a.terms_)
      for (const auto& [mb, cb] : b.terms_) r.add_term(ma * mb, ca * cb);
    return r;
  }

  // Direct term summation in graded-lex order; deterministic by construction.
  double evaluate(std::span<const double> point) const {
    if (static_cast<int>(point.size()) != nvars_)
      throw DimensionError("evaluate: point size " + std::to_string(point.size()) + " != nvars " +
                           std::to_string(nvars_));
    double sum = 0.0;
    for (const auto& [m, c] : terms_) {
      double t = c;
      for (int i = 0; i < nvars_; ++i)
        for (int e = 0; e < m.exp[i]; ++e) t *= point[i];
      sum += t;
    }
    return sum;
  }
  double evaluate(const std::vector<double>& point) const { return evaluate(std::span<const double>(point)); }

  Polynomial differentiate(int var) const {
    if (var < 0 || var >= nvars_) throw DimensionError("differentiate: variable index out of range");
    Polynomial r(nvars_);
    for (const auto& [m, c] : terms_) {
      if (m.exp[var] == 0) continue;
      Monomial d = m;
      d.exp[var] -= 1;
      r.add_term(d, c * m.exp[var]);
    }
    return r;
  }

  // Substitute var := a*t + b (t reuses the same variable slot). Exact
  // binomial expansion; degree is preserved for a != 0.
  Polynomial substitute_affine(int var, double a, double b) const {
    if (var < 0 || var >= nvars_) throw DimensionError("substitute_affine: variable index out of range");
    if (a == 0.0) throw DegenerateScalingError("substitute_affine: zero linear coefficient");
    Polynomial r(nvars_);
    for (const auto& [m, c] : terms_) {
      int e = m.exp[var];
      for (int j = 0; j <= e; ++j) {
        Monomial t = m;
        t.exp[var] = static_cast<std::uint8_t>(j);
        r.add_term(t, c * double(binomial(e, j)) * std::pow(a, j) * std::pow(b, e - j));
      }
    }
    return r;
  }

  // Append extra always-zero-exponent variables at the end.
  Polynomial extended(int new_nvars) const {
    if (new_nvars < nvars_) throw DimensionError("extended: cannot shrink variable count");
    Polynomial r(new_nvars);
    for (const auto& [m, c] : terms_) {
      Monomial t(new_nvars);
      std::copy(m.exp.begin(), m.exp.end(), t.exp.begin());
      r.add_term(t, c);
    }
    return r;
  }

 private:
  void check_same_vars(const Polynomial& o) const {
    if (nvars_ != o.nvars_)
      throw DimensionError("polynomial arithmetic over mismatched variable counts: " + std::to_string(nvars_) +
                           " vs " + std::to_string(o.nvars_));
  }

  int nvars_;
  TermMap terms_;
};

// Sum_i dv/dx_i * f_i. Extra trailing variables of v (uncertainties) are
// passive: pass fields with matching nvars and zero rows for them.
inline Polynomial lie_derivative(const Polynomial& v, std::span<const Polynomial> f) {
  if (static_cast<int>(f.size()) != v.nvars())
    throw DimensionError("lie_derivative: field has " + std::to_string(f.size()) + " rows, v has " +
                         std::to_string(v.nvars()) + " variables");
  Polynomial r(v.nvars());
  for (int i = 0; i < v.nvars(); ++i) {
    if (f[i].is_zero()) continue;
    r += v.differentiate(i) * f[i];
  }
  return r;
}
inline Polynomial lie_derivative(const Polynomial& v, const std::vector<Polynomial>& f) {
  return lie_derivative(v, std::span<const Polynomial>(f));
}

// All monomials of total degree <= degree in graded-lex order; the count
// is C(nvars + degree, degree).
struct MonomialBasis {
  int nvars = 0;
  int degree = 0;
  std::vector<Monomial> monomials;

  static MonomialBasis build(int nvars, int degree) {
    if (nvars < 0 || degree < 0) throw DimensionError("basis: nvars and degree must be nonnegative");
    MonomialBasis b;
    b.nvars = nvars;
    b.degree = degree;
    Monomial cur(nvars);
    b.monomials.push_back(cur);
    for (int d = 1; d <= degree; ++d) enumerate(b.monomials, cur, nvars, 0, d);
    std::sort(b.monomials.begin(), b.monomials.end());
    return b;
  }

  std::size_t size() const { return monomials.size(); }

  // Position in graded-lex order; the basis is sorted, so binary search.
  int index_of(const Monomial& m) const {
    auto it = std::lower_bound(monomials.begin(), monomials.end(), m);
    if (it == monomials.end() || !(*it == m)) return -1;
    return static_cast<int>(it - monomials.begin());
  }

 private:
  static void enumerate(std::vector<Monomial>& out, Monomial& cur, int nvars, int var, int remaining) {
    if (remaining == 0) {
      out.push_back(cur);
      return;
    }
    if (var >= nvars) return;
    for (int e = remaining; e >= 0; --e) {
      cur.exp[var] = static_cast<std::uint8_t>(e);
      if (e == remaining)
        out.push_back(cur);
      else
        enumerate(out, cur, nvars, var + 1, remaining - e);
    }
    cur.exp[var] = 0;
  }
};

}  // namespace invkit
