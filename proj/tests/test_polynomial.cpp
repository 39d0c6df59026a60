#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <random>

#include "invkit/polynomial.hpp"

using namespace invkit;

namespace {

Polynomial random_poly(std::mt19937& rng, int nvars, int maxdeg, int nterms) {
  std::uniform_int_distribution<int> ed(0, maxdeg);
  std::uniform_real_distribution<double> cd(-3.0, 3.0);
  Polynomial p(nvars);
  for (int t = 0; t < nterms; ++t) {
    Monomial m(nvars);
    int budget = ed(rng);
    for (int i = 0; i < nvars && budget > 0; ++i) {
      std::uniform_int_distribution<int> pick(0, budget);
      int e = pick(rng);
      m.exp[i] = static_cast<std::uint8_t>(e);
      budget -= e;
    }
    p.add_term(m, cd(rng));
  }
  return p;
}

double max_coeff_diff(const Polynomial& a, const Polynomial& b) {
  Polynomial d = a - b;
  return d.max_abs_coefficient();
}

}  // namespace

TEST_CASE("arithmetic identities") {
  // (x+1)(x-1) = x^2 - 1
  Polynomial x = Polynomial::variable(2, 0);
  Polynomial one = Polynomial::constant(2, 1.0);
  Polynomial prod = (x + one) * (x - one);
  CHECK(prod.coefficient(Monomial{2, 0}) == Catch::Approx(1.0));
  CHECK(prod.coefficient(Monomial{0, 0}) == Catch::Approx(-1.0));
  CHECK(prod.n_terms() == 2);

  // p + 0 = p
  Polynomial p = x * x + 3.0 * x - one;
  CHECK(max_coeff_diff(p + Polynomial(2), p) == 0.0);

  // (x^2+y^2-1)^2 at (0.6, 0.8) evaluates to 0
  Polynomial y = Polynomial::variable(2, 1);
  Polynomial circ = x * x + y * y - one;
  Polynomial sq = circ * circ;
  CHECK(sq.evaluate({0.6, 0.8}) == Catch::Approx(0.0).margin(1e-15));
}

TEST_CASE("arithmetic dimension mismatch") {
  Polynomial a(2), b(3);
  CHECK_THROWS_AS(a + b, DimensionError);
  CHECK_THROWS_AS(a * b, DimensionError);
}

TEST_CASE("differentiate") {
  // d/dx (x^2 y) = 2 x y
  Polynomial x = Polynomial::variable(2, 0), y = Polynomial::variable(2, 1);
  Polynomial p = x * x * y;
  Polynomial d = p.differentiate(0);
  CHECK(d.coefficient(Monomial{1, 1}) == Catch::Approx(2.0));
  CHECK(d.n_terms() == 1);

  // d/dy (x^2) = 0
  CHECK((x * x).differentiate(1).is_zero());

  // d/dw (1 - w + w^2) = -1 + 2w
  Polynomial w = Polynomial::variable(1, 0);
  Polynomial q = Polynomial::constant(1, 1.0) - w + w * w;
  Polynomial dq = q.differentiate(0);
  CHECK(dq.coefficient(Monomial{0}) == Catch::Approx(-1.0));
  CHECK(dq.coefficient(Monomial{1}) == Catch::Approx(2.0));
}

TEST_CASE("lie derivative") {
  // v = x^2+y^2, f = (-y, x): rotation preserves radius
  Polynomial x = Polynomial::variable(2, 0), y = Polynomial::variable(2, 1);
  Polynomial v = x * x + y * y;
  std::vector<Polynomial> f{-1.0 * y, x};
  CHECK(lie_derivative(v, f).is_zero());

  // v = x, f = (1): unit speed
  Polynomial vx = Polynomial::variable(1, 0);
  std::vector<Polynomial> f1{Polynomial::constant(1, 1.0)};
  Polynomial l = lie_derivative(vx, f1);
  CHECK(l.coefficient(Monomial{0}) == Catch::Approx(1.0));

  // swing-row instance: v = w over field (-wn*w*y, wn*w*x, (Cm - (1-w+w^2)*K*y - D*w)/(2H))
  const double wn = 314.0, Cm = 0.6, K = 1.25, D = 1.0, H = 5.0;
  Polynomial X = Polynomial::variable(3, 0), Y = Polynomial::variable(3, 1), W = Polynomial::variable(3, 2);
  Polynomial inv = Polynomial::constant(3, 1.0) - W + W * W;
  std::vector<Polynomial> field{-wn * (W * Y), wn * (W * X),
                                (1.0 / (2 * H)) * (Polynomial::constant(3, Cm) - K * (inv * Y) - D * W)};
  Polynomial lw = lie_derivative(W, field);
  CHECK(max_coeff_diff(lw, field[2]) == 0.0);

  std::vector<Polynomial> bad{X, Y};
  CHECK_THROWS_AS(lie_derivative(W, bad), DimensionError);
}

TEST_CASE("evaluate") {
  Polynomial x = Polynomial::variable(2, 0), y = Polynomial::variable(2, 1);
  CHECK((x * x + y * y).evaluate({0.6, 0.8}) == Catch::Approx(1.0));

  Polynomial w = Polynomial::variable(1, 0);
  Polynomial q = Polynomial::constant(1, 1.0) - w + w * w;
  CHECK(q.evaluate({0.05}) == Catch::Approx(0.9525));

  CHECK(Polynomial(3).evaluate({1.0, 2.0, 3.0}) == 0.0);
}

TEST_CASE("substitute affine") {
  // w := 0.05 * wbar  maps w^2 to 0.0025 wbar^2
  Polynomial w = Polynomial::variable(1, 0);
  Polynomial p = w * w;
  Polynomial s = p.substitute_affine(0, 0.05, 0.0);
  CHECK(s.coefficient(Monomial{2}) == Catch::Approx(0.0025));
  CHECK(s.n_terms() == 1);

  // identity substitution returns p exactly
  std::mt19937 rng(7);
  for (int rep = 0; rep < 20; ++rep) {
    Polynomial r = random_poly(rng, 3, 6, 12);
    CHECK(max_coeff_diff(r.substitute_affine(1, 1.0, 0.0), r) == 0.0);
  }

  // w := wbar + 1 evaluated at wbar = -1 gives 0
  Polynomial sh = w.substitute_affine(0, 1.0, 1.0);
  CHECK(sh.evaluate({-1.0}) == Catch::Approx(0.0));

  CHECK_THROWS_AS(p.substitute_affine(0, 0.0, 1.0), DegenerateScalingError);
}

TEST_CASE("monomial basis") {
  MonomialBasis b21 = MonomialBasis::build(2, 1);
  REQUIRE(b21.size() == 3);  // {1, x, y}
  CHECK(b21.monomials[0].degree() == 0);
  CHECK(b21.monomials[1] == Monomial{1, 0});
  CHECK(b21.monomials[2] == Monomial{0, 1});

  CHECK(MonomialBasis::build(3, 2).size() == 10);
  CHECK(MonomialBasis::build(0, 5).size() == 1);

  for (int n = 0; n <= 6; ++n)
    for (int d = 0; d <= 12; ++d) CHECK(MonomialBasis::build(n, d).size() == binomial(n + d, d));

  // graded lex order is strict and index_of inverts it
  MonomialBasis b = MonomialBasis::build(3, 5);
  for (std::size_t i = 1; i < b.size(); ++i) CHECK(b.monomials[i - 1] < b.monomials[i]);
  for (std::size_t i = 0; i < b.size(); ++i) CHECK(b.index_of(b.monomials[i]) == static_cast<int>(i));
}

TEST_CASE("multiplication is commutative and associative") {
  std::mt19937 rng(42);
  for (int rep = 0; rep < 30; ++rep) {
    Polynomial p = random_poly(rng, 3, 5, 8);
    Polynomial q = random_poly(rng, 3, 5, 8);
    Polynomial r = random_poly(rng, 3, 5, 8);
    Polynomial pq = p * q, qp = q * p;
    double scale = std::max(1.0, pq.max_abs_coefficient());
    CHECK(max_coeff_diff(pq, qp) / scale <= 1e-12);
    Polynomial ab = (p * q) * r, ba = p * (q * r);
    scale = std::max(1.0, ab.max_abs_coefficient());
    CHECK(max_coeff_diff(ab, ba) / scale <= 1e-12);
  }
}

TEST_CASE("derivative matches central finite differences") {
  std::mt19937 rng(11);
  std::uniform_real_distribution<double> pd(-0.9, 0.9);
  for (int rep = 0; rep < 20; ++rep) {
    Polynomial p = random_poly(rng, 3, 10, 15);
    std::vector<double> pt{pd(rng), pd(rng), pd(rng)};
    for (int var = 0; var < 3; ++var) {
      const double h = 1e-5;
      std::vector<double> up = pt, dn = pt;
      up[var] += h;
      dn[var] -= h;
      double fd = (p.evaluate(up) - p.evaluate(dn)) / (2 * h);
      double an = p.differentiate(var).evaluate(pt);
      CHECK(an == Catch::Approx(fd).margin(1e-6 * std::max(1.0, std::abs(an))).epsilon(1e-6));
    }
  }
}

TEST_CASE("prune tolerance removes float noise") {
  Polynomial x = Polynomial::variable(1, 0);
  Polynomial p = x + Polynomial::constant(1, 1e-16);
  CHECK(p.n_terms() == 1);
}
