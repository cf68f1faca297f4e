#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <mfold/jet.hpp>

#include <cmath>

using namespace mfold;

namespace {

// f(a, b) = sin(a) exp(b) + a^2 b, with closed-form derivatives.
template <class S>
Jet<S> sample_fn(const Jet<S>& a, const Jet<S>& b) {
  return sin(a) * exp(b) + a * a * b;
}

double fval(double a, double b) { return std::sin(a) * std::exp(b) + a * a * b; }

}  // namespace

TEST_CASE("gradient and hessian match closed forms") {
  const double a = 0.7, b = -0.4;
  VecS<double> p(2);
  p << a, b;
  auto v = seed_variable<double>(p, 3);
  Jet<double> f = sample_fn(v[0], v[1]);

  CHECK(f.value() == doctest::Approx(fval(a, b)).epsilon(1e-14));
  CHECK(f.grad()(0) == doctest::Approx(std::cos(a) * std::exp(b) + 2 * a * b).epsilon(1e-14));
  CHECK(f.grad()(1) == doctest::Approx(std::sin(a) * std::exp(b) + a * a).epsilon(1e-14));
  CHECK(f.hess()(0, 0) == doctest::Approx(-std::sin(a) * std::exp(b) + 2 * b).epsilon(1e-14));
  CHECK(f.hess()(0, 1) == doctest::Approx(std::cos(a) * std::exp(b) + 2 * a).epsilon(1e-14));
  CHECK(f.hess()(1, 1) == doctest::Approx(std::sin(a) * std::exp(b)).epsilon(1e-14));
  CHECK(f.hess()(1, 0) == f.hess()(0, 1));

  CHECK(f.third(0, 0, 0) == doctest::Approx(-std::cos(a) * std::exp(b)).epsilon(1e-13));
  CHECK(f.third(0, 0, 1) == doctest::Approx(-std::sin(a) * std::exp(b) + 2).epsilon(1e-13));
  CHECK(f.third(0, 1, 1) == doctest::Approx(std::cos(a) * std::exp(b)).epsilon(1e-13));
  CHECK(f.third(1, 1, 1) == doctest::Approx(std::sin(a) * std::exp(b)).epsilon(1e-13));
  // full permutation symmetry
  CHECK(f.third(1, 0, 0) == f.third(0, 0, 1));
  CHECK(f.third(0, 1, 0) == f.third(0, 0, 1));
  CHECK(f.third(1, 1, 0) == f.third(0, 1, 1));
}

TEST_CASE("derivatives agree with central finite differences") {
  const double h = 1e-5;
  const double a = -0.3, b = 0.55;
  VecS<double> p(2);
  p << a, b;
  auto v = seed_variable<double>(p, 2);
  Jet<double> f = sample_fn(v[0], v[1]);

  const double fd_a = (fval(a + h, b) - fval(a - h, b)) / (2 * h);
  const double fd_b = (fval(a, b + h) - fval(a, b - h)) / (2 * h);
  CHECK(std::abs(f.grad()(0) - fd_a) < 1e-6);
  CHECK(std::abs(f.grad()(1) - fd_b) < 1e-6);

  const double fd_aa = (fval(a + h, b) - 2 * fval(a, b) + fval(a - h, b)) / (h * h);
  const double fd_ab =
      (fval(a + h, b + h) - fval(a + h, b - h) - fval(a - h, b + h) + fval(a - h, b - h)) /
      (4 * h * h);
  CHECK(std::abs(f.hess()(0, 0) - fd_aa) < 1e-5);
  CHECK(std::abs(f.hess()(0, 1) - fd_ab) < 1e-5);
}

TEST_CASE("quotient, reciprocal and integer powers") {
  VecS<double> p(1);
  p << 1.3;
  auto v = seed_variable<double>(p, 3);
  Jet<double> x = v[0];

  Jet<double> q = pow_int(x, 3) / (x + 2.0);
  const double a = 1.3;
  auto f = [](double t) { return t * t * t / (t + 2.0); };
  const double h = 1e-5;
  CHECK(q.value() == doctest::Approx(f(a)).epsilon(1e-14));
  CHECK(std::abs(q.grad()(0) - (f(a + h) - f(a - h)) / (2 * h)) < 1e-6);
  CHECK(std::abs(q.hess()(0, 0) - (f(a + h) - 2 * f(a) + f(a - h)) / (h * h)) < 1e-5);

  Jet<double> r = recip(x) * x;
  CHECK(r.value() == doctest::Approx(1.0).epsilon(1e-14));
  CHECK(std::abs(r.grad()(0)) < 1e-14);
  CHECK(std::abs(r.hess()(0, 0)) < 1e-13);

  Jet<double> neg = pow_int(x, -2);
  CHECK(neg.value() == doctest::Approx(1.0 / (a * a)).epsilon(1e-14));
  CHECK(neg.grad()(0) == doctest::Approx(-2.0 / (a * a * a)).epsilon(1e-13));
}

TEST_CASE("complex jets with real input match real jets") {
  const double a = 0.9, b = 0.2;
  VecS<double> pr(2);
  pr << a, b;
  VecS<cxd> pc(2);
  pc << cxd(a, 0), cxd(b, 0);
  auto vr = seed_variable<double>(pr, 3);
  auto vc = seed_variable<cxd>(pc, 3);
  Jet<double> fr = sample_fn(vr[0], vr[1]);
  Jet<cxd> fc = sample_fn(vc[0], vc[1]);

  CHECK(std::abs(fc.value() - cxd(fr.value())) < 1e-14);
  for (int i = 0; i < 2; ++i) CHECK(std::abs(fc.grad()(i) - cxd(fr.grad()(i))) < 1e-14);
  for (int i = 0; i < 2; ++i)
    for (int j = 0; j < 2; ++j) CHECK(std::abs(fc.hess()(i, j) - cxd(fr.hess()(i, j))) < 1e-13);
  for (int i = 0; i < 2; ++i)
    for (int j = 0; j < 2; ++j)
      for (int k = 0; k < 2; ++k)
        CHECK(std::abs(fc.third(i, j, k) - cxd(fr.third(i, j, k))) < 1e-13);
}

TEST_CASE("complex jets differentiate holomorphically") {
  // d/dz sin(z) = cos(z) off the real axis too.
  VecS<cxd> p(1);
  p << cxd(0.4, 0.3);
  auto v = seed_variable<cxd>(p, 2);
  Jet<cxd> f = sin(v[0]);
  CHECK(std::abs(f.grad()(0) - std::cos(p(0))) < 1e-14);
  CHECK(std::abs(f.hess()(0, 0) + std::sin(p(0))) < 1e-14);
}

TEST_CASE("taylor_predict is exact on polynomials and fourth order on sin") {
  VecS<double> p(1);
  p << 3.0;
  auto v = seed_variable<double>(p, 2);
  JetVec<double> sq{v[0] * v[0]};
  VecS<double> h(1);
  h << 0.1;
  CHECK(taylor_predict(sq, h)(0) == doctest::Approx(9.61).epsilon(1e-14));

  VecS<double> p2(1);
  p2 << 0.5;
  auto v2 = seed_variable<double>(p2, 3);
  JetVec<double> sj{sin(v2[0])};
  const double step = 0.05;
  VecS<double> hs(1);
  hs << step;
  const double err = std::abs(taylor_predict(sj, hs)(0) - std::sin(0.5 + step));
  CHECK(err < std::pow(step, 4) / 24.0 * 1.01);
  CHECK(err > 0);
}

TEST_CASE("taylor_predict with complex increments uses plain products") {
  VecS<cxd> p(1);
  p << cxd(1.0, 0.0);
  auto v = seed_variable<cxd>(p, 1);
  JetVec<cxd> f{v[0] * v[0]};
  VecS<cxd> h(1);
  h << cxd(0, 0.1);
  // (1 + 0.1i)^2 truncated at first order: 1 + 0.2i
  CHECK(std::abs(taylor_predict(f, h)(0) - cxd(1.0, 0.2)) < 1e-15);
}

TEST_CASE("values_of and jacobian_of assemble vector jets") {
  VecS<double> p(2);
  p << 2.0, -1.0;
  auto v = seed_variable<double>(p, 1);
  JetVec<double> F{v[0] + v[1], v[0] * v[1]};
  VecS<double> vals = values_of(F);
  CHECK(vals(0) == 1.0);
  CHECK(vals(1) == -2.0);
  MatS<double> J = jacobian_of(F);
  CHECK(J(0, 0) == 1.0);
  CHECK(J(0, 1) == 1.0);
  CHECK(J(1, 0) == -1.0);
  CHECK(J(1, 1) == 2.0);
}

TEST_CASE("invalid constructions throw") {
  CHECK_THROWS_AS(Jet<double>(4, 1), std::invalid_argument);
  CHECK_THROWS_AS(Jet<double>(-1, 1), std::invalid_argument);
  VecS<double> p(1);
  p << 1e-13;
  auto v = seed_variable<double>(p, 1);
  CHECK_THROWS_AS(recip(v[0]), std::domain_error);
  VecS<double> bad(1);
  bad << std::nan("");
  CHECK_THROWS_AS(seed_variable<double>(bad, 1), std::invalid_argument);
  Jet<double> a(1, 1), b(1, 2);
  CHECK_THROWS_AS(a + b, std::invalid_argument);
}

TEST_CASE("finite() detects contamination") {
  VecS<double> p(1);
  p << 1.0;
  auto v = seed_variable<double>(p, 2);
  Jet<double> f = sin(v[0]);
  CHECK(f.finite());
  f.grad()(0) = std::numeric_limits<double>::infinity();
  CHECK(!f.finite());
}
