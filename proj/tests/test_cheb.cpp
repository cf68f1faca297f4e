#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <mfold/cheb.hpp>
#include <mfold/norms.hpp>

#include <cmath>

using namespace mfold;

namespace {
double poly(double x, double y) { return x * x * x * y * y - 2.0 * x * y + 1.0; }
}  // namespace

TEST_CASE("interpolation is exact on polynomials below the degree") {
  const Box box(Eigen::Vector2d(-1.0, 0.0), Eigen::Vector2d(2.0, 3.0));
  auto c = ChebInterp::fit(box, {5, 4}, [](const Eigen::VectorXd& p) { return poly(p(0), p(1)); });
  for (int k = 0; k < 40; ++k) {
    Eigen::VectorXd p(2);
    p << box.lo(0) + 3.0 * unit_draw(11, 2 * k), box.lo(1) + 3.0 * unit_draw(11, 2 * k + 1);
    CHECK(std::abs(c.eval<double>(p) - poly(p(0), p(1))) < 1e-12);
  }
}

TEST_CASE("node grid ordering matches from_values") {
  const Box box(Eigen::Vector2d(-1.0, 0.0), Eigen::Vector2d(2.0, 3.0));
  const std::vector<int> deg{3, 2};
  const auto grid = ChebInterp::nodes(box, deg);
  CHECK(grid.size() == 12);
  std::vector<double> vals(grid.size());
  for (size_t i = 0; i < grid.size(); ++i) vals[i] = poly(grid[i](0), grid[i](1));
  auto c = ChebInterp::from_values(box, deg, vals);
  for (const auto& g : grid) {
    Eigen::VectorXd p = g;
    CHECK(std::abs(c.eval<double>(p) - poly(p(0), p(1))) < 1e-12);
  }
}

TEST_CASE("complex evaluation continues the polynomial analytically") {
  const Box box(Eigen::Vector2d(-1.0, 0.0), Eigen::Vector2d(2.0, 3.0));
  auto c = ChebInterp::fit(box, {5, 4}, [](const Eigen::VectorXd& p) { return poly(p(0), p(1)); });
  const cxd x(0.4, 0.2), y(1.5, -0.3);
  VecS<cxd> p(2);
  p << x, y;
  const cxd want = x * x * x * y * y - 2.0 * x * y + 1.0;
  CHECK(std::abs(c.eval<cxd>(p) - want) < 1e-11);
}

TEST_CASE("jet evaluation propagates exact derivatives") {
  const Box box(Eigen::Vector2d(-1.0, 0.0), Eigen::Vector2d(2.0, 3.0));
  auto c = ChebInterp::fit(box, {5, 4}, [](const Eigen::VectorXd& p) { return poly(p(0), p(1)); });
  const double x = 0.8, y = 2.1;
  VecS<double> pt(2);
  pt << x, y;
  auto v = seed_variable<double>(pt, 2);
  Jet<double> j = c.eval_jet<double>(v);
  CHECK(j.value() == doctest::Approx(poly(x, y)).epsilon(1e-12));
  CHECK(j.grad()(0) == doctest::Approx(3 * x * x * y * y - 2 * y).epsilon(1e-11));
  CHECK(j.grad()(1) == doctest::Approx(2 * x * x * x * y - 2 * x).epsilon(1e-11));
  CHECK(j.hess()(0, 0) == doctest::Approx(6 * x * y * y).epsilon(1e-10));
  CHECK(j.hess()(0, 1) == doctest::Approx(6 * x * x * y - 2).epsilon(1e-10));
  CHECK(j.hess()(1, 1) == doctest::Approx(2 * x * x * x).epsilon(1e-10));
}

TEST_CASE("coefficient differentiation matches analytic partials") {
  const Box box(Eigen::Vector2d(-1.0, 0.0), Eigen::Vector2d(2.0, 3.0));
  auto c = ChebInterp::fit(box, {6, 5}, [](const Eigen::VectorXd& p) { return poly(p(0), p(1)); });
  auto dx = c.derivative(0);
  auto dy = c.derivative(1);
  for (int k = 0; k < 20; ++k) {
    Eigen::VectorXd p(2);
    p << box.lo(0) + 3.0 * unit_draw(7, 2 * k), box.lo(1) + 3.0 * unit_draw(7, 2 * k + 1);
    CHECK(std::abs(dx.eval<double>(p) - (3 * p(0) * p(0) * p(1) * p(1) - 2 * p(1))) < 1e-10);
    CHECK(std::abs(dy.eval<double>(p) - (2 * p(0) * p(0) * p(0) * p(1) - 2 * p(0))) < 1e-10);
  }
}

TEST_CASE("analytic functions converge spectrally") {
  const Box box(Eigen::VectorXd::Constant(1, -1.0), Eigen::VectorXd::Constant(1, 1.0));
  auto c = ChebInterp::fit(box, {20}, [](const Eigen::VectorXd& p) { return std::sin(3.0 * p(0)); });
  double worst = 0;
  for (int k = 0; k <= 200; ++k) {
    Eigen::VectorXd p(1);
    p << -1.0 + 2.0 * k / 200.0;
    worst = std::max(worst, std::abs(c.eval<double>(p) - std::sin(3.0 * p(0))));
  }
  CHECK(worst < 1e-13);
}

TEST_CASE("contract_tail plus clenshaw_line equals full evaluation") {
  const Box box(Eigen::Vector2d(-1.0, 0.0), Eigen::Vector2d(2.0, 3.0));
  auto c = ChebInterp::fit(box, {5, 4}, [](const Eigen::VectorXd& p) { return poly(p(0), p(1)); });
  VecS<double> tail(1);
  tail << 1.7;
  auto line = c.contract_tail<double>(tail);
  VecS<double> full(2);
  full << 0.3, 1.7;
  const double got = ChebInterp::clenshaw_line_value<double>(line, c.scale_axis0(0.3));
  CHECK(std::abs(got - c.eval<double>(full)) < 1e-12);

  VecS<double> seedpt(1);
  seedpt << 0.3;
  auto v = seed_variable<double>(seedpt, 2);
  Jet<double> jline = ChebInterp::clenshaw_line(line, c.scale_axis0(v[0]));
  CHECK(jline.value() == doctest::Approx(got).epsilon(1e-12));
  CHECK(jline.grad()(0) == doctest::Approx(3 * 0.3 * 0.3 * 1.7 * 1.7 - 2 * 1.7).epsilon(1e-10));
}

TEST_CASE("input validation") {
  const Box box(Eigen::Vector2d(-1.0, 0.0), Eigen::Vector2d(2.0, 3.0));
  CHECK_THROWS_AS(ChebInterp::nodes(box, {3}), std::invalid_argument);
  CHECK_THROWS_AS(ChebInterp::nodes(box, {0, 3}), std::invalid_argument);
  CHECK_THROWS_AS(ChebInterp::from_values(box, {3, 3}, std::vector<double>(5, 0.0)),
                  std::invalid_argument);
  CHECK_THROWS_AS(Box(Eigen::Vector2d(0, 0), Eigen::Vector2d(1, 0)), std::invalid_argument);
}
