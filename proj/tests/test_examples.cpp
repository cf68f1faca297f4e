#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <mfold/examples.hpp>

#include <cmath>

using namespace mfold;

TEST_CASE("every registered system matches its closed forms") {
  ExampleParams prm;
  CHECK(verify_examples(prm) < 1e-12);
  prm.eps = 0.1;
  prm.coupling = 0.05;
  CHECK(verify_examples(prm) < 1e-12);
}

TEST_CASE("registry contents") {
  const auto& names = example_names();
  CHECK(names.size() == 5);
  CHECK(example_is_hamiltonian("neishtadt"));
  CHECK(example_is_hamiltonian("two_fast_modes"));
  CHECK(!example_is_hamiltonian("counterexample"));
  CHECK(!example_is_hamiltonian("linear_hyperbolic"));
  for (const auto& n : names) CHECK(!example_oracle_quantities(n).empty());
  CHECK(example_oracle_quantities("nonsense").empty());
}

TEST_CASE("builder validation") {
  ExampleParams prm;
  CHECK_THROWS_AS(build_general_example("nonsense", prm), std::invalid_argument);
  CHECK_THROWS_AS(build_ham_example("counterexample", prm), std::invalid_argument);
  prm.N_f = 0;
  CHECK_THROWS_AS(build_neishtadt(prm), std::invalid_argument);
  prm.N_f = 30;
  prm.f = "w^2";
  CHECK_THROWS_WITH_AS(build_counterexample(prm), doctest::Contains("unknown slow field"),
                       std::exception);
}

TEST_CASE("oracle values") {
  ExampleParams prm;
  prm.eps = 0.05;
  Eigen::VectorXd w(1);
  w << 1.3;
  CHECK(example_oracle("counterexample", "rho1", w, prm)(0) ==
        doctest::Approx(-0.05 * 0.05 * 0.3).epsilon(1e-13));
  CHECK(example_oracle("counterexample", "rho2", w, prm)(0) ==
        doctest::Approx(0.05 * 0.05 * 0.05 * 0.3).epsilon(1e-13));
  CHECK(example_oracle("linear_hyperbolic", "manifold_slope", w, prm)(0) ==
        doctest::Approx(0.05 / 1.05).epsilon(1e-13));
  Eigen::VectorXd we(2);
  we << 0.0, 0.0;
  CHECK(example_oracle("elliptic_pendulum", "rho0", we, prm).norm() == 0.0);
  CHECK_THROWS_AS(example_oracle("neishtadt", "rho7", we, prm), std::invalid_argument);
}

TEST_CASE("normalization keeps the counterexample oracles valid") {
  ExampleParams prm;
  prm.eps = 0.05;
  auto sys = build_counterexample(prm);
  CHECK(sys.eps_original == 0.05);
  CHECK(sys.w_scale >= 1.0);
  CHECK(sys.eps == doctest::Approx(sys.w_scale * 0.05).epsilon(1e-14));
}
