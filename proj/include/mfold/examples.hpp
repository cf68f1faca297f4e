#pragma once

// Built-in benchmark systems with closed-form oracles.
//
//   counterexample      w' = eps f(w), z' = eps w - z        (general pipeline)
//   linear_hyperbolic   f(w) = w; exact graph z = eps w / (1 + eps)
//   neishtadt           H = x^2/2 + y^2/2 + v + c eps y f(u), f = sum e^-n sin(n u)
//   elliptic_pendulum   slow pendulum + one fast oscillator, equilibrium at 0
//   two_fast_modes      slow pendulum + two fast oscillators (1 and sqrt 2)

#include <Eigen/Dense>

#include <cmath>
#include <stdexcept>
#include <string>
#include <vector>

#include "sysmodel.hpp"

namespace mfold {

struct ExampleParams {
  double eps = 0.05;
  std::string f = "w-1";   // counterexample slow field: "w-1" or "w"
  int N_f = 30;            // series truncation for the neishtadt coupling
  double coupling = 0.02;  // fast-slow coupling scale of the Hamiltonian examples
};

namespace exdetail {

template <class J>
J slow_f(const std::string& name, const J& w) {
  if (name == "w-1") return w - 1.0;
  if (name == "w") return w;
  throw std::invalid_argument("unknown slow field name: " + name);
}

inline double slow_f_value(const std::string& name, double w) {
  if (name == "w-1") return w - 1.0;
  if (name == "w") return w;
  throw std::invalid_argument("unknown slow field name: " + name);
}
inline double slow_f_prime(const std::string& name, double) {
  if (name == "w-1" || name == "w") return 1.0;
  throw std::invalid_argument("unknown slow field name: " + name);
}

template <class J>
J series_f(int N_f, const J& u) {
  J acc = u * 0.0;
  for (int n = 1; n <= N_f; ++n) acc = acc + sin(u * double(n)) * std::exp(-double(n));
  return acc;
}

inline double series_f_value(int N_f, double u) {
  double acc = 0;
  for (int n = 1; n <= N_f; ++n) acc += std::exp(-double(n)) * std::sin(n * u);
  return acc;
}

}  // namespace exdetail

inline GeneralSystem build_counterexample(const ExampleParams& prm) {
  GeneralSystem sys;
  sys.name = "counterexample";
  sys.d_w = 1;
  sys.d_z = 1;
  sys.eps_original = prm.eps;
  const std::string fname = prm.f;
  const double eps = prm.eps;
  auto W = [fname](const auto& arg) {
    using J = std::decay_t<decltype(arg[0])>;
    return std::vector<J>{exdetail::slow_f(fname, arg[0])};
  };
  auto Z = [eps](const auto& arg) {
    using J = std::decay_t<decltype(arg[0])>;
    return std::vector<J>{arg[0] * eps - arg[1]};
  };
  sys.W_r = W;
  sys.W_c = W;
  sys.Z_r = Z;
  sys.Z_c = Z;
  sys.V = Box::cube(0.0, 2.0, 1);
  sys.S_box = Box::cube(-0.5, 0.5, 1);
  sys.nu0 = 0.5;
  sys.sigma0 = 0.5;
  if (fname == "w-1") {
    sys.slow_equilibrium = Eigen::VectorXd::Constant(1, 1.0);
  } else if (fname == "w") {
    sys.V = Box::cube(-1.0, 1.0, 1);
    sys.slow_equilibrium = Eigen::VectorXd::Zero(1);
  }
  normalize_slow_field(sys);
  return sys;
}

inline GeneralSystem build_linear_hyperbolic(const ExampleParams& prm) {
  ExampleParams p = prm;
  p.f = "w";
  GeneralSystem sys = build_counterexample(p);
  sys.name = "linear_hyperbolic";
  return sys;
}

inline HamiltonianSystem build_neishtadt(const ExampleParams& prm) {
  if (prm.N_f < 1) throw std::invalid_argument("N_f must be >= 1");
  HamiltonianSystem sys;
  sys.name = "neishtadt";
  sys.d_W = 1;
  sys.d_Z = 1;
  sys.eps = prm.eps;
  const int N_f = prm.N_f;
  const double c = prm.coupling, eps = prm.eps;
  auto H = [N_f, c, eps](const auto& arg) {
    // arg = (u, v, x, y)
    const auto& u = arg[0];
    const auto& v = arg[1];
    const auto& x = arg[2];
    const auto& y = arg[3];
    return x * x * 0.5 + y * y * 0.5 + v + y * exdetail::series_f(N_f, u) * (c * eps);
  };
  sys.H_r = H;
  sys.H_c = H;
  Eigen::VectorXd wlo(2), whi(2);
  wlo << -2.0, -1.0;
  whi << 2.0, 1.0;
  sys.W_box = Box(wlo, whi);
  sys.Z_box = Box::cube(-0.4, 0.4, 2);
  sys.nu0 = 0.4;
  sys.sigma0 = 0.4;
  return sys;
}

inline HamiltonianSystem build_elliptic_pendulum(const ExampleParams& prm) {
  HamiltonianSystem sys;
  sys.name = "elliptic_pendulum";
  sys.d_W = 1;
  sys.d_Z = 1;
  sys.eps = prm.eps;
  const double c = prm.coupling, eps = prm.eps;
  auto H = [c, eps](const auto& arg) {
    const auto& u = arg[0];
    const auto& v = arg[1];
    const auto& x = arg[2];
    const auto& y = arg[3];
    return v * v * 0.5 + (cos(u) * (-1.0) + 1.0) + x * x * 0.5 + y * y * 0.5 +
           x * sin(u) * (c * eps);
  };
  sys.H_r = H;
  sys.H_c = H;
  Eigen::VectorXd wlo(2), whi(2);
  wlo << -1.5, -1.0;
  whi << 1.5, 1.0;
  sys.W_box = Box(wlo, whi);
  sys.Z_box = Box::cube(-0.4, 0.4, 2);
  sys.nu0 = 0.8;
  sys.sigma0 = 0.8;
  sys.slow_equilibrium = Eigen::VectorXd::Zero(2);
  return sys;
}

inline HamiltonianSystem build_two_fast_modes(const ExampleParams& prm) {
  HamiltonianSystem sys;
  sys.name = "two_fast_modes";
  sys.d_W = 1;
  sys.d_Z = 2;
  sys.eps = prm.eps;
  const double c = prm.coupling, eps = prm.eps;
  const double om2 = std::sqrt(2.0);
  auto H = [c, eps, om2](const auto& arg) {
    // arg = (u, v, x1, x2, y1, y2)
    const auto& u = arg[0];
    const auto& v = arg[1];
    const auto& x1 = arg[2];
    const auto& x2 = arg[3];
    const auto& y1 = arg[4];
    const auto& y2 = arg[5];
    return v * v * 0.5 + (cos(u) * (-1.0) + 1.0) + (x1 * x1 + y1 * y1) * 0.5 +
           (x2 * x2 + y2 * y2) * (0.5 * om2) + (x1 + x2) * sin(u) * (c * eps);
  };
  sys.H_r = H;
  sys.H_c = H;
  Eigen::VectorXd wlo(2), whi(2);
  wlo << -1.5, -1.0;
  whi << 1.5, 1.0;
  sys.W_box = Box(wlo, whi);
  sys.Z_box = Box::cube(-0.4, 0.4, 4);
  sys.nu0 = 0.8;
  sys.sigma0 = 0.8;
  sys.slow_equilibrium = Eigen::VectorXd::Zero(2);
  return sys;
}

inline const std::vector<std::string>& example_names() {
  static const std::vector<std::string> names = {"counterexample", "linear_hyperbolic",
                                                 "neishtadt", "elliptic_pendulum",
                                                 "two_fast_modes"};
  return names;
}

inline bool example_is_hamiltonian(const std::string& name) {
  return name == "neishtadt" || name == "elliptic_pendulum" || name == "two_fast_modes";
}

inline GeneralSystem build_general_example(const std::string& name, const ExampleParams& prm) {
  if (name == "counterexample") return build_counterexample(prm);
  if (name == "linear_hyperbolic") return build_linear_hyperbolic(prm);
  throw std::invalid_argument("unknown general system: " + name);
}

inline HamiltonianSystem build_ham_example(const std::string& name, const ExampleParams& prm) {
  if (name == "neishtadt") return build_neishtadt(prm);
  if (name == "elliptic_pendulum") return build_elliptic_pendulum(prm);
  if (name == "two_fast_modes") return build_two_fast_modes(prm);
  throw std::invalid_argument("unknown hamiltonian system: " + name);
}

// Closed-form reference values.
inline Eigen::VectorXd example_oracle(const std::string& name, const std::string& quantity,
                                      const Eigen::VectorXd& point, const ExampleParams& prm) {
  auto scalar = [](double v) { return Eigen::VectorXd::Constant(1, v); };
  if (name == "counterexample" || name == "linear_hyperbolic") {
    const std::string f = name == "linear_hyperbolic" ? "w" : prm.f;
    const double w = point(0), e = prm.eps;
    if (quantity == "rho0") return scalar(e * w);
    if (quantity == "rho1") return scalar(-e * e * exdetail::slow_f_value(f, w));
    if (quantity == "rho2")
      return scalar(e * e * e * exdetail::slow_f_prime(f, w) * exdetail::slow_f_value(f, w));
    if (quantity == "zeta0") return scalar(e * w);
    if (quantity == "manifold_slope" && name == "linear_hyperbolic") return scalar(e / (1.0 + e));
  }
  if (name == "neishtadt") {
    if (quantity == "zeta0") {
      Eigen::VectorXd z(2);
      z << 0.0, -prm.coupling * prm.eps * exdetail::series_f_value(prm.N_f, point(0));
      return z;
    }
    if (quantity == "rho0") {
      Eigen::VectorXd r(2);
      r << 0.0, prm.coupling * prm.eps * exdetail::series_f_value(prm.N_f, point(0));
      return r;
    }
  }
  if (name == "elliptic_pendulum") {
    if (quantity == "rho0") {
      Eigen::VectorXd r(2);
      r << prm.coupling * prm.eps * std::sin(point(0)), 0.0;
      return r;
    }
    if (quantity == "zeta0") {
      Eigen::VectorXd z(2);
      z << -prm.coupling * prm.eps * std::sin(point(0)), 0.0;
      return z;
    }
  }
  if (name == "two_fast_modes") {
    if (quantity == "rho0") {
      Eigen::VectorXd r(4);
      const double s = prm.coupling * prm.eps * std::sin(point(0));
      r << s, s, 0.0, 0.0;
      return r;
    }
  }
  throw std::invalid_argument("oracle quantity '" + quantity + "' unavailable for " + name);
}

inline std::vector<std::string> example_oracle_quantities(const std::string& name) {
  if (name == "counterexample") return {"rho0", "rho1", "rho2", "zeta0"};
  if (name == "linear_hyperbolic") return {"rho0", "rho1", "rho2", "zeta0", "manifold_slope"};
  if (name == "neishtadt") return {"rho0", "zeta0"};
  if (name == "elliptic_pendulum") return {"rho0", "zeta0"};
  if (name == "two_fast_modes") return {"rho0"};
  return {};
}

// Registration self-check: builder fields against the closed forms at a few
// deterministic points.  Returns the max abs deviation.
inline double example_self_check(const std::string& name, const ExampleParams& prm,
                                 int points = 20) {
  double worst = 0;
  if (!example_is_hamiltonian(name)) {
    GeneralSystem sys = build_general_example(name, prm);
    Chart empty;
    NormalFormView view(sys, empty, 0);
    for (int k = 0; k < points; ++k) {
      Eigen::VectorXd w(1);
      w << sys.V.lo(0) + (sys.V.hi(0) - sys.V.lo(0)) * unit_draw(11, k);
      const Eigen::VectorXd rho = view.rho_at<double>(w);
      worst = std::max(worst, (rho - example_oracle(name, "rho0", w, prm)).norm());
    }
    return worst;
  }
  HamiltonianSystem sys = build_ham_example(name, prm);
  for (int k = 0; k < points; ++k) {
    Eigen::VectorXd w(2);
    for (int a = 0; a < 2; ++a)
      w(a) = sys.W_box.lo(a) + (sys.W_box.hi(a) - sys.W_box.lo(a)) * unit_draw(13 + a, k);
    JetVec<double> arg;
    const Eigen::VectorXd z0 = Eigen::VectorXd::Zero(2 * sys.d_Z);
    for (int a = 0; a < 2; ++a) arg.push_back(Jet<double>::constant(w(a), 1, 2 * sys.d_Z));
    for (int i = 0; i < 2 * sys.d_Z; ++i)
      arg.push_back(Jet<double>::variable(0.0, i, 1, 2 * sys.d_Z));
    const Eigen::VectorXd rho = sys.H_r(arg).grad();
    worst = std::max(worst, (rho - example_oracle(name, "rho0", w, prm)).norm());
  }
  return worst;
}

inline double verify_examples(const ExampleParams& prm) {
  double worst = 0;
  for (const auto& n : example_names()) worst = std::max(worst, example_self_check(n, prm));
  return worst;
}

}  // namespace mfold
