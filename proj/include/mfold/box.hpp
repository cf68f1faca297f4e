#pragma once

// Real boxes and the complex-neighborhood norm conventions used throughout:
// vectors over C^n carry the Euclidean norm of coordinate moduli, matrices the
// operator 2-norm, and a complex nu-neighborhood of a box perturbs each
// coordinate independently with |Im w_j| < nu.

#include <Eigen/Dense>

#include <complex>
#include <stdexcept>
#include <vector>

#include "jet.hpp"

namespace mfold {

struct Box {
  Eigen::VectorXd lo, hi;

  Box() = default;
  Box(Eigen::VectorXd l, Eigen::VectorXd h) : lo(std::move(l)), hi(std::move(h)) {
    if (lo.size() != hi.size()) throw std::invalid_argument("box bound size mismatch");
    for (int i = 0; i < lo.size(); ++i)
      if (!(lo(i) < hi(i))) throw std::invalid_argument("box must have positive extent");
  }
  static Box centered(const Eigen::VectorXd& half) {
    return Box(-half, half);
  }
  static Box cube(double l, double h, int dim) {
    return Box(Eigen::VectorXd::Constant(dim, l), Eigen::VectorXd::Constant(dim, h));
  }

  int dim() const { return static_cast<int>(lo.size()); }
  Eigen::VectorXd mid() const { return 0.5 * (lo + hi); }
  Eigen::VectorXd half() const { return 0.5 * (hi - lo); }
  bool contains(const Eigen::VectorXd& p, double slack = 0.0) const {
    for (int i = 0; i < dim(); ++i)
      if (p(i) < lo(i) - slack || p(i) > hi(i) + slack) return false;
    return true;
  }
  // The 2^d real corner points.
  std::vector<Eigen::VectorXd> corners() const {
    std::vector<Eigen::VectorXd> out;
    const int d = dim();
    out.reserve(size_t(1) << d);
    for (unsigned mask = 0; mask < (1u << d); ++mask) {
      Eigen::VectorXd p(d);
      for (int i = 0; i < d; ++i) p(i) = (mask >> i) & 1u ? hi(i) : lo(i);
      out.push_back(std::move(p));
    }
    return out;
  }
};

inline double cnorm(const Eigen::VectorXcd& v) { return v.norm(); }
inline double cnorm(const Eigen::VectorXd& v) { return v.norm(); }

inline double op_norm(const Eigen::MatrixXcd& m) {
  if (m.size() == 0) return 0.0;
  Eigen::JacobiSVD<Eigen::MatrixXcd> svd(m);
  return svd.singularValues()(0);
}
inline double op_norm(const Eigen::MatrixXd& m) {
  if (m.size() == 0) return 0.0;
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(m);
  return svd.singularValues()(0);
}

// ||M^{-1}|| in the operator 2-norm; throws if cond exceeds the cap.
struct SingularLinearPart : std::runtime_error {
  explicit SingularLinearPart(const std::string& what) : std::runtime_error(what) {}
};

template <class M>
double inv_op_norm(const M& m, double cond_cap = 1e12) {
  Eigen::JacobiSVD<M> svd(m);
  const auto& sv = svd.singularValues();
  const double smin = sv(sv.size() - 1), smax = sv(0);
  if (!(smin > 0.0) || smax / smin > cond_cap)
    throw SingularLinearPart("linear part singular (condition number > 1e12)");
  return 1.0 / smin;
}

}  // namespace mfold
