#pragma once

// Tensor-product Chebyshev-Lobatto interpolants on a box.  Layers of the
// refinement are stored in this form: values are solved at the nodes once and
// every later evaluation (including at complex points inside the Bernstein
// ellipse, and with jet arguments for derivative propagation) goes through the
// coefficient tensor.  Axis-wise coefficient differentiation gives exact
// derivatives of the interpolant at any order.

#include <Eigen/Dense>

#include <cmath>
#include <functional>
#include <numbers>
#include <stdexcept>
#include <vector>

#include "box.hpp"
#include "jet.hpp"

namespace mfold {

class ChebInterp {
 public:
  ChebInterp() = default;

  // Lobatto node grid in the flat (row-major) order used by from_values.
  static std::vector<Eigen::VectorXd> nodes(const Box& box, const std::vector<int>& degree) {
    if (static_cast<int>(degree.size()) != box.dim())
      throw std::invalid_argument("degree list does not match box dimension");
    size_t total = 1;
    for (int p : degree) {
      if (p < 1) throw std::invalid_argument("chebyshev degree must be >= 1");
      total *= static_cast<size_t>(p) + 1;
    }
    const Eigen::VectorXd mid = box.mid(), half = box.half();
    std::vector<Eigen::VectorXd> out;
    out.reserve(total);
    Eigen::VectorXd x(box.dim());
    for (size_t flat = 0; flat < total; ++flat) {
      size_t rem = flat;
      for (int a = box.dim() - 1; a >= 0; --a) {
        const int j = static_cast<int>(rem % (degree[a] + 1));
        rem /= degree[a] + 1;
        x(a) = mid(a) + half(a) * std::cos(std::numbers::pi * j / degree[a]);
      }
      out.push_back(x);
    }
    return out;
  }

  // Build from values given at nodes(box, degree), same flat order.
  static ChebInterp from_values(const Box& box, std::vector<int> degree, std::vector<double> values) {
    ChebInterp c;
    c.box_ = box;
    c.deg_ = std::move(degree);
    c.coef_ = std::move(values);
    size_t total = 1;
    for (int p : c.deg_) total *= static_cast<size_t>(p) + 1;
    if (total != c.coef_.size()) throw std::invalid_argument("value count does not match node grid");
    for (int a = box.dim() - 1; a >= 0; --a) c.transform_axis(a);
    return c;
  }

  // Interpolate f on box with degree[a] + 1 Lobatto nodes along axis a.
  static ChebInterp fit(const Box& box, const std::vector<int>& degree,
                        const std::function<double(const Eigen::VectorXd&)>& f) {
    const auto grid = nodes(box, degree);
    std::vector<double> vals(grid.size());
    for (size_t i = 0; i < grid.size(); ++i) vals[i] = f(grid[i]);
    return from_values(box, degree, std::move(vals));
  }

  static ChebInterp from_coeffs(const Box& box, std::vector<int> degree, std::vector<double> coef) {
    ChebInterp c;
    c.box_ = box;
    c.deg_ = std::move(degree);
    c.coef_ = std::move(coef);
    return c;
  }

  const Box& domain() const { return box_; }
  const std::vector<int>& degree() const { return deg_; }
  bool empty() const { return coef_.empty(); }

  double node(int axis, int j) const {
    const int p = deg_[axis];
    const double t = std::cos(std::numbers::pi * j / p);
    return box_.mid()(axis) + box_.half()(axis) * t;
  }

  // Coefficient tensor differentiated along one axis (chain-rule scale included).
  ChebInterp derivative(int axis) const {
    std::vector<int> shape = deg_;
    const int p = deg_[axis];
    const size_t stride = axis_stride(axis);
    const size_t nslices = coef_.size() / (p + 1);
    std::vector<double> out(coef_.size(), 0.0);
    const double scale = 1.0 / box_.half()(axis);
    // iterate over all lines along `axis`
    for (size_t base = 0, seen = 0; seen < nslices; ++base) {
      if ((base / stride) % (p + 1) != 0) continue;  // base must have index 0 on axis
      ++seen;
      // recurrence: c'_{k-1} = c'_{k+1} + 2k c_k, downward
      std::vector<double> d(p + 1, 0.0);
      for (int k = p; k >= 1; --k)
        d[k - 1] = (k + 1 <= p ? d[k + 1] : 0.0) + 2.0 * k * coef_[base + k * stride];
      d[0] *= 0.5;
      for (int k = 0; k <= p; ++k) out[base + k * stride] = scale * d[k];
    }
    return from_coeffs(box_, shape, std::move(out));
  }

  template <class S>
  S eval(const VecS<S>& x) const {
    std::vector<S> buf(coef_.size());
    for (size_t i = 0; i < coef_.size(); ++i) buf[i] = S(coef_[i]);
    for (int a = box_.dim() - 1; a >= 0; --a) {
      const S t = (x(a) - S(box_.mid()(a))) / S(box_.half()(a));
      contract_last_axis(buf, a, t);
    }
    return buf[0];
  }

  // Evaluate with jet arguments: exact chain rule via Clenshaw in jet arithmetic.
  template <class S>
  Jet<S> eval_jet(const JetVec<S>& x) const {
    if (static_cast<int>(x.size()) != box_.dim())
      throw std::invalid_argument("cheb eval dimension mismatch");
    const int q = x.empty() ? 0 : x[0].order();
    const int n = x.empty() ? 0 : x[0].dim();
    std::vector<Jet<S>> buf(coef_.size(), Jet<S>(q, n));
    for (size_t i = 0; i < coef_.size(); ++i) buf[i].value() = S(coef_[i]);
    for (int a = box_.dim() - 1; a >= 0; --a) {
      const Jet<S> t = (x[a] - S(box_.mid()(a))) * S(1.0 / box_.half()(a));
      contract_last_axis(buf, a, t);
    }
    return buf[0];
  }

  // Contract trailing axes at fixed scalar coordinates, leaving a 1-d
  // coefficient line in axis 0; used in hot paths where only the first axis
  // carries jet dependence.
  template <class S>
  std::vector<S> contract_tail(const VecS<S>& tail) const {
    if (box_.dim() != static_cast<int>(tail.size()) + 1)
      throw std::invalid_argument("contract_tail expects all but the first axis");
    std::vector<S> buf(coef_.size());
    for (size_t i = 0; i < coef_.size(); ++i) buf[i] = S(coef_[i]);
    for (int a = box_.dim() - 1; a >= 1; --a) {
      const S t = (tail(a - 1) - S(box_.mid()(a))) / S(box_.half()(a));
      contract_last_axis(buf, a, t);
    }
    buf.resize(deg_[0] + 1);
    return buf;
  }

  // Clenshaw on a 1-d Chebyshev coefficient line with a jet argument.
  template <class S>
  static Jet<S> clenshaw_line(const std::vector<S>& c, const Jet<S>& t) {
    const int p = static_cast<int>(c.size()) - 1;
    Jet<S> b1(t.order(), t.dim()), b2(t.order(), t.dim());
    const Jet<S> two_t = t * S(2);
    for (int k = p; k >= 1; --k) {
      Jet<S> b0 = two_t * b1 - b2 + S(c[k]) * Jet<S>::constant(S(1), t.order(), t.dim());
      b2 = std::move(b1);
      b1 = std::move(b0);
    }
    return t * b1 - b2 + S(c[0]) * Jet<S>::constant(S(1), t.order(), t.dim());
  }
  template <class S>
  static S clenshaw_line_value(const std::vector<S>& c, const S& t) {
    const int p = static_cast<int>(c.size()) - 1;
    S b1(0), b2(0);
    const S two_t = S(2) * t;
    for (int k = p; k >= 1; --k) {
      S b0 = two_t * b1 - b2 + c[k];
      b2 = b1;
      b1 = b0;
    }
    return t * b1 - b2 + c[0];
  }

  // Scaled first-axis coordinate for clenshaw_line use.
  template <class S>
  S scale_axis0(const S& u) const {
    return (u - S(box_.mid()(0))) / S(box_.half()(0));
  }
  template <class S>
  Jet<S> scale_axis0(const Jet<S>& u) const {
    return (u - S(box_.mid()(0))) * S(1.0 / box_.half()(0));
  }

 private:
  size_t axis_stride(int axis) const {
    size_t s = 1;
    for (int a = box_.dim() - 1; a > axis; --a) s *= static_cast<size_t>(deg_[a]) + 1;
    return s;
  }

  // In-place values->coefficients along one axis (type-II cosine transform,
  // direct O(p^2); degrees are small).
  void transform_axis(int axis) {
    const int p = deg_[axis];
    const size_t stride = axis_stride(axis);
    std::vector<double> line(p + 1), out(p + 1);
    const size_t nlines = coef_.size() / (p + 1);
    for (size_t base = 0, seen = 0; seen < nlines; ++base) {
      if ((base / stride) % (p + 1) != 0) continue;
      ++seen;
      for (int j = 0; j <= p; ++j) line[j] = coef_[base + j * stride];
      for (int k = 0; k <= p; ++k) {
        double acc = 0.5 * (line[0] + (k % 2 == 0 ? line[p] : -line[p]));
        for (int j = 1; j < p; ++j) acc += line[j] * std::cos(std::numbers::pi * j * k / p);
        out[k] = 2.0 * acc / p;
      }
      out[0] *= 0.5;
      out[p] *= 0.5;
      for (int k = 0; k <= p; ++k) coef_[base + k * stride] = out[k];
    }
  }

  template <class T>
  void contract_last_axis(std::vector<T>& buf, int axis, const T& t) const {
    const int p = deg_[axis];
    const size_t nlines = buf.size() / (p + 1);
    // axis is contiguous-last among remaining axes by construction of the loop
    for (size_t line = 0; line < nlines; ++line) {
      const size_t base = line * (p + 1);
      T b1 = zero_like(t), b2 = zero_like(t);
      const T two_t = t * scalar_two(t);
      for (int k = p; k >= 1; --k) {
        T b0 = two_t * b1 - b2 + buf[base + k];
        b2 = b1;
        b1 = b0;
      }
      buf[line] = t * b1 - b2 + buf[base];
    }
    buf.resize(nlines);
  }

  template <class S>
  static S zero_like(const S&) {
    return S(0);
  }
  template <class S>
  static Jet<S> zero_like(const Jet<S>& t) {
    return Jet<S>(t.order(), t.dim());
  }
  template <class S>
  static S scalar_two(const S&) {
    return S(2);
  }
  template <class S>
  static S scalar_two(const Jet<S>&) {
    return S(2);
  }

  Box box_;
  std::vector<int> deg_;
  std::vector<double> coef_;
};

}  // namespace mfold
