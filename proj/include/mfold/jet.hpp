#pragma once

// Forward-mode truncated-Taylor jets up to third order, over real or
// complex scalars.  A Jet holds the value and the derivative tensors of a
// scalar quantity with respect to dim_in independent variables; vector
// quantities are std::vector<Jet<S>>.

#include <Eigen/Dense>

#include <cmath>
#include <complex>
#include <stdexcept>
#include <type_traits>
#include <vector>

namespace mfold {

using cxd = std::complex<double>;

template <class S>
inline double abs_val(const S& x) {
  return std::abs(x);
}

template <class S>
struct is_complex_scalar : std::false_type {};
template <>
struct is_complex_scalar<cxd> : std::true_type {};

template <class S>
using VecS = Eigen::Matrix<S, Eigen::Dynamic, 1>;
template <class S>
using MatS = Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic>;

template <class S>
class Jet {
 public:
  Jet() = default;

  Jet(int order, int dim_in) : ord_(order), n_(dim_in) {
    if (order < 0 || order > 3) throw std::invalid_argument("jet order must be in 0..3");
    if (dim_in < 0) throw std::invalid_argument("negative jet dimension");
    v_ = S(0);
    if (ord_ >= 1) g_ = VecS<S>::Zero(n_);
    if (ord_ >= 2) h_ = MatS<S>::Zero(n_, n_);
    if (ord_ >= 3) t_.assign(static_cast<size_t>(n_) * n_ * n_, S(0));
  }

  static Jet constant(const S& value, int order, int dim_in) {
    Jet j(order, dim_in);
    j.v_ = value;
    return j;
  }

  // Jet of the i-th coordinate function at the given value.
  static Jet variable(const S& value, int index, int order, int dim_in) {
    Jet j(order, dim_in);
    j.v_ = value;
    if (order >= 1) j.g_(index) = S(1);
    return j;
  }

  int order() const { return ord_; }
  int dim() const { return n_; }

  const S& value() const { return v_; }
  S& value() { return v_; }
  const VecS<S>& grad() const { return g_; }
  VecS<S>& grad() { return g_; }
  const MatS<S>& hess() const { return h_; }
  MatS<S>& hess() { return h_; }

  S third(int i, int j, int k) const { return t_[(static_cast<size_t>(i) * n_ + j) * n_ + k]; }
  // Writes all six permutations so the stored tensor stays exactly symmetric.
  void set_third(int i, int j, int k, const S& x) {
    const size_t n = n_;
    t_[(i * n + j) * n + k] = x;
    t_[(i * n + k) * n + j] = x;
    t_[(j * n + i) * n + k] = x;
    t_[(j * n + k) * n + i] = x;
    t_[(k * n + i) * n + j] = x;
    t_[(k * n + j) * n + i] = x;
  }
  const std::vector<S>& third_flat() const { return t_; }
  std::vector<S>& third_flat() { return t_; }

  bool finite() const {
    auto ok = [](const S& x) { return std::isfinite(abs_val(x)); };
    if (!ok(v_)) return false;
    for (int i = 0; i < g_.size(); ++i)
      if (!ok(g_(i))) return false;
    for (int i = 0; i < h_.size(); ++i)
      if (!ok(h_.data()[i])) return false;
    for (const S& x : t_)
      if (!ok(x)) return false;
    return true;
  }

 private:
  int ord_ = 0;
  int n_ = 0;
  S v_{};
  VecS<S> g_;
  MatS<S> h_;
  std::vector<S> t_;
};

namespace detail {
template <class S>
inline void check_compatible(const Jet<S>& a, const Jet<S>& b) {
  if (a.order() != b.order() || a.dim() != b.dim())
    throw std::invalid_argument("jet order/dimension mismatch");
}
}  // namespace detail

template <class S>
Jet<S> operator+(const Jet<S>& a, const Jet<S>& b) {
  detail::check_compatible(a, b);
  Jet<S> r = a;
  r.value() += b.value();
  if (r.order() >= 1) r.grad() += b.grad();
  if (r.order() >= 2) r.hess() += b.hess();
  if (r.order() >= 3)
    for (size_t i = 0; i < r.third_flat().size(); ++i) r.third_flat()[i] += b.third_flat()[i];
  return r;
}

template <class S>
Jet<S> operator-(const Jet<S>& a, const Jet<S>& b) {
  detail::check_compatible(a, b);
  Jet<S> r = a;
  r.value() -= b.value();
  if (r.order() >= 1) r.grad() -= b.grad();
  if (r.order() >= 2) r.hess() -= b.hess();
  if (r.order() >= 3)
    for (size_t i = 0; i < r.third_flat().size(); ++i) r.third_flat()[i] -= b.third_flat()[i];
  return r;
}

template <class S>
Jet<S> operator-(const Jet<S>& a) {
  Jet<S> r = a;
  r.value() = -r.value();
  if (r.order() >= 1) r.grad() = -r.grad();
  if (r.order() >= 2) r.hess() = -r.hess();
  if (r.order() >= 3)
    for (S& x : r.third_flat()) x = -x;
  return r;
}

template <class S>
Jet<S> operator*(const Jet<S>& a, const S& c) {
  Jet<S> r = a;
  r.value() *= c;
  if (r.order() >= 1) r.grad() *= c;
  if (r.order() >= 2) r.hess() *= c;
  if (r.order() >= 3)
    for (S& x : r.third_flat()) x *= c;
  return r;
}
template <class S>
Jet<S> operator*(const S& c, const Jet<S>& a) {
  return a * c;
}
template <class S>
  requires(!std::is_same_v<S, double>)
Jet<S> operator*(const Jet<S>& a, double c) {
  return a * S(c);
}
template <class S>
  requires(!std::is_same_v<S, double>)
Jet<S> operator*(double c, const Jet<S>& a) {
  return a * S(c);
}
template <class S>
Jet<S> operator+(const Jet<S>& a, const S& c) {
  Jet<S> r = a;
  r.value() += c;
  return r;
}
template <class S>
Jet<S> operator+(const S& c, const Jet<S>& a) {
  return a + c;
}
template <class S>
Jet<S> operator-(const Jet<S>& a, const S& c) {
  Jet<S> r = a;
  r.value() -= c;
  return r;
}
template <class S>
Jet<S> operator-(const S& c, const Jet<S>& a) {
  return (-a) + c;
}
template <class S>
  requires(!std::is_same_v<S, double>)
Jet<S> operator+(const Jet<S>& a, double c) {
  return a + S(c);
}
template <class S>
  requires(!std::is_same_v<S, double>)
Jet<S> operator+(double c, const Jet<S>& a) {
  return a + S(c);
}
template <class S>
  requires(!std::is_same_v<S, double>)
Jet<S> operator-(const Jet<S>& a, double c) {
  return a - S(c);
}
template <class S>
  requires(!std::is_same_v<S, double>)
Jet<S> operator-(double c, const Jet<S>& a) {
  return (-a) + S(c);
}

// Leibniz product through the jet order.
template <class S>
Jet<S> operator*(const Jet<S>& a, const Jet<S>& b) {
  detail::check_compatible(a, b);
  const int q = a.order();
  const int n = a.dim();
  Jet<S> r(q, n);
  r.value() = a.value() * b.value();
  if (q >= 1) r.grad() = a.value() * b.grad() + b.value() * a.grad();
  if (q >= 2) {
    r.hess() = a.value() * b.hess() + b.value() * a.hess();
    r.hess() += a.grad() * b.grad().transpose() + b.grad() * a.grad().transpose();
  }
  if (q >= 3) {
    for (int i = 0; i < n; ++i)
      for (int j = i; j < n; ++j)
        for (int k = j; k < n; ++k) {
          S x = a.value() * b.third(i, j, k) + b.value() * a.third(i, j, k);
          x += a.grad()(i) * b.hess()(j, k) + a.grad()(j) * b.hess()(i, k) +
               a.grad()(k) * b.hess()(i, j);
          x += b.grad()(i) * a.hess()(j, k) + b.grad()(j) * a.hess()(i, k) +
               b.grad()(k) * a.hess()(i, j);
          r.set_third(i, j, k, x);
        }
  }
  return r;
}

// Univariate chain rule given f and its first three derivatives at a.value().
template <class S>
Jet<S> compose_scalar(const Jet<S>& a, const S& f0, const S& f1, const S& f2, const S& f3) {
  const int q = a.order();
  const int n = a.dim();
  Jet<S> r(q, n);
  r.value() = f0;
  if (q >= 1) r.grad() = f1 * a.grad();
  if (q >= 2) r.hess() = f2 * (a.grad() * a.grad().transpose()) + f1 * a.hess();
  if (q >= 3) {
    for (int i = 0; i < n; ++i)
      for (int j = i; j < n; ++j)
        for (int k = j; k < n; ++k) {
          S x = f3 * a.grad()(i) * a.grad()(j) * a.grad()(k);
          x += f2 * (a.grad()(i) * a.hess()(j, k) + a.grad()(j) * a.hess()(i, k) +
                     a.grad()(k) * a.hess()(i, j));
          x += f1 * a.third(i, j, k);
          r.set_third(i, j, k, x);
        }
  }
  return r;
}

template <class S>
Jet<S> sin(const Jet<S>& a) {
  using std::cos;
  using std::sin;
  const S s = sin(a.value()), c = cos(a.value());
  return compose_scalar(a, s, c, -s, -c);
}

template <class S>
Jet<S> cos(const Jet<S>& a) {
  using std::cos;
  using std::sin;
  const S s = sin(a.value()), c = cos(a.value());
  return compose_scalar(a, c, -s, -c, s);
}

template <class S>
Jet<S> exp(const Jet<S>& a) {
  using std::exp;
  const S e = exp(a.value());
  return compose_scalar(a, e, e, e, e);
}

template <class S>
Jet<S> recip(const Jet<S>& a) {
  if (abs_val(a.value()) <= 1e-12)
    throw std::domain_error("recip: jet value within 1e-12 of zero");
  const S u = S(1) / a.value();
  const S u2 = u * u;
  return compose_scalar(a, u, -u2, S(2) * u2 * u, S(-6) * u2 * u2);
}

template <class S>
Jet<S> pow_int(const Jet<S>& a, int k) {
  if (k < 0) return recip(pow_int(a, -k));
  auto ipow = [](S base, int e) {
    S r(1);
    for (int i = 0; i < e; ++i) r *= base;
    return r;
  };
  const S v = a.value();
  const S f0 = ipow(v, k);
  const S f1 = k >= 1 ? S(double(k)) * ipow(v, k - 1) : S(0);
  const S f2 = k >= 2 ? S(double(k) * (k - 1)) * ipow(v, k - 2) : S(0);
  const S f3 = k >= 3 ? S(double(k) * (k - 1) * (k - 2)) * ipow(v, k - 3) : S(0);
  return compose_scalar(a, f0, f1, f2, f3);
}

template <class S>
Jet<S> operator/(const Jet<S>& a, const Jet<S>& b) {
  return a * recip(b);
}

template <class S>
using JetVec = std::vector<Jet<S>>;

// Jet of the identity map at `point`: value = point, gradient = identity.
template <class S>
JetVec<S> seed_variable(const VecS<S>& point, int order) {
  if (order < 0 || order > 3) throw std::invalid_argument("jet order must be in 0..3");
  for (int i = 0; i < point.size(); ++i)
    if (!std::isfinite(abs_val(point(i)))) throw std::invalid_argument("non-finite seed point");
  JetVec<S> out;
  out.reserve(point.size());
  for (int i = 0; i < point.size(); ++i)
    out.push_back(Jet<S>::variable(point(i), i, order, static_cast<int>(point.size())));
  return out;
}

// Truncated Taylor step: f(w) + Df h + 1/2 D2f h^2 + 1/6 D3f h^3 to j.order.
template <class S>
VecS<S> taylor_predict(const JetVec<S>& jets, const VecS<S>& h) {
  VecS<S> out(jets.size());
  for (size_t m = 0; m < jets.size(); ++m) {
    const Jet<S>& j = jets[m];
    S acc = j.value();
    if (j.order() >= 1) acc += j.grad().dot(h);  // note: dot() conjugates nothing for real S
    if (j.order() >= 1 && is_complex_scalar<S>::value) {
      // Eigen's dot conjugates the left factor for complex scalars; redo plainly.
      acc = j.value();
      for (int i = 0; i < j.dim(); ++i) acc += j.grad()(i) * h(i);
    }
    if (j.order() >= 2) acc += S(0.5) * (h.transpose() * j.hess() * h)(0, 0);
    if (j.order() >= 3) {
      S c(0);
      const int n = j.dim();
      for (int i = 0; i < n; ++i)
        for (int jj = 0; jj < n; ++jj)
          for (int k = 0; k < n; ++k) c += j.third(i, jj, k) * h(i) * h(jj) * h(k);
      acc += c / S(6.0);
    }
    out(static_cast<Eigen::Index>(m)) = acc;
  }
  return out;
}

template <class S>
VecS<S> values_of(const JetVec<S>& jets) {
  VecS<S> v(jets.size());
  for (size_t i = 0; i < jets.size(); ++i) v(static_cast<Eigen::Index>(i)) = jets[i].value();
  return v;
}

// d(out)/d(in) matrix assembled from the gradients of a jet vector.
template <class S>
MatS<S> jacobian_of(const JetVec<S>& jets) {
  if (jets.empty()) return MatS<S>();
  MatS<S> m(jets.size(), jets[0].dim());
  for (size_t i = 0; i < jets.size(); ++i) m.row(static_cast<Eigen::Index>(i)) = jets[i].grad().transpose();
  return m;
}

}  // namespace mfold
