#pragma once

// Sup norms of analytic maps over complex neighborhoods of real boxes,
// estimated from the real corners plus a seeded quasi-random point set; the
// point sequence depends only on (seed, index), so estimates are deterministic
// and monotone in the sample count.  Also: Cauchy-estimate self checks and the
// least-squares fit of the exponential decay law.

#include <Eigen/Dense>

#include <cmath>
#include <cstdint>
#include <functional>
#include <stdexcept>
#include <string>
#include <vector>

#include "box.hpp"

namespace mfold {

constexpr std::uint64_t kDefaultSeed = 0x5EED;
constexpr int kDefaultSamples = 2048;

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

inline double unit_draw(std::uint64_t seed, std::uint64_t index) {
  return double(splitmix64(seed ^ splitmix64(index)) >> 11) * 0x1.0p-53;
}

// k-th complex sample point: real parts quasi-random in the box, imaginary
// parts independent per coordinate with |Im| < width (max-norm convention).
inline Eigen::VectorXcd complex_sample(const Box& box, double width, std::uint64_t seed,
                                       std::uint64_t k) {
  const int d = box.dim();
  Eigen::VectorXcd p(d);
  for (int i = 0; i < d; ++i) {
    const double ur = unit_draw(seed, 2 * (k * d + i));
    const double ui = unit_draw(seed, 2 * (k * d + i) + 1);
    const double re = box.lo(i) + ur * (box.hi(i) - box.lo(i));
    const double im = (2.0 * ui - 1.0) * width * (1.0 - 1e-12);
    p(i) = cxd(re, im);
  }
  return p;
}

// Variant with one width per coordinate (joint slow/fast neighborhoods).
inline Eigen::VectorXcd complex_sample(const Box& box, const Eigen::VectorXd& widths,
                                       std::uint64_t seed, std::uint64_t k) {
  const int d = box.dim();
  Eigen::VectorXcd p(d);
  for (int i = 0; i < d; ++i) {
    const double ur = unit_draw(seed, 2 * (k * d + i));
    const double ui = unit_draw(seed, 2 * (k * d + i) + 1);
    const double re = box.lo(i) + ur * (box.hi(i) - box.lo(i));
    const double im = (2.0 * ui - 1.0) * widths(i) * (1.0 - 1e-12);
    p(i) = cxd(re, im);
  }
  return p;
}

// Max over corners and `samples` quasi-random complex points of a scalar
// magnitude functional.  Throws propagate with the failing point appended.
inline double sup_norm(const std::function<double(const Eigen::VectorXcd&)>& fn, const Box& box,
                       const Eigen::VectorXd& widths, int samples, std::uint64_t seed = kDefaultSeed,
                       Eigen::VectorXcd* argmax = nullptr) {
  if (widths.minCoeff() < 0) throw std::invalid_argument("negative neighborhood width");
  if (samples < 1) throw std::invalid_argument("sup_norm needs at least one sample");
  double best = -1.0;
  Eigen::VectorXcd best_pt;
  auto consider = [&](const Eigen::VectorXcd& p) {
    double v;
    try {
      v = fn(p);
    } catch (const std::exception& e) {
      std::string msg = std::string(e.what()) + " at sample point (";
      for (int i = 0; i < p.size(); ++i)
        msg += std::to_string(p(i).real()) + "+" + std::to_string(p(i).imag()) + "i" +
               (i + 1 < p.size() ? ", " : ")");
      throw std::runtime_error(msg);
    }
    if (v > best) {
      best = v;
      best_pt = p;
    }
  };
  if (box.dim() <= 16)
    for (const auto& c : box.corners()) consider(c.cast<cxd>());
  for (int k = 0; k < samples; ++k) consider(complex_sample(box, widths, seed, std::uint64_t(k)));
  if (argmax) *argmax = best_pt;
  return best;
}

inline double sup_norm(const std::function<double(const Eigen::VectorXcd&)>& fn, const Box& box,
                       double width, int samples, std::uint64_t seed = kDefaultSeed,
                       Eigen::VectorXcd* argmax = nullptr) {
  return sup_norm(fn, box, Eigen::VectorXd::Constant(box.dim(), width), samples, seed, argmax);
}

// Joint box with block widths: slow coordinates get nu, fast get sigma.
inline Box join_boxes(const Box& a, const Box& b) {
  Eigen::VectorXd lo(a.dim() + b.dim()), hi(a.dim() + b.dim());
  lo << a.lo, b.lo;
  hi << a.hi, b.hi;
  return Box(lo, hi);
}

inline Eigen::VectorXd block_widths(int d_a, double wa, int d_b, double wb) {
  Eigen::VectorXd w(d_a + d_b);
  w.head(d_a).setConstant(wa);
  w.tail(d_b).setConstant(wb);
  return w;
}

struct CauchyReport {
  double deriv_sup = 0;   // ||f'|| on the (nu - xi)-neighborhood
  double bound = 0;       // ||f||_nu / xi, with sampling slack applied
  bool ok = false;
};

// Checks ||df||_{nu-xi} <= (1 + slack) ||f||_nu / xi as a sampling-density
// self test.  Violation is a warning condition, reported, not thrown.
inline CauchyReport cauchy_check(const std::function<double(const Eigen::VectorXcd&)>& fn,
                                 const std::function<double(const Eigen::VectorXcd&)>& dfn,
                                 const Box& box, double nu, double xi,
                                 int samples = kDefaultSamples, std::uint64_t seed = kDefaultSeed,
                                 double slack = 0.05) {
  if (!(xi > 0 && xi < nu)) throw std::invalid_argument("cauchy_check needs 0 < xi < nu");
  CauchyReport r;
  const double fsup = sup_norm(fn, box, nu, samples, seed);
  r.deriv_sup = sup_norm(dfn, box, nu - xi, samples, seed);
  r.bound = (1.0 + slack) * fsup / xi;
  r.ok = r.deriv_sup <= r.bound;
  return r;
}

struct FitResult {
  double slope = 0, intercept = 0, r2 = 0;
  bool degenerate = false;
};

inline FitResult linear_fit(const std::vector<double>& x, const std::vector<double>& y) {
  if (x.size() != y.size() || x.size() < 2) throw std::invalid_argument("fit needs >= 2 points");
  const double n = double(x.size());
  double sx = 0, sy = 0, sxx = 0, sxy = 0, syy = 0;
  for (size_t i = 0; i < x.size(); ++i) {
    sx += x[i];
    sy += y[i];
    sxx += x[i] * x[i];
    sxy += x[i] * y[i];
    syy += y[i] * y[i];
  }
  FitResult f;
  const double vx = sxx - sx * sx / n;
  const double vy = syy - sy * sy / n;
  const double cxy = sxy - sx * sy / n;
  if (vx <= 0) throw std::invalid_argument("degenerate abscissae in fit");
  f.slope = cxy / vx;
  f.intercept = (sy - f.slope * sx) / n;
  if (vy <= 1e-300) {
    f.degenerate = true;
    f.slope = 0;
    f.intercept = sy / n;
    f.r2 = 1.0;
    return f;
  }
  f.r2 = (cxy * cxy) / (vx * vy);
  return f;
}

struct DecayReport {
  std::vector<double> eps_values;
  std::vector<std::vector<std::pair<int, double>>> traces;  // per eps: (n, delta_n)
  std::vector<double> min_delta;                            // per eps
  FitResult fit;           // log(min delta) vs 1/eps
  double theory_slope = 0; // -m ln2 / (4 K1)
};

inline DecayReport fit_decay(const std::vector<double>& eps_values,
                             const std::vector<std::vector<std::pair<int, double>>>& traces,
                             double theory_slope = 0) {
  if (eps_values.size() != traces.size())
    throw std::invalid_argument("one delta trace per eps value required");
  if (eps_values.size() < 3) throw std::invalid_argument("fit_decay needs >= 3 eps values");
  DecayReport rep;
  rep.eps_values = eps_values;
  rep.traces = traces;
  rep.theory_slope = theory_slope;
  std::vector<double> x, y;
  for (size_t i = 0; i < eps_values.size(); ++i) {
    if (traces[i].empty()) throw std::invalid_argument("empty delta trace");
    double m = traces[i][0].second;
    for (const auto& [n, d] : traces[i]) {
      if (!(d > 0)) throw std::invalid_argument("delta values must be positive");
      m = std::min(m, d);
    }
    rep.min_delta.push_back(m);
    x.push_back(1.0 / eps_values[i]);
    y.push_back(std::log(m));
  }
  rep.fit = linear_fit(x, y);
  return rep;
}

}  // namespace mfold
