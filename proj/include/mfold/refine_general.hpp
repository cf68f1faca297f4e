#pragma once

// Iterated graph refinement for general slow-fast systems: per-point
// contraction solve for the next graph correction, layer tabulation on the
// Chebyshev grid, certificate-driven step schedule xi_n = 2 K_n eps, and the
// optimal-truncation stopping rule.

#include <Eigen/Dense>

#include <cmath>
#include <stdexcept>
#include <vector>

#include "norms.hpp"
#include "sysmodel.hpp"

namespace mfold {

struct NonContraction : std::runtime_error {
  double contraction_est;
  explicit NonContraction(double est)
      : std::runtime_error("contraction solve did not converge (estimated rate " +
                           std::to_string(est) + ")"),
        contraction_est(est) {}
};

struct LayerSolveResult {
  JetVec<double> zeta;  // order-1 jet in w
  int iterations = 0;
  double residual = 0;
  double contraction_est = 0;
};

// Solve rho(w) + A(w) zeta + R(w, zeta) = 0 at one point.  Starts from
// zeta0 = -A^{-1} rho and iterates z <- -A^{-1} R(w, zeta0 + z); the slow
// derivative follows by implicit differentiation of Z_n(w, zeta(w)) = 0.
inline LayerSolveResult solve_layer(const NormalFormView& view, const Eigen::VectorXd& w,
                                    double tol = 0) {
  const int d_w = static_cast<int>(w.size());
  const int d_z = view.system().d_z;
  const Eigen::VectorXd rho = view.rho_at<double>(w);
  const Eigen::MatrixXd A = view.A_at<double>(w);
  inv_op_norm(A);  // throws SingularLinearPart when ill-conditioned
  Eigen::PartialPivLU<Eigen::MatrixXd> lu(A);
  if (tol <= 0) tol = 1e-13 * std::max(1.0, rho.norm());

  LayerSolveResult out;
  const Eigen::VectorXd zeta0 = -lu.solve(rho);
  Eigen::VectorXd z = Eigen::VectorXd::Zero(d_z);
  Eigen::VectorXd zeta = zeta0;
  double prev_step = -1;
  for (int it = 0; it < 200; ++it) {
    const Eigen::VectorXd Rv = view.Z_at<double>(w, zeta) - rho - A * zeta;
    const Eigen::VectorXd z_next = -lu.solve(Rv);
    const double step = (z_next - z).norm();
    z = z_next;
    zeta = zeta0 + z;
    out.iterations = it + 1;
    if (prev_step > 0 && step > 0 && std::isfinite(step / prev_step))
      out.contraction_est = step / prev_step;
    prev_step = step;
    if (step < tol) break;
    if (it == 199) throw NonContraction(out.contraction_est);
  }
  out.residual = view.Z_at<double>(w, zeta).norm();

  // dzeta/dw = -(dZ_n/dz)^{-1} dZ_n/dw at (w, zeta)
  JetVec<double> wj, zj;
  const int dim = d_w + d_z;
  for (int a = 0; a < d_w; ++a) wj.push_back(Jet<double>::variable(w(a), a, 1, dim));
  for (int i = 0; i < d_z; ++i) zj.push_back(Jet<double>::variable(zeta(i), d_w + i, 1, dim));
  const Eigen::MatrixXd Jfull = jacobian_of(view.Zn(wj, zj));
  const Eigen::MatrixXd Jw = Jfull.leftCols(d_w);
  const Eigen::MatrixXd Jz = Jfull.rightCols(d_z);
  const Eigen::MatrixXd dzeta = -Jz.partialPivLu().solve(Jw);
  for (int i = 0; i < d_z; ++i) {
    Jet<double> ji(1, d_w);
    ji.value() = zeta(i);
    ji.grad() = dzeta.row(i).transpose();
    out.zeta.push_back(ji);
  }
  return out;
}

struct RefineOptions {
  SamplingOptions sampling;
  int cheb_degree = 20;       // per slow axis
  double adaptive_ratio = 0.9;
  int max_small_steps = 64;
  double ratio_slack = 0.05;  // flagging threshold above the theoretical 1/2
};

// Tabulate the next layer on the Chebyshev grid of the slow box.
inline GeneralLayer build_layer(const NormalFormView& view, int degree) {
  const Box& V = view.system().V;
  const int d_z = view.system().d_z;
  std::vector<int> deg(V.dim(), degree);
  const auto grid = ChebInterp::nodes(V, deg);
  std::vector<std::vector<double>> vals(d_z, std::vector<double>(grid.size()));
  for (size_t k = 0; k < grid.size(); ++k) {
    const auto r = solve_layer(view, grid[k]);
    for (int i = 0; i < d_z; ++i) vals[i][k] = r.zeta[i].value();
  }
  std::vector<ChebInterp> comps;
  for (int i = 0; i < d_z; ++i) comps.push_back(ChebInterp::from_values(V, deg, std::move(vals[i])));
  return GeneralLayer::from_components(std::move(comps));
}

inline Certificate measure_level(const GeneralSystem& sys, const Chart& chart, int level,
                                 double nu, double sigma, const SamplingOptions& so) {
  NormalFormView view(sys, chart, level);
  Certificate c;
  c.level = level;
  c.nu = nu;
  c.sigma = sigma;
  c.delta = sup_norm(
      [&](const Eigen::VectorXcd& w) { return cnorm(view.rho_at<cxd>(w)); }, sys.V, nu,
      so.delta_samples, so.seed);
  c.K = 2.0 * sup_norm(
                  [&](const Eigen::VectorXcd& w) { return inv_op_norm(view.A_at<cxd>(w)); },
                  sys.V, nu, so.mat_samples, so.seed + 1);
  const Box joint = join_boxes(sys.V, sys.S_box);
  const Eigen::VectorXd widths = block_widths(sys.d_w, nu, sys.d_z, sigma);
  c.C_R = sup_norm(
      [&](const Eigen::VectorXcd& p) {
        return cnorm(view.R_at<cxd>(p.head(sys.d_w), p.tail(sys.d_z)));
      },
      joint, widths, so.mat_samples, so.seed + 2);
  c.delta_over_eps = c.delta / sys.eps;
  return c;
}

// Hypothesis gate for taking a step of width xi from certificate state c.
inline void gate_step(Certificate& c, double xi, double eps) {
  c.xi = xi;
  c.xi_ok = xi >= 2.0 * c.K * c.delta;
  c.kappa = std::min(c.kappa > 0 ? c.kappa : c.sigma, c.sigma - xi);
  c.delta_ok = c.C_R == 0 || c.delta <= 0.5 * c.kappa * c.kappa / (c.K * c.K * c.C_R);
  c.eps_ok = eps < 2.0 * c.kappa * c.kappa;
  c.hypothesis_ok = c.xi_ok && c.delta_ok && c.eps_ok && c.kappa > 0;
}

// One refinement step: append a layer, shrink widths by cert.xi, re-estimate.
// A hypothesis violation is returned as a terminal certificate state, not
// thrown.
inline Certificate iterate_step(const GeneralSystem& sys, Chart& chart, const Certificate& cert,
                                const RefineOptions& opt = {}) {
  if (!cert.hypothesis_ok) return cert;
  if (cert.delta == 0) {
    Certificate next = cert;
    next.level = cert.level + 1;
    next.ratio = 0;
    return next;  // already invariant; nothing to append
  }
  NormalFormView view(sys, chart, cert.level);
  chart.layers.push_back(build_layer(view, opt.cheb_degree));
  chart.cache.clear();
  Certificate next = measure_level(sys, chart, cert.level + 1, cert.nu - cert.xi,
                                   cert.sigma - cert.xi, opt.sampling);
  next.C_z = cert.C_z;
  next.kappa = cert.kappa;
  next.ratio = cert.delta > 0 ? next.delta / cert.delta : 0;
  next.ratio_exceeded = next.ratio > 0.5 + opt.ratio_slack;
  gate_step(next, 2.0 * next.K * sys.eps, sys.eps);
  return next;
}

enum class RefineMode { fixed_N, adaptive };

struct RefineResult {
  Chart chart;
  std::vector<Certificate> certificates;  // per level, starting at 0
  std::vector<std::pair<int, double>> delta_trace;
  int argmin_level = 0;
  bool halted_on_hypothesis = false;
  int planned_N = 0;  // floor(m / (4 K1 eps)), fixed_N target
  double m_width = 0;
};

inline RefineResult refine(const GeneralSystem& sys, double nu_floor, double sigma_floor,
                           double xi0, RefineMode mode, const RefineOptions& opt = {}) {
  if (!(nu_floor > 0 && sigma_floor > 0))
    throw std::invalid_argument("width floors must be positive");
  if (!(nu_floor < sys.nu0 - xi0 && sigma_floor < sys.sigma0 - xi0))
    throw std::invalid_argument("xi0 leaves no room above the width floors");
  RefineResult res;
  Certificate c0 = validate_assumptions(sys, opt.sampling.delta_samples, opt.sampling.seed);
  gate_step(c0, xi0, sys.eps);
  res.certificates.push_back(c0);
  res.delta_trace.push_back({0, c0.delta});
  if (c0.delta == 0) return res;  // rho identically zero: chart already invariant
  if (!c0.hypothesis_ok) {
    res.halted_on_hypothesis = true;
    return res;
  }

  // big first step
  Certificate c = iterate_step(sys, res.chart, c0, opt);
  res.certificates.push_back(c);
  res.delta_trace.push_back({c.level, c.delta});
  res.m_width = std::min(c.nu - nu_floor, c.sigma - sigma_floor);
  res.planned_N = static_cast<int>(std::floor(res.m_width / (4.0 * c.K * sys.eps)));

  int best = 0;
  for (size_t i = 0; i < res.delta_trace.size(); ++i)
    if (res.delta_trace[i].second < res.delta_trace[best].second) best = static_cast<int>(i);

  int small_steps = 0;
  while (true) {
    if (!c.hypothesis_ok) {
      res.halted_on_hypothesis = true;
      break;
    }
    if (c.nu - c.xi <= nu_floor || c.sigma - c.xi <= sigma_floor) break;
    if (mode == RefineMode::fixed_N && small_steps >= res.planned_N) break;
    if (small_steps >= opt.max_small_steps) break;
    Certificate next = iterate_step(sys, res.chart, c, opt);
    res.certificates.push_back(next);
    res.delta_trace.push_back({next.level, next.delta});
    ++small_steps;
    const bool improved = next.delta < res.delta_trace[best].second;
    if (improved) best = static_cast<int>(res.delta_trace.size()) - 1;
    if (next.delta == 0) {
      c = next;
      break;
    }
    if (mode == RefineMode::adaptive && next.delta > opt.adaptive_ratio * c.delta) {
      c = next;
      break;
    }
    c = next;
  }

  res.argmin_level = res.delta_trace[best].first;
  if (mode == RefineMode::adaptive) res.chart = res.chart.prefix(res.argmin_level);
  return res;
}

struct ErrorFieldSample {
  Eigen::VectorXd rho;
  double w_norm = 0;
  double ratio = 0;  // ||rho_N(w)|| / ||W_N(w,0)||, 0 when the slow field vanishes
};

inline ErrorFieldSample error_field(const Chart& chart, const GeneralSystem& sys,
                                    const Eigen::VectorXd& w) {
  NormalFormView view(sys, chart, chart.levels());
  ErrorFieldSample s;
  s.rho = view.rho_at<double>(w);
  const Eigen::VectorXd z0 = Eigen::VectorXd::Zero(sys.d_z);
  s.w_norm = view.W_at<double>(w, z0).norm();
  s.ratio = s.w_norm > 0 ? s.rho.norm() / s.w_norm : 0.0;
  return s;
}

}  // namespace mfold
