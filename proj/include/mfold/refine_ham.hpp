#pragma once

// Symplectic refinement for Hamiltonian slow-fast systems.  Each layer stores
// the solved graph zeta = (zeta_x, zeta_y) as Chebyshev interpolants over the
// slow box; the layer's canonical transform is generated by
//   G = <x, y+> + (1/eps) <u, v+> + g,
//   g(u, v+, x, y+) = -<zeta_x(u,v+), y+> + <zeta_y(u,v+), x>,
// giving the implicit equations
//   x+ = x - zeta_x(u,v+),  y = y+ + zeta_y(u,v+),
//   u+ = u + eps dg/dv+,    v = v+ + eps dg/du.
// The level-n Hamiltonian is evaluated by composing the stored transforms and
// the original H with jet arguments; the implicit inner solve runs directly in
// jet arithmetic, so derivative extraction needs no separate machinery.

#include <Eigen/Dense>

#include <array>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <vector>

#include "norms.hpp"
#include "refine_general.hpp"
#include "sysmodel.hpp"

namespace mfold {

struct StepTooLarge : std::runtime_error {
  explicit StepTooLarge(const std::string& what) : std::runtime_error(what) {}
};
struct Inapplicable : std::runtime_error {
  explicit Inapplicable(const std::string& what) : std::runtime_error(what) {}
};

struct HamLayer {
  int d_W = 0, d_Z = 0;
  double eps = 0;
  std::vector<ChebInterp> zx, zy;                 // graph components over the slow box
  std::vector<std::vector<ChebInterp>> dzx, dzy;  // [i][a], a < 2 d_W

  static HamLayer from_components(int d_W, int d_Z, double eps, std::vector<ChebInterp> x_comps,
                                  std::vector<ChebInterp> y_comps) {
    HamLayer L;
    L.d_W = d_W;
    L.d_Z = d_Z;
    L.eps = eps;
    L.zx = std::move(x_comps);
    L.zy = std::move(y_comps);
    L.dzx.resize(d_Z);
    L.dzy.resize(d_Z);
    for (int i = 0; i < d_Z; ++i)
      for (int a = 0; a < 2 * d_W; ++a) {
        L.dzx[i].push_back(L.zx[i].derivative(a));
        L.dzy[i].push_back(L.zy[i].derivative(a));
      }
    return L;
  }
};

template <class S>
struct HamPoint {
  JetVec<S> u, v, x, y;
};

template <class S>
double jet_dist(const Jet<S>& a, const Jet<S>& b) {
  double d = 0;
  auto acc = [&d](double t) {
    if (std::isnan(t)) t = std::numeric_limits<double>::infinity();
    d = std::max(d, t);
  };
  acc(abs_val<S>(a.value() - b.value()));
  if (a.order() >= 1)
    for (int i = 0; i < a.dim(); ++i) acc(abs_val<S>(a.grad()(i) - b.grad()(i)));
  if (a.order() >= 2)
    for (int i = 0; i < a.hess().size(); ++i)
      acc(abs_val<S>(a.hess().data()[i] - b.hess().data()[i]));
  if (a.order() >= 3)
    for (size_t i = 0; i < a.third_flat().size(); ++i)
      acc(abs_val<S>(a.third_flat()[i] - b.third_flat()[i]));
  return d;
}

template <class S>
JetVec<S> concat_jets(const JetVec<S>& a, const JetVec<S>& b) {
  JetVec<S> out = a;
  out.insert(out.end(), b.begin(), b.end());
  return out;
}

namespace detail {

// dg/dv+ (axis offset d_W) or dg/du (axis offset 0) at (u, v+), with the
// independent arguments x and y+ supplied.
template <class S>
JetVec<S> g_partial(const HamLayer& L, const JetVec<S>& wv, const JetVec<S>& x,
                    const JetVec<S>& yp, int axis_offset) {
  const int q = wv[0].order(), n = wv[0].dim();
  JetVec<S> out(L.d_W, Jet<S>(q, n));
  for (int a = 0; a < L.d_W; ++a)
    for (int i = 0; i < L.d_Z; ++i)
      out[a] = out[a] - L.dzx[i][axis_offset + a].eval_jet(wv) * yp[i] +
               L.dzy[i][axis_offset + a].eval_jet(wv) * x[i];
  return out;
}

}  // namespace detail

// New -> old coordinates through one layer.  The inner unknown is u; the fixed
// point contracts at rate O(eps); after 20 stalled iterations a damped Newton
// on the values is attempted before giving up.
template <class S>
HamPoint<S> ham_forward(const HamLayer& L, const HamPoint<S>& p, double tol = 1e-14,
                        int max_iter = 60) {
  const int dW = L.d_W, dZ = L.d_Z;
  const int q = p.u[0].order(), n = p.u[0].dim();
  JetVec<S> u = p.u;
  bool converged = false;
  auto sweep = [&](const JetVec<S>& ucur) {
    JetVec<S> wv = concat_jets(ucur, p.v);
    JetVec<S> x(dZ, Jet<S>(q, n));
    for (int i = 0; i < dZ; ++i) x[i] = p.x[i] + L.zx[i].eval_jet(wv);
    JetVec<S> dgdv = detail::g_partial(L, wv, x, p.y, dW);
    JetVec<S> unew(dW, Jet<S>(q, n));
    for (int a = 0; a < dW; ++a) unew[a] = p.u[a] - dgdv[a] * L.eps;
    return unew;
  };
  for (int it = 0; it < max_iter; ++it) {
    JetVec<S> unew = sweep(u);
    double d = 0;
    for (int a = 0; a < dW; ++a) d = std::max(d, jet_dist(unew[a], u[a]));
    u = std::move(unew);
    if (d < tol) {
      converged = true;
      break;
    }
    if (it == 20) {
      // Newton on the values: F(u) = u - sweep_value(u)
      VecS<S> uv(dW);
      for (int a = 0; a < dW; ++a) uv(a) = u[a].value();
      for (int nw = 0; nw < 30; ++nw) {
        auto value_map = [&](const VecS<S>& q0) {
          JetVec<S> uj(dW, Jet<S>(0, 0));
          for (int a = 0; a < dW; ++a) uj[a] = Jet<S>::constant(q0(a), 0, 0);
          JetVec<S> wv(2 * dW, Jet<S>(0, 0));
          for (int a = 0; a < dW; ++a) wv[a] = uj[a];
          for (int a = 0; a < dW; ++a) wv[dW + a] = Jet<S>::constant(p.v[a].value(), 0, 0);
          JetVec<S> x(dZ, Jet<S>(0, 0)), yp(dZ, Jet<S>(0, 0));
          for (int i = 0; i < dZ; ++i) {
            x[i] = Jet<S>::constant(p.x[i].value(), 0, 0) + L.zx[i].eval_jet(wv);
            yp[i] = Jet<S>::constant(p.y[i].value(), 0, 0);
          }
          JetVec<S> dgdv = detail::g_partial(L, wv, x, yp, dW);
          VecS<S> F(dW);
          for (int a = 0; a < dW; ++a) F(a) = q0(a) - (p.u[a].value() - S(L.eps) * dgdv[a].value());
          return F;
        };
        const VecS<S> F0 = value_map(uv);
        double fn = 0;
        for (int a = 0; a < dW; ++a) fn = std::max(fn, abs_val<S>(F0(a)));
        if (fn < tol) break;
        MatS<S> J(dW, dW);
        const double h = 1e-7;
        for (int a = 0; a < dW; ++a) {
          VecS<S> up = uv;
          up(a) += S(h);
          J.col(a) = (value_map(up) - F0) / S(h);
        }
        uv -= J.partialPivLu().solve(F0);
      }
      for (int a = 0; a < dW; ++a) u[a].value() = uv(a);
    }
  }
  if (!converged) throw StepTooLarge("inner slow solve of the generating step did not converge");

  HamPoint<S> out;
  JetVec<S> wv = concat_jets(u, p.v);
  out.u = u;
  out.x.assign(dZ, Jet<S>(q, n));
  out.y.assign(dZ, Jet<S>(q, n));
  for (int i = 0; i < dZ; ++i) {
    out.x[i] = p.x[i] + L.zx[i].eval_jet(wv);
    out.y[i] = p.y[i] + L.zy[i].eval_jet(wv);
  }
  JetVec<S> dgdu = detail::g_partial(L, wv, out.x, p.y, 0);
  out.v.assign(dW, Jet<S>(q, n));
  for (int a = 0; a < dW; ++a) out.v[a] = p.v[a] + dgdu[a] * L.eps;
  return out;
}

// Old -> new coordinates through one layer; the inner unknown is v+.
template <class S>
HamPoint<S> ham_inverse(const HamLayer& L, const HamPoint<S>& p, double tol = 1e-14,
                        int max_iter = 60) {
  const int dW = L.d_W, dZ = L.d_Z;
  const int q = p.u[0].order(), n = p.u[0].dim();
  JetVec<S> vp = p.v;
  bool converged = false;
  for (int it = 0; it < max_iter; ++it) {
    JetVec<S> wv = concat_jets(p.u, vp);
    JetVec<S> yp(dZ, Jet<S>(q, n));
    for (int i = 0; i < dZ; ++i) yp[i] = p.y[i] - L.zy[i].eval_jet(wv);
    JetVec<S> dgdu = detail::g_partial(L, wv, p.x, yp, 0);
    JetVec<S> vnew(dW, Jet<S>(q, n));
    double d = 0;
    for (int a = 0; a < dW; ++a) {
      vnew[a] = p.v[a] - dgdu[a] * L.eps;
      d = std::max(d, jet_dist(vnew[a], vp[a]));
    }
    vp = std::move(vnew);
    if (d < tol) {
      converged = true;
      break;
    }
  }
  if (!converged) throw StepTooLarge("inner inverse solve of the generating step did not converge");
  HamPoint<S> out;
  JetVec<S> wv = concat_jets(p.u, vp);
  out.v = vp;
  out.x.assign(dZ, Jet<S>(q, n));
  out.y.assign(dZ, Jet<S>(q, n));
  for (int i = 0; i < dZ; ++i) {
    out.x[i] = p.x[i] - L.zx[i].eval_jet(wv);
    out.y[i] = p.y[i] - L.zy[i].eval_jet(wv);
  }
  JetVec<S> dgdv = detail::g_partial(L, wv, p.x, out.y, dW);
  out.u.assign(dW, Jet<S>(q, n));
  for (int a = 0; a < dW; ++a) out.u[a] = p.u[a] + dgdv[a] * L.eps;
  return out;
}

// Convenience: transform plain coordinate vectors (order-0 jets).
template <class S>
HamPoint<S> ham_point(const VecS<S>& w, const VecS<S>& z, int d_W, int d_Z, int order = 0,
                      bool seed_z = false, bool seed_w = false) {
  const int dim = (seed_z ? 2 * d_Z : 0) + (seed_w ? 2 * d_W : 0);
  HamPoint<S> p;
  int zi0 = seed_w ? 2 * d_W : 0;
  auto wjet = [&](int a) {
    return seed_w ? Jet<S>::variable(w(a), a, order, dim) : Jet<S>::constant(w(a), order, dim);
  };
  auto zjet = [&](int i) {
    return seed_z ? Jet<S>::variable(z(i), zi0 + i, order, dim)
                  : Jet<S>::constant(z(i), order, dim);
  };
  for (int a = 0; a < d_W; ++a) p.u.push_back(wjet(a));
  for (int a = 0; a < d_W; ++a) p.v.push_back(wjet(d_W + a));
  for (int i = 0; i < d_Z; ++i) p.x.push_back(zjet(i));
  for (int i = 0; i < d_Z; ++i) p.y.push_back(zjet(d_Z + i));
  return p;
}

template <class S>
VecS<S> ham_point_w(const HamPoint<S>& p) {
  VecS<S> w(p.u.size() + p.v.size());
  for (size_t a = 0; a < p.u.size(); ++a) w(a) = p.u[a].value();
  for (size_t a = 0; a < p.v.size(); ++a) w(p.u.size() + a) = p.v[a].value();
  return w;
}
template <class S>
VecS<S> ham_point_z(const HamPoint<S>& p) {
  VecS<S> z(p.x.size() + p.y.size());
  for (size_t i = 0; i < p.x.size(); ++i) z(i) = p.x[i].value();
  for (size_t i = 0; i < p.y.size(); ++i) z(p.x.size() + i) = p.y[i].value();
  return z;
}

// Compose the stored transforms (level n -> original) and evaluate H.
template <class S>
HamPoint<S> ham_compose(const std::vector<HamLayer>& layers, HamPoint<S> p, double tol = 1e-14) {
  for (auto it = layers.rbegin(); it != layers.rend(); ++it) p = ham_forward(*it, p, tol);
  return p;
}

template <class S>
HamPoint<S> ham_compose_inverse(const std::vector<HamLayer>& layers, HamPoint<S> p,
                                double tol = 1e-14) {
  for (const auto& L : layers) p = ham_inverse(L, p, tol);
  return p;
}

template <class S>
Jet<S> ham_level_jet(const HamiltonianSystem& ham, const std::vector<HamLayer>& layers,
                     HamPoint<S> p, double tol = 1e-14) {
  p = ham_compose(layers, std::move(p), tol);
  JetVec<S> arg = concat_jets(concat_jets(p.u, p.v), concat_jets(p.x, p.y));
  return ham.template H<S>()(arg);
}

// Jet of H_n(w, .) in the fast variables at the point z, for fixed w.
template <class S>
Jet<S> ham_z_jet(const HamiltonianSystem& ham, const std::vector<HamLayer>& layers,
                 const VecS<S>& w, const VecS<S>& z, int order, double tol = 1e-14) {
  HamPoint<S> p = ham_point<S>(w, z, ham.d_W, ham.d_Z, order, /*seed_z=*/true);
  return ham_level_jet(ham, layers, std::move(p), tol);
}

template <class S>
VecS<S> ham_rho(const HamiltonianSystem& ham, const std::vector<HamLayer>& layers,
                const VecS<S>& w, double tol = 1e-14) {
  const VecS<S> z0 = VecS<S>::Zero(2 * ham.d_Z);
  return ham_z_jet(ham, layers, w, z0, 1, tol).grad();
}

template <class S>
MatS<S> ham_A(const HamiltonianSystem& ham, const std::vector<HamLayer>& layers, const VecS<S>& w,
              double tol = 1e-14) {
  const VecS<S> z0 = VecS<S>::Zero(2 * ham.d_Z);
  MatS<S> A = ham_z_jet(ham, layers, w, z0, 2, tol).hess();
  return ((A + A.transpose()) / S(2)).eval();
}

struct HamNormalForm {
  int level = 0;
  Eigen::VectorXd w;
  double h = 0;
  Eigen::VectorXd rho;
  Eigen::MatrixXd A;
  std::function<double(const Eigen::VectorXd&)> Hn;  // z -> H_n(w, z)

  double r_at(const Eigen::VectorXd& z) const {
    return Hn(z) - h - rho.dot(z) - 0.5 * z.dot(A * z);
  }
};

inline HamNormalForm extract_normal_form(const HamiltonianSystem& ham,
                                         const std::vector<HamLayer>& layers,
                                         const Eigen::VectorXd& w_plus, double tol = 1e-14) {
  HamNormalForm nf;
  nf.level = static_cast<int>(layers.size());
  nf.w = w_plus;
  const Eigen::VectorXd z0 = Eigen::VectorXd::Zero(2 * ham.d_Z);
  Jet<double> j = ham_z_jet<double>(ham, layers, w_plus, z0, 2, tol);
  nf.h = j.value();
  nf.rho = j.grad();
  nf.A = 0.5 * (j.hess() + j.hess().transpose());
  std::vector<HamLayer> stack = layers;
  HamiltonianSystem sys = ham;
  nf.Hn = [sys, stack, w_plus, tol](const Eigen::VectorXd& z) {
    return ham_z_jet<double>(sys, stack, w_plus, z, 0, tol).value();
  };
  return nf;
}

struct HamSolveResult {
  Eigen::VectorXd zeta;    // (zeta_x, zeta_y) stacked
  Eigen::MatrixXd dzeta;   // slow Jacobian, 2 d_Z x 2 d_W
  int iterations = 0;
  double residual = 0;
  double contraction_est = 0;
};

// Contraction solve of grad_z H_n(w, zeta) = 0 at one slow point.
inline HamSolveResult solve_constrained_equilibria(const HamiltonianSystem& ham,
                                                   const std::vector<HamLayer>& layers,
                                                   const Eigen::VectorXd& w, double tol = 0) {
  const int dz = 2 * ham.d_Z;
  const Eigen::VectorXd z0 = Eigen::VectorXd::Zero(dz);
  Jet<double> j0 = ham_z_jet<double>(ham, layers, w, z0, 2);
  const Eigen::VectorXd rho = j0.grad();
  const Eigen::MatrixXd A = 0.5 * (j0.hess() + j0.hess().transpose());
  inv_op_norm(A);
  Eigen::PartialPivLU<Eigen::MatrixXd> lu(A);
  if (tol <= 0) tol = 1e-13 * std::max(1.0, rho.norm());

  HamSolveResult out;
  const Eigen::VectorXd zeta0 = -lu.solve(rho);
  Eigen::VectorXd z = Eigen::VectorXd::Zero(dz), zeta = zeta0;
  double prev_step = -1;
  for (int it = 0; it < 200; ++it) {
    const Eigen::VectorXd grad = ham_z_jet<double>(ham, layers, w, zeta, 1).grad();
    const Eigen::VectorXd Rv = grad - rho - A * zeta;
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
  out.zeta = zeta;
  out.residual = ham_z_jet<double>(ham, layers, w, zeta, 1).grad().norm();

  // implicit slow derivative: dzeta/dw = -(H_zz)^{-1} H_zw at (w, zeta)
  {
    HamPoint<double> p = ham_point<double>(w, zeta, ham.d_W, ham.d_Z, 2, /*seed_z=*/true,
                                           /*seed_w=*/true);
    Jet<double> jf = ham_level_jet(ham, layers, std::move(p));
    const int dw = 2 * ham.d_W;
    const Eigen::MatrixXd H2 = 0.5 * (jf.hess() + jf.hess().transpose());
    const Eigen::MatrixXd Hzz = H2.block(dw, dw, dz, dz);
    const Eigen::MatrixXd Hzw = H2.block(dw, 0, dz, dw);
    out.dzeta = -Hzz.partialPivLu().solve(Hzw);
  }
  return out;
}

struct HamCertificate {
  int level = 0;
  double delta = 0;  // sup ||grad_z H_n(w,0)||
  double K = 0;      // 2 sup ||A_n^{-1}||
  double C_r = 0;    // sup |r_n| on the joint neighborhood
  double C_D = 0;    // sup ||y|| + sup ||x|| over the fast neighborhood
  double nu = 0, sigma = 0, xi = 0, kappa = 0;
  double c_gain = 0;  // measured schedule constant c_delta
  double ratio = 0;
  bool xi_ok = true, g_ok = true, delta_ok = true;
  bool hypothesis_ok = true;
};

struct HamRefineOptions {
  SamplingOptions sampling{256, 64, kDefaultSeed};
  int cheb_degree = 12;
  double adaptive_ratio = 0.9;
  int max_small_steps = 32;
  double solve_tol = 1e-14;
};

inline double ham_C_D(const HamiltonianSystem& ham, double sigma) {
  auto half_sup = [&](int offset) {
    double s = 0;
    for (int i = 0; i < ham.d_Z; ++i) {
      const double m = std::max(std::abs(ham.Z_box.lo(offset + i)),
                                std::abs(ham.Z_box.hi(offset + i)));
      s += m * m + sigma * sigma;
    }
    return std::sqrt(s);
  };
  return half_sup(0) + half_sup(ham.d_Z);
}

inline HamCertificate ham_measure_level(const HamiltonianSystem& ham,
                                        const std::vector<HamLayer>& layers, double nu,
                                        double sigma, const SamplingOptions& so,
                                        double tol = 1e-14) {
  HamCertificate c;
  c.level = static_cast<int>(layers.size());
  c.nu = nu;
  c.sigma = sigma;
  c.delta = sup_norm(
      [&](const Eigen::VectorXcd& w) { return cnorm(Eigen::VectorXcd(ham_rho<cxd>(ham, layers, w, tol))); },
      ham.W_box, nu, so.delta_samples, so.seed);
  c.K = 2.0 * sup_norm(
                  [&](const Eigen::VectorXcd& w) {
                    return inv_op_norm(Eigen::MatrixXcd(ham_A<cxd>(ham, layers, w, tol)));
                  },
                  ham.W_box, nu, so.mat_samples, so.seed + 1);
  const Box joint = join_boxes(ham.W_box, ham.Z_box);
  const Eigen::VectorXd widths = block_widths(2 * ham.d_W, nu, 2 * ham.d_Z, sigma);
  c.C_r = sup_norm(
      [&](const Eigen::VectorXcd& p) {
        const Eigen::VectorXcd w = p.head(2 * ham.d_W);
        const Eigen::VectorXcd z = p.tail(2 * ham.d_Z);
        Jet<cxd> j = ham_z_jet<cxd>(ham, layers, w, Eigen::VectorXcd(Eigen::VectorXcd::Zero(2 * ham.d_Z)), 2, tol);
        const cxd quad = j.value() + (j.grad().transpose() * z)(0, 0) +
                         cxd(0.5) * (z.transpose() * j.hess() * z)(0, 0);
        const cxd full = ham_z_jet<cxd>(ham, layers, w, z, 0, tol).value();
        return std::abs(full - quad);
      },
      joint, widths, so.mat_samples, so.seed + 2);
  c.C_D = ham_C_D(ham, sigma);
  return c;
}

inline void ham_gate_step(HamCertificate& c, double xi, double eps) {
  c.xi = xi;
  c.xi_ok = xi >= 2.0 * c.K * c.delta;
  c.g_ok = c.K * c.C_D * c.delta <= xi * xi / 8.0;
  c.kappa = std::min(c.kappa > 0 ? c.kappa : c.sigma, c.sigma - xi);
  c.delta_ok = c.C_r == 0 ||
               c.delta <= c.kappa * c.kappa * c.kappa / (3.0 * c.K * c.K * c.C_r);
  c.hypothesis_ok = c.xi_ok && c.g_ok && c.delta_ok && c.kappa > 0;
}

inline HamLayer ham_build_layer(const HamiltonianSystem& ham, const std::vector<HamLayer>& layers,
                                int degree) {
  std::vector<int> deg(ham.W_box.dim(), degree);
  const auto grid = ChebInterp::nodes(ham.W_box, deg);
  std::vector<std::vector<double>> xv(ham.d_Z, std::vector<double>(grid.size()));
  std::vector<std::vector<double>> yv(ham.d_Z, std::vector<double>(grid.size()));
  for (size_t k = 0; k < grid.size(); ++k) {
    const auto r = solve_constrained_equilibria(ham, layers, grid[k]);
    for (int i = 0; i < ham.d_Z; ++i) {
      xv[i][k] = r.zeta(i);
      yv[i][k] = r.zeta(ham.d_Z + i);
    }
  }
  std::vector<ChebInterp> xc, yc;
  for (int i = 0; i < ham.d_Z; ++i) {
    xc.push_back(ChebInterp::from_values(ham.W_box, deg, std::move(xv[i])));
    yc.push_back(ChebInterp::from_values(ham.W_box, deg, std::move(yv[i])));
  }
  return HamLayer::from_components(ham.d_W, ham.d_Z, ham.eps, std::move(xc), std::move(yc));
}

struct HamRefineResult {
  std::vector<HamLayer> layers;
  std::vector<HamCertificate> certificates;
  std::vector<std::pair<int, double>> delta_trace;
  int argmin_level = 0;
  bool halted_on_hypothesis = false;
  double m_width = 0;
};

inline HamRefineResult refine_ham(const HamiltonianSystem& ham, double nu_floor,
                                  double sigma_floor, double xi0,
                                  const HamRefineOptions& opt = {}) {
  ham.check();
  if (!(nu_floor > 0 && sigma_floor > 0))
    throw std::invalid_argument("width floors must be positive");
  if (!(nu_floor < ham.nu0 - xi0 && sigma_floor < ham.sigma0 - xi0))
    throw std::invalid_argument("xi0 leaves no room above the width floors");
  HamRefineResult res;
  HamCertificate c = ham_measure_level(ham, {}, ham.nu0, ham.sigma0, opt.sampling, opt.solve_tol);
  ham_gate_step(c, xi0, ham.eps);
  res.certificates.push_back(c);
  res.delta_trace.push_back({0, c.delta});
  if (c.delta == 0) return res;
  if (!c.hypothesis_ok) {
    res.halted_on_hypothesis = true;
    return res;
  }

  double c_run = 0;    // running max of the measured schedule constants
  double C_delta = 0;  // delta_1 / eps^2
  int small_steps = 0;
  int best = 0;
  while (true) {
    res.layers.push_back(ham_build_layer(ham, res.layers, opt.cheb_degree));
    HamCertificate next = ham_measure_level(ham, res.layers, c.nu - c.xi, c.sigma - c.xi,
                                            opt.sampling, opt.solve_tol);
    next.kappa = c.kappa;
    next.ratio = c.delta > 0 ? next.delta / c.delta : 0;
    const double gain = c.delta > 0 ? next.delta * c.xi / (ham.eps * c.delta) : 0;
    next.c_gain = gain;
    c_run = std::max(c_run, gain);
    if (next.level == 1) {
      C_delta = next.delta / (ham.eps * ham.eps);
      res.m_width = std::min(next.nu - nu_floor, next.sigma - sigma_floor);
    }
    double xi_next = 2.0 * ham.eps * std::max(c_run, next.K);
    if (next.level == 1 && C_delta > 0)
      xi_next = std::max(xi_next, 2.0 * ham.eps * std::sqrt(2.0 * next.K * next.C_D * C_delta));
    ham_gate_step(next, xi_next, ham.eps);
    res.certificates.push_back(next);
    res.delta_trace.push_back({next.level, next.delta});
    if (res.delta_trace.back().second < res.delta_trace[best].second)
      best = static_cast<int>(res.delta_trace.size()) - 1;

    const bool stalled = next.level > 1 && next.delta > opt.adaptive_ratio * c.delta;
    c = next;
    if (next.delta == 0 || stalled) break;
    if (!next.hypothesis_ok) {
      res.halted_on_hypothesis = true;
      break;
    }
    if (next.nu - next.xi <= nu_floor || next.sigma - next.xi <= sigma_floor) break;
    if (++small_steps >= opt.max_small_steps) break;
  }

  res.argmin_level = res.delta_trace[best].first;
  res.layers.resize(res.argmin_level);
  return res;
}

struct PinnedReport {
  std::vector<double> per_level;  // ||rho_k|| at the equilibrium, k = 0..n
  double max_violation = 0;
};

inline PinnedReport check_equilibrium_pinned(const HamiltonianSystem& ham,
                                             const std::vector<HamLayer>& layers,
                                             const Eigen::VectorXd& w_e) {
  PinnedReport rep;
  for (size_t k = 0; k <= layers.size(); ++k) {
    std::vector<HamLayer> prefix(layers.begin(), layers.begin() + k);
    const double v = ham_rho<double>(ham, prefix, w_e).norm();
    rep.per_level.push_back(v);
    rep.max_violation = std::max(rep.max_violation, v);
  }
  return rep;
}

struct LyapunovReport {
  double sup_z = 0, sup_L = 0;
  double lambda_min = 0, lambda_max = 0;  // spectrum of A at the base point
  std::vector<std::array<double, 3>> samples;  // (t, ||z(t)||, L(t))
};

// Integrates the original Hamiltonian flow from the image of (w0, 0) on the
// refined graph and measures the fast displacement in refined coordinates at
// the recorded times.  The flow and the refined chart are exactly conjugate,
// so integrating in original coordinates loses nothing and costs far less
// than stepping through the transform stack.
inline LyapunovReport lyapunov_monitor(const HamiltonianSystem& ham,
                                       const std::vector<HamLayer>& layers,
                                       const Eigen::VectorXd& w0, double horizon,
                                       int n_samples = 160, double dt_scale = 50.0) {
  LyapunovReport rep;
  HamNormalForm nf = extract_normal_form(ham, layers, w0);
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(nf.A);
  rep.lambda_min = es.eigenvalues().minCoeff();
  rep.lambda_max = es.eigenvalues().maxCoeff();
  if (rep.lambda_min <= 1e-10)
    throw Inapplicable("fast linearization is not positive definite at the base point");

  const int dW = ham.d_W, dZ = ham.d_Z, dim = 2 * dW + 2 * dZ;
  HamPoint<double> p0 = ham_point<double>(w0, Eigen::VectorXd::Zero(2 * dZ), dW, dZ);
  p0 = ham_compose(layers, std::move(p0));
  Eigen::VectorXd s(dim);
  s << ham_point_w(p0), ham_point_z(p0);

  auto field = [&](const Eigen::VectorXd& q) {
    JetVec<double> arg;
    for (int i = 0; i < dim; ++i) arg.push_back(Jet<double>::variable(q(i), i, 1, dim));
    const Eigen::VectorXd g = ham.H_r(arg).grad();
    Eigen::VectorXd f(dim);
    for (int a = 0; a < dW; ++a) {
      f(a) = ham.eps * g(dW + a);            // du/dt =  eps dH/dv
      f(dW + a) = -ham.eps * g(a);           // dv/dt = -eps dH/du
    }
    for (int i = 0; i < dZ; ++i) {
      f(2 * dW + i) = g(2 * dW + dZ + i);    // dx/dt =  dH/dy
      f(2 * dW + dZ + i) = -g(2 * dW + i);   // dy/dt = -dH/dx
    }
    return f;
  };

  const double dt = ham.eps / dt_scale;
  const long steps = std::max(1L, static_cast<long>(std::ceil(horizon / dt)));
  const long stride = std::max(1L, steps / n_samples);
  for (long k = 0; k <= steps; ++k) {
    if (k % stride == 0 || k == steps) {
      Eigen::VectorXd w_cur = s.head(2 * dW), z_cur = s.tail(2 * dZ);
      HamPoint<double> p = ham_point<double>(w_cur, z_cur, dW, dZ);
      p = ham_compose_inverse(layers, std::move(p));
      const Eigen::VectorXd zbar = ham_point_z(p);
      const Eigen::VectorXd wbar = ham_point_w(p);
      Jet<double> j = ham_z_jet<double>(ham, layers, wbar, Eigen::VectorXd(Eigen::VectorXd::Zero(2 * dZ)), 2);
      const Eigen::MatrixXd Az = 0.5 * (j.hess() + j.hess().transpose());
      const double quad = 0.5 * zbar.dot(Az * zbar);
      const double r = ham_z_jet<double>(ham, layers, wbar, zbar, 0).value() - j.value() -
                       j.grad().dot(zbar) - quad;
      const double L = quad + r;
      const double t = k * dt;
      rep.sup_z = std::max(rep.sup_z, zbar.norm());
      rep.sup_L = std::max(rep.sup_L, std::abs(L));
      rep.samples.push_back({t, zbar.norm(), L});
    }
    if (k == steps) break;
    const Eigen::VectorXd k1 = field(s);
    const Eigen::VectorXd k2 = field(s + 0.5 * dt * k1);
    const Eigen::VectorXd k3 = field(s + 0.5 * dt * k2);
    const Eigen::VectorXd k4 = field(s + dt * k3);
    s += (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
  }
  return rep;
}

// Omega matrix of dx wedge dy + (1/eps) du wedge dv in (u, v, x, y) order.
inline Eigen::MatrixXd ham_omega(int d_W, int d_Z, double eps) {
  const int dim = 2 * d_W + 2 * d_Z;
  Eigen::MatrixXd O = Eigen::MatrixXd::Zero(dim, dim);
  for (int a = 0; a < d_W; ++a) {
    O(a, d_W + a) = 1.0 / eps;
    O(d_W + a, a) = -1.0 / eps;
  }
  for (int i = 0; i < d_Z; ++i) {
    O(2 * d_W + i, 2 * d_W + d_Z + i) = 1.0;
    O(2 * d_W + d_Z + i, 2 * d_W + i) = -1.0;
  }
  return O;
}

// Finite-difference Jacobian of one generating step and its symplectic defect.
inline double symplectic_defect(const HamLayer& L, const Eigen::VectorXd& w_plus,
                                const Eigen::VectorXd& z_plus, double h = 1e-5) {
  const int dW = L.d_W, dZ = L.d_Z, dim = 2 * dW + 2 * dZ;
  auto apply = [&](const Eigen::VectorXd& q) {
    HamPoint<double> p = ham_point<double>(q.head(2 * dW), q.tail(2 * dZ), dW, dZ);
    p = ham_forward(L, p, 1e-15);
    Eigen::VectorXd out(dim);
    out << ham_point_w(p), ham_point_z(p);
    return out;
  };
  Eigen::VectorXd q0(dim);
  q0 << w_plus, z_plus;
  Eigen::MatrixXd D(dim, dim);
  for (int i = 0; i < dim; ++i) {
    Eigen::VectorXd qp = q0, qm = q0;
    qp(i) += h;
    qm(i) -= h;
    D.col(i) = (apply(qp) - apply(qm)) / (2.0 * h);
  }
  const Eigen::MatrixXd O = ham_omega(dW, dZ, L.eps);
  return (D.transpose() * O * D - O).cwiseAbs().maxCoeff();
}

// Spec-level single-step application on plain coordinates.
inline std::pair<Eigen::VectorXd, Eigen::VectorXd> apply_generating_step(
    const HamLayer& L, const Eigen::VectorXd& w_plus, const Eigen::VectorXd& z_plus,
    double tol = 1e-14) {
  HamPoint<double> p = ham_point<double>(w_plus, z_plus, L.d_W, L.d_Z);
  p = ham_forward(L, p, tol);
  return {ham_point_w(p), ham_point_z(p)};
}

}  // namespace mfold
