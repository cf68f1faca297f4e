#pragma once

// Slow-fast system representation and the cumulative chart of refinement
// layers.  A system supplies jet-evaluable fields over both real and complex
// scalars; a chart is a stack of layers, each a Chebyshev interpolant of one
// graph correction zeta_k on the slow box.  The level-n normal form is
// evaluated directly from the cumulative shift:
//   Z_n(w,z) = Z(w, zeta_*(w)+z) - eps * D zeta_*(w) * W(w, zeta_*(w)+z)
//   W_n(w,z) = W(w, zeta_*(w)+z)
// so any level costs one pass over the stored interpolants.

#include <Eigen/Dense>

#include <cstdio>
#include <functional>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

#include "box.hpp"
#include "cheb.hpp"
#include "jet.hpp"
#include "norms.hpp"

namespace mfold {

template <class S>
using JetMap = std::function<JetVec<S>(const JetVec<S>&)>;  // argument: (w, z) concatenated
template <class S>
using JetFun = std::function<Jet<S>(const JetVec<S>&)>;

struct GeneralSystem {
  std::string name;
  int d_w = 0, d_z = 0;
  double eps = 0;           // after slow-field normalization
  double eps_original = 0;  // as supplied by the builder
  double w_scale = 1;       // sampled sup of the raw slow field, >= 1
  JetMap<double> W_r, Z_r;  // raw fields; evaluation divides W by w_scale
  JetMap<cxd> W_c, Z_c;
  Box V;      // slow box
  Box S_box;  // fast box, contains 0
  double nu0 = 0, sigma0 = 0;
  Eigen::VectorXd slow_equilibrium;  // size 0 when none is designated

  template <class S>
  const JetMap<S>& W_field() const {
    if constexpr (is_complex_scalar<S>::value)
      return W_c;
    else
      return W_r;
  }
  template <class S>
  const JetMap<S>& Z_field() const {
    if constexpr (is_complex_scalar<S>::value)
      return Z_c;
    else
      return Z_r;
  }

  void check() const {
    if (d_w < 1 || d_z < 1) throw std::invalid_argument("system dimensions must be positive");
    if (!(eps_original > 0)) throw std::invalid_argument("eps must be positive");
    if (!(nu0 > 0 && sigma0 > 0)) throw std::invalid_argument("analyticity widths must be positive");
    if (V.dim() != d_w || S_box.dim() != d_z) throw std::invalid_argument("domain dimension mismatch");
    Eigen::VectorXd zero = Eigen::VectorXd::Zero(d_z);
    if (!S_box.contains(zero)) throw std::invalid_argument("fast box must contain the origin");
  }
};

struct HamiltonianSystem {
  std::string name;
  int d_W = 0, d_Z = 0;  // symplectic pairs: slow (u,v) in R^{2 d_W}, fast (x,y) in R^{2 d_Z}
  double eps = 0;
  JetFun<double> H_r;  // argument (u, v, x, y) concatenated, order-3 capable
  JetFun<cxd> H_c;
  Box W_box;  // dim 2 d_W
  Box Z_box;  // dim 2 d_Z
  double nu0 = 0, sigma0 = 0;
  Eigen::VectorXd slow_equilibrium;  // slow coordinates of a pinned equilibrium, size 0 if none

  template <class S>
  const JetFun<S>& H() const {
    if constexpr (is_complex_scalar<S>::value)
      return H_c;
    else
      return H_r;
  }

  void check() const {
    if (d_W < 1 || d_Z < 1) throw std::invalid_argument("system dimensions must be positive");
    if (!(eps > 0)) throw std::invalid_argument("eps must be positive");
    if (W_box.dim() != 2 * d_W || Z_box.dim() != 2 * d_Z)
      throw std::invalid_argument("domain dimension mismatch");
  }
};

// One refinement layer: interpolants of the d_z graph components and of all
// their slow partial derivatives.
struct GeneralLayer {
  std::vector<ChebInterp> z;                // [i], i < d_z
  std::vector<std::vector<ChebInterp>> dz;  // [i][a], a < d_w

  static GeneralLayer from_components(std::vector<ChebInterp> comps) {
    GeneralLayer L;
    L.z = std::move(comps);
    L.dz.resize(L.z.size());
    for (size_t i = 0; i < L.z.size(); ++i) {
      const int d = L.z[i].domain().dim();
      for (int a = 0; a < d; ++a) L.dz[i].push_back(L.z[i].derivative(a));
    }
    return L;
  }
};

struct Chart {
  std::vector<GeneralLayer> layers;
  bool use_cache = true;
  mutable std::map<std::string, JetVec<double>> cache;

  int levels() const { return static_cast<int>(layers.size()); }
  Chart prefix(int n) const {
    Chart c;
    c.use_cache = use_cache;
    c.layers.assign(layers.begin(), layers.begin() + n);
    return c;
  }
};

// zeta_*(w) and its Jacobian, as jets of the evaluation arguments.
template <class S>
struct ChartJets {
  JetVec<S> zeta;                      // [i]
  std::vector<JetVec<S>> dzeta;        // [i][a]
};

template <class S>
ChartJets<S> chart_jets(const Chart& chart, const JetVec<S>& w, int d_z) {
  const int q = w.empty() ? 0 : w[0].order();
  const int n = w.empty() ? 0 : w[0].dim();
  const int d_w = static_cast<int>(w.size());
  ChartJets<S> out;
  out.zeta.assign(d_z, Jet<S>(q, n));
  out.dzeta.assign(d_z, JetVec<S>(d_w, Jet<S>(q, n)));
  for (const auto& layer : chart.layers) {
    if (static_cast<int>(layer.z.size()) != d_z)
      throw std::invalid_argument("chart/system fast dimension mismatch");
    for (int i = 0; i < d_z; ++i) {
      out.zeta[i] = out.zeta[i] + layer.z[i].eval_jet(w);
      for (int a = 0; a < d_w; ++a) out.dzeta[i][a] = out.dzeta[i][a] + layer.dz[i][a].eval_jet(w);
    }
  }
  return out;
}

// Public chart evaluation: jet of zeta_* with respect to w, order <= 2.
inline JetVec<double> chart_eval(const Chart& chart, const Eigen::VectorXd& w, int order) {
  if (order < 0 || order > 2) throw std::invalid_argument("chart_eval supports order 0..2");
  std::string key;
  if (chart.use_cache) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%d|", order);
    key = buf;
    for (int i = 0; i < w.size(); ++i) {
      std::snprintf(buf, sizeof buf, "%.12g,", w(i));
      key += buf;
    }
    auto it = chart.cache.find(key);
    if (it != chart.cache.end()) return it->second;
  }
  const int d_z = chart.layers.empty() ? 0 : static_cast<int>(chart.layers[0].z.size());
  JetVec<double> wj = seed_variable<double>(w, order);
  JetVec<double> out(d_z, Jet<double>(order, static_cast<int>(w.size())));
  for (const auto& layer : chart.layers)
    for (int i = 0; i < d_z; ++i) out[i] = out[i] + layer.z[i].eval_jet(wj);
  if (chart.use_cache) chart.cache[key] = out;
  return out;
}

// Level-n decomposition evaluators.
class NormalFormView {
 public:
  NormalFormView(const GeneralSystem& sys, const Chart& chart, int level)
      : sys_(&sys), level_(level) {
    if (level < 0 || level > chart.levels())
      throw std::invalid_argument("decompose: chart has fewer layers than requested level");
    chart_ = chart.prefix(level);
  }

  int level() const { return level_; }
  const GeneralSystem& system() const { return *sys_; }

  template <class S>
  JetVec<S> Wn(const JetVec<S>& w, const JetVec<S>& z) const {
    const auto cj = chart_jets(chart_, w, sys_->d_z);
    return Wn_with(cj, w, z);
  }

  template <class S>
  JetVec<S> Zn(const JetVec<S>& w, const JetVec<S>& z) const {
    const auto cj = chart_jets(chart_, w, sys_->d_z);
    JetVec<S> arg = make_arg(cj, w, z);
    JetVec<S> Zv = sys_->template Z_field<S>()(arg);
    JetVec<S> Wv = sys_->template W_field<S>()(arg);
    const double escaled = sys_->eps_original;  // eps * (W / w_scale) == eps_original * W
    for (int i = 0; i < sys_->d_z; ++i)
      for (int a = 0; a < sys_->d_w; ++a)
        Zv[i] = Zv[i] - cj.dzeta[i][a] * Wv[a] * escaled;
    return Zv;
  }

  // Point evaluations (order-0 jets, zero-dimensional seeds).
  template <class S>
  VecS<S> Z_at(const VecS<S>& w, const VecS<S>& z) const {
    return values_of(Zn(const_jets(w), const_jets(z)));
  }
  template <class S>
  VecS<S> W_at(const VecS<S>& w, const VecS<S>& z) const {
    JetVec<S> wj = const_jets(w), zj = const_jets(z);
    return values_of(Wn(wj, zj));
  }
  template <class S>
  VecS<S> rho_at(const VecS<S>& w) const {
    const VecS<S> z0 = VecS<S>::Zero(sys_->d_z);
    return Z_at(w, z0);
  }
  // A_n(w) = d/dz Z_n(w, 0)
  template <class S>
  MatS<S> A_at(const VecS<S>& w) const {
    JetVec<S> wj = const_jets_dim(w, 1, sys_->d_z);
    JetVec<S> zj;
    for (int i = 0; i < sys_->d_z; ++i) zj.push_back(Jet<S>::variable(S(0), i, 1, sys_->d_z));
    return jacobian_of(Zn(wj, zj));
  }
  template <class S>
  VecS<S> R_at(const VecS<S>& w, const VecS<S>& z) const {
    return Z_at(w, z) - rho_at(w) - A_at(w) * z;
  }

  template <class S>
  static JetVec<S> const_jets(const VecS<S>& p) {
    JetVec<S> out;
    for (int i = 0; i < p.size(); ++i) out.push_back(Jet<S>::constant(p(i), 0, 0));
    return out;
  }
  template <class S>
  static JetVec<S> const_jets_dim(const VecS<S>& p, int order, int dim) {
    JetVec<S> out;
    for (int i = 0; i < p.size(); ++i) out.push_back(Jet<S>::constant(p(i), order, dim));
    return out;
  }

  template <class S>
  JetVec<S> make_arg(const ChartJets<S>& cj, const JetVec<S>& w, const JetVec<S>& z) const {
    JetVec<S> arg;
    arg.reserve(sys_->d_w + sys_->d_z);
    for (const auto& j : w) arg.push_back(j);
    for (int i = 0; i < sys_->d_z; ++i) arg.push_back(cj.zeta[i] + z[i]);
    return arg;
  }

  const Chart& chart() const { return chart_; }

 private:
  template <class S>
  JetVec<S> Wn_with(const ChartJets<S>& cj, const JetVec<S>& w, const JetVec<S>& z) const {
    JetVec<S> arg = make_arg(cj, w, z);
    JetVec<S> Wv = sys_->template W_field<S>()(arg);
    for (auto& j : Wv) j = j * (1.0 / sys_->w_scale);
    return Wv;
  }

  const GeneralSystem* sys_;
  Chart chart_;
  int level_;
};

inline NormalFormView decompose(const GeneralSystem& sys, const Chart& chart, int level) {
  return NormalFormView(sys, chart, level);
}

struct Certificate {
  int level = 0;
  double delta = 0;    // sup ||rho_n|| on V + i nu_n
  double K = 0;        // 2 sup ||A_n^{-1}||
  double C_R = 0;      // sup ||R_n|| on the joint neighborhood
  double C_z = 0;      // sup ||z|| on S + i sigma_0
  double nu = 0, sigma = 0;
  double xi = 0;       // width spent by the next step
  double kappa = 0;    // min over steps of (sigma_n - xi_n)
  double delta_over_eps = 0;
  double ratio = 0;             // measured delta_n / delta_{n-1}, 0 at level 0
  bool ratio_exceeded = false;  // measured ratio above the theoretical 1/2 (with slack)
  bool xi_ok = true;            // xi >= 2 K delta
  bool delta_ok = true;         // delta <= 1/2 kappa^2 K^-2 C_R^-1
  bool eps_ok = true;           // eps < 2 kappa^2
  bool hypothesis_ok = true;
};

struct SamplingOptions {
  int delta_samples = 512;  // sup ||rho|| estimates
  int mat_samples = 96;     // matrix-valued sups (K, C_R)
  std::uint64_t seed = kDefaultSeed;
};

// Rescales the stored eps so the sampled sup of the slow field is <= 1;
// evaluation divides W by w_scale accordingly.  Call once after construction.
inline void normalize_slow_field(GeneralSystem& sys, int samples = 1024,
                                 std::uint64_t seed = kDefaultSeed) {
  sys.check();
  const Box joint = join_boxes(sys.V, sys.S_box);
  const Eigen::VectorXd widths = block_widths(sys.d_w, sys.nu0, sys.d_z, sys.sigma0);
  const double sup = sup_norm(
      [&](const Eigen::VectorXcd& p) {
        JetVec<cxd> arg;
        for (int i = 0; i < p.size(); ++i) arg.push_back(Jet<cxd>::constant(p(i), 0, 0));
        return cnorm(values_of(sys.W_c(arg)));
      },
      joint, widths, samples, seed);
  sys.w_scale = std::max(1.0, sup);
  sys.eps = sys.w_scale * sys.eps_original;
}

// Level-0 certificate from sampled sup estimates over the complex neighborhoods.
inline Certificate validate_assumptions(const GeneralSystem& sys, int samples,
                                        std::uint64_t seed = kDefaultSeed) {
  sys.check();
  if (samples < 1) throw std::invalid_argument("validate_assumptions needs samples >= 1");
  Chart empty;
  NormalFormView view(sys, empty, 0);
  Certificate c;
  c.level = 0;
  c.nu = sys.nu0;
  c.sigma = sys.sigma0;
  c.kappa = sys.sigma0;
  c.delta = sup_norm(
      [&](const Eigen::VectorXcd& w) { return cnorm(view.rho_at<cxd>(w)); }, sys.V, sys.nu0,
      samples, seed);
  const int msamp = std::max(1, samples / 4);
  c.K = 2.0 * sup_norm(
                  [&](const Eigen::VectorXcd& w) { return inv_op_norm(view.A_at<cxd>(w)); },
                  sys.V, sys.nu0, msamp, seed + 1);
  const Box joint = join_boxes(sys.V, sys.S_box);
  const Eigen::VectorXd widths = block_widths(sys.d_w, sys.nu0, sys.d_z, sys.sigma0);
  c.C_R = sup_norm(
      [&](const Eigen::VectorXcd& p) {
        return cnorm(view.R_at<cxd>(p.head(sys.d_w), p.tail(sys.d_z)));
      },
      joint, widths, msamp, seed + 2);
  double cz2 = 0;
  for (int i = 0; i < sys.d_z; ++i) {
    const double m = std::max(std::abs(sys.S_box.lo(i)), std::abs(sys.S_box.hi(i)));
    cz2 += m * m + sys.sigma0 * sys.sigma0;
  }
  c.C_z = std::sqrt(cz2);
  c.delta_over_eps = c.delta / sys.eps;
  c.delta_ok = c.C_R == 0 || c.delta < 0.5 * c.kappa * c.kappa / (c.K * c.K * c.C_R);
  c.eps_ok = sys.eps < 2.0 * c.kappa * c.kappa;
  c.hypothesis_ok = c.delta_ok && c.eps_ok;
  return c;
}

}  // namespace mfold
