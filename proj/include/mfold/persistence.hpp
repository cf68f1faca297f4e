#pragma once

// Periodic-orbit persistence analysis on an isoenergetically reduced system:
// stroboscopic map of the fast equations over one slow period, monodromy
// matrix of the linearized flow, characteristic multipliers, and the energy
// gap set where some multiplier sits within sqrt(mu) of 1.

#include <Eigen/Dense>
#include <Eigen/Eigenvalues>

#include <cmath>
#include <complex>
#include <functional>
#include <numbers>
#include <stdexcept>
#include <vector>

#include "jet.hpp"

namespace mfold {

struct DegenerateFrequency : std::runtime_error {
  explicit DegenerateFrequency(double E)
      : std::runtime_error("slow frequency dI h vanishes at energy " + std::to_string(E)) {}
};

// The reduced fast system at energy E evolves in the slow angle psi:
//   eps dz/dpsi = J_z grad_z Q(psi, z; E),  psi in [0, T(E)],
// with T = 2 pi / dI h.  The linearization used for the monodromy matrix is
// eps dz/dpsi = J_z A(E) z.
struct ReducedSystem {
  int d_Z = 0;
  double eps = 0;
  std::function<double(double)> dIh;  // dh/dI at energy E
  std::function<Eigen::MatrixXd(double)> A_of_E;
  std::function<Eigen::VectorXd(double, const Eigen::VectorXd&, double)> gradQ;  // (psi, z, E)

  double period(double E) const {
    const double d = dIh(E);
    if (std::abs(d) <= 1e-8) throw DegenerateFrequency(E);
    return 2.0 * std::numbers::pi / d;
  }
};

inline Eigen::MatrixXd symplectic_J(int d_Z) {
  Eigen::MatrixXd J = Eigen::MatrixXd::Zero(2 * d_Z, 2 * d_Z);
  for (int i = 0; i < d_Z; ++i) {
    J(i, d_Z + i) = 1.0;
    J(d_Z + i, i) = -1.0;
  }
  return J;
}

inline long reduced_steps(double eps) { return 4096L * static_cast<long>(std::ceil(1.0 / eps)); }

inline Eigen::VectorXd stroboscopic_map(const ReducedSystem& rs, double E,
                                        const Eigen::VectorXd& z_start) {
  const double T = rs.period(E);
  const Eigen::MatrixXd J = symplectic_J(rs.d_Z);
  const long n = reduced_steps(rs.eps);
  const double h = T / double(n);
  auto f = [&](double psi, const Eigen::VectorXd& z) {
    return Eigen::VectorXd((J * rs.gradQ(psi, z, E)) / rs.eps);
  };
  Eigen::VectorXd z = z_start;
  double psi = 0;
  for (long k = 0; k < n; ++k) {
    const Eigen::VectorXd k1 = f(psi, z);
    const Eigen::VectorXd k2 = f(psi + 0.5 * h, z + 0.5 * h * k1);
    const Eigen::VectorXd k3 = f(psi + 0.5 * h, z + 0.5 * h * k2);
    const Eigen::VectorXd k4 = f(psi + h, z + h * k3);
    z += (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
    psi += h;
  }
  return z;
}

struct MonodromyResult {
  double E = 0;
  double T = 0;
  Eigen::MatrixXd Psi_T;
  Eigen::VectorXcd multipliers;
  double gap_margin = 0;  // min_i |lambda_i - 1|
  double det_Psi = 0;
  double mu = 0;
};

inline MonodromyResult monodromy(const ReducedSystem& rs, double E, long step_override = 0) {
  MonodromyResult r;
  r.E = E;
  r.T = rs.period(E);
  const int dim = 2 * rs.d_Z;
  const Eigen::MatrixXd B = symplectic_J(rs.d_Z) * rs.A_of_E(E) / rs.eps;
  const long n = step_override > 0 ? step_override : reduced_steps(rs.eps);
  const double h = r.T / double(n);
  Eigen::MatrixXd Psi = Eigen::MatrixXd::Identity(dim, dim);
  for (long k = 0; k < n; ++k) {
    const Eigen::MatrixXd k1 = B * Psi;
    const Eigen::MatrixXd k2 = B * (Psi + 0.5 * h * k1);
    const Eigen::MatrixXd k3 = B * (Psi + 0.5 * h * k2);
    const Eigen::MatrixXd k4 = B * (Psi + h * k3);
    Psi += (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
  }
  r.Psi_T = Psi;
  r.det_Psi = Psi.determinant();
  Eigen::EigenSolver<Eigen::MatrixXd> es(Psi);
  r.multipliers = es.eigenvalues();
  r.gap_margin = 1e300;
  for (int i = 0; i < r.multipliers.size(); ++i)
    r.gap_margin = std::min(r.gap_margin, std::abs(r.multipliers(i) - cxd(1)));
  return r;
}

struct GapInterval {
  double lo = 0, hi = 0;
};

struct GapScanResult {
  std::vector<MonodromyResult> per_energy;
  std::vector<bool> admissible;
  std::vector<GapInterval> excluded;  // merged intervals of excluded grid cells
  double excluded_measure = 0;
  double grid_span = 0;
};

// Classifies each grid energy by |lambda_i - 1| >= sqrt(mu); a degenerate
// frequency counts as excluded.  Adjacent excluded cells merge.
inline GapScanResult gap_set_scan(const ReducedSystem& rs, const std::vector<double>& E_grid,
                                  double mu) {
  if (E_grid.size() < 2) throw std::invalid_argument("gap scan needs at least two energies");
  for (size_t i = 1; i < E_grid.size(); ++i)
    if (!(E_grid[i] > E_grid[i - 1])) throw std::invalid_argument("energy grid must be increasing");
  if (!(mu > 0)) throw std::invalid_argument("mu must be positive");
  GapScanResult res;
  res.grid_span = E_grid.back() - E_grid.front();
  const double thr = std::sqrt(mu);
  for (double E : E_grid) {
    bool ok;
    MonodromyResult m;
    try {
      m = monodromy(rs, E);
      ok = m.gap_margin >= thr;
    } catch (const DegenerateFrequency&) {
      m.E = E;
      ok = false;
    }
    m.mu = mu;
    res.per_energy.push_back(m);
    res.admissible.push_back(ok);
  }
  // each grid point owns half a cell on each side
  const size_t n = E_grid.size();
  auto cell_lo = [&](size_t i) {
    return i == 0 ? E_grid[0] : 0.5 * (E_grid[i - 1] + E_grid[i]);
  };
  auto cell_hi = [&](size_t i) {
    return i + 1 == n ? E_grid[n - 1] : 0.5 * (E_grid[i] + E_grid[i + 1]);
  };
  for (size_t i = 0; i < n; ++i) {
    if (res.admissible[i]) continue;
    const double lo = cell_lo(i), hi = cell_hi(i);
    if (!res.excluded.empty() && std::abs(res.excluded.back().hi - lo) < 1e-15)
      res.excluded.back().hi = hi;
    else
      res.excluded.push_back({lo, hi});
  }
  for (const auto& iv : res.excluded) res.excluded_measure += iv.hi - iv.lo;
  return res;
}

}  // namespace mfold
