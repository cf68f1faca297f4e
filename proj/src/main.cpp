// Batch driver: reads a flat key-value config, runs refinement or persistence
// experiments on the registered systems, and writes CSV/JSON reports.

#include <CLI11.hpp>
#include <json.hpp>

#include <mfold/examples.hpp>
#include <mfold/persistence.hpp>
#include <mfold/refine_general.hpp>
#include <mfold/refine_ham.hpp>

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

using nlohmann::json;
using namespace mfold;

namespace {

struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

class Config {
 public:
  static Config parse_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config file: " + path);
    Config cfg;
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
      ++lineno;
      const auto hash = line.find('#');
      if (hash != std::string::npos) line = line.substr(0, hash);
      auto trim = [](std::string s) {
        const auto b = s.find_first_not_of(" \t\r");
        const auto e = s.find_last_not_of(" \t\r");
        return b == std::string::npos ? std::string() : s.substr(b, e - b + 1);
      };
      line = trim(line);
      if (line.empty()) continue;
      if (line.front() == '[' && line.back() == ']') continue;  // section marker
      const auto eq = line.find('=');
      if (eq == std::string::npos)
        throw ConfigError("config line " + std::to_string(lineno) + ": expected key = value");
      const std::string key = trim(line.substr(0, eq));
      const std::string val = trim(line.substr(eq + 1));
      if (key.empty())
        throw ConfigError("config line " + std::to_string(lineno) + ": empty key");
      cfg.kv_[key] = val;
    }
    return cfg;
  }

  bool has(const std::string& k) const { return kv_.count(k) > 0; }

  std::string str(const std::string& k, const std::string& dflt) const {
    auto it = kv_.find(k);
    return it == kv_.end() ? dflt : it->second;
  }
  std::string require(const std::string& k) const {
    auto it = kv_.find(k);
    if (it == kv_.end()) throw ConfigError("config: missing required key '" + k + "'");
    return it->second;
  }
  double num(const std::string& k, double dflt) const {
    auto it = kv_.find(k);
    if (it == kv_.end()) return dflt;
    return to_num(k, it->second);
  }
  long integer(const std::string& k, long dflt) const {
    auto it = kv_.find(k);
    if (it == kv_.end()) return dflt;
    const double v = to_num(k, it->second);
    return static_cast<long>(v);
  }
  std::vector<double> num_list(const std::string& k) const {
    auto it = kv_.find(k);
    if (it == kv_.end()) return {};
    std::vector<double> out;
    std::string s = it->second;
    for (char& c : s)
      if (c == ',') c = ' ';
    std::istringstream ss(s);
    std::string tok;
    while (ss >> tok) out.push_back(to_num(k, tok));
    return out;
  }

 private:
  static double to_num(const std::string& k, const std::string& s) {
    try {
      size_t pos = 0;
      const double v = std::stod(s, &pos);
      if (pos != s.size()) throw std::invalid_argument(s);
      return v;
    } catch (const std::exception&) {
      throw ConfigError("config: key '" + k + "' has non-numeric value '" + s + "'");
    }
  }
  std::map<std::string, std::string> kv_;
};

std::string fmt17(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

struct RunSettings {
  std::string system;
  std::string mode;  // general | hamiltonian | persistence
  std::vector<double> eps;
  double nu_floor = 0.1, sigma_floor = 0.1;
  double xi0 = 0;
  ExampleParams prm;
  SamplingOptions sampling;
  int cheb_degree = 0;
  int max_small_steps = 0;
  bool adaptive = true;
  int manifold_grid = 0;
  int sym_points = 20;
  double energy_min = 0.05, energy_max = 0.45;
  int energy_count = 40;
  double mu = 0.01;
  std::filesystem::path out_dir;
};

RunSettings read_settings(const Config& cfg, const std::string& out_override,
                          std::optional<std::uint64_t> seed_override) {
  RunSettings s;
  s.system = cfg.require("system");
  bool known = false;
  for (const auto& n : example_names()) known = known || n == s.system;
  if (!known) throw ConfigError("config: unknown system '" + s.system + "'");
  const bool ham = example_is_hamiltonian(s.system);
  s.mode = cfg.str("mode", ham ? "hamiltonian" : "general");
  if (s.mode != "general" && s.mode != "hamiltonian" && s.mode != "persistence")
    throw ConfigError("config: mode must be general, hamiltonian, or persistence");
  if (s.mode == "general" && ham)
    throw ConfigError("config: system '" + s.system + "' requires hamiltonian or persistence mode");
  if (s.mode != "general" && !ham)
    throw ConfigError("config: system '" + s.system + "' only supports general mode");

  s.eps = cfg.num_list("eps");
  if (s.eps.empty()) throw ConfigError("config: eps list must be non-empty");
  for (double e : s.eps)
    if (!(e > 0)) throw ConfigError("config: eps values must be positive");

  s.nu_floor = cfg.num("nu_floor", 0.1);
  s.sigma_floor = cfg.num("sigma_floor", 0.1);
  if (!(s.nu_floor > 0 && s.sigma_floor > 0))
    throw ConfigError("config: width floors must be positive");
  s.xi0 = cfg.num("xi0", ham ? 0.3 : 0.1);

  s.prm.f = cfg.str("f", "w-1");
  s.prm.N_f = static_cast<int>(cfg.integer("N_f", 30));
  s.prm.coupling = cfg.num("coupling", 0.02);

  s.sampling.delta_samples = static_cast<int>(cfg.integer("delta_samples", ham ? 256 : 512));
  s.sampling.mat_samples = static_cast<int>(cfg.integer("mat_samples", ham ? 64 : 96));
  s.sampling.seed = static_cast<std::uint64_t>(cfg.integer("seed", double(kDefaultSeed)));
  if (seed_override) s.sampling.seed = *seed_override;

  s.cheb_degree = static_cast<int>(cfg.integer("cheb_degree", ham ? 12 : 20));
  s.max_small_steps = static_cast<int>(cfg.integer("max_small_steps", ham ? 32 : 64));
  const std::string rm = cfg.str("refine", "adaptive");
  if (rm != "adaptive" && rm != "fixed")
    throw ConfigError("config: refine must be adaptive or fixed");
  s.adaptive = rm == "adaptive";
  s.manifold_grid = static_cast<int>(cfg.integer("manifold_grid", ham ? 17 : 101));
  s.sym_points = static_cast<int>(cfg.integer("sym_points", 20));
  s.energy_min = cfg.num("energy_min", 0.05);
  s.energy_max = cfg.num("energy_max", 0.45);
  s.energy_count = static_cast<int>(cfg.integer("energy_count", 40));
  s.mu = cfg.num("mu", 0.01);

  s.out_dir = out_override.empty() ? std::filesystem::path(cfg.str("out", ".")) :
                                     std::filesystem::path(out_override);
  std::filesystem::create_directories(s.out_dir);
  return s;
}

void write_fit_json(const RunSettings& s,
                    const std::vector<std::vector<std::pair<int, double>>>& traces,
                    double theory_slope) {
  json j;
  j["system"] = s.system;
  j["seed"] = s.sampling.seed;
  j["eps"] = s.eps;
  std::vector<double> mins;
  bool positive = true;
  for (const auto& t : traces) {
    double m = t.empty() ? 0.0 : t[0].second;
    for (const auto& [n, d] : t) m = std::min(m, d);
    mins.push_back(m);
    positive = positive && m > 0;
  }
  j["min_delta"] = mins;
  j["theory_slope"] = theory_slope;
  if (s.eps.size() >= 3 && positive) {
    const auto rep = fit_decay(s.eps, traces, theory_slope);
    j["fitted"] = true;
    j["slope"] = rep.fit.slope;
    j["intercept"] = rep.fit.intercept;
    j["r2"] = rep.fit.r2;
  } else {
    j["fitted"] = false;
    j["slope"] = nullptr;
    j["intercept"] = nullptr;
    j["r2"] = nullptr;
  }
  std::ofstream f(s.out_dir / "fit.json");
  f << j.dump(2) << "\n";
}

std::vector<Eigen::VectorXd> box_grid(const Box& box, int per_axis) {
  std::vector<Eigen::VectorXd> pts;
  const int d = box.dim();
  long total = 1;
  for (int a = 0; a < d; ++a) total *= per_axis;
  for (long flat = 0; flat < total; ++flat) {
    long rem = flat;
    Eigen::VectorXd p(d);
    for (int a = d - 1; a >= 0; --a) {
      const int i = static_cast<int>(rem % per_axis);
      rem /= per_axis;
      p(a) = per_axis == 1 ? box.mid()(a)
                           : box.lo(a) + (box.hi(a) - box.lo(a)) * double(i) / (per_axis - 1);
    }
    pts.push_back(p);
  }
  return pts;
}

int run_general(const RunSettings& s) {
  std::ofstream decay(s.out_dir / "decay.csv");
  decay << "eps,n,delta_n,K_n,C_Rn,xi_n,hypothesis_ok\n";
  std::ofstream manifold(s.out_dir / "manifold.csv");
  bool halted = false;
  std::vector<std::vector<std::pair<int, double>>> traces;
  double theory_slope = 0;
  bool wrote_header = false;

  for (double eps : s.eps) {
    ExampleParams prm = s.prm;
    prm.eps = eps;
    GeneralSystem sys = build_general_example(s.system, prm);
    RefineOptions opt;
    opt.sampling = s.sampling;
    opt.cheb_degree = s.cheb_degree;
    opt.max_small_steps = s.max_small_steps;
    auto res = refine(sys, s.nu_floor, s.sigma_floor, s.xi0,
                      s.adaptive ? RefineMode::adaptive : RefineMode::fixed_N, opt);
    halted = halted || res.halted_on_hypothesis;
    traces.push_back(res.delta_trace);
    for (const auto& c : res.certificates)
      decay << fmt17(eps) << "," << c.level << "," << fmt17(c.delta) << "," << fmt17(c.K) << ","
            << fmt17(c.C_R) << "," << fmt17(c.xi) << "," << (c.hypothesis_ok ? 1 : 0) << "\n";
    if (res.certificates.size() > 1 && res.m_width > 0)
      theory_slope = -res.m_width * std::log(2.0) / (4.0 * res.certificates[1].K);

    if (!wrote_header) {
      manifold << "eps";
      for (int a = 0; a < sys.d_w; ++a) manifold << ",w_" << a;
      for (int i = 0; i < sys.d_z; ++i) manifold << ",zeta_" << i;
      manifold << "\n";
      wrote_header = true;
    }
    for (const auto& w : box_grid(sys.V, s.manifold_grid)) {
      manifold << fmt17(eps);
      for (int a = 0; a < sys.d_w; ++a) manifold << "," << fmt17(w(a));
      if (res.chart.levels() > 0) {
        const auto z = chart_eval(res.chart, w, 0);
        for (int i = 0; i < sys.d_z; ++i) manifold << "," << fmt17(z[i].value());
      } else {
        for (int i = 0; i < sys.d_z; ++i) manifold << "," << fmt17(0.0);
      }
      manifold << "\n";
    }
  }
  write_fit_json(s, traces, theory_slope);
  return halted ? 2 : 0;
}

int run_hamiltonian(const RunSettings& s) {
  std::ofstream decay(s.out_dir / "decay.csv");
  decay << "eps,n,delta_n,K_n,C_Rn,xi_n,hypothesis_ok\n";
  std::ofstream manifold(s.out_dir / "manifold.csv");
  bool halted = false;
  std::vector<std::vector<std::pair<int, double>>> traces;
  double theory_slope = 0;
  bool wrote_header = false;
  json sym = json::array();

  for (double eps : s.eps) {
    ExampleParams prm = s.prm;
    prm.eps = eps;
    HamiltonianSystem sys = build_ham_example(s.system, prm);
    HamRefineOptions opt;
    opt.sampling = s.sampling;
    opt.cheb_degree = s.cheb_degree;
    opt.max_small_steps = s.max_small_steps;
    auto res = refine_ham(sys, s.nu_floor, s.sigma_floor, s.xi0, opt);
    halted = halted || res.halted_on_hypothesis;
    traces.push_back(res.delta_trace);
    for (const auto& c : res.certificates)
      decay << fmt17(eps) << "," << c.level << "," << fmt17(c.delta) << "," << fmt17(c.K) << ","
            << fmt17(c.C_r) << "," << fmt17(c.xi) << "," << (c.hypothesis_ok ? 1 : 0) << "\n";
    if (res.certificates.size() > 1 && res.m_width > 0)
      theory_slope = -res.m_width * std::log(2.0) / (4.0 * res.certificates[1].K);

    if (!wrote_header) {
      manifold << "eps";
      for (int a = 0; a < 2 * sys.d_W; ++a) manifold << ",w_" << a;
      for (int i = 0; i < 2 * sys.d_Z; ++i) manifold << ",zeta_" << i;
      manifold << "\n";
      wrote_header = true;
    }
    const Eigen::VectorXd z0 = Eigen::VectorXd::Zero(2 * sys.d_Z);
    for (const auto& w : box_grid(sys.W_box, s.manifold_grid)) {
      HamPoint<double> p = ham_point<double>(w, z0, sys.d_W, sys.d_Z);
      p = ham_compose(res.layers, std::move(p));
      const Eigen::VectorXd z = ham_point_z(p);
      manifold << fmt17(eps);
      for (int a = 0; a < 2 * sys.d_W; ++a) manifold << "," << fmt17(w(a));
      for (int i = 0; i < 2 * sys.d_Z; ++i) manifold << "," << fmt17(z(i));
      manifold << "\n";
    }

    // per-level symplectic defect and energy invariance of the transforms
    json per_eps;
    per_eps["eps"] = eps;
    per_eps["levels"] = json::array();
    for (size_t k = 0; k < res.layers.size(); ++k) {
      double max_defect = 0, max_energy = 0;
      std::vector<HamLayer> up_to_k(res.layers.begin(), res.layers.begin() + k);
      std::vector<HamLayer> up_to_k1(res.layers.begin(), res.layers.begin() + k + 1);
      for (int j = 0; j < s.sym_points; ++j) {
        Eigen::VectorXd w(2 * sys.d_W), z(2 * sys.d_Z);
        for (int a = 0; a < 2 * sys.d_W; ++a)
          w(a) = sys.W_box.lo(a) +
                 (sys.W_box.hi(a) - sys.W_box.lo(a)) *
                     unit_draw(s.sampling.seed + 7, j * 8 + a);
        for (int i = 0; i < 2 * sys.d_Z; ++i)
          z(i) = 0.5 * (sys.Z_box.lo(i) +
                        (sys.Z_box.hi(i) - sys.Z_box.lo(i)) *
                            unit_draw(s.sampling.seed + 9, j * 8 + i));
        max_defect = std::max(max_defect, symplectic_defect(res.layers[k], w, z));
        HamPoint<double> p = ham_point<double>(w, z, sys.d_W, sys.d_Z);
        const double hk1 = ham_level_jet(sys, up_to_k1, p).value();
        HamPoint<double> q = ham_forward(res.layers[k], p, 1e-15);
        const double hk = ham_level_jet(sys, up_to_k, q).value();
        max_energy = std::max(max_energy, std::abs(hk1 - hk));
      }
      json lvl;
      lvl["level"] = k + 1;
      lvl["max_symplectic_defect"] = max_defect;
      lvl["max_energy_mismatch"] = max_energy;
      per_eps["levels"].push_back(lvl);
    }
    sym.push_back(per_eps);
  }
  {
    json root;
    root["system"] = s.system;
    root["seed"] = s.sampling.seed;
    root["runs"] = sym;
    std::ofstream f(s.out_dir / "symplectic_checks.json");
    f << root.dump(2) << "\n";
  }
  write_fit_json(s, traces, theory_slope);
  return halted ? 2 : 0;
}

int run_persistence(const RunSettings& s) {
  if (s.eps.size() != 1)
    throw ConfigError("config: persistence mode expects exactly one eps value");
  ExampleParams prm = s.prm;
  prm.eps = s.eps[0];
  HamiltonianSystem sys = build_ham_example(s.system, prm);
  if (sys.slow_equilibrium.size() == 0)
    throw ConfigError("config: system '" + s.system + "' has no designated equilibrium");
  const Eigen::MatrixXd A0 = ham_A<double>(sys, {}, sys.slow_equilibrium);

  ReducedSystem rs;
  rs.d_Z = sys.d_Z;
  rs.eps = sys.eps;
  // slow pendulum frequency falls off with the energy of the oscillation
  rs.dIh = [](double E) { return 1.0 - E / 8.0; };
  rs.A_of_E = [A0](double) { return A0; };
  rs.gradQ = [A0](double, const Eigen::VectorXd& z, double) { return Eigen::VectorXd(A0 * z); };

  if (s.energy_count < 2) throw ConfigError("config: energy_count must be >= 2");
  std::vector<double> grid;
  for (int i = 0; i < s.energy_count; ++i)
    grid.push_back(s.energy_min +
                   (s.energy_max - s.energy_min) * double(i) / (s.energy_count - 1));
  auto scan = gap_set_scan(rs, grid, s.mu);

  std::ofstream mult(s.out_dir / "multipliers.csv");
  mult << "E,re_lambda,im_lambda,gap_margin,admissible\n";
  for (size_t i = 0; i < scan.per_energy.size(); ++i) {
    const auto& m = scan.per_energy[i];
    if (m.multipliers.size() == 0) {
      mult << fmt17(m.E) << ",nan,nan," << fmt17(0.0) << ",0\n";
      continue;
    }
    for (int j = 0; j < m.multipliers.size(); ++j)
      mult << fmt17(m.E) << "," << fmt17(m.multipliers(j).real()) << ","
           << fmt17(m.multipliers(j).imag()) << "," << fmt17(m.gap_margin) << ","
           << (scan.admissible[i] ? 1 : 0) << "\n";
  }
  json j;
  j["system"] = s.system;
  j["mu"] = s.mu;
  j["excluded_measure"] = scan.excluded_measure;
  j["grid_span"] = scan.grid_span;
  json iv = json::array();
  for (const auto& g : scan.excluded) iv.push_back({{"lo", g.lo}, {"hi", g.hi}});
  j["excluded_intervals"] = iv;
  std::ofstream f(s.out_dir / "gap_scan.json");
  f << j.dump(2) << "\n";
  return 0;
}

double rel_err(const Eigen::VectorXd& got, const Eigen::VectorXd& want) {
  return (got - want).norm() / std::max(want.norm(), 1e-14);
}

int run_verify(const RunSettings& s) {
  json j;
  j["system"] = s.system;
  j["eps"] = s.eps;
  const auto quantities = example_oracle_quantities(s.system);
  if (quantities.empty()) {
    j["note"] = "no oracles";
    std::ofstream f(s.out_dir / "verify.json");
    f << j.dump(2) << "\n";
    return 0;
  }
  json q;
  for (const auto& name : quantities) q[name] = 0.0;

  for (double eps : s.eps) {
    ExampleParams prm = s.prm;
    prm.eps = eps;
    auto bump = [&](const std::string& key, double v) {
      q[key] = std::max(q[key].get<double>(), v);
    };
    if (!example_is_hamiltonian(s.system)) {
      GeneralSystem sys = build_general_example(s.system, prm);
      Chart chart;
      NormalFormView v0(sys, chart, 0);
      chart.layers.push_back(build_layer(v0, s.cheb_degree));
      NormalFormView v1(sys, chart, 1);
      chart.layers.push_back(build_layer(v1, s.cheb_degree));
      NormalFormView v2(sys, chart, 2);
      for (int k = 0; k < 20; ++k) {
        Eigen::VectorXd w(1);
        w << sys.V.lo(0) + (sys.V.hi(0) - sys.V.lo(0)) * unit_draw(41, k);
        bump("rho0", rel_err(v0.rho_at<double>(w), example_oracle(s.system, "rho0", w, prm)));
        bump("rho1", rel_err(v1.rho_at<double>(w), example_oracle(s.system, "rho1", w, prm)));
        bump("rho2", rel_err(v2.rho_at<double>(w), example_oracle(s.system, "rho2", w, prm)));
        const auto z0 = chart_eval(chart.prefix(1), w, 0);
        Eigen::VectorXd zeta(1);
        zeta << z0[0].value();
        bump("zeta0", rel_err(zeta, example_oracle(s.system, "zeta0", w, prm)));
      }
      if (s.system == "linear_hyperbolic") {
        RefineOptions opt;
        opt.sampling = s.sampling;
        opt.cheb_degree = s.cheb_degree;
        opt.max_small_steps = s.max_small_steps;
        auto res = refine(sys, s.nu_floor, s.sigma_floor, s.xi0, RefineMode::adaptive, opt);
        Eigen::VectorXd w(1);
        w << 0.0;
        const auto cj = res.chart.levels() > 0 ? chart_eval(res.chart, w, 1)
                                               : JetVec<double>{Jet<double>(1, 1)};
        Eigen::VectorXd slope(1);
        slope << cj[0].grad()(0);
        bump("manifold_slope", rel_err(slope, example_oracle(s.system, "manifold_slope", w, prm)));
      }
    } else {
      HamiltonianSystem sys = build_ham_example(s.system, prm);
      for (int k = 0; k < 20; ++k) {
        Eigen::VectorXd w(2 * sys.d_W);
        for (int a = 0; a < 2 * sys.d_W; ++a)
          w(a) = sys.W_box.lo(a) + (sys.W_box.hi(a) - sys.W_box.lo(a)) * unit_draw(43 + a, k);
        bump("rho0", rel_err(ham_rho<double>(sys, {}, w), example_oracle(s.system, "rho0", w, prm)));
        if (q.contains("zeta0")) {
          auto r = solve_constrained_equilibria(sys, {}, w);
          bump("zeta0", rel_err(r.zeta, example_oracle(s.system, "zeta0", w, prm)));
        }
      }
    }
  }
  j["max_rel_errors"] = q;
  std::ofstream f(s.out_dir / "verify.json");
  f << j.dump(2) << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"slow-manifold refinement driver"};
  app.require_subcommand(0, 1);
  std::string config_path, out_dir;
  std::optional<std::uint64_t> seed;
  int threads = 0;
  bool list_systems = false;

  std::uint64_t seed_raw = 0;
  bool seed_set = false;
  app.add_flag("--list-systems", list_systems, "print the registered system names and exit");
  app.add_option("--out", out_dir, "output directory (overrides the config)");
  auto* seed_opt = app.add_option("--seed", seed_raw, "sampling seed (overrides the config)");
  app.add_option("--threads", threads, "worker thread cap (env MF_THREADS as fallback)");

  CLI::App* run_cmd = app.add_subcommand("run", "run the experiment described by a config");
  std::string run_config;
  run_cmd->add_option("config", run_config, "config file path")->required();
  run_cmd->fallthrough();
  CLI::App* verify_cmd = app.add_subcommand("verify", "compare a system against its oracles");
  std::string verify_config;
  verify_cmd->add_option("config", verify_config, "config file path")->required();
  verify_cmd->fallthrough();

  CLI11_PARSE(app, argc, argv);
  seed_set = seed_opt->count() > 0;
  if (seed_set) seed = seed_raw;

  if (threads <= 0) {
    if (const char* env = std::getenv("MF_THREADS")) threads = std::atoi(env);
  }
  (void)threads;  // runs are serial; the cap is accepted for interface stability

  if (list_systems) {
    for (const auto& n : example_names()) std::cout << n << "\n";
    return 0;
  }

  try {
    if (run_cmd->parsed()) {
      const Config cfg = Config::parse_file(run_config);
      const RunSettings s = read_settings(cfg, out_dir, seed);
      if (s.mode == "general") return run_general(s);
      if (s.mode == "hamiltonian") return run_hamiltonian(s);
      return run_persistence(s);
    }
    if (verify_cmd->parsed()) {
      const Config cfg = Config::parse_file(verify_config);
      const RunSettings s = read_settings(cfg, out_dir, seed);
      return run_verify(s);
    }
    std::cerr << "error: expected a subcommand (run or verify); see --help\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}
