// dpre: command-line front end for the directed polymer toolkit.

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <sstream>

#include "CLI11.hpp"
#include "json.hpp"

#include "dpre/analysis.hpp"
#include "dpre/env.hpp"
#include "dpre/error.hpp"
#include "dpre/harness.hpp"
#include "dpre/pinning.hpp"
#include "dpre/polymer.hpp"

namespace fs = std::filesystem;
using json = nlohmann::ordered_json;
using namespace dpre;

namespace {

constexpr int kExitStatistical = 4;

void emit(const json& j, const std::string& out) {
  const std::string text = j.dump(2) + "\n";
  if (out.empty()) {
    std::cout << text;
  } else {
    if (fs::path(out).has_parent_path()) fs::create_directories(fs::path(out).parent_path());
    write_atomic(out, text);
  }
}

int cmd_env_check(double gamma, std::uint64_t seed, std::size_t draws, const std::string& out) {
  const GammaEnvSpec spec = GammaEnvSpec::shifted_pareto(gamma);
  spec.validate();
  EnvBatteryConfig cfg;
  cfg.draws = draws;
  const auto report = run_env_battery(spec, seed, cfg);
  json j;
  j["gamma"] = gamma;
  j["family"] = to_string(spec.family);
  j["seed"] = seed;
  j["draws"] = draws;
  json checks = json::array();
  for (const auto& c : report.checks) {
    checks.push_back({{"name", c.name}, {"value", c.value}, {"threshold", c.threshold}, {"pass", c.pass},
                      {"detail", c.detail}, {"gating", c.gating}});
  }
  j["checks"] = checks;
  j["pass"] = report.pass();
  emit(j, out);
  return report.pass() ? 0 : kExitStatistical;
}

struct CellArgs {
  int d = 1;
  double gamma = 1.5;
  double beta = 0.0;
  int N = 10;
  int replicas = 2;
  std::uint64_t seed = 0;
  int workers = 1;
  double kappa = 0.0;
};

void add_cell_options(CLI::App* app, CellArgs& a) {
  app->add_option("--d", a.d, "lattice dimension")->capture_default_str();
  app->add_option("--gamma", a.gamma, "tail index in (1,2)")->capture_default_str();
  app->add_option("--beta", a.beta, "disorder strength in [0,1)")->capture_default_str();
  app->add_option("--N", a.N, "polymer length")->capture_default_str();
  app->add_option("--replicas", a.replicas, "independent environments")->capture_default_str();
  app->add_option("--seed", a.seed, "base seed")->capture_default_str();
  app->add_option("--workers", a.workers, "worker threads")->capture_default_str();
}

SweepConfig single_cell(const CellArgs& a, const std::string& out) {
  SweepConfig cfg;
  CellSpec cell;
  cell.d = a.d;
  cell.gamma = a.gamma;
  cell.beta = a.beta;
  cell.N = a.N;
  cell.replicas = a.replicas;
  if (a.kappa > 0.0) cell.kappa = a.kappa;
  cfg.cells.push_back(cell);
  cfg.base_seed = a.seed;
  cfg.workers = a.workers;
  cfg.output = out;
  return cfg;
}

int report_sweep(const SweepOutcome& outcome) {
  json j;
  j["complete"] = outcome.complete;
  j["manifest"] = outcome.manifest.string();
  j["aggregate"] = outcome.aggregate.string();
  json cells = json::array();
  for (const auto& c : outcome.cells) {
    json e{{"status", c.status}};
    if (!c.error.empty()) e["error"] = c.error;
    cells.push_back(e);
  }
  j["cells"] = cells;
  std::cout << j.dump(2) << "\n";
  return outcome.exit_code();
}

int cmd_simulate(const CellArgs& a, const std::string& out, bool oracle, bool force) {
  const SweepConfig cfg = single_cell(a, out);
  SweepOptions opts;
  opts.force = force;
  const SweepOutcome outcome = run_sweep(cfg, opts);
  if (oracle && outcome.complete) {
    const CellSpec& cell = cfg.cells.front();
    const ModelParams params = cell.params();
    const std::uint64_t seed = replica_seed(cfg.base_seed, 0, 0);
    const EnvField field(cell.env(), seed);
    const double enumerated = brute_force_Z(params, field);
    const double dp = std::exp(log_partition(params, field));
    const double rel = std::abs(dp - enumerated) / enumerated;
    std::ostringstream csv;
    csv.precision(17);
    csv << "config_hash,seed,N,Z_dp,Z_enum,rel_err,agree\n"
        << config_hash(cfg) << ',' << seed << ',' << cell.N << ',' << dp << ',' << enumerated << ',' << rel << ','
        << (rel <= 1e-10 ? "true" : "false") << "\n";
    write_atomic(fs::path(out) / "oracle.csv", csv.str());
    std::cout << csv.str();
    if (rel > 1e-10) return kExitStatistical;
  }
  return report_sweep(outcome);
}

std::vector<double> parse_list(const std::string& s) {
  std::vector<double> v;
  std::istringstream in(s);
  std::string item;
  while (std::getline(in, item, ',')) {
    try {
      v.push_back(std::stod(item));
    } catch (const std::exception&) {
      throw ConfigError("cannot parse list item '" + item + "'");
    }
  }
  if (v.empty()) throw ConfigError("empty list");
  return v;
}

int cmd_pinning(int d, double gamma, const std::string& betas, double q, const std::string& ks, int n_max,
                int replicas, std::uint64_t seed, int workers, const std::string& out) {
  const GammaEnvSpec spec = GammaEnvSpec::shifted_pareto(gamma);
  spec.validate();
  const auto beta_list = parse_list(betas);
  std::vector<int> k_list;
  for (double k : parse_list(ks)) k_list.push_back(static_cast<int>(k));
  const int k_max = *std::max_element(k_list.begin(), k_list.end());

  // Contract checks before any heavy work.
  for (double beta : beta_list) {
    for (int k : k_list) PinningParams{q, beta, k, TiltedEnvSpec{spec, beta}}.validate();
  }
  if (d * q / 2.0 <= 1.0) {
    std::ostringstream msg;
    msg << "pinning: d*q/2 = " << d * q / 2.0 << " <= 1, q must exceed 2/d = " << 2.0 / d;
    throw DivergenceError(msg.str());
  }

  const RenewalKernel kernel = RenewalKernel::build(d, n_max);
  fs::create_directories(out);
  write_atomic(fs::path(out) / "kernel.csv", kernel_csv(kernel));

  std::ostringstream csv;
  csv.precision(17);
  csv << "seed,d,gamma,q,beta,k,rho,tail_bound,mc_uncertainty,upper,certified\n";
  json rows = json::array();
  bool any = false;
  for (std::size_t bi = 0; bi < beta_list.size(); ++bi) {
    const double beta = beta_list[bi];
    PinningParams base{q, beta, k_max, TiltedEnvSpec{spec, beta}};
    const std::uint64_t s = derive_seed(seed, bi);
    const auto A = estimate_A(base, kernel, std::max(k_max - 1, 1), replicas, s, workers);
    for (int k : k_list) {
      PinningParams p = base;
      p.k = k;
      const RhoResult r = rho_criterion(p, kernel, A);
      const bool ok = r.upper() < 1.0;
      any = any || ok;
      csv << s << ',' << d << ',' << gamma << ',' << q << ',' << beta << ',' << k << ',' << r.rho << ','
          << r.tail_bound << ',' << r.mc_uncertainty << ',' << r.upper() << ',' << (ok ? "true" : "false") << "\n";
      rows.push_back({{"beta", beta}, {"k", k}, {"rho", r.rho}, {"tail_bound", r.tail_bound},
                      {"mc_uncertainty", r.mc_uncertainty}, {"upper", r.upper()}, {"rho_below_one", ok}});
    }
  }
  write_atomic(fs::path(out) / "rho.csv", csv.str());
  json j;
  j["d"] = d;
  j["gamma"] = gamma;
  j["q"] = q;
  j["n_max"] = n_max;
  j["replicas"] = replicas;
  j["seed"] = seed;
  j["K1"] = kernel.K[1];
  j["partial_sum_K"] = kernel.partial_sum_K.back();
  j["renewal_residual"] = renewal_residual(kernel);
  j["rows"] = rows;
  j["any_rho_below_one"] = any;
  std::cout << j.dump(2) << "\n";
  return 0;
}

int cmd_certify(const CellArgs& a, double theta, bool exploratory, int bootstrap, const std::string& out) {
  EnsembleSpec s;
  s.params.dim = a.d;
  s.params.beta = a.beta;
  s.params.horizon = a.N;
  s.env = GammaEnvSpec::shifted_pareto(a.gamma);
  s.base_seed = a.seed;
  s.replicas = a.replicas;
  s.workers = a.workers;
  FractionalMomentConfig fm;
  fm.theta = theta;
  fm.certified = !exploratory;
  fm.bootstrap_resamples = bootstrap;
  fm.validate(a.N);
  s.env.validate();
  s.params.validate();
  const auto b = fm_upper_bound(s, fm);
  json j;
  j["d"] = a.d;
  j["gamma"] = a.gamma;
  j["beta"] = a.beta;
  j["N"] = a.N;
  j["replicas"] = a.replicas;
  j["seed"] = a.seed;
  j["theta"] = theta;
  j["mode"] = fm.certified ? "certified" : "exploratory";
  j["bound"] = b.bound;
  j["bound_ucl"] = b.bound_ucl;
  j["mean_z_theta"] = b.mean_z_theta;
  j["se_z_theta"] = b.se_z_theta;
  j["plug_in"] = b.plug_in;
  j["jensen_ok"] = b.jensen_ok;
  j["negative"] = b.bound_ucl < 0.0;
  emit(j, out);
  return 0;
}

int cmd_fit(const std::string& input, int d, double gamma) {
  fs::path csv(input);
  if (fs::is_directory(csv)) csv /= "aggregate.csv";
  std::vector<AlphaPoint> pts;
  for (const auto& r : read_aggregate(csv)) {
    if (r.d == d && std::abs(r.gamma - gamma) < 1e-12) pts.push_back({r.beta, r.p_hat, r.se});
  }
  const ExponentFit f = fit_alpha(pts, d, gamma);
  json j;
  j["d"] = d;
  j["gamma"] = gamma;
  j["slope"] = f.slope;
  j["slope_se"] = f.slope_se;
  j["ci95"] = {f.ci_low, f.ci_high};
  j["reference_alpha"] = std::isfinite(f.reference) ? json(f.reference) : json("infinite");
  j["gamma_c"] = f.critical_gamma;
  json used = json::array();
  for (const auto& p : f.used) used.push_back({{"beta", p.beta}, {"p_hat", p.p_hat}, {"se", p.se}});
  j["points"] = used;
  j["rejected"] = f.rejected.size();
  std::cout << j.dump(2) << "\n";
  return 0;
}

int cmd_report(const std::string& input) {
  const fs::path root(input);
  const json manifest = json::parse(read_file(root / "manifest.json"));
  const auto rows = read_aggregate(root / "aggregate.csv");
  json j;
  j["config_hash"] = manifest.at("config_hash");
  j["cells"] = manifest.at("cells");
  json table = json::array();
  for (const auto& r : rows) {
    json e{{"cell", r.cell}, {"d", r.d},       {"gamma", r.gamma}, {"beta", r.beta},
           {"N", r.N},       {"p_hat", r.p_hat}, {"se", r.se},     {"diagnosis", r.diagnosis}};
    if (r.bound) e["bound"] = *r.bound;
    if (r.bound_ucl) e["bound_ucl"] = *r.bound_ucl;
    table.push_back(e);
  }
  j["rows"] = table;
  write_atomic(root / "report.json", j.dump(2) + "\n");
  std::cout << j.dump(2) << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"dpre: directed polymers in heavy-tailed random environments"};
  app.require_subcommand(1);

  double env_gamma = 1.5;
  std::uint64_t env_seed = 1;
  std::size_t env_draws = 1'000'000;
  std::string env_out;
  auto* env = app.add_subcommand("env-check", "run the environment battery");
  env->add_option("--gamma", env_gamma, "tail index")->capture_default_str();
  env->add_option("--seed", env_seed, "seed")->capture_default_str();
  env->add_option("--draws", env_draws, "number of draws")->capture_default_str();
  env->add_option("--out", env_out, "write the report here instead of stdout");

  CellArgs sim_args;
  std::string sim_out = "dpre-out";
  bool sim_oracle = false;
  bool sim_force = false;
  auto* sim = app.add_subcommand("simulate", "run replicas of one cell");
  add_cell_options(sim, sim_args);
  sim->add_option("--kappa", sim_args.kappa, "truncation exponent (0: untruncated)");
  sim->add_option("--out", sim_out, "output directory")->capture_default_str();
  sim->add_flag("--oracle", sim_oracle, "compare against path enumeration (small N)");
  sim->add_flag("--force", sim_force, "discard an output tree with a different config");

  std::string sweep_config;
  std::string sweep_out;
  int sweep_workers = 0;
  bool sweep_force = false;
  int stop_after = -1;
  auto* sweep = app.add_subcommand("sweep", "run every cell of a config file");
  sweep->add_option("config", sweep_config, "config file")->required();
  sweep->add_option("--out", sweep_out, "override the output directory");
  sweep->add_option("--workers", sweep_workers, "override the worker count");
  sweep->add_flag("--force", sweep_force, "discard an output tree with a different config");
  sweep->add_option("--stop-after-replicas", stop_after, "stop after writing this many replica files")
      ->group("");

  int pin_d = 3;
  double pin_gamma = 1.9;
  std::string pin_betas = "0.05";
  double pin_q = 0.8;
  std::string pin_ks = "2";
  int pin_nmax = 2000;
  int pin_replicas = 2000;
  std::uint64_t pin_seed = 1;
  int pin_workers = 1;
  std::string pin_out = "dpre-pinning";
  auto* pin = app.add_subcommand("pinning", "renewal kernel and the rho criterion");
  pin->add_option("--d", pin_d, "dimension")->capture_default_str();
  pin->add_option("--gamma", pin_gamma, "tail index")->capture_default_str();
  pin->add_option("--beta", pin_betas, "beta or comma-separated list")->capture_default_str();
  pin->add_option("--q", pin_q, "fractional exponent")->capture_default_str();
  pin->add_option("--k", pin_ks, "cutoff k or comma-separated list")->capture_default_str();
  pin->add_option("--n-max", pin_nmax, "kernel length")->capture_default_str();
  pin->add_option("--replicas", pin_replicas, "Monte Carlo replicas for A_j")->capture_default_str();
  pin->add_option("--seed", pin_seed, "seed")->capture_default_str();
  pin->add_option("--workers", pin_workers, "worker threads")->capture_default_str();
  pin->add_option("--out", pin_out, "output directory")->capture_default_str();

  CellArgs cert_args;
  double cert_theta = 0.5;
  bool cert_exploratory = false;
  int cert_bootstrap = 2000;
  std::string cert_out;
  auto* cert = app.add_subcommand("certify", "fractional-moment upper bound on the free energy");
  add_cell_options(cert, cert_args);
  cert->add_option("--theta", cert_theta, "fractional exponent")->capture_default_str();
  cert->add_flag("--exploratory", cert_exploratory, "allow theta > 1/2");
  cert->add_option("--bootstrap", cert_bootstrap, "bootstrap resamples")->capture_default_str();
  cert->add_option("--out", cert_out, "write the certificate here instead of stdout");

  std::string fit_input;
  int fit_d = 1;
  double fit_gamma = 1.5;
  auto* fit = app.add_subcommand("fit", "fit log|p| against log beta from an aggregate table");
  fit->add_option("input", fit_input, "aggregate.csv or sweep output directory")->required();
  fit->add_option("--d", fit_d, "dimension to select")->capture_default_str();
  fit->add_option("--gamma", fit_gamma, "tail index to select")->capture_default_str();

  std::string report_input;
  auto* report = app.add_subcommand("report", "summarize a sweep output directory");
  report->add_option("input", report_input, "sweep output directory")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 2;
  }

  try {
    if (*env) return cmd_env_check(env_gamma, env_seed, env_draws, env_out);
    if (*sim) return cmd_simulate(sim_args, sim_out, sim_oracle, sim_force);
    if (*sweep) {
      SweepConfig cfg = load_config(sweep_config);
      if (!sweep_out.empty()) cfg.output = sweep_out;
      if (sweep_workers > 0) cfg.workers = sweep_workers;
      SweepOptions opts;
      opts.force = sweep_force;
      if (stop_after >= 0) opts.stop_after_replicas = stop_after;
      return report_sweep(run_sweep(cfg, opts));
    }
    if (*pin) {
      return cmd_pinning(pin_d, pin_gamma, pin_betas, pin_q, pin_ks, pin_nmax, pin_replicas, pin_seed, pin_workers,
                         pin_out);
    }
    if (*cert) return cmd_certify(cert_args, cert_theta, cert_exploratory, cert_bootstrap, cert_out);
    if (*fit) return cmd_fit(fit_input, fit_d, fit_gamma);
    if (*report) return cmd_report(report_input);
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const DomainError& e) {
    std::cerr << "invalid input: " << e.what() << "\n";
    return 2;
  } catch (const DivergenceError& e) {
    std::cerr << "divergent: " << e.what() << "\n";
    return 2;
  } catch (const ResourceError& e) {
    std::cerr << "resource refusal: " << e.what() << "\n";
    return 3;
  } catch (const InsufficientDataError& e) {
    std::cerr << "insufficient data: " << e.what() << "\n";
    return kExitStatistical;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 1;
}
