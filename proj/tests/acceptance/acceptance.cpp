// Acceptance suite. Usage: dpre_acceptance [criterion ...] (default: all).
// Prints one PASS/FAIL line per criterion; exit status 1 if any failed.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <iostream>
#include <map>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include <unistd.h>

#include "dpre/analysis.hpp"
#include "dpre/env.hpp"
#include "dpre/harness.hpp"
#include "dpre/lattice.hpp"
#include "dpre/pinning.hpp"
#include "dpre/polymer.hpp"
#include "dpre/stats.hpp"

namespace fs = std::filesystem;
using namespace dpre;

namespace {

struct Verdict {
  bool pass = false;
  std::string detail;
};

class Detail {
 public:
  template <class T>
  Detail& operator()(const std::string& key, const T& value) {
    if (!first_) out_ << ", ";
    first_ = false;
    out_ << key << '=' << value;
    return *this;
  }
  std::string str() const { return out_.str(); }

 private:
  std::ostringstream out_;
  bool first_ = true;
};

int workers() { return static_cast<int>(std::max(1U, std::thread::hardware_concurrency())); }

fs::path scratch_dir(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("dpre_acceptance_" + std::to_string(::getpid())) / name;
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

// 1. Transfer matrix against path enumeration.
Verdict oracle_equivalence() {
  double worst = 0.0;
  int cases = 0;
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    const EnvField field(GammaEnvSpec::shifted_pareto(1.3 + 0.006 * static_cast<double>(seed)), seed);
    const double beta = 0.05 + 0.009 * static_cast<double>(seed);
    for (auto [dim, n_max] : {std::pair{1, 10}, std::pair{2, 6}}) {
      for (int N = 1; N <= n_max; ++N) {
        ModelParams p;
        p.dim = dim;
        p.beta = beta;
        p.horizon = N;
        const double z_dp = std::exp(log_partition(p, field));
        const double z_enum = brute_force_Z(p, field);
        worst = std::max(worst, std::abs(z_dp - z_enum) / z_enum);
        ++cases;
      }
    }
  }
  return {worst <= 1e-10, Detail()("cases", cases)("max_rel_err", worst)("tol", 1e-10).str()};
}

// 2. Renewal kernel exactness.
Verdict renewal_exactness() {
  const auto k1 = RenewalKernel::build(1, 200);
  const auto k2 = RenewalKernel::build(2, 200);
  const auto k3 = RenewalKernel::build(3, 200);
  const double e1 = std::max(std::abs(k1.K[1] - 0.5), std::abs(k1.K[2] - 0.125));
  const double e3 = std::abs(k3.K[1] - 1.0 / 6.0);
  const double res = std::max({renewal_residual(k1), renewal_residual(k2), renewal_residual(k3)});

  // 1 - sum_{n<=M} K(n) against 1 / sum_{n<=M} u(n); both tails are bounded
  // with the envelope c n^{-3/2}, c the largest value over the last decade.
  const int M = k3.n_max;
  double cu = 0.0;
  double ck = 0.0;
  for (int n = M / 10; n <= M; ++n) {
    cu = std::max(cu, k3.u[n] * std::pow(n, 1.5));
    ck = std::max(ck, k3.K[n] * std::pow(n, 1.5));
  }
  const double tail_u = 2.0 * cu / std::sqrt(static_cast<double>(M));
  const double tail_k = 2.0 * ck / std::sqrt(static_cast<double>(M));
  double sum_u = 0.0;
  for (double v : k3.u) sum_u += v;
  const double gap = std::abs((1.0 - k3.partial_sum_K[M]) - 1.0 / sum_u);
  const double tail_bound = tail_k + tail_u / (sum_u * sum_u);
  const bool pass = e1 <= 1e-12 && e3 <= 1e-12 && res <= 1e-12 && gap <= tail_bound;
  return {pass, Detail()("d1_K_err", e1)("d3_K1_err", e3)("max_residual", res)("d3_gap", gap)(
                    "tail_bound", tail_bound)
                    .str()};
}

// 3. beta = 0 overlap equals the collision probability.
Verdict overlap_identity() {
  double worst = 0.0;
  for (int dim : {1, 3}) {
    const auto u = collision_prob(dim, 50);
    ModelParams p;
    p.dim = dim;
    p.horizon = 50;
    std::vector<int> schedule(51);
    for (int n = 0; n <= 50; ++n) schedule[n] = n;
    const ConstantDisorder zero;
    const auto r = run_replica(p, zero, schedule, 0);
    for (int n = 1; n <= 50; ++n) worst = std::max(worst, std::abs(r.checkpoints[n].overlap - u[n]));
  }
  return {worst <= 1e-12, Detail()("max_abs_err", worst)("tol", 1e-12).str()};
}

// 4. Environment battery.
Verdict environment_battery() {
  bool pass = true;
  Detail d;
  for (double g : {1.3, 1.5, 1.9}) {
    const auto report = run_env_battery(GammaEnvSpec::shifted_pareto(g), 20240601);
    std::ostringstream line;
    for (const auto& c : report.checks) {
      if (c.name == "support_min" || c.name == "hill_tail_index" || c.name == "tail_constant" ||
          c.name.rfind("tilt_identity", 0) == 0) {
        pass = pass && c.pass;
        if (!c.pass) line << "FAILED:" << c.name << ' ';
      }
      if (c.name == "hill_tail_index") line << "hill=" << c.value << ' ';
      if (c.name == "tail_constant") line << "tail_rel=" << c.value;
    }
    d("gamma=" + std::to_string(g).substr(0, 3), "[" + line.str() + "]");
  }
  return {pass, d.str()};
}

// 5. Normalization and martingale property.
Verdict normalization() {
  bool pass = true;
  Detail d;
  const auto env = GammaEnvSpec::shifted_pareto(1.5);
  for (int dim : {1, 3}) {
    EnsembleSpec s;
    s.params.dim = dim;
    s.params.beta = 0.3;
    s.params.horizon = 20;
    s.params.truncation = TruncationSpec::make(env, 0.3, 2.0);
    s.env = env;
    s.base_seed = 500 + static_cast<std::uint64_t>(dim);
    s.replicas = 10000;
    s.schedule = {20};
    s.workers = workers();
    std::vector<double> z;
    for (const auto& r : run_ensemble(s)) z.push_back(std::exp(r.checkpoints.back().log_z));
    const auto sz = summarize(z, 1);
    const double zscore = (sz.mean - 1.0) / sz.se;
    pass = pass && std::abs(zscore) <= 5.0;

    const auto mart = martingale_step_check(s, 19, 10000);
    pass = pass && std::abs(mart.z_score()) <= 5.0;

    EnsembleSpec u = s;
    u.params.truncation.reset();
    u.base_seed += 100;
    std::vector<double> log_z;
    for (const auto& r : run_ensemble(u)) log_z.push_back(r.checkpoints.back().log_z);
    std::ostringstream fm;
    for (double theta : {0.25, 0.5}) {
      std::vector<double> zt;
      for (double l : log_z) zt.push_back(std::exp(theta * l));
      const auto st = summarize(zt, 1);
      const bool ok = st.mean <= 1.0 + 3.0 * st.se;
      pass = pass && ok;
      fm << "E[Z^" << theta << "]=" << st.mean << (ok ? "" : "(FAIL)") << ' ';
    }
    d("d" + std::to_string(dim) + "_meanZ_z", zscore)("d" + std::to_string(dim) + "_martingale_z", mart.z_score())(
        "d" + std::to_string(dim) + "_untruncated", "[" + fm.str() + "]");
  }
  return {pass, d.str()};
}

// 6. Strong disorder, d = 1, gamma = 1.5.
Verdict strong_disorder() {
  EnsembleSpec s;
  s.params.dim = 1;
  s.params.beta = 0.8;
  s.params.horizon = 2000;
  s.env = GammaEnvSpec::shifted_pareto(1.5);
  s.base_seed = 6;
  s.replicas = 50;
  s.workers = workers();
  const auto results = run_ensemble(s);
  const auto fe = free_energy_from(results, s);
  std::vector<double> log_z;
  for (const auto& r : results) log_z.push_back(r.checkpoints.back().log_z);
  FractionalMomentConfig fm;
  fm.theta = 0.5;
  const auto b = fm_bound_from_log_z(log_z, 2000, fm, derive_seed(s.base_seed, 0x626f6f74ULL));
  const bool pass = fe.mean < 0.0 && fe.ci_high < 0.0 && b.bound_ucl < 0.0 && b.jensen_ok;
  return {pass, Detail()("p_hat", fe.mean)("ci95", "[" + std::to_string(fe.ci_low) + ", " + std::to_string(fe.ci_high) + "]")(
                    "fm_bound", b.bound)("fm_ucl", b.bound_ucl)
                    .str()};
}

// 7. Weak disorder, d = 3, gamma = 1.9.
Verdict weak_disorder() {
  EnsembleSpec s;
  s.params.dim = 3;
  s.params.beta = 0.05;
  s.params.horizon = 200;
  s.env = GammaEnvSpec::shifted_pareto(1.9);
  s.base_seed = 7;
  s.replicas = 50;
  s.workers = workers();
  const auto results = run_ensemble(s);
  const auto fe = free_energy_from(results, s);
  const auto probe = weak_disorder_probe(results);
  const bool pass = probe.label == Diagnosis::Weak && fe.ci_low <= 0.0 && fe.ci_high >= 0.0;
  return {pass, Detail()("diagnosis", to_string(probe.label))("p_hat", fe.mean)(
                    "ci95", "[" + std::to_string(fe.ci_low) + ", " + std::to_string(fe.ci_high) + "]")(
                    "probe", probe.reason)
                    .str()};
}

// 8. rho criterion below one somewhere in a (beta, k) scan.
Verdict rho_scan() {
  const auto spec = GammaEnvSpec::shifted_pareto(1.9);
  const auto kernel = RenewalKernel::build(3, 5000);
  double best = std::numeric_limits<double>::infinity();
  double best_beta = 0.0;
  int best_k = 0;
  for (double beta : {0.2, 0.1, 0.05, 0.02, 0.01}) {
    PinningParams p{0.8, beta, 20, TiltedEnvSpec{spec, beta}};
    const auto A = estimate_A(p, kernel, 19, 2000, derive_seed(8, static_cast<std::uint64_t>(beta * 1e4)),
                              workers());
    for (int k : {2, 3, 5, 10, 20}) {
      p.k = k;
      const auto r = rho_criterion(p, kernel, A);
      if (r.upper() < best) {
        best = r.upper();
        best_beta = beta;
        best_k = k;
      }
    }
  }
  return {best < 1.0, Detail()("best_upper", best)("beta", best_beta)("k", best_k).str()};
}

// 9. Exponent diagnostic, d = 1, gamma = 1.5.
Verdict exponent_fit() {
  std::vector<AlphaPoint> pts;
  for (double beta : {0.3, 0.4, 0.5, 0.6, 0.7, 0.8}) {
    EnsembleSpec s;
    s.params.dim = 1;
    s.params.beta = beta;
    s.params.horizon = 2000;
    s.env = GammaEnvSpec::shifted_pareto(1.5);
    s.base_seed = 9;
    s.replicas = 30;
    s.schedule = {2000};
    s.workers = workers();
    const auto fe = estimate_free_energy(s);
    pts.push_back({beta, fe.mean, fe.se});
  }
  try {
    const auto fit = fit_alpha(pts, 1, 1.5);
    const bool pass = fit.used.size() >= 4 && fit.slope >= 1.0 && fit.slope <= 3.0;
    return {pass, Detail()("slope", fit.slope)("ci95", "[" + std::to_string(fit.ci_low) + ", " +
                                                           std::to_string(fit.ci_high) + "]")(
                      "reference_alpha", fit.reference)("points", fit.used.size())
                      .str()};
  } catch (const std::exception& e) {
    return {false, e.what()};
  }
}

// 10. Truncated moment ratio tends to one.
Verdict truncated_moment() {
  const auto spec = GammaEnvSpec::shifted_pareto(1.5);
  const double kappa = 5.0;
  const double q = 0.7;
  const auto window = kappa_window(spec, 3, 3.0);
  std::vector<double> values;
  bool exponent_ok = true;
  for (double beta : {1e-1, 1e-2, 1e-3}) {
    const auto r = truncated_moment_ratio(TruncationSpec::make(spec, beta, kappa), q);
    values.push_back(r.value);
    exponent_ok = exponent_ok && r.exponent_ok;
  }
  const bool approaching =
      std::abs(values[2] - 1.0) < std::abs(values[1] - 1.0) && std::abs(values[1] - 1.0) < std::abs(values[0] - 1.0);
  const bool pass = window.contains(kappa) && exponent_ok && approaching && std::abs(values[2] - 1.0) <= 0.05;
  return {pass, Detail()("window", "(" + std::to_string(window.lo) + ", " + std::to_string(window.hi) + ")")(
                    "ratio_1e-1", values[0])("ratio_1e-2", values[1])("ratio_1e-3", values[2])
                    .str()};
}

// 11. Derivative formula and monotonicity of p.
Verdict derivative_and_monotonicity() {
  EnsembleSpec s;
  s.params.dim = 1;
  s.params.beta = 0.5;
  s.params.horizon = 30;
  s.env = GammaEnvSpec::shifted_pareto(1.5);
  s.base_seed = 11;
  s.replicas = 200;
  s.workers = workers();
  const auto dc = derivative_check(s, 0.01);

  EnsembleSpec m = s;
  m.params.horizon = 200;
  m.base_seed = 12;
  const std::vector<double> grid{0.0, 0.2, 0.4, 0.6, 0.8};
  const auto mc = monotonicity_check(m, grid);
  const bool pass = dc.agree && dc.formula_sign_ok && mc.non_increasing && mc.p_hat[0] == 0.0;
  std::ostringstream diffs;
  for (std::size_t i = 0; i < mc.diff.size(); ++i) diffs << (i ? " " : "") << mc.diff[i] / mc.diff_se[i];
  return {pass, Detail()("fd", dc.finite_difference)("formula", dc.formula)("diff", dc.difference)(
                    "halfwidth", dc.halfwidth)("p_hat0", mc.p_hat[0])("diff_over_se", "[" + diffs.str() + "]")
                    .str()};
}

// 12. Harness determinism across worker counts and interruption.
Verdict harness_determinism() {
  SweepConfig cfg;
  cfg.base_seed = 12;
  for (double beta : {0.0, 0.4, 0.8}) {
    CellSpec c;
    c.d = 1;
    c.gamma = 1.5;
    c.beta = beta;
    c.N = 300;
    c.replicas = 12;
    c.theta = 0.5;
    cfg.cells.push_back(c);
  }
  CellSpec c3;
  c3.d = 2;
  c3.gamma = 1.7;
  c3.beta = 0.3;
  c3.N = 40;
  c3.replicas = 6;
  c3.kappa = 3.0;
  cfg.cells.push_back(c3);

  const fs::path root = scratch_dir("harness");
  auto run = [&](const std::string& name, int w, std::optional<int> stop) {
    SweepConfig c = cfg;
    c.output = (root / name).string();
    c.workers = w;
    SweepOptions o;
    o.stop_after_replicas = stop;
    return run_sweep(c, o);
  };
  const auto a = run("w2", 2, std::nullopt);
  const auto b = run("w8", 8, std::nullopt);
  const auto interrupted = run("resume", 3, 7);
  const auto resumed = run("resume", 3, std::nullopt);
  const std::string ca = read_file(a.aggregate);
  const std::string cb = read_file(b.aggregate);
  const std::string cr = read_file(resumed.aggregate);
  const bool manifests = read_file(a.manifest) == read_file(b.manifest) && read_file(a.manifest) == read_file(resumed.manifest);
  const bool pass = a.complete && b.complete && !interrupted.complete && resumed.complete && ca == cb && ca == cr &&
                    manifests && std::count(ca.begin(), ca.end(), '\n') == 5;
  fs::remove_all(root.parent_path());
  return {pass, Detail()("bytes", ca.size())("w2_eq_w8", ca == cb)("resume_eq", ca == cr)(
                    "interrupted_incomplete", !interrupted.complete)("manifests_eq", manifests)
                    .str()};
}

struct Criterion {
  int id;
  const char* name;
  std::function<Verdict()> run;
};

}  // namespace

int main(int argc, char** argv) {
  const std::vector<Criterion> all{
      {1, "oracle equivalence", oracle_equivalence},
      {2, "renewal exactness", renewal_exactness},
      {3, "overlap identity at beta=0", overlap_identity},
      {4, "environment battery", environment_battery},
      {5, "normalization and martingale", normalization},
      {6, "strong disorder d=1", strong_disorder},
      {7, "weak disorder d=3", weak_disorder},
      {8, "rho criterion scan", rho_scan},
      {9, "exponent diagnostic", exponent_fit},
      {10, "truncated moment ratio", truncated_moment},
      {11, "derivative and monotonicity", derivative_and_monotonicity},
      {12, "harness determinism", harness_determinism},
  };
  std::vector<int> selected;
  for (int i = 1; i < argc; ++i) selected.push_back(std::stoi(argv[i]));
  int failures = 0;
  for (const auto& c : all) {
    if (!selected.empty() && std::find(selected.begin(), selected.end(), c.id) == selected.end()) continue;
    const auto t0 = std::chrono::steady_clock::now();
    Verdict v;
    try {
      v = c.run();
    } catch (const std::exception& e) {
      v = {false, std::string("exception: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    char head[128];
    std::snprintf(head, sizeof head, "%s #%02d %-30s (%.1f s) ", v.pass ? "PASS" : "FAIL", c.id, c.name, secs);
    std::cout << head << v.detail << std::endl;
    if (!v.pass) ++failures;
  }
  return failures == 0 ? 0 : 1;
}
