#include <cmath>
#include <vector>

#include "doctest.h"

#include "dpre/analysis.hpp"
#include "dpre/error.hpp"
#include "dpre/pinning.hpp"

using namespace dpre;

namespace {

EnsembleSpec ensemble(int dim, double gamma, double beta, int N, int R, std::uint64_t seed) {
  EnsembleSpec s;
  s.params.dim = dim;
  s.params.beta = beta;
  s.params.horizon = N;
  s.env = GammaEnvSpec::shifted_pareto(gamma);
  s.base_seed = seed;
  s.replicas = R;
  return s;
}

ReplicaResult synthetic(std::vector<Checkpoint> cps) {
  ReplicaResult r;
  r.checkpoints = std::move(cps);
  return r;
}

}  // namespace

TEST_CASE("critical exponent and reference alpha") {
  CHECK(gamma_c(1) == 3.0);
  CHECK(gamma_c(3) == doctest::Approx(5.0 / 3.0));
  CHECK(reference_alpha(1, 1.5) == doctest::Approx(2.0));
  CHECK(reference_alpha(3, 1.5) == doctest::Approx(6.0));
  CHECK(std::isinf(reference_alpha(3, 1.9)));
}

TEST_CASE("fit_alpha") {
  std::vector<AlphaPoint> pts;
  for (double b : {0.1, 0.2, 0.3, 0.5, 0.7}) pts.push_back({b, -b * b, 0.0});
  const auto fit = fit_alpha(pts, 1, 1.5);
  CHECK(std::abs(fit.slope - 2.0) <= 1e-9);
  CHECK(fit.reference == doctest::Approx(2.0));
  CHECK(fit.used.size() == 5);

  std::vector<AlphaPoint> cubic;
  for (double b : {0.05, 0.1, 0.2, 0.4}) cubic.push_back({b, -3.0 * std::pow(b, 3.0), 0.0});
  CHECK(std::abs(fit_alpha(cubic, 3, 1.5).slope - 3.0) <= 1e-9);

  // points whose interval reaches 0 are rejected
  std::vector<AlphaPoint> noisy = pts;
  noisy[0].se = 0.01;
  noisy[1].p_hat = 0.001;
  CHECK_THROWS_AS(fit_alpha(noisy, 1, 1.5), InsufficientDataError);
  noisy.push_back({0.9, -0.81, 0.01});
  const auto f2 = fit_alpha(noisy, 1, 1.5);
  CHECK(f2.used.size() == 4);
  CHECK(f2.rejected.size() == 2);
}

TEST_CASE("free energy at beta = 0 is exactly zero") {
  auto s = ensemble(2, 1.5, 0.0, 30, 4, 1);
  const auto fe = estimate_free_energy(s);
  CHECK(fe.mean == 0.0);
  CHECK(fe.se == 0.0);
  for (double v : fe.values) CHECK(v == 0.0);
}

TEST_CASE("free energy estimate") {
  auto s = ensemble(1, 1.5, 0.6, 300, 12, 4);
  const auto fe = estimate_free_energy(s);
  CHECK(fe.values.size() == 12);
  CHECK(fe.mean < 0.0);
  CHECK(fe.mean <= 3.0 * fe.se);
  CHECK(fe.ci_low < fe.mean);
  CHECK(fe.ci_high > fe.mean);
  CHECK(fe.trace.back().n == 300);
  CHECK(fe.trace.back().mean == doctest::Approx(fe.mean));
  // deterministic and independent of the worker count
  s.workers = 3;
  const auto again = estimate_free_energy(s);
  CHECK(again.values == fe.values);
  s.replicas = 1;
  CHECK_THROWS_AS(estimate_free_energy(s), DomainError);
}

TEST_CASE("fractional-moment bound") {
  FractionalMomentConfig cfg;
  const std::vector<double> zeros(10, 0.0);
  const auto b0 = fm_bound_from_log_z(zeros, 50, cfg, 1);
  CHECK(b0.bound == 0.0);
  CHECK(b0.bound_ucl == 0.0);

  cfg.theta = 0.9;
  CHECK_THROWS_AS(fm_bound_from_log_z(zeros, 50, cfg, 1), DomainError);
  cfg.certified = false;
  CHECK_NOTHROW(fm_bound_from_log_z(zeros, 50, cfg, 1));
  cfg.theta = 1.0;
  CHECK_THROWS_AS(fm_bound_from_log_z(zeros, 50, cfg, 1), DomainError);
  cfg = FractionalMomentConfig{};
  cfg.block_length = 7;
  CHECK_THROWS_AS(fm_bound_from_log_z(zeros, 50, cfg, 1), DomainError);

  // Jensen ordering on arbitrary data
  Rng rng(8);
  for (int rep = 0; rep < 50; ++rep) {
    std::vector<double> lz(20);
    for (double& v : lz) v = -30.0 * rng.uniform() + 5.0 * rng.uniform();
    FractionalMomentConfig c;
    c.theta = 0.1 + 0.4 * rng.uniform();
    c.bootstrap_resamples = 50;
    const auto b = fm_bound_from_log_z(lz, 40, c, 2);
    CHECK(b.jensen_ok);
    CHECK(b.bound >= b.plug_in);
    CHECK(b.bound_ucl >= b.bound);
    CHECK(std::isfinite(b.bound));
  }

  auto s = ensemble(1, 1.5, 0.0, 40, 5, 3);
  CHECK(fm_upper_bound(s, FractionalMomentConfig{}).bound == 0.0);
  s.params.beta = 0.5;
  const auto b = fm_upper_bound(s, FractionalMomentConfig{});
  CHECK(b.mean_z_theta <= 1.0 + 3.0 * b.se_z_theta);
  CHECK(b.jensen_ok);
}

TEST_CASE("weak disorder probe") {
  const auto weak = weak_disorder_probe(ensemble(3, 1.9, 0.0, 120, 3, 1));
  CHECK(weak.label == Diagnosis::Weak);
  CHECK(to_string(weak.label) == "weak-disorder-indicated");

  // synthetic strong disorder: W decays, overlap sums grow linearly
  std::vector<ReplicaResult> strong;
  for (int r = 0; r < 3; ++r) {
    std::vector<Checkpoint> cps;
    for (int n : {1, 2, 4, 8, 10, 16, 25, 32, 50, 64, 100}) cps.push_back({n, -0.1 * n, 0.5, 0.5 * n, 0.5});
    strong.push_back(synthetic(cps));
  }
  CHECK(weak_disorder_probe(strong).label == Diagnosis::Strong);

  // d = 1, beta = 0: W stays 1 but overlap sums grow like sqrt(n)
  CHECK(weak_disorder_probe(ensemble(1, 1.5, 0.0, 400, 2, 1)).label == Diagnosis::Inconclusive);

  DiagnosisThresholds strict;
  strict.increment_ratio = 0.1;
  CHECK(weak_disorder_probe(ensemble(3, 1.9, 0.0, 120, 2, 1), strict).label == Diagnosis::Inconclusive);
  CHECK_THROWS_AS(weak_disorder_probe(std::vector<ReplicaResult>{}), InsufficientDataError);
}

TEST_CASE("marginal probe") {
  MarginalConfig cfg;
  cfg.dim = 1;
  cfg.gamma = 1.5;
  cfg.betas = {0.5};
  CHECK_THROWS_AS(marginal_probe(cfg), DomainError);
  cfg.gamma = 3.0 - 1e-9;
  CHECK_THROWS_AS(marginal_probe(cfg), DomainError);

  MarginalConfig m;
  m.dim = 3;
  m.gamma = gamma_c(3);
  m.betas = {0.5, 0.8};
  m.horizon = 20;
  m.replicas = 6;
  const auto p = marginal_probe(m);
  REQUIRE(p.rows.size() == 2);
  CHECK(p.rows[0].beta == 0.8);
  CHECK(p.local_slopes.size() == 1);
  CHECK(p.rows[0].bound.bound < 0.0);
}

TEST_CASE("derivative check") {
  auto s = ensemble(1, 1.5, 0.5, 20, 60, 5);
  const auto d = derivative_check(s, 0.01);
  CHECK(d.agree);
  CHECK(d.formula_sign_ok);
  CHECK(d.formula < 0.0);

  // small beta: the formula tends to the centred mean
  auto s0 = ensemble(1, 1.9, 0.02, 20, 100, 6);
  const auto d0 = derivative_check(s0, 0.01);
  CHECK(std::abs(d0.formula) <= 4.0 * d0.formula_se + 0.05);

  s.params.beta = 0.005;
  CHECK_THROWS_AS(derivative_check(s, 0.01), DomainError);
}

TEST_CASE("monotonicity check") {
  auto s = ensemble(1, 1.5, 0.0, 50, 40, 9);
  const std::vector<double> grid{0.0, 0.3, 0.6, 0.9};
  const auto m = monotonicity_check(s, grid);
  CHECK(m.p_hat[0] == 0.0);
  CHECK(m.se[0] == 0.0);
  CHECK(m.non_increasing);
  for (std::size_t i = 0; i + 1 < m.p_hat.size(); ++i) CHECK(m.p_hat[i + 1] <= m.p_hat[i]);
  const std::vector<double> bad{0.3, 0.2};
  CHECK_THROWS_AS(monotonicity_check(s, bad), DomainError);
}

TEST_CASE("martingale step and truncated heuristic") {
  auto s = ensemble(2, 1.5, 0.3, 10, 2, 3);
  CHECK_THROWS_AS(martingale_step_check(s, 5, 100), DomainError);
  s.params.truncation = TruncationSpec::make(s.env, 0.3, 2.0);
  const auto m = martingale_step_check(s, 5, 2000);
  CHECK(std::abs(m.z_score()) <= 5.0);

  auto h = ensemble(1, 1.5, 0.4, 100, 8, 2);
  const auto t = truncated_lower_heuristic(h, 2.0);
  CHECK(t.log_c_beta < 0.0);
  CHECK(t.value == doctest::Approx(t.log_c_beta + t.truncated.mean));
}
