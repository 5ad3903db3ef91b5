#include "dpre/analysis.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

#include "dpre/error.hpp"
#include "dpre/parallel.hpp"
#include "dpre/stats.hpp"

namespace dpre {

namespace {

constexpr double kZ95 = 1.959963984540054;

std::vector<int> schedule_of(const EnsembleSpec& spec) {
  std::vector<int> s = spec.schedule.empty() ? default_schedule(spec.params.horizon) : spec.schedule;
  s.push_back(spec.params.horizon);
  std::sort(s.begin(), s.end());
  s.erase(std::unique(s.begin(), s.end()), s.end());
  return s;
}

void require_replicas(int replicas) {
  if (replicas < 2) throw DomainError("ensemble: need at least 2 replicas");
}

std::vector<double> final_log_z(const std::vector<ReplicaResult>& results) {
  std::vector<double> out;
  out.reserve(results.size());
  for (const auto& r : results) out.push_back(r.checkpoints.back().log_z);
  return out;
}

// Index of the checkpoint n == target in `schedule`, or of the largest n <= target.
std::size_t index_at_or_below(const std::vector<int>& schedule, double target) {
  std::size_t best = 0;
  for (std::size_t i = 0; i < schedule.size(); ++i) {
    if (schedule[i] <= target) best = i;
  }
  return best;
}

}  // namespace

double gamma_c(int dim) {
  if (dim < 1) throw DomainError("gamma_c: dimension must be >= 1");
  return 1.0 + 2.0 / dim;
}

double reference_alpha(int dim, double gamma) {
  const double gc = gamma_c(dim);
  if (gamma >= gc) return std::numeric_limits<double>::infinity();
  return gamma * (gc - 1.0) / (gc - gamma);
}

std::vector<ReplicaResult> run_ensemble(const EnsembleSpec& spec) {
  spec.params.validate();
  spec.env.validate();
  require_replicas(spec.replicas);
  check_resources(spec.params);
  const auto schedule = schedule_of(spec);
  std::vector<ReplicaResult> results(static_cast<std::size_t>(spec.replicas));
  parallel_for(results.size(), spec.workers, [&](std::size_t i) {
    const std::uint64_t seed = spec.replica_seed(static_cast<int>(i));
    const EnvField field(spec.env, seed);
    results[i] = run_replica(spec.params, field, schedule, seed);
  });
  return results;
}

FreeEnergyEstimate free_energy_from(const std::vector<ReplicaResult>& results, const EnsembleSpec& spec) {
  require_replicas(static_cast<int>(results.size()));
  FreeEnergyEstimate e;
  e.beta = spec.params.beta;
  e.gamma = spec.env.gamma;
  e.dim = spec.params.dim;
  e.horizon = spec.params.horizon;
  e.replicas = static_cast<int>(results.size());
  const double N = spec.params.horizon;
  for (const auto& r : results) {
    if (r.checkpoints.empty() || r.checkpoints.back().n != spec.params.horizon) {
      throw DomainError("free energy: replica lacks the horizon checkpoint");
    }
    e.values.push_back(N > 0 ? r.checkpoints.back().log_z / N : 0.0);
  }
  const SampleSummary s = summarize(e.values, std::min<std::size_t>(10, e.values.size()));
  e.mean = s.mean;
  e.se = s.se;
  e.median_of_means = s.median_of_means;
  const double t = student_t_critical(0.05, e.values.size() - 1);
  e.ci_low = e.mean - t * e.se;
  e.ci_high = e.mean + t * e.se;

  const auto& first = results.front().checkpoints;
  for (std::size_t c = 0; c < first.size(); ++c) {
    const int n = first[c].n;
    if (n == 0) continue;
    std::vector<double> v;
    v.reserve(results.size());
    for (const auto& r : results) v.push_back(r.checkpoints.at(c).log_z / n);
    const SampleSummary cs = summarize(v, 1);
    e.trace.push_back({n, cs.mean, cs.se});
  }
  return e;
}

FreeEnergyEstimate estimate_free_energy(const EnsembleSpec& spec) {
  return free_energy_from(run_ensemble(spec), spec);
}

void FractionalMomentConfig::validate(int horizon) const {
  if (!(theta > 0.0 && theta < 1.0)) throw DomainError("fractional moment: theta must lie in (0,1)");
  if (certified && theta > 0.5) {
    std::ostringstream msg;
    msg << "fractional moment: theta = " << theta
        << " > 1/2 is refused in certified mode (E[Z^{2 theta}] not guaranteed finite)";
    throw DomainError(msg.str());
  }
  if (horizon < 1) throw DomainError("fractional moment: N must be >= 1");
  if (block_length && (*block_length < 1 || horizon % *block_length != 0)) {
    throw DomainError("fractional moment: N must be a multiple of the block length n");
  }
  if (bootstrap_resamples < 1) throw DomainError("fractional moment: need at least one bootstrap resample");
  if (!(confidence > 0.0 && confidence < 1.0)) throw DomainError("fractional moment: confidence must lie in (0,1)");
}

FractionalMomentBound fm_bound_from_log_z(std::span<const double> log_z, int horizon,
                                          const FractionalMomentConfig& config, std::uint64_t seed) {
  config.validate(horizon);
  require_replicas(static_cast<int>(log_z.size()));
  const double theta = config.theta;
  const double scale = 1.0 / (static_cast<double>(horizon) * theta);

  FractionalMomentBound b;
  b.theta = theta;
  b.horizon = horizon;
  b.replicas = static_cast<int>(log_z.size());
  b.certified = config.certified;

  std::vector<double> scaled(log_z.size());
  std::vector<double> z_theta(log_z.size());
  double plug = 0.0;
  for (std::size_t i = 0; i < log_z.size(); ++i) {
    scaled[i] = theta * log_z[i];
    z_theta[i] = std::exp(scaled[i]);
    plug += log_z[i];
  }
  b.plug_in = plug / (static_cast<double>(log_z.size()) * horizon);
  const SampleSummary s = summarize(z_theta, 1);
  b.mean_z_theta = s.mean;
  b.se_z_theta = s.se;
  b.bound = scale * log_mean_exp(scaled);
  // Concavity of log: the fractional bound dominates the plug-in mean sample by sample.
  b.jensen_ok = b.bound >= b.plug_in - 1e-12 * (1.0 + std::abs(b.plug_in));

  Rng rng(seed);
  std::vector<double> boot(static_cast<std::size_t>(config.bootstrap_resamples));
  std::vector<double> resample(scaled.size());
  for (double& out : boot) {
    for (double& v : resample) v = scaled[static_cast<std::size_t>(rng() % scaled.size())];
    out = scale * log_mean_exp(resample);
  }
  b.bound_ucl = std::max(b.bound, quantile_of(std::move(boot), config.confidence));
  return b;
}

FractionalMomentBound fm_upper_bound(const EnsembleSpec& spec, const FractionalMomentConfig& config) {
  config.validate(spec.params.horizon);
  EnsembleSpec s = spec;
  s.schedule = {spec.params.horizon};
  const auto log_z = final_log_z(run_ensemble(s));
  return fm_bound_from_log_z(log_z, spec.params.horizon, config, derive_seed(spec.base_seed, 0x626f6f74ULL));
}

std::string to_string(Diagnosis d) {
  switch (d) {
    case Diagnosis::Weak: return "weak-disorder-indicated";
    case Diagnosis::Strong: return "strong-disorder-indicated";
    case Diagnosis::Inconclusive: return "inconclusive";
  }
  return "inconclusive";
}

WeakDisorderProbe weak_disorder_probe(const std::vector<ReplicaResult>& results,
                                      const DiagnosisThresholds& th) {
  if (results.empty()) throw InsufficientDataError("weak_disorder_probe: no replicas");
  WeakDisorderProbe p;
  for (const auto& c : results.front().checkpoints) {
    if (c.n >= 1) p.schedule.push_back(c.n);
  }
  if (p.schedule.empty()) throw InsufficientDataError("weak_disorder_probe: no checkpoints with n >= 1");
  if (!std::is_sorted(p.schedule.begin(), p.schedule.end())) {
    throw DomainError("weak_disorder_probe: schedule must be increasing");
  }
  const std::size_t offset = results.front().checkpoints.size() - p.schedule.size();
  for (std::size_t c = 0; c < p.schedule.size(); ++c) {
    std::vector<double> lw;
    std::vector<double> ov;
    for (const auto& r : results) {
      const auto& cp = r.checkpoints.at(offset + c);
      if (cp.n != p.schedule[c]) throw DomainError("weak_disorder_probe: replicas disagree on checkpoints");
      lw.push_back(cp.log_z / std::log(10.0));
      ov.push_back(cp.overlap_sum);
    }
    p.median_log10_w.push_back(median(std::move(lw)));
    p.median_overlap_sum.push_back(median(std::move(ov)));
  }
  const std::size_t last = p.schedule.size() - 1;
  const double n_last = p.schedule[last];
  const std::size_t root = index_at_or_below(p.schedule, std::floor(std::sqrt(n_last)));
  const std::size_t mid = index_at_or_below(p.schedule, n_last / 2.0);
  const std::size_t quarter = index_at_or_below(p.schedule, n_last / 4.0);

  const double w_max = *std::max_element(p.median_log10_w.begin(), p.median_log10_w.end());
  p.decay_decades = w_max - p.median_log10_w[last];
  p.overlap_growth = p.median_overlap_sum[root] > 0.0
                         ? p.median_overlap_sum[last] / p.median_overlap_sum[root]
                         : std::numeric_limits<double>::infinity();
  p.late_change_decades = std::abs(p.median_log10_w[last] - p.median_log10_w[mid]);
  p.late_overlap_rel = p.median_overlap_sum[last] > 0.0
                           ? (p.median_overlap_sum[last] - p.median_overlap_sum[mid]) / p.median_overlap_sum[last]
                           : 0.0;
  {
    const double late = p.median_overlap_sum[last] - p.median_overlap_sum[mid];
    const double early = p.median_overlap_sum[mid] - p.median_overlap_sum[quarter];
    p.increment_ratio = early > 0.0 ? late / early : std::numeric_limits<double>::infinity();
    if (late <= 0.0 && early <= 0.0) p.increment_ratio = 0.0;
  }

  const bool decays = p.decay_decades > th.decay_decades;
  const bool grows = p.overlap_growth >= th.overlap_growth;
  const bool stable = p.late_change_decades <= th.stable_decades;
  const bool settles = mid != last && quarter != mid && p.increment_ratio <= th.increment_ratio && !grows;
  std::ostringstream why;
  why << "decay=" << p.decay_decades << " decades, S(N)/S(sqrt N)=" << p.overlap_growth
      << ", late W change=" << p.late_change_decades << " decades, S increment ratio=" << p.increment_ratio;
  p.reason = why.str();
  if (decays && grows) {
    p.label = Diagnosis::Strong;
  } else if (stable && settles) {
    p.label = Diagnosis::Weak;
  } else {
    p.label = Diagnosis::Inconclusive;
  }
  return p;
}

WeakDisorderProbe weak_disorder_probe(const EnsembleSpec& spec, const DiagnosisThresholds& thresholds) {
  EnsembleSpec s = spec;
  s.schedule = schedule_of(spec);
  const int N = spec.params.horizon;
  s.schedule.push_back(static_cast<int>(std::floor(std::sqrt(static_cast<double>(N)))));
  s.schedule.push_back(N / 4);
  s.schedule.push_back(N / 2);
  std::sort(s.schedule.begin(), s.schedule.end());
  s.schedule.erase(std::unique(s.schedule.begin(), s.schedule.end()), s.schedule.end());
  return weak_disorder_probe(run_ensemble(s), thresholds);
}

ExponentFit fit_alpha(std::span<const AlphaPoint> points, int dim, double gamma) {
  ExponentFit fit;
  fit.dim = dim;
  fit.gamma = gamma;
  fit.critical_gamma = gamma_c(dim);
  fit.reference = reference_alpha(dim, gamma);
  for (const auto& pt : points) {
    const bool ok = pt.beta > 0.0 && pt.p_hat < 0.0 && pt.p_hat + kZ95 * pt.se < 0.0;
    (ok ? fit.used : fit.rejected).push_back(pt);
  }
  if (fit.used.size() < 4) {
    std::ostringstream msg;
    msg << "fit_alpha: " << fit.used.size() << " admissible points, need 4; rejected:";
    for (const auto& pt : fit.rejected) msg << " (beta=" << pt.beta << ", p=" << pt.p_hat << ", se=" << pt.se << ")";
    throw InsufficientDataError(msg.str());
  }
  std::vector<double> x;
  std::vector<double> y;
  for (const auto& pt : fit.used) {
    x.push_back(std::log(pt.beta));
    y.push_back(std::log(-pt.p_hat));
  }
  const LinearFit lf = least_squares(x, y);
  fit.slope = lf.slope;
  fit.slope_se = lf.slope_se;
  fit.intercept = lf.intercept;
  const double t = student_t_critical(0.05, lf.n - 2);
  fit.ci_low = lf.slope - t * lf.slope_se;
  fit.ci_high = lf.slope + t * lf.slope_se;
  return fit;
}

MarginalProbe marginal_probe(const MarginalConfig& config) {
  if (std::abs(config.gamma - gamma_c(config.dim)) > 1e-12) {
    std::ostringstream msg;
    msg << "marginal_probe: gamma must equal gamma_c(" << config.dim << ") = " << gamma_c(config.dim)
        << ", got " << config.gamma;
    throw DomainError(msg.str());
  }
  if (config.betas.empty()) throw DomainError("marginal_probe: empty beta range");
  MarginalProbe out;
  out.dim = config.dim;
  out.gamma = config.gamma;
  std::vector<double> betas = config.betas;
  std::sort(betas.begin(), betas.end(), std::greater<>());
  FractionalMomentConfig fm;
  fm.theta = config.theta;
  for (double beta : betas) {
    EnsembleSpec s;
    s.params.dim = config.dim;
    s.params.beta = beta;
    s.params.horizon = config.horizon;
    s.env = GammaEnvSpec::shifted_pareto(config.gamma);
    s.base_seed = config.base_seed;
    s.replicas = config.replicas;
    s.schedule = {config.horizon};
    s.workers = config.workers;
    const auto results = run_ensemble(s);
    MarginalRow row;
    row.beta = beta;
    row.estimate = free_energy_from(results, s);
    row.bound = fm_bound_from_log_z(final_log_z(results), config.horizon, fm,
                                    derive_seed(config.base_seed, 0x626f6f74ULL));
    out.rows.push_back(std::move(row));
  }
  for (std::size_t i = 0; i + 1 < out.rows.size(); ++i) {
    const auto& a = out.rows[i];
    const auto& b = out.rows[i + 1];
    if (a.estimate.mean < 0.0 && b.estimate.mean < 0.0) {
      out.local_slopes.push_back(std::log(a.estimate.mean / b.estimate.mean) / std::log(a.beta / b.beta));
    } else {
      out.local_slopes.push_back(std::numeric_limits<double>::quiet_NaN());
    }
  }
  return out;
}

DerivativeCheck derivative_check(const EnsembleSpec& spec, double h) {
  spec.params.validate();
  require_replicas(spec.replicas);
  if (spec.params.truncation) throw DomainError("derivative_check: untruncated weights only");
  const double beta = spec.params.beta;
  if (!(h > 0.0) || beta - h <= 0.0 || beta + h >= 1.0) {
    throw DomainError("derivative_check: need beta +- h inside (0,1)");
  }
  const int N = spec.params.horizon;
  if (N < 1) throw DomainError("derivative_check: N must be >= 1");
  const auto R = static_cast<std::size_t>(spec.replicas);
  std::vector<double> fd(R);
  std::vector<double> formula(R);
  parallel_for(R, spec.workers, [&](std::size_t i) {
    const EnvField field(spec.env, spec.replica_seed(static_cast<int>(i)));
    ModelParams lo = spec.params;
    ModelParams hi = spec.params;
    lo.beta = beta - h;
    hi.beta = beta + h;
    fd[i] = (log_partition(hi, field) - log_partition(lo, field)) / (2.0 * h * N);
    formula[i] = quenched_score(spec.params, field).score / N;
  });
  DerivativeCheck d;
  d.beta = beta;
  d.step = h;
  d.horizon = N;
  d.replicas = spec.replicas;
  const SampleSummary a = summarize(fd, 1);
  const SampleSummary b = summarize(formula, 1);
  d.finite_difference = a.mean;
  d.finite_difference_se = a.se;
  d.formula = b.mean;
  d.formula_se = b.se;
  d.difference = a.mean - b.mean;
  d.halfwidth = kZ95 * std::sqrt(a.se * a.se + b.se * b.se);
  d.agree = std::abs(d.difference) <= d.halfwidth;
  d.formula_sign_ok = d.formula <= 3.0 * d.formula_se;
  return d;
}

MonotonicityCheck monotonicity_check(const EnsembleSpec& spec, std::span<const double> grid) {
  require_replicas(spec.replicas);
  if (grid.size() < 2) throw DomainError("monotonicity_check: need at least two grid points");
  for (std::size_t i = 0; i < grid.size(); ++i) {
    if (!(grid[i] >= 0.0 && grid[i] < 1.0) || (i > 0 && grid[i] <= grid[i - 1])) {
      throw DomainError("monotonicity_check: grid must be increasing in [0,1)");
    }
  }
  const int N = spec.params.horizon;
  if (N < 1) throw DomainError("monotonicity_check: N must be >= 1");
  const auto R = static_cast<std::size_t>(spec.replicas);
  const std::size_t G = grid.size();
  std::vector<double> p(G * R);  // p[g * R + i]
  parallel_for(R, spec.workers, [&](std::size_t i) {
    const EnvField field(spec.env, spec.replica_seed(static_cast<int>(i)));
    for (std::size_t g = 0; g < G; ++g) {
      ModelParams m = spec.params;
      m.beta = grid[g];
      m.truncation.reset();
      p[g * R + i] = log_partition(m, field) / N;
    }
  });
  MonotonicityCheck out;
  out.grid.assign(grid.begin(), grid.end());
  for (std::size_t g = 0; g < G; ++g) {
    const SampleSummary s = summarize(std::span<const double>(p.data() + g * R, R), 1);
    out.p_hat.push_back(s.mean);
    out.se.push_back(s.se);
  }
  for (std::size_t g = 0; g + 1 < G; ++g) {
    std::vector<double> d(R);
    for (std::size_t i = 0; i < R; ++i) d[i] = p[(g + 1) * R + i] - p[g * R + i];
    const SampleSummary s = summarize(d, 1);
    out.diff.push_back(s.mean);
    out.diff_se.push_back(s.se);
    if (s.mean > 2.0 * s.se) out.non_increasing = false;
  }
  return out;
}

MartingaleCheck martingale_step_check(const EnsembleSpec& spec, int n, int resamples) {
  spec.params.validate();
  if (!spec.params.truncation) throw DomainError("martingale_step_check: truncated weights required");
  if (n < 0 || resamples < 2) throw DomainError("martingale_step_check: need n >= 0 and >= 2 resamples");
  const EnvField field(spec.env, spec.replica_seed(0));
  DPFront front = DPFront::origin(spec.params.dim);
  for (int m = 0; m < n; ++m) front = step(front, spec.params, field);
  const double log_zn = front.log_z();
  std::vector<double> ratio(static_cast<std::size_t>(resamples));
  parallel_for(ratio.size(), spec.workers, [&](std::size_t j) {
    const EnvField redrawn = field.with_resampled_slice(n + 1, j);
    ratio[j] = std::exp(step(front, spec.params, redrawn).log_z() - log_zn);
  });
  const SampleSummary s = summarize(ratio, 1);
  return {s.mean, s.se, resamples};
}

TruncatedLowerHeuristic truncated_lower_heuristic(const EnsembleSpec& spec, double kappa) {
  EnsembleSpec s = spec;
  s.params.truncation = TruncationSpec::make(spec.env, spec.params.beta, kappa);
  TruncatedLowerHeuristic out;
  out.log_c_beta = s.params.truncation->log_c_beta;
  out.truncated = estimate_free_energy(s);
  out.value = out.log_c_beta + out.truncated.mean;
  return out;
}

}  // namespace dpre
