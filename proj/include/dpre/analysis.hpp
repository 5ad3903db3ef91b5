#pragma once

// Estimators built on replica ensembles: free energy, fractional-moment upper
// bounds, weak/strong disorder diagnostics, exponent fits and the checks on
// the derivative and monotonicity of p(beta).

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "dpre/env.hpp"
#include "dpre/polymer.hpp"

namespace dpre {

// gamma_c(d) = 1 + 2/d.
double gamma_c(int dim);
// alpha(d, gamma) = gamma (gamma_c - 1) / (gamma_c - gamma); +inf for gamma >= gamma_c.
double reference_alpha(int dim, double gamma);

struct EnsembleSpec {
  ModelParams params;
  GammaEnvSpec env;
  std::uint64_t base_seed = 0;
  int replicas = 2;
  std::vector<int> schedule;  // empty: default_schedule(N)
  int workers = 1;

  std::uint64_t replica_seed(int i) const { return derive_seed(base_seed, static_cast<std::uint64_t>(i)); }
};

// Replica i uses EnvField(env, replica_seed(i)).
std::vector<ReplicaResult> run_ensemble(const EnsembleSpec& spec);

struct CheckpointMean {
  int n = 0;
  double mean = 0.0;  // mean of (1/n) log Z_n
  double se = 0.0;
};

struct FreeEnergyEstimate {
  double beta = 0.0;
  double gamma = 0.0;
  int dim = 1;
  int horizon = 0;
  int replicas = 0;
  double mean = 0.0;
  double se = 0.0;
  double median_of_means = 0.0;
  double ci_low = 0.0;  // two-sided 95%, Student t
  double ci_high = 0.0;
  std::vector<double> values;
  std::vector<CheckpointMean> trace;

  bool ci_excludes_zero() const { return ci_high < 0.0 || ci_low > 0.0; }
};

FreeEnergyEstimate free_energy_from(const std::vector<ReplicaResult>& results, const EnsembleSpec& spec);
FreeEnergyEstimate estimate_free_energy(const EnsembleSpec& spec);

struct FractionalMomentConfig {
  double theta = 0.5;
  // Optional factorisation N = n * m; only checked for consistency.
  std::optional<int> block_length;
  bool certified = true;
  int bootstrap_resamples = 2000;
  double confidence = 0.95;

  void validate(int horizon) const;
};

struct FractionalMomentBound {
  double theta = 0.5;
  int horizon = 0;
  int replicas = 0;
  bool certified = true;
  double bound = 0.0;      // (1/(N theta)) log mean Z^theta
  double bound_ucl = 0.0;  // one-sided bootstrap upper confidence limit
  double mean_z_theta = 1.0;
  double se_z_theta = 0.0;
  double plug_in = 0.0;  // mean of (1/N) log Z_N over the same replicas
  bool jensen_ok = true;
};

// Throws DomainError for theta outside (0,1) or theta > 1/2 when certified.
FractionalMomentBound fm_bound_from_log_z(std::span<const double> log_z, int horizon,
                                          const FractionalMomentConfig& config, std::uint64_t seed);
FractionalMomentBound fm_upper_bound(const EnsembleSpec& spec, const FractionalMomentConfig& config);

enum class Diagnosis { Weak, Strong, Inconclusive };
std::string to_string(Diagnosis d);

struct DiagnosisThresholds {
  double decay_decades = 1.0;        // strong: median W_N falls by more than this
  double overlap_growth = 2.0;       // strong: S(N) / S(sqrt N) at least this
  double stable_decades = 0.05;      // weak: |change of median log10 W_N| over [N/2, N]
  // weak: (S(N) - S(N/2)) / (S(N/2) - S(N/4)) at most this. Increments
  // I_n ~ n^-a give 2^(1-a), so values below 1 indicate a summable series.
  double increment_ratio = 0.85;
};

struct WeakDisorderProbe {
  Diagnosis label = Diagnosis::Inconclusive;
  std::vector<int> schedule;
  std::vector<double> median_log10_w;
  std::vector<double> median_overlap_sum;
  double decay_decades = 0.0;
  double overlap_growth = 0.0;
  double late_change_decades = 0.0;
  double late_overlap_rel = 0.0;  // (S(N) - S(N/2)) / S(N)
  double increment_ratio = 0.0;
  std::string reason;
};

// Requires common checkpoints across replicas including some n >= 1.
WeakDisorderProbe weak_disorder_probe(const std::vector<ReplicaResult>& results,
                                      const DiagnosisThresholds& thresholds = {});
// Adds floor(sqrt N), N/4 and N/2 to the schedule before running.
WeakDisorderProbe weak_disorder_probe(const EnsembleSpec& spec, const DiagnosisThresholds& thresholds = {});

struct AlphaPoint {
  double beta = 0.0;
  double p_hat = 0.0;
  double se = 0.0;
};

struct ExponentFit {
  int dim = 1;
  double gamma = 0.0;
  std::vector<AlphaPoint> used;
  std::vector<AlphaPoint> rejected;
  double slope = 0.0;
  double slope_se = 0.0;
  double ci_low = 0.0;
  double ci_high = 0.0;
  double intercept = 0.0;
  double reference = 0.0;
  double critical_gamma = 0.0;
};

// Least squares of log|p| on log beta over points with p + 1.96 se < 0.
// InsufficientDataError with the rejected points listed if fewer than 4 remain.
ExponentFit fit_alpha(std::span<const AlphaPoint> points, int dim, double gamma);

struct MarginalRow {
  double beta = 0.0;
  FreeEnergyEstimate estimate;
  FractionalMomentBound bound;
};

struct MarginalProbe {
  int dim = 1;
  double gamma = 0.0;
  std::vector<MarginalRow> rows;  // beta descending
  // slope of log|p| against log beta between consecutive rows (NaN if p >= 0)
  std::vector<double> local_slopes;
};

struct MarginalConfig {
  int dim = 3;
  double gamma = 5.0 / 3.0;
  std::vector<double> betas;
  int horizon = 100;
  int replicas = 20;
  double theta = 0.5;
  std::uint64_t base_seed = 0;
  int workers = 1;
};

// Requires gamma == gamma_c(dim) to 1e-12.
MarginalProbe marginal_probe(const MarginalConfig& config);

struct DerivativeCheck {
  double beta = 0.0;
  double step = 0.0;
  int horizon = 0;
  int replicas = 0;
  double finite_difference = 0.0;
  double finite_difference_se = 0.0;
  double formula = 0.0;
  double formula_se = 0.0;
  double difference = 0.0;
  double halfwidth = 0.0;  // 1.96 sqrt(se_fd^2 + se_formula^2)
  bool agree = false;
  bool formula_sign_ok = false;  // formula <= 3 se
};

// Common random numbers: replica i uses the same field at beta - h, beta, beta + h.
DerivativeCheck derivative_check(const EnsembleSpec& spec, double h);

struct MonotonicityCheck {
  std::vector<double> grid;
  std::vector<double> p_hat;
  std::vector<double> se;
  std::vector<double> diff;  // p(beta_{i+1}) - p(beta_i), paired
  std::vector<double> diff_se;
  bool non_increasing = true;  // every diff <= 2 diff_se
};

// spec.params.beta is ignored; grid must be increasing in [0,1).
MonotonicityCheck monotonicity_check(const EnsembleSpec& spec, std::span<const double> grid);

struct MartingaleCheck {
  double mean_ratio = 1.0;  // mean of Z_{n+1} / Z_n over resampled slices
  double se = 0.0;
  int resamples = 0;
  double z_score() const { return se > 0.0 ? (mean_ratio - 1.0) / se : 0.0; }
};

// One environment (EnvField(spec.env, replica_seed(0))) is advanced to time n;
// the slice n+1 is then redrawn `resamples` times. spec.params must be truncated.
MartingaleCheck martingale_step_check(const EnsembleSpec& spec, int n, int resamples);

struct TruncatedLowerHeuristic {
  double log_c_beta = 0.0;
  FreeEnergyEstimate truncated;
  double value = 0.0;  // log c_beta + truncated.mean; not a certificate
};

TruncatedLowerHeuristic truncated_lower_heuristic(const EnsembleSpec& spec, double kappa);

}  // namespace dpre
