#pragma once

// Heavy-tailed disorder laws on the space-time lattice.
//
// The base law is the shifted Pareto family
//
//     omega = (gamma - 1) * Y - gamma,   P[Y > y] = y^{-gamma}, y >= 1,
//
// which has min(omega) = -1, E[omega] = 0 and
// P[omega > x] ~ (gamma - 1)^gamma x^{-gamma}. On top of it live the
// size-biased ("tilted") law with density (1 + beta*omega) against the base,
// and the truncated variant weighted by (1 + beta*min(omega, L)) / c_beta with
// L = beta^{-kappa}.

#include <cstdint>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include "dpre/rng.hpp"

namespace dpre {

enum class EnvFamily { ShiftedPareto };

std::string to_string(EnvFamily family);
EnvFamily env_family_from_string(const std::string& name);

struct GammaEnvSpec {
  double gamma = 1.5;
  EnvFamily family = EnvFamily::ShiftedPareto;

  static GammaEnvSpec shifted_pareto(double gamma);

  // C_P in P[omega > x] ~ C_P x^{-gamma}.
  double tail_constant() const;
  // Throws DomainError unless 1 < gamma < 2.
  void validate() const;
};

struct TiltedEnvSpec {
  GammaEnvSpec base;
  double beta = 0.0;

  void validate() const;
};

struct TruncationSpec {
  GammaEnvSpec base;
  double beta = 0.0;
  double kappa = 1.0;
  double level = std::numeric_limits<double>::infinity();  // beta^{-kappa}
  double c_beta = 1.0;
  double log_c_beta = 0.0;

  // Fills level and the normalizer (by quadrature).
  static TruncationSpec make(const GammaEnvSpec& base, double beta, double kappa);
  void validate() const;
};

// Admissible kappa window (lo, hi) for a lower-bound experiment with slack
// epsilon: (gc/(gc-gamma) - eps/(gamma-1), gc/(gc-gamma)), gc = 1 + 2/d.
struct KappaWindow {
  double lo;
  double hi;
  bool contains(double kappa) const { return kappa > lo && kappa < hi; }
};
KappaWindow kappa_window(const GammaEnvSpec& spec, int dim, double epsilon);

// --- closed-form law -------------------------------------------------------

// omega with P[omega > omega] = u; u in (0,1].
double quantile(const GammaEnvSpec& spec, double u);
double survival(const GammaEnvSpec& spec, double x);
double cdf(const GammaEnvSpec& spec, double x);
double density(const GammaEnvSpec& spec, double x);
// Location shift making omega + anchor an exact Pareto variable; the natural
// input for a Hill estimate on this family.
double tail_anchor(const GammaEnvSpec& spec);

// E[(1 + beta*omega) 1{omega > x}] (survival function of the tilted law).
double tilted_survival(const TiltedEnvSpec& spec, double x);
// Survival function of the truncated tilted draw min(omega~, L).
double truncated_tilted_survival(const TruncationSpec& spec, double x);

// --- sampling --------------------------------------------------------------

// Inverse-CDF realizations. u is a survival level in (0,1].
double tilted_from_uniform(const TiltedEnvSpec& spec, double u);
double truncated_tilted_from_uniform(const TruncationSpec& spec, double u);

inline double sample(const GammaEnvSpec& spec, Rng& rng) { return quantile(spec, rng.uniform()); }
inline double sample_tilted(const TiltedEnvSpec& spec, Rng& rng) {
  return tilted_from_uniform(spec, rng.uniform());
}
inline double sample_truncated_tilted(const TruncationSpec& spec, Rng& rng) {
  return truncated_tilted_from_uniform(spec, rng.uniform());
}

// --- moment functionals ----------------------------------------------------

enum class MomentStatus { Finite, Divergent };

struct MomentValue {
  double value = 0.0;  // +inf when divergent
  MomentStatus status = MomentStatus::Finite;
  bool finite() const { return status == MomentStatus::Finite; }
};

// E[(1 + beta*omega)^{1+q}]; divergent exactly when q >= gamma - 1.
// Throws NumericalError if the quadrature does not reach its tolerance.
MomentValue moment_m(const GammaEnvSpec& spec, double beta, double q);

// E[omega] by quadrature (zero analytically).
double mean_by_quadrature(const GammaEnvSpec& spec);

struct CBeta {
  double value;
  double log_value;
};
// c_beta = E[1 + beta*min(omega, L)] computed from the quadrature of the
// deficit E[(omega - L)^+]; log_value via log1p.
CBeta c_beta(const GammaEnvSpec& base, double beta, double kappa);
inline CBeta c_beta(const TruncationSpec& spec) { return c_beta(spec.base, spec.beta, spec.kappa); }

struct TruncatedMomentRatio {
  double value = 1.0;
  // (1 - kappa)(1 + q) + kappa*gamma; the limit -> 1 needs it positive.
  double exponent = 0.0;
  bool exponent_ok = true;
  std::string warning;
};
// E[((1 + beta*min(omega, L)) / c_beta)^{1+q}], q in (0,1).
TruncatedMomentRatio truncated_moment_ratio(const TruncationSpec& spec, double q);

// Hill estimator of the tail index from the k = floor(top_fraction * n) largest
// samples. Requires n >= 10^4, top_fraction in (0, 0.1] and a positive
// threshold order statistic.
double hill_tail_estimate(std::span<const double> samples, double top_fraction);

// --- disorder fields -------------------------------------------------------

// A space-time field omega(n, x), n >= 1, x in Z^d. Rows are the unit the
// transfer matrix consumes: fixed time, fixed first d-1 coordinates, and last
// coordinate z = -radius, -radius+2, ..., radius.
class Disorder {
 public:
  virtual ~Disorder() = default;
  virtual double value(std::int64_t n, std::span<const int> x) const = 0;
  virtual void row(std::int64_t n, std::span<const int> prefix, int radius,
                   std::span<double> out) const;
};

// Counter-based field: omega(seed, n, x) = quantile(spec, U(hash(seed, n, x))).
// Immutable and safe to share between threads.
class EnvField final : public Disorder {
 public:
  EnvField(GammaEnvSpec spec, std::uint64_t seed);

  const GammaEnvSpec& spec() const { return spec_; }
  std::uint64_t seed() const { return seed_; }

  double uniform(std::int64_t n, std::span<const int> x) const;
  double value(std::int64_t n, std::span<const int> x) const override;
  void row(std::int64_t n, std::span<const int> prefix, int radius,
           std::span<double> out) const override;

  // Same field except that the whole time slice n is redrawn under `key`.
  EnvField with_resampled_slice(std::int64_t n, std::uint64_t key) const;

 private:
  std::uint64_t slice_key(std::int64_t n) const;

  GammaEnvSpec spec_;
  std::uint64_t seed_;
  double inv_gamma_;
  std::int64_t resampled_time_ = -1;
  std::uint64_t resample_key_ = 0;
};

// omega == c everywhere.
class ConstantDisorder final : public Disorder {
 public:
  explicit ConstantDisorder(double c = 0.0) : c_(c) {}
  double value(std::int64_t, std::span<const int>) const override { return c_; }

 private:
  double c_;
};

// Explicit values at listed sites, `fallback` elsewhere.
class TableDisorder final : public Disorder {
 public:
  explicit TableDisorder(double fallback = 0.0) : fallback_(fallback) {}
  void set(std::int64_t n, std::vector<int> x, double omega);
  double value(std::int64_t n, std::span<const int> x) const override;

 private:
  struct Entry {
    std::int64_t n;
    std::vector<int> x;
    double omega;
  };
  std::vector<Entry> entries_;
  double fallback_;
};

// --- statistical battery ---------------------------------------------------

struct BatteryCheck {
  std::string name;
  double value;
  double threshold;
  bool pass;
  std::string detail;
  // Informational checks are reported but do not affect the verdict.
  bool gating = true;
};

struct EnvBatteryConfig {
  std::size_t draws = 1'000'000;
  double tilt_beta = 0.3;
  double hill_top_fraction = 0.01;
  double hill_tolerance = 0.1;
  double tail_x = 1e3;
  double tail_rel_tolerance = 0.02;
  double tilt_se_multiple = 4.0;
  std::size_t mean_blocks = 100;
  double mean_tolerance = 0.05;
  // Below this gamma the median of block means is visibly biased at 10^4
  // draws per block, so the empirical mean check is informational only.
  double mean_gate_min_gamma = 1.5;
};

struct EnvBatteryReport {
  GammaEnvSpec spec;
  std::uint64_t seed;
  std::vector<BatteryCheck> checks;
  bool pass() const;
};

// Support, centering, tail index, tail constant and tilt identity on
// `draws` field values keyed by `seed`.
EnvBatteryReport run_env_battery(const GammaEnvSpec& spec, std::uint64_t seed,
                                 const EnvBatteryConfig& config = {});

}  // namespace dpre
