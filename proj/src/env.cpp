#include "dpre/env.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

#include <boost/math/quadrature/exp_sinh.hpp>
#include <boost/math/quadrature/gauss_kronrod.hpp>

#include "dpre/error.hpp"

namespace dpre {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

// Tolerance handed to the Gauss-Kronrod panels; the public contracts ask for
// 1e-9 relative, the slack absorbs panel accumulation.
constexpr double kPanelTol = 1e-12;

// Integral of f over [a, b] split into unit-width panels (in the integration
// variable), each refined adaptively.
template <class F>
double integrate_panels(F&& f, double a, double b, double rel_tol) {
  using boost::math::quadrature::gauss_kronrod;
  if (!(b > a)) return 0.0;
  const int panels = std::max(1, static_cast<int>(std::ceil(b - a)));
  const double width = (b - a) / panels;
  double total = 0.0;
  double total_err = 0.0;
  double total_abs = 0.0;
  for (int i = 0; i < panels; ++i) {
    const double lo = a + i * width;
    const double hi = (i + 1 == panels) ? b : lo + width;
    double err = 0.0;
    double l1 = 0.0;
    const double v = gauss_kronrod<double, 31>::integrate(f, lo, hi, 20, kPanelTol, &err, &l1);
    total += v;
    total_err += err;
    total_abs += l1;
  }
  if (!std::isfinite(total) || total_err > rel_tol * std::max(total_abs, 1e-300) + 1e-300) {
    std::ostringstream msg;
    msg << "quadrature did not converge: value " << total << ", error estimate " << total_err;
    throw NumericalError(msg.str());
  }
  return total;
}

double pareto_scale(const GammaEnvSpec& s) { return s.gamma - 1.0; }

// Body of E[g(omega)] over Y in [1, e^{s_max}], integrated in s = log Y.
template <class G>
double body_expectation(const GammaEnvSpec& spec, G&& g, double s_max, double rel_tol) {
  const double a = pareto_scale(spec);
  const double gm = spec.gamma;
  auto integrand = [&](double s) {
    const double omega = a * std::exp(s) - gm;
    return g(omega) * gm * std::exp(-gm * s);
  };
  return integrate_panels(integrand, 0.0, s_max, rel_tol);
}

void check_beta(double beta, const char* what) {
  if (!(beta >= 0.0 && beta < 1.0)) {
    std::ostringstream msg;
    msg << what << ": beta must lie in [0,1), got " << beta;
    throw DomainError(msg.str());
  }
}

}  // namespace

std::string to_string(EnvFamily family) {
  switch (family) {
    case EnvFamily::ShiftedPareto:
      return "shifted_pareto";
  }
  return "unknown";
}

EnvFamily env_family_from_string(const std::string& name) {
  if (name == "shifted_pareto" || name == "ShiftedPareto") return EnvFamily::ShiftedPareto;
  throw DomainError("unknown environment family '" + name + "'");
}

GammaEnvSpec GammaEnvSpec::shifted_pareto(double gamma) {
  GammaEnvSpec s{gamma, EnvFamily::ShiftedPareto};
  s.validate();
  return s;
}

double GammaEnvSpec::tail_constant() const { return std::pow(gamma - 1.0, gamma); }

void GammaEnvSpec::validate() const {
  if (!(gamma > 1.0 && gamma < 2.0)) {
    std::ostringstream msg;
    msg << "gamma must lie in (1,2), got " << gamma;
    throw DomainError(msg.str());
  }
}

void TiltedEnvSpec::validate() const {
  base.validate();
  check_beta(beta, "tilted law");
}

TruncationSpec TruncationSpec::make(const GammaEnvSpec& base, double beta, double kappa) {
  TruncationSpec t;
  t.base = base;
  t.beta = beta;
  t.kappa = kappa;
  t.validate();
  t.level = std::pow(beta, -kappa);
  const CBeta c = dpre::c_beta(base, beta, kappa);
  t.c_beta = c.value;
  t.log_c_beta = c.log_value;
  return t;
}

void TruncationSpec::validate() const {
  base.validate();
  check_beta(beta, "truncation");
  if (!(kappa > 0.0)) throw DomainError("truncation: kappa must be positive");
}

KappaWindow kappa_window(const GammaEnvSpec& spec, int dim, double epsilon) {
  spec.validate();
  const double gc = 1.0 + 2.0 / dim;
  if (!(spec.gamma < gc)) throw DomainError("kappa window needs gamma < gamma_c(d)");
  const double hi = gc / (gc - spec.gamma);
  return {hi - epsilon / (spec.gamma - 1.0), hi};
}

// --- closed-form law -------------------------------------------------------

double quantile(const GammaEnvSpec& spec, double u) {
  if (!(u > 0.0 && u <= 1.0)) {
    std::ostringstream msg;
    msg << "quantile: u must lie in (0,1], got " << u;
    throw DomainError(msg.str());
  }
  const double a = pareto_scale(spec);
  return std::max(-1.0, a * std::pow(u, -1.0 / spec.gamma) - spec.gamma);
}

double survival(const GammaEnvSpec& spec, double x) {
  if (x < -1.0) return 1.0;
  return std::pow((x + spec.gamma) / pareto_scale(spec), -spec.gamma);
}

double cdf(const GammaEnvSpec& spec, double x) { return 1.0 - survival(spec, x); }

double density(const GammaEnvSpec& spec, double x) {
  if (x < -1.0) return 0.0;
  const double a = pareto_scale(spec);
  return spec.gamma / a * std::pow((x + spec.gamma) / a, -spec.gamma - 1.0);
}

double tail_anchor(const GammaEnvSpec& spec) { return spec.gamma; }

double tilted_survival(const TiltedEnvSpec& spec, double x) {
  if (x < -1.0) return 1.0;
  const double g = spec.base.gamma;
  const double t = pareto_scale(spec.base) / (x + g);
  const double bg = spec.beta * g;
  return (1.0 - bg) * std::pow(t, g) + bg * std::pow(t, g - 1.0);
}

double truncated_tilted_survival(const TruncationSpec& spec, double x) {
  const double L = spec.level;
  if (x >= L) return 0.0;
  const TiltedEnvSpec tilted{spec.base, spec.beta};
  const double at_level = (1.0 + spec.beta * L) * survival(spec.base, L);
  return (tilted_survival(tilted, x) - tilted_survival(tilted, L) + at_level) / spec.c_beta;
}

// --- sampling --------------------------------------------------------------

double tilted_from_uniform(const TiltedEnvSpec& spec, double u) {
  if (!(u > 0.0 && u <= 1.0)) throw DomainError("tilted sampler: u must lie in (0,1]");
  const double g = spec.base.gamma;
  const double a = pareto_scale(spec.base);
  const double beta = spec.beta;
  if (beta == 0.0 || u == 1.0) return quantile(spec.base, u);

  // Solve log S~(t) = log u for v = log t <= 0, where t = a / (omega + gamma):
  //   log S~ = (g - 1) v + log(beta g + (1 - beta g) e^v).
  const double bg = beta * g;
  const double log_u = std::log(u);
  auto f = [&](double v) { return (g - 1.0) * v + std::log(bg + (1.0 - bg) * std::exp(v)) - log_u; };
  auto df = [&](double v) {
    const double e = (1.0 - bg) * std::exp(v);
    return (g - 1.0) + e / (bg + e);
  };

  double hi = 0.0;  // f(hi) >= 0
  double v = std::min(0.0, (log_u - std::log(bg)) / (g - 1.0));
  double lo = std::min(v, -1.0);
  while (f(lo) > 0.0) lo *= 2.0;
  for (int it = 0; it < 200; ++it) {
    const double fv = f(v);
    if (fv > 0.0) {
      hi = v;
    } else {
      lo = v;
    }
    double next = v - fv / df(v);
    if (!(next > lo && next < hi)) next = 0.5 * (lo + hi);
    const double step = std::abs(next - v);
    v = next;
    if (step <= 1e-13 * std::max(1.0, std::abs(v)) || hi - lo <= 1e-13 * std::max(1.0, std::abs(lo))) break;
  }
  return std::max(-1.0, a * std::exp(-v) - g);
}

double truncated_tilted_from_uniform(const TruncationSpec& spec, double u) {
  if (!(u > 0.0 && u <= 1.0)) throw DomainError("truncated sampler: u must lie in (0,1]");
  const double L = spec.level;
  if (spec.beta == 0.0) return std::min(quantile(spec.base, u), L);
  const TiltedEnvSpec tilted{spec.base, spec.beta};
  const double at_level = (1.0 + spec.beta * L) * survival(spec.base, L);
  const double mass = u * spec.c_beta;
  if (mass <= at_level) return L;
  const double s_level = tilted_survival(tilted, L);
  const double target = std::min(1.0, mass - at_level + s_level);
  if (target <= s_level) return L;
  return std::min(L, tilted_from_uniform(tilted, target));
}

// --- moment functionals ----------------------------------------------------

MomentValue moment_m(const GammaEnvSpec& spec, double beta, double q) {
  spec.validate();
  check_beta(beta, "moment_m");
  if (!(q >= 0.0)) throw DomainError("moment_m: q must be nonnegative");
  if (q >= spec.gamma - 1.0) return {kInf, MomentStatus::Divergent};
  if (beta == 0.0) return {1.0, MomentStatus::Finite};

  const double g = spec.gamma;
  const double a = pareto_scale(spec);
  const double p = 1.0 + q;
  // 1 + beta*omega = c0 + c1*Y.
  const double c0 = 1.0 - beta * g;
  const double c1 = beta * a;
  const double r = c0 / c1;
  const double y_cut = 1e3 * std::max(1.0, std::abs(r));

  const double body = body_expectation(
      spec, [&](double omega) { return std::pow(1.0 + beta * omega, p); }, std::log(y_cut), 1e-10);

  // Tail: gamma c1^p sum_k binom(p,k) r^k Y^{p-k-g} / (g + k - p), |r/Y| <= 1e-3.
  double tail = 0.0;
  double binom = 1.0;
  double rk = 1.0;
  for (int k = 0; k < 64; ++k) {
    const double term = binom * rk * std::pow(y_cut, p - k - g) / (g + k - p);
    tail += term;
    if (std::abs(term) <= 1e-18 * std::abs(tail)) break;
    binom *= (p - k) / (k + 1.0);
    rk *= r;
  }
  tail *= g * std::pow(c1, p);
  return {body + tail, MomentStatus::Finite};
}

double mean_by_quadrature(const GammaEnvSpec& spec) {
  spec.validate();
  const double g = spec.gamma;
  const double y_cut = 1e6;
  const double body = body_expectation(spec, [](double omega) { return omega; }, std::log(y_cut), 1e-10);
  // Integral of (aY - g) g Y^{-g-1} over (y_cut, inf).
  const double tail = g * std::pow(y_cut, 1.0 - g) - g * std::pow(y_cut, -g);
  return body + tail;
}

CBeta c_beta(const GammaEnvSpec& base, double beta, double kappa) {
  base.validate();
  check_beta(beta, "c_beta");
  if (!(kappa > 0.0)) throw DomainError("c_beta: kappa must be positive");
  if (beta == 0.0) return {1.0, 0.0};
  const double g = base.gamma;
  const double a = pareto_scale(base);
  const double L = std::pow(beta, -kappa);
  // Deficit E[(omega - L)^+] = int_L^inf P[omega > x] dx; with
  // x = a e^s - g the integrand becomes a e^{(1-g) s}.
  const double s_level = std::log((L + g) / a);
  boost::math::quadrature::exp_sinh<double> integrator;
  double err = 0.0;
  double l1 = 0.0;
  const double deficit = integrator.integrate(
      [&](double s) { return a * std::exp((1.0 - g) * s); }, s_level, kInf, 1e-14, &err, &l1);
  if (!std::isfinite(deficit) || err > 1e-11 * std::max(l1, 1e-300)) {
    throw NumericalError("c_beta: deficit quadrature did not converge");
  }
  const double x = beta * deficit;
  return {1.0 - x, std::log1p(-x)};
}

TruncatedMomentRatio truncated_moment_ratio(const TruncationSpec& spec, double q) {
  spec.validate();
  if (!(q > 0.0 && q < 1.0)) throw DomainError("truncated_moment_ratio: q must lie in (0,1)");
  TruncatedMomentRatio out;
  const double g = spec.base.gamma;
  out.exponent = (1.0 - spec.kappa) * (1.0 + q) + spec.kappa * g;
  out.exponent_ok = out.exponent > 0.0;
  if (!out.exponent_ok) {
    std::ostringstream msg;
    msg << "exponent (1-kappa)(1+q)+kappa*gamma = " << out.exponent
        << " <= 0: the ratio need not tend to 1 as beta -> 0";
    out.warning = msg.str();
  }
  if (spec.beta == 0.0) {
    out.value = 1.0;
    return out;
  }
  const double beta = spec.beta;
  const double L = spec.level;
  const double c = spec.c_beta;
  const double p = 1.0 + q;
  const double s_level = std::log((L + g) / pareto_scale(spec.base));
  const double body = body_expectation(
      spec.base, [&](double omega) { return std::pow((1.0 + beta * omega) / c, p); }, s_level, 1e-10);
  const double capped = std::pow((1.0 + beta * L) / c, p) * survival(spec.base, L);
  out.value = body + capped;
  return out;
}

double hill_tail_estimate(std::span<const double> samples, double top_fraction) {
  if (samples.size() < 10'000) throw DomainError("hill_tail_estimate: need at least 10^4 samples");
  if (!(top_fraction > 0.0 && top_fraction <= 0.1)) {
    throw DomainError("hill_tail_estimate: top_fraction must lie in (0, 0.1]");
  }
  const auto k = static_cast<std::size_t>(std::floor(top_fraction * samples.size()));
  if (k < 10) throw InsufficientDataError("hill_tail_estimate: fewer than 10 exceedances");
  std::vector<double> sorted(samples.begin(), samples.end());
  std::nth_element(sorted.begin(), sorted.begin() + k, sorted.end(), std::greater<>());
  const double threshold = sorted[k];
  if (!(threshold > 0.0)) {
    throw InsufficientDataError("hill_tail_estimate: threshold order statistic is not positive");
  }
  double acc = 0.0;
  for (std::size_t i = 0; i < k; ++i) acc += std::log(sorted[i] / threshold);
  const double h = acc / static_cast<double>(k);
  if (!(h > 0.0)) throw InsufficientDataError("hill_tail_estimate: samples show no tail");
  return 1.0 / h;
}

// --- disorder fields -------------------------------------------------------

void Disorder::row(std::int64_t n, std::span<const int> prefix, int radius,
                   std::span<double> out) const {
  std::vector<int> x(prefix.begin(), prefix.end());
  x.push_back(0);
  for (int i = 0; i <= radius; ++i) {
    x.back() = -radius + 2 * i;
    out[i] = value(n, x);
  }
}

EnvField::EnvField(GammaEnvSpec spec, std::uint64_t seed)
    : spec_(spec), seed_(seed), inv_gamma_(1.0 / spec.gamma) {
  spec_.validate();
}

std::uint64_t EnvField::slice_key(std::int64_t n) const {
  const std::uint64_t key =
      (n == resampled_time_) ? derive_seed(seed_, resample_key_, 0x736c696365ULL) : seed_;
  return hash_combine(mix64(key ^ 0x243f6a8885a308d3ULL), n);
}

double EnvField::uniform(std::int64_t n, std::span<const int> x) const {
  std::uint64_t h = slice_key(n);
  for (int c : x) h = hash_combine(h, static_cast<std::int64_t>(c));
  return to_unit_open_closed(h);
}

double EnvField::value(std::int64_t n, std::span<const int> x) const {
  return quantile(spec_, uniform(n, x));
}

void EnvField::row(std::int64_t n, std::span<const int> prefix, int radius,
                   std::span<double> out) const {
  std::uint64_t h = slice_key(n);
  for (int c : prefix) h = hash_combine(h, static_cast<std::int64_t>(c));
  const double a = spec_.gamma - 1.0;
  const double g = spec_.gamma;
  for (int i = 0; i <= radius; ++i) {
    const double u = to_unit_open_closed(hash_combine(h, static_cast<std::int64_t>(-radius + 2 * i)));
    out[i] = std::max(-1.0, a * std::pow(u, -inv_gamma_) - g);
  }
}

EnvField EnvField::with_resampled_slice(std::int64_t n, std::uint64_t key) const {
  EnvField copy = *this;
  copy.resampled_time_ = n;
  copy.resample_key_ = key;
  return copy;
}

void TableDisorder::set(std::int64_t n, std::vector<int> x, double omega) {
  if (omega < -1.0) throw DomainError("TableDisorder: omega must be >= -1");
  for (auto& e : entries_) {
    if (e.n == n && e.x == x) {
      e.omega = omega;
      return;
    }
  }
  entries_.push_back({n, std::move(x), omega});
}

double TableDisorder::value(std::int64_t n, std::span<const int> x) const {
  for (const auto& e : entries_) {
    if (e.n == n && std::equal(e.x.begin(), e.x.end(), x.begin(), x.end())) return e.omega;
  }
  return fallback_;
}

}  // namespace dpre
