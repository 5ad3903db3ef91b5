#include "dpre/pinning.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

#include "dpre/error.hpp"
#include "dpre/parallel.hpp"
#include "dpre/stats.hpp"

namespace dpre {

RenewalKernel RenewalKernel::build(int dim, int n_max) {
  RenewalKernel k;
  k.dim = dim;
  k.n_max = n_max;
  k.u = collision_prob(dim, n_max);
  k.K = kernel_from_u(k.u);
  k.partial_sum_K.assign(k.K.size(), 0.0);
  for (std::size_t n = 1; n < k.K.size(); ++n) k.partial_sum_K[n] = k.partial_sum_K[n - 1] + k.K[n];
  return k;
}

std::vector<double> collision_prob(int dim, int n_max) {
  if (dim < 1) throw DomainError("collision_prob: dimension must be >= 1");
  if (n_max < 1) throw DomainError("collision_prob: n_max must be >= 1");
  if (n_max > kMaxRenewalHorizon || static_cast<double>(dim) * n_max > 8.0 * kMaxRenewalHorizon) {
    std::ostringstream msg;
    msg << "collision_prob: d=" << dim << ", n_max=" << n_max << " exceeds the renewal budget";
    throw ResourceError(msg.str());
  }
  const auto size = static_cast<std::size_t>(n_max) + 1;
  // One coordinate: P[S_{2m} = 0] = C(2m, m) / 4^m.
  std::vector<double> line(size);
  line[0] = 1.0;
  for (std::size_t m = 1; m < size; ++m) line[m] = line[m - 1] * (2.0 * m - 1.0) / (2.0 * m);
  if (dim == 1) return line;

  std::vector<double> log_fact(2 * size);
  for (std::size_t i = 0; i < log_fact.size(); ++i) log_fact[i] = std::lgamma(static_cast<double>(i) + 1.0);

  std::vector<double> cur = line;
  for (int k = 2; k <= dim; ++k) {
    const double log_p = -std::log(static_cast<double>(k));
    const double log_q = std::log((k - 1.0) / k);
    std::vector<double> next(size, 0.0);
    for (std::size_t n = 0; n < size; ++n) {
      double acc = 0.0;
      for (std::size_t j = 0; j <= n; ++j) {
        // Binomial(2n, 1/k) mass at 2j.
        const double lw = log_fact[2 * n] - log_fact[2 * j] - log_fact[2 * (n - j)] +
                          2.0 * static_cast<double>(j) * log_p + 2.0 * static_cast<double>(n - j) * log_q;
        if (lw < -740.0) continue;
        acc += std::exp(lw) * line[j] * cur[n - j];
      }
      next[n] = acc;
    }
    cur = std::move(next);
  }
  return cur;
}

std::vector<double> kernel_from_u(std::span<const double> u) {
  if (u.empty() || u[0] != 1.0) throw DomainError("kernel_from_u: u(0) must equal 1");
  std::vector<double> K(u.size(), 0.0);
  for (std::size_t n = 1; n < u.size(); ++n) {
    double acc = u[n];
    for (std::size_t k = 1; k < n; ++k) acc -= K[k] * u[n - k];
    if (acc < -1e-10) {
      std::ostringstream msg;
      msg << "kernel_from_u: K(" << n << ") = " << acc << " < 0";
      throw NumericalError(msg.str());
    }
    K[n] = acc;
  }
  return K;
}

double renewal_residual(const RenewalKernel& kernel) {
  double worst = 0.0;
  for (std::size_t n = 1; n < kernel.u.size(); ++n) {
    double acc = 0.0;
    for (std::size_t k = 1; k <= n; ++k) acc += kernel.K[k] * kernel.u[n - k];
    worst = std::max(worst, std::abs(kernel.u[n] - acc));
  }
  return worst;
}

std::string kernel_csv(const RenewalKernel& kernel) {
  std::ostringstream out;
  out.precision(17);
  out << "n,u,K,partial_sum_K\n";
  for (std::size_t n = 0; n < kernel.u.size(); ++n) {
    out << n << ',' << kernel.u[n] << ',' << kernel.K[n] << ',' << kernel.partial_sum_K[n] << '\n';
  }
  return out.str();
}

std::vector<double> constrained_pinning_log_Z(const RenewalKernel& kernel,
                                              std::span<const double> tilted_omega, double beta) {
  const std::size_t N = tilted_omega.size();
  if (N > static_cast<std::size_t>(kernel.n_max)) throw DomainError("constrained_pinning: N exceeds kernel n_max");
  // z[j] = Zbar_j * exp(-shift); rescaled when it grows large.
  std::vector<double> z(N + 1, 0.0);
  std::vector<double> logs(N + 1, 0.0);
  z[0] = 1.0;
  double shift = 0.0;
  for (std::size_t m = 1; m <= N; ++m) {
    double acc = 0.0;
    for (std::size_t n = 1; n <= m; ++n) acc += kernel.K[n] * z[m - n];
    z[m] = (1.0 + beta * tilted_omega[m - 1]) * acc;
    logs[m] = std::log(z[m]) + shift;
    if (z[m] > 1e200) {
      for (std::size_t j = 0; j <= m; ++j) z[j] *= 1e-200;
      shift += 200.0 * std::log(10.0);
    }
  }
  return logs;
}

double constrained_pinning_Z(const RenewalKernel& kernel, std::span<const double> tilted_omega, double beta) {
  return std::exp(constrained_pinning_log_Z(kernel, tilted_omega, beta).back());
}

double free_pinning_Z(const RenewalKernel& kernel, std::span<const double> tilted_omega, double beta) {
  const auto logs = constrained_pinning_log_Z(kernel, tilted_omega, beta);
  const std::size_t N = tilted_omega.size();
  double total = 0.0;
  for (std::size_t j = 0; j <= N; ++j) total += std::exp(logs[j]) * (1.0 - kernel.partial_sum_K[N - j]);
  return total;
}

void PinningParams::validate() const {
  tilted.base.validate();
  if (!(beta >= 0.0 && beta < 1.0)) throw DomainError("pinning: beta must lie in [0,1)");
  if (tilted.beta != beta) throw DomainError("pinning: tilted law beta differs from beta");
  if (!(q > 0.0 && q < tilted.base.gamma - 1.0)) {
    std::ostringstream msg;
    msg << "pinning: q must lie in (0, gamma - 1) = (0, " << tilted.base.gamma - 1.0 << "), got " << q;
    throw DomainError(msg.str());
  }
  if (k < 2) throw DomainError("pinning: cutoff k must be >= 2");
}

PinningMomentSeries estimate_A(const PinningParams& params, const RenewalKernel& kernel, int n,
                               int replicas, std::uint64_t seed, int workers) {
  params.validate();
  if (n < 1 || n > kernel.n_max) throw DomainError("estimate_A: N range exceeds the kernel");
  if (replicas < 2) throw DomainError("estimate_A: need at least 2 replicas");
  const auto R = static_cast<std::size_t>(replicas);
  const auto len = static_cast<std::size_t>(n) + 1;
  // values[j * R + i] = (Zbar_j)^q for replica i.
  std::vector<double> values(len * R);
  parallel_for(R, workers, [&](std::size_t i) {
    Rng rng(derive_seed(seed, i));
    std::vector<double> omega(static_cast<std::size_t>(n));
    for (double& w : omega) w = sample_tilted(params.tilted, rng);
    const auto logs = constrained_pinning_log_Z(kernel, omega, params.beta);
    for (std::size_t j = 0; j < len; ++j) values[j * R + i] = std::exp(params.q * logs[j]);
  });

  PinningMomentSeries out;
  out.replicas = replicas;
  out.variance_finite = 2.0 * params.q < params.tilted.base.gamma - 1.0;
  out.A.assign(len, 1.0);
  out.se.assign(len, 0.0);
  out.median_of_means.assign(len, 1.0);
  out.heavy_tail_flag.assign(len, false);
  for (std::size_t j = 1; j < len; ++j) {
    const auto s = summarize(std::span<const double>(values.data() + j * R, R), 20);
    out.A[j] = s.mean;
    out.se[j] = s.se;
    out.median_of_means[j] = s.median_of_means;
    out.heavy_tail_flag[j] = std::abs(s.mean - s.median_of_means) > 0.2 * s.mean;
  }
  return out;
}

RhoResult rho_criterion(const PinningParams& params, const RenewalKernel& kernel,
                        const PinningMomentSeries& A) {
  params.validate();
  const double s = kernel.dim * params.q / 2.0;
  if (s <= 1.0) {
    std::ostringstream msg;
    msg << "rho_criterion: d*q/2 = " << s << " <= 1, the sum over n diverges (need q > 2/d)";
    throw DivergenceError(msg.str());
  }
  const int k = params.k;
  if (static_cast<int>(A.A.size()) < k) throw DomainError("rho_criterion: A_1..A_{k-1} not available");
  if (kernel.n_max < 10 * k) throw DomainError("rho_criterion: kernel too short for cutoff k");

  const auto size = static_cast<std::size_t>(kernel.n_max) + 1;
  std::vector<double> Kq(size, 0.0);
  for (std::size_t m = 1; m < size; ++m) Kq[m] = std::pow(std::max(kernel.K[m], 0.0), params.q);
  // T[r] = sum_{m=r}^{n_max} K(m)^q.
  std::vector<double> T(size + 1, 0.0);
  for (std::size_t m = size; m-- > 1;) T[m] = T[m + 1] + Kq[m];

  // Envelope over the last decade, widened by its own spread.
  const std::size_t lo = std::max<std::size_t>(1, size / 10);
  double c_max = 0.0;
  double c_min = std::numeric_limits<double>::infinity();
  for (std::size_t m = lo; m < size; ++m) {
    const double c = Kq[m] * std::pow(static_cast<double>(m), s);
    c_max = std::max(c_max, c);
    c_min = std::min(c_min, c);
  }
  const double c_env = c_max + (c_max - c_min);
  const double tail = c_env * std::pow(static_cast<double>(kernel.n_max), 1.0 - s) / (s - 1.0);

  RhoResult out;
  out.k = k;
  out.envelope_constant = c_env;
  out.driving_moment = moment_m(params.tilted.base, params.beta, params.q).value;
  double sum = 0.0;
  double tail_sum = 0.0;
  double unc = 0.0;
  for (int j = 1; j < k; ++j) {
    const auto jj = static_cast<std::size_t>(j);
    sum += A.A[jj] * T[static_cast<std::size_t>(k - j)];
    tail_sum += A.A[jj] * tail;
    unc += A.se[jj] * (T[static_cast<std::size_t>(k - j)] + tail);
  }
  out.rho = out.driving_moment * sum;
  out.tail_bound = out.driving_moment * tail_sum;
  out.mc_uncertainty = 2.0 * out.driving_moment * unc;
  return out;
}

}  // namespace dpre
