#pragma once

// Two-replica reduction to a pinning model on the renewal of collision times.
//
// u(n) = P[S_n = S'_n] for two independent walks, K(n) the law of their first
// meeting time; u = delta_0 + K * u. The constrained pinning partition
// function in the tilted environment is
//
//     Zbar_0 = 1,  Zbar_N = (1 + beta w~_N) sum_{n=1}^N K(n) Zbar_{N-n},
//
// and the criterion rho < 1 with
//
//     rho = E~[(1 + beta w~)^q] sum_{n >= k} sum_{j=1}^{k-1} K(n-j)^q A_j,
//     A_j = E~[(Zbar_j)^q],
//
// certifies A_N <= C K(N)^q, hence uniform integrability when q > 2/d.

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "dpre/env.hpp"

namespace dpre {

struct RenewalKernel {
  int dim = 1;
  int n_max = 0;
  std::vector<double> u;              // u[0..n_max], u[0] = 1
  std::vector<double> K;              // K[0..n_max], K[0] = 0
  std::vector<double> partial_sum_K;  // partial_sum_K[n] = sum_{m<=n} K(m)

  static RenewalKernel build(int dim, int n_max);
};

// Largest n_max accepted by collision_prob (the deconvolution is O(n_max^2)).
inline constexpr int kMaxRenewalHorizon = 50'000;

// u(n) = sum_x p_n(x)^2 = P[S_{2n} = 0], evaluated by a recursion over the
// coordinates: the number of steps spent in the k-th coordinate is
// Binomial(2n, 1/k) and must be even.
std::vector<double> collision_prob(int dim, int n_max);

// First-passage deconvolution K(n) = u(n) - sum_{k<n} K(k) u(n-k).
// Throws NumericalError if some K(n) < -1e-10.
std::vector<double> kernel_from_u(std::span<const double> u);

// max_n |u(n) - sum_{k=1}^n K(k) u(n-k)|.
double renewal_residual(const RenewalKernel& kernel);

// CSV with header "n,u,K,partial_sum_K", rows n = 0..n_max.
std::string kernel_csv(const RenewalKernel& kernel);

// Zbar_1..Zbar_N for one environment draw w~_1..w~_N (N <= n_max). Index 0
// holds Zbar_0 = 1. Values are returned as logarithms.
std::vector<double> constrained_pinning_log_Z(const RenewalKernel& kernel,
                                              std::span<const double> tilted_omega, double beta);
double constrained_pinning_Z(const RenewalKernel& kernel, std::span<const double> tilted_omega, double beta);

// Free boundary: E[prod (1 + beta w~_i 1{i in tau})] = sum_j Zbar_j P[tau > N - j].
double free_pinning_Z(const RenewalKernel& kernel, std::span<const double> tilted_omega, double beta);

struct PinningParams {
  double q = 0.5;
  double beta = 0.0;
  int k = 2;
  TiltedEnvSpec tilted;

  // q in (0, gamma - 1), beta in [0,1), k >= 2.
  void validate() const;
  bool summable(int dim) const { return q > 2.0 / dim; }
};

struct PinningMomentSeries {
  // Index N = 0..n; A[0] = 1 by convention.
  std::vector<double> A;
  std::vector<double> se;
  std::vector<double> median_of_means;
  // Mean and median-of-means differ by more than 20%.
  std::vector<bool> heavy_tail_flag;
  // E[(Zbar)^{2q}] is finite only if 2q < gamma - 1.
  bool variance_finite = true;
  int replicas = 0;
};

// Monte Carlo estimate of A_N = E~[(Zbar_N)^q], N = 1..n, from `replicas`
// tilted-environment sequences keyed by `seed`.
PinningMomentSeries estimate_A(const PinningParams& params, const RenewalKernel& kernel, int n,
                               int replicas, std::uint64_t seed, int workers = 1);

struct RhoResult {
  double rho = 0.0;           // with the n-sum truncated at n_max
  double tail_bound = 0.0;    // bound on the omitted n > n_max part
  double mc_uncertainty = 0.0;
  double driving_moment = 1.0;  // E[(1 + beta w)^{1+q}]
  double envelope_constant = 0.0;
  int k = 2;
  double upper() const { return rho + tail_bound + mc_uncertainty; }
};

// Evaluates rho for params.k using A_1..A_{k-1} from `A`. The omitted tail is
// bounded with the envelope K(n)^q <= c n^{-dq/2}, c fitted over the last
// decade of the kernel. Throws DivergenceError when dq/2 <= 1.
RhoResult rho_criterion(const PinningParams& params, const RenewalKernel& kernel,
                        const PinningMomentSeries& A);

}  // namespace dpre
