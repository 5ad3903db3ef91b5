#pragma once

// Transfer-matrix evaluation of the point-to-line partition function
//
//     Z_N = E_0[ prod_{n=1}^N (1 + beta * omega_{n, S_n}) ]
//
// for the simple random walk on Z^d, together with the endpoint law, the
// replica overlap and a path-enumeration oracle.

#include <algorithm>
#include <cstdint>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "dpre/env.hpp"
#include "dpre/lattice.hpp"

namespace dpre {

// Site weight (1 + beta * min(omega, level)) * inv_c.
struct WeightPolicy {
  double beta = 0.0;
  double level = std::numeric_limits<double>::infinity();
  double inv_c = 1.0;

  bool is_unity() const { return beta == 0.0 && inv_c == 1.0; }
  double operator()(double omega) const { return (1.0 + beta * std::min(omega, level)) * inv_c; }
};

struct ModelParams {
  int dim = 1;
  double beta = 0.0;
  int horizon = 0;
  // When set, weights are (1 + beta*min(omega, L)) / c_beta, so that E[Z_N] = 1
  // with finite variance.
  std::optional<TruncationSpec> truncation;
  // Largest admissible front (number of stored sites at time N).
  double site_budget = 6e7;

  void validate() const;
  WeightPolicy weights() const;
};

// Throws ResourceError when the front at the horizon would exceed the budget.
void check_resources(const ModelParams& params);

struct DPFront {
  BallLayout layout;
  std::vector<double> weights;
  double log_scale = 0.0;

  static DPFront origin(int dim);
  int time() const { return layout.radius(); }
  double total() const;
  // log Z_n = log_scale + log(sum of weights).
  double log_z() const;
};

struct StepInfo {
  double overlap = 0.0;  // I_{n+1} from the front at time n
};

// One transfer-matrix step n -> n+1 with max-normalization of the weights.
DPFront step(const DPFront& front, const ModelParams& params, const Disorder& env,
             StepInfo* info = nullptr);

// log Z_N. Each step contributes O(2^-52) relative rounding; in practice the
// relative error of Z_N stays below N * 2^-45.
double log_partition(const ModelParams& params, const Disorder& env);

struct SiteProbability {
  std::vector<int> site;
  double probability;
};
std::vector<SiteProbability> endpoint_distribution(const DPFront& front);

// I_n = sum_x rho_n(x)^2 with rho_n the one-step SRW smoothing of the
// endpoint law of `front` (at time n-1).
double overlap_at(const DPFront& front);

// Exact path sum (2d)^{-N} sum_S prod (weights); refuses (2d)^N > 10^8.
double brute_force_Z(const ModelParams& params, const Disorder& env);

struct QuenchedScore {
  double log_z = 0.0;
  // E_N^{beta,omega}[ sum_i omega_i / (1 + beta omega_i) ] along the path.
  double score = 0.0;
};
// Augmented transfer matrix carrying the path functional alongside Z_N.
// Untruncated weights only.
QuenchedScore quenched_score(const ModelParams& params, const Disorder& env);

struct Checkpoint {
  int n = 0;
  double log_z = 0.0;
  double overlap = 1.0;
  double overlap_sum = 0.0;  // sum_{m <= n} I_m
  double max_endpoint_prob = 1.0;
};

struct ReplicaResult {
  std::uint64_t seed = 0;
  std::vector<Checkpoint> checkpoints;
  double runtime_seconds = 0.0;
  std::size_t final_front_sites = 0;
};

// 0, powers of two below N, floor(sqrt N), N/4, N/2 and N.
std::vector<int> default_schedule(int horizon);

// Single pass over n = 0..N recording checkpoint data. Deterministic in
// (params, env); `seed` is carried into the result for provenance.
ReplicaResult run_replica(const ModelParams& params, const Disorder& env,
                          std::span<const int> schedule, std::uint64_t seed);

// One JSON object per checkpoint:
// {"config_hash", "seed", "n", "logZ", "overlap", "overlap_sum", "max_endpoint_prob"}.
std::string to_jsonl(const ReplicaResult& result, const std::string& config_hash);
ReplicaResult replica_from_jsonl(const std::string& text);

}  // namespace dpre
