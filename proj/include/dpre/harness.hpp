#pragma once

// Sweep configuration, deterministic replica execution with resumable
// flat-file output, and aggregation.
//
// Output tree under `output`:
//   manifest.json                      config hash, per-cell status, paths
//   aggregate.csv                      one row per finished cell
//   cells/cell_XXXX/replica_XXXXX.jsonl
//   cells/cell_XXXX/summary.json

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "dpre/analysis.hpp"
#include "dpre/polymer.hpp"

namespace dpre {

inline constexpr const char* kToolVersion = "1.0.0";

struct CellSpec {
  int d = 1;
  double gamma = 1.5;
  double beta = 0.0;
  int N = 0;
  int replicas = 2;
  std::optional<double> theta;
  std::optional<double> q;
  std::optional<double> kappa;

  // Throws ConfigError.
  void validate() const;
  ModelParams params() const;
  GammaEnvSpec env() const { return GammaEnvSpec::shifted_pareto(gamma); }
};

struct SweepConfig {
  std::vector<CellSpec> cells;
  std::uint64_t base_seed = 0;
  int workers = 1;
  std::string output = "dpre-out";
  // 0: checkpoints at 0, 1, 2, 4, ... and N; k > 0: every k steps and N.
  int checkpoint_interval = 0;

  void validate() const;
};

// Key-value text: top-level keys base_seed, workers, output,
// checkpoint_interval; each "[cell]" section opens a cell with keys
// d, gamma, beta, N, replicas and optional theta, q, kappa. '#' starts a comment.
SweepConfig parse_config(const std::string& text);
SweepConfig load_config(const std::filesystem::path& path);

// Canonical text of everything that affects results (not workers or output).
std::string canonical_config(const SweepConfig& config);
// 64-bit FNV-1a of canonical_config, 16 hex digits.
std::string config_hash(const SweepConfig& config);

std::vector<int> cell_schedule(const CellSpec& cell, int checkpoint_interval);
std::uint64_t cell_seed(std::uint64_t base_seed, std::size_t cell);
std::uint64_t replica_seed(std::uint64_t base_seed, std::size_t cell, std::size_t replica);

struct SweepOptions {
  bool force = false;
  // Stop after this many replica files were written by this call (kill simulation).
  std::optional<int> stop_after_replicas;
};

struct CellOutcome {
  std::string status;  // pending, running, done, failed
  std::string error;
  int exit_code = 0;
};

struct SweepOutcome {
  bool complete = false;
  std::vector<CellOutcome> cells;
  std::filesystem::path manifest;
  std::filesystem::path aggregate;
  // 0 when every cell finished; otherwise the code of the first failure.
  int exit_code() const;
};

SweepOutcome run_sweep(const SweepConfig& config, const SweepOptions& options = {});

// Reads cells/cell_XXXX/replica_*.jsonl back in replica order.
std::vector<ReplicaResult> load_cell_replicas(const std::filesystem::path& output, std::size_t cell, int replicas);

struct AggregateRow {
  std::string config_hash;
  std::size_t cell = 0;
  int d = 1;
  double gamma = 0.0;
  double beta = 0.0;
  int N = 0;
  int replicas = 0;
  std::uint64_t seed = 0;
  double p_hat = 0.0;
  double se = 0.0;
  double mom = 0.0;
  std::optional<double> theta;
  std::optional<double> bound;
  std::optional<double> bound_ucl;
  std::string diagnosis;
};

inline constexpr const char* kAggregateHeader =
    "config_hash,cell,d,gamma,beta,N,replicas,seed,p_hat,se,mom,theta,bound,bound_ucl,diagnosis";
std::string format_aggregate_row(const AggregateRow& row);
std::vector<AggregateRow> read_aggregate(const std::filesystem::path& csv);

void write_atomic(const std::filesystem::path& path, const std::string& content);
std::string read_file(const std::filesystem::path& path);

}  // namespace dpre
