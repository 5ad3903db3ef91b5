#include "dpre/polymer.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <numeric>
#include <sstream>

#include "json.hpp"

#include "dpre/error.hpp"

namespace dpre {

namespace {

// prop(x) = sum over neighbours x - e of src(x - e), for the row of `next`
// with prefix `prefix` and radius r (length r + 1). Not yet divided by 2d.
void gather_row(const BallLayout& old_layout, const double* src, std::span<const int> prefix, int r,
                std::span<double> prop, std::vector<int>& scratch) {
  std::fill(prop.begin(), prop.begin() + r + 1, 0.0);

  // Same prefix: old row radius r - 1 and entries at z - 1, z + 1.
  const std::ptrdiff_t same = old_layout.find_row(prefix);
  if (same >= 0) {
    const double* s = src + old_layout.row(static_cast<std::size_t>(same)).offset;
    for (int i = 1; i <= r; ++i) prop[i] += s[i - 1];
    for (int i = 0; i < r; ++i) prop[i] += s[i];
  }

  // Neighbouring prefixes P +- e_j: old row radius r or r - 2, same z.
  scratch.assign(prefix.begin(), prefix.end());
  for (std::size_t j = 0; j < scratch.size(); ++j) {
    for (int sign : {-1, 1}) {
      scratch[j] += sign;
      const std::ptrdiff_t nb = old_layout.find_row(scratch);
      if (nb >= 0) {
        const auto& row = old_layout.row(static_cast<std::size_t>(nb));
        const double* s = src + row.offset;
        if (row.radius == r) {
          for (int i = 0; i <= r; ++i) prop[i] += s[i];
        } else {
          for (int i = 1; i < r; ++i) prop[i] += s[i - 1];
        }
      }
      scratch[j] -= sign;
    }
  }
}

double max_of(const std::vector<double>& v) { return *std::max_element(v.begin(), v.end()); }

}  // namespace

void ModelParams::validate() const {
  if (dim < 1 || dim > kMaxDim) throw DomainError("dimension must lie in [1, 8]");
  if (!(beta >= 0.0 && beta < 1.0)) throw DomainError("beta must lie in [0,1)");
  if (horizon < 0) throw DomainError("horizon must be nonnegative");
  if (truncation) {
    truncation->validate();
    if (truncation->beta != beta) throw DomainError("truncation beta differs from model beta");
  }
}

WeightPolicy ModelParams::weights() const {
  WeightPolicy w;
  w.beta = beta;
  if (truncation) {
    w.level = truncation->level;
    w.inv_c = 1.0 / truncation->c_beta;
  }
  return w;
}

void check_resources(const ModelParams& params) {
  const double sites = BallLayout::count_sites(params.dim, params.horizon);
  if (sites > params.site_budget || BallLayout::prefix_table_size(params.dim, params.horizon) > 2e8) {
    std::ostringstream msg;
    msg << "front for d=" << params.dim << ", N=" << params.horizon << " needs " << sites
        << " sites, budget is " << params.site_budget;
    throw ResourceError(msg.str());
  }
}

DPFront DPFront::origin(int dim) { return DPFront{BallLayout(dim, 0), {1.0}, 0.0}; }

double DPFront::total() const { return std::accumulate(weights.begin(), weights.end(), 0.0); }

double DPFront::log_z() const { return log_scale + std::log(total()); }

DPFront step(const DPFront& front, const ModelParams& params, const Disorder& env, StepInfo* info) {
  const int dim = front.layout.dim();
  const int n = front.time();
  const WeightPolicy w = params.weights();
  DPFront next{BallLayout(dim, n + 1), {}, front.log_scale};
  next.weights.resize(next.layout.size());

  std::vector<double> prop(static_cast<std::size_t>(n) + 2);
  std::vector<double> omega(static_cast<std::size_t>(n) + 2);
  std::vector<int> scratch;
  const double inv_2d = 1.0 / (2.0 * dim);
  double sum_sq = 0.0;
  for (std::size_t r = 0; r < next.layout.row_count(); ++r) {
    const auto prefix = next.layout.prefix(r);
    const auto& row = next.layout.row(r);
    gather_row(front.layout, front.weights.data(), prefix, row.radius, prop, scratch);
    double* out = next.weights.data() + row.offset;
    const int len = row.radius + 1;
    for (int i = 0; i < len; ++i) {
      prop[i] *= inv_2d;
      sum_sq += prop[i] * prop[i];
    }
    if (w.is_unity()) {
      std::copy(prop.begin(), prop.begin() + len, out);
    } else {
      env.row(n + 1, prefix, row.radius, omega);
      for (int i = 0; i < len; ++i) out[i] = prop[i] * w(omega[i]);
    }
  }
  if (info) {
    const double t = front.total();
    info->overlap = sum_sq / (t * t);
  }
  const double m = max_of(next.weights);
  const double inv_m = 1.0 / m;
  for (double& v : next.weights) v *= inv_m;
  next.log_scale += std::log(m);
  return next;
}

double log_partition(const ModelParams& params, const Disorder& env) {
  params.validate();
  check_resources(params);
  if (params.weights().is_unity()) return 0.0;
  DPFront front = DPFront::origin(params.dim);
  for (int n = 0; n < params.horizon; ++n) front = step(front, params, env);
  return front.log_z();
}

std::vector<SiteProbability> endpoint_distribution(const DPFront& front) {
  const double t = front.total();
  std::vector<SiteProbability> out;
  out.reserve(front.layout.size());
  std::vector<int> x(static_cast<std::size_t>(front.layout.dim()));
  for (std::size_t r = 0; r < front.layout.row_count(); ++r) {
    const auto& row = front.layout.row(r);
    for (int i = 0; i <= row.radius; ++i) {
      front.layout.site(r, i, x);
      out.push_back({x, front.weights[row.offset + static_cast<std::size_t>(i)] / t});
    }
  }
  return out;
}

double overlap_at(const DPFront& front) {
  const int dim = front.layout.dim();
  const BallLayout next(dim, front.time() + 1);
  std::vector<double> prop(static_cast<std::size_t>(front.time()) + 2);
  std::vector<int> scratch;
  const double inv_2d = 1.0 / (2.0 * dim);
  double sum_sq = 0.0;
  for (std::size_t r = 0; r < next.row_count(); ++r) {
    const int radius = next.row(r).radius;
    gather_row(front.layout, front.weights.data(), next.prefix(r), radius, prop, scratch);
    for (int i = 0; i <= radius; ++i) sum_sq += prop[i] * prop[i] * inv_2d * inv_2d;
  }
  const double t = front.total();
  return sum_sq / (t * t);
}

double brute_force_Z(const ModelParams& params, const Disorder& env) {
  params.validate();
  const double paths = std::pow(2.0 * params.dim, params.horizon);
  if (paths > 1e8) {
    std::ostringstream msg;
    msg << "brute_force_Z: (2d)^N = " << paths << " paths exceeds 10^8";
    throw ResourceError(msg.str());
  }
  const WeightPolicy w = params.weights();
  std::vector<int> x(static_cast<std::size_t>(params.dim), 0);
  long double total = 0.0L;
  // Depth-first over paths; `prefix_product` is the weight product up to time n.
  auto walk = [&](auto&& self, int n, long double prefix_product) -> void {
    if (n == params.horizon) {
      total += prefix_product;
      return;
    }
    for (std::size_t j = 0; j < x.size(); ++j) {
      for (int sign : {-1, 1}) {
        x[j] += sign;
        self(self, n + 1, prefix_product * w(env.value(n + 1, x)));
        x[j] -= sign;
      }
    }
  };
  walk(walk, 0, 1.0L);
  return static_cast<double>(total / static_cast<long double>(paths));
}

QuenchedScore quenched_score(const ModelParams& params, const Disorder& env) {
  params.validate();
  check_resources(params);
  if (params.truncation) throw DomainError("quenched_score: untruncated weights only");
  const int dim = params.dim;
  const double beta = params.beta;
  const double inv_2d = 1.0 / (2.0 * dim);

  BallLayout layout(dim, 0);
  std::vector<double> W{1.0};
  std::vector<double> G{0.0};
  double log_scale = 0.0;
  std::vector<double> pw;
  std::vector<double> pg;
  std::vector<double> omega;
  std::vector<int> scratch;
  for (int n = 0; n < params.horizon; ++n) {
    BallLayout next(dim, n + 1);
    std::vector<double> W2(next.size());
    std::vector<double> G2(next.size());
    pw.resize(static_cast<std::size_t>(n) + 2);
    pg.resize(pw.size());
    omega.resize(pw.size());
    for (std::size_t r = 0; r < next.row_count(); ++r) {
      const auto prefix = next.prefix(r);
      const auto& row = next.row(r);
      gather_row(layout, W.data(), prefix, row.radius, pw, scratch);
      gather_row(layout, G.data(), prefix, row.radius, pg, scratch);
      env.row(n + 1, prefix, row.radius, omega);
      for (int i = 0; i <= row.radius; ++i) {
        const double weight = 1.0 + beta * omega[i];
        const double psi = omega[i] / weight;
        W2[row.offset + i] = weight * pw[i] * inv_2d;
        G2[row.offset + i] = weight * (pg[i] + psi * pw[i]) * inv_2d;
      }
    }
    const double m = max_of(W2);
    for (std::size_t i = 0; i < W2.size(); ++i) {
      W2[i] /= m;
      G2[i] /= m;
    }
    log_scale += std::log(m);
    layout = std::move(next);
    W = std::move(W2);
    G = std::move(G2);
  }
  const double tw = std::accumulate(W.begin(), W.end(), 0.0);
  const double tg = std::accumulate(G.begin(), G.end(), 0.0);
  return {beta == 0.0 ? 0.0 : log_scale + std::log(tw), tg / tw};
}

std::vector<int> default_schedule(int horizon) {
  std::vector<int> s{0};
  for (long n = 1; n < horizon; n *= 2) s.push_back(static_cast<int>(n));
  if (horizon > 0) {
    s.push_back(static_cast<int>(std::floor(std::sqrt(static_cast<double>(horizon)))));
    s.push_back(horizon / 4);
    s.push_back(horizon / 2);
    s.push_back(horizon);
  }
  std::sort(s.begin(), s.end());
  s.erase(std::unique(s.begin(), s.end()), s.end());
  return s;
}

ReplicaResult run_replica(const ModelParams& params, const Disorder& env,
                          std::span<const int> schedule, std::uint64_t seed) {
  params.validate();
  check_resources(params);
  std::vector<int> points(schedule.begin(), schedule.end());
  std::sort(points.begin(), points.end());
  points.erase(std::unique(points.begin(), points.end()), points.end());
  if (!points.empty() && (points.front() < 0 || points.back() > params.horizon)) {
    throw DomainError("run_replica: checkpoint schedule must lie in [0, N]");
  }
  const auto t0 = std::chrono::steady_clock::now();
  const bool unity = params.weights().is_unity();

  ReplicaResult result;
  result.seed = seed;
  DPFront front = DPFront::origin(params.dim);
  double overlap = 1.0;
  double overlap_sum = 0.0;
  std::size_t next_point = 0;
  for (int n = 0;; ++n) {
    if (next_point < points.size() && points[next_point] == n) {
      const double t = front.total();
      result.checkpoints.push_back(
          {n, unity ? 0.0 : front.log_scale + std::log(t), overlap, overlap_sum, max_of(front.weights) / t});
      ++next_point;
    }
    if (n == params.horizon) break;
    StepInfo info;
    front = step(front, params, env, &info);
    overlap = info.overlap;
    overlap_sum += overlap;
  }
  result.final_front_sites = front.layout.size();
  result.runtime_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return result;
}

std::string to_jsonl(const ReplicaResult& result, const std::string& config_hash) {
  std::string out;
  for (const auto& c : result.checkpoints) {
    nlohmann::ordered_json j;
    j["config_hash"] = config_hash;
    j["seed"] = result.seed;
    j["n"] = c.n;
    j["logZ"] = c.log_z;
    j["overlap"] = c.overlap;
    j["overlap_sum"] = c.overlap_sum;
    j["max_endpoint_prob"] = c.max_endpoint_prob;
    out += j.dump();
    out += '\n';
  }
  return out;
}

ReplicaResult replica_from_jsonl(const std::string& text) {
  ReplicaResult r;
  std::istringstream in(text);
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto j = nlohmann::json::parse(line);
    r.seed = j.at("seed").get<std::uint64_t>();
    r.checkpoints.push_back({j.at("n").get<int>(), j.at("logZ").get<double>(), j.at("overlap").get<double>(),
                             j.at("overlap_sum").get<double>(), j.at("max_endpoint_prob").get<double>()});
  }
  return r;
}

}  // namespace dpre
