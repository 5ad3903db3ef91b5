#include <cmath>
#include <map>
#include <set>
#include <vector>

#include "doctest.h"

#include "dpre/error.hpp"
#include "dpre/lattice.hpp"
#include "dpre/pinning.hpp"
#include "dpre/polymer.hpp"

using namespace dpre;

namespace {

using Site = std::vector<int>;

// Unnormalised endpoint weights of the polymer, propagated over a std::map.
std::map<Site, double> map_front(const ModelParams& p, const Disorder& env) {
  const WeightPolicy w = p.weights();
  std::map<Site, double> cur{{Site(static_cast<std::size_t>(p.dim), 0), 1.0}};
  for (int n = 1; n <= p.horizon; ++n) {
    std::map<Site, double> next;
    for (const auto& [x, v] : cur) {
      for (int j = 0; j < p.dim; ++j) {
        for (int s : {-1, 1}) {
          Site y = x;
          y[static_cast<std::size_t>(j)] += s;
          next[y] += v / (2.0 * p.dim);
        }
      }
    }
    for (auto& [x, v] : next) v *= w(env.value(n, x));
    cur = std::move(next);
  }
  return cur;
}

ModelParams make(int dim, double beta, int N) {
  ModelParams p;
  p.dim = dim;
  p.beta = beta;
  p.horizon = N;
  return p;
}

}  // namespace

TEST_CASE("ball layout") {
  for (int dim = 1; dim <= 4; ++dim) {
    for (int R = 0; R <= 6; ++R) {
      const BallLayout layout(dim, R);
      std::size_t count = 0;
      std::set<std::ptrdiff_t> seen;
      Site x(static_cast<std::size_t>(dim));
      for (std::size_t r = 0; r < layout.row_count(); ++r) {
        for (int i = 0; i <= layout.row(r).radius; ++i) {
          layout.site(r, i, x);
          int l1 = 0;
          for (int c : x) l1 += std::abs(c);
          CHECK(l1 <= R);
          CHECK((R - l1) % 2 == 0);
          const auto idx = layout.index_of(x);
          CHECK(idx == static_cast<std::ptrdiff_t>(layout.row(r).offset + static_cast<std::size_t>(i)));
          seen.insert(idx);
          ++count;
        }
      }
      CHECK(count == layout.size());
      CHECK(seen.size() == count);
      CHECK(static_cast<double>(count) == BallLayout::count_sites(dim, R));
      // a site of the wrong parity is outside the support
      Site odd(static_cast<std::size_t>(dim), 0);
      odd[0] = R + 1;
      CHECK(layout.index_of(odd) == -1);
    }
  }
  CHECK_THROWS(BallLayout(9, 1));
}

TEST_CASE("transfer matrix equals path enumeration") {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const EnvField env(GammaEnvSpec::shifted_pareto(1.4), seed);
    for (auto [dim, N] : {std::pair{1, 9}, std::pair{2, 5}, std::pair{3, 4}}) {
      const auto p = make(dim, 0.7, N);
      const double z = brute_force_Z(p, env);
      CHECK(std::exp(log_partition(p, env)) == doctest::Approx(z).epsilon(1e-12));
    }
  }
  ModelParams t = make(2, 0.5, 5);
  t.truncation = TruncationSpec::make(GammaEnvSpec::shifted_pareto(1.4), 0.5, 1.0);
  const EnvField env(GammaEnvSpec::shifted_pareto(1.4), 7);
  CHECK(std::exp(log_partition(t, env)) == doctest::Approx(brute_force_Z(t, env)).epsilon(1e-12));
  CHECK_THROWS_AS(brute_force_Z(make(3, 0.5, 11), env), ResourceError);
}

TEST_CASE("endpoint law against a map-based oracle") {
  const EnvField env(GammaEnvSpec::shifted_pareto(1.6), 31);
  for (int dim : {1, 2, 3}) {
    const auto p = make(dim, 0.6, 12);
    const auto oracle = map_front(p, env);
    double total = 0.0;
    for (const auto& [x, v] : oracle) total += v;
    DPFront front = DPFront::origin(dim);
    for (int n = 0; n < p.horizon; ++n) front = step(front, p, env);
    CHECK(front.log_z() == doctest::Approx(std::log(total)).epsilon(1e-12));
    const auto law = endpoint_distribution(front);
    CHECK(law.size() == oracle.size());
    double sum = 0.0;
    for (const auto& sp : law) {
      const auto it = oracle.find(sp.site);
      REQUIRE(it != oracle.end());
      CHECK(sp.probability == doctest::Approx(it->second / total).epsilon(1e-11));
      sum += sp.probability;
    }
    CHECK(sum == doctest::Approx(1.0).epsilon(1e-13));
  }
}

TEST_CASE("trivial environments") {
  const ConstantDisorder zero;
  CHECK(log_partition(make(3, 0.0, 30), zero) == 0.0);
  const EnvField env(GammaEnvSpec::shifted_pareto(1.5), 1);
  CHECK(log_partition(make(2, 0.0, 25), env) == 0.0);
  const ConstantDisorder c(0.5);
  CHECK(log_partition(make(2, 0.4, 20), c) == doctest::Approx(20 * std::log(1.2)).epsilon(1e-13));
}

TEST_CASE("overlap at beta = 0 equals the collision probability") {
  for (int dim : {1, 2, 3}) {
    const auto u = collision_prob(dim, 30);
    DPFront front = DPFront::origin(dim);
    const ConstantDisorder zero;
    const auto p = make(dim, 0.0, 30);
    for (int n = 1; n <= 30; ++n) {
      StepInfo info;
      const double predicted = overlap_at(front);
      front = step(front, p, zero, &info);
      CHECK(info.overlap == doctest::Approx(u[static_cast<std::size_t>(n)]).epsilon(1e-12));
      CHECK(predicted == doctest::Approx(info.overlap).epsilon(1e-14));
    }
  }
}

TEST_CASE("long runs stay finite") {
  const EnvField env(GammaEnvSpec::shifted_pareto(1.2), 3);
  const double lz = log_partition(make(1, 0.95, 5000), env);
  CHECK(std::isfinite(lz));
  CHECK(lz < 0.0);
}

TEST_CASE("resource refusal") {
  CHECK_THROWS_AS(check_resources(make(8, 0.5, 1000)), ResourceError);
  CHECK_THROWS_AS(log_partition(make(4, 0.5, 400), ConstantDisorder()), ResourceError);
  CHECK_NOTHROW(check_resources(make(3, 0.5, 200)));
  CHECK_THROWS_AS(make(1, 1.0, 5).validate(), DomainError);
}

TEST_CASE("quenched score is the beta-derivative of log Z") {
  for (int dim : {1, 2}) {
    const EnvField env(GammaEnvSpec::shifted_pareto(1.5), 77 + static_cast<std::uint64_t>(dim));
    const auto p = make(dim, 0.4, 25);
    const auto qs = quenched_score(p, env);
    CHECK(qs.log_z == doctest::Approx(log_partition(p, env)).epsilon(1e-12));
    const double h = 1e-5;
    const double fd = (log_partition(make(dim, 0.4 + h, 25), env) - log_partition(make(dim, 0.4 - h, 25), env)) / (2 * h);
    CHECK(qs.score == doctest::Approx(fd).epsilon(1e-6));
  }
  ModelParams t = make(1, 0.3, 5);
  t.truncation = TruncationSpec::make(GammaEnvSpec::shifted_pareto(1.5), 0.3, 1.0);
  CHECK_THROWS_AS(quenched_score(t, ConstantDisorder()), DomainError);
}

TEST_CASE("replica checkpoints and JSONL round trip") {
  const EnvField env(GammaEnvSpec::shifted_pareto(1.5), 5);
  const auto p = make(2, 0.5, 40);
  const auto schedule = default_schedule(40);
  CHECK(schedule == std::vector<int>{0, 1, 2, 4, 6, 8, 10, 16, 20, 32, 40});
  const auto r = run_replica(p, env, schedule, 5);
  REQUIRE(r.checkpoints.size() == schedule.size());
  CHECK(r.checkpoints.back().log_z == doctest::Approx(log_partition(p, env)).epsilon(1e-13));
  for (std::size_t i = 1; i < r.checkpoints.size(); ++i) {
    CHECK(r.checkpoints[i].overlap_sum >= r.checkpoints[i - 1].overlap_sum);
    CHECK(r.checkpoints[i].max_endpoint_prob <= 1.0);
  }
  const std::string text = to_jsonl(r, "abc");
  CHECK(text.rfind("{\"config_hash\":\"abc\",\"seed\":5,\"n\":0,\"logZ\":", 0) == 0);
  const auto back = replica_from_jsonl(text);
  CHECK(back.seed == 5);
  REQUIRE(back.checkpoints.size() == r.checkpoints.size());
  for (std::size_t i = 0; i < r.checkpoints.size(); ++i) {
    CHECK(back.checkpoints[i].log_z == r.checkpoints[i].log_z);
    CHECK(back.checkpoints[i].overlap_sum == r.checkpoints[i].overlap_sum);
  }
  CHECK(to_jsonl(back, "abc") == text);
  CHECK_THROWS_AS(run_replica(p, env, std::vector<int>{0, 41}, 5), DomainError);
}
