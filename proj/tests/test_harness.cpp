#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include "doctest.h"

#include "dpre/error.hpp"
#include "dpre/harness.hpp"

using namespace dpre;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("dpre_test_" + name);
  fs::remove_all(p);
  return p;
}

const char* kSmall = R"(# two cells
base_seed = 17
workers = 2

[cell]
d = 1
gamma = 1.5
beta = 0.0
N = 12
replicas = 3

[cell]
d = 2
gamma = 1.7
beta = 0.4
N = 10
replicas = 4
theta = 0.5
)";

int run_cli(const std::string& args) {
  const std::string cmd = std::string(DPRE_CLI_PATH) + " " + args + " > /dev/null 2>&1";
  const int rc = std::system(cmd.c_str());
  return WIFEXITED(rc) ? WEXITSTATUS(rc) : -1;
}

}  // namespace

TEST_CASE("config parsing") {
  const auto cfg = parse_config(kSmall);
  CHECK(cfg.base_seed == 17);
  CHECK(cfg.workers == 2);
  REQUIRE(cfg.cells.size() == 2);
  CHECK(cfg.cells[1].d == 2);
  CHECK(cfg.cells[1].theta.value() == 0.5);
  CHECK_FALSE(cfg.cells[0].theta.has_value());

  CHECK_THROWS_AS(parse_config("[cell]\nd=1\ngamma=2.5\nbeta=0.1\nN=5\nreplicas=2\n"), ConfigError);
  CHECK_THROWS_AS(parse_config("[cell]\nd=1\ngamma=1.5\nbeta=1.0\nN=5\nreplicas=2\n"), ConfigError);
  CHECK_THROWS_AS(parse_config("[cell]\nd=1\ngamma=1.5\nN=5\nreplicas=2\n"), ConfigError);
  CHECK_THROWS_AS(parse_config("[cell]\nd=1\nd=2\ngamma=1.5\nbeta=0.1\nN=5\nreplicas=2\n"), ConfigError);
  CHECK_THROWS_AS(parse_config("colour = red\n"), ConfigError);
  CHECK_THROWS_AS(parse_config("base_seed = 1\n"), ConfigError);
}

TEST_CASE("config hash ignores workers and output") {
  auto a = parse_config(kSmall);
  auto b = a;
  b.workers = 7;
  b.output = "elsewhere";
  CHECK(config_hash(a) == config_hash(b));
  CHECK(config_hash(a).size() == 16);
  b.cells[0].beta = 0.1;
  CHECK(config_hash(a) != config_hash(b));
  b = a;
  b.base_seed = 18;
  CHECK(config_hash(a) != config_hash(b));
}

TEST_CASE("seeds and schedules") {
  CHECK(cell_seed(5, 0) != cell_seed(5, 1));
  CHECK(replica_seed(5, 0, 1) != replica_seed(5, 1, 0));
  CellSpec c;
  c.N = 10;
  CHECK(cell_schedule(c, 3) == std::vector<int>{0, 3, 6, 9, 10});
  CHECK(cell_schedule(c, 0) == default_schedule(10));
}

TEST_CASE("sweep writes replicas, summaries and an aggregate") {
  auto cfg = parse_config(kSmall);
  cfg.output = scratch("sweep").string();
  const auto out = run_sweep(cfg);
  CHECK(out.complete);
  CHECK(out.exit_code() == 0);
  CHECK(fs::exists(fs::path(cfg.output) / "manifest.json"));
  CHECK(fs::exists(fs::path(cfg.output) / "cells/cell_0001/summary.json"));

  // beta = 0 gives log Z = 0 at every checkpoint
  for (const auto& r : load_cell_replicas(cfg.output, 0, 3)) {
    for (const auto& cp : r.checkpoints) CHECK(cp.log_z == 0.0);
  }
  // a sweep replica equals a direct run with the same seed
  const auto reps = load_cell_replicas(cfg.output, 1, 4);
  REQUIRE(reps.size() == 4);
  const auto& cell = cfg.cells[1];
  const EnvField env(cell.env(), replica_seed(cfg.base_seed, 1, 2));
  const auto direct = run_replica(cell.params(), env, cell_schedule(cell, 0), replica_seed(cfg.base_seed, 1, 2));
  CHECK(to_jsonl(direct, config_hash(cfg)) == to_jsonl(reps[2], config_hash(cfg)));

  const auto rows = read_aggregate(out.aggregate);
  REQUIRE(rows.size() == 2);
  CHECK(rows[0].p_hat == 0.0);
  CHECK(rows[0].config_hash == config_hash(cfg));
  CHECK(rows[1].bound.has_value());
  std::ostringstream text;
  text << kAggregateHeader << "\n" << format_aggregate_row(rows[0]) << "\n" << format_aggregate_row(rows[1]) << "\n";
  CHECK(read_file(out.aggregate) == text.str());

  // a rerun over a finished tree changes nothing
  const auto before = read_file(out.manifest);
  run_sweep(cfg);
  CHECK(read_file(out.manifest) == before);

  // a different config on the same tree is refused without force
  auto other = cfg;
  other.base_seed = 99;
  CHECK_THROWS_AS(run_sweep(other), ConfigError);
  SweepOptions force;
  force.force = true;
  CHECK(run_sweep(other, force).complete);
  CHECK(read_aggregate(fs::path(cfg.output) / "aggregate.csv")[0].config_hash == config_hash(other));
  fs::remove_all(cfg.output);
}

TEST_CASE("interrupted sweep resumes to identical output") {
  auto cfg = parse_config(kSmall);
  cfg.output = scratch("full").string();
  run_sweep(cfg);
  auto part = cfg;
  part.output = scratch("part").string();
  SweepOptions stop;
  stop.stop_after_replicas = 4;
  CHECK_FALSE(run_sweep(part, stop).complete);
  CHECK(run_sweep(part).complete);
  CHECK(read_file(fs::path(part.output) / "aggregate.csv") == read_file(fs::path(cfg.output) / "aggregate.csv"));
  fs::remove_all(cfg.output);
  fs::remove_all(part.output);
}

TEST_CASE("command-line exit codes") {
  const fs::path dir = scratch("cli");
  fs::create_directories(dir);
  CHECK(run_cli("env-check --gamma 2.5 --draws 1000") == 2);
  CHECK(run_cli("certify --d 1 --gamma 1.5 --beta 0.3 --N 10 --replicas 4 --theta 0.9") == 2);
  CHECK(run_cli("certify --d 1 --gamma 1.5 --beta 0.3 --N 10 --replicas 4 --theta 0.9 --exploratory --bootstrap 20") ==
        0);
  CHECK(run_cli("pinning --d 3 --q 0.5 --n-max 50 --replicas 4 --out " + (dir / "p3").string()) == 2);
  CHECK(run_cli("no-such-command") == 2);
  CHECK(run_cli("simulate --d 8 --gamma 1.5 --beta 0.3 --N 1000 --replicas 2 --out " + (dir / "big").string()) == 3);

  CHECK(run_cli("pinning --d 1 --q 0.8 --n-max 50 --replicas 4 --out " + (dir / "p1").string()) == 2);
  REQUIRE(run_cli("pinning --d 3 --gamma 1.9 --beta 0.05 --q 0.8 --k 2 --n-max 40 --replicas 4 --out " +
                  (dir / "p3ok").string()) == 0);
  const std::string kernel = read_file(dir / "p3ok" / "kernel.csv");
  CHECK(kernel.rfind("n,u,K,partial_sum_K\n0,1,0,0\n1,", 0) == 0);
  CHECK(read_file(dir / "p3ok" / "rho.csv").rfind("seed,d,gamma,q,beta,k,rho,", 0) == 0);

  std::ofstream(dir / "bad.cfg") << "[cell]\nd = 1\ngamma = 2.5\nbeta = 0.1\nN = 5\nreplicas = 2\n";
  CHECK(run_cli("sweep " + (dir / "bad.cfg").string()) == 2);
  fs::remove_all(dir);
}
