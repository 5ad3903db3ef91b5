#include "dpre/harness.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <iomanip>
#include <sstream>

#include "json.hpp"

#include "dpre/error.hpp"
#include "dpre/parallel.hpp"
#include "dpre/stats.hpp"

namespace dpre {

namespace fs = std::filesystem;
using json = nlohmann::ordered_json;

namespace {

struct Interrupted {};

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

std::string unquote(const std::string& s) {
  if (s.size() >= 2 && (s.front() == '"' || s.front() == '\'') && s.back() == s.front()) {
    return s.substr(1, s.size() - 2);
  }
  return s;
}

std::string fmt(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

double parse_double(const std::string& key, const std::string& v, int line) {
  try {
    std::size_t pos = 0;
    const double x = std::stod(v, &pos);
    if (pos != v.size()) throw std::invalid_argument(v);
    return x;
  } catch (const std::exception&) {
    throw ConfigError("line " + std::to_string(line) + ": '" + key + "' expects a number, got '" + v + "'");
  }
}

long long parse_int(const std::string& key, const std::string& v, int line) {
  try {
    std::size_t pos = 0;
    const long long x = std::stoll(v, &pos, 0);
    if (pos != v.size()) throw std::invalid_argument(v);
    return x;
  } catch (const std::exception&) {
    throw ConfigError("line " + std::to_string(line) + ": '" + key + "' expects an integer, got '" + v + "'");
  }
}

std::string cell_dir_name(std::size_t cell) {
  std::ostringstream s;
  s << "cell_" << std::setw(4) << std::setfill('0') << cell;
  return s.str();
}

std::string replica_file_name(std::size_t replica) {
  std::ostringstream s;
  s << "replica_" << std::setw(5) << std::setfill('0') << replica << ".jsonl";
  return s.str();
}

int code_of(const std::exception_ptr& e) {
  try {
    std::rethrow_exception(e);
  } catch (const ConfigError&) {
    return 2;
  } catch (const DomainError&) {
    return 2;
  } catch (const DivergenceError&) {
    return 2;
  } catch (const ResourceError&) {
    return 3;
  } catch (const InsufficientDataError&) {
    return 4;
  } catch (...) {
    return 1;
  }
}

std::string message_of(const std::exception_ptr& e) {
  try {
    std::rethrow_exception(e);
  } catch (const std::exception& ex) {
    return ex.what();
  } catch (...) {
    return "unknown error";
  }
}

json manifest_json(const SweepConfig& config, const std::string& hash, const std::vector<CellOutcome>& cells) {
  json m;
  m["tool"] = "dpre";
  m["version"] = kToolVersion;
  m["config_hash"] = hash;
  m["base_seed"] = config.base_seed;
  json arr = json::array();
  for (std::size_t i = 0; i < cells.size(); ++i) {
    json c;
    c["cell"] = i;
    c["status"] = cells[i].status;
    c["path"] = "cells/" + cell_dir_name(i);
    if (!cells[i].error.empty()) c["error"] = cells[i].error;
    arr.push_back(c);
  }
  m["cells"] = arr;
  m["aggregate"] = "aggregate.csv";
  return m;
}

json estimate_json(const FreeEnergyEstimate& e) {
  json j;
  j["p_hat"] = e.mean;
  j["se"] = e.se;
  j["median_of_means"] = e.median_of_means;
  j["ci95"] = {e.ci_low, e.ci_high};
  json trace = json::array();
  for (const auto& t : e.trace) trace.push_back({{"n", t.n}, {"mean", t.mean}, {"se", t.se}});
  j["trace"] = trace;
  return j;
}

}  // namespace

void CellSpec::validate() const {
  std::ostringstream msg;
  if (d < 1 || d > kMaxDim) msg << "d must lie in [1, " << kMaxDim << "]; ";
  if (!(gamma > 1.0 && gamma < 2.0)) msg << "gamma must lie in (1,2); ";
  if (!(beta >= 0.0 && beta < 1.0)) msg << "beta must lie in [0,1); ";
  if (N < 1) msg << "N must be >= 1; ";
  if (replicas < 2) msg << "replicas must be >= 2; ";
  if (theta && !(*theta > 0.0 && *theta < 1.0)) msg << "theta must lie in (0,1); ";
  if (q && !(*q > 0.0 && *q < gamma - 1.0)) msg << "q must lie in (0, gamma - 1); ";
  if (kappa && !(*kappa > 0.0)) msg << "kappa must be positive; ";
  if (kappa && beta == 0.0) msg << "kappa needs beta > 0; ";
  if (!msg.str().empty()) throw ConfigError("cell: " + msg.str());
}

ModelParams CellSpec::params() const {
  ModelParams p;
  p.dim = d;
  p.beta = beta;
  p.horizon = N;
  if (kappa) p.truncation = TruncationSpec::make(env(), beta, *kappa);
  return p;
}

void SweepConfig::validate() const {
  if (cells.empty()) throw ConfigError("config: no [cell] sections");
  if (workers < 1) throw ConfigError("config: workers must be >= 1");
  if (checkpoint_interval < 0) throw ConfigError("config: checkpoint_interval must be >= 0");
  if (output.empty()) throw ConfigError("config: output must not be empty");
  for (std::size_t i = 0; i < cells.size(); ++i) {
    try {
      cells[i].validate();
    } catch (const ConfigError& e) {
      throw ConfigError("cell " + std::to_string(i) + ": " + e.what());
    }
  }
}

SweepConfig parse_config(const std::string& text) {
  SweepConfig cfg;
  std::istringstream in(text);
  std::string raw;
  int line = 0;
  CellSpec* cell = nullptr;
  std::vector<std::vector<std::string>> seen(1);
  while (std::getline(in, raw)) {
    ++line;
    const auto hash = raw.find('#');
    const std::string s = trim(hash == std::string::npos ? raw : raw.substr(0, hash));
    if (s.empty()) continue;
    if (s == "[cell]" || s == "[[cell]]") {
      cfg.cells.emplace_back();
      cell = &cfg.cells.back();
      seen.emplace_back();
      continue;
    }
    if (s.front() == '[') throw ConfigError("line " + std::to_string(line) + ": unknown section " + s);
    const auto eq = s.find('=');
    if (eq == std::string::npos) throw ConfigError("line " + std::to_string(line) + ": expected key = value");
    const std::string key = trim(s.substr(0, eq));
    const std::string value = unquote(trim(s.substr(eq + 1)));
    auto& keys = seen.back();
    if (std::find(keys.begin(), keys.end(), key) != keys.end()) {
      throw ConfigError("line " + std::to_string(line) + ": duplicate key '" + key + "'");
    }
    keys.push_back(key);
    if (!cell) {
      if (key == "base_seed") {
        cfg.base_seed = static_cast<std::uint64_t>(parse_int(key, value, line));
      } else if (key == "workers") {
        cfg.workers = static_cast<int>(parse_int(key, value, line));
      } else if (key == "output") {
        cfg.output = value;
      } else if (key == "checkpoint_interval") {
        cfg.checkpoint_interval = static_cast<int>(parse_int(key, value, line));
      } else {
        throw ConfigError("line " + std::to_string(line) + ": unknown key '" + key + "'");
      }
    } else {
      if (key == "d") {
        cell->d = static_cast<int>(parse_int(key, value, line));
      } else if (key == "gamma") {
        cell->gamma = parse_double(key, value, line);
      } else if (key == "beta") {
        cell->beta = parse_double(key, value, line);
      } else if (key == "N") {
        cell->N = static_cast<int>(parse_int(key, value, line));
      } else if (key == "replicas") {
        cell->replicas = static_cast<int>(parse_int(key, value, line));
      } else if (key == "theta") {
        cell->theta = parse_double(key, value, line);
      } else if (key == "q") {
        cell->q = parse_double(key, value, line);
      } else if (key == "kappa") {
        cell->kappa = parse_double(key, value, line);
      } else {
        throw ConfigError("line " + std::to_string(line) + ": unknown cell key '" + key + "'");
      }
    }
  }
  for (std::size_t i = 0; i < cfg.cells.size(); ++i) {
    for (const char* required : {"d", "gamma", "beta", "N", "replicas"}) {
      const auto& keys = seen[i + 1];
      if (std::find(keys.begin(), keys.end(), required) == keys.end()) {
        throw ConfigError("cell " + std::to_string(i) + ": missing key '" + required + "'");
      }
    }
  }
  cfg.validate();
  return cfg;
}

SweepConfig load_config(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config file " + path.string());
  std::ostringstream s;
  s << in.rdbuf();
  return parse_config(s.str());
}

std::string canonical_config(const SweepConfig& config) {
  std::ostringstream s;
  s << "base_seed=" << config.base_seed << '\n';
  s << "checkpoint_interval=" << config.checkpoint_interval << '\n';
  for (const auto& c : config.cells) {
    s << "[cell]\n";
    s << "d=" << c.d << "\ngamma=" << fmt(c.gamma) << "\nbeta=" << fmt(c.beta) << "\nN=" << c.N
      << "\nreplicas=" << c.replicas << '\n';
    if (c.theta) s << "theta=" << fmt(*c.theta) << '\n';
    if (c.q) s << "q=" << fmt(*c.q) << '\n';
    if (c.kappa) s << "kappa=" << fmt(*c.kappa) << '\n';
  }
  return s.str();
}

std::string config_hash(const SweepConfig& config) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char ch : canonical_config(config)) {
    h ^= ch;
    h *= 0x100000001b3ULL;
  }
  std::ostringstream s;
  s << std::hex << std::setw(16) << std::setfill('0') << h;
  return s.str();
}

std::vector<int> cell_schedule(const CellSpec& cell, int checkpoint_interval) {
  if (checkpoint_interval <= 0) return default_schedule(cell.N);
  std::vector<int> s;
  for (int n = 0; n < cell.N; n += checkpoint_interval) s.push_back(n);
  s.push_back(cell.N);
  return s;
}

std::uint64_t cell_seed(std::uint64_t base_seed, std::size_t cell) { return derive_seed(base_seed, cell); }

std::uint64_t replica_seed(std::uint64_t base_seed, std::size_t cell, std::size_t replica) {
  return derive_seed(base_seed, cell, replica);
}

int SweepOutcome::exit_code() const {
  for (const auto& c : cells) {
    if (c.status == "failed") return c.exit_code == 0 ? 1 : c.exit_code;
  }
  return complete ? 0 : 1;
}

void write_atomic(const fs::path& path, const std::string& content) {
  fs::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write " + tmp.string());
    out << content;
    out.flush();
    if (!out) throw std::runtime_error("write failed for " + tmp.string());
  }
  fs::rename(tmp, path);
}

std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot read " + path.string());
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

std::vector<ReplicaResult> load_cell_replicas(const fs::path& output, std::size_t cell, int replicas) {
  const fs::path dir = output / "cells" / cell_dir_name(cell);
  std::vector<ReplicaResult> out;
  out.reserve(static_cast<std::size_t>(replicas));
  for (int r = 0; r < replicas; ++r) {
    out.push_back(replica_from_jsonl(read_file(dir / replica_file_name(static_cast<std::size_t>(r)))));
  }
  return out;
}

std::string format_aggregate_row(const AggregateRow& r) {
  auto opt = [](const std::optional<double>& v) { return v ? fmt(*v) : std::string(); };
  std::ostringstream s;
  s << r.config_hash << ',' << r.cell << ',' << r.d << ',' << fmt(r.gamma) << ',' << fmt(r.beta) << ',' << r.N
    << ',' << r.replicas << ',' << r.seed << ',' << fmt(r.p_hat) << ',' << fmt(r.se) << ',' << fmt(r.mom) << ','
    << opt(r.theta) << ',' << opt(r.bound) << ',' << opt(r.bound_ucl) << ',' << r.diagnosis;
  return s.str();
}

std::vector<AggregateRow> read_aggregate(const fs::path& csv) {
  std::istringstream in(read_file(csv));
  std::string line;
  if (!std::getline(in, line) || trim(line) != kAggregateHeader) {
    throw ConfigError("aggregate: unexpected header in " + csv.string());
  }
  std::vector<AggregateRow> rows;
  while (std::getline(in, line)) {
    if (trim(line).empty()) continue;
    std::vector<std::string> f;
    std::string field;
    std::istringstream ls(line);
    while (std::getline(ls, field, ',')) f.push_back(field);
    if (!line.empty() && line.back() == ',') f.emplace_back();
    if (f.size() != 15) throw ConfigError("aggregate: malformed row '" + line + "'");
    auto opt = [](const std::string& v) { return v.empty() ? std::optional<double>() : std::optional<double>(std::stod(v)); };
    AggregateRow r;
    r.config_hash = f[0];
    r.cell = std::stoul(f[1]);
    r.d = std::stoi(f[2]);
    r.gamma = std::stod(f[3]);
    r.beta = std::stod(f[4]);
    r.N = std::stoi(f[5]);
    r.replicas = std::stoi(f[6]);
    r.seed = std::stoull(f[7]);
    r.p_hat = std::stod(f[8]);
    r.se = std::stod(f[9]);
    r.mom = std::stod(f[10]);
    r.theta = opt(f[11]);
    r.bound = opt(f[12]);
    r.bound_ucl = opt(f[13]);
    r.diagnosis = trim(f[14]);
    rows.push_back(std::move(r));
  }
  return rows;
}

SweepOutcome run_sweep(const SweepConfig& config, const SweepOptions& options) {
  config.validate();
  const std::string hash = config_hash(config);
  const fs::path root(config.output);
  const fs::path manifest_path = root / "manifest.json";
  const fs::path aggregate_path = root / "aggregate.csv";

  SweepOutcome outcome;
  outcome.manifest = manifest_path;
  outcome.aggregate = aggregate_path;
  outcome.cells.assign(config.cells.size(), CellOutcome{"pending", "", 0});

  if (fs::exists(manifest_path)) {
    const json old = json::parse(read_file(manifest_path));
    if (old.value("config_hash", std::string()) != hash) {
      if (!options.force) {
        throw ConfigError("output " + root.string() + " holds a run with config hash " +
                          old.value("config_hash", std::string("?")) + ", current hash is " + hash +
                          "; refusing to resume (use --force to start over)");
      }
      fs::remove_all(root / "cells");
      fs::remove(aggregate_path);
    } else {
      for (const auto& c : old.at("cells")) {
        const auto i = c.at("cell").get<std::size_t>();
        if (i < outcome.cells.size() && c.at("status") == "done") outcome.cells[i].status = "done";
      }
    }
  }
  fs::create_directories(root / "cells");
  write_atomic(manifest_path, manifest_json(config, hash, outcome.cells).dump(2) + "\n");

  std::atomic<int> written{0};
  const int budget = options.stop_after_replicas.value_or(-1);
  std::vector<AggregateRow> rows;

  for (std::size_t ci = 0; ci < config.cells.size(); ++ci) {
    const CellSpec& cell = config.cells[ci];
    const fs::path dir = root / "cells" / cell_dir_name(ci);
    auto& status = outcome.cells[ci];
    try {
      if (status.status != "done") {
        status.status = "running";
        write_atomic(manifest_path, manifest_json(config, hash, outcome.cells).dump(2) + "\n");
        fs::create_directories(dir);
        const ModelParams params = cell.params();
        params.validate();
        check_resources(params);
        const auto schedule = cell_schedule(cell, config.checkpoint_interval);
        std::vector<std::size_t> missing;
        for (int r = 0; r < cell.replicas; ++r) {
          if (!fs::exists(dir / replica_file_name(static_cast<std::size_t>(r)))) {
            missing.push_back(static_cast<std::size_t>(r));
          }
        }
        parallel_for(missing.size(), config.workers, [&](std::size_t k) {
          if (budget >= 0 && written.load() >= budget) throw Interrupted{};
          const std::size_t r = missing[k];
          const std::uint64_t seed = replica_seed(config.base_seed, ci, r);
          const EnvField field(cell.env(), seed);
          const ReplicaResult res = run_replica(params, field, schedule, seed);
          write_atomic(dir / replica_file_name(r), to_jsonl(res, hash));
          ++written;
        });
      }

      const auto results = load_cell_replicas(root, ci, cell.replicas);
      EnsembleSpec es;
      es.params = cell.params();
      es.env = cell.env();
      es.base_seed = cell_seed(config.base_seed, ci);
      es.replicas = cell.replicas;
      const FreeEnergyEstimate fe = free_energy_from(results, es);
      const WeakDisorderProbe probe = weak_disorder_probe(results);

      AggregateRow row;
      row.config_hash = hash;
      row.cell = ci;
      row.d = cell.d;
      row.gamma = cell.gamma;
      row.beta = cell.beta;
      row.N = cell.N;
      row.replicas = cell.replicas;
      row.seed = es.base_seed;
      row.p_hat = fe.mean;
      row.se = fe.se;
      row.mom = fe.median_of_means;
      row.diagnosis = to_string(probe.label);

      json summary;
      summary["config_hash"] = hash;
      summary["cell"] = ci;
      summary["seed"] = es.base_seed;
      summary["d"] = cell.d;
      summary["gamma"] = cell.gamma;
      summary["beta"] = cell.beta;
      summary["N"] = cell.N;
      summary["replicas"] = cell.replicas;
      summary["free_energy"] = estimate_json(fe);
      if (cell.kappa) {
        summary["kappa"] = *cell.kappa;
        summary["log_c_beta"] = es.params.truncation->log_c_beta;
      }
      if (cell.theta) {
        FractionalMomentConfig fm;
        fm.theta = *cell.theta;
        fm.certified = *cell.theta <= 0.5;
        std::vector<double> log_z;
        for (const auto& r : results) log_z.push_back(r.checkpoints.back().log_z);
        const auto b = fm_bound_from_log_z(log_z, cell.N, fm, derive_seed(es.base_seed, 0x626f6f74ULL));
        row.theta = *cell.theta;
        row.bound = b.bound;
        row.bound_ucl = b.bound_ucl;
        summary["fractional_moment"] = {{"theta", b.theta},     {"certified", b.certified},
                                        {"bound", b.bound},     {"bound_ucl", b.bound_ucl},
                                        {"plug_in", b.plug_in}, {"jensen_ok", b.jensen_ok}};
      }
      if (cell.q) {
        const auto m = moment_m(cell.env(), cell.beta, *cell.q);
        summary["q"] = *cell.q;
        summary["driving_moment"] = m.finite() ? json(m.value) : json("divergent");
      }
      summary["diagnosis"] = {{"label", to_string(probe.label)}, {"reason", probe.reason}};
      write_atomic(dir / "summary.json", summary.dump(2) + "\n");
      rows.push_back(row);
      status.status = "done";
      status.error.clear();
    } catch (const Interrupted&) {
      write_atomic(manifest_path, manifest_json(config, hash, outcome.cells).dump(2) + "\n");
      outcome.complete = false;
      return outcome;
    } catch (...) {
      const auto e = std::current_exception();
      status.status = "failed";
      status.error = message_of(e);
      status.exit_code = code_of(e);
    }
    write_atomic(manifest_path, manifest_json(config, hash, outcome.cells).dump(2) + "\n");
  }

  std::string csv = std::string(kAggregateHeader) + "\n";
  for (const auto& r : rows) csv += format_aggregate_row(r) + "\n";
  write_atomic(aggregate_path, csv);
  outcome.complete = std::all_of(outcome.cells.begin(), outcome.cells.end(),
                                 [](const CellOutcome& c) { return c.status == "done"; });
  return outcome;
}

}  // namespace dpre
