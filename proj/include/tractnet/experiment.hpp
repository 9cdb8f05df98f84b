#pragma once

// Experiment pipeline behind the command-line tool: JSON config, the
// (architecture x regularizer x lambda x seed) training grid, MILP runs over
// saved models, and the summary report.

#include <glob.h>

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <mutex>
#include <set>
#include <sstream>
#include <stdexcept>
#include <string>
#include <thread>
#include <utility>
#include <vector>

#include <json.hpp>

#include "tractnet/benchmarks.hpp"
#include "tractnet/milp.hpp"
#include "tractnet/network.hpp"
#include "tractnet/regularizers.hpp"
#include "tractnet/trainer.hpp"

namespace tractnet {

inline constexpr int kSchemaVersion = 1;
inline constexpr const char* kOutputDirEnv = "TRACTNET_OUTPUT_DIR";

class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

struct RegSpec {
  std::string name;             // none, l1, l2, bw, sn, sn2, lp, bw+lp
  std::vector<double> lambdas;  // ignored for none
  double alpha = 1.0;           // bw+lp: lambda_BW = alpha * lambda
};

struct ExperimentConfig {
  std::string benchmark = "peaks";  // himmelblau | peaks | ackley-<d> | synth-quantile
  std::vector<std::vector<std::size_t>> architectures;
  std::vector<RegSpec> regularizers;
  std::vector<std::uint64_t> seeds = {0};
  std::size_t samples = 20000;
  double test_fraction = 0.3;
  std::uint64_t data_seed = 0;
  std::size_t epochs = 50;
  std::size_t batch_size = 128;
  double lr = 1e-3;
  std::size_t lp_samples = 1;
  GapDirection lp_direction = GapDirection::Min;
  Projection lp_projection = Projection::Sphere;
  std::size_t quantile_inputs = 8;
  std::size_t quantile_levels = 5;
  bool quantile_noise = true;
  double milp_time_limit = 60.0;
  std::size_t milp_node_limit = 1000000;
  std::string output_dir = "results";
  std::size_t workers = 1;

  bool quantile() const { return benchmark == "synth-quantile"; }
};

inline const std::set<std::string>& regularizer_names() {
  static const std::set<std::string> n = {"none", "l1", "l2", "bw", "sn", "sn2", "lp", "bw+lp"};
  return n;
}

inline RegularizerConfig regularizer_config(const std::string& name, double lambda, double alpha) {
  RegularizerConfig r;
  if (name == "none") return r;
  if (name == "l1") r.l1 = lambda;
  else if (name == "l2") r.l2 = lambda;
  else if (name == "bw") r.bw = lambda;
  else if (name == "sn") r.sn = lambda;
  else if (name == "sn2") r.sn2 = lambda;
  else if (name == "lp") r.lp = lambda;
  else if (name == "bw+lp") {
    r.lp = lambda;
    r.alpha = alpha;
  } else
    throw ConfigError("unknown regularizer '" + name + "'");
  return r;
}

namespace detail {

using nlohmann::json;

inline void check_keys(const json& obj, const std::string& where, std::initializer_list<const char*> allowed) {
  if (!obj.is_object()) throw ConfigError("config: " + where + " must be an object");
  for (const auto& [k, v] : obj.items()) {
    bool ok = false;
    for (const char* a : allowed) ok = ok || k == a;
    if (!ok) throw ConfigError("config: unknown field '" + (where.empty() ? k : where + "." + k) + "'");
  }
}

inline std::size_t get_count(const json& v, const std::string& field, bool allow_zero = false) {
  if (!v.is_number_integer() || v.get<long long>() < (allow_zero ? 0 : 1))
    throw ConfigError("config: field '" + field + "' must be an integer >= " + (allow_zero ? "0" : "1"));
  return v.get<std::size_t>();
}

inline double get_number(const json& v, const std::string& field) {
  if (!v.is_number()) throw ConfigError("config: field '" + field + "' must be a number");
  const double d = v.get<double>();
  if (!std::isfinite(d)) throw ConfigError("config: field '" + field + "' must be finite");
  return d;
}

inline std::string get_string(const json& v, const std::string& field) {
  if (!v.is_string()) throw ConfigError("config: field '" + field + "' must be a string");
  return v.get<std::string>();
}

}  // namespace detail

/// Parse and validate a JSON experiment config. Unknown keys are errors.
inline ExperimentConfig parse_config(const std::string& text) {
  using detail::json;
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ConfigError(std::string("config: JSON parse error: ") + e.what());
  }
  detail::check_keys(j, "", {"benchmark", "architectures", "regularizers", "seeds", "samples", "test_fraction",
                             "data_seed", "epochs", "batch_size", "lr", "lp", "quantile", "milp", "output_dir", "workers"});
  ExperimentConfig c;
  if (j.contains("benchmark")) c.benchmark = detail::get_string(j["benchmark"], "benchmark");
  if (!c.quantile()) {
    try {
      benchmark_by_name(c.benchmark);
    } catch (const std::invalid_argument& e) {
      throw ConfigError(std::string("config: field 'benchmark': ") + e.what());
    }
  }
  if (!j.contains("architectures")) throw ConfigError("config: field 'architectures' is required");
  if (!j["architectures"].is_array() || j["architectures"].empty())
    throw ConfigError("config: field 'architectures' must be a nonempty array");
  for (std::size_t a = 0; a < j["architectures"].size(); ++a) {
    const auto& arr = j["architectures"][a];
    const std::string f = "architectures[" + std::to_string(a) + "]";
    if (!arr.is_array() || arr.size() < 2) throw ConfigError("config: field '" + f + "' must list at least 2 layer sizes");
    std::vector<std::size_t> dims;
    for (std::size_t i = 0; i < arr.size(); ++i) dims.push_back(detail::get_count(arr[i], f + "[" + std::to_string(i) + "]"));
    c.architectures.push_back(dims);
  }
  if (j.contains("regularizers")) {
    if (!j["regularizers"].is_array() || j["regularizers"].empty())
      throw ConfigError("config: field 'regularizers' must be a nonempty array");
    for (std::size_t r = 0; r < j["regularizers"].size(); ++r) {
      const auto& o = j["regularizers"][r];
      const std::string f = "regularizers[" + std::to_string(r) + "]";
      detail::check_keys(o, f, {"name", "lambdas", "alpha"});
      RegSpec s;
      if (!o.contains("name")) throw ConfigError("config: field '" + f + ".name' is required");
      s.name = detail::get_string(o["name"], f + ".name");
      if (!regularizer_names().count(s.name))
        throw ConfigError("config: field '" + f + ".name': unknown regularizer '" + s.name + "'");
      if (o.contains("alpha")) {
        s.alpha = detail::get_number(o["alpha"], f + ".alpha");
        if (s.alpha < 0) throw ConfigError("config: field '" + f + ".alpha' must be >= 0");
      }
      if (s.name != "none") {
        if (!o.contains("lambdas") || !o["lambdas"].is_array() || o["lambdas"].empty())
          throw ConfigError("config: field '" + f + ".lambdas' must be a nonempty array");
        for (std::size_t i = 0; i < o["lambdas"].size(); ++i) {
          const double l = detail::get_number(o["lambdas"][i], f + ".lambdas[" + std::to_string(i) + "]");
          if (l < 0) throw ConfigError("config: field '" + f + ".lambdas[" + std::to_string(i) + "]' must be >= 0");
          s.lambdas.push_back(l);
        }
      } else if (o.contains("lambdas")) {
        throw ConfigError("config: field '" + f + ".lambdas' is not allowed for 'none'");
      }
      c.regularizers.push_back(s);
    }
  } else {
    c.regularizers.push_back({"none", {}, 1.0});
  }
  if (j.contains("seeds")) {
    if (!j["seeds"].is_array() || j["seeds"].empty()) throw ConfigError("config: field 'seeds' must be a nonempty array");
    c.seeds.clear();
    for (std::size_t i = 0; i < j["seeds"].size(); ++i)
      c.seeds.push_back(detail::get_count(j["seeds"][i], "seeds[" + std::to_string(i) + "]", true));
  }
  if (j.contains("samples")) c.samples = detail::get_count(j["samples"], "samples");
  if (c.samples < 2) throw ConfigError("config: field 'samples' must be >= 2");
  if (j.contains("test_fraction")) {
    c.test_fraction = detail::get_number(j["test_fraction"], "test_fraction");
    if (!(c.test_fraction > 0 && c.test_fraction < 1)) throw ConfigError("config: field 'test_fraction' must be in (0,1)");
  }
  if (j.contains("data_seed")) c.data_seed = detail::get_count(j["data_seed"], "data_seed", true);
  if (j.contains("epochs")) c.epochs = detail::get_count(j["epochs"], "epochs");
  if (j.contains("batch_size")) c.batch_size = detail::get_count(j["batch_size"], "batch_size");
  if (j.contains("lr")) {
    c.lr = detail::get_number(j["lr"], "lr");
    if (!(c.lr > 0)) throw ConfigError("config: field 'lr' must be > 0");
  }
  if (j.contains("workers")) c.workers = detail::get_count(j["workers"], "workers");
  if (j.contains("output_dir")) c.output_dir = detail::get_string(j["output_dir"], "output_dir");
  if (j.contains("lp")) {
    const auto& o = j["lp"];
    detail::check_keys(o, "lp", {"samples", "direction", "projection"});
    if (o.contains("samples")) c.lp_samples = detail::get_count(o["samples"], "lp.samples");
    if (o.contains("direction")) {
      const std::string d = detail::get_string(o["direction"], "lp.direction");
      if (d == "min") c.lp_direction = GapDirection::Min;
      else if (d == "max") c.lp_direction = GapDirection::Max;
      else if (d == "both") c.lp_direction = GapDirection::Both;
      else throw ConfigError("config: field 'lp.direction' must be min, max or both");
    }
    if (o.contains("projection")) {
      const std::string p = detail::get_string(o["projection"], "lp.projection");
      if (p == "sphere") c.lp_projection = Projection::Sphere;
      else if (p == "nonnegative") c.lp_projection = Projection::Nonnegative;
      else throw ConfigError("config: field 'lp.projection' must be sphere or nonnegative");
    }
  }
  if (j.contains("quantile")) {
    const auto& o = j["quantile"];
    detail::check_keys(o, "quantile", {"inputs", "levels", "noise"});
    if (o.contains("inputs")) c.quantile_inputs = detail::get_count(o["inputs"], "quantile.inputs");
    if (o.contains("levels")) c.quantile_levels = detail::get_count(o["levels"], "quantile.levels");
    if (o.contains("noise")) {
      if (!o["noise"].is_boolean()) throw ConfigError("config: field 'quantile.noise' must be true or false");
      c.quantile_noise = o["noise"].get<bool>();
    }
  }
  if (j.contains("milp")) {
    const auto& o = j["milp"];
    detail::check_keys(o, "milp", {"time_limit", "node_limit"});
    if (o.contains("time_limit")) {
      c.milp_time_limit = detail::get_number(o["time_limit"], "milp.time_limit");
      if (!(c.milp_time_limit > 0)) throw ConfigError("config: field 'milp.time_limit' must be > 0");
    }
    if (o.contains("node_limit")) c.milp_node_limit = detail::get_count(o["node_limit"], "milp.node_limit");
  }
  // architecture / data consistency
  const std::size_t n_in = c.quantile() ? c.quantile_inputs : benchmark_by_name(c.benchmark).dim();
  const std::size_t n_out = c.quantile() ? c.quantile_levels : 1;
  for (std::size_t a = 0; a < c.architectures.size(); ++a) {
    if (c.architectures[a].front() != n_in)
      throw ConfigError("config: field 'architectures[" + std::to_string(a) + "]' input size " +
                        std::to_string(c.architectures[a].front()) + " does not match benchmark input size " +
                        std::to_string(n_in));
    if (c.architectures[a].back() != n_out)
      throw ConfigError("config: field 'architectures[" + std::to_string(a) + "]' output size " +
                        std::to_string(c.architectures[a].back()) + " does not match the required " + std::to_string(n_out));
  }
  for (const auto& r : c.regularizers)
    if ((r.name == "lp" || r.name == "bw+lp") && c.lp_samples > c.batch_size)
      throw ConfigError("config: field 'lp.samples' exceeds 'batch_size'");
  return c;
}

inline ExperimentConfig load_config(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw ConfigError("config: cannot read '" + path + "'");
  std::stringstream ss;
  ss << f.rdbuf();
  return parse_config(ss.str());
}

/// Output directory: the environment override wins over the config.
inline std::string resolve_output_dir(const std::string& configured) {
  const char* env = std::getenv(kOutputDirEnv);
  return env && *env ? std::string(env) : configured;
}

// ---------------------------------------------------------------- CSV

struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;

  std::size_t column(const std::string& name) const {
    for (std::size_t i = 0; i < header.size(); ++i)
      if (header[i] == name) return i;
    throw std::invalid_argument("csv: missing column '" + name + "'");
  }
  bool has(const std::string& name) const { return std::find(header.begin(), header.end(), name) != header.end(); }
};

inline std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  for (char ch : line) {
    if (ch == ',') {
      out.push_back(cur);
      cur.clear();
    } else if (ch != '\r') {
      cur += ch;
    }
  }
  out.push_back(cur);
  return out;
}

inline CsvTable read_csv(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw std::runtime_error("cannot read " + path);
  CsvTable t;
  std::string line;
  if (!std::getline(f, line)) throw std::runtime_error(path + ": empty file");
  t.header = split_csv_line(line);
  std::size_t lineno = 1;
  while (std::getline(f, line)) {
    ++lineno;
    if (line.empty()) continue;
    auto row = split_csv_line(line);
    if (row.size() != t.header.size())
      throw std::runtime_error(path + ":" + std::to_string(lineno) + ": expected " + std::to_string(t.header.size()) +
                               " fields, got " + std::to_string(row.size()));
    t.rows.push_back(std::move(row));
  }
  return t;
}

inline void write_csv(const std::string& path, const CsvTable& t) {
  std::filesystem::path p(path);
  if (p.has_parent_path()) std::filesystem::create_directories(p.parent_path());
  std::ofstream f(path);
  if (!f) throw std::runtime_error("cannot write " + path);
  auto line = [&](const std::vector<std::string>& r) {
    for (std::size_t i = 0; i < r.size(); ++i) f << (i ? "," : "") << r[i];
    f << "\n";
  };
  line(t.header);
  for (const auto& r : t.rows) line(r);
  if (!f) throw std::runtime_error("write failed: " + path);
}

inline std::string fmt(double v) { return format_double(v); }

inline std::string lambda_tag(double l) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%g", l);
  return buf;
}

// ---------------------------------------------------------------- grid

struct GridCell {
  std::vector<std::size_t> dims;
  std::string regularizer;
  double lambda = 0.0;
  double alpha = 1.0;
  std::uint64_t seed = 0;
};

inline std::vector<GridCell> expand_grid(const ExperimentConfig& c) {
  std::vector<GridCell> cells;
  for (const auto& dims : c.architectures)
    for (const auto& r : c.regularizers) {
      const std::vector<double> lams = r.name == "none" ? std::vector<double>{0.0} : r.lambdas;
      for (double l : lams)
        for (std::uint64_t s : c.seeds) cells.push_back({dims, r.name, l, r.alpha, s});
    }
  return cells;
}

/// Runs f(i) for i in [0, n) on `workers` threads. The first exception is
/// rethrown after all workers stop.
inline void parallel_for(std::size_t n, std::size_t workers, const std::function<void(std::size_t)>& f) {
  workers = std::max<std::size_t>(1, std::min(workers, n));
  if (workers == 1) {
    for (std::size_t i = 0; i < n; ++i) f(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr err;
  std::mutex err_mu;
  std::vector<std::thread> pool;
  for (std::size_t w = 0; w < workers; ++w)
    pool.emplace_back([&] {
      for (std::size_t i; (i = next.fetch_add(1)) < n;) {
        try {
          f(i);
        } catch (...) {
          std::lock_guard<std::mutex> lk(err_mu);
          if (!err) err = std::current_exception();
          next = n;
        }
      }
    });
  for (auto& t : pool) t.join();
  if (err) std::rethrow_exception(err);
}

struct PreparedData {
  Split split;
  Box box;                   // in network units
  bool binary_inputs = false;
  std::vector<double> taus;  // quantile mode
};

inline PreparedData prepare_data(const ExperimentConfig& c) {
  PreparedData d;
  if (c.quantile()) {
    const QuantileData q = synth_quantile_data(c.samples, c.quantile_inputs, c.quantile_levels, c.data_seed, c.quantile_noise);
    // binary inputs stay 0/1 so the trained network can be optimized over them directly
    d.split = split_normalize(q.data, c.test_fraction, c.data_seed, false, false);
    d.box = Box::uniform(c.quantile_inputs, 0.0, 1.0);
    d.binary_inputs = true;
    d.taus = q.taus;
  } else {
    const Benchmark b = benchmark_by_name(c.benchmark);
    d.split = split_normalize(make_benchmark_dataset(b, c.samples, c.data_seed), c.test_fraction, c.data_seed);
    d.box = normalize_box(b.box, d.split.stats.x);
  }
  return d;
}

inline std::string join_doubles(const std::vector<double>& v) {
  std::string s;
  for (std::size_t i = 0; i < v.size(); ++i) s += (i ? ";" : "") + fmt(v[i]);
  return s;
}

inline std::vector<double> parse_doubles(const std::string& s, char sep = ';') {
  std::vector<double> out;
  if (s.empty()) return out;
  std::stringstream ss(s);
  std::string tok;
  while (std::getline(ss, tok, sep)) {
    std::size_t used = 0;
    double v = 0;
    try {
      v = std::stod(tok, &used);
    } catch (const std::exception&) {
      used = 0;
    }
    if (used != tok.size() || tok.empty()) throw std::invalid_argument("not a number: '" + tok + "'");
    out.push_back(v);
  }
  return out;
}

inline const std::vector<std::string>& train_columns() {
  static const std::vector<std::string> c = {"schema_version", "benchmark",  "arch",         "regularizer",
                                             "lambda",         "seed",       "epochs",       "train_loss",
                                             "test_loss",      "unstable",   "mean_width",   "train_time_s",
                                             "model"};
  return c;
}

struct TrainRunResult {
  CsvTable table;
  std::vector<std::string> model_paths;
};

/// Trains every grid cell, writes one model file per cell and train.csv.
inline TrainRunResult run_train(const ExperimentConfig& c, const std::string& out_dir,
                                const std::function<void(const std::string&)>& log = {}) {
  std::filesystem::create_directories(out_dir + "/models");
  const PreparedData data = prepare_data(c);
  const auto cells = expand_grid(c);
  std::vector<std::vector<std::string>> rows(cells.size());
  std::vector<std::string> paths(cells.size());
  std::mutex log_mu;
  parallel_for(cells.size(), c.workers, [&](std::size_t i) {
    const GridCell& cell = cells[i];
    TrainConfig tc;
    tc.dims = cell.dims;
    tc.epochs = c.epochs;
    tc.batch_size = c.batch_size;
    tc.seed = cell.seed;
    tc.lr = c.lr;
    tc.box = data.box;
    tc.reg = regularizer_config(cell.regularizer, cell.lambda, cell.alpha);
    tc.reg.lp_samples = c.lp_samples;
    tc.reg.direction = c.lp_direction;
    tc.reg.projection = c.lp_projection;
    if (c.quantile()) {
      tc.loss = DataLoss::Pinball;
      tc.taus = data.taus;
    }
    auto [net, rep] = train(tc, data.split.train, &data.split.test);
    const std::string arch = arch_string(cell.dims);
    const std::string name = cell.regularizer + "_" + lambda_tag(cell.lambda) + "_" + arch + "_s" + std::to_string(cell.seed);
    const std::string path = out_dir + "/models/" + name + ".model";
    std::map<std::string, std::string> meta = {
        {"benchmark", c.benchmark},
        {"arch", arch},
        {"regularizer", cell.regularizer},
        {"lambda", fmt(cell.lambda)},
        {"alpha", fmt(cell.alpha)},
        {"seed", std::to_string(cell.seed)},
        {"box_lower", join_doubles(data.box.lower)},
        {"box_upper", join_doubles(data.box.upper)},
        {"binary_inputs", data.binary_inputs ? "1" : "0"},
        {"x_mean", join_doubles(data.split.stats.x.mean)},
        {"x_scale", join_doubles(data.split.stats.x.scale)},
        {"y_mean", join_doubles(data.split.stats.y.mean)},
        {"y_scale", join_doubles(data.split.stats.y.scale)},
    };
    if (!data.taus.empty()) meta["taus"] = join_doubles(data.taus);
    save_model(path, net, meta);
    paths[i] = path;
    rows[i] = {std::to_string(kSchemaVersion), c.benchmark, arch, cell.regularizer, fmt(cell.lambda),
               std::to_string(cell.seed), std::to_string(c.epochs), fmt(rep.train_loss), fmt(rep.test_loss),
               std::to_string(rep.unstable), fmt(rep.mean_width), fmt(rep.wall_time_s), path};
    if (log) {
      std::lock_guard<std::mutex> lk(log_mu);
      log("trained " + name + ": test " + fmt(rep.test_loss) + ", |U| " + std::to_string(rep.unstable));
    }
  });
  TrainRunResult r;
  r.table.header = train_columns();
  r.table.rows = std::move(rows);
  r.model_paths = std::move(paths);
  write_csv(out_dir + "/train.csv", r.table);
  return r;
}

// ---------------------------------------------------------------- optimize

struct OptimizeOptions {
  Sense sense = Sense::Minimize;
  double time_limit_s = 60.0;
  std::size_t node_limit = 1000000;
  std::string objective = "output";  // output | weights:<w0,w1,...>
  std::size_t workers = 1;
};

inline const std::vector<std::string>& optimize_columns() {
  static const std::vector<std::string> c = {"schema_version", "model",     "benchmark",   "arch",     "regularizer",
                                             "lambda",         "seed",      "unstable",    "root_lp_gap", "nodes",
                                             "time_s",         "objective", "best_bound",  "status"};
  return c;
}

inline Objective parse_objective(const std::string& spec) {
  Objective o;
  if (spec == "output") return o;
  if (spec.rfind("weights:", 0) == 0) {
    o.output_weights = parse_doubles(spec.substr(8), ',');
    if (o.output_weights.empty()) throw std::invalid_argument("objective: empty weight list");
    return o;
  }
  throw std::invalid_argument("objective must be 'output' or 'weights:<w0,w1,...>', got '" + spec + "'");
}

/// Sorted list of files matching a shell glob (a plain path matches itself).
inline std::vector<std::string> expand_glob(const std::string& pattern) {
  glob_t g{};
  std::vector<std::string> out;
  if (::glob(pattern.c_str(), 0, nullptr, &g) == 0)
    for (std::size_t i = 0; i < g.gl_pathc; ++i) out.emplace_back(g.gl_pathv[i]);
  globfree(&g);
  std::sort(out.begin(), out.end());
  return out;
}

inline std::vector<std::string> optimize_model(const std::string& path, const OptimizeOptions& opt) {
  auto meta_or = [](const std::map<std::string, std::string>& m, const char* k) {
    auto it = m.find(k);
    return it == m.end() ? std::string() : it->second;
  };
  std::vector<std::string> row(optimize_columns().size());
  row[0] = std::to_string(kSchemaVersion);
  row[1] = path;
  try {
    const ModelFile mf = load_model(path);
    row[2] = meta_or(mf.meta, "benchmark");
    row[3] = arch_string(mf.net.dims());
    row[4] = meta_or(mf.meta, "regularizer");
    row[5] = meta_or(mf.meta, "lambda");
    row[6] = meta_or(mf.meta, "seed");
    MilpSpec spec;
    spec.net = mf.net;
    spec.binary_inputs = meta_or(mf.meta, "binary_inputs") == "1";
    const auto lo = parse_doubles(meta_or(mf.meta, "box_lower")), hi = parse_doubles(meta_or(mf.meta, "box_upper"));
    if (spec.binary_inputs) {
      spec.box = Box::uniform(mf.net.input_dim(), 0.0, 1.0);
    } else {
      if (lo.empty() || hi.empty()) throw std::invalid_argument("model has no box_lower/box_upper metadata");
      spec.box = Box{lo, hi};
    }
    spec.objective = parse_objective(opt.objective);
    spec.sense = opt.sense;
    spec.limits.time_limit_s = opt.time_limit_s;
    spec.limits.node_limit = opt.node_limit;
    const BoundsProfile prof = propagate_ibp(mf.net, spec.box);
    const MilpResult r = solve_milp(spec, prof);
    row[7] = std::to_string(unstable_count(prof));
    row[8] = fmt(r.root_lp_gap);
    row[9] = std::to_string(r.nodes);
    row[10] = fmt(r.wall_time_s);
    row[11] = fmt(r.objective);
    row[12] = fmt(r.best_bound);
    row[13] = status_name(r.status);
  } catch (const std::exception& e) {
    std::string msg = e.what();
    std::replace(msg.begin(), msg.end(), ',', ';');
    std::replace(msg.begin(), msg.end(), '\n', ' ');
    row[13] = "error: " + msg;
  }
  return row;
}

inline CsvTable run_optimize(const std::vector<std::string>& models, const OptimizeOptions& opt, const std::string& out_csv) {
  CsvTable t;
  t.header = optimize_columns();
  t.rows.resize(models.size());
  parallel_for(models.size(), opt.workers, [&](std::size_t i) { t.rows[i] = optimize_model(models[i], opt); });
  write_csv(out_csv, t);
  return t;
}

// ---------------------------------------------------------------- report

struct MeanStd {
  double mean = 0.0;
  double std = 0.0;  // sample standard deviation, 0 for a single value
};

inline MeanStd mean_std(const std::vector<double>& v) {
  MeanStd r;
  if (v.empty()) return r;
  for (double x : v) r.mean += x;
  r.mean /= static_cast<double>(v.size());
  if (v.size() > 1) {
    double ss = 0.0;
    for (double x : v) ss += (x - r.mean) * (x - r.mean);
    r.std = std::sqrt(ss / static_cast<double>(v.size() - 1));
  }
  return r;
}

inline bool parse_number(const std::string& s, double& out) {
  if (s.empty()) return false;
  try {
    std::size_t used = 0;
    out = std::stod(s, &used);
    return used == s.size();
  } catch (const std::exception&) {
    return false;
  }
}

/// Columns that get a ratio against the unregularized baseline.
inline bool ratio_column(const std::string& c) { return c == "test_loss" || c == "train_time_s" || c == "time_s"; }

struct Report {
  CsvTable summary;  // per (benchmark, arch, regularizer, lambda)
  CsvTable by_arch;  // per (arch, regularizer, lambda): mean/std over benchmarks of the baseline ratios
};

/// Aggregates CSVs with a shared header. Group means and sample stds for
/// every numeric column, plus ratios of group means to the 'none' group of
/// the same benchmark and architecture.
inline Report make_report(const std::vector<CsvTable>& inputs) {
  if (inputs.empty()) throw std::invalid_argument("report: no input tables");
  const auto& header = inputs.front().header;
  for (const auto& t : inputs) {
    if (t.header.size() != header.size())
      throw std::invalid_argument("report: schema mismatch: " + std::to_string(t.header.size()) + " vs " +
                                  std::to_string(header.size()) + " columns");
    for (std::size_t i = 0; i < header.size(); ++i)
      if (t.header[i] != header[i])
        throw std::invalid_argument("report: schema mismatch at column '" + header[i] + "' (found '" + t.header[i] + "')");
  }
  CsvTable all;
  all.header = header;
  for (const auto& t : inputs) all.rows.insert(all.rows.end(), t.rows.begin(), t.rows.end());
  for (const char* k : {"benchmark", "arch", "regularizer", "lambda"})
    if (!all.has(k)) throw std::invalid_argument(std::string("report: missing column '") + k + "'");
  const std::size_t cb = all.column("benchmark"), ca = all.column("arch"), cr = all.column("regularizer"),
                    cl = all.column("lambda");

  // numeric value columns: every row parses as a number
  std::vector<std::size_t> value_cols;
  for (std::size_t i = 0; i < header.size(); ++i) {
    if (i == cb || i == ca || i == cr || i == cl || header[i] == "schema_version" || header[i] == "seed") continue;
    bool numeric = !all.rows.empty();
    double tmp;
    for (const auto& r : all.rows) numeric = numeric && parse_number(r[i], tmp);
    if (numeric) value_cols.push_back(i);
  }

  using Key = std::tuple<std::string, std::string, std::string, double>;
  std::map<Key, std::vector<const std::vector<std::string>*>> groups;
  for (const auto& r : all.rows) {
    double lam = 0;
    if (!parse_number(r[cl], lam)) throw std::invalid_argument("report: column 'lambda' has non-numeric value '" + r[cl] + "'");
    groups[{r[cb], r[ca], r[cr], lam}].push_back(&r);
  }
  std::map<Key, std::vector<MeanStd>> stats;
  for (const auto& [k, rows] : groups) {
    std::vector<MeanStd> s;
    for (std::size_t c : value_cols) {
      std::vector<double> v;
      for (const auto* r : rows) {
        double x;
        parse_number((*r)[c], x);
        v.push_back(x);
      }
      s.push_back(mean_std(v));
    }
    stats[k] = s;
  }

  Report rep;
  rep.summary.header = {"schema_version", "benchmark", "arch", "regularizer", "lambda", "n"};
  std::vector<std::size_t> ratio_idx;
  for (std::size_t j = 0; j < value_cols.size(); ++j) {
    rep.summary.header.push_back(header[value_cols[j]] + "_mean");
    rep.summary.header.push_back(header[value_cols[j]] + "_std");
  }
  for (std::size_t j = 0; j < value_cols.size(); ++j)
    if (ratio_column(header[value_cols[j]])) {
      ratio_idx.push_back(j);
      rep.summary.header.push_back(header[value_cols[j]] + "_ratio");
    }

  // (arch, reg, lambda) -> per-ratio-column list of per-benchmark ratios
  std::map<std::tuple<std::string, std::string, double>, std::vector<std::vector<double>>> arch_ratios;
  for (const auto& [k, s] : stats) {
    const auto& [bench, arch, reg, lam] = k;
    std::vector<std::string> row = {std::to_string(kSchemaVersion), bench, arch, reg, fmt(lam),
                                    std::to_string(groups[k].size())};
    for (const auto& ms : s) {
      row.push_back(fmt(ms.mean));
      row.push_back(fmt(ms.std));
    }
    auto base = stats.find(Key{bench, arch, "none", 0.0});
    auto& ar = arch_ratios[{arch, reg, lam}];
    ar.resize(ratio_idx.size());
    for (std::size_t q = 0; q < ratio_idx.size(); ++q) {
      const std::size_t j = ratio_idx[q];
      if (base == stats.end() || base->second[j].mean == 0.0) {
        row.emplace_back();
        continue;
      }
      const double ratio = s[j].mean / base->second[j].mean;
      row.push_back(fmt(ratio));
      ar[q].push_back(ratio);
    }
    rep.summary.rows.push_back(std::move(row));
  }
  rep.by_arch.header = {"schema_version", "arch", "regularizer", "lambda", "benchmarks"};
  for (std::size_t j : ratio_idx) {
    rep.by_arch.header.push_back(header[value_cols[j]] + "_ratio_mean");
    rep.by_arch.header.push_back(header[value_cols[j]] + "_ratio_std");
  }
  for (const auto& [k, lists] : arch_ratios) {
    const auto& [arch, reg, lam] = k;
    std::size_t nb = 0;
    for (const auto& l : lists) nb = std::max(nb, l.size());
    if (nb == 0) continue;
    std::vector<std::string> row = {std::to_string(kSchemaVersion), arch, reg, fmt(lam), std::to_string(nb)};
    for (const auto& l : lists) {
      if (l.empty()) {
        row.emplace_back();
        row.emplace_back();
        continue;
      }
      const MeanStd ms = mean_std(l);
      row.push_back(fmt(ms.mean));
      row.push_back(fmt(ms.std));
    }
    rep.by_arch.rows.push_back(std::move(row));
  }
  return rep;
}

/// Path of the per-architecture table written next to the summary.
inline std::string by_arch_path(const std::string& summary_path) {
  std::filesystem::path p(summary_path);
  return (p.parent_path() / (p.stem().string() + "_by_arch" + p.extension().string())).string();
}

// ---------------------------------------------------------------- bench

/// Baseline vs bound-width regularization on peaks with a 2-25-25-1 network.
inline ExperimentConfig bench_config(bool quick) {
  ExperimentConfig c;
  c.benchmark = "peaks";
  c.architectures = {{2, 25, 25, 1}};
  c.regularizers = {{"none", {}, 1.0}, {"bw", {1e-3}, 1.0}};
  c.seeds = {0, 1, 2};
  c.samples = 20000;
  c.epochs = 50;
  c.milp_time_limit = 120.0;
  c.workers = std::max(1u, std::min(6u, std::thread::hardware_concurrency()));
  c.output_dir = "bench";
  if (quick) {
    c.samples = 2000;
    c.epochs = 5;
    c.seeds = {0};
    c.architectures = {{2, 10, 10, 1}};
    c.milp_time_limit = 10.0;
  }
  return c;
}

struct BenchArm {
  double unstable = 0.0;
  double root_gap = 0.0;
  double test_mse = 0.0;
  std::size_t runs = 0;
};

struct BenchResult {
  BenchArm baseline, regularized;
  double unstable_reduction() const { return 1.0 - regularized.unstable / baseline.unstable; }
  double gap_reduction() const { return 1.0 - regularized.root_gap / baseline.root_gap; }
  double mse_ratio() const { return regularized.test_mse / baseline.test_mse; }
  bool trend_holds() const {
    return baseline.unstable > 0 && baseline.root_gap > 0 && unstable_reduction() >= 0.30 && gap_reduction() >= 0.50 &&
           mse_ratio() <= 3.0;
  }
};

/// Train, optimize and report into out_dir; returns the per-arm seed means.
inline BenchResult run_bench(const ExperimentConfig& c, const std::string& out_dir,
                             const std::function<void(const std::string&)>& log = {}) {
  const TrainRunResult tr = run_train(c, out_dir, log);
  OptimizeOptions opt;
  opt.time_limit_s = c.milp_time_limit;
  opt.node_limit = c.milp_node_limit;
  opt.workers = c.workers;
  const CsvTable ot = run_optimize(tr.model_paths, opt, out_dir + "/optimize.csv");
  const Report rep = make_report({ot});
  write_csv(out_dir + "/optimize_summary.csv", rep.summary);
  write_csv(by_arch_path(out_dir + "/optimize_summary.csv"), rep.by_arch);

  BenchResult r;
  const std::size_t creg = tr.table.column("regularizer"), cmse = tr.table.column("test_loss");
  const std::size_t ou = ot.column("unstable"), og = ot.column("root_lp_gap"), os = ot.column("status");
  for (std::size_t i = 0; i < tr.table.rows.size(); ++i) {
    const auto& row = ot.rows[i];
    if (row[os].rfind("error", 0) == 0) throw std::runtime_error("bench: " + row[os]);
    BenchArm& arm = tr.table.rows[i][creg] == "none" ? r.baseline : r.regularized;
    arm.unstable += std::stod(row[ou]);
    arm.root_gap += std::stod(row[og]);
    arm.test_mse += std::stod(tr.table.rows[i][cmse]);
    ++arm.runs;
  }
  for (BenchArm* a : {&r.baseline, &r.regularized}) {
    if (a->runs == 0) continue;
    const double n = static_cast<double>(a->runs);
    a->unstable /= n;
    a->root_gap /= n;
    a->test_mse /= n;
  }
  return r;
}

}  // namespace tractnet
