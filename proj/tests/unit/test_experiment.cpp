#include <gtest/gtest.h>

#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "tractnet/experiment.hpp"

using namespace tractnet;
namespace fs = std::filesystem;

namespace {

fs::path fresh_dir(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("tractnet_test_" + name);
  fs::remove_all(p);
  return p;
}

std::string config_json(const std::string& out, const std::string& extra = "") {
  return R"({"benchmark": "himmelblau", "architectures": [[2, 6, 1]], "samples": 300, "epochs": 2,
             "batch_size": 32, "output_dir": ")" +
         out + "\"" + extra + "}";
}

std::string expect_config_error(const std::string& text) {
  try {
    parse_config(text);
  } catch (const ConfigError& e) {
    return e.what();
  }
  ADD_FAILURE() << "no ConfigError for " << text;
  return "";
}

struct CliResult {
  int status;
  std::string out;
};

CliResult run_cli(const std::string& args) {
  const std::string cmd = std::string(TRACTNET_CLI_PATH) + " " + args + " 2>&1";
  FILE* p = popen(cmd.c_str(), "r");
  std::string out;
  char buf[512];
  while (p && fgets(buf, sizeof buf, p)) out += buf;
  const int st = p ? pclose(p) : -1;
  return {WIFEXITED(st) ? WEXITSTATUS(st) : -1, out};
}

CsvTable table(std::vector<std::string> header, std::vector<std::vector<std::string>> rows) {
  CsvTable t;
  t.header = std::move(header);
  t.rows = std::move(rows);
  return t;
}

}  // namespace

TEST(Config, ParsesDefaultsAndGrid) {
  const auto c = parse_config(config_json("x", R"(, "regularizers": [{"name": "none"}, {"name": "bw", "lambdas": [1e-3, 1e-2, 0.1]},
      {"name": "bw+lp", "lambdas": [1, 2, 3], "alpha": 0.5}], "seeds": [0, 1])"));
  EXPECT_EQ(c.benchmark, "himmelblau");
  EXPECT_EQ(c.test_fraction, 0.3);
  EXPECT_EQ(c.regularizers[2].alpha, 0.5);
  // 1 baseline cell + 2 regs x 3 lambdas, each over 2 seeds
  EXPECT_EQ(expand_grid(c).size(), 14u);
  const auto cells = expand_grid(c);
  EXPECT_EQ(cells[2].regularizer, "bw");
  EXPECT_EQ(cells[2].lambda, 1e-3);
  EXPECT_EQ(cells[3].seed, 1u);
}

TEST(Config, FieldLevelErrors) {
  EXPECT_NE(expect_config_error(config_json("x", R"(, "epoch": 3)")).find("unknown field 'epoch'"), std::string::npos);
  EXPECT_NE(expect_config_error(config_json("x", R"(, "lp": {"direction": "up"})")).find("lp.direction"),
            std::string::npos);
  EXPECT_NE(expect_config_error(config_json("x", R"(, "milp": {"time": 3})")).find("milp.time"), std::string::npos);
  EXPECT_NE(expect_config_error(config_json("x", R"(, "regularizers": [{"name": "l3", "lambdas": [1]}])"))
                .find("regularizers[0].name"),
            std::string::npos);
  EXPECT_NE(expect_config_error(config_json("x", R"(, "regularizers": [{"name": "l1", "lambdas": [-1]}])"))
                .find("regularizers[0].lambdas[0]"),
            std::string::npos);
  EXPECT_NE(expect_config_error(R"({"benchmark": "peaks", "architectures": [[3, 4, 1]]})").find("architectures[0]"),
            std::string::npos);
  EXPECT_NE(expect_config_error(R"({"benchmark": "nope", "architectures": [[2, 4, 1]]})").find("benchmark"),
            std::string::npos);
  EXPECT_NE(expect_config_error(R"({"benchmark": "peaks"})").find("architectures"), std::string::npos);
  EXPECT_NE(expect_config_error("{").find("parse"), std::string::npos);
  // quantile benchmark sizes come from the quantile block
  const auto q = parse_config(R"({"benchmark": "synth-quantile", "architectures": [[4, 8, 3]],
                                  "quantile": {"inputs": 4, "levels": 3}})");
  EXPECT_TRUE(q.quantile());
}

TEST(Config, OutputDirOverride) {
  unsetenv(kOutputDirEnv);
  EXPECT_EQ(resolve_output_dir("a"), "a");
  setenv(kOutputDirEnv, "/tmp/elsewhere", 1);
  EXPECT_EQ(resolve_output_dir("a"), "/tmp/elsewhere");
  unsetenv(kOutputDirEnv);
}

TEST(TrainCmd, MinimalConfigWritesOneModelAndRow) {
  const fs::path out = fresh_dir("train_min") / "nested";
  const auto c = parse_config(config_json(out.string()));
  const auto r = run_train(c, out.string());
  ASSERT_EQ(r.table.rows.size(), 1u);
  EXPECT_TRUE(fs::exists(r.model_paths[0]));
  const CsvTable back = read_csv((out / "train.csv").string());
  EXPECT_EQ(back.header, train_columns());
  EXPECT_EQ(back.rows[0][back.column("schema_version")], "1");
  EXPECT_EQ(back.rows[0][back.column("regularizer")], "none");
  const ModelFile mf = load_model(r.model_paths[0]);
  EXPECT_EQ(mf.meta.at("benchmark"), "himmelblau");
  EXPECT_EQ(parse_doubles(mf.meta.at("box_lower")).size(), 2u);
}

TEST(TrainCmd, GridRowCountAndParallelMatchesSerial) {
  const fs::path out = fresh_dir("train_grid");
  auto c = parse_config(config_json(
      out.string(), R"(, "regularizers": [{"name": "l1", "lambdas": [0, 1e-3, 1e-2]}, {"name": "sn", "lambdas": [0, 1e-3, 1e-2]}],
                        "seeds": [1, 2])"));
  const auto serial = run_train(c, (out / "a").string());
  EXPECT_EQ(serial.table.rows.size(), 12u);
  c.workers = 3;
  const auto parallel = run_train(c, (out / "b").string());
  const std::size_t ct = serial.table.column("test_loss");
  for (std::size_t i = 0; i < 12; ++i) EXPECT_EQ(serial.table.rows[i][ct], parallel.table.rows[i][ct]) << i;
}

TEST(OptimizeCmd, AffineModelNeedsNoBranching) {
  const fs::path dir = fresh_dir("opt_affine");
  fs::create_directories(dir);
  Network net;
  net.layers.push_back({Matrix::from_rows({{1, -2}}), Matrix::column({0.5})});
  save_model((dir / "affine.model").string(), net, {{"box_lower", "-1;-1"}, {"box_upper", "1;1"}});
  OptimizeOptions opt;
  const auto t = run_optimize({(dir / "affine.model").string()}, opt, (dir / "out.csv").string());
  const auto& row = t.rows[0];
  EXPECT_EQ(row[t.column("status")], "optimal");
  EXPECT_LE(std::stoul(row[t.column("nodes")]), 1u);
  EXPECT_EQ(std::stod(row[t.column("root_lp_gap")]), 0.0);
  EXPECT_DOUBLE_EQ(std::stod(row[t.column("objective")]), 0.5 - 1 - 2);
}

TEST(OptimizeCmd, ErrorsTimeLimitAndDeterminism) {
  const fs::path dir = fresh_dir("opt_runs");
  fs::create_directories(dir);
  Rng rng(9);
  const Network hard = make_network({2, 25, 25, 1}, rng);
  save_model((dir / "hard.model").string(), hard, {{"box_lower", "-2;-2"}, {"box_upper", "2;2"}});
  {
    std::ofstream bad(dir / "broken.model");
    bad << "not a model\n";
  }
  OptimizeOptions opt;
  opt.time_limit_s = 0.001;
  const std::vector<std::string> models = {(dir / "broken.model").string(), (dir / "hard.model").string(),
                                           (dir / "missing.model").string()};
  const auto t = run_optimize(models, opt, (dir / "a.csv").string());
  const std::size_t cs = t.column("status");
  EXPECT_EQ(t.rows[0][cs].rfind("error", 0), 0u);
  EXPECT_EQ(t.rows[1][cs], "time-limit");
  EXPECT_EQ(t.rows[2][cs].rfind("error", 0), 0u);
  EXPECT_TRUE(std::isfinite(std::stod(t.rows[1][t.column("best_bound")])));

  opt.time_limit_s = 60;
  opt.node_limit = 200;
  const auto a = run_optimize({models[1]}, opt, (dir / "b.csv").string());
  const auto b = run_optimize({models[1]}, opt, (dir / "c.csv").string());
  const std::size_t ct = a.column("time_s");
  for (std::size_t i = 0; i < a.header.size(); ++i)
    if (i != ct) {
      EXPECT_EQ(a.rows[0][i], b.rows[0][i]) << a.header[i];
    }
  EXPECT_EQ(a.rows[0][cs], "node-limit");
}

TEST(OptimizeCmd, ObjectiveSpec) {
  EXPECT_TRUE(parse_objective("output").output_weights.empty());
  EXPECT_EQ(parse_objective("weights:0.5,1.5").output_weights, (std::vector<double>{0.5, 1.5}));
  EXPECT_THROW(parse_objective("weights:a"), std::invalid_argument);
  EXPECT_THROW(parse_objective("max"), std::invalid_argument);
}

TEST(Report, SingleRowAndBaselineRatio) {
  const auto t = table({"schema_version", "benchmark", "arch", "regularizer", "lambda", "seed", "test_loss", "status"},
                       {{"1", "peaks", "2-4-1", "none", "0", "0", "0.5", "optimal"}});
  const Report r = make_report({t});
  ASSERT_EQ(r.summary.rows.size(), 1u);
  const auto& row = r.summary.rows[0];
  EXPECT_EQ(row[r.summary.column("n")], "1");
  EXPECT_EQ(std::stod(row[r.summary.column("test_loss_mean")]), 0.5);
  EXPECT_EQ(std::stod(row[r.summary.column("test_loss_std")]), 0.0);
  EXPECT_EQ(std::stod(row[r.summary.column("test_loss_ratio")]), 1.0);
  EXPECT_FALSE(r.summary.has("status_mean"));
}

TEST(Report, SampleStdAndPerArchRatios) {
  const std::vector<std::string> h = {"schema_version", "benchmark", "arch", "regularizer", "lambda", "seed", "time_s"};
  const auto a = table(h, {{"1", "peaks", "2-4-1", "none", "0", "0", "1"},
                           {"1", "peaks", "2-4-1", "none", "0", "1", "3"},
                           {"1", "peaks", "2-4-1", "bw", "0.001", "0", "1"}});
  const auto b = table(h, {{"1", "himmelblau", "2-4-1", "none", "0", "0", "4"},
                           {"1", "himmelblau", "2-4-1", "bw", "0.001", "0", "2"}});
  const Report r = make_report({a, b});
  const auto& s = r.summary;
  std::map<std::pair<std::string, std::string>, std::vector<std::string>> rows;
  for (const auto& row : s.rows) rows[{row[s.column("benchmark")], row[s.column("regularizer")]}] = row;
  const auto& base = rows[{"peaks", "none"}];
  EXPECT_EQ(std::stod(base[s.column("time_s_mean")]), 2.0);
  EXPECT_NEAR(std::stod(base[s.column("time_s_std")]), std::sqrt(2.0), 1e-15);
  EXPECT_EQ(std::stod(rows[{"peaks", "bw"}][s.column("time_s_ratio")]), 0.5);
  EXPECT_EQ(std::stod(rows[{"himmelblau", "bw"}][s.column("time_s_ratio")]), 0.5);
  // by-arch: mean of the per-benchmark ratios
  bool found = false;
  for (const auto& row : r.by_arch.rows)
    if (row[r.by_arch.column("regularizer")] == "bw") {
      found = true;
      EXPECT_EQ(row[r.by_arch.column("benchmarks")], "2");
      EXPECT_EQ(std::stod(row[r.by_arch.column("time_s_ratio_mean")]), 0.5);
    }
  EXPECT_TRUE(found);
}

TEST(Report, SchemaMismatchNamesColumn) {
  const auto a = table({"schema_version", "benchmark", "arch", "regularizer", "lambda", "test_loss"}, {});
  const auto b = table({"schema_version", "benchmark", "arch", "regularizer", "lambda", "train_loss"}, {});
  try {
    make_report({a, b});
    FAIL();
  } catch (const std::invalid_argument& e) {
    EXPECT_NE(std::string(e.what()).find("test_loss"), std::string::npos) << e.what();
  }
}

TEST(Cli, HelpListsSubcommands) {
  const auto r = run_cli("--help");
  EXPECT_EQ(r.status, 0);
  for (const char* s : {"train", "optimize", "gradcheck", "report", "bench", kOutputDirEnv})
    EXPECT_NE(r.out.find(s), std::string::npos) << s;
}

TEST(Cli, InvalidConfigFailsWithFieldMessage) {
  const fs::path dir = fresh_dir("cli_cfg");
  fs::create_directories(dir);
  std::ofstream(dir / "bad.json") << R"({"benchmark": "peaks", "architectures": [[2, 4, 1]], "seeds": [-1]})";
  const auto r = run_cli("train --config " + (dir / "bad.json").string());
  EXPECT_NE(r.status, 0);
  EXPECT_NE(r.out.find("seeds[0]"), std::string::npos) << r.out;
}

TEST(Cli, TrainOptimizeReportPipeline) {
  const fs::path dir = fresh_dir("cli_pipeline");
  fs::create_directories(dir);
  std::ofstream(dir / "cfg.json") << config_json("ignored", R"(, "regularizers": [{"name": "none"}, {"name": "bw", "lambdas": [0.01]}])");
  const std::string env = std::string(kOutputDirEnv) + "=" + (dir / "out").string() + " ";
  const std::string cli = std::string(TRACTNET_CLI_PATH);
  auto sh = [](const std::string& c) { return std::system(c.c_str()); };
  ASSERT_EQ(sh(env + cli + " train --config " + (dir / "cfg.json").string() + " > /dev/null 2>&1"), 0);
  EXPECT_FALSE(fs::exists("ignored"));
  ASSERT_TRUE(fs::exists(dir / "out" / "train.csv"));
  ASSERT_EQ(sh(cli + " optimize --models '" + (dir / "out" / "models" / "*.model").string() + "' --sense max --out " +
               (dir / "opt.csv").string() + " > /dev/null"),
            0);
  const CsvTable opt = read_csv((dir / "opt.csv").string());
  EXPECT_EQ(opt.rows.size(), 2u);
  for (const auto& row : opt.rows) EXPECT_EQ(row[opt.column("status")], "optimal");
  ASSERT_EQ(sh(cli + " report --in " + (dir / "opt.csv").string() + " --out " + (dir / "summary.csv").string() +
               " > /dev/null"),
            0);
  EXPECT_TRUE(fs::exists(dir / "summary_by_arch.csv"));
  EXPECT_NE(run_cli("optimize --models '" + (dir / "nothing*.model").string() + "'").status, 0);
}

TEST(Cli, GradcheckPassesAndCatchesTampering) {
  const auto ok = run_cli("gradcheck --seed 3 --nets 10 --lp-cases 20");
  EXPECT_EQ(ok.status, 0) << ok.out;
  EXPECT_NE(ok.out.find("skipped_degenerate"), std::string::npos);
  const auto bad = run_cli("gradcheck --seed 3 --nets 10 --lp-cases 20 --tamper-sn");
  EXPECT_NE(bad.status, 0);
  EXPECT_NE(bad.out.find("failure: reg_sn"), std::string::npos) << bad.out;
  EXPECT_EQ(bad.out.find("failure: reg_bw"), std::string::npos);
}
