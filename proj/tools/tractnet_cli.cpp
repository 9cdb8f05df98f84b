#include <CLI11.hpp>

#include <cstdio>
#include <filesystem>
#include <iostream>
#include <string>
#include <vector>

#include "tractnet/experiment.hpp"
#include "tractnet/gradcheck.hpp"

using namespace tractnet;

namespace {

void log_line(const std::string& s) { std::cerr << s << "\n"; }

int cmd_train(const std::string& config_path) {
  const ExperimentConfig c = load_config(config_path);
  const std::string out = resolve_output_dir(c.output_dir);
  const TrainRunResult r = run_train(c, out, log_line);
  std::cout << "wrote " << r.table.rows.size() << " models and " << out << "/train.csv\n";
  return 0;
}

int cmd_optimize(const std::string& pattern, const std::string& sense, double time_limit, std::size_t node_limit,
                 const std::string& objective, const std::string& out_path, std::size_t workers) {
  std::vector<std::string> models = expand_glob(pattern);
  if (models.empty()) {
    std::cerr << "optimize: no files match '" << pattern << "'\n";
    return 2;
  }
  OptimizeOptions opt;
  opt.sense = sense == "max" ? Sense::Maximize : Sense::Minimize;
  opt.time_limit_s = time_limit;
  opt.node_limit = node_limit;
  opt.objective = objective;
  opt.workers = workers;
  parse_objective(objective);  // reject a malformed objective before touching any model
  const std::string out = out_path.empty() ? resolve_output_dir("results") + "/optimize.csv" : out_path;
  const CsvTable t = run_optimize(models, opt, out);
  std::size_t errors = 0;
  for (const auto& row : t.rows) errors += row.back().rfind("error", 0) == 0;
  std::cout << "wrote " << t.rows.size() << " rows to " << out;
  if (errors) std::cout << " (" << errors << " errors)";
  std::cout << "\n";
  return 0;
}

int cmd_gradcheck(std::uint64_t seed, std::size_t nets, std::size_t lp_cases, bool tamper_sn) {
  Rng rng(seed);
  bool ok = true;
  for (RegKind k : kAllRegKinds) {
    Rng local = rng.split();
    FdReport rep;
    for (std::size_t i = 0; i < nets; ++i) {
      auto [net, box] = random_instance(local);
      fd_check(k, net, box, rep, 1e-5, 1e-4, tamper_sn && k == RegKind::SN);
    }
    std::printf("%-7s checked %zu skipped_kinks %zu max_rel_error %.3e %s\n", reg_name(k), rep.checked,
                rep.skipped_kinks, rep.max_error, rep.failures.empty() ? "ok" : "FAIL");
    for (const auto& f : rep.failures)
      std::printf("  failure: %s parameter %zu fd %.12g analytic %.12g\n", f.regularizer.c_str(), f.parameter, f.fd,
                  f.analytic);
    ok = ok && rep.failures.empty();
  }
  Rng dual_rng = rng.split();
  const DualCheckReport d = dual_envelope_check(dual_rng, lp_cases);
  std::printf("lp_dual cases %zu probes %zu skipped_degenerate %zu nondegenerate %.3f max_error %.3e %s\n", d.cases,
              d.probes, d.skipped_degenerate, d.nondegenerate_fraction(), d.max_error,
              d.failures.empty() && d.nondegenerate_fraction() >= 0.8 ? "ok" : "FAIL");
  for (const auto& p : d.failures)
    std::printf("  failure: lp_dual layer %zu neuron %zu fd %.12g dual %.12g\n", p.layer, p.neuron, p.fd, p.dual);
  ok = ok && d.failures.empty() && d.nondegenerate_fraction() >= 0.8;
  std::printf("%s\n", ok ? "gradcheck passed" : "gradcheck FAILED");
  return ok ? 0 : 1;
}

int cmd_report(const std::vector<std::string>& patterns, const std::string& out) {
  std::vector<CsvTable> tables;
  for (const auto& p : patterns) {
    const auto files = expand_glob(p);
    if (files.empty()) {
      std::cerr << "report: no files match '" << p << "'\n";
      return 2;
    }
    for (const auto& f : files) tables.push_back(read_csv(f));
  }
  const Report r = make_report(tables);
  write_csv(out, r.summary);
  write_csv(by_arch_path(out), r.by_arch);
  std::cout << "wrote " << out << " and " << by_arch_path(out) << "\n";
  return 0;
}

int cmd_bench(bool quick) {
  ExperimentConfig c = bench_config(quick);
  const std::string out = resolve_output_dir(c.output_dir);
  const BenchResult r = run_bench(c, out, log_line);
  std::printf("baseline:    |U| %.2f  root gap %.4f  test mse %.5f  (%zu runs)\n", r.baseline.unstable,
              r.baseline.root_gap, r.baseline.test_mse, r.baseline.runs);
  std::printf("bw 1e-3:     |U| %.2f  root gap %.4f  test mse %.5f  (%zu runs)\n", r.regularized.unstable,
              r.regularized.root_gap, r.regularized.test_mse, r.regularized.runs);
  std::printf("|U| reduction %.1f%% (need 30%%), gap reduction %.1f%% (need 50%%), mse ratio %.2f (need <= 3)\n",
              100 * r.unstable_reduction(), 100 * r.gap_reduction(), r.mse_ratio());
  if (quick) {
    std::printf("quick run: trend not judged\n");
    return 0;
  }
  std::printf("%s\n", r.trend_holds() ? "trend reproduced" : "trend NOT reproduced");
  return r.trend_holds() ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Train ReLU surrogates with tractability regularizers and optimize over them as MILPs.\n"
               "Output directory override: " + std::string(kOutputDirEnv)};
  app.require_subcommand(1);

  auto* train_cmd = app.add_subcommand("train", "Train every (arch, regularizer, lambda, seed) cell of a JSON config");
  std::string config_path;
  train_cmd->add_option("--config", config_path, "Experiment config (JSON)")->required();

  auto* opt_cmd = app.add_subcommand("optimize", "Solve the big-M MILP of each model file; one CSV row per model");
  std::string models_glob, sense = "min", objective = "output", opt_out;
  double time_limit = 60.0;
  std::size_t node_limit = 1000000, opt_workers = 1;
  opt_cmd->add_option("--models", models_glob, "Model file or shell glob")->required();
  opt_cmd->add_option("--sense", sense, "Optimization sense")->check(CLI::IsMember({"min", "max"}));
  opt_cmd->add_option("--time-limit", time_limit, "Wall-clock limit per model in seconds")->check(CLI::PositiveNumber);
  opt_cmd->add_option("--node-limit", node_limit, "Branch-and-bound node limit per model");
  opt_cmd->add_option("--objective", objective, "'output' or 'weights:<w0,w1,...>' over the network outputs");
  opt_cmd->add_option("--out", opt_out, "Results CSV (default <output dir>/optimize.csv)");
  opt_cmd->add_option("--workers", opt_workers, "Models solved in parallel")->check(CLI::PositiveNumber);

  auto* gc_cmd = app.add_subcommand("gradcheck", "Finite-difference checks of all regularizer gradients and LP duals");
  std::uint64_t gc_seed = 0;
  std::size_t gc_nets = 50, gc_cases = 100;
  bool tamper_sn = false;
  gc_cmd->add_option("--seed", gc_seed, "Random seed");
  gc_cmd->add_option("--nets", gc_nets, "Random networks per regularizer")->check(CLI::PositiveNumber);
  gc_cmd->add_option("--lp-cases", gc_cases, "Fixed-input LP cases for the dual check")->check(CLI::PositiveNumber);
  gc_cmd->add_flag("--tamper-sn", tamper_sn, "Flip the sign of the reg_sn gradient (negative control)")->group("");

  auto* rep_cmd = app.add_subcommand("report", "Aggregate result CSVs: mean/std over seeds and ratios vs 'none'");
  std::vector<std::string> rep_in;
  std::string rep_out;
  rep_cmd->add_option("--in", rep_in, "Input CSV file(s) or glob(s)")->required();
  rep_cmd->add_option("--out", rep_out, "Summary CSV; a *_by_arch table is written next to it")->required();

  auto* bench_cmd = app.add_subcommand("bench", "Baseline vs bound-width regularization on peaks, end to end");
  bool quick = false;
  bench_cmd->add_flag("--quick", quick, "Small smoke-test version");

  CLI11_PARSE(app, argc, argv);
  try {
    if (*train_cmd) return cmd_train(config_path);
    if (*opt_cmd) return cmd_optimize(models_glob, sense, time_limit, node_limit, objective, opt_out, opt_workers);
    if (*gc_cmd) return cmd_gradcheck(gc_seed, gc_nets, gc_cases, tamper_sn);
    if (*rep_cmd) return cmd_report(rep_in, rep_out);
    if (*bench_cmd) return cmd_bench(quick);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
