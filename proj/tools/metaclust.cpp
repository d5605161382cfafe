// Command-line front end: noise injection, training grids, checkpoint
// re-evaluation, the self-verification suite, and report aggregation.
//
// Exit codes: 0 success, 1 usage error, 2 runtime failure (including failed
// verification checks and failed grid runs).

#include <cstdint>
#include <iostream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "metaclust/metaclust.hpp"

namespace {

void print_check(const metaclust::CheckResult& c) {
  std::cout << (c.pass ? "[PASS] " : "[FAIL] ") << c.name << " (observed " << c.observed
            << ", limit " << c.limit << ") " << c.note << '\n';
}

void print_outcome(const metaclust::RunOutcome& o) {
  std::cout << "ratio=" << o.ratio << " seed=" << o.seed;
  if (!o.ok) {
    std::cout << " FAILED: " << o.error << '\n';
    return;
  }
  const auto& r = o.row;
  std::cout << " variant=" << r.variant << " f1=" << r.f1 << " nmi=" << r.nmi
            << " modularity=" << r.modularity;
  if (!std::isnan(r.prauc)) std::cout << " prauc=" << r.prauc << " hits=" << r.hits;
  std::cout << " epochs=" << r.epochs << '\n';
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Robust graph clustering with meta-learned pair weights"};
  app.require_subcommand(1);
  int rc = 0;

  // noise: replayable cross-class edge injection.
  std::string n_edges, n_labels, n_out;
  double n_ratio = 0.0;
  std::uint64_t n_seed = 1;
  auto* noise = app.add_subcommand("noise", "Inject cross-class noise edges");
  noise->add_option("--edges", n_edges, "input edge list")->required()
      ->check(CLI::ExistingFile);
  noise->add_option("--labels", n_labels, "node class labels, one per line")->required()
      ->check(CLI::ExistingFile);
  noise->add_option("--ratio", n_ratio, "injected edges as a fraction of |E|")
      ->required()->check(CLI::NonNegativeNumber);
  noise->add_option("--seed", n_seed, "sampling seed");
  noise->add_option("--out", n_out, "output noisy edge list")->required();
  noise->callback([&] {
    const metaclust::Dataset ds = metaclust::load_dataset(n_edges, n_labels);
    const metaclust::NoisyGraph ng = metaclust::inject_noise(ds, n_ratio, n_seed);
    metaclust::save_noisy_edge_list(ng, n_out);
    std::cout << "wrote " << n_out << ": " << ng.graph.num_edges() << " edges, "
              << ng.num_injected() << " injected\n";
  });

  // train: seeds x ratios grid from a config file.
  std::string t_config, t_out, t_variant;
  std::vector<double> t_ratios;
  std::vector<std::uint64_t> t_seeds;
  auto* train = app.add_subcommand("train", "Run a training grid from a config file");
  train->add_option("--config", t_config, "experiment config file")->required()
      ->check(CLI::ExistingFile);
  train->add_option("--out", t_out, "override out_dir from the config");
  train->add_option("--ratio", t_ratios, "override noise ratios");
  train->add_option("--seed", t_seeds, "override run seeds");
  train->add_option("--variant", t_variant, "override variant")
      ->check(CLI::IsMember({"metagc", "metagc-x", "metagc-a"}));
  train->callback([&] {
    metaclust::ExperimentSpec spec = metaclust::parse_experiment_config(t_config);
    if (!t_out.empty()) spec.out_dir = t_out;
    if (!t_ratios.empty()) spec.ratios = t_ratios;
    if (!t_seeds.empty()) spec.seeds = t_seeds;
    if (!t_variant.empty()) spec.variant = metaclust::parse_variant(t_variant);
    spec.validate();
    const metaclust::ExperimentResult res = metaclust::run_experiment(spec);
    for (const auto& o : res.outcomes) print_outcome(o);
    std::cout << "wrote " << res.rows.size() << " rows to " << spec.out_dir
              << "/rows.csv\n";
    if (res.failures > 0) {
      std::cout << res.failures << " run(s) failed, see " << spec.out_dir
                << "/failed_runs.txt\n";
      rc = 2;
    }
  });

  // eval: re-score a checkpoint on the run recorded inside it.
  std::string e_config, e_checkpoint, e_out;
  auto* eval = app.add_subcommand("eval", "Re-evaluate a saved checkpoint");
  eval->add_option("--config", e_config, "experiment config file")->required()
      ->check(CLI::ExistingFile);
  eval->add_option("--checkpoint", e_checkpoint, "checkpoint file")->required()
      ->check(CLI::ExistingFile);
  eval->add_option("--out", e_out, "write the row as CSV here instead of stdout");
  eval->callback([&] {
    const metaclust::ExperimentSpec spec = metaclust::parse_experiment_config(e_config);
    const metaclust::MetricsRow row = metaclust::eval_checkpoint(spec, e_checkpoint);
    if (e_out.empty()) {
      std::cout << metaclust::kRowHeader << '\n' << metaclust::to_csv_row(row) << '\n';
    } else {
      metaclust::write_rows_csv({row}, e_out);
      std::cout << "wrote " << e_out << '\n';
    }
  });

  // verify: decomposability/optimum oracles plus gradient checks.
  std::uint64_t v_seed = 20259;
  int v_trials = 100;
  auto* verify = app.add_subcommand("verify", "Run the self-verification suite");
  verify->add_option("--seed", v_seed, "suite seed");
  verify->add_option("--trials", v_trials, "random instances per property check")
      ->check(CLI::PositiveNumber);
  verify->callback([&] {
    const metaclust::VerifySummary s = metaclust::run_verification(v_seed, v_trials);
    for (const auto& c : s.checks) print_check(c);
    if (s.all_pass()) {
      std::cout << "ALL PASS\n";
    } else {
      std::cout << "FAILURES PRESENT\n";
      rc = 2;
    }
  });

  // report: aggregate rows.csv into mean +- std per (noise level, variant).
  std::string r_dir, r_out;
  auto* report = app.add_subcommand("report", "Aggregate a run directory");
  report->add_option("run_dir", r_dir, "directory containing rows.csv")->required()
      ->check(CLI::ExistingDirectory);
  report->add_option("--out", r_out, "output directory (default: run_dir)");
  report->callback([&] {
    const std::string out_dir = r_out.empty() ? r_dir : r_out;
    const auto rows = metaclust::parse_rows_csv(r_dir + "/rows.csv");
    const auto aggs = metaclust::aggregate_rows(rows);
    std::filesystem::create_directories(out_dir);
    metaclust::write_aggregate_csv(aggs, out_dir + "/aggregate.csv");
    const std::string table = metaclust::format_aggregate_table(aggs);
    std::ofstream tf(out_dir + "/table.txt");
    if (!tf) throw std::runtime_error("cannot open file for writing: " + out_dir +
                                      "/table.txt");
    tf << table;
    std::cout << table;
  });

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  }
  return rc;
}
