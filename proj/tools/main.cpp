#include <string>

#include "CLI11.hpp"
#include "../src/cli/commands.hpp"

int main(int argc, char** argv) {
  CLI::App app{"GAT-POS training and evaluation engine"};
  app.require_subcommand(1);

  gatpos::cli::TrainOptions train_opts;
  std::string train_model, train_regime;
  std::uint64_t train_seed = 0;
  auto* train = app.add_subcommand("train", "train and evaluate a single run");
  train->add_option("--dataset", train_opts.dataset_dir,
                    "dataset package directory")
      ->required();
  auto* model_opt = train->add_option("--model", train_model,
                                      "gcn|gat|gat-pos|gat-pos-transformer");
  auto* config_opt =
      train->add_option("--config", train_opts.config_file, "config file");
  auto* seed_opt = train->add_option("--seed", train_seed, "master seed");
  auto* regime_opt =
      train->add_option("--regime", train_regime, "joint|frozen");
  train->add_option("--out", train_opts.out_dir, "output directory");

  gatpos::cli::ReproduceOptions repro_opts;
  auto* repro =
      app.add_subcommand("reproduce", "run a full result-table protocol");
  repro->add_option("--table", repro_opts.table,
                    "nonhomophilic|homophilic|ablation")
      ->required();
  repro->add_option("--datasets-root", repro_opts.datasets_root,
                    "directory containing dataset packages");
  repro->add_option("--runs-per-split", repro_opts.runs_per_split,
                    "runs per split (default 3)");
  repro->add_option("--jobs", repro_opts.jobs, "parallel workers");
  repro->add_option("--seed", repro_opts.seed, "master seed");
  repro->add_option("--out", repro_opts.out_dir, "output directory");

  gatpos::cli::StatsOptions stats_opts;
  auto* stats = app.add_subcommand("stats", "dataset statistics table");
  stats->add_option("--datasets-root", stats_opts.datasets_root,
                    "directory containing dataset packages");

  gatpos::cli::VerifyOptions verify_opts;
  auto* verify =
      app.add_subcommand("verify", "gradient-check and invariant suite");
  verify->add_option("--tol", verify_opts.tol,
                     "finite-difference tolerance (default 1e-4)");
  verify
      ->add_flag("--inject-leaky-fault", verify_opts.inject_leaky_fault,
                 "test hook: flip leaky_relu backward sign")
      ->group("");  // hidden

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    app.exit(e);
    return gatpos::cli::kExitOk;
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return gatpos::cli::kExitUsage;
  }

  if (*train) {
    if (*model_opt) train_opts.model = train_model;
    if (*regime_opt) train_opts.regime = train_regime;
    if (*seed_opt) train_opts.seed = train_seed;
    (void)config_opt;
    return gatpos::cli::cmd_train(train_opts);
  }
  if (*repro) return gatpos::cli::cmd_reproduce(repro_opts);
  if (*stats) return gatpos::cli::cmd_stats(stats_opts);
  if (*verify) return gatpos::cli::cmd_verify(verify_opts);
  return gatpos::cli::kExitUsage;
}
