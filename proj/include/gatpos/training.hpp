#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "gatpos/errors.hpp"
#include "gatpos/layers.hpp"
#include "gatpos/objectives.hpp"
#include "json.hpp"

namespace gatpos::train {

using nn::Hyperparams;
using nn::Model;
using nn::ModelKind;
using obj::LossReport;

enum class Regime { joint, frozen };

Regime parse_regime(const std::string& s);
std::string regime_name(Regime r);

struct ExperimentConfig {
  std::string dataset;        // package directory name
  std::string datasets_root;  // parent directory of dataset packages
  ModelKind model = ModelKind::gat_pos;
  Regime regime = Regime::joint;
  int num_splits = 10;
  int runs_per_split = 10;
  std::vector<std::string> split_files;  // when set, overrides generation
  Hyperparams hp;
  std::uint64_t master_seed = 1;
  int jobs = 1;

  nlohmann::json to_json() const;
};

struct RunResult {
  double test_accuracy = 0.0;
  double best_val_accuracy = 0.0;
  int best_epoch = 0;
  int epochs_run = 0;
  std::vector<LossReport> loss_history;
  std::vector<double> val_history;
  double wall_time_sec = 0.0;

  nlohmann::json to_json() const;
};

struct AggregateResult {
  double mean = 0.0;
  double std_dev = 0.0;  // population std over all split x run accuracies
  // (split index, run index, test accuracy)
  std::vector<std::tuple<int, int, double>> per_run;
  ExperimentConfig config;

  nlohmann::json to_json() const;
  // "mean ± std %" with two decimals, matching the result-table format
  std::string formatted() const;
};

// Raised when a loss turns non-finite; carries epoch and term.
struct TrainingAbort : Error {
  using Error::Error;
};

// Fraction of nodes in idx whose argmax logit (ties -> lowest class)
// matches the label. Dropout disabled.
double evaluate(Model& model, const Dataset& ds,
                std::span<const int> idx);

// Joint regime: one Adam step per epoch over all parameters, supervised +
// lambda * unsupervised + weight-decay L2; early stopping on validation
// accuracy with best-snapshot restore.
RunResult train_joint(Model& model, const Dataset& ds,
                      const SplitAssignment& split,
                      const ExperimentConfig& config, Rng& rng);

// Frozen regime: phase 1 pretrains the positional model on the
// unsupervised loss alone; phase 2 freezes it bitwise and trains the main
// network on the supervised loss + L2.
RunResult train_frozen(Model& model, const Dataset& ds,
                       const SplitAssignment& split,
                       const ExperimentConfig& config, Rng& rng);

// Dispatches per config.regime (non-positional kinds always train joint
// with a zero unsupervised term).
RunResult train_run(Model& model, const Dataset& ds,
                    const SplitAssignment& split,
                    const ExperimentConfig& config, Rng& rng);

// Full split x run protocol with deterministically derived seeds;
// parallel over runs when config.jobs > 1.
AggregateResult run_experiment(const ExperimentConfig& config);
AggregateResult run_experiment(const ExperimentConfig& config,
                               const Dataset& ds);

}  // namespace gatpos::train
