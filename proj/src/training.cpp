#include "gatpos/training.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <limits>
#include <thread>

namespace gatpos::train {

Regime parse_regime(const std::string& s) {
  if (s == "joint") return Regime::joint;
  if (s == "frozen") return Regime::frozen;
  throw ConfigError("unknown regime: " + s);
}

std::string regime_name(Regime r) {
  return r == Regime::joint ? "joint" : "frozen";
}

nlohmann::json ExperimentConfig::to_json() const {
  return {
      {"dataset", dataset},
      {"datasets_root", datasets_root},
      {"model", nn::model_kind_name(model)},
      {"regime", regime_name(regime)},
      {"num_splits", num_splits},
      {"runs_per_split", runs_per_split},
      {"split_files", split_files},
      {"master_seed", master_seed},
      {"jobs", jobs},
      {"hyperparams",
       {{"learning_rate", hp.learning_rate},
        {"weight_decay", hp.weight_decay},
        {"dropout", hp.dropout_p},
        {"leaky_slope", hp.leaky_slope},
        {"positional_width", hp.positional_width},
        {"positional_depth", hp.positional_depth},
        {"lambda", hp.lambda_unsup},
        {"negative_samples", hp.negative_samples},
        {"negative_exponent", hp.negative_exponent},
        {"max_epochs", hp.max_epochs},
        {"patience", hp.patience},
        {"hidden_units_per_head", hp.hidden_units_per_head},
        {"num_heads", hp.num_heads},
        {"gcn_hidden", hp.gcn_hidden},
        {"normalize_losses", hp.normalize_losses}}},
  };
}

nlohmann::json RunResult::to_json() const {
  nlohmann::json history = nlohmann::json::array();
  for (const auto& r : loss_history)
    history.push_back({{"supervised", r.supervised},
                       {"unsupervised", r.unsupervised},
                       {"l2_penalty", r.l2_penalty},
                       {"total", r.total}});
  // wall time deliberately omitted: artifacts must be byte-identical for
  // identical seeds
  return {{"test_accuracy", test_accuracy},
          {"best_val_accuracy", best_val_accuracy},
          {"best_epoch", best_epoch},
          {"epochs_run", epochs_run},
          {"loss_history", history},
          {"val_history", val_history}};
}

nlohmann::json AggregateResult::to_json() const {
  nlohmann::json runs = nlohmann::json::array();
  for (const auto& [s, r, acc] : per_run)
    runs.push_back(nlohmann::json::array({s, r, acc}));
  return {{"config", config.to_json()},
          {"mean", mean},
          {"std", std_dev},
          {"per_run", runs}};
}

std::string AggregateResult::formatted() const {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.2f ± %.2f%%", mean * 100.0,
                std_dev * 100.0);
  return buf;
}

double evaluate(Model& model, const Dataset& ds, std::span<const int> idx) {
  if (idx.empty()) return 0.0;
  Rng rng(0);  // inference mode: dropout is identity, rng unused
  ad::Tape t;
  auto fr = model.forward(t, ds, rng, /*training=*/false);
  const auto logits = t.value(fr.logits);
  const int c = t.cols(fr.logits);
  int correct = 0;
  for (int v : idx) {
    const double* row = logits.data() + std::size_t(v) * c;
    int arg = 0;
    for (int j = 1; j < c; ++j)
      if (row[j] > row[arg]) arg = j;  // ties keep the lowest class index
    if (arg == ds.labels[v]) ++correct;
  }
  return double(correct) / double(idx.size());
}

namespace {

using ParamSnapshot = std::vector<std::vector<double>>;

ParamSnapshot snapshot(const std::vector<ad::Param*>& params) {
  ParamSnapshot s;
  s.reserve(params.size());
  for (auto* p : params) s.push_back(p->value);
  return s;
}

void restore(const std::vector<ad::Param*>& params, const ParamSnapshot& s) {
  for (std::size_t i = 0; i < params.size(); ++i) params[i]->value = s[i];
}

void require_finite(double x, const char* term, int epoch) {
  if (!std::isfinite(x))
    throw TrainingAbort("non-finite " + std::string(term) + " loss at epoch " +
                        std::to_string(epoch));
}

// Supervised + optional unsupervised + L2 phase shared by the joint
// regime and the frozen regime's phase 2.
RunResult supervised_phase(Model& model, const Dataset& ds,
                           const SplitAssignment& split,
                           const ExperimentConfig& config, Rng& rng,
                           bool with_unsupervised, bool positional_trainable) {
  const auto t_start = std::chrono::steady_clock::now();
  const Hyperparams& hp = config.hp;

  std::vector<ad::Param*> opt_params =
      positional_trainable ? model.all_params() : model.main_params();
  std::vector<ad::Param*> l2_params =
      positional_trainable ? model.weight_params() : model.main_params();

  std::optional<NegativeDistribution> dist;
  if (with_unsupervised)
    dist.emplace(ds.graph, hp.negative_exponent);

  obj::Adam adam(opt_params, {hp.learning_rate});

  RunResult result;
  double best_val = -1.0;
  ParamSnapshot best_params;
  int stale = 0;

  for (int epoch = 0; epoch < hp.max_epochs; ++epoch) {
    for (auto* p : opt_params) p->zero_grad();

    ad::Tape t;
    auto fr = model.forward(t, ds, rng, /*training=*/true,
                            positional_trainable);
    ad::Var sup = obj::supervised_loss(t, fr.logits, ds.labels,
                                       split.train_idx);
    if (hp.normalize_losses)
      sup = t.scale(sup, 1.0 / double(split.train_idx.size()));

    ad::Var total = sup;
    double unsup_value = 0.0;
    if (with_unsupervised) {
      ad::Var unsup = obj::unsupervised_loss(t, fr.positional, ds.graph,
                                             *dist, hp.negative_samples, rng);
      if (hp.normalize_losses)
        unsup = t.scale(unsup, 1.0 / double(ds.graph.num_arcs()));
      unsup_value = t.value(unsup)[0];
      total = t.add(total, t.scale(unsup, hp.lambda_unsup));
    }
    ad::Var l2 = obj::l2_penalty(t, l2_params);
    total = t.add(total, t.scale(l2, hp.weight_decay));

    LossReport report;
    report.supervised = t.value(sup)[0];
    report.unsupervised = unsup_value;
    report.l2_penalty = t.value(l2)[0];
    report.total = t.value(total)[0];
    require_finite(report.supervised, "supervised", epoch);
    require_finite(report.unsupervised, "unsupervised", epoch);
    require_finite(report.total, "total", epoch);

    t.backward(total);
    adam.step();

    const double val_acc = evaluate(model, ds, split.val_idx);
    result.loss_history.push_back(report);
    result.val_history.push_back(val_acc);
    result.epochs_run = epoch + 1;

    if (val_acc > best_val) {
      best_val = val_acc;
      result.best_epoch = epoch;
      best_params = snapshot(opt_params);
      stale = 0;
    } else if (++stale >= hp.patience) {
      break;
    }
  }

  if (!best_params.empty()) restore(opt_params, best_params);
  result.best_val_accuracy = best_val;
  result.test_accuracy = evaluate(model, ds, split.test_idx);
  result.wall_time_sec =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t_start)
          .count();
  return result;
}

}  // namespace

RunResult train_joint(Model& model, const Dataset& ds,
                      const SplitAssignment& split,
                      const ExperimentConfig& config, Rng& rng) {
  const bool with_unsup = model.positional.has_value();
  return supervised_phase(model, ds, split, config, rng, with_unsup,
                          /*positional_trainable=*/true);
}

RunResult train_frozen(Model& model, const Dataset& ds,
                       const SplitAssignment& split,
                       const ExperimentConfig& config, Rng& rng) {
  if (!model.positional)
    throw ContractError("frozen regime requires a positional model kind");
  const Hyperparams& hp = config.hp;

  // Phase 1: unsupervised pretraining of the positional model.
  auto pos_params = model.positional_params();
  NegativeDistribution dist(ds.graph, hp.negative_exponent);
  obj::Adam adam(pos_params, {hp.learning_rate});
  double best_loss = std::numeric_limits<double>::infinity();
  ParamSnapshot best_params;
  int stale = 0;
  for (int epoch = 0; epoch < hp.max_epochs; ++epoch) {
    for (auto* p : pos_params) p->zero_grad();
    ad::Tape t;
    ad::Var p = model.positional->forward(t);
    ad::Var loss = obj::unsupervised_loss(t, p, ds.graph, dist,
                                          hp.negative_samples, rng);
    const double value = t.value(loss)[0];
    require_finite(value, "unsupervised", epoch);
    t.backward(loss);
    adam.step();
    if (value < best_loss) {
      best_loss = value;
      best_params = snapshot(pos_params);
      stale = 0;
    } else if (++stale >= hp.patience) {
      break;
    }
  }
  if (!best_params.empty()) restore(pos_params, best_params);

  // Phase 2: positional parameters frozen bitwise.
  const ParamSnapshot frozen = snapshot(pos_params);
  RunResult result = supervised_phase(model, ds, split, config, rng,
                                      /*with_unsupervised=*/false,
                                      /*positional_trainable=*/false);
  for (std::size_t i = 0; i < pos_params.size(); ++i)
    if (pos_params[i]->value != frozen[i])
      throw ContractError("frozen regime: positional parameter " +
                          pos_params[i]->name + " changed during phase 2");
  return result;
}

RunResult train_run(Model& model, const Dataset& ds,
                    const SplitAssignment& split,
                    const ExperimentConfig& config, Rng& rng) {
  if (config.regime == Regime::frozen && model.positional)
    return train_frozen(model, ds, split, config, rng);
  return train_joint(model, ds, split, config, rng);
}

AggregateResult run_experiment(const ExperimentConfig& config) {
  Dataset ds = load_dataset(
      std::filesystem::path(config.datasets_root) / config.dataset,
      config.dataset);
  return run_experiment(config, ds);
}

AggregateResult run_experiment(const ExperimentConfig& config,
                               const Dataset& ds) {
  std::vector<SplitAssignment> splits;
  if (!config.split_files.empty()) {
    for (const auto& f : config.split_files)
      splits.push_back(load_splits(f, ds.num_nodes()));
  } else {
    for (int s = 0; s < config.num_splits; ++s)
      splits.push_back(generate_splits(
          ds, mix_seed(config.master_seed ^ 0xa5a5a5a5a5a5a5a5ULL, s, 0)));
  }

  struct Task {
    int split, run;
  };
  std::vector<Task> tasks;
  for (int s = 0; s < static_cast<int>(splits.size()); ++s)
    for (int r = 0; r < config.runs_per_split; ++r) tasks.push_back({s, r});

  std::vector<double> accs(tasks.size(), 0.0);
  std::vector<std::string> errors(tasks.size());
  std::atomic<std::size_t> next{0};
  auto worker = [&]() {
    for (;;) {
      const std::size_t i = next.fetch_add(1);
      if (i >= tasks.size()) return;
      const auto [s, r] = tasks[i];
      try {
        Rng rng(mix_seed(config.master_seed, s, r));
        Model model = nn::build_model(config.model, ds, config.hp, rng);
        RunResult res = train_run(model, ds, splits[s], config, rng);
        accs[i] = res.test_accuracy;
      } catch (const std::exception& e) {
        errors[i] = e.what();
      }
    }
  };
  const int jobs = std::max(1, config.jobs);
  if (jobs == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (int j = 0; j < jobs; ++j) pool.emplace_back(worker);
    for (auto& th : pool) th.join();
  }

  AggregateResult agg;
  agg.config = config;
  for (std::size_t i = 0; i < tasks.size(); ++i) {
    if (!errors[i].empty())
      throw TrainingAbort("run (split " + std::to_string(tasks[i].split) +
                          ", run " + std::to_string(tasks[i].run) +
                          ") aborted: " + errors[i]);
    agg.per_run.emplace_back(tasks[i].split, tasks[i].run, accs[i]);
  }
  std::sort(agg.per_run.begin(), agg.per_run.end());
  double sum = 0.0;
  for (const auto& [s, r, a] : agg.per_run) sum += a;
  agg.mean = sum / double(agg.per_run.size());
  double sq = 0.0;
  for (const auto& [s, r, a] : agg.per_run)
    sq += (a - agg.mean) * (a - agg.mean);
  agg.std_dev = std::sqrt(sq / double(agg.per_run.size()));
  return agg;
}

}  // namespace gatpos::train
