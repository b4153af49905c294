#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <cmath>
#include <filesystem>
#include <fstream>
#include <limits>
#include <vector>

#include "doctest.h"
#include "gatpos/graph.hpp"
#include "gatpos/training.hpp"

using namespace gatpos;
using namespace gatpos::train;

namespace {

Dataset fixture_dataset() {
  return load_dataset(std::filesystem::path(FIXTURES_DIR) / "twocluster",
                      "twocluster");
}

ExperimentConfig small_config(nn::ModelKind kind, Regime regime) {
  ExperimentConfig c;
  c.dataset = "twocluster";
  c.model = kind;
  c.regime = regime;
  c.num_splits = 1;
  c.runs_per_split = 1;
  c.master_seed = 21;
  c.hp.hidden_units_per_head = 4;
  c.hp.num_heads = 2;
  c.hp.positional_width = 8;
  c.hp.positional_depth = 2;
  c.hp.gcn_hidden = 8;
  c.hp.dropout_p = 0.2;
  c.hp.max_epochs = 200;
  c.hp.patience = 50;
  return c;
}

}  // namespace

TEST_CASE("joint training separates the two clusters") {
  Dataset ds = fixture_dataset();
  ExperimentConfig config = small_config(nn::ModelKind::gat_pos, Regime::joint);
  SplitAssignment split = generate_splits(ds, 3);
  Rng rng(mix_seed(config.master_seed, 0, 0));
  nn::Model model = nn::build_model(config.model, ds, config.hp, rng);
  RunResult res = train_run(model, ds, split, config, rng);

  CHECK(res.epochs_run > 0);
  CHECK(res.epochs_run <= 200);
  CHECK(evaluate(model, ds, split.train_idx) >= 0.9);
  CHECK(res.best_val_accuracy >= 0.5);
  CHECK(res.test_accuracy >= 0.5);
  CHECK(res.loss_history.size() == std::size_t(res.epochs_run));
  CHECK(res.val_history.size() == std::size_t(res.epochs_run));
  // joint gat-pos optimizes a real unsupervised term
  CHECK(res.loss_history.front().unsupervised > 0.0);
  // total = supervised + lambda * unsupervised + wd * l2
  const auto& r0 = res.loss_history.front();
  CHECK(r0.total ==
        doctest::Approx(r0.supervised + config.hp.lambda_unsup * r0.unsupervised +
                        config.hp.weight_decay * r0.l2_penalty)
            .epsilon(1e-9));
}

TEST_CASE("non-positional models train with a zero unsupervised term") {
  Dataset ds = fixture_dataset();
  SplitAssignment split = generate_splits(ds, 3);
  for (auto kind : {nn::ModelKind::gat, nn::ModelKind::gcn}) {
    ExperimentConfig config = small_config(kind, Regime::joint);
    config.hp.max_epochs = 30;
    Rng rng(7);
    nn::Model model = nn::build_model(kind, ds, config.hp, rng);
    RunResult res = train_run(model, ds, split, config, rng);
    for (const auto& r : res.loss_history)
      CHECK(r.unsupervised == doctest::Approx(0.0));
  }
}

TEST_CASE("training is deterministic for a fixed seed") {
  Dataset ds = fixture_dataset();
  SplitAssignment split = generate_splits(ds, 5);
  auto run_once = [&]() {
    ExperimentConfig config =
        small_config(nn::ModelKind::gat_pos, Regime::joint);
    config.hp.max_epochs = 25;
    Rng rng(mix_seed(config.master_seed, 0, 0));
    nn::Model model = nn::build_model(config.model, ds, config.hp, rng);
    return train_run(model, ds, split, config, rng).to_json().dump();
  };
  const std::string a = run_once();
  CHECK(a == run_once());
}

TEST_CASE("run result json omits wall time") {
  RunResult r;
  r.wall_time_sec = 123.0;
  auto j = r.to_json();
  CHECK(!j.contains("wall_time_sec"));
  CHECK(j.contains("test_accuracy"));
}

TEST_CASE("frozen regime trains the embeddings first, then freezes them") {
  Dataset ds = fixture_dataset();
  ExperimentConfig config =
      small_config(nn::ModelKind::gat_pos, Regime::frozen);
  config.hp.max_epochs = 40;
  config.hp.patience = 15;
  SplitAssignment split = generate_splits(ds, 3);
  Rng rng(9);
  nn::Model model = nn::build_model(config.model, ds, config.hp, rng);
  const std::vector<double> p0_initial = model.positional->p0.value;

  // train_frozen itself asserts the positional parameters stay bitwise
  // identical through phase 2
  RunResult res = train_frozen(model, ds, split, config, rng);
  CHECK(res.epochs_run > 0);
  CHECK(model.positional->p0.value != p0_initial);  // phase 1 moved them
  for (const auto& r : res.loss_history)
    CHECK(r.unsupervised == doctest::Approx(0.0));  // phase 2 is supervised
}

TEST_CASE("frozen regime requires a positional kind") {
  Dataset ds = fixture_dataset();
  ExperimentConfig config = small_config(nn::ModelKind::gat, Regime::frozen);
  SplitAssignment split = generate_splits(ds, 3);
  Rng rng(10);
  nn::Model model = nn::build_model(nn::ModelKind::gat, ds, config.hp, rng);
  CHECK_THROWS_AS(train_frozen(model, ds, split, config, rng), ContractError);
  // the dispatcher falls back to joint instead of throwing
  config.hp.max_epochs = 5;
  RunResult res = train_run(model, ds, split, config, rng);
  CHECK(res.epochs_run == 5);
}

TEST_CASE("joint training with lambda 0 still updates the embedding table") {
  Dataset ds = fixture_dataset();
  ExperimentConfig config = small_config(nn::ModelKind::gat_pos, Regime::joint);
  config.hp.lambda_unsup = 0.0;
  config.hp.max_epochs = 10;
  SplitAssignment split = generate_splits(ds, 3);
  Rng rng(11);
  nn::Model model = nn::build_model(config.model, ds, config.hp, rng);
  const std::vector<double> p0_initial = model.positional->p0.value;
  train_joint(model, ds, split, config, rng);
  // supervised gradients flow through the attention scores into p0
  CHECK(model.positional->p0.value != p0_initial);
}

TEST_CASE("evaluate breaks argmax ties toward the lowest class") {
  Dataset ds = fixture_dataset();
  ExperimentConfig config = small_config(nn::ModelKind::gcn, Regime::joint);
  Rng rng(12);
  nn::Model model = nn::build_model(nn::ModelKind::gcn, ds, config.hp, rng);
  for (auto* p : model.all_params())
    std::fill(p->value.begin(), p->value.end(), 0.0);
  // all logits are 0 -> every node predicted as class 0
  std::vector<int> all(12);
  for (int v = 0; v < 12; ++v) all[v] = v;
  CHECK(evaluate(model, ds, all) == doctest::Approx(0.5));
  std::vector<int> only_ones = {6, 7, 8};
  CHECK(evaluate(model, ds, only_ones) == doctest::Approx(0.0));
  CHECK(evaluate(model, ds, {}) == doctest::Approx(0.0));
}

TEST_CASE("non-finite losses abort with a diagnostic") {
  Dataset ds = fixture_dataset();
  ds.features[0] = std::numeric_limits<double>::quiet_NaN();
  ExperimentConfig config = small_config(nn::ModelKind::gat, Regime::joint);
  SplitAssignment split = generate_splits(ds, 3);
  Rng rng(13);
  nn::Model model = nn::build_model(nn::ModelKind::gat, ds, config.hp, rng);
  CHECK_THROWS_AS(train_joint(model, ds, split, config, rng), TrainingAbort);
}

TEST_CASE("aggregate formatting and statistics") {
  AggregateResult agg;
  agg.mean = 0.7;
  agg.std_dev = 0.1;
  CHECK(agg.formatted() == "70.00 ± 10.00%");
  agg.mean = 0.67764;
  agg.std_dev = 0.02539;
  CHECK(agg.formatted() == "67.76 ± 2.54%");
}

TEST_CASE("run_experiment aggregates split x run accuracies") {
  Dataset ds = fixture_dataset();
  ExperimentConfig config = small_config(nn::ModelKind::gat, Regime::joint);
  config.num_splits = 2;
  config.runs_per_split = 2;
  config.hp.max_epochs = 15;
  config.hp.patience = 15;

  AggregateResult agg = run_experiment(config, ds);
  REQUIRE(agg.per_run.size() == 4);
  double sum = 0.0, sq = 0.0;
  for (const auto& [s, r, a] : agg.per_run) {
    CHECK(s >= 0);
    CHECK(s < 2);
    CHECK(r >= 0);
    CHECK(r < 2);
    sum += a;
  }
  CHECK(agg.mean == doctest::Approx(sum / 4.0).epsilon(1e-12));
  for (const auto& [s, r, a] : agg.per_run)
    sq += (a - agg.mean) * (a - agg.mean);
  CHECK(agg.std_dev == doctest::Approx(std::sqrt(sq / 4.0)).epsilon(1e-12));

  SUBCASE("deterministic and independent of worker count") {
    AggregateResult again = run_experiment(config, ds);
    CHECK(agg.to_json().dump() == again.to_json().dump());
    ExperimentConfig parallel = config;
    parallel.jobs = 3;
    AggregateResult par = run_experiment(parallel, ds);
    CHECK(par.per_run == agg.per_run);
    CHECK(par.mean == doctest::Approx(agg.mean).epsilon(1e-15));
  }
  SUBCASE("different master seeds change the outcome stream") {
    ExperimentConfig other = config;
    other.master_seed = 999;
    AggregateResult o = run_experiment(other, ds);
    CHECK(o.per_run != agg.per_run);
  }
}

TEST_CASE("single-run aggregate has zero standard deviation") {
  Dataset ds = fixture_dataset();
  ExperimentConfig config = small_config(nn::ModelKind::gcn, Regime::joint);
  config.hp.max_epochs = 10;
  AggregateResult agg = run_experiment(config, ds);
  REQUIRE(agg.per_run.size() == 1);
  CHECK(agg.std_dev == doctest::Approx(0.0));
  CHECK(agg.mean == doctest::Approx(std::get<2>(agg.per_run[0])));
}

TEST_CASE("split files override split generation") {
  Dataset ds = fixture_dataset();
  auto dir = std::filesystem::temp_directory_path() / "gatpos_split_override";
  std::filesystem::create_directories(dir);
  {
    std::ofstream f(dir / "s0.json");
    f << R"({"train": [0, 1, 2, 3, 6, 7, 8, 9], "val": [4, 10], "test": [5, 11]})";
  }
  ExperimentConfig config = small_config(nn::ModelKind::gcn, Regime::joint);
  config.hp.max_epochs = 10;
  config.split_files = {(dir / "s0.json").string()};
  config.num_splits = 3;  // ignored in favor of the explicit file
  AggregateResult agg = run_experiment(config, ds);
  CHECK(agg.per_run.size() == 1);
}

TEST_CASE("regime names round trip") {
  CHECK(parse_regime("joint") == Regime::joint);
  CHECK(parse_regime("frozen") == Regime::frozen);
  CHECK(regime_name(Regime::frozen) == "frozen");
  CHECK_THROWS_AS(parse_regime("warm"), ConfigError);
}
