#include "commands.hpp"

#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <map>
#include <sstream>

#include "gatpos/params_io.hpp"
#include "gatpos/verify.hpp"

namespace gatpos::cli {

namespace {

std::string trim(const std::string& s) {
  const auto a = s.find_first_not_of(" \t\r");
  if (a == std::string::npos) return "";
  const auto b = s.find_last_not_of(" \t\r");
  return s.substr(a, b - a + 1);
}

std::string unquote(const std::string& s) {
  if (s.size() >= 2 && s.front() == '"' && s.back() == '"')
    return s.substr(1, s.size() - 2);
  return s;
}

bool parse_bool(const std::string& v) {
  if (v == "true") return true;
  if (v == "false") return false;
  throw ConfigError("expected true/false, got: " + v);
}

}  // namespace

void apply_config_file(const std::string& path,
                       train::ExperimentConfig& config) {
  std::ifstream in(path);
  if (!in) throw LoadError("cannot open config file " + path);
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw ConfigError(path + ":" + std::to_string(lineno) +
                        ": expected key = value");
    const std::string key = trim(line.substr(0, eq));
    const std::string value = unquote(trim(line.substr(eq + 1)));
    try {
      auto& hp = config.hp;
      if (key == "dataset") config.dataset = value;
      else if (key == "datasets_root") config.datasets_root = value;
      else if (key == "model") config.model = nn::parse_model_kind(value);
      else if (key == "regime") config.regime = train::parse_regime(value);
      else if (key == "num_splits") config.num_splits = std::stoi(value);
      else if (key == "runs_per_split")
        config.runs_per_split = std::stoi(value);
      else if (key == "master_seed") config.master_seed = std::stoull(value);
      else if (key == "jobs") config.jobs = std::stoi(value);
      else if (key == "learning_rate") hp.learning_rate = std::stod(value);
      else if (key == "weight_decay") hp.weight_decay = std::stod(value);
      else if (key == "dropout") hp.dropout_p = std::stod(value);
      else if (key == "leaky_slope") hp.leaky_slope = std::stod(value);
      else if (key == "positional_width")
        hp.positional_width = std::stoi(value);
      else if (key == "positional_depth")
        hp.positional_depth = std::stoi(value);
      else if (key == "lambda") hp.lambda_unsup = std::stod(value);
      else if (key == "negative_samples")
        hp.negative_samples = std::stoi(value);
      else if (key == "negative_exponent")
        hp.negative_exponent = std::stod(value);
      else if (key == "max_epochs") hp.max_epochs = std::stoi(value);
      else if (key == "patience") hp.patience = std::stoi(value);
      else if (key == "hidden_units_per_head")
        hp.hidden_units_per_head = std::stoi(value);
      else if (key == "num_heads") hp.num_heads = std::stoi(value);
      else if (key == "gcn_hidden") hp.gcn_hidden = std::stoi(value);
      else if (key == "normalize_losses")
        hp.normalize_losses = parse_bool(value);
      else
        throw ConfigError(path + ":" + std::to_string(lineno) +
                          ": unknown key \"" + key + "\"");
    } catch (const std::invalid_argument&) {
      throw ConfigError(path + ":" + std::to_string(lineno) +
                        ": bad value for \"" + key + "\"");
    }
  }
}

std::string resolve_datasets_root(const std::string& flag_value) {
  if (!flag_value.empty()) return flag_value;
  if (const char* env = std::getenv("GATPOS_DATASETS")) return env;
  return "";
}

int cmd_train(const TrainOptions& opts) {
  try {
    const std::filesystem::path dir(opts.dataset_dir);
    train::ExperimentConfig config;
    config.dataset = dir.filename().string();
    if (!opts.config_file.empty()) apply_config_file(opts.config_file, config);
    if (opts.model) config.model = nn::parse_model_kind(*opts.model);
    if (opts.regime) config.regime = train::parse_regime(*opts.regime);
    if (opts.seed) config.master_seed = *opts.seed;

    Dataset ds = load_dataset(dir, config.dataset);
    nn::resolve_dataset_defaults(config.hp, ds.name);
    SplitAssignment split = generate_splits(
        ds, mix_seed(config.master_seed ^ 0xa5a5a5a5a5a5a5a5ULL, 0, 0));

    Rng rng(mix_seed(config.master_seed, 0, 0));
    nn::Model model = nn::build_model(config.model, ds, config.hp, rng);
    train::RunResult result = train::train_run(model, ds, split, config, rng);

    const std::filesystem::path out(opts.out_dir);
    std::filesystem::create_directories(out);
    {
      nlohmann::json j = result.to_json();
      j["config"] = config.to_json();
      std::ofstream f(out / "result.json");
      f << j.dump(2) << "\n";
    }
    {
      auto params = model.all_params();
      ad::save_params(out / "params.bin", params);
    }
    {
      std::ofstream f(out / "curve.csv");
      f << "epoch,supervised,unsupervised,val_acc\n";
      for (std::size_t e = 0; e < result.loss_history.size(); ++e)
        f << e << "," << result.loss_history[e].supervised << ","
          << result.loss_history[e].unsupervised << ","
          << result.val_history[e] << "\n";
    }
    std::printf("test_acc=%.6f\n", result.test_accuracy);
    return kExitOk;
  } catch (const ConfigError& e) {
    std::cerr << "usage error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitFailure;
  }
}

namespace {

struct RefCell {
  double mean = -1.0;  // percent; < 0 means not reported
  double stddev = 0.0;
};

struct TableSpec {
  std::vector<std::string> datasets;
  // row label -> (model, regime, per-dataset published reference cells)
  struct Row {
    std::string label;
    nn::ModelKind model;
    train::Regime regime;
    std::vector<RefCell> reference;
  };
  std::vector<Row> rows;
};

TableSpec table_spec(const std::string& name) {
  using nn::ModelKind;
  using train::Regime;
  if (name == "nonhomophilic") {
    return {{"chameleon", "squirrel", "actor"},
            {{"GCN", ModelKind::gcn, Regime::joint,
              {{65.22, 2.22}, {45.44, 1.27}, {28.30, 0.73}}},
             {"GAT", ModelKind::gat, Regime::joint,
              {{63.88, 2.42}, {41.19, 3.38}, {28.49, 1.06}}},
             {"GAT-POS", ModelKind::gat_pos, Regime::joint,
              {{67.76, 2.54}, {52.90, 1.55}, {34.89, 1.38}}},
             {"GAT-POS-Transformer", ModelKind::gat_pos_transformer,
              Regime::joint,
              {{65.55, 2.38}, {51.62, 1.84}, {34.97, 1.27}}}}};
  }
  if (name == "homophilic") {
    return {{"cora", "citeseer", "pubmed"},
            {{"GCN", ModelKind::gcn, Regime::joint,
              {{85.67, 0.94}, {73.28, 1.37}, {88.14, 0.32}}},
             {"GAT", ModelKind::gat, Regime::joint,
              {{87.06, 0.98}, {74.79, 1.89}, {87.51, 0.43}}},
             {"GAT-POS", ModelKind::gat_pos, Regime::joint,
              {{86.61, 1.13}, {73.81, 1.27}, {87.56, 0.48}}},
             {"GAT-POS-Transformer", ModelKind::gat_pos_transformer,
              Regime::joint,
              {{}, {}, {}}}}};
  }
  if (name == "ablation") {
    return {{"chameleon", "squirrel", "actor"},
            {{"GAT-POS (joint)", ModelKind::gat_pos, Regime::joint,
              {{67.76, 2.54}, {52.90, 1.55}, {34.89, 1.38}}},
             {"GAT-POS (frozen)", ModelKind::gat_pos, Regime::frozen,
              {{65.75, 1.81}, {50.63, 1.29}, {34.95, 0.95}}},
             {"GAT-POS-Transformer (joint)", ModelKind::gat_pos_transformer,
              Regime::joint,
              {{65.55, 2.38}, {51.62, 1.84}, {34.97, 1.27}}},
             {"GAT-POS-Transformer (frozen)", ModelKind::gat_pos_transformer,
              Regime::frozen,
              {{65.42, 2.13}, {50.79, 1.35}, {34.66, 1.17}}}}};
  }
  throw ConfigError("unknown table: " + name +
                    " (expected nonhomophilic|homophilic|ablation)");
}

}  // namespace

int cmd_reproduce(const ReproduceOptions& opts) {
  TableSpec spec;
  try {
    spec = table_spec(opts.table);
  } catch (const ConfigError& e) {
    std::cerr << "usage error: " << e.what() << "\n";
    return kExitUsage;
  }
  const std::string root = resolve_datasets_root(opts.datasets_root);
  if (root.empty()) {
    std::cerr << "usage error: no datasets root (--datasets-root or "
                 "GATPOS_DATASETS)\n";
    return kExitUsage;
  }

  try {
    nlohmann::json artifact;
    artifact["table"] = opts.table;
    artifact["cells"] = nlohmann::json::array();

    std::ostringstream md;
    md << "| Method |";
    for (const auto& d : spec.datasets) md << " " << d << " |";
    md << "\n|---|";
    for (std::size_t i = 0; i < spec.datasets.size(); ++i) md << "---|";
    md << "\n";

    int computed = 0, skipped = 0;
    for (const auto& row : spec.rows) {
      md << "| " << row.label << " |";
      for (std::size_t d = 0; d < spec.datasets.size(); ++d) {
        const auto& dataset = spec.datasets[d];
        const auto pkg = std::filesystem::path(root) / dataset;
        std::string cell;
        if (!std::filesystem::exists(pkg / "labels.tsv")) {
          std::cerr << "warning: skipping " << row.label << " / " << dataset
                    << ": package not found at " << pkg << "\n";
          cell = "skipped";
          ++skipped;
        } else {
          train::ExperimentConfig config;
          config.dataset = dataset;
          config.datasets_root = root;
          config.model = row.model;
          config.regime = row.regime;
          config.num_splits = 10;
          config.runs_per_split = opts.runs_per_split;
          config.master_seed = opts.seed;
          config.jobs = opts.jobs;
          auto agg = train::run_experiment(config);
          cell = agg.formatted();
          ++computed;
          artifact["cells"].push_back({{"model", row.label},
                                       {"dataset", dataset},
                                       {"result", agg.to_json()}});
        }
        const auto& ref = row.reference[d];
        if (ref.mean >= 0) {
          char buf[64];
          std::snprintf(buf, sizeof(buf), " (reference %.2f ± %.2f%%)", ref.mean,
                        ref.stddev);
          cell += buf;
        }
        md << " " << cell << " |";
      }
      md << "\n";
    }

    std::filesystem::create_directories(opts.out_dir);
    const auto md_path =
        std::filesystem::path(opts.out_dir) / (opts.table + "_table.md");
    const auto json_path =
        std::filesystem::path(opts.out_dir) / (opts.table + "_table.json");
    std::ofstream(md_path) << md.str();
    std::ofstream(json_path) << artifact.dump(2) << "\n";
    std::cout << md.str();
    return computed > 0 ? kExitOk : kExitFailure;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitFailure;
  }
}

int cmd_stats(const StatsOptions& opts) {
  const std::string root = resolve_datasets_root(opts.datasets_root);
  if (root.empty()) {
    std::cerr << "usage error: no datasets root (--datasets-root or "
                 "GATPOS_DATASETS)\n";
    return kExitUsage;
  }
  struct Ref {
    const char* name;
    int nodes, features, classes;
    double beta;
  };
  // reference statistics of the six benchmark datasets
  const Ref refs[] = {
      {"cora", 2708, 1433, 7, 0.83},   {"citeseer", 3327, 3703, 6, 0.71},
      {"pubmed", 19717, 500, 3, 0.79}, {"chameleon", 2277, 2325, 5, 0.25},
      {"squirrel", 5201, 2089, 5, 0.22}, {"actor", 7600, 931, 5, 0.24},
  };
  std::printf("%-10s %8s %10s %8s %4s %8s %10s\n", "dataset", "nodes", "arcs",
              "feats", "cls", "beta", "beta(ref)");
  int ok_count = 0;
  for (const auto& ref : refs) {
    const auto pkg = std::filesystem::path(root) / ref.name;
    try {
      Dataset ds = load_dataset(pkg, ref.name);
      const auto h = homophily_beta(ds);
      std::printf("%-10s %8d %10d %8d %4d %8.2f %10.2f\n", ref.name,
                  ds.num_nodes(), ds.graph.num_arcs(), ds.num_features,
                  ds.num_classes, h.beta, ref.beta);
      ++ok_count;
    } catch (const std::exception& e) {
      std::printf("%-10s error: %s\n", ref.name, e.what());
    }
  }
  return ok_count > 0 ? kExitOk : kExitFailure;
}

int cmd_verify(const VerifyOptions& opts) {
  ad::Tape::leaky_relu_fault_hook() = opts.inject_leaky_fault;
  const auto results = verify::run_verify_suite(opts.tol);
  ad::Tape::leaky_relu_fault_hook() = false;
  bool all_pass = true;
  for (const auto& r : results) {
    std::printf("[%s] %-38s %s\n", r.pass ? "PASS" : "FAIL", r.name.c_str(),
                r.detail.c_str());
    all_pass = all_pass && r.pass;
  }
  return all_pass ? kExitOk : kExitFailure;
}

}  // namespace gatpos::cli
