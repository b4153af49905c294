#pragma once

#include <cstdint>
#include <optional>
#include <string>

#include "gatpos/training.hpp"

namespace gatpos::cli {

// Exit codes: 0 success, 1 runtime/check failure, 2 usage error.
constexpr int kExitOk = 0;
constexpr int kExitFailure = 1;
constexpr int kExitUsage = 2;

struct TrainOptions {
  std::string dataset_dir;
  std::string config_file;  // optional
  std::string out_dir = ".";
  // flags override config-file values override defaults
  std::optional<std::string> model;
  std::optional<std::string> regime;
  std::optional<std::uint64_t> seed;
};

struct ReproduceOptions {
  std::string table;  // nonhomophilic | homophilic | ablation
  std::string datasets_root;
  std::string out_dir = ".";
  int runs_per_split = 3;
  int jobs = 1;
  std::uint64_t seed = 1;
};

struct StatsOptions {
  std::string datasets_root;
};

struct VerifyOptions {
  double tol = 1e-4;
  bool inject_leaky_fault = false;  // test hook (mutation check)
};

int cmd_train(const TrainOptions& opts);
int cmd_reproduce(const ReproduceOptions& opts);
int cmd_stats(const StatsOptions& opts);
int cmd_verify(const VerifyOptions& opts);

// Flat key = value config document (TOML subset); unknown keys rejected.
void apply_config_file(const std::string& path,
                       train::ExperimentConfig& config);

// --datasets-root flag, else GATPOS_DATASETS, else empty.
std::string resolve_datasets_root(const std::string& flag_value);

}  // namespace gatpos::cli
