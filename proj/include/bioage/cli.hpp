#pragma once

#include <optional>
#include <string>
#include <vector>

#include "bioage/cleaning.hpp"
#include "bioage/outlier.hpp"
#include "bioage/regressor.hpp"
#include "bioage/synth.hpp"

namespace bioage::cli {

// Experiment configuration for one command invocation. Block seeds default
// to the top-level seed; a command-line --seed overrides all of them. The
// canonical JSON snapshot of the effective config is embedded in every
// report, and re-running a command from that snapshot reproduces its
// outputs byte for byte.
struct RunConfig {
  std::uint64_t seed = 1;
  CohortSpec cohort;
  RegressorConfig regressor;
  ThresholdPolicy threshold;
  CleaningConfig cleaning;  // threshold_policy / regressor_config filled from the blocks above
  std::vector<double> sweep_r_values{0.5, 1.0, 1.5, 1.96, 2.5, 3.0};
  double deviation_bin_width = 2.0;
  int balance_bins = 10;
  // Chunk indices stripped from every input dataset before use, for
  // externally chunked data where edge chunks carry no signal.
  std::vector<int> chunk_exclude;
};

RunConfig parse_run_config(const std::string& json_text);
RunConfig load_run_config(const std::optional<std::string>& path);
std::string serialize_run_config(const RunConfig& config);

void override_seed(RunConfig& config, std::uint64_t seed);

// Commands. Each writes its outputs under out_dir and throws on failure;
// exit-code mapping lives in run_cli.
void cmd_synth(const RunConfig& config, const std::string& out_dir, bool balance);
void cmd_train_ca(const RunConfig& config, const std::string& data_path,
                  const std::optional<std::string>& test_path, const std::string& out_dir);
void cmd_clean(const RunConfig& config, const std::string& data_path, const std::string& out_dir);
void cmd_sweep_r(const RunConfig& config, const std::string& data_path,
                 const std::optional<std::string>& model_path, const std::string& out_dir);
void cmd_report_deviations(const RunConfig& config, const std::string& model_path,
                           const std::string& data_path, const std::string& out_dir);
void cmd_evaluate(const RunConfig& config, const std::string& model_path,
                  const std::string& data_path, const std::string& out_dir);

// Full argument parse and dispatch. Exit codes: 0 success, 1 usage or
// config error, 2 data-format error, 3 runtime failure.
int run_cli(const std::vector<std::string>& args);

}  // namespace bioage::cli
