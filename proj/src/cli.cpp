#include "bioage/cli.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <iostream>
#include <set>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>

#include "bioage/aggregate.hpp"
#include "bioage/io.hpp"
#include "bioage/text.hpp"

namespace bioage::cli {

namespace {

using nlohmann::json;
namespace fs = std::filesystem;

void reject_unknown_keys(const json& block, const std::vector<std::string>& known,
                         const std::string& where) {
  for (const auto& [key, value] : block.items()) {
    if (std::find(known.begin(), known.end(), key) == known.end()) {
      throw std::invalid_argument("config: unknown key '" + key + "' in " + where);
    }
  }
}

void parse_cohort(const json& block, CohortSpec& spec) {
  reject_unknown_keys(block,
                      {"groups", "ca_range", "chunks_per_patient", "feature_dim",
                       "informative_dims", "feature_noise_sd", "chunk_offset_sd", "gender_effect",
                       "scans_per_patient", "seed"},
                      "cohort");
  if (block.contains("groups")) {
    spec.groups.clear();
    for (const json& g : block.at("groups")) {
      reject_unknown_keys(g, {"label", "count", "shift_mean", "shift_sd"}, "cohort.groups");
      CohortGroup group;
      group.label = g.at("label").get<std::string>();
      group.count = g.at("count").get<int>();
      group.aging_shift_mean = g.value("shift_mean", 0.0);
      group.aging_shift_sd = g.value("shift_sd", 0.0);
      spec.groups.push_back(std::move(group));
    }
  }
  if (block.contains("ca_range")) {
    const auto range = block.at("ca_range");
    if (!range.is_array() || range.size() != 2) {
      throw std::invalid_argument("config: cohort.ca_range must be [lo, hi]");
    }
    spec.ca_lo = range[0].get<double>();
    spec.ca_hi = range[1].get<double>();
  }
  spec.chunks_per_patient = block.value("chunks_per_patient", spec.chunks_per_patient);
  spec.feature_dim = block.value("feature_dim", spec.feature_dim);
  spec.informative_dims = block.value("informative_dims", spec.informative_dims);
  spec.feature_noise_sd = block.value("feature_noise_sd", spec.feature_noise_sd);
  spec.chunk_offset_sd = block.value("chunk_offset_sd", spec.chunk_offset_sd);
  spec.gender_effect = block.value("gender_effect", spec.gender_effect);
  spec.scans_per_patient = block.value("scans_per_patient", spec.scans_per_patient);
  if (block.contains("seed")) spec.seed = block.at("seed").get<std::uint64_t>();
}

void parse_regressor(const json& block, RegressorConfig& config) {
  reject_unknown_keys(block,
                      {"kind", "hidden_layer_sizes", "learning_rate", "epochs", "batch_size",
                       "l2_weight", "seed"},
                      "regressor");
  if (block.contains("kind")) {
    const std::string kind = block.at("kind").get<std::string>();
    if (kind == "mlp") {
      config.kind = RegressorKind::mlp;
    } else if (kind == "ridge") {
      config.kind = RegressorKind::ridge;
    } else {
      throw std::invalid_argument("config: regressor.kind must be 'mlp' or 'ridge'");
    }
  }
  if (block.contains("hidden_layer_sizes")) {
    config.hidden_layer_sizes = block.at("hidden_layer_sizes").get<std::vector<int>>();
  }
  config.learning_rate = block.value("learning_rate", config.learning_rate);
  config.epochs = block.value("epochs", config.epochs);
  config.batch_size = block.value("batch_size", config.batch_size);
  config.l2_weight = block.value("l2_weight", config.l2_weight);
  if (block.contains("seed")) config.seed = block.at("seed").get<std::uint64_t>();
}

void parse_threshold(const json& block, ThresholdPolicy& policy) {
  reject_unknown_keys(block, {"mode", "r", "sigma_floor"}, "threshold");
  if (block.contains("mode")) {
    const std::string mode = block.at("mode").get<std::string>();
    if (mode == "patient-dependent") {
      policy.mode = ThresholdMode::patient_dependent;
    } else if (mode == "fixed") {
      policy.mode = ThresholdMode::fixed;
    } else {
      throw std::invalid_argument("config: threshold.mode must be 'patient-dependent' or 'fixed'");
    }
  }
  policy.r = block.value("r", policy.r);
  policy.sigma_floor = block.value("sigma_floor", policy.sigma_floor);
}

void parse_cleaning(const json& block, CleaningConfig& config) {
  reject_unknown_keys(block,
                      {"validation_fraction", "stop_streak", "max_iterations",
                       "removal_min_flags", "age_bins", "strict_streak", "seed"},
                      "cleaning");
  config.validation_fraction = block.value("validation_fraction", config.validation_fraction);
  config.stop_streak = block.value("stop_streak", config.stop_streak);
  config.max_iterations = block.value("max_iterations", config.max_iterations);
  config.removal_min_flags = block.value("removal_min_flags", config.removal_min_flags);
  config.age_bins = block.value("age_bins", config.age_bins);
  config.strict_streak = block.value("strict_streak", config.strict_streak);
  if (block.contains("seed")) config.seed = block.at("seed").get<std::uint64_t>();
}

}  // namespace

RunConfig parse_run_config(const std::string& json_text) {
  json root;
  try {
    root = json::parse(json_text);
  } catch (const json::exception& e) {
    throw std::invalid_argument(std::string("config: invalid JSON: ") + e.what());
  }
  if (!root.is_object()) throw std::invalid_argument("config: top level must be an object");
  reject_unknown_keys(root,
                      {"seed", "cohort", "regressor", "threshold", "cleaning", "sweep_r_values",
                       "deviation_bin_width", "balance_bins", "chunk_exclude"},
                      "top level");

  RunConfig config;
  try {
    if (root.contains("seed")) config.seed = root.at("seed").get<std::uint64_t>();
    config.cohort.seed = config.seed;
    config.regressor.seed = config.seed;
    config.cleaning.seed = config.seed;
    if (root.contains("cohort")) parse_cohort(root.at("cohort"), config.cohort);
    if (root.contains("regressor")) parse_regressor(root.at("regressor"), config.regressor);
    if (root.contains("threshold")) parse_threshold(root.at("threshold"), config.threshold);
    if (root.contains("cleaning")) parse_cleaning(root.at("cleaning"), config.cleaning);
    if (root.contains("sweep_r_values")) {
      config.sweep_r_values = root.at("sweep_r_values").get<std::vector<double>>();
    }
    config.deviation_bin_width = root.value("deviation_bin_width", config.deviation_bin_width);
    config.balance_bins = root.value("balance_bins", config.balance_bins);
    if (root.contains("chunk_exclude")) {
      config.chunk_exclude = root.at("chunk_exclude").get<std::vector<int>>();
    }
  } catch (const json::exception& e) {
    throw std::invalid_argument(std::string("config: ") + e.what());
  }
  config.cleaning.threshold_policy = config.threshold;
  config.cleaning.regressor_config = config.regressor;
  return config;
}

RunConfig load_run_config(const std::optional<std::string>& path) {
  if (!path) return parse_run_config("{}");
  return parse_run_config(read_text(*path));
}

std::string serialize_run_config(const RunConfig& config) {
  json root;
  root["seed"] = config.seed;

  json cohort;
  json groups = json::array();
  for (const CohortGroup& g : config.cohort.groups) {
    groups.push_back({{"label", g.label},
                      {"count", g.count},
                      {"shift_mean", g.aging_shift_mean},
                      {"shift_sd", g.aging_shift_sd}});
  }
  cohort["groups"] = groups;
  cohort["ca_range"] = {config.cohort.ca_lo, config.cohort.ca_hi};
  cohort["chunks_per_patient"] = config.cohort.chunks_per_patient;
  cohort["feature_dim"] = config.cohort.feature_dim;
  cohort["informative_dims"] = config.cohort.informative_dims;
  cohort["feature_noise_sd"] = config.cohort.feature_noise_sd;
  cohort["chunk_offset_sd"] = config.cohort.chunk_offset_sd;
  cohort["gender_effect"] = config.cohort.gender_effect;
  cohort["scans_per_patient"] = config.cohort.scans_per_patient;
  cohort["seed"] = config.cohort.seed;
  root["cohort"] = cohort;

  json regressor;
  regressor["kind"] = config.regressor.kind == RegressorKind::ridge ? "ridge" : "mlp";
  regressor["hidden_layer_sizes"] = config.regressor.hidden_layer_sizes;
  regressor["learning_rate"] = config.regressor.learning_rate;
  regressor["epochs"] = config.regressor.epochs;
  regressor["batch_size"] = config.regressor.batch_size;
  regressor["l2_weight"] = config.regressor.l2_weight;
  regressor["seed"] = config.regressor.seed;
  root["regressor"] = regressor;

  json threshold;
  threshold["mode"] =
      config.threshold.mode == ThresholdMode::fixed ? "fixed" : "patient-dependent";
  threshold["r"] = config.threshold.r;
  threshold["sigma_floor"] = config.threshold.sigma_floor;
  root["threshold"] = threshold;

  json cleaning;
  cleaning["validation_fraction"] = config.cleaning.validation_fraction;
  cleaning["stop_streak"] = config.cleaning.stop_streak;
  cleaning["max_iterations"] = config.cleaning.max_iterations;
  cleaning["removal_min_flags"] = config.cleaning.removal_min_flags;
  cleaning["age_bins"] = config.cleaning.age_bins;
  cleaning["strict_streak"] = config.cleaning.strict_streak;
  cleaning["seed"] = config.cleaning.seed;
  root["cleaning"] = cleaning;

  root["sweep_r_values"] = config.sweep_r_values;
  root["deviation_bin_width"] = config.deviation_bin_width;
  root["balance_bins"] = config.balance_bins;
  root["chunk_exclude"] = config.chunk_exclude;
  return root.dump();
}

void override_seed(RunConfig& config, std::uint64_t seed) {
  config.seed = seed;
  config.cohort.seed = seed;
  config.regressor.seed = seed;
  config.cleaning.seed = seed;
  config.cleaning.regressor_config = config.regressor;
}

namespace {

std::string report_header(const std::string& command, std::uint64_t master_seed,
                          const RunConfig& config) {
  std::ostringstream out;
  out << "bioage-report 1\n";
  out << "command " << command << '\n';
  out << "master_seed " << master_seed << '\n';
  out << "config " << serialize_run_config(config) << '\n';
  return out.str();
}

std::string metrics_row(const MetricsReport& m) {
  std::ostringstream out;
  out << m.n << ',' << format_double(m.mae) << ',' << format_double(m.sd) << ','
      << format_double(m.bias) << ',' << format_double(m.rmse) << ','
      << (m.corr ? format_double(*m.corr) : "NA");
  return out.str();
}

fs::path prepare_out_dir(const std::string& out_dir) {
  const fs::path dir(out_dir);
  fs::create_directories(dir);
  return dir;
}

Dataset load_input_dataset(const RunConfig& config, const std::string& path) {
  return apply_chunk_exclusion(read_dataset(path), config.chunk_exclude);
}

std::string label_of(const Dataset& dataset, const std::string& patient_id) {
  const auto it = dataset.group_labels.find(patient_id);
  return it == dataset.group_labels.end() ? std::string() : it->second;
}

std::map<std::string, std::size_t> group_sizes_of(
    const std::map<std::string, std::vector<ChunkSample>>& groups, const Dataset& dataset) {
  std::map<std::string, std::size_t> sizes;
  for (const auto& [id, samples] : groups) ++sizes[label_of(dataset, id)];
  return sizes;
}

}  // namespace

void cmd_synth(const RunConfig& config, const std::string& out_dir, bool balance) {
  const fs::path dir = prepare_out_dir(out_dir);
  const GeneratedCohort cohort = generate(config.cohort);

  std::ostringstream report;
  report << report_header("synth", config.cohort.seed, config);
  report << "patients " << cohort.truth.size() << '\n';
  report << "rows " << cohort.dataset.samples.size() << '\n';

  if (balance) {
    const BalanceResult split =
        age_balance(cohort.dataset, config.balance_bins, config.cohort.seed);
    write_dataset((dir / "train.csv").string(), split.balanced);
    write_dataset((dir / "test.csv").string(), split.remainder);
    report << "balanced_rows " << split.balanced.samples.size() << '\n';
    report << "remainder_rows " << split.remainder.samples.size() << '\n';
  } else {
    write_dataset((dir / "dataset.csv").string(), cohort.dataset);
  }
  write_truth((dir / "truth.csv").string(), cohort.truth);
  write_text_atomic((dir / "synth_report.txt").string(), report.str());
}

void cmd_train_ca(const RunConfig& config, const std::string& data_path,
                  const std::optional<std::string>& test_path, const std::string& out_dir) {
  const fs::path dir = prepare_out_dir(out_dir);
  const Dataset train = load_input_dataset(config, data_path);
  group_chunks(train.samples);  // validate invariants before training

  const FittedRegressor fitted = fit(train.samples, config.regressor);
  if (fitted.model) save_model((dir / "model.txt").string(), *fitted.model);

  std::ostringstream report;
  report << report_header("train-ca", config.regressor.seed, config);
  const std::vector<double> trace = fitted.model ? fitted.model->loss_trace : std::vector<double>{};
  report << "epochs_run " << trace.size() << '\n';
  if (!trace.empty()) report << "final_train_loss " << format_double(trace.back()) << '\n';
  report << "[loss_trace]\n";
  report << "epoch,loss\n";
  for (std::size_t i = 0; i < trace.size(); ++i) {
    report << (i + 1) << ',' << format_double(trace[i]) << '\n';
  }

  if (test_path) {
    const Dataset test = load_input_dataset(config, *test_path);
    const auto groups = group_chunks(test.samples);
    const std::vector<PatientEstimate> estimates = aggregate_cohort(fitted.predict, groups);
    std::vector<double> predictions;
    std::vector<double> labels;
    for (const PatientEstimate& e : estimates) {
      predictions.push_back(e.predicted_age);
      labels.push_back(e.ca_label);
    }
    report << "[test_metrics]\n";
    report << "n,mae,sd,bias,rmse,corr\n";
    report << metrics_row(compute_metrics(predictions, labels)) << '\n';
  }
  write_text_atomic((dir / "train_report.txt").string(), report.str());
}

void cmd_clean(const RunConfig& config, const std::string& data_path, const std::string& out_dir) {
  const fs::path dir = prepare_out_dir(out_dir);
  const Dataset pool = load_input_dataset(config, data_path);

  CleaningConfig cleaning = config.cleaning;
  cleaning.threshold_policy = config.threshold;
  cleaning.regressor_config = config.regressor;
  const CleaningOutcome outcome = run_cleaning(pool, cleaning);
  const CleaningReport& rep = outcome.report;

  const auto groups = group_chunks(pool.samples);
  const std::map<std::string, std::size_t> group_sizes = group_sizes_of(groups, pool);

  std::ostringstream report;
  report << report_header("clean", cleaning.seed, config);
  report << "pool_patients " << groups.size() << '\n';
  report << "iterations_run " << rep.iterations.size() << '\n';
  report << "termination "
         << (rep.termination == TerminationReason::streak ? "streak" : "max-iterations") << '\n';
  report << "removed_count " << rep.removed.size() << '\n';
  report << "retained_count " << rep.retained.size() << '\n';

  report << "[iterations]\n";
  report << "iteration,train_patients,validation_patients,new_flags,flags,val_n,val_mae,val_sd,"
            "val_bias,val_rmse,val_corr\n";
  for (const IterationRecord& it : rep.iterations) {
    report << it.iteration << ',' << it.train_patients << ',' << it.validation_patients << ','
           << it.newly_flagged.size() << ',' << it.flagged.size() << ','
           << metrics_row(it.validation_metrics) << '\n';
  }

  report << "[cumulative]\n";
  report << "iteration,group_label,cumulative_flagged,group_size\n";
  for (const IterationRecord& it : rep.iterations) {
    for (const auto& [label, count] : it.cumulative_flagged_by_group) {
      report << it.iteration << ',' << label << ',' << count << ','
             << group_sizes.at(label) << '\n';
    }
  }

  report << "[flag_counts]\n";
  report << "patient_id,flag_count,group_label\n";
  for (const auto& [id, count] : rep.ledger.counts) {
    report << id << ',' << count << ',' << label_of(pool, id) << '\n';
  }

  report << "[removed]\n";
  report << "patient_id,flag_count,group_label\n";
  for (const std::string& id : rep.removed) {
    report << id << ',' << rep.ledger.count(id) << ',' << label_of(pool, id) << '\n';
  }

  report << "[retained]\n";
  report << "patient_id\n";
  for (const std::string& id : rep.retained) report << id << '\n';

  write_text_atomic((dir / "clean_report.txt").string(), report.str());

  // Flat flagged-set table across iterations.
  std::ostringstream flags;
  flags << "iteration,patient_id,deviation,threshold,cohort_label\n";
  for (const IterationRecord& it : rep.iterations) {
    for (const OutlierDecision& d : it.decisions) {
      if (!d.flagged) continue;
      flags << it.iteration << ',' << d.patient_id << ',' << format_double(d.deviation) << ','
            << format_double(d.threshold) << ',' << label_of(pool, d.patient_id) << '\n';
    }
  }
  write_text_atomic((dir / "flags.csv").string(), flags.str());

  Dataset cleaned;
  const std::set<std::string> retained(rep.retained.begin(), rep.retained.end());
  for (const ChunkSample& s : pool.samples) {
    if (retained.count(s.patient_id)) cleaned.samples.push_back(s);
  }
  for (const auto& [id, label] : pool.group_labels) {
    if (retained.count(id)) cleaned.group_labels[id] = label;
  }
  write_dataset((dir / "cleaned_dataset.csv").string(), cleaned);

  if (rep.final_model) save_model((dir / "final_model.txt").string(), *rep.final_model);
}

void cmd_sweep_r(const RunConfig& config, const std::string& data_path,
                 const std::optional<std::string>& model_path, const std::string& out_dir) {
  const fs::path dir = prepare_out_dir(out_dir);
  const Dataset dataset = load_input_dataset(config, data_path);
  const auto groups = group_chunks(dataset.samples);

  std::vector<PatientEstimate> estimates;
  if (model_path) {
    const RegressorModel model = load_model(*model_path);
    estimates = aggregate_cohort(model, groups);
  } else {
    // No model given: reproduce the first cleaning iteration's split and
    // training so the sweep lines up with cmd_clean's first flags.
    std::vector<PatientRef> roster;
    for (const auto& [id, samples] : groups) roster.push_back({id, samples.front().ca_label});
    rng::Engine split_rng = rng::make_engine(rng::derive(config.cleaning.seed, rng::kSplitStream, 1));
    auto [train_ids, val_ids] = stratified_split(roster, config.cleaning.validation_fraction,
                                                 config.cleaning.age_bins, split_rng);
    std::vector<ChunkSample> train_samples;
    for (const std::string& id : train_ids) {
      const auto& samples = groups.at(id);
      train_samples.insert(train_samples.end(), samples.begin(), samples.end());
    }
    RegressorConfig reg_config = config.regressor;
    reg_config.seed = rng::derive(config.cleaning.seed, rng::kTrainStream, 1);
    const FittedRegressor fitted = fit(train_samples, reg_config);
    std::map<std::string, std::vector<ChunkSample>> val_groups;
    for (const std::string& id : val_ids) val_groups.emplace(id, groups.at(id));
    estimates = aggregate_cohort(fitted.predict, val_groups);
  }

  const std::vector<SweepRow> rows = sweep_r(estimates, config.sweep_r_values,
                                             dataset.group_labels);

  std::ostringstream report;
  report << report_header("sweep-r", config.cleaning.seed, config);
  report << "estimates " << estimates.size() << '\n';
  report << "[sweep]\n";
  report << "r,cohort_label,flagged_count,cohort_size\n";
  for (const SweepRow& row : rows) {
    report << format_double(row.r) << ',' << row.cohort_label << ',' << row.flagged_count << ','
           << row.cohort_size << '\n';
  }

  // Fixed-threshold comparison rows.
  {
    ThresholdPolicy fixed;
    fixed.mode = ThresholdMode::fixed;
    std::map<std::string, std::size_t> sizes;
    std::map<std::string, std::size_t> counts;
    for (const PatientEstimate& e : estimates) {
      ++sizes[label_of(dataset, e.patient_id)];
    }
    for (const auto& [label, size] : sizes) counts[label] = 0;
    for (const OutlierDecision& d : detect(estimates, fixed)) {
      if (d.flagged) ++counts[label_of(dataset, d.patient_id)];
    }
    for (const auto& [label, count] : counts) {
      report << "fixed," << label << ',' << count << ',' << sizes.at(label) << '\n';
    }
  }
  write_text_atomic((dir / "sweep_report.txt").string(), report.str());
}

void cmd_report_deviations(const RunConfig& config, const std::string& model_path,
                           const std::string& data_path, const std::string& out_dir) {
  const fs::path dir = prepare_out_dir(out_dir);
  const RegressorModel model = load_model(model_path);
  const Dataset test = load_input_dataset(config, data_path);
  const std::map<std::string, GroupEvaluation> evaluations = evaluate_final(model, test);

  const double width = config.deviation_bin_width;
  if (!(width > 0.0)) throw std::invalid_argument("deviation_bin_width must be positive");

  double min_dev = 0.0;
  double max_dev = 0.0;
  bool first = true;
  for (const auto& [label, eval] : evaluations) {
    for (const auto& [id, dev] : eval.signed_deviations) {
      min_dev = first ? dev : std::min(min_dev, dev);
      max_dev = first ? dev : std::max(max_dev, dev);
      first = false;
    }
  }
  // Bin grid anchored at multiples of the width, covering
  // [min deviation - width, max deviation + width].
  const double lo_edge = std::floor((min_dev - width) / width) * width;
  const int bin_count =
      static_cast<int>(std::ceil(((max_dev + width) - lo_edge) / width));

  std::ostringstream report;
  report << report_header("report-deviations", config.seed, config);
  report << "bin_width " << format_double(width) << '\n';
  report << "[group_means]\n";
  report << "group_label,count,mean_deviation\n";
  for (const auto& [label, eval] : evaluations) {
    report << label << ',' << eval.signed_deviations.size() << ','
           << format_double(eval.mean_deviation) << '\n';
  }
  report << "[histogram]\n";
  report << "group_label,bin_lo,bin_hi,count\n";
  for (const auto& [label, eval] : evaluations) {
    std::vector<std::size_t> counts(static_cast<std::size_t>(bin_count), 0);
    for (const auto& [id, dev] : eval.signed_deviations) {
      int b = static_cast<int>(std::floor((dev - lo_edge) / width));
      b = std::clamp(b, 0, bin_count - 1);
      ++counts[static_cast<std::size_t>(b)];
    }
    for (int b = 0; b < bin_count; ++b) {
      report << label << ',' << format_double(lo_edge + b * width) << ','
             << format_double(lo_edge + (b + 1) * width) << ',' << counts[b] << '\n';
    }
  }
  write_text_atomic((dir / "deviations_report.txt").string(), report.str());
}

void cmd_evaluate(const RunConfig& config, const std::string& model_path,
                  const std::string& data_path, const std::string& out_dir) {
  const fs::path dir = prepare_out_dir(out_dir);
  const RegressorModel model = load_model(model_path);
  const Dataset test = load_input_dataset(config, data_path);
  const std::map<std::string, GroupEvaluation> evaluations = evaluate_final(model, test);

  std::ostringstream report;
  report << report_header("evaluate", config.seed, config);
  report << "[group_metrics]\n";
  report << "group_label,n,mae,sd,bias,rmse,corr,mean_deviation\n";
  for (const auto& [label, eval] : evaluations) {
    report << label << ',' << metrics_row(eval.metrics) << ','
           << format_double(eval.mean_deviation) << '\n';
  }
  report << "[deviations]\n";
  report << "group_label,patient_id,signed_deviation\n";
  for (const auto& [label, eval] : evaluations) {
    for (const auto& [id, dev] : eval.signed_deviations) {
      report << label << ',' << id << ',' << format_double(dev) << '\n';
    }
  }
  write_text_atomic((dir / "evaluation_report.txt").string(), report.str());
}

int run_cli(const std::vector<std::string>& args) {
  CLI::App app{"bioage: iterative data-cleaning for age regression on chunked cohorts"};
  app.require_subcommand(1);

  std::optional<std::string> config_path;
  std::optional<std::uint64_t> seed_override;
  std::string out_dir = ".";
  std::string data_path;
  std::string model_path;
  std::optional<std::string> test_path;
  std::optional<std::string> sweep_model_path;
  bool balance = false;

  auto add_common = [&](CLI::App* cmd) {
    cmd->add_option("--config", config_path, "JSON run configuration");
    cmd->add_option("--seed", seed_override, "Override every configured seed");
    cmd->add_option("--out", out_dir, "Output directory")->required();
  };

  CLI::App* synth = app.add_subcommand("synth", "Generate a synthetic cohort dataset");
  add_common(synth);
  synth->add_flag("--balance", balance, "Emit age-balanced train and remainder test files");

  CLI::App* train = app.add_subcommand("train-ca", "Train an age regressor on CA labels");
  add_common(train);
  train->add_option("--data", data_path, "Training dataset")->required();
  train->add_option("--test", test_path, "Optional held-out dataset for metrics");

  CLI::App* clean = app.add_subcommand("clean", "Run the iterative data-cleaning loop");
  add_common(clean);
  clean->add_option("--data", data_path, "Training pool dataset")->required();

  CLI::App* sweep = app.add_subcommand("sweep-r", "Flag counts across threshold parameters");
  add_common(sweep);
  sweep->add_option("--data", data_path, "Dataset")->required();
  sweep->add_option("--model", sweep_model_path, "Aggregate with this model over the whole dataset");

  CLI::App* devs = app.add_subcommand("report-deviations", "Per-group deviation histograms");
  add_common(devs);
  devs->add_option("--model", model_path, "Model file")->required();
  devs->add_option("--data", data_path, "Test dataset")->required();

  CLI::App* eval = app.add_subcommand("evaluate", "Per-group metrics and deviations");
  add_common(eval);
  eval->add_option("--model", model_path, "Model file")->required();
  eval->add_option("--data", data_path, "Test dataset")->required();

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? 0 : 1;
  }

  try {
    RunConfig config = load_run_config(config_path);
    if (seed_override) override_seed(config, *seed_override);
    if (synth->parsed()) {
      cmd_synth(config, out_dir, balance);
    } else if (train->parsed()) {
      cmd_train_ca(config, data_path, test_path, out_dir);
    } else if (clean->parsed()) {
      cmd_clean(config, data_path, out_dir);
    } else if (sweep->parsed()) {
      cmd_sweep_r(config, data_path, sweep_model_path, out_dir);
    } else if (devs->parsed()) {
      cmd_report_deviations(config, model_path, data_path, out_dir);
    } else if (eval->parsed()) {
      cmd_evaluate(config, model_path, data_path, out_dir);
    }
  } catch (const std::invalid_argument& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  } catch (const DataError& e) {
    std::cerr << "data error: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "failure: " << e.what() << '\n';
    return 3;
  }
  return 0;
}

}  // namespace bioage::cli
