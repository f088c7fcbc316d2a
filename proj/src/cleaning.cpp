#include "bioage/cleaning.hpp"

#include <algorithm>
#include <cmath>
#include <set>

#include "bioage/aggregate.hpp"

namespace bioage {

namespace {

void validate_config(const CleaningConfig& config) {
  if (!(config.validation_fraction > 0.0 && config.validation_fraction < 1.0)) {
    throw std::invalid_argument("cleaning: validation_fraction must be in (0, 1)");
  }
  if (config.stop_streak < 1) throw std::invalid_argument("cleaning: stop_streak must be >= 1");
  if (config.max_iterations < 1) {
    throw std::invalid_argument("cleaning: max_iterations must be >= 1");
  }
  if (config.removal_min_flags < 2) {
    throw std::invalid_argument(
        "cleaning: removal_min_flags must be >= 2 (removal requires flags in more than one "
        "iteration)");
  }
  if (config.age_bins < 1) throw std::invalid_argument("cleaning: age_bins must be >= 1");
}

std::vector<PatientRef> patient_roster(
    const std::map<std::string, std::vector<ChunkSample>>& groups) {
  std::vector<PatientRef> roster;
  roster.reserve(groups.size());
  for (const auto& [id, samples] : groups) roster.push_back({id, samples.front().ca_label});
  return roster;
}

std::vector<ChunkSample> collect_samples(
    const std::map<std::string, std::vector<ChunkSample>>& groups,
    const std::vector<std::string>& ids) {
  std::vector<ChunkSample> out;
  for (const std::string& id : ids) {
    const auto& samples = groups.at(id);
    out.insert(out.end(), samples.begin(), samples.end());
  }
  return out;
}

std::string group_label_of(const Dataset& pool, const std::string& patient_id) {
  const auto it = pool.group_labels.find(patient_id);
  return it == pool.group_labels.end() ? std::string() : it->second;
}

}  // namespace

void FlagLedger::record(const std::vector<std::string>& flagged) {
  std::vector<std::string> sorted = flagged;
  std::sort(sorted.begin(), sorted.end());
  for (const std::string& id : sorted) ++counts[id];
  per_iteration.push_back(std::move(sorted));
}

int FlagLedger::count(const std::string& patient_id) const {
  const auto it = counts.find(patient_id);
  return it == counts.end() ? 0 : it->second;
}

std::pair<std::vector<std::string>, std::vector<std::string>> stratified_split(
    const std::vector<PatientRef>& patients, double validation_fraction, int age_bins,
    rng::Engine& engine) {
  if (patients.size() < 2) {
    throw std::invalid_argument("stratified_split: need at least 2 patients");
  }
  if (!(validation_fraction > 0.0 && validation_fraction < 1.0)) {
    throw std::invalid_argument("stratified_split: fraction must be in (0, 1)");
  }
  if (age_bins < 1) throw std::invalid_argument("stratified_split: need age_bins >= 1");

  double lo = patients.front().ca;
  double hi = lo;
  for (const PatientRef& p : patients) {
    lo = std::min(lo, p.ca);
    hi = std::max(hi, p.ca);
  }
  const double width = (hi - lo) / static_cast<double>(age_bins);
  auto bin_of = [&](double ca) {
    if (width <= 0.0) return 0;
    return std::clamp(static_cast<int>((ca - lo) / width), 0, age_bins - 1);
  };

  std::vector<std::vector<std::string>> bins(age_bins);
  for (const PatientRef& p : patients) bins[bin_of(p.ca)].push_back(p.id);

  std::vector<std::string> train;
  std::vector<std::string> validation;
  for (std::vector<std::string>& bin : bins) {
    rng::shuffle(bin, engine);
    const auto val_count = static_cast<std::size_t>(
        std::llround(static_cast<double>(bin.size()) * validation_fraction));
    for (std::size_t i = 0; i < bin.size(); ++i) {
      (i < val_count ? validation : train).push_back(bin[i]);
    }
  }

  // Rounding can leave one side empty on small cohorts; both sides must be
  // usable, so move one patient over deterministically.
  if (validation.empty()) {
    validation.push_back(train.back());
    train.pop_back();
  } else if (train.empty()) {
    train.push_back(validation.back());
    validation.pop_back();
  }
  std::sort(train.begin(), train.end());
  std::sort(validation.begin(), validation.end());
  return {std::move(train), std::move(validation)};
}

IterationRecord run_iteration(const Dataset& pool, FlagLedger& ledger,
                              const CleaningConfig& config, int iteration,
                              const TrainerFn& trainer) {
  validate_config(config);
  if (pool.samples.empty()) throw std::invalid_argument("run_iteration: empty pool");

  const auto groups = group_chunks(pool.samples);
  const std::vector<PatientRef> roster = patient_roster(groups);

  rng::Engine split_rng = rng::make_engine(
      rng::derive(config.seed, rng::kSplitStream, static_cast<std::uint64_t>(iteration)));
  auto [train_ids, val_ids] =
      stratified_split(roster, config.validation_fraction, config.age_bins, split_rng);

  // Fresh model from scratch, with this iteration's own initialization.
  RegressorConfig reg_config = config.regressor_config;
  reg_config.seed = rng::derive(config.seed, rng::kTrainStream, static_cast<std::uint64_t>(iteration));
  const FittedRegressor fitted = trainer(collect_samples(groups, train_ids), reg_config);

  std::map<std::string, std::vector<ChunkSample>> val_groups;
  for (const std::string& id : val_ids) val_groups.emplace(id, groups.at(id));
  const std::vector<PatientEstimate> estimates = aggregate_cohort(fitted.predict, val_groups);
  const std::vector<OutlierDecision> decisions = detect(estimates, config.threshold_policy);

  IterationRecord record;
  record.iteration = iteration;
  record.train_patients = train_ids.size();
  record.validation_patients = val_ids.size();
  record.decisions = decisions;
  for (const OutlierDecision& d : decisions) {
    if (!d.flagged) continue;
    record.flagged.push_back(d.patient_id);
    if (ledger.count(d.patient_id) == 0) record.newly_flagged.push_back(d.patient_id);
  }
  std::sort(record.flagged.begin(), record.flagged.end());
  std::sort(record.newly_flagged.begin(), record.newly_flagged.end());
  ledger.record(record.flagged);

  // Cumulative distinct flagged patients per cohort label, including labels
  // that have no flags yet.
  for (const auto& [id, label] : pool.group_labels) {
    record.cumulative_flagged_by_group.emplace(label, 0);
  }
  for (const auto& [id, count] : ledger.counts) {
    if (count > 0) ++record.cumulative_flagged_by_group[group_label_of(pool, id)];
  }

  std::vector<double> predictions;
  std::vector<double> labels;
  predictions.reserve(estimates.size());
  labels.reserve(estimates.size());
  for (const PatientEstimate& e : estimates) {
    predictions.push_back(e.predicted_age);
    labels.push_back(e.ca_label);
  }
  record.validation_metrics = compute_metrics(predictions, labels);
  return record;
}

CleaningOutcome run_cleaning(const Dataset& pool, const CleaningConfig& config,
                             const TrainerFn& trainer) {
  validate_config(config);
  if (pool.samples.empty()) throw std::invalid_argument("run_cleaning: empty pool");

  CleaningReport report;
  report.config = config;

  int streak = 0;
  for (int iteration = 1; iteration <= config.max_iterations; ++iteration) {
    IterationRecord record = run_iteration(pool, report.ledger, config, iteration, trainer);
    const bool quiet =
        config.strict_streak ? record.flagged.empty() : record.newly_flagged.empty();
    streak = quiet ? streak + 1 : 0;
    report.iterations.push_back(std::move(record));
    if (streak >= config.stop_streak) {
      report.termination = TerminationReason::streak;
      break;
    }
  }

  const auto groups = group_chunks(pool.samples);
  for (const auto& [id, samples] : groups) {
    if (report.ledger.count(id) >= config.removal_min_flags) {
      report.removed.push_back(id);
    } else {
      report.retained.push_back(id);
    }
  }
  if (report.retained.empty()) {
    throw EmptyRetainedPoolError(report.ledger);
  }

  RegressorConfig reg_config = config.regressor_config;
  reg_config.seed = rng::derive(config.seed, rng::kFinalStream);
  FittedRegressor final_regressor = trainer(collect_samples(groups, report.retained), reg_config);
  report.final_model = final_regressor.model;
  return {std::move(report), std::move(final_regressor)};
}

std::map<std::string, GroupEvaluation> evaluate_final(
    const std::function<double(const ChunkSample&)>& predictor, const Dataset& test_cohort) {
  if (test_cohort.samples.empty()) {
    throw std::invalid_argument("evaluate_final: empty test cohort");
  }
  const auto groups = group_chunks(test_cohort.samples);
  const std::vector<PatientEstimate> estimates = aggregate_cohort(predictor, groups);

  std::map<std::string, GroupEvaluation> evaluations;
  std::map<std::string, std::pair<std::vector<double>, std::vector<double>>> paired;
  for (const PatientEstimate& e : estimates) {
    const std::string label = group_label_of(test_cohort, e.patient_id);
    const double signed_dev = e.predicted_age - e.ca_label;
    evaluations[label].signed_deviations.emplace_back(e.patient_id, signed_dev);
    paired[label].first.push_back(e.predicted_age);
    paired[label].second.push_back(e.ca_label);
  }
  for (auto& [label, eval] : evaluations) {
    double sum = 0.0;
    for (const auto& [id, dev] : eval.signed_deviations) sum += dev;
    eval.mean_deviation = sum / static_cast<double>(eval.signed_deviations.size());
    eval.metrics = compute_metrics(paired.at(label).first, paired.at(label).second);
  }
  return evaluations;
}

std::map<std::string, GroupEvaluation> evaluate_final(const RegressorModel& model,
                                                      const Dataset& test_cohort) {
  return evaluate_final([&model](const ChunkSample& s) { return predict(model, s); },
                        test_cohort);
}

}  // namespace bioage
