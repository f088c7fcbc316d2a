#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "bioage/core.hpp"
#include "bioage/outlier.hpp"
#include "bioage/regressor.hpp"
#include "bioage/rng.hpp"
#include "bioage/synth.hpp"

namespace bioage {

// Iterative data-cleaning configuration. removal_min_flags = 2 encodes
// "flagged in more than one iteration"; stop_streak = 3 encodes the
// three-consecutive-quiet-iterations stopping condition.
struct CleaningConfig {
  double validation_fraction = 0.2;
  int stop_streak = 3;
  int max_iterations = 50;
  int removal_min_flags = 2;
  int age_bins = 10;
  // With strict_streak the streak resets on any flag; by default only a
  // first-time flag resets it, so re-flagging a known outlier does not
  // prolong the run.
  bool strict_streak = false;
  std::uint64_t seed = 0;
  ThresholdPolicy threshold_policy;
  RegressorConfig regressor_config;
};

// Cumulative per-patient flag counts across iterations.
struct FlagLedger {
  std::map<std::string, int> counts;
  std::vector<std::vector<std::string>> per_iteration;  // sorted flagged ids

  void record(const std::vector<std::string>& flagged);
  int count(const std::string& patient_id) const;
};

struct IterationRecord {
  int iteration = 0;  // 1-based
  std::size_t train_patients = 0;
  std::size_t validation_patients = 0;
  std::vector<std::string> flagged;        // sorted, this iteration's validation flags
  std::vector<std::string> newly_flagged;  // sorted, first-time flags
  std::map<std::string, std::size_t> cumulative_flagged_by_group;
  std::vector<OutlierDecision> decisions;  // validation decisions, patient order
  MetricsReport validation_metrics;        // patient-level predicted vs CA
};

enum class TerminationReason { streak, max_iterations };

struct CleaningReport {
  CleaningConfig config;
  std::vector<IterationRecord> iterations;
  TerminationReason termination = TerminationReason::max_iterations;
  FlagLedger ledger;
  std::vector<std::string> removed;   // sorted; flag count >= removal_min_flags
  std::vector<std::string> retained;  // sorted; the cleaned training cohort
  std::optional<RegressorModel> final_model;
};

// Raised when removal empties the pool; carries the evidence.
struct EmptyRetainedPoolError : std::runtime_error {
  FlagLedger ledger;
  explicit EmptyRetainedPoolError(FlagLedger l)
      : std::runtime_error("cleaning removed every patient; nothing left to train on"),
        ledger(std::move(l)) {}
};

struct PatientRef {
  std::string id;
  double ca = 0.0;
};

// Shuffle-and-split within equal-width age bins spanning [min CA, max CA],
// so both sides keep the cohort's age balance. Guarantees both sides
// nonempty. Deterministic given the engine state.
std::pair<std::vector<std::string>, std::vector<std::string>> stratified_split(
    const std::vector<PatientRef>& patients, double validation_fraction, int age_bins,
    rng::Engine& engine);

// One cleaning pass: stratified split, fresh regressor trained from scratch
// on the training side (seed derived from config.seed and the iteration
// index), aggregation and outlier detection on the validation side, ledger
// update. Flagged patients stay in the pool; removal is terminal only.
IterationRecord run_iteration(const Dataset& pool, FlagLedger& ledger,
                              const CleaningConfig& config, int iteration,
                              const TrainerFn& trainer);

struct CleaningOutcome {
  CleaningReport report;
  FittedRegressor final_regressor;
};

// Full loop: iterate until stop_streak consecutive quiet iterations or
// max_iterations, remove patients flagged in at least removal_min_flags
// iterations, then retrain from scratch on the retained cohort.
CleaningOutcome run_cleaning(const Dataset& pool, const CleaningConfig& config,
                             const TrainerFn& trainer = builtin_trainer());

struct GroupEvaluation {
  std::vector<std::pair<std::string, double>> signed_deviations;  // (patient, predicted - CA)
  double mean_deviation = 0.0;
  MetricsReport metrics;  // patient-level
};

// Per-cohort-label deviation samples and metrics on a held-out test cohort.
// The test cohort must be disjoint from the training pool; that is the
// caller's contract.
std::map<std::string, GroupEvaluation> evaluate_final(
    const std::function<double(const ChunkSample&)>& predictor, const Dataset& test_cohort);

std::map<std::string, GroupEvaluation> evaluate_final(const RegressorModel& model,
                                                      const Dataset& test_cohort);

}  // namespace bioage
