#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <set>

#include "bioage/cleaning.hpp"
#include "bioage/synth.hpp"

using namespace bioage;

namespace {

// Trainer double that predicts the label exactly: D = 0 for everyone.
TrainerFn perfect_oracle() {
  return [](const std::vector<ChunkSample>&, const RegressorConfig&) {
    FittedRegressor fitted;
    fitted.predict = [](const ChunkSample& s) { return s.ca_label; };
    return fitted;
  };
}

// Trainer double that over-ages everybody by a constant.
TrainerFn overager(double years) {
  return [years](const std::vector<ChunkSample>&, const RegressorConfig&) {
    FittedRegressor fitted;
    fitted.predict = [years](const ChunkSample& s) { return s.ca_label + years; };
    return fitted;
  };
}

CleaningConfig ridge_config(std::uint64_t seed) {
  CleaningConfig config;
  config.seed = seed;
  config.regressor_config.kind = RegressorKind::ridge;
  config.regressor_config.l2_weight = 1e-6;
  return config;
}

Dataset typical_pool(std::uint64_t seed, int patients = 60) {
  CohortSpec spec;
  spec.groups = {{"typical", patients, 0.0, 0.0}};
  spec.seed = seed;
  return generate(spec).dataset;
}

std::vector<PatientRef> uniform_patients(int n, double lo = 50.0, double hi = 90.0) {
  std::vector<PatientRef> out;
  for (int i = 0; i < n; ++i) {
    char buf[16];
    std::snprintf(buf, sizeof(buf), "p%03d", i);
    out.push_back({buf, lo + (hi - lo) * (i + 0.5) / n});
  }
  return out;
}

}  // namespace

TEST_CASE("stratified_split: 10 patients at fraction 0.2 go 8/2") {
  rng::Engine eng = rng::make_engine(1);
  const auto [train, val] = stratified_split(uniform_patients(10), 0.2, 1, eng);
  CHECK(train.size() == 8);
  CHECK(val.size() == 2);
}

TEST_CASE("stratified_split: every bin contributes its own 8/2") {
  // 100 patients, 10 per bin after equal-width binning over [50, 90].
  std::vector<PatientRef> patients;
  for (int bin = 0; bin < 10; ++bin) {
    for (int i = 0; i < 10; ++i) {
      char buf[16];
      std::snprintf(buf, sizeof(buf), "p%02d_%d", bin, i);
      patients.push_back({buf, 50.0 + 4.0 * bin + 0.2 + 0.3 * i});
    }
  }
  rng::Engine eng = rng::make_engine(2);
  const auto [train, val] = stratified_split(patients, 0.2, 10, eng);
  CHECK(train.size() == 80);
  CHECK(val.size() == 20);
  // check the 8/2 ratio holds inside each bin
  std::map<int, int> val_per_bin;
  for (const std::string& id : val) ++val_per_bin[std::stoi(id.substr(1, 2))];
  for (const auto& [bin, count] : val_per_bin) CHECK(count == 2);
  CHECK(val_per_bin.size() == 10);
}

TEST_CASE("stratified_split: deterministic given the engine state") {
  const auto patients = uniform_patients(37);
  rng::Engine a = rng::make_engine(33);
  rng::Engine b = rng::make_engine(33);
  CHECK(stratified_split(patients, 0.3, 5, a) == stratified_split(patients, 0.3, 5, b));
  rng::Engine c = rng::make_engine(34);
  CHECK(stratified_split(patients, 0.3, 5, a) != stratified_split(patients, 0.3, 5, c));
}

TEST_CASE("stratified_split: both sides stay nonempty on tiny cohorts") {
  rng::Engine eng = rng::make_engine(3);
  const auto [train, val] = stratified_split(uniform_patients(2), 0.2, 10, eng);
  CHECK(train.size() == 1);
  CHECK(val.size() == 1);
  rng::Engine eng2 = rng::make_engine(3);
  CHECK_THROWS_AS(stratified_split(uniform_patients(1), 0.2, 10, eng2), std::invalid_argument);
}

TEST_CASE("run_iteration: a perfect oracle flags nobody") {
  const Dataset pool = typical_pool(7);
  CleaningConfig config = ridge_config(7);
  FlagLedger ledger;
  const IterationRecord record = run_iteration(pool, ledger, config, 1, perfect_oracle());
  CHECK(record.flagged.empty());
  CHECK(record.newly_flagged.empty());
  CHECK(record.train_patients + record.validation_patients == 60);
  CHECK(record.validation_metrics.mae < 1e-12);  // chunk averaging rounds in the last ulps
  CHECK(ledger.per_iteration.size() == 1);
}

TEST_CASE("run_iteration: a label-shifted patient is flagged whenever it lands in validation") {
  CohortSpec spec;
  spec.groups = {{"typical", 40, 0.0, 0.0}, {"shifted", 1, 20.0, 0.0}};
  spec.seed = 11;
  const Dataset pool = generate(spec).dataset;
  std::string shifted_id;
  for (const auto& [id, label] : pool.group_labels) {
    if (label == "shifted") shifted_id = id;
  }
  REQUIRE_FALSE(shifted_id.empty());

  CleaningConfig config = ridge_config(11);
  int in_validation = 0;
  int flagged = 0;
  for (int iteration = 1; iteration <= 12; ++iteration) {
    FlagLedger ledger;
    const IterationRecord record =
        run_iteration(pool, ledger, config, iteration, builtin_trainer());
    const bool was_flagged =
        std::find(record.flagged.begin(), record.flagged.end(), shifted_id) !=
        record.flagged.end();
    // flagged implies it sat in the validation subset this iteration
    bool in_val = false;
    for (const OutlierDecision& d : record.decisions) in_val |= d.patient_id == shifted_id;
    if (in_val) {
      ++in_validation;
      CHECK(was_flagged);
      ++flagged;
    } else {
      CHECK_FALSE(was_flagged);
    }
  }
  CHECK(in_validation > 0);
  CHECK(flagged == in_validation);
}

TEST_CASE("run_iteration: identical inputs give identical records") {
  const Dataset pool = typical_pool(13);
  CleaningConfig config = ridge_config(13);
  FlagLedger a;
  FlagLedger b;
  const IterationRecord ra = run_iteration(pool, a, config, 3, builtin_trainer());
  const IterationRecord rb = run_iteration(pool, b, config, 3, builtin_trainer());
  CHECK(ra.flagged == rb.flagged);
  CHECK(ra.train_patients == rb.train_patients);
  CHECK(ra.validation_metrics.mae == rb.validation_metrics.mae);
  REQUIRE(ra.decisions.size() == rb.decisions.size());
  for (std::size_t i = 0; i < ra.decisions.size(); ++i) {
    CHECK(ra.decisions[i].deviation == rb.decisions[i].deviation);
    CHECK(ra.decisions[i].threshold == rb.decisions[i].threshold);
  }
}

TEST_CASE("run_cleaning: all-typical pool with a perfect oracle stops after the streak") {
  const Dataset pool = typical_pool(17);
  CleaningConfig config = ridge_config(17);
  const CleaningOutcome outcome = run_cleaning(pool, config, perfect_oracle());
  CHECK(outcome.report.iterations.size() == 3);  // exactly stop_streak
  CHECK(outcome.report.termination == TerminationReason::streak);
  CHECK(outcome.report.removed.empty());
  CHECK(outcome.report.retained.size() == 60);
  CHECK_FALSE(outcome.report.final_model.has_value());  // oracle has no model
}

TEST_CASE("run_cleaning: noiseless typical cohort with the real ridge flags nobody") {
  const Dataset pool = typical_pool(19);
  CleaningConfig config = ridge_config(19);
  const CleaningOutcome outcome = run_cleaning(pool, config);
  CHECK(outcome.report.iterations.size() == 3);
  CHECK(outcome.report.termination == TerminationReason::streak);
  CHECK(outcome.report.removed.empty());
  REQUIRE(outcome.report.final_model.has_value());
}

TEST_CASE("run_cleaning: max_iterations 1 cannot remove anyone") {
  CohortSpec spec;
  spec.groups = {{"typical", 30, 0.0, 0.0}, {"shifted", 5, 25.0, 0.0}};
  spec.seed = 23;
  const Dataset pool = generate(spec).dataset;
  CleaningConfig config = ridge_config(23);
  config.max_iterations = 1;
  const CleaningOutcome outcome = run_cleaning(pool, config);
  CHECK(outcome.report.iterations.size() == 1);
  CHECK(outcome.report.termination == TerminationReason::max_iterations);
  CHECK(outcome.report.removed.empty());  // one flag never reaches removal_min_flags
}

TEST_CASE("run_cleaning: removal slice matches a brute-force ledger recount") {
  CohortSpec spec;
  spec.groups = {{"typical", 50, 0.0, 1.0}, {"shifted", 12, 10.0, 1.0}};
  spec.seed = 29;
  const Dataset pool = generate(spec).dataset;
  CleaningConfig config = ridge_config(29);
  config.max_iterations = 15;
  const CleaningOutcome outcome = run_cleaning(pool, config);
  const CleaningReport& report = outcome.report;

  // recount flags from the per-iteration sets
  std::map<std::string, int> recount;
  for (const auto& flagged : report.ledger.per_iteration) {
    for (const std::string& id : flagged) ++recount[id];
  }
  std::set<std::string> removed_expected;
  for (const auto& [id, count] : recount) {
    if (count >= config.removal_min_flags) removed_expected.insert(id);
  }
  CHECK(std::set<std::string>(report.removed.begin(), report.removed.end()) == removed_expected);
  CHECK(recount == std::map<std::string, int>(report.ledger.counts.begin(),
                                              report.ledger.counts.end()));

  // retained and removed partition the pool
  const auto groups = group_chunks(pool.samples);
  CHECK(report.removed.size() + report.retained.size() == groups.size());
  for (const std::string& id : report.removed) {
    CHECK_FALSE(std::binary_search(report.retained.begin(), report.retained.end(), id));
  }

  // pool never shrinks mid-run
  for (const IterationRecord& record : report.iterations) {
    CHECK(record.train_patients + record.validation_patients == groups.size());
  }

  // cumulative per-group counts never decrease
  std::map<std::string, std::size_t> last;
  for (const IterationRecord& record : report.iterations) {
    for (const auto& [label, count] : record.cumulative_flagged_by_group) {
      if (last.count(label)) CHECK(count >= last[label]);
      last[label] = count;
    }
  }

  CHECK(report.iterations.size() <= static_cast<std::size_t>(config.max_iterations));
}

TEST_CASE("run_cleaning: bit-identical flagged and removed sets across runs") {
  CohortSpec spec;
  spec.groups = {{"typical", 40, 0.0, 1.0}, {"shifted", 8, 9.0, 1.0}};
  spec.seed = 37;
  const Dataset pool = generate(spec).dataset;
  const CleaningConfig config = ridge_config(37);
  const CleaningOutcome a = run_cleaning(pool, config);
  const CleaningOutcome b = run_cleaning(pool, config);
  CHECK(a.report.removed == b.report.removed);
  CHECK(a.report.retained == b.report.retained);
  REQUIRE(a.report.iterations.size() == b.report.iterations.size());
  for (std::size_t i = 0; i < a.report.iterations.size(); ++i) {
    CHECK(a.report.iterations[i].flagged == b.report.iterations[i].flagged);
  }
  REQUIRE(a.report.final_model.has_value());
  REQUIRE(b.report.final_model.has_value());
  CHECK(serialize_model(*a.report.final_model) == serialize_model(*b.report.final_model));
}

TEST_CASE("run_cleaning: strict streak keeps running while re-flags continue") {
  const Dataset pool = typical_pool(41, 10);
  CleaningConfig config = ridge_config(41);
  config.max_iterations = 40;
  config.validation_fraction = 0.5;
  config.age_bins = 1;  // every patient cycles through validation

  // Over-age half the cohort: those patients are flagged on every
  // validation appearance, the rest never are.
  const TrainerFn half_overager = [](const std::vector<ChunkSample>&, const RegressorConfig&) {
    FittedRegressor fitted;
    fitted.predict = [](const ChunkSample& s) {
      const int digit = s.patient_id.back() - '0';
      return s.ca_label + (digit % 2 ? 30.0 : 0.0);
    };
    return fitted;
  };

  // Default streak: once every odd patient has been flagged at least once,
  // no first-time flags remain and the run stops early.
  const CleaningOutcome relaxed = run_cleaning(pool, config, half_overager);
  CHECK(relaxed.report.termination == TerminationReason::streak);
  CHECK(relaxed.report.iterations.size() < 40);

  // Strict streak: re-flags keep resetting it, so the run hits the cap.
  config.strict_streak = true;
  const CleaningOutcome strict = run_cleaning(pool, config, half_overager);
  CHECK(strict.report.termination == TerminationReason::max_iterations);
  CHECK(strict.report.iterations.size() == 40);
}

TEST_CASE("run_cleaning: removing everyone is a hard error carrying the ledger") {
  const Dataset pool = typical_pool(43, 12);
  CleaningConfig config = ridge_config(43);
  // strict streak plus a flag-everything model runs to the iteration cap,
  // by which point every patient has several flags
  config.strict_streak = true;
  config.max_iterations = 40;
  config.validation_fraction = 0.4;
  config.age_bins = 1;
  try {
    run_cleaning(pool, config, overager(50.0));
    FAIL("expected EmptyRetainedPoolError");
  } catch (const EmptyRetainedPoolError& e) {
    CHECK_FALSE(e.ledger.counts.empty());
    int max_count = 0;
    for (const auto& [id, count] : e.ledger.counts) max_count = std::max(max_count, count);
    CHECK(max_count >= 2);
  }
}

TEST_CASE("run_cleaning: config validation") {
  const Dataset pool = typical_pool(47, 10);
  CleaningConfig config = ridge_config(47);
  config.removal_min_flags = 1;
  CHECK_THROWS_AS(run_cleaning(pool, config), std::invalid_argument);
  config = ridge_config(47);
  config.validation_fraction = 1.0;
  CHECK_THROWS_AS(run_cleaning(pool, config), std::invalid_argument);
  config = ridge_config(47);
  CHECK_THROWS_AS(run_cleaning(Dataset{}, config), std::invalid_argument);
}

TEST_CASE("evaluate_final: perfect oracle has zero deviations") {
  const Dataset test = typical_pool(53, 15);
  const auto evals = evaluate_final([](const ChunkSample& s) { return s.ca_label; }, test);
  REQUIRE(evals.count("typical") == 1);
  const GroupEvaluation& eval = evals.at("typical");
  CHECK(eval.signed_deviations.size() == 15);
  for (const auto& [id, dev] : eval.signed_deviations) CHECK(std::abs(dev) < 1e-12);
  CHECK(std::abs(eval.mean_deviation) < 1e-12);
  CHECK(eval.metrics.mae < 1e-12);
  CHECK_THROWS_AS(evaluate_final([](const ChunkSample& s) { return s.ca_label; }, Dataset{}),
                  std::invalid_argument);
}

TEST_CASE("evaluate_final: cleaned model recovers an injected +8 shift on held-out data") {
  CohortSpec train_spec;
  train_spec.groups = {{"typical", 80, 0.0, 1.0}, {"moderate", 16, 8.0, 2.0}};
  train_spec.seed = 59;
  const Dataset pool = generate(train_spec).dataset;

  CleaningConfig config = ridge_config(59);
  const CleaningOutcome cleaned = run_cleaning(pool, config);
  const FittedRegressor ca_model = fit(pool.samples, config.regressor_config);

  CohortSpec test_spec = train_spec;
  test_spec.groups = {{"typical", 60, 0.0, 1.0}, {"moderate", 20, 8.0, 2.0}};
  test_spec.seed = 60;
  const Dataset test = generate(test_spec).dataset;

  const auto ba_eval = evaluate_final(cleaned.final_regressor.predict, test);
  const auto ca_eval = evaluate_final(ca_model.predict, test);

  CHECK(ba_eval.at("moderate").mean_deviation > 6.0);
  CHECK(ba_eval.at("moderate").mean_deviation < 10.0);
  // without cleaning, the mislabeled patients drag the fit toward CA
  CHECK(std::abs(ca_eval.at("moderate").mean_deviation) <
        std::abs(ba_eval.at("moderate").mean_deviation));
  // on typical patients the two models agree to within a couple of years
  CHECK(std::abs(ca_eval.at("typical").mean_deviation -
                 ba_eval.at("typical").mean_deviation) < 2.0);
}
