#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "bioage/aggregate.hpp"
#include "bioage/rng.hpp"
#include "bioage/synth.hpp"

using namespace bioage;

namespace {

std::map<std::string, std::vector<ChunkSample>> small_cohort(std::uint64_t seed, int patients,
                                                             int chunks) {
  CohortSpec spec;
  spec.groups = {{"typical", patients, 0.0, 1.0}};
  spec.chunks_per_patient = chunks;
  spec.seed = seed;
  return group_chunks(generate(spec).dataset.samples);
}

}  // namespace

TEST_CASE("aggregate_patient: constant chunks") {
  const PatientEstimate e = aggregate_patient({52.0, 52.0, 52.0}, 52.0, "p");
  CHECK(e.predicted_age == 52.0);
  CHECK(e.chunk_spread == 0.0);
  CHECK(e.deviation == 0.0);
  CHECK(e.chunk_predictions.size() == 3);
}

TEST_CASE("aggregate_patient: hand-computed spread and deviation") {
  // mean 52, spread sqrt(((50-52)^2+(52-52)^2+(54-52)^2)/2) = 2, deviation 8
  const PatientEstimate e = aggregate_patient({50.0, 52.0, 54.0}, 60.0);
  CHECK(e.predicted_age == doctest::Approx(52.0).epsilon(1e-12));
  CHECK(e.chunk_spread == doctest::Approx(2.0).epsilon(1e-12));
  CHECK(e.deviation == doctest::Approx(8.0).epsilon(1e-12));
}

TEST_CASE("aggregate_patient: single chunk has zero spread by convention") {
  const PatientEstimate e = aggregate_patient({47.5}, 50.0);
  CHECK(e.predicted_age == 47.5);
  CHECK(e.chunk_spread == 0.0);
  CHECK(e.deviation == 2.5);
}

TEST_CASE("aggregate_patient: errors") {
  CHECK_THROWS_AS(aggregate_patient({}, 50.0), std::invalid_argument);
  CHECK_THROWS_AS(aggregate_patient({std::nan("")}, 50.0), std::invalid_argument);
  CHECK_THROWS_AS(aggregate_patient({50.0}, std::nan("")), std::invalid_argument);
}

TEST_CASE("aggregate_patient: chunk permutation and constant shift") {
  rng::Engine eng = rng::make_engine(5);
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<double> preds(2 + rng::below(eng, 12));
    for (double& p : preds) p = rng::uniform(eng, 40.0, 90.0);
    const PatientEstimate base = aggregate_patient(preds, 60.0);

    std::vector<double> permuted = preds;
    rng::shuffle(permuted, eng);
    const PatientEstimate perm = aggregate_patient(permuted, 60.0);
    CHECK(perm.predicted_age == doctest::Approx(base.predicted_age).epsilon(1e-12));
    CHECK(perm.chunk_spread == doctest::Approx(base.chunk_spread).epsilon(1e-9));
    CHECK(perm.deviation == doctest::Approx(base.deviation).epsilon(1e-9));

    const double c = rng::uniform(eng, -10.0, 10.0);
    std::vector<double> shifted = preds;
    for (double& p : shifted) p += c;
    const PatientEstimate sh = aggregate_patient(shifted, 60.0);
    CHECK(sh.predicted_age == doctest::Approx(base.predicted_age + c).epsilon(1e-9));
    CHECK(sh.chunk_spread == doctest::Approx(base.chunk_spread).epsilon(1e-6));
  }
}

TEST_CASE("aggregate_cohort: single patient matches aggregate_patient") {
  const auto groups = small_cohort(11, 1, 5);
  auto predictor = [](const ChunkSample& s) { return s.ca_label + s.chunk_index; };
  const std::vector<PatientEstimate> cohort = aggregate_cohort(predictor, groups);
  REQUIRE(cohort.size() == 1);
  std::vector<double> preds;
  for (const ChunkSample& s : groups.begin()->second) preds.push_back(predictor(s));
  const PatientEstimate direct =
      aggregate_patient(preds, groups.begin()->second.front().ca_label);
  CHECK(cohort[0].predicted_age == direct.predicted_age);
  CHECK(cohort[0].chunk_spread == direct.chunk_spread);
  CHECK(cohort[0].deviation == direct.deviation);
}

TEST_CASE("aggregate_cohort: constant-output model gives zero spread") {
  const auto groups = small_cohort(12, 4, 6);
  auto predictor = [](const ChunkSample&) { return 63.0; };
  for (const PatientEstimate& e : aggregate_cohort(predictor, groups)) {
    CHECK(e.chunk_spread == 0.0);
    CHECK(e.predicted_age == 63.0);
    CHECK(e.deviation == std::abs(63.0 - e.ca_label));
  }
}

TEST_CASE("aggregate_cohort: equals the per-patient brute-force loop exactly") {
  const auto groups = small_cohort(13, 3, 7);
  const RegressorModel oracle = [&groups] {
    std::vector<ChunkSample> samples;
    for (const auto& [id, group] : groups) {
      samples.insert(samples.end(), group.begin(), group.end());
    }
    return train_ridge(samples, 1e-6);
  }();

  const std::vector<PatientEstimate> cohort = aggregate_cohort(oracle, groups);
  REQUIRE(cohort.size() == groups.size());

  // brute force: walk patients in the same canonical order
  std::size_t idx = 0;
  for (const auto& [id, group] : groups) {
    std::vector<double> preds;
    for (const ChunkSample& s : group) preds.push_back(predict(oracle, s));
    double sum = 0.0;
    for (double p : preds) sum += p;
    const double mean = sum / static_cast<double>(preds.size());
    double sq = 0.0;
    for (double p : preds) sq += (p - mean) * (p - mean);
    const double spread =
        preds.size() > 1 ? std::sqrt(sq / static_cast<double>(preds.size() - 1)) : 0.0;

    CHECK(cohort[idx].patient_id == id);
    CHECK(cohort[idx].predicted_age == mean);
    CHECK(cohort[idx].chunk_spread == spread);
    CHECK(cohort[idx].deviation == std::abs(mean - group.front().ca_label));
    ++idx;
  }
}

TEST_CASE("aggregate_cohort: multi-scan patients pool every chunk") {
  CohortSpec spec;
  spec.groups = {{"typical", 2, 0.0, 0.0}};
  spec.chunks_per_patient = 4;
  spec.scans_per_patient = 3;
  spec.seed = 21;
  const auto groups = group_chunks(generate(spec).dataset.samples);
  auto predictor = [](const ChunkSample& s) { return s.ca_label + 0.1 * s.chunk_index; };
  for (const PatientEstimate& e : aggregate_cohort(predictor, groups)) {
    CHECK(e.chunk_predictions.size() == 12);
  }
}

TEST_CASE("aggregate_cohort: empty cohort is an error") {
  std::map<std::string, std::vector<ChunkSample>> empty;
  CHECK_THROWS_AS(aggregate_cohort([](const ChunkSample&) { return 0.0; }, empty),
                  std::invalid_argument);
}
