#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "bioage/core.hpp"

namespace bioage {

// A dataset plus per-patient cohort labels. Labels are reporting-only: they
// never reach training or flagging, which must discover atypical patients
// on their own.
struct Dataset {
  std::vector<ChunkSample> samples;
  std::map<std::string, std::string> group_labels;  // patient_id -> label, "" allowed
};

struct CohortGroup {
  std::string label;
  int count = 0;
  double aging_shift_mean = 0.0;  // years added to CA to get BA
  double aging_shift_sd = 0.0;
};

// Synthetic cohort recipe. Informative feature dimensions are affine images
// of the biological age (plus a gender offset and per-chunk offsets), so a
// regressor trained on ca_label predicts BA and shifted patients surface as
// deviations; ca_label always carries CA, never BA, since only CA is
// observable. The chunk offsets are what give each patient a nonzero chunk
// spread.
struct CohortSpec {
  std::vector<CohortGroup> groups{
      {"typical", 405, 0.0, 1.0},
      {"mild", 110, 4.0, 1.5},
      {"moderate", 49, 8.0, 2.0},
      {"severe", 6, 14.0, 2.0},
  };
  double ca_lo = 48.0;
  double ca_hi = 97.0;
  int chunks_per_patient = 14;
  int feature_dim = 8;
  int informative_dims = 4;
  double feature_noise_sd = 0.5;
  double chunk_offset_sd = 1.5;
  double gender_effect = 2.0;  // years of apparent aging added for gender = 1
  int scans_per_patient = 1;
  std::uint64_t seed = 0;
};

struct PatientTruth {
  double true_ba = 0.0;
  std::string group_label;
};

struct GeneratedCohort {
  Dataset dataset;
  std::map<std::string, PatientTruth> truth;
};

// Deterministic generation; each patient draws from its own derived stream,
// and noise draws are always consumed and then scaled, so cohorts that
// differ only in a noise amplitude share everything else under one seed.
GeneratedCohort generate(const CohortSpec& spec);

struct BalanceResult {
  Dataset balanced;
  Dataset remainder;  // held out; natural test-set material
};

// Subsamples over-represented age bins down to twice the smallest nonempty
// bin. balanced + remainder partition the input patients.
BalanceResult age_balance(const Dataset& dataset, int bins, std::uint64_t seed);

}  // namespace bioage
