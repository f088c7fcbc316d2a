#pragma once

#include <functional>
#include <map>
#include <string>
#include <vector>

#include "bioage/core.hpp"
#include "bioage/regressor.hpp"

namespace bioage {

// Consolidates one patient's chunk predictions: mean, sample standard
// deviation (k-1 denominator, 0 when k = 1) and absolute deviation from the
// label.
PatientEstimate aggregate_patient(const std::vector<double>& chunk_predictions, double ca_label,
                                  std::string patient_id = {});

// Per-patient aggregation over a grouped cohort, ordered by patient id. A
// patient with several scans pools all of its chunk predictions into a
// single estimate.
std::vector<PatientEstimate> aggregate_cohort(
    const std::function<double(const ChunkSample&)>& predictor,
    const std::map<std::string, std::vector<ChunkSample>>& patients);

std::vector<PatientEstimate> aggregate_cohort(
    const RegressorModel& model, const std::map<std::string, std::vector<ChunkSample>>& patients);

}  // namespace bioage
