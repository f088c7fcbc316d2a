#include "bioage/aggregate.hpp"

#include <cmath>

namespace bioage {

PatientEstimate aggregate_patient(const std::vector<double>& chunk_predictions, double ca_label,
                                  std::string patient_id) {
  if (chunk_predictions.empty()) {
    throw std::invalid_argument("aggregate_patient: empty prediction vector");
  }
  if (!std::isfinite(ca_label)) {
    throw std::invalid_argument("aggregate_patient: non-finite ca_label");
  }
  for (double v : chunk_predictions) {
    if (!std::isfinite(v)) {
      throw std::invalid_argument("aggregate_patient: non-finite chunk prediction");
    }
  }

  const std::size_t k = chunk_predictions.size();
  double sum = 0.0;
  for (double v : chunk_predictions) sum += v;
  const double mean = sum / static_cast<double>(k);

  double spread = 0.0;
  if (k > 1) {
    double sq = 0.0;
    for (double v : chunk_predictions) {
      const double d = v - mean;
      sq += d * d;
    }
    spread = std::sqrt(sq / static_cast<double>(k - 1));
  }

  PatientEstimate est;
  est.patient_id = std::move(patient_id);
  est.ca_label = ca_label;
  est.predicted_age = mean;
  est.chunk_spread = spread;
  est.deviation = std::abs(mean - ca_label);
  est.chunk_predictions = chunk_predictions;
  return est;
}

std::vector<PatientEstimate> aggregate_cohort(
    const std::function<double(const ChunkSample&)>& predictor,
    const std::map<std::string, std::vector<ChunkSample>>& patients) {
  if (patients.empty()) {
    throw std::invalid_argument("aggregate_cohort: empty cohort");
  }
  std::vector<PatientEstimate> estimates;
  estimates.reserve(patients.size());
  std::vector<double> predictions;
  for (const auto& [patient_id, samples] : patients) {
    predictions.clear();
    predictions.reserve(samples.size());
    for (const ChunkSample& s : samples) predictions.push_back(predictor(s));
    estimates.push_back(aggregate_patient(predictions, samples.front().ca_label, patient_id));
  }
  return estimates;
}

std::vector<PatientEstimate> aggregate_cohort(
    const RegressorModel& model, const std::map<std::string, std::vector<ChunkSample>>& patients) {
  return aggregate_cohort([&model](const ChunkSample& s) { return predict(model, s); }, patients);
}

}  // namespace bioage
