#include "bioage/outlier.hpp"

#include <algorithm>
#include <cmath>

namespace bioage {

std::vector<OutlierDecision> detect(const std::vector<PatientEstimate>& estimates,
                                    const ThresholdPolicy& policy) {
  if (estimates.empty()) {
    throw std::invalid_argument("detect: empty estimate vector");
  }
  if (!(policy.r > 0.0)) {
    throw std::invalid_argument("detect: r must be positive");
  }
  if (!(policy.sigma_floor >= 0.0)) {
    throw std::invalid_argument("detect: sigma_floor must be nonnegative");
  }

  if (policy.mode == ThresholdMode::patient_dependent) {
    bool any_chunked = false;
    for (const PatientEstimate& e : estimates) {
      if (e.chunk_predictions.size() > 1) {
        any_chunked = true;
        break;
      }
    }
    if (!any_chunked) {
      throw std::invalid_argument(
          "detect: patient-dependent mode needs chunked estimates; use fixed mode for "
          "whole-volume (single-prediction) cohorts");
    }
  }

  double fixed_threshold = 0.0;
  if (policy.mode == ThresholdMode::fixed) {
    double sum = 0.0;
    for (const PatientEstimate& e : estimates) sum += e.deviation;
    fixed_threshold = sum / static_cast<double>(estimates.size());
  }

  std::vector<OutlierDecision> decisions;
  decisions.reserve(estimates.size());
  for (const PatientEstimate& e : estimates) {
    OutlierDecision d;
    d.patient_id = e.patient_id;
    d.deviation = e.deviation;
    d.threshold = policy.mode == ThresholdMode::fixed
                      ? fixed_threshold
                      : std::max(policy.r * e.chunk_spread, policy.sigma_floor);
    d.flagged = d.deviation > d.threshold;
    decisions.push_back(std::move(d));
  }
  return decisions;
}

std::vector<SweepRow> sweep_r(const std::vector<PatientEstimate>& estimates,
                              const std::vector<double>& r_values,
                              const std::map<std::string, std::string>& group_labels) {
  if (r_values.empty()) {
    throw std::invalid_argument("sweep_r: empty r list");
  }
  for (std::size_t i = 0; i < r_values.size(); ++i) {
    if (!(r_values[i] > 0.0)) {
      throw std::invalid_argument("sweep_r: r values must be positive");
    }
    if (i > 0 && !(r_values[i] > r_values[i - 1])) {
      throw std::invalid_argument("sweep_r: r values must be strictly ascending");
    }
  }

  auto label_of = [&group_labels](const std::string& patient_id) -> std::string {
    const auto it = group_labels.find(patient_id);
    return it == group_labels.end() ? std::string() : it->second;
  };

  std::map<std::string, std::size_t> cohort_sizes;
  for (const PatientEstimate& e : estimates) ++cohort_sizes[label_of(e.patient_id)];

  std::vector<SweepRow> rows;
  for (double r : r_values) {
    ThresholdPolicy policy;
    policy.mode = ThresholdMode::patient_dependent;
    policy.r = r;
    std::map<std::string, std::size_t> flagged;
    for (const auto& [label, size] : cohort_sizes) flagged[label] = 0;
    for (const OutlierDecision& d : detect(estimates, policy)) {
      if (d.flagged) ++flagged[label_of(d.patient_id)];
    }
    for (const auto& [label, count] : flagged) {
      rows.push_back({r, label, count, cohort_sizes.at(label)});
    }
  }
  return rows;
}

}  // namespace bioage
