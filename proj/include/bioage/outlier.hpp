#pragma once

#include <map>
#include <string>
#include <vector>

#include "bioage/core.hpp"

namespace bioage {

enum class ThresholdMode { patient_dependent, fixed };

// Outlier threshold selection. Patient-dependent mode compares a patient's
// deviation against r times its own chunk spread; fixed mode compares it
// against the cohort mean absolute deviation. r defaults to 1.96, the
// two-sided 95% point of a normal.
struct ThresholdPolicy {
  ThresholdMode mode = ThresholdMode::patient_dependent;
  double r = 1.96;
  double sigma_floor = 0.0;  // ignored in fixed mode
};

struct OutlierDecision {
  std::string patient_id;
  double deviation = 0.0;
  double threshold = 0.0;
  bool flagged = false;  // flagged iff deviation > threshold, strictly
};

// Flags atypically-aging patients. Patient-dependent mode requires chunked
// estimates: with a single prediction per patient there is no spread to
// threshold on, so whole-volume cohorts must use fixed mode.
std::vector<OutlierDecision> detect(const std::vector<PatientEstimate>& estimates,
                                    const ThresholdPolicy& policy);

struct SweepRow {
  double r = 0.0;
  std::string cohort_label;
  std::size_t flagged_count = 0;
  std::size_t cohort_size = 0;
};

// Patient-dependent flag counts per cohort label across an ascending list
// of r values. On fixed estimates the counts are non-increasing in r.
// Patients missing from group_labels fall into the "" label.
std::vector<SweepRow> sweep_r(const std::vector<PatientEstimate>& estimates,
                              const std::vector<double>& r_values,
                              const std::map<std::string, std::string>& group_labels);

}  // namespace bioage
