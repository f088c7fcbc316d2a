#pragma once

#include <cstddef>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace bioage {

// Structural violation in a dataset (ragged chunks, duplicate rows, bad
// values). The CLI maps this to its data-format exit code.
struct DataError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// One feature vector for one chunk of one scan.
struct ChunkSample {
  std::string patient_id;
  std::string scan_id;
  int chunk_index = 0;
  int gender = 0;  // {0, 1}
  double ca_label = 0.0;  // chronological age in years
  std::vector<double> features;
};

// Per-patient consolidated prediction: mean over chunk predictions, their
// sample standard deviation (k-1 denominator) and the absolute deviation
// from the chronological-age label.
struct PatientEstimate {
  std::string patient_id;
  double ca_label = 0.0;
  double predicted_age = 0.0;
  double chunk_spread = 0.0;
  double deviation = 0.0;
  std::vector<double> chunk_predictions;
};

struct MetricsReport {
  double mae = 0.0;
  double sd = 0.0;    // population standard deviation of signed errors
  double bias = 0.0;  // mean signed error, prediction - label
  double rmse = 0.0;
  std::optional<double> corr;  // absent when either vector is constant
  std::size_t n = 0;
};

// Regression metrics over paired (prediction, label) vectors. Signed errors
// are prediction - label, so positive bias means over-aging. The population
// (1/n) standard deviation is used so that rmse^2 = bias^2 + sd^2 holds
// exactly; the per-patient chunk spread deliberately keeps the k-1 form.
MetricsReport compute_metrics(const std::vector<double>& predictions,
                              const std::vector<double>& labels);

// Groups a dataset by patient, each group ordered by (scan_id, chunk_index).
// Validates the dataset invariants: one consistent feature dimension, one
// consistent chunk count per scan across the whole dataset, every chunk
// index present exactly once per scan, finite values, a single ca_label and
// gender per patient.
std::map<std::string, std::vector<ChunkSample>> group_chunks(
    const std::vector<ChunkSample>& dataset);

}  // namespace bioage
