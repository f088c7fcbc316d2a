#include "bioage/core.hpp"

#include <algorithm>
#include <cmath>
#include <set>
#include <tuple>

namespace bioage {

MetricsReport compute_metrics(const std::vector<double>& predictions,
                              const std::vector<double>& labels) {
  if (predictions.empty()) {
    throw std::invalid_argument("compute_metrics: empty input");
  }
  if (predictions.size() != labels.size()) {
    throw std::invalid_argument("compute_metrics: prediction/label length mismatch");
  }
  for (std::size_t i = 0; i < predictions.size(); ++i) {
    if (!std::isfinite(predictions[i]) || !std::isfinite(labels[i])) {
      throw std::invalid_argument("compute_metrics: non-finite value");
    }
  }

  const std::size_t n = predictions.size();
  const double inv_n = 1.0 / static_cast<double>(n);

  double sum_abs = 0.0;
  double sum_err = 0.0;
  double sum_sq = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double e = predictions[i] - labels[i];
    sum_abs += std::abs(e);
    sum_err += e;
    sum_sq += e * e;
  }

  MetricsReport report;
  report.n = n;
  report.mae = sum_abs * inv_n;
  report.bias = sum_err * inv_n;
  report.rmse = std::sqrt(sum_sq * inv_n);
  const double var = std::max(0.0, sum_sq * inv_n - report.bias * report.bias);
  report.sd = std::sqrt(var);

  // Pearson correlation between predictions and labels; undefined when
  // either side is constant.
  double pm = 0.0;
  double lm = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    pm += predictions[i];
    lm += labels[i];
  }
  pm *= inv_n;
  lm *= inv_n;
  double spp = 0.0;
  double sll = 0.0;
  double spl = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double dp = predictions[i] - pm;
    const double dl = labels[i] - lm;
    spp += dp * dp;
    sll += dl * dl;
    spl += dp * dl;
  }
  if (spp > 0.0 && sll > 0.0) {
    report.corr = spl / std::sqrt(spp * sll);
  }
  return report;
}

std::map<std::string, std::vector<ChunkSample>> group_chunks(
    const std::vector<ChunkSample>& dataset) {
  std::map<std::string, std::vector<ChunkSample>> groups;
  if (dataset.empty()) {
    return groups;
  }

  const std::size_t dim = dataset.front().features.size();
  std::set<std::tuple<std::string, std::string, int>> seen;
  for (const ChunkSample& s : dataset) {
    if (s.features.size() != dim) {
      throw DataError("group_chunks: inconsistent feature dimension for patient " + s.patient_id);
    }
    for (double f : s.features) {
      if (!std::isfinite(f)) {
        throw DataError("group_chunks: non-finite feature for patient " + s.patient_id);
      }
    }
    if (!std::isfinite(s.ca_label) || s.ca_label <= 0.0) {
      throw DataError("group_chunks: invalid ca_label for patient " + s.patient_id);
    }
    if (s.gender != 0 && s.gender != 1) {
      throw DataError("group_chunks: gender must be 0 or 1 for patient " + s.patient_id);
    }
    if (s.chunk_index < 0) {
      throw DataError("group_chunks: negative chunk_index for patient " + s.patient_id);
    }
    if (!seen.emplace(s.patient_id, s.scan_id, s.chunk_index).second) {
      throw DataError("group_chunks: duplicate (patient, scan, chunk) row: " + s.patient_id +
                      "/" + s.scan_id + "/" + std::to_string(s.chunk_index));
    }
    groups[s.patient_id].push_back(s);
  }

  // One ca_label and gender per patient; a patient's scans pool into a
  // single estimate, so a single label is required.
  for (auto& [patient, samples] : groups) {
    for (const ChunkSample& s : samples) {
      if (s.ca_label != samples.front().ca_label) {
        throw DataError("group_chunks: patient " + patient + " has multiple ca_label values");
      }
      if (s.gender != samples.front().gender) {
        throw DataError("group_chunks: patient " + patient + " has multiple gender values");
      }
    }
    std::sort(samples.begin(), samples.end(), [](const ChunkSample& a, const ChunkSample& b) {
      return std::tie(a.scan_id, a.chunk_index) < std::tie(b.scan_id, b.chunk_index);
    });
  }

  // Every scan must contribute chunk indices 0..k-1 exactly once, with one
  // k shared by the whole dataset.
  int chunks_per_scan = -1;
  for (const auto& [patient, samples] : groups) {
    std::size_t i = 0;
    while (i < samples.size()) {
      const std::string& scan = samples[i].scan_id;
      int expected = 0;
      while (i < samples.size() && samples[i].scan_id == scan) {
        if (samples[i].chunk_index != expected) {
          throw DataError("group_chunks: scan " + patient + "/" + scan +
                          " has ragged chunk indices");
        }
        ++expected;
        ++i;
      }
      if (chunks_per_scan == -1) {
        chunks_per_scan = expected;
      } else if (expected != chunks_per_scan) {
        throw DataError("group_chunks: scan " + patient + "/" + scan + " has " +
                        std::to_string(expected) + " chunks, expected " +
                        std::to_string(chunks_per_scan));
      }
    }
  }
  return groups;
}

}  // namespace bioage
