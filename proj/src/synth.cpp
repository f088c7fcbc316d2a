#include "bioage/synth.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <set>

#include "bioage/rng.hpp"

namespace bioage {

namespace {

void validate_spec(const CohortSpec& spec) {
  if (spec.groups.empty()) throw std::invalid_argument("cohort spec: no groups");
  std::set<std::string> labels;
  for (const CohortGroup& g : spec.groups) {
    if (g.count <= 0) throw std::invalid_argument("cohort spec: group counts must be positive");
    if (!(g.aging_shift_sd >= 0.0)) {
      throw std::invalid_argument("cohort spec: aging_shift_sd must be nonnegative");
    }
    if (!labels.insert(g.label).second) {
      throw std::invalid_argument("cohort spec: duplicate group label '" + g.label + "'");
    }
  }
  if (!(spec.ca_lo < spec.ca_hi)) throw std::invalid_argument("cohort spec: need ca_lo < ca_hi");
  if (!(spec.ca_lo > 0.0)) throw std::invalid_argument("cohort spec: ages must be positive");
  if (spec.chunks_per_patient < 1) throw std::invalid_argument("cohort spec: need K >= 1");
  if (spec.feature_dim < 1) throw std::invalid_argument("cohort spec: need feature_dim >= 1");
  if (spec.informative_dims < 1 || spec.informative_dims > spec.feature_dim) {
    throw std::invalid_argument("cohort spec: informative_dims must be in [1, feature_dim]");
  }
  if (!(spec.feature_noise_sd >= 0.0) || !(spec.chunk_offset_sd >= 0.0)) {
    throw std::invalid_argument("cohort spec: noise amplitudes must be nonnegative");
  }
  if (spec.scans_per_patient < 1) {
    throw std::invalid_argument("cohort spec: need scans_per_patient >= 1");
  }
}

// Fixed affine loadings per informative dimension.
double loading_scale(int dim) { return 1.0 + 0.25 * dim; }
double loading_offset(int dim) { return 10.0 - 3.0 * dim; }

std::string patient_name(std::size_t index) {
  char buf[16];
  std::snprintf(buf, sizeof(buf), "p%05zu", index);
  return buf;
}

}  // namespace

GeneratedCohort generate(const CohortSpec& spec) {
  validate_spec(spec);

  GeneratedCohort out;
  std::size_t patient_index = 0;
  for (const CohortGroup& group : spec.groups) {
    for (int i = 0; i < group.count; ++i, ++patient_index) {
      rng::Engine eng =
          rng::make_engine(rng::derive(spec.seed, rng::kPatientStream, patient_index));
      const std::string id = patient_name(patient_index);

      const double ca = rng::uniform(eng, spec.ca_lo, spec.ca_hi);
      // Scaling the unit draw keeps the stream layout identical across
      // shift settings and makes BA == CA exact for (0, 0) groups.
      const double shift = group.aging_shift_mean + group.aging_shift_sd * rng::normal(eng, 0.0, 1.0);
      const double ba = ca + shift;
      const int gender = static_cast<int>(rng::below(eng, 2));
      const double apparent_age = ba + spec.gender_effect * static_cast<double>(gender);

      out.truth[id] = {ba, group.label};
      out.dataset.group_labels[id] = group.label;

      for (int scan = 0; scan < spec.scans_per_patient; ++scan) {
        for (int chunk = 0; chunk < spec.chunks_per_patient; ++chunk) {
          const double offset = spec.chunk_offset_sd * rng::normal(eng, 0.0, 1.0);
          ChunkSample s;
          s.patient_id = id;
          s.scan_id = "s" + std::to_string(scan);
          s.chunk_index = chunk;
          s.gender = gender;
          s.ca_label = ca;
          s.features.resize(spec.feature_dim);
          for (int j = 0; j < spec.feature_dim; ++j) {
            const double noise = rng::normal(eng, 0.0, 1.0);
            if (j < spec.informative_dims) {
              s.features[j] = loading_scale(j) * (apparent_age + offset) + loading_offset(j) +
                              spec.feature_noise_sd * noise;
            } else {
              s.features[j] = noise;
            }
          }
          out.dataset.samples.push_back(std::move(s));
        }
      }
    }
  }
  return out;
}

BalanceResult age_balance(const Dataset& dataset, int bins, std::uint64_t seed) {
  if (bins < 1) throw std::invalid_argument("age_balance: need bins >= 1");

  // Patient roster in canonical order, with one CA per patient.
  std::map<std::string, double> patient_ca;
  for (const ChunkSample& s : dataset.samples) patient_ca.emplace(s.patient_id, s.ca_label);

  BalanceResult result;
  if (patient_ca.empty()) return result;

  double lo = patient_ca.begin()->second;
  double hi = lo;
  for (const auto& [id, ca] : patient_ca) {
    lo = std::min(lo, ca);
    hi = std::max(hi, ca);
  }
  const double width = (hi - lo) / static_cast<double>(bins);
  auto bin_of = [&](double ca) {
    if (width <= 0.0) return 0;
    const int b = static_cast<int>((ca - lo) / width);
    return std::clamp(b, 0, bins - 1);
  };

  std::vector<std::vector<std::string>> members(bins);
  for (const auto& [id, ca] : patient_ca) members[bin_of(ca)].push_back(id);

  std::size_t min_count = patient_ca.size();
  for (const auto& bin : members) {
    if (!bin.empty()) min_count = std::min(min_count, bin.size());
  }
  const std::size_t cap = 2 * min_count;

  std::set<std::string> kept;
  for (int b = 0; b < bins; ++b) {
    std::vector<std::string>& bin = members[b];
    if (bin.size() <= cap) {
      kept.insert(bin.begin(), bin.end());
      continue;
    }
    rng::Engine eng = rng::make_engine(rng::derive(seed, rng::kBalanceStream, b));
    rng::shuffle(bin, eng);
    kept.insert(bin.begin(), bin.begin() + static_cast<std::ptrdiff_t>(cap));
  }

  for (const ChunkSample& s : dataset.samples) {
    (kept.count(s.patient_id) ? result.balanced : result.remainder).samples.push_back(s);
  }
  for (const auto& [id, label] : dataset.group_labels) {
    (kept.count(id) ? result.balanced : result.remainder).group_labels[id] = label;
  }
  return result;
}

}  // namespace bioage
