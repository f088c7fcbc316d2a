#pragma once

#include <map>
#include <string>

#include "bioage/synth.hpp"

namespace bioage {

// Dataset file format: comma-delimited text with a header row
//   patient_id,scan_id,chunk_index,gender,ca_label,group_label,f0..f{d-1}
// one row per chunk sample, numeric fields in full-precision decimal.
// group_label may be empty. write -> read -> write is byte-identical.
std::string serialize_dataset(const Dataset& dataset);
Dataset parse_dataset(const std::string& text);

void write_dataset(const std::string& path, const Dataset& dataset);
Dataset read_dataset(const std::string& path);

// Truth sidecar: patient_id,true_ba,group_label.
void write_truth(const std::string& path, const std::map<std::string, PatientTruth>& truth);

// Drops the listed chunk indices from every scan and renumbers the survivors
// 0..k'-1 in their original index order, so externally chunked data where
// only a middle slice of each scan is informative (say, chunks 3..16 of 20)
// can feed the pipeline. Throws if nothing survives.
Dataset apply_chunk_exclusion(const Dataset& dataset, const std::vector<int>& excluded);

// All outputs go through a temp file plus rename.
void write_text_atomic(const std::string& path, const std::string& content);
std::string read_text(const std::string& path);

}  // namespace bioage
