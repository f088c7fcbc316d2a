#include "bioage/io.hpp"

#include <cmath>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>

#include "bioage/text.hpp"

namespace bioage {

namespace {

void check_field(const std::string& value, const char* what) {
  for (char c : value) {
    if (c == ',' || c == '\n' || c == '\r') {
      throw DataError(std::string(what) + " may not contain commas or line breaks: '" + value +
                      "'");
    }
  }
}

std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> fields;
  std::size_t start = 0;
  while (true) {
    const std::size_t comma = line.find(',', start);
    if (comma == std::string::npos) {
      fields.push_back(line.substr(start));
      break;
    }
    fields.push_back(line.substr(start, comma - start));
    start = comma + 1;
  }
  return fields;
}

}  // namespace

std::string serialize_dataset(const Dataset& dataset) {
  std::size_t dim = 0;
  if (!dataset.samples.empty()) dim = dataset.samples.front().features.size();

  std::ostringstream out;
  out << "patient_id,scan_id,chunk_index,gender,ca_label,group_label";
  for (std::size_t j = 0; j < dim; ++j) out << ",f" << j;
  out << '\n';

  for (const ChunkSample& s : dataset.samples) {
    if (s.features.size() != dim) {
      throw DataError("serialize_dataset: inconsistent feature dimension");
    }
    check_field(s.patient_id, "patient_id");
    check_field(s.scan_id, "scan_id");
    std::string label;
    const auto it = dataset.group_labels.find(s.patient_id);
    if (it != dataset.group_labels.end()) label = it->second;
    check_field(label, "group_label");
    if (!std::isfinite(s.ca_label)) throw DataError("serialize_dataset: non-finite ca_label");
    out << s.patient_id << ',' << s.scan_id << ',' << s.chunk_index << ',' << s.gender << ','
        << format_double(s.ca_label) << ',' << label;
    for (double f : s.features) {
      if (!std::isfinite(f)) throw DataError("serialize_dataset: non-finite feature");
      out << ',' << format_double(f);
    }
    out << '\n';
  }
  return out.str();
}

Dataset parse_dataset(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  if (!std::getline(in, line)) throw DataError("dataset: empty file");
  if (!line.empty() && line.back() == '\r') line.pop_back();

  const std::vector<std::string> header = split_csv(line);
  const char* expected[] = {"patient_id", "scan_id", "chunk_index",
                            "gender",     "ca_label", "group_label"};
  if (header.size() < 6) throw DataError("dataset: header too short");
  for (std::size_t i = 0; i < 6; ++i) {
    if (header[i] != expected[i]) {
      throw DataError("dataset: expected header column '" + std::string(expected[i]) +
                      "', found '" + header[i] + "'");
    }
  }
  const std::size_t dim = header.size() - 6;
  for (std::size_t j = 0; j < dim; ++j) {
    if (header[6 + j] != "f" + std::to_string(j)) {
      throw DataError("dataset: feature columns must be f0..f" + std::to_string(dim - 1));
    }
  }

  Dataset dataset;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const std::vector<std::string> fields = split_csv(line);
    if (fields.size() != header.size()) {
      throw DataError("dataset: line " + std::to_string(line_no) + " has " +
                      std::to_string(fields.size()) + " fields, expected " +
                      std::to_string(header.size()));
    }
    try {
      ChunkSample s;
      s.patient_id = fields[0];
      s.scan_id = fields[1];
      s.chunk_index = static_cast<int>(parse_int(fields[2]));
      const std::int64_t gender = parse_int(fields[3]);
      if (gender != 0 && gender != 1) throw DataError("gender must be 0 or 1");
      s.gender = static_cast<int>(gender);
      s.ca_label = parse_double(fields[4]);
      if (!std::isfinite(s.ca_label) || s.ca_label <= 0.0) {
        throw DataError("ca_label must be a positive finite number");
      }
      if (s.chunk_index < 0) throw DataError("chunk_index must be nonnegative");
      const std::string& label = fields[5];
      s.features.resize(dim);
      for (std::size_t j = 0; j < dim; ++j) {
        s.features[j] = parse_double(fields[6 + j]);
        if (!std::isfinite(s.features[j])) throw DataError("non-finite feature value");
      }
      const auto [it, inserted] = dataset.group_labels.emplace(s.patient_id, label);
      if (!inserted && it->second != label) {
        throw DataError("patient " + s.patient_id + " has conflicting group labels '" +
                        it->second + "' and '" + label + "'");
      }
      dataset.samples.push_back(std::move(s));
    } catch (const DataError& e) {
      throw DataError("dataset: line " + std::to_string(line_no) + ": " + e.what());
    }
  }
  return dataset;
}

void write_dataset(const std::string& path, const Dataset& dataset) {
  write_text_atomic(path, serialize_dataset(dataset));
}

Dataset read_dataset(const std::string& path) { return parse_dataset(read_text(path)); }

void write_truth(const std::string& path, const std::map<std::string, PatientTruth>& truth) {
  std::ostringstream out;
  out << "patient_id,true_ba,group_label\n";
  for (const auto& [id, entry] : truth) {
    check_field(id, "patient_id");
    check_field(entry.group_label, "group_label");
    out << id << ',' << format_double(entry.true_ba) << ',' << entry.group_label << '\n';
  }
  write_text_atomic(path, out.str());
}

Dataset apply_chunk_exclusion(const Dataset& dataset, const std::vector<int>& excluded) {
  if (excluded.empty()) return dataset;
  const std::set<int> drop(excluded.begin(), excluded.end());

  // Rank the surviving original indices per scan so renumbering preserves
  // chunk order regardless of row order in the file.
  std::map<std::pair<std::string, std::string>, std::set<int>> survivors;
  for (const ChunkSample& s : dataset.samples) {
    if (!drop.count(s.chunk_index)) survivors[{s.patient_id, s.scan_id}].insert(s.chunk_index);
  }

  Dataset out;
  for (const ChunkSample& s : dataset.samples) {
    if (drop.count(s.chunk_index)) continue;
    const std::set<int>& kept = survivors.at({s.patient_id, s.scan_id});
    ChunkSample copy = s;
    copy.chunk_index =
        static_cast<int>(std::distance(kept.begin(), kept.find(s.chunk_index)));
    out.samples.push_back(std::move(copy));
  }
  if (out.samples.empty()) {
    throw DataError("chunk exclusion removed every sample");
  }
  for (const auto& [id, label] : dataset.group_labels) out.group_labels[id] = label;
  return out;
}

void write_text_atomic(const std::string& path, const std::string& content) {
  const std::string tmp = path + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot open for writing: " + tmp);
    out << content;
    out.flush();
    if (!out) throw std::runtime_error("write failed: " + tmp);
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) throw std::runtime_error("rename failed for " + path + ": " + ec.message());
}

std::string read_text(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open: " + path);
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

}  // namespace bioage
