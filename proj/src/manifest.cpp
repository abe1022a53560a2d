#include "volfuse/manifest.hpp"

#include <charconv>
#include <fstream>
#include <iostream>
#include <sstream>
#include <unordered_set>

namespace volfuse {

const char* kManifestHeader = "subject_id,cdr,age,mmse,sex,t1_path,gm_path,wm_path,csf_path";

std::string format_double(double v) {
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  if (ec != std::errc()) throw Error("number formatting failed");
  return std::string(buf, ptr);
}

namespace {

double parse_double_field(const std::string& s, const char* field, int row) {
  double v = 0.0;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size()) {
    throw ParseError("manifest row " + std::to_string(row) + ": unparsable " + field + " '" +
                     s + "'");
  }
  return v;
}

std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : line) {
    if (c == ',') {
      out.push_back(cur);
      cur.clear();
    } else if (c != '\r') {
      cur.push_back(c);
    }
  }
  out.push_back(cur);
  return out;
}

void check_writable_field(const std::string& s, const char* field) {
  if (s.find(',') != std::string::npos || s.find('\n') != std::string::npos) {
    throw Error(std::string("manifest field ") + field + " contains a comma or newline: '" +
                s + "'");
  }
}

}  // namespace

std::string to_csv_row(const SubjectRecord& r) {
  check_writable_field(r.subject_id, "subject_id");
  std::ostringstream os;
  os << r.subject_id << ',' << cdr_to_string(r.cdr) << ',' << format_double(r.age) << ',';
  if (r.mmse) os << format_double(*r.mmse);
  os << ',' << to_string(r.sex);
  for (Modality m : {Modality::kT1, Modality::kGm, Modality::kWm, Modality::kCsf}) {
    os << ',';
    auto it = r.modality_paths.find(m);
    if (it != r.modality_paths.end()) {
      check_writable_field(it->second, to_string(m).c_str());
      os << it->second;
    }
  }
  return os.str();
}

SubjectRecord parse_csv_row(const std::string& line, int row_number) {
  const std::vector<std::string> cells = split_csv(line);
  if (cells.size() != 9) {
    throw ParseError("manifest row " + std::to_string(row_number) + ": expected 9 cells, got " +
                     std::to_string(cells.size()));
  }
  SubjectRecord r;
  r.subject_id = cells[0];
  if (r.subject_id.empty()) {
    throw ParseError("manifest row " + std::to_string(row_number) + ": empty subject_id");
  }
  try {
    r.cdr = cdr_from_value(parse_double_field(cells[1], "cdr", row_number));
  } catch (const InvalidLabelError& e) {
    throw ParseError("manifest row " + std::to_string(row_number) + ": " + e.what());
  }
  r.age = parse_double_field(cells[2], "age", row_number);
  if (!cells[3].empty()) r.mmse = parse_double_field(cells[3], "mmse", row_number);
  try {
    r.sex = sex_from_string(cells[4]);
  } catch (const ParseError& e) {
    throw ParseError("manifest row " + std::to_string(row_number) + ": " + e.what());
  }
  const std::array<Modality, 4> mods = {Modality::kT1, Modality::kGm, Modality::kWm,
                                        Modality::kCsf};
  for (int i = 0; i < 4; ++i) {
    if (!cells[5 + i].empty()) r.modality_paths[mods[i]] = cells[5 + i];
  }
  validate(r);
  return r;
}

std::vector<SubjectRecord> read_manifest(const std::filesystem::path& file) {
  std::ifstream in(file);
  if (!in) throw ParseError("cannot open manifest '" + file.string() + "'");
  std::string line;
  if (!std::getline(in, line)) {
    throw ParseError("manifest '" + file.string() + "': missing header row");
  }
  if (!line.empty() && line.back() == '\r') line.pop_back();
  if (line != kManifestHeader) {
    throw ParseError("manifest '" + file.string() + "': bad header (expected '" +
                     std::string(kManifestHeader) + "')");
  }
  std::vector<SubjectRecord> records;
  std::unordered_set<std::string> seen;
  int row = 1;
  while (std::getline(in, line)) {
    ++row;
    if (line.empty() || line == "\r") continue;
    SubjectRecord r = parse_csv_row(line, row);
    if (!seen.insert(r.subject_id).second) {
      std::cerr << "warning: manifest row " << row << ": duplicate subject_id '" << r.subject_id
                << "' collapsed to the first occurrence\n";
      continue;
    }
    records.push_back(std::move(r));
  }
  return records;
}

void write_manifest(const std::filesystem::path& file,
                    const std::vector<SubjectRecord>& records) {
  std::ofstream os(file, std::ios::trunc);
  if (!os) throw Error("cannot open '" + file.string() + "' for writing");
  os << kManifestHeader << '\n';
  for (const SubjectRecord& r : records) os << to_csv_row(r) << '\n';
  if (!os) throw Error("short write to '" + file.string() + "'");
}

}  // namespace volfuse
