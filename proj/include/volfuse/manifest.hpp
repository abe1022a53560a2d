#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "volfuse/core_types.hpp"

namespace volfuse {

// Manifest CSV schema, one row per subject:
//   subject_id,cdr,age,mmse,sex,t1_path,gm_path,wm_path,csf_path
// Empty cells stand for absent optional fields; the header row is mandatory.

extern const char* kManifestHeader;

std::string to_csv_row(const SubjectRecord& r);
// row_number is 1-based and used only for error messages.
SubjectRecord parse_csv_row(const std::string& line, int row_number);

// Duplicate subject_ids are collapsed to the first row with a warning on
// stderr. Throws ParseError (row-addressed) on malformed rows or header.
std::vector<SubjectRecord> read_manifest(const std::filesystem::path& file);

void write_manifest(const std::filesystem::path& file,
                    const std::vector<SubjectRecord>& records);

// Shortest round-trip decimal formatting (via std::to_chars).
std::string format_double(double v);

}  // namespace volfuse
