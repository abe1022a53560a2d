#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "volfuse/errors.hpp"

namespace volfuse {

// ---------------------------------------------------------------------------
// Labels
// ---------------------------------------------------------------------------

// The four legal CDR ratings. Stored as an enum so invalid labels are
// unrepresentable downstream.
enum class CdrRating : std::uint8_t { kZero = 0, kHalf = 1, kOne = 2, kTwo = 3 };

double cdr_value(CdrRating r);
// Accepts only {0.0, 0.5, 1.0, 2.0} (within 1e-9); throws InvalidLabelError.
CdrRating cdr_from_value(double v);
std::string cdr_to_string(CdrRating r);

enum class BinaryLabel : std::uint8_t { kNonDemented = 0, kDemented = 1 };
enum class FineLabel : std::uint8_t { kNonDemented = 0, kVeryMild = 1, kMild = 2, kModerate = 3 };

std::string to_string(BinaryLabel v);
std::string to_string(FineLabel v);

// Binary label plus the fine-grained category it came from.
// Invariant: value == kNonDemented iff fine_grained == kNonDemented;
// construction through map_cdr_to_binary guarantees it.
struct DiagnosisLabel {
  BinaryLabel value = BinaryLabel::kNonDemented;
  FineLabel fine_grained = FineLabel::kNonDemented;

  bool operator==(const DiagnosisLabel&) const = default;
};

// CDR 0 -> NonDemented, anything greater -> Demented.
DiagnosisLabel map_cdr_to_binary(CdrRating cdr);

enum class Sex : std::uint8_t { kMale = 0, kFemale = 1, kUnknown = 2 };
std::string to_string(Sex s);
Sex sex_from_string(const std::string& s);

// ---------------------------------------------------------------------------
// Subjects
// ---------------------------------------------------------------------------

enum class Modality : std::uint8_t { kT1 = 0, kGm = 1, kWm = 2, kCsf = 3 };
inline constexpr int kNumModalities = 4;
std::string to_string(Modality m);
Modality modality_from_string(const std::string& s);

struct SubjectRecord {
  std::string subject_id;
  CdrRating cdr = CdrRating::kZero;
  double age = 0.0;                // years
  std::optional<double> mmse;      // 0..30 when present
  Sex sex = Sex::kUnknown;
  std::map<Modality, std::string> modality_paths;  // tissue entries optional

  DiagnosisLabel label() const { return map_cdr_to_binary(cdr); }
};

// Throws Error on invariant violations (empty id, age <= 0, MMSE range).
void validate(const SubjectRecord& r);

// ---------------------------------------------------------------------------
// Volumes
// ---------------------------------------------------------------------------

struct Dims3 {
  int x = 0, y = 0, z = 0;
  bool operator==(const Dims3&) const = default;
  std::int64_t count() const {
    return static_cast<std::int64_t>(x) * y * z;
  }
};
std::string to_string(const Dims3& d);

// Dense real-valued volume. Voxel axis order is fixed project-wide:
// x fastest, then y, then z -> index = x + dims.x * (y + dims.y * z).
struct VolumeGrid {
  Dims3 dims;
  std::array<double, 3> spacing = {1.0, 1.0, 1.0};  // mm per voxel
  std::vector<float> voxels;

  std::size_t index(int x, int y, int z) const {
    return static_cast<std::size_t>(x) +
           static_cast<std::size_t>(dims.x) *
               (static_cast<std::size_t>(y) + static_cast<std::size_t>(dims.y) * z);
  }
  float at(int x, int y, int z) const { return voxels[index(x, y, z)]; }
  float& at(int x, int y, int z) { return voxels[index(x, y, z)]; }
};

VolumeGrid make_volume(Dims3 dims, std::array<double, 3> spacing = {1.0, 1.0, 1.0},
                       float fill = 0.0f);
// Buffer length must match dims; spacing strictly positive.
void validate(const VolumeGrid& g);
bool same_geometry(const VolumeGrid& a, const VolumeGrid& b);

// Four spatially aligned channels in fixed order [T1, GM, WM, CSF].
struct ModalityStack {
  std::string subject_id;
  std::array<VolumeGrid, kNumModalities> channels;

  const VolumeGrid& channel(Modality m) const {
    return channels[static_cast<int>(m)];
  }
  VolumeGrid& channel(Modality m) { return channels[static_cast<int>(m)]; }
};

// All four grids share dims/spacing; GM/WM/CSF values in [0, 1].
void validate(const ModalityStack& s);

// ---------------------------------------------------------------------------
// Cohort summary (Table-II style per-class statistics)
// ---------------------------------------------------------------------------

struct CohortSummaryRow {
  CdrRating cdr;
  FineLabel fine;
  int count = 0;
  double mean_age = 0.0;
  std::optional<double> mean_mmse;  // absent when no record in the class has MMSE
  int mmse_count = 0;
  int n_male = 0;
  int n_female = 0;
  int n_unknown = 0;
};

// One row per fine-grained class present, ordered by ascending CDR. Means are
// computed over records that carry the field; missing MMSE is skipped.
std::vector<CohortSummaryRow> cohort_summary(const std::vector<SubjectRecord>& records);

std::string format_cohort_summary(const std::vector<CohortSummaryRow>& rows);

}  // namespace volfuse
