#include "volfuse/core_types.hpp"

#include <cctype>
#include <cmath>
#include <cstdio>
#include <sstream>

namespace volfuse {

double cdr_value(CdrRating r) {
  switch (r) {
    case CdrRating::kZero: return 0.0;
    case CdrRating::kHalf: return 0.5;
    case CdrRating::kOne: return 1.0;
    case CdrRating::kTwo: return 2.0;
  }
  throw InvalidLabelError("corrupt CdrRating enum value");
}

CdrRating cdr_from_value(double v) {
  constexpr double kTol = 1e-9;
  if (std::fabs(v - 0.0) < kTol) return CdrRating::kZero;
  if (std::fabs(v - 0.5) < kTol) return CdrRating::kHalf;
  if (std::fabs(v - 1.0) < kTol) return CdrRating::kOne;
  if (std::fabs(v - 2.0) < kTol) return CdrRating::kTwo;
  throw InvalidLabelError("invalid CDR rating " + std::to_string(v) +
                          " (legal values: 0, 0.5, 1, 2)");
}

std::string cdr_to_string(CdrRating r) {
  switch (r) {
    case CdrRating::kZero: return "0.0";
    case CdrRating::kHalf: return "0.5";
    case CdrRating::kOne: return "1.0";
    case CdrRating::kTwo: return "2.0";
  }
  return "?";
}

std::string to_string(BinaryLabel v) {
  return v == BinaryLabel::kNonDemented ? "NonDemented" : "Demented";
}

std::string to_string(FineLabel v) {
  switch (v) {
    case FineLabel::kNonDemented: return "NonDemented";
    case FineLabel::kVeryMild: return "VeryMild";
    case FineLabel::kMild: return "Mild";
    case FineLabel::kModerate: return "Moderate";
  }
  return "?";
}

DiagnosisLabel map_cdr_to_binary(CdrRating cdr) {
  DiagnosisLabel out;
  switch (cdr) {
    case CdrRating::kZero:
      out.value = BinaryLabel::kNonDemented;
      out.fine_grained = FineLabel::kNonDemented;
      break;
    case CdrRating::kHalf:
      out.value = BinaryLabel::kDemented;
      out.fine_grained = FineLabel::kVeryMild;
      break;
    case CdrRating::kOne:
      out.value = BinaryLabel::kDemented;
      out.fine_grained = FineLabel::kMild;
      break;
    case CdrRating::kTwo:
      out.value = BinaryLabel::kDemented;
      out.fine_grained = FineLabel::kModerate;
      break;
  }
  return out;
}

std::string to_string(Sex s) {
  switch (s) {
    case Sex::kMale: return "male";
    case Sex::kFemale: return "female";
    case Sex::kUnknown: return "unknown";
  }
  return "?";
}

Sex sex_from_string(const std::string& s) {
  if (s == "male" || s == "M" || s == "m") return Sex::kMale;
  if (s == "female" || s == "F" || s == "f") return Sex::kFemale;
  if (s.empty() || s == "unknown") return Sex::kUnknown;
  throw ParseError("unrecognized sex value '" + s + "'");
}

std::string to_string(Modality m) {
  switch (m) {
    case Modality::kT1: return "T1";
    case Modality::kGm: return "GM";
    case Modality::kWm: return "WM";
    case Modality::kCsf: return "CSF";
  }
  return "?";
}

Modality modality_from_string(const std::string& s) {
  // Case-insensitive: manifests use "T1", model configs name encoders "t1".
  std::string up;
  up.reserve(s.size());
  for (char c : s) up.push_back(static_cast<char>(std::toupper(static_cast<unsigned char>(c))));
  if (up == "T1") return Modality::kT1;
  if (up == "GM") return Modality::kGm;
  if (up == "WM") return Modality::kWm;
  if (up == "CSF") return Modality::kCsf;
  throw ParseError("unrecognized modality '" + s + "'");
}

void validate(const SubjectRecord& r) {
  if (r.subject_id.empty()) throw Error("subject_id must be non-empty");
  if (!(r.age > 0.0)) {
    throw Error("subject " + r.subject_id + ": age must be positive, got " +
                std::to_string(r.age));
  }
  if (r.mmse && (*r.mmse < 0.0 || *r.mmse > 30.0)) {
    throw Error("subject " + r.subject_id + ": MMSE must lie in [0, 30], got " +
                std::to_string(*r.mmse));
  }
}

std::string to_string(const Dims3& d) {
  return std::to_string(d.x) + "x" + std::to_string(d.y) + "x" + std::to_string(d.z);
}

VolumeGrid make_volume(Dims3 dims, std::array<double, 3> spacing, float fill) {
  VolumeGrid g;
  g.dims = dims;
  g.spacing = spacing;
  g.voxels.assign(static_cast<std::size_t>(dims.count()), fill);
  validate(g);
  return g;
}

void validate(const VolumeGrid& g) {
  if (g.dims.x <= 0 || g.dims.y <= 0 || g.dims.z <= 0) {
    throw Error("volume dims must be positive, got " + to_string(g.dims));
  }
  if (static_cast<std::int64_t>(g.voxels.size()) != g.dims.count()) {
    throw Error("voxel buffer length " + std::to_string(g.voxels.size()) +
                " does not match dims " + to_string(g.dims));
  }
  for (double s : g.spacing) {
    if (!(s > 0.0)) throw Error("voxel spacing must be strictly positive");
  }
}

bool same_geometry(const VolumeGrid& a, const VolumeGrid& b) {
  return a.dims == b.dims && a.spacing == b.spacing;
}

void validate(const ModalityStack& s) {
  const VolumeGrid& t1 = s.channels[0];
  validate(t1);
  for (int c = 1; c < kNumModalities; ++c) {
    validate(s.channels[c]);
    if (!same_geometry(t1, s.channels[c])) {
      throw AlignmentError("stack for subject " + s.subject_id + ": channel " +
                           to_string(static_cast<Modality>(c)) +
                           " dims/spacing differ from T1");
    }
    for (float v : s.channels[c].voxels) {
      if (v < 0.0f || v > 1.0f) {
        throw Error("stack for subject " + s.subject_id + ": tissue channel " +
                    to_string(static_cast<Modality>(c)) + " has value " +
                    std::to_string(v) + " outside [0, 1]");
      }
    }
  }
}

std::vector<CohortSummaryRow> cohort_summary(const std::vector<SubjectRecord>& records) {
  // One accumulator per fine-grained class, indexed by CdrRating order.
  std::array<CohortSummaryRow, 4> acc;
  std::array<double, 4> age_sum{};
  std::array<double, 4> mmse_sum{};
  for (int i = 0; i < 4; ++i) {
    acc[i].cdr = static_cast<CdrRating>(i);
    acc[i].fine = map_cdr_to_binary(acc[i].cdr).fine_grained;
  }
  for (const SubjectRecord& r : records) {
    const int i = static_cast<int>(r.cdr);
    acc[i].count += 1;
    age_sum[i] += r.age;
    if (r.mmse) {
      mmse_sum[i] += *r.mmse;
      acc[i].mmse_count += 1;
    }
    switch (r.sex) {
      case Sex::kMale: acc[i].n_male += 1; break;
      case Sex::kFemale: acc[i].n_female += 1; break;
      case Sex::kUnknown: acc[i].n_unknown += 1; break;
    }
  }
  std::vector<CohortSummaryRow> rows;
  for (int i = 0; i < 4; ++i) {
    if (acc[i].count == 0) continue;
    acc[i].mean_age = age_sum[i] / acc[i].count;
    if (acc[i].mmse_count > 0) acc[i].mean_mmse = mmse_sum[i] / acc[i].mmse_count;
    rows.push_back(acc[i]);
  }
  return rows;
}

std::string format_cohort_summary(const std::vector<CohortSummaryRow>& rows) {
  std::ostringstream os;
  char buf[160];
  std::snprintf(buf, sizeof(buf), "%-4s %-12s %6s %9s %10s %6s %8s\n", "CDR", "Label", "N",
                "MeanAge", "MeanMMSE", "Male", "Female");
  os << buf;
  for (const CohortSummaryRow& r : rows) {
    char mmse[32];
    if (r.mean_mmse) {
      std::snprintf(mmse, sizeof(mmse), "%10.2f", *r.mean_mmse);
    } else {
      std::snprintf(mmse, sizeof(mmse), "%10s", "-");
    }
    std::snprintf(buf, sizeof(buf), "%-4s %-12s %6d %9.2f %s %6d %8d\n",
                  cdr_to_string(r.cdr).c_str(), to_string(r.fine).c_str(), r.count, r.mean_age,
                  mmse, r.n_male, r.n_female);
    os << buf;
  }
  return os.str();
}

}  // namespace volfuse
