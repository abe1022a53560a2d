// Subject-level stratified K-fold construction, diagnostic holdout/slice
// splits, and the leakage audit that every training plan must pass.
#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include <json.hpp>

#include "volfuse/core_types.hpp"

namespace volfuse {

enum class StratifyOn { kBinary, kFineGrained };

std::string to_string(StratifyOn s);
StratifyOn stratify_on_from_string(const std::string& s);

struct FoldMembers {
  std::vector<std::string> train;
  std::vector<std::string> val;
  std::vector<std::string> test;
};

struct FoldPlan {
  int k = 0;
  std::uint64_t seed = 0;
  StratifyOn stratify_on = StratifyOn::kBinary;
  std::vector<FoldMembers> folds;
};

nlohmann::ordered_json to_json(const FoldPlan& plan);
FoldPlan fold_plan_from_json(const nlohmann::json& j);

struct LeakageViolation {
  std::string subject_id;
  int fold = 0;                    // first fold involved
  std::vector<std::string> roles;  // e.g. {"train", "test"} or {"test@fold0", "test@fold3"}
};

struct LeakageReport {
  bool clean = true;  // invariant: clean iff violations.empty()
  std::vector<LeakageViolation> violations;
};

nlohmann::ordered_json to_json(const LeakageReport& report);

enum class Partition { kTrain, kVal, kTest };

std::string to_string(Partition p);
Partition partition_from_string(const std::string& s);

// Identifies one 2D slice extracted from a subject's volume.
struct SliceKey {
  std::string subject_id;
  int axis = 2;   // 0 = sagittal (x), 1 = coronal (y), 2 = axial (z)
  int index = 0;  // slice position along the axis
};

struct SliceAssignment {
  enum class Mode { kSliceLevel, kSubjectLevel };

  struct Entry {
    SliceKey key;
    Partition partition = Partition::kTrain;
  };

  Mode mode = Mode::kSliceLevel;
  std::vector<Entry> entries;
};

// Builds a stratified K-fold plan: per class, subjects are sorted by id,
// shuffled with the seeded generator, and dealt round-robin to folds
// (remainders land on the lowest fold indices). Fold i's members form its
// test list; the rest are split train/val by `val_fraction`, stratified, with
// at least one validation subject per class. Deterministic in
// (records, k, seed).
//
// Throws StratificationError (naming the class) when any stratum has fewer
// than k members, or when a fold leaves a class unable to populate both train
// and val. Throws ConfigError for k < 2 or val_fraction outside (0, 1).
FoldPlan stratified_subject_kfold(const std::vector<SubjectRecord>& records, int k,
                                  std::uint64_t seed, double val_fraction = 0.10,
                                  StratifyOn stratify_on = StratifyOn::kBinary);

// Single-fold stratified holdout. Per class, counts come from largest-
// remainder rounding of fractions·class_size, ties resolved toward the
// earlier partition in (train, val, test) order. Warns on stderr when a class
// with >= 3 members leaves some partition empty.
FoldPlan subject_level_holdout(const std::vector<SubjectRecord>& records,
                               const std::array<double, 3>& fractions,
                               std::uint64_t seed,
                               StratifyOn stratify_on = StratifyOn::kBinary);

// The deliberately leaky protocol: slices are shuffled and partitioned with
// no regard for which subject they came from.
SliceAssignment slice_level_split(const std::vector<SliceKey>& slices,
                                  const std::array<double, 3>& fractions,
                                  std::uint64_t seed);

// The corrected protocol: every slice inherits its subject's partition from a
// single-fold plan (throws if a slice's subject is missing from the plan).
SliceAssignment assign_slices_by_subject(const std::vector<SliceKey>& slices,
                                         const FoldPlan& plan);

// Post-hoc intersection check: within each fold, pairwise role intersections;
// across folds, test-list intersections. Pure; reports every offender.
LeakageReport audit_leakage(const FoldPlan& plan);

// Subject-identity audit for slice assignments: any subject whose slices span
// more than one partition is a violation.
LeakageReport audit_leakage(const SliceAssignment& assignment);

}  // namespace volfuse
