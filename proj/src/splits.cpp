#include "volfuse/splits.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <map>
#include <set>

#include "volfuse/errors.hpp"
#include "volfuse/rng.hpp"

namespace volfuse {
namespace {

// Stream tags for deriving independent RNG streams from the plan seed.
constexpr std::uint64_t kFoldDealStream = 0xF01DDEA1;
constexpr std::uint64_t kValSplitStream = 0x7A11DA7E;
constexpr std::uint64_t kHoldoutStream = 0x401DB07;

// Stratum label used in error messages and for deterministic class ordering.
std::string class_display_name(StratifyOn mode, const SubjectRecord& rec) {
  if (mode == StratifyOn::kBinary) {
    return map_cdr_to_binary(rec.cdr).value == BinaryLabel::kDemented ? "Demented"
                                                                : "NonDemented";
  }
  return "CDR=" + cdr_to_string(rec.cdr);
}

int class_index(StratifyOn mode, const SubjectRecord& rec) {
  if (mode == StratifyOn::kBinary) {
    return map_cdr_to_binary(rec.cdr).value == BinaryLabel::kDemented ? 1 : 0;
  }
  return static_cast<int>(rec.cdr);
}

// Groups subject ids per stratum, each group sorted by id; map key gives a
// deterministic class iteration order.
std::map<int, std::vector<std::string>> group_by_class(
    const std::vector<SubjectRecord>& records, StratifyOn mode,
    std::map<int, std::string>& names) {
  std::map<int, std::vector<std::string>> groups;
  for (const auto& rec : records) {
    const int c = class_index(mode, rec);
    groups[c].push_back(rec.subject_id);
    names.emplace(c, class_display_name(mode, rec));
  }
  for (auto& [c, ids] : groups) std::sort(ids.begin(), ids.end());
  return groups;
}

// Largest-remainder apportionment of n items over the given fractions; ties
// between equal remainders go to the earlier partition.
std::array<std::size_t, 3> largest_remainder_counts(
    std::size_t n, const std::array<double, 3>& fractions) {
  std::array<std::size_t, 3> counts{};
  std::array<double, 3> remainder{};
  std::size_t assigned = 0;
  for (int i = 0; i < 3; ++i) {
    const double exact = n * fractions[i];
    counts[i] = static_cast<std::size_t>(std::floor(exact + 1e-12));
    remainder[i] = exact - counts[i];
    assigned += counts[i];
  }
  std::array<int, 3> order = {0, 1, 2};
  std::stable_sort(order.begin(), order.end(),
                   [&](int a, int b) { return remainder[a] > remainder[b]; });
  for (std::size_t r = 0; r < n - assigned; ++r) ++counts[order[r % 3]];
  return counts;
}

void check_fractions(const std::array<double, 3>& fractions) {
  double sum = 0.0;
  for (double f : fractions) {
    if (f < 0.0) throw ConfigError("split fractions must be non-negative");
    sum += f;
  }
  if (std::fabs(sum - 1.0) > 1e-9) {
    throw ConfigError("split fractions must sum to 1 (got " +
                      std::to_string(sum) + ")");
  }
}

}  // namespace

std::string to_string(StratifyOn s) {
  return s == StratifyOn::kBinary ? "binary" : "fine_grained";
}

StratifyOn stratify_on_from_string(const std::string& s) {
  if (s == "binary") return StratifyOn::kBinary;
  if (s == "fine_grained") return StratifyOn::kFineGrained;
  throw ConfigError("unknown stratify_on value '" + s + "'");
}

std::string to_string(Partition p) {
  switch (p) {
    case Partition::kTrain: return "train";
    case Partition::kVal: return "val";
    case Partition::kTest: return "test";
  }
  throw Error("unreachable partition value");
}

Partition partition_from_string(const std::string& s) {
  if (s == "train") return Partition::kTrain;
  if (s == "val") return Partition::kVal;
  if (s == "test") return Partition::kTest;
  throw ConfigError("unknown partition '" + s + "'");
}

nlohmann::ordered_json to_json(const FoldPlan& plan) {
  nlohmann::ordered_json j;
  j["k"] = plan.k;
  j["seed"] = plan.seed;
  j["stratify_on"] = to_string(plan.stratify_on);
  j["folds"] = nlohmann::ordered_json::array();
  for (const auto& fold : plan.folds) {
    nlohmann::ordered_json f;
    f["train"] = fold.train;
    f["val"] = fold.val;
    f["test"] = fold.test;
    j["folds"].push_back(std::move(f));
  }
  return j;
}

FoldPlan fold_plan_from_json(const nlohmann::json& j) {
  FoldPlan plan;
  try {
    plan.k = j.at("k").get<int>();
    plan.seed = j.at("seed").get<std::uint64_t>();
    plan.stratify_on = stratify_on_from_string(j.at("stratify_on").get<std::string>());
    for (const auto& f : j.at("folds")) {
      FoldMembers m;
      m.train = f.at("train").get<std::vector<std::string>>();
      m.val = f.at("val").get<std::vector<std::string>>();
      m.test = f.at("test").get<std::vector<std::string>>();
      plan.folds.push_back(std::move(m));
    }
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("malformed fold plan JSON: ") + e.what());
  }
  if (plan.k != static_cast<int>(plan.folds.size())) {
    throw ParseError("fold plan k does not match the folds array length");
  }
  return plan;
}

nlohmann::ordered_json to_json(const LeakageReport& report) {
  nlohmann::ordered_json j;
  j["clean"] = report.clean;
  j["violations"] = nlohmann::ordered_json::array();
  for (const auto& v : report.violations) {
    nlohmann::ordered_json e;
    e["subject_id"] = v.subject_id;
    e["fold"] = v.fold;
    e["roles"] = v.roles;
    j["violations"].push_back(std::move(e));
  }
  return j;
}

FoldPlan stratified_subject_kfold(const std::vector<SubjectRecord>& records, int k,
                                  std::uint64_t seed, double val_fraction,
                                  StratifyOn stratify_on) {
  if (k < 2) throw ConfigError("k-fold requires k >= 2");
  if (!(val_fraction > 0.0 && val_fraction < 1.0)) {
    throw ConfigError("val_fraction must lie in (0, 1)");
  }
  if (records.empty()) throw DegenerateInputError("empty cohort");

  std::map<int, std::string> names;
  auto groups = group_by_class(records, stratify_on, names);
  for (const auto& [c, ids] : groups) {
    if (static_cast<int>(ids.size()) < k) {
      throw StratificationError("stratum '" + names[c] + "' has " +
                                std::to_string(ids.size()) +
                                " subjects, fewer than k=" + std::to_string(k));
    }
  }

  // Deal each stratum round-robin; j % k sends remainders to the lowest fold
  // indices automatically.
  std::vector<std::map<int, std::vector<std::string>>> fold_members(k);
  for (auto& [c, ids] : groups) {
    Rng rng(derive_seed(seed, kFoldDealStream + static_cast<std::uint64_t>(c)));
    rng.shuffle(ids);
    for (std::size_t j = 0; j < ids.size(); ++j) {
      fold_members[j % k][c].push_back(ids[j]);
    }
  }

  FoldPlan plan;
  plan.k = k;
  plan.seed = seed;
  plan.stratify_on = stratify_on;
  plan.folds.resize(k);

  for (int i = 0; i < k; ++i) {
    FoldMembers& fold = plan.folds[i];
    for (const auto& [c, ids] : fold_members[i]) {
      fold.test.insert(fold.test.end(), ids.begin(), ids.end());
    }
    // Remaining subjects (all folds except i), per class, split train/val.
    for (const auto& [c, all_ids] : groups) {
      std::vector<std::string> rest;
      for (int j = 0; j < k; ++j) {
        if (j == i) continue;
        const auto it = fold_members[j].find(c);
        if (it != fold_members[j].end()) {
          rest.insert(rest.end(), it->second.begin(), it->second.end());
        }
      }
      if (rest.size() < 2) {
        throw StratificationError(
            "stratum '" + names[c] + "' leaves only " +
            std::to_string(rest.size()) + " non-test subjects for fold " +
            std::to_string(i) + "; cannot populate both train and val");
      }
      std::sort(rest.begin(), rest.end());
      Rng rng(derive_seed(seed, kValSplitStream +
                                    static_cast<std::uint64_t>(i) * 64 +
                                    static_cast<std::uint64_t>(c)));
      rng.shuffle(rest);
      // At least one validation subject per class, even when the fraction
      // rounds to zero; checkpoint selection needs both classes present.
      std::size_t n_val = static_cast<std::size_t>(
          std::llround(static_cast<double>(rest.size()) * val_fraction));
      n_val = std::clamp<std::size_t>(n_val, 1, rest.size() - 1);
      fold.val.insert(fold.val.end(), rest.begin(), rest.begin() + n_val);
      fold.train.insert(fold.train.end(), rest.begin() + n_val, rest.end());
    }
    std::sort(fold.train.begin(), fold.train.end());
    std::sort(fold.val.begin(), fold.val.end());
    std::sort(fold.test.begin(), fold.test.end());
  }
  return plan;
}

FoldPlan subject_level_holdout(const std::vector<SubjectRecord>& records,
                               const std::array<double, 3>& fractions,
                               std::uint64_t seed, StratifyOn stratify_on) {
  check_fractions(fractions);
  if (records.empty()) throw DegenerateInputError("empty cohort");

  std::map<int, std::string> names;
  auto groups = group_by_class(records, stratify_on, names);

  FoldPlan plan;
  plan.k = 1;
  plan.seed = seed;
  plan.stratify_on = stratify_on;
  plan.folds.resize(1);
  FoldMembers& fold = plan.folds[0];

  for (auto& [c, ids] : groups) {
    Rng rng(derive_seed(seed, kHoldoutStream + static_cast<std::uint64_t>(c)));
    rng.shuffle(ids);
    const auto counts = largest_remainder_counts(ids.size(), fractions);
    if (ids.size() >= 3 && (counts[0] == 0 || counts[1] == 0 || counts[2] == 0)) {
      std::fprintf(stderr,
                   "warning: class '%s' (%zu subjects) leaves an empty "
                   "partition under fractions %.2f/%.2f/%.2f\n",
                   names[c].c_str(), ids.size(), fractions[0], fractions[1],
                   fractions[2]);
    }
    std::size_t pos = 0;
    fold.train.insert(fold.train.end(), ids.begin() + pos, ids.begin() + pos + counts[0]);
    pos += counts[0];
    fold.val.insert(fold.val.end(), ids.begin() + pos, ids.begin() + pos + counts[1]);
    pos += counts[1];
    fold.test.insert(fold.test.end(), ids.begin() + pos, ids.begin() + pos + counts[2]);
  }
  std::sort(fold.train.begin(), fold.train.end());
  std::sort(fold.val.begin(), fold.val.end());
  std::sort(fold.test.begin(), fold.test.end());
  return plan;
}

SliceAssignment slice_level_split(const std::vector<SliceKey>& slices,
                                  const std::array<double, 3>& fractions,
                                  std::uint64_t seed) {
  check_fractions(fractions);
  if (slices.empty()) throw DegenerateInputError("empty slice list");

  std::vector<std::size_t> order(slices.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  Rng rng(seed);
  rng.shuffle(order);

  const auto counts = largest_remainder_counts(slices.size(), fractions);
  std::vector<Partition> part(slices.size());
  for (std::size_t r = 0; r < order.size(); ++r) {
    Partition p = Partition::kTest;
    if (r < counts[0]) {
      p = Partition::kTrain;
    } else if (r < counts[0] + counts[1]) {
      p = Partition::kVal;
    }
    part[order[r]] = p;
  }

  SliceAssignment out;
  out.mode = SliceAssignment::Mode::kSliceLevel;
  out.entries.reserve(slices.size());
  for (std::size_t i = 0; i < slices.size(); ++i) {
    out.entries.push_back({slices[i], part[i]});
  }
  return out;
}

SliceAssignment assign_slices_by_subject(const std::vector<SliceKey>& slices,
                                         const FoldPlan& plan) {
  if (plan.folds.size() != 1) {
    throw ConfigError("subject-level slice assignment needs a single-fold plan");
  }
  std::map<std::string, Partition> role;
  for (const auto& id : plan.folds[0].train) role[id] = Partition::kTrain;
  for (const auto& id : plan.folds[0].val) role[id] = Partition::kVal;
  for (const auto& id : plan.folds[0].test) role[id] = Partition::kTest;

  SliceAssignment out;
  out.mode = SliceAssignment::Mode::kSubjectLevel;
  out.entries.reserve(slices.size());
  for (const auto& key : slices) {
    const auto it = role.find(key.subject_id);
    if (it == role.end()) {
      throw Error("slice subject '" + key.subject_id + "' is not in the plan");
    }
    out.entries.push_back({key, it->second});
  }
  return out;
}

LeakageReport audit_leakage(const FoldPlan& plan) {
  LeakageReport report;

  // Within-fold role intersections.
  for (std::size_t i = 0; i < plan.folds.size(); ++i) {
    const FoldMembers& fold = plan.folds[i];
    const std::vector<std::string>* roles[3] = {&fold.train, &fold.val, &fold.test};
    const char* role_names[3] = {"train", "val", "test"};
    std::set<std::string> sets[3];
    for (int r = 0; r < 3; ++r) sets[r] = {roles[r]->begin(), roles[r]->end()};
    for (int a = 0; a < 3; ++a) {
      for (int b = a + 1; b < 3; ++b) {
        for (const auto& id : sets[a]) {
          if (sets[b].count(id)) {
            report.violations.push_back(
                {id, static_cast<int>(i), {role_names[a], role_names[b]}});
          }
        }
      }
    }
  }

  // Cross-fold test intersections: each subject must be tested exactly once.
  std::map<std::string, std::vector<int>> test_folds;
  for (std::size_t i = 0; i < plan.folds.size(); ++i) {
    for (const auto& id : plan.folds[i].test) {
      test_folds[id].push_back(static_cast<int>(i));
    }
  }
  for (const auto& [id, folds] : test_folds) {
    if (folds.size() > 1) {
      LeakageViolation v;
      v.subject_id = id;
      v.fold = folds.front();
      for (int f : folds) v.roles.push_back("test@fold" + std::to_string(f));
      report.violations.push_back(std::move(v));
    }
  }

  report.clean = report.violations.empty();
  return report;
}

LeakageReport audit_leakage(const SliceAssignment& assignment) {
  LeakageReport report;
  std::map<std::string, std::set<Partition>> spans;
  for (const auto& e : assignment.entries) {
    spans[e.key.subject_id].insert(e.partition);
  }
  for (const auto& [id, parts] : spans) {
    if (parts.size() > 1) {
      LeakageViolation v;
      v.subject_id = id;
      v.fold = 0;
      for (Partition p : parts) v.roles.push_back(to_string(p));
      report.violations.push_back(std::move(v));
    }
  }
  report.clean = report.violations.empty();
  return report;
}

}  // namespace volfuse
