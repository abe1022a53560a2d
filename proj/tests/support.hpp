// Shared fixtures for the test suites: synthetic cohorts, phantom-backed
// training samples, scratch directories, and an independent brute-force AUC.
#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include "volfuse/core_types.hpp"
#include "volfuse/ingest.hpp"
#include "volfuse/phantom.hpp"
#include "volfuse/train.hpp"

namespace volfuse::testing {

// Fresh per-test scratch directory under the test binary's working directory.
inline std::filesystem::path scratch_dir(const std::string& name) {
  const std::filesystem::path dir = std::filesystem::path("scratch") / name;
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

// n_control records with CDR 0 followed by n_demented with CDR 0.5.
// Ages/sexes vary deterministically so summary statistics are nontrivial.
inline std::vector<SubjectRecord> synthetic_records(int n_control, int n_demented) {
  std::vector<SubjectRecord> records;
  const int total = n_control + n_demented;
  records.reserve(total);
  for (int i = 0; i < total; ++i) {
    SubjectRecord r;
    char id[16];
    std::snprintf(id, sizeof(id), "sub-%04d", i);
    r.subject_id = id;
    r.cdr = i < n_control ? CdrRating::kZero : CdrRating::kHalf;
    r.age = 60.0 + i % 25;
    r.sex = i % 2 == 0 ? Sex::kFemale : Sex::kMale;
    records.push_back(std::move(r));
  }
  return records;
}

// Normalized four-channel training sample from one phantom subject.
inline Sample sample_from_phantom(const PhantomSubject& subject) {
  const ModalityStack norm = assemble_modality_stack(
      subject.record.subject_id, subject.stack.channel(Modality::kT1),
      subject.stack.channel(Modality::kGm), subject.stack.channel(Modality::kWm),
      subject.stack.channel(Modality::kCsf));
  const Dims3 d = norm.channel(Modality::kT1).dims;
  Sample s;
  s.sample_id = subject.record.subject_id;
  s.subject_id = subject.record.subject_id;
  s.label = subject.record.label().value == BinaryLabel::kDemented ? 1 : 0;
  s.input = Tensor<float>({4, static_cast<std::size_t>(d.z), static_cast<std::size_t>(d.y),
                           static_cast<std::size_t>(d.x)});
  for (int m = 0; m < kNumModalities; ++m) {
    const VolumeGrid& g = norm.channels[m];
    std::copy(g.voxels.begin(), g.voxels.end(),
              s.input.ptr() + static_cast<std::size_t>(m) * g.voxels.size());
  }
  return s;
}

struct PhantomFixture {
  PhantomCohort cohort;
  std::vector<SubjectRecord> records;
  Dataset samples;  // cohort order

  SampleLoader loader() const {
    return [this](const SubjectRecord& r) {
      for (const Sample& s : samples) {
        if (s.subject_id == r.subject_id) return s;
      }
      throw Error("no sample for subject '" + r.subject_id + "'");
    };
  }
};

inline PhantomFixture make_phantom_fixture(int n, double demented_fraction,
                                           std::uint64_t seed, int grid_side = 16) {
  PhantomCohortOptions options;
  options.grid = {grid_side, grid_side, grid_side};
  PhantomFixture fx;
  fx.cohort = generate_phantom_cohort(n, demented_fraction, seed, options);
  fx.records = fx.cohort.records();
  for (const PhantomSubject& p : fx.cohort.subjects) {
    fx.samples.push_back(sample_from_phantom(p));
  }
  return fx;
}

// Exact AUC as 2*sum(per-pair score) in integer arithmetic: win = 2, tie = 1.
// Returns {doubled_sum, 2 * n_pos * n_neg}; AUC == first / second.
inline std::pair<long long, long long> brute_force_auc_doubled(
    const std::vector<int>& truth, const std::vector<double>& score) {
  long long doubled = 0, pairs = 0;
  for (std::size_t i = 0; i < truth.size(); ++i) {
    if (truth[i] != 1) continue;
    for (std::size_t j = 0; j < truth.size(); ++j) {
      if (truth[j] != 0) continue;
      pairs += 2;
      if (score[i] > score[j]) doubled += 2;
      else if (score[i] == score[j]) doubled += 1;
    }
  }
  return {doubled, pairs};
}

}  // namespace volfuse::testing
