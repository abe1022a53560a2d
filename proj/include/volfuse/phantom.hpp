#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "volfuse/core_types.hpp"

namespace volfuse {

// Deterministic synthetic "brain": nested ellipsoids (cortex shell, white
// matter interior, ventricular CSF) on a voxel grid, with a per-subject smooth
// multiplicative texture field and in-brain Gaussian noise on the T1 channel.
struct PhantomSpec {
  Dims3 grid = {32, 32, 32};
  DiagnosisLabel label;                 // drives ventricle scale default + cortex thinning
  double ventricle_scale = 1.0;         // >= 1; Demented cohorts default to 1.6
  double cortex_thickness = 2.0;        // voxels; Demented phantoms are thinned by 1
  std::uint64_t texture_seed = 0;
  double noise_sigma = 0.05;            // >= 0
  double texture_amplitude = 0.10;      // peak fractional intensity modulation
};

// Boolean masks stored as 0/1 VolumeGrids.
// ventricle and cortex are disjoint subsets of brain.
struct GroundTruthMasks {
  VolumeGrid brain;
  VolumeGrid ventricle;
  VolumeGrid cortex;
};

std::int64_t mask_voxel_count(const VolumeGrid& mask);

struct PhantomSubject {
  SubjectRecord record;
  ModalityStack stack;   // raw T1 (unnormalized) + exact tissue membership maps
  GroundTruthMasks masks;
};

// Deterministic given (spec, subject_id). Throws GeometryError when the
// (scaled) ventricle would not fit strictly inside the white-matter interior.
PhantomSubject generate_phantom_subject(const PhantomSpec& spec, const std::string& subject_id);

struct PhantomCohortOptions {
  Dims3 grid = {32, 32, 32};
  double ventricle_scale_demented = 1.6;
  double ventricle_scale_nondemented = 1.0;
  double cortex_thickness = 2.0;
  double noise_sigma = 0.05;
  double texture_amplitude = 0.10;
};

struct PhantomCohort {
  std::vector<PhantomSubject> subjects;

  std::vector<SubjectRecord> records() const;
};

// round(n * demented_fraction) Demented subjects with seed-determined label
// placement, unique subject_ids, and distinct texture seeds. n >= 2.
PhantomCohort generate_phantom_cohort(int n_subjects, double demented_fraction,
                                      std::uint64_t base_seed,
                                      const PhantomCohortOptions& options = {});

// Writes the on-disk layout ingest reads: <out>/manifest.csv plus
// data/<id>_{t1,gm,wm,csf}.nii and masks/<id>_{brain,ventricle,cortex}.nii.
// Manifest paths are relative to the manifest location. Returns the records
// as written (paths filled in).
std::vector<SubjectRecord> write_phantom_cohort(const PhantomCohort& cohort,
                                                const std::filesystem::path& out_dir);

}  // namespace volfuse
