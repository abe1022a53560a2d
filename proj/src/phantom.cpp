#include "volfuse/phantom.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <utility>

#include "volfuse/manifest.hpp"
#include "volfuse/nifti.hpp"
#include "volfuse/rng.hpp"

namespace volfuse {
namespace {

// Tissue intensities of the piecewise-constant T1 channel.
constexpr float kCsfIntensity = 0.2f;
constexpr float kGmIntensity = 0.5f;
constexpr float kWmIntensity = 0.8f;

// Ellipsoid semi-axes as fractions of the grid dims.
constexpr double kBrainFrac[3] = {0.42, 0.40, 0.36};
constexpr double kVentricleFrac[3] = {0.10, 0.14, 0.10};

struct Ellipsoid {
  double cx, cy, cz;
  double sx, sy, sz;  // semi-axes in voxels

  bool contains(int x, int y, int z) const {
    const double dx = (x - cx) / sx;
    const double dy = (y - cy) / sy;
    const double dz = (z - cz) / sz;
    return dx * dx + dy * dy + dz * dz <= 1.0;
  }
};

// Low-frequency cosine mixture, normalized to a fixed peak amplitude.
struct TextureField {
  struct Mode {
    double fx, fy, fz, phase, amp;
  };
  std::vector<Mode> modes;
  double scale = 0.0;
  Dims3 dims;

  double raw(int x, int y, int z) const {
    double t = 0.0;
    for (const Mode& m : modes) {
      const double arg = 6.283185307179586 * (m.fx * x / dims.x + m.fy * y / dims.y +
                                              m.fz * z / dims.z) +
                         m.phase;
      t += m.amp * std::cos(arg);
    }
    return t;
  }
  double value(int x, int y, int z) const { return scale * raw(x, y, z); }
};

TextureField make_texture(Rng& rng, Dims3 dims, double amplitude) {
  TextureField field;
  field.dims = dims;
  constexpr int kModes = 6;
  for (int m = 0; m < kModes; ++m) {
    TextureField::Mode mode;
    mode.fx = rng.uniform(0.5, 1.75);
    mode.fy = rng.uniform(0.5, 1.75);
    mode.fz = rng.uniform(0.5, 1.75);
    mode.phase = rng.uniform(0.0, 6.283185307179586);
    mode.amp = rng.uniform(0.5, 1.0);
    field.modes.push_back(mode);
  }
  double peak = 0.0;
  for (int z = 0; z < dims.z; ++z)
    for (int y = 0; y < dims.y; ++y)
      for (int x = 0; x < dims.x; ++x) peak = std::max(peak, std::fabs(field.raw(x, y, z)));
  field.scale = peak > 0.0 ? amplitude / peak : 0.0;
  return field;
}

}  // namespace

std::int64_t mask_voxel_count(const VolumeGrid& mask) {
  std::int64_t n = 0;
  for (float v : mask.voxels) n += v != 0.0f ? 1 : 0;
  return n;
}

PhantomSubject generate_phantom_subject(const PhantomSpec& spec, const std::string& subject_id) {
  const Dims3 d = spec.grid;
  if (d.x < 8 || d.y < 8 || d.z < 8) throw GeometryError("phantom grid must be at least 8^3");
  if (spec.noise_sigma < 0.0) throw Error("noise_sigma must be >= 0");
  if (spec.ventricle_scale < 1.0) throw Error("ventricle_scale must be >= 1");

  const bool demented = spec.label.value == BinaryLabel::kDemented;
  const double thickness = std::max(0.0, spec.cortex_thickness - (demented ? 1.0 : 0.0));

  Ellipsoid brain{(d.x - 1) / 2.0, (d.y - 1) / 2.0, (d.z - 1) / 2.0,
                  kBrainFrac[0] * d.x,  kBrainFrac[1] * d.y,  kBrainFrac[2] * d.z};
  Ellipsoid inner = brain;
  inner.sx -= thickness;
  inner.sy -= thickness;
  inner.sz -= thickness;
  Ellipsoid ventricle = brain;
  ventricle.sx = kVentricleFrac[0] * d.x * spec.ventricle_scale;
  ventricle.sy = kVentricleFrac[1] * d.y * spec.ventricle_scale;
  ventricle.sz = kVentricleFrac[2] * d.z * spec.ventricle_scale;

  if (ventricle.sx >= inner.sx || ventricle.sy >= inner.sy || ventricle.sz >= inner.sz) {
    throw GeometryError("ventricle (scale " + std::to_string(spec.ventricle_scale) +
                        ") does not fit strictly inside the brain interior on grid " +
                        to_string(d));
  }

  PhantomSubject out;
  out.record.subject_id = subject_id;
  out.stack.subject_id = subject_id;

  VolumeGrid t1 = make_volume(d);
  VolumeGrid gm = make_volume(d);
  VolumeGrid wm = make_volume(d);
  VolumeGrid csf = make_volume(d);
  out.masks.brain = make_volume(d);
  out.masks.ventricle = make_volume(d);
  out.masks.cortex = make_volume(d);

  Rng rng(spec.texture_seed);
  const TextureField texture = make_texture(rng, d, spec.texture_amplitude);

  // x-fastest scan order; noise draws happen only inside the brain so the
  // background stays exactly zero (ingest's default brain mask relies on it).
  std::size_t i = 0;
  for (int z = 0; z < d.z; ++z) {
    for (int y = 0; y < d.y; ++y) {
      for (int x = 0; x < d.x; ++x, ++i) {
        if (!brain.contains(x, y, z)) continue;
        out.masks.brain.voxels[i] = 1.0f;
        float base;
        if (ventricle.contains(x, y, z)) {
          out.masks.ventricle.voxels[i] = 1.0f;
          csf.voxels[i] = 1.0f;
          base = kCsfIntensity;
        } else if (inner.contains(x, y, z)) {
          wm.voxels[i] = 1.0f;
          base = kWmIntensity;
        } else {
          out.masks.cortex.voxels[i] = 1.0f;
          gm.voxels[i] = 1.0f;
          base = kGmIntensity;
        }
        const double modulated = base * (1.0 + texture.value(x, y, z));
        const double noisy = modulated + spec.noise_sigma * rng.normal();
        t1.voxels[i] = static_cast<float>(noisy);
      }
    }
  }

  out.stack.channels = {std::move(t1), std::move(gm), std::move(wm), std::move(csf)};

  // Demographics, seeded off the texture seed so they are per-subject stable.
  Rng demo(derive_seed(spec.texture_seed, 0x0DE11A));
  out.record.cdr = demented ? CdrRating::kHalf : CdrRating::kZero;
  out.record.age = std::floor(demo.uniform(62.0, 92.0) * 10.0) / 10.0;
  const double mmse_lo = demented ? 18.0 : 26.0;
  const double mmse_hi = demented ? 27.0 : 30.0;
  out.record.mmse = std::floor(demo.uniform(mmse_lo, mmse_hi));
  out.record.sex = demo.coin() ? Sex::kFemale : Sex::kMale;
  return out;
}

std::vector<SubjectRecord> PhantomCohort::records() const {
  std::vector<SubjectRecord> out;
  out.reserve(subjects.size());
  for (const PhantomSubject& s : subjects) out.push_back(s.record);
  return out;
}

PhantomCohort generate_phantom_cohort(int n_subjects, double demented_fraction,
                                      std::uint64_t base_seed,
                                      const PhantomCohortOptions& options) {
  if (n_subjects < 2) throw ConfigError("phantom cohort needs at least 2 subjects");
  if (demented_fraction < 0.0 || demented_fraction > 1.0) {
    throw ConfigError("demented_fraction must lie in [0, 1]");
  }

  const int n_demented = static_cast<int>(std::llround(n_subjects * demented_fraction));
  std::vector<int> is_demented(n_subjects, 0);
  std::fill(is_demented.begin(), is_demented.begin() + n_demented, 1);
  Rng rng(derive_seed(base_seed, 0xC0407));
  rng.shuffle(is_demented);

  PhantomCohort cohort;
  cohort.subjects.reserve(n_subjects);
  for (int i = 0; i < n_subjects; ++i) {
    PhantomSpec spec;
    spec.grid = options.grid;
    spec.label = map_cdr_to_binary(is_demented[i] ? CdrRating::kHalf : CdrRating::kZero);
    spec.ventricle_scale = is_demented[i] ? options.ventricle_scale_demented
                                          : options.ventricle_scale_nondemented;
    spec.cortex_thickness = options.cortex_thickness;
    spec.noise_sigma = options.noise_sigma;
    spec.texture_amplitude = options.texture_amplitude;
    spec.texture_seed = derive_seed(base_seed, static_cast<std::uint64_t>(i) + 1);

    char id[32];
    std::snprintf(id, sizeof(id), "sub-%04d", i + 1);
    cohort.subjects.push_back(generate_phantom_subject(spec, id));
  }
  return cohort;
}

std::vector<SubjectRecord> write_phantom_cohort(const PhantomCohort& cohort,
                                                const std::filesystem::path& out_dir) {
  namespace fs = std::filesystem;
  fs::create_directories(out_dir / "data");
  fs::create_directories(out_dir / "masks");

  std::vector<SubjectRecord> records;
  records.reserve(cohort.subjects.size());
  for (const PhantomSubject& s : cohort.subjects) {
    const std::string& id = s.record.subject_id;
    SubjectRecord rec = s.record;
    const std::array<std::pair<Modality, const char*>, 4> channels = {{
        {Modality::kT1, "t1"},
        {Modality::kGm, "gm"},
        {Modality::kWm, "wm"},
        {Modality::kCsf, "csf"},
    }};
    for (const auto& [mod, tag] : channels) {
      const std::string rel = "data/" + id + "_" + tag + ".nii";
      write_nifti_volume(out_dir / rel, s.stack.channel(mod));
      rec.modality_paths[mod] = rel;
    }
    write_nifti_volume(out_dir / ("masks/" + id + "_brain.nii"), s.masks.brain);
    write_nifti_volume(out_dir / ("masks/" + id + "_ventricle.nii"), s.masks.ventricle);
    write_nifti_volume(out_dir / ("masks/" + id + "_cortex.nii"), s.masks.cortex);
    records.push_back(std::move(rec));
  }
  write_manifest(out_dir / "manifest.csv", records);
  return records;
}

}  // namespace volfuse
