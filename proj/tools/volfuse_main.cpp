// volfuse command-line entry point.
//
// Exit codes: 0 success, 1 runtime failure, 2 invalid configuration or
// command line, 3 subject leakage (detected where a clean protocol was
// promised, or run deliberately via slice_level_diagnostic).
#include <CLI11.hpp>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>

#include "volfuse/errors.hpp"
#include "volfuse/ingest.hpp"
#include "volfuse/manifest.hpp"
#include "volfuse/nifti.hpp"
#include "volfuse/phantom.hpp"
#include "volfuse/pipeline.hpp"
#include "volfuse/saliency.hpp"
#include "volfuse/splits.hpp"
#include "volfuse/volume_ops.hpp"

namespace {

using namespace volfuse;

nlohmann::json load_json_file(const std::filesystem::path& file) {
  std::ifstream f(file);
  if (!f) throw ConfigError("cannot open '" + file.string() + "'");
  try {
    return nlohmann::json::parse(f);
  } catch (const nlohmann::json::exception& e) {
    throw ParseError("'" + file.string() + "' is not valid JSON: " + e.what());
  }
}

int cmd_phantom_gen(int n, double demented_frac, int size, std::uint64_t seed,
                    const std::string& out, const PhantomCohortOptions& base_options) {
  PhantomCohortOptions options = base_options;
  options.grid = {size, size, size};
  const PhantomCohort cohort = generate_phantom_cohort(n, demented_frac, seed, options);
  const auto records = write_phantom_cohort(cohort, out);

  int demented = 0;
  for (const auto& r : records) {
    if (r.label().value == BinaryLabel::kDemented) ++demented;
  }
  std::cout << "wrote " << records.size() << " phantom subjects (" << demented
            << " demented, " << records.size() - demented << " control) on a " << size
            << "x" << size << "x" << size << " grid\n"
            << "manifest: " << (std::filesystem::path(out) / "manifest.csv").string()
            << "\n";
  return 0;
}

int cmd_run(const std::string& config_path, std::uint64_t* seed_override,
            int* jobs_override, const std::string& out_override) {
  RunConfig cfg = run_config_from_json(load_json_file(config_path));
  if (seed_override) {
    cfg.seed = *seed_override;
    // The run seed feeds the training streams unless the config pinned one.
    cfg.training.seed = *seed_override;
  }
  if (jobs_override) cfg.jobs = *jobs_override;
  if (!out_override.empty()) cfg.out_dir = out_override;
  resolve_config_paths(cfg, std::filesystem::absolute(config_path).parent_path());

  const RunOutcome outcome = run_experiment(cfg);
  std::cout << "experiment '" << cfg.experiment << "' (" << to_string(cfg.mode)
            << ") finished; artifacts in " << outcome.experiment_dir.string() << "\n";
  if (outcome.cv_report) {
    const EvaluationReport& r = *outcome.cv_report;
    std::cout << "mean test accuracy " << r.accuracy_pct.mean << "% +- "
              << r.accuracy_pct.std_dev;
    if (r.folds.size() == static_cast<std::size_t>(r.k) && r.roc_auc.mean > 0.0) {
      std::cout << ", mean AUC " << r.roc_auc.mean << " +- " << r.roc_auc.std_dev;
    }
    std::cout << " over " << r.k << " folds\n";
  }
  if (outcome.slice_report) {
    const SliceProtocolReport& r = *outcome.slice_report;
    std::cout << "test accuracy " << r.test_metrics.accuracy_pct << "% (macro-F1 "
              << r.test_metrics.macro_f1 << ") over " << r.slice_counts[2]
              << " test slices\n";
    if (!r.audit.clean) {
      std::cout << "leakage audit: " << r.audit.violations.size()
                << " subject(s) span partitions - report marked invalid\n";
    }
  }
  return outcome.exit_code;
}

int cmd_gradcam(const std::string& checkpoint_path, const std::string& manifest_path,
                std::string data_root, const std::string& subject,
                const std::string& branch, int target_class, const std::string& plane,
                int index, const std::string& out) {
  if (!std::filesystem::exists(checkpoint_path)) {
    throw ConfigError("checkpoint '" + checkpoint_path + "' does not exist");
  }
  const Checkpoint ckpt = load_checkpoint(checkpoint_path);

  const auto records = read_manifest(manifest_path);
  const auto rec = std::find_if(records.begin(), records.end(),
                                [&](const SubjectRecord& r) {
                                  return r.subject_id == subject;
                                });
  if (rec == records.end()) {
    throw ConfigError("subject '" + subject + "' is not in the manifest");
  }

  if (const char* env = std::getenv("VOLFUSE_DATA_ROOT"); env && *env) data_root = env;
  if (data_root.empty()) {
    data_root = std::filesystem::path(manifest_path).parent_path().string();
  }
  IngestOptions io;
  io.base_dir = data_root;
  const ModalityStack stack = load_subject_stack(*rec, io);

  const SaliencyVolume saliency =
      gradcam(ckpt.config, ckpt.params, stack, target_class, branch);
  if (saliency.degenerate) {
    std::cerr << "note: the raw class activation map is identically zero\n";
  }

  const int axis = axis_from_plane_name(plane);
  const VolumeGrid& anatomy =
      stack.channel(modality_from_string(ckpt.config.modalities[0]));
  const int extent = axis == 0   ? anatomy.dims.x
                     : axis == 1 ? anatomy.dims.y
                                 : anatomy.dims.z;
  if (index < 0) index = extent / 2;

  std::filesystem::create_directories(out);
  const std::filesystem::path out_dir(out);
  const std::string stem = subject + "_gradcam_" + branch;
  const std::filesystem::path nii = out_dir / (stem + ".nii");
  const std::filesystem::path png =
      out_dir / (stem + "_" + plane + std::to_string(index) + ".png");
  save_saliency_nifti(saliency, nii);
  export_overlay(anatomy, saliency, axis, index, png);
  std::cout << "saliency volume: " << nii.string() << "\n"
            << "overlay: " << png.string() << "\n";

  // Region statistics only when the cohort ships ground-truth masks.
  const std::filesystem::path mask_dir = std::filesystem::path(data_root) / "masks";
  GroundTruthMasks masks;
  bool have_masks = true;
  for (const auto& [name, grid] : {std::pair<const char*, VolumeGrid*>{"brain", &masks.brain},
                                   {"ventricle", &masks.ventricle},
                                   {"cortex", &masks.cortex}}) {
    const std::filesystem::path p = mask_dir / (subject + "_" + name + ".nii");
    if (std::filesystem::exists(p)) {
      *grid = read_nifti_volume(p);
    } else {
      have_masks = false;
    }
  }
  if (have_masks) {
    const RegionSaliencyStats stats = region_saliency_stats(saliency, masks);
    nlohmann::ordered_json j;
    j["subject_id"] = subject;
    j["branch"] = branch;
    j["target_class"] = target_class;
    const auto region = [](const RegionStat& s) {
      return nlohmann::ordered_json{{"mean", s.mean}, {"voxels", s.voxels}};
    };
    j["ventricle"] = region(stats.ventricle);
    j["cortex"] = region(stats.cortex);
    j["brain"] = region(stats.brain);
    j["outside_brain"] = region(stats.outside_brain);
    const std::filesystem::path stats_file = out_dir / (stem + "_region_stats.json");
    std::ofstream f(stats_file, std::ios::binary | std::ios::trunc);
    if (!f) throw Error("cannot write '" + stats_file.string() + "'");
    f << j.dump(2) << "\n";
    std::cout << "region stats: " << stats_file.string() << "\n";
  } else {
    std::cout << "region stats skipped (no mask volumes under " << mask_dir.string()
              << ")\n";
  }
  return 0;
}

int cmd_split_plan(const std::string& manifest_path, int k, std::uint64_t seed,
                   double val_fraction, const std::string& stratify,
                   const std::string& out_file) {
  const auto records = read_manifest(manifest_path);
  const FoldPlan plan = stratified_subject_kfold(records, k, seed, val_fraction,
                                                 stratify_on_from_string(stratify));
  const LeakageReport audit = audit_leakage(plan);
  std::ofstream f(out_file, std::ios::binary | std::ios::trunc);
  if (!f) throw Error("cannot write '" + out_file + "'");
  f << to_json(plan).dump(2) << "\n";
  std::cout << "plan: " << out_file << " (" << plan.k << " folds over "
            << records.size() << " subjects; audit "
            << (audit.clean ? "clean" : "DIRTY") << ")\n";
  return audit.clean ? 0 : 3;
}

int cmd_audit(const std::string& plan_file) {
  const FoldPlan plan = fold_plan_from_json(load_json_file(plan_file));
  const LeakageReport report = audit_leakage(plan);
  if (report.clean) {
    std::cout << "audit clean: every subject appears in exactly one role per fold and "
                 "one test fold\n";
    return 0;
  }
  std::cout << report.violations.size() << " violation(s):\n";
  for (const auto& v : report.violations) {
    std::cout << "  subject " << v.subject_id << " in fold " << v.fold << ":";
    for (const auto& role : v.roles) std::cout << " " << role;
    std::cout << "\n";
  }
  return 3;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Leakage-aware volumetric MRI classification toolkit"};
  app.require_subcommand(1);
  std::function<int()> action;

  // phantom-gen
  auto* gen = app.add_subcommand("phantom-gen", "Generate a synthetic phantom cohort");
  int gen_n = 100;
  double gen_frac = 0.43;
  int gen_size = 32;
  std::uint64_t gen_seed = 1;
  std::string gen_out = "phantoms";
  PhantomCohortOptions gen_options;
  gen->add_option("--n", gen_n, "Number of subjects (>= 2)")->required();
  gen->add_option("--demented-frac", gen_frac, "Fraction labeled Demented")->required();
  gen->add_option("--size", gen_size, "Cubic grid edge length")->capture_default_str();
  gen->add_option("--seed", gen_seed, "Cohort seed")->capture_default_str();
  gen->add_option("--out", gen_out, "Output directory")->capture_default_str();
  gen->add_option("--ventricle-scale", gen_options.ventricle_scale_demented,
                  "Ventricle enlargement factor for Demented subjects")
      ->capture_default_str();
  gen->add_option("--ventricle-scale-control", gen_options.ventricle_scale_nondemented,
                  "Ventricle factor for control subjects")
      ->capture_default_str();
  gen->add_option("--cortex-thickness", gen_options.cortex_thickness,
                  "Cortical shell thickness in voxels")
      ->capture_default_str();
  gen->add_option("--noise-sigma", gen_options.noise_sigma, "Additive noise sigma")
      ->capture_default_str();
  gen->add_option("--texture-amplitude", gen_options.texture_amplitude,
                  "Per-subject texture modulation amplitude")
      ->capture_default_str();
  gen->callback([&]() {
    action = [&]() {
      return cmd_phantom_gen(gen_n, gen_frac, gen_size, gen_seed, gen_out, gen_options);
    };
  });

  // run
  auto* run = app.add_subcommand("run", "Execute a configured experiment");
  std::string run_config;
  std::uint64_t run_seed = 0;
  int run_jobs = 0;
  std::string run_out;
  run->add_option("--config", run_config, "RunConfig JSON file")->required();
  auto* seed_opt = run->add_option("--seed", run_seed, "Override the config seed");
  auto* jobs_opt = run->add_option("--jobs", run_jobs, "Fold-level worker threads");
  run->add_option("--out-dir", run_out, "Override the config output directory");
  run->callback([&]() {
    action = [&]() {
      return cmd_run(run_config, seed_opt->count() ? &run_seed : nullptr,
                     jobs_opt->count() ? &run_jobs : nullptr, run_out);
    };
  });

  // gradcam
  auto* cam = app.add_subcommand("gradcam", "Explain a prediction with GradCAM");
  std::string cam_ckpt, cam_manifest, cam_data_root, cam_subject;
  std::string cam_branch = "t1", cam_plane = "axial", cam_out = ".";
  int cam_class = 1, cam_index = -1;
  cam->add_option("--checkpoint", cam_ckpt, "Trained checkpoint file")->required();
  cam->add_option("--manifest", cam_manifest, "Cohort manifest CSV")->required();
  cam->add_option("--subject", cam_subject, "Subject id to explain")->required();
  cam->add_option("--data-root", cam_data_root,
                  "Directory manifest paths resolve against (default: manifest dir)");
  cam->add_option("--branch", cam_branch, "Encoder branch, or 'mean'")
      ->capture_default_str();
  cam->add_option("--class", cam_class, "Target class index")->capture_default_str();
  cam->add_option("--plane", cam_plane, "sagittal, coronal, or axial")
      ->capture_default_str();
  cam->add_option("--index", cam_index, "Slice index (default: center)");
  cam->add_option("--out", cam_out, "Output directory")->capture_default_str();
  cam->callback([&]() {
    action = [&]() {
      return cmd_gradcam(cam_ckpt, cam_manifest, cam_data_root, cam_subject, cam_branch,
                         cam_class, cam_plane, cam_index, cam_out);
    };
  });

  // split-plan
  auto* sp = app.add_subcommand("split-plan",
                                "Build and audit a stratified subject-level fold plan");
  std::string sp_manifest, sp_stratify = "binary", sp_out = "plan.json";
  int sp_k = 5;
  std::uint64_t sp_seed = 17;
  double sp_val = 0.10;
  sp->add_option("--manifest", sp_manifest, "Cohort manifest CSV")->required();
  sp->add_option("--k", sp_k, "Fold count")->capture_default_str();
  sp->add_option("--seed", sp_seed, "Plan seed")->capture_default_str();
  sp->add_option("--val-fraction", sp_val, "Validation share of non-test subjects")
      ->capture_default_str();
  sp->add_option("--stratify-on", sp_stratify, "binary or fine_grained")
      ->capture_default_str();
  sp->add_option("--out", sp_out, "Plan JSON path")->capture_default_str();
  sp->callback([&]() {
    action = [&]() {
      return cmd_split_plan(sp_manifest, sp_k, sp_seed, sp_val, sp_stratify, sp_out);
    };
  });

  // audit
  auto* au = app.add_subcommand("audit", "Audit an existing fold plan for leakage");
  std::string au_plan;
  au->add_option("--plan", au_plan, "Fold plan JSON")->required();
  au->callback([&]() { action = [&]() { return cmd_audit(au_plan); }; });

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;  // bad flags are configuration errors
  }

  try {
    return action();
  } catch (const LeakageError& e) {
    std::cerr << "leakage: " << e.what() << "\n";
    return 3;
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const ParseError& e) {
    std::cerr << "parse error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}
