#pragma once

#include <filesystem>
#include <vector>

#include "cloudfill/denoiser.hpp"
#include "cloudfill/masking.hpp"
#include "cloudfill/metrics.hpp"
#include "cloudfill/scene.hpp"

namespace cloudfill::pipeline {

using geometry::ProjectedCloud;
using geometry::ProjectOptions;

// Cached per-scene geometry: leave-one-out reference clouds, the target
// cloud, and the informative-region masks.
struct GeometryProducts {
  std::vector<ProjectedCloud> p_ref;
  ProjectedCloud p_tar;
  std::vector<MaskImage> r_ref;
};

struct CloudPerturbation {
  enum class Kind { None, Noise, Sparse } kind = Kind::None;
  double level = 0;  // fraction of points touched/dropped
  double sigma = 0;  // Gaussian std in scene units (Noise only)
  uint64_t seed = 0;
};

GeometryProducts precompute_geometry(const scene_forge::SceneBundle& scene,
                                     const ProjectOptions& opts = {},
                                     const CloudPerturbation& perturb = {});

// Diagonal of the axis-aligned bounding box of all back-projected scene
// points; reference scale for noise sigmas.
double scene_diameter(const scene_forge::SceneBundle& scene);

}  // namespace cloudfill::pipeline

namespace cloudfill::masking {

enum class MaskingMode {
  TargetAware,  // Eq. 5/6 conditional masking driven by r
  Random,       // plain random masking on both streams (ablation)
};

struct SampleParams {
  RectMaskParams rect;
  float v_fill = 1.0f;
  MaskingMode mode = MaskingMode::TargetAware;
  bool mask_cloud = true;          // conditional cloud masking (CM) on/off
  double target_probability = -1;  // <0 = uniform over references + target
  int max_resample = 16;

  void validate() const;
};

TrainingSample build_training_sample(const scene_forge::SceneBundle& scene,
                                     const pipeline::GeometryProducts& geo,
                                     const SampleParams& params, Rng& rng);

}  // namespace cloudfill::masking

namespace cloudfill::pipeline {

struct TrainConfig {
  int iterations = 500;
  int batch_size = 8;
  double lr = 1e-4;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_eps = 1e-8;
  masking::SampleParams sampling;
  dualnet::DenoiserConfig model;
  uint64_t seed = 0;
  int checkpoint_every = 0;  // 0 = no periodic checkpoints
  std::filesystem::path checkpoint_dir;

  void validate() const;
};

enum class SamplerType { Ancestral, Deterministic };

struct InferConfig {
  int steps = 50;
  SamplerType sampler = SamplerType::Ancestral;
  uint64_t seed = 0;
  bool composite = true;
};

struct TrainResult {
  std::vector<double> loss_trace;
};

// One optimizer step over an explicit batch; returns the batch loss.
double train_step(dualnet::Denoiser& model, dualnet::AdamOptimizer& opt,
                  const std::vector<masking::TrainingSample>& batch,
                  const dualnet::NoiseSchedule& sched, Rng& noise_rng);

TrainResult train_scene(const scene_forge::SceneBundle& scene,
                        const GeometryProducts& geo, const TrainConfig& cfg,
                        dualnet::Denoiser& model);

Image infer(const scene_forge::SceneBundle& scene, const GeometryProducts& geo,
            dualnet::Denoiser& model, const InferConfig& cfg);

// The no-learning baseline: p_tar pasted into the hole of the known target.
Image paste_cloud_baseline(const scene_forge::SceneBundle& scene,
                           const GeometryProducts& geo);

enum class PerturbKind { Noise, Sparse, MaskError };

struct RobustnessSpec {
  PerturbKind kind = PerturbKind::Noise;
  std::vector<double> levels = {0.0, 0.25, 0.5, 0.75};
  std::vector<uint64_t> seeds = {1};
  double sigma_fraction = 0.02;  // of scene diameter (Noise)
  bool remove_masks = false;     // MaskError: drop dynamic masks entirely
  bool retrain = true;           // retrain per cell vs reuse the checkpoint
  std::filesystem::path checkpoint;  // required when retrain is false

  void validate() const;
};

struct RobustCell {
  std::string kind;
  double level = 0;
  uint64_t seed = 0;
  double psnr_masked = 0;
  double ssim = 0;
};

std::vector<RobustCell> robustness_run(const scene_forge::SceneBundle& scene,
                                       const TrainConfig& train_cfg,
                                       const InferConfig& infer_cfg,
                                       const RobustnessSpec& spec);

std::string robustness_csv(const std::vector<RobustCell>& cells);

metrics::EvalReport evaluate(const Image& output, const scene_forge::SceneBundle& scene,
                             const std::string& scene_id, uint64_t seed);

}  // namespace cloudfill::pipeline
