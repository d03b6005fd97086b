#include "cloudfill/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "cloudfill/latent.hpp"

namespace cloudfill::pipeline {

using dualnet::LatentBlock;
using dualnet::Mat;
using geometry::PointCloud;
using geometry::ViewData;
using scene_forge::SceneBundle;

namespace {

// Dynamic pixels are dropped from geometry entirely: invalid depth
// contributes no points, filtered color handles the rest.
ViewData filtered_view(const scene_forge::ViewRecord& rec) {
  ViewData v;
  v.color = scene_forge::apply_dynamic_filter(rec.color, rec.dynamic_mask);
  v.depth = rec.depth;
  v.cam = rec.cam;
  for (size_t i = 0; i < rec.dynamic_mask.values.size(); ++i)
    if (rec.dynamic_mask.values[i]) v.depth.valid[i] = 0;
  return v;
}

PointCloud apply_perturbation(PointCloud cloud, const CloudPerturbation& p,
                              uint64_t stream) {
  if (p.kind == CloudPerturbation::Kind::None || p.level <= 0) return cloud;
  Rng rng = Rng(p.seed).fork(stream);
  if (p.kind == CloudPerturbation::Kind::Noise)
    return geometry::perturb_noise(cloud, p.level, p.sigma, rng);
  return geometry::sparsify(cloud, p.level, rng);
}

// Target image with the missing region hidden (zeroed), the form every
// conditioning path and the training ground truth see.
Image known_target(const SceneBundle& scene) {
  Image out = scene.target.color;
  for (size_t i = 0; i < scene.completion_mask.values.size(); ++i)
    if (scene.completion_mask.values[i])
      for (int c = 0; c < 3; ++c) out.data[i * 3 + c] = 0.0f;
  return out;
}

}  // namespace

GeometryProducts precompute_geometry(const SceneBundle& scene,
                                     const ProjectOptions& opts,
                                     const CloudPerturbation& perturb) {
  scene.validate();
  std::vector<ViewData> refs;
  refs.reserve(scene.references.size());
  for (const auto& r : scene.references) refs.push_back(filtered_view(r));
  ViewData target = filtered_view(scene.target);

  // per-view base clouds, assembled in the same order render_* uses
  std::vector<PointCloud> ref_clouds(refs.size());
  for (size_t j = 0; j < refs.size(); ++j)
    ref_clouds[j] = geometry::back_project(refs[j].depth, refs[j].cam,
                                           refs[j].color, static_cast<int32_t>(j));
  PointCloud target_cloud =
      geometry::back_project(target.depth, target.cam, target.color, -1);

  GeometryProducts out;
  for (size_t i = 0; i < refs.size(); ++i) {
    PointCloud cloud;
    for (size_t j = 0; j < refs.size(); ++j)
      if (j != i) cloud.append(ref_clouds[j]);
    cloud.append(target_cloud);
    cloud = apply_perturbation(std::move(cloud), perturb, i + 1);
    out.p_ref.push_back(geometry::project(cloud, refs[i].cam, opts));
    out.r_ref.push_back(geometry::informative_mask(target, refs[i].cam, opts));
  }
  PointCloud all_refs;
  for (const auto& c : ref_clouds) all_refs.append(c);
  all_refs = apply_perturbation(std::move(all_refs), perturb, 0);
  out.p_tar = geometry::project(all_refs, target.cam, opts);
  return out;
}

double scene_diameter(const SceneBundle& scene) {
  double lo[3] = {1e300, 1e300, 1e300}, hi[3] = {-1e300, -1e300, -1e300};
  bool any = false;
  auto absorb = [&](const scene_forge::ViewRecord& rec) {
    ViewData v = filtered_view(rec);
    PointCloud c = geometry::back_project(v.depth, v.cam, v.color);
    for (const auto& p : c.points) {
      any = true;
      for (int k = 0; k < 3; ++k) {
        lo[k] = std::min(lo[k], p[k]);
        hi[k] = std::max(hi[k], p[k]);
      }
    }
  };
  for (const auto& r : scene.references) absorb(r);
  absorb(scene.target);
  if (!any) return 0.0;
  double d2 = 0;
  for (int k = 0; k < 3; ++k) d2 += (hi[k] - lo[k]) * (hi[k] - lo[k]);
  return std::sqrt(d2);
}

}  // namespace cloudfill::pipeline

namespace cloudfill::masking {

using pipeline::GeometryProducts;
using scene_forge::SceneBundle;

void SampleParams::validate() const {
  rect.validate();
  if (v_fill < 0 || v_fill > 1)
    throw ConfigError("sampling: v_fill must be in [0,1]");
  if (target_probability > 1)
    throw ConfigError("sampling: target probability must be <= 1");
  if (max_resample < 1) throw ConfigError("sampling: max_resample must be >= 1");
}

TrainingSample build_training_sample(const SceneBundle& scene,
                                     const GeometryProducts& geo,
                                     const SampleParams& params, Rng& rng) {
  params.validate();
  size_t n_ref = scene.references.size();
  if (n_ref == 0) throw ConfigError("build_training_sample: scene has no references");
  if (geo.p_ref.size() != n_ref || geo.r_ref.size() != n_ref)
    throw ValidationError("build_training_sample: geometry products do not match scene");
  int w = scene.target.cam.width, h = scene.target.cam.height;

  for (int attempt = 0; attempt < params.max_resample; ++attempt) {
    bool pick_target;
    size_t ref_index = 0;
    if (params.target_probability >= 0) {
      pick_target = rng.uniform() < params.target_probability;
      if (!pick_target)
        ref_index = static_cast<size_t>(rng.uniform_int(0, static_cast<int64_t>(n_ref) - 1));
    } else {
      int64_t pick = rng.uniform_int(0, static_cast<int64_t>(n_ref));
      pick_target = (pick == static_cast<int64_t>(n_ref));
      ref_index = pick_target ? 0 : static_cast<size_t>(pick);
    }

    TrainingSample s;
    if (!pick_target) {
      const auto& r_true = geo.r_ref[ref_index];
      MaskImage r = r_true;
      if (params.mode == MaskingMode::Random) {
        // ablation: every image pixel at risk, every cloud pixel at risk
        r = MaskImage(w, h, 1);
      }
      MaskImage m_rand_img = random_rect_mask(params.rect, w, h, rng);
      MaskImage m_rand_cloud = random_rect_mask(params.rect, w, h, rng);
      s.cond_image = conditional_reference_mask(scene.references[ref_index].color,
                                                r, m_rand_img);
      MaskImage cloud_r = params.mode == MaskingMode::Random
                              ? MaskImage(w, h, 0)
                              : r_true;
      s.cond_cloud = params.mask_cloud
                         ? conditional_cloud_mask(geo.p_ref[ref_index].image, cloud_r,
                                                  m_rand_cloud, params.v_fill)
                         : geo.p_ref[ref_index].image;
      s.cond_mask = MaskImage(w, h, 0);
      for (size_t i = 0; i < s.cond_mask.values.size(); ++i)
        s.cond_mask.values[i] = (r.values[i] && !m_rand_img.values[i]) ? 1 : 0;
      s.weight = MaskImage(w, h, 1);
      s.ground_truth = scene.references[ref_index].color;
      s.source = static_cast<int>(ref_index);
      return s;
    }

    // target sample: random masking of the known region; cloud used as-is
    Image known(w, h);
    known = scene.target.color;
    for (size_t i = 0; i < scene.completion_mask.values.size(); ++i)
      if (scene.completion_mask.values[i])
        for (int c = 0; c < 3; ++c) known.data[i * 3 + c] = 0.0f;

    MaskImage m_rand = random_rect_mask(params.rect, w, h, rng);
    s.cond_image = Image(w, h);
    s.cond_mask = MaskImage(w, h, 0);
    s.weight = MaskImage(w, h, 0);
    bool any_weight = false;
    for (size_t i = 0; i < m_rand.values.size(); ++i) {
      bool hole = scene.completion_mask.values[i] != 0;
      bool hidden = hole || !m_rand.values[i];
      s.cond_mask.values[i] = hidden ? 1 : 0;
      if (!hidden)
        for (int c = 0; c < 3; ++c) s.cond_image.data[i * 3 + c] = known.data[i * 3 + c];
      if (!hole) {
        s.weight.values[i] = 1;
        any_weight = true;
      }
    }
    if (!any_weight) continue;  // degenerate draw, resample
    s.cond_cloud = geo.p_tar.image;
    s.ground_truth = known;
    s.source = -1;
    return s;
  }
  throw ConfigError("build_training_sample: could not draw a usable sample");
}

}  // namespace cloudfill::masking

namespace cloudfill::pipeline {

void TrainConfig::validate() const {
  if (iterations < 1) throw ConfigError("train: iterations must be >= 1");
  if (batch_size < 1) throw ConfigError("train: batch size must be >= 1");
  if (lr <= 0) throw ConfigError("train: learning rate must be positive");
  sampling.validate();
  model.validate();
}

double train_step(dualnet::Denoiser& model, dualnet::AdamOptimizer& opt,
                  const std::vector<masking::TrainingSample>& batch,
                  const dualnet::NoiseSchedule& sched, Rng& noise_rng) {
  const auto& cfg = model.config();
  int patch = cfg.patch;
  int cl = cfg.latent_channels();
  model.zero_grad();
  double total_loss = 0;
  double inv_batch = 1.0 / static_cast<double>(batch.size());

  for (const auto& s : batch) {
    LatentBlock x0 = dualnet::to_latent(s.ground_truth, patch);
    LatentBlock cond_tar = dualnet::to_latent(s.cond_image, patch);
    LatentBlock cond_cloud = dualnet::to_latent(s.cond_cloud, patch);
    MaskImage mask_lat = dualnet::downsample_mask(s.cond_mask, patch);
    // token weight: 1 iff every covered image pixel has known ground truth
    MaskImage invalid(s.weight.width, s.weight.height);
    for (size_t i = 0; i < s.weight.values.size(); ++i)
      invalid.values[i] = s.weight.values[i] ? 0 : 1;
    MaskImage w_lat_inv = dualnet::downsample_mask(invalid, patch);

    // the sampler grid never visits t below T/4 (the final step jumps to the
    // clamped x0 estimate), so training draws t from the same band; half the
    // draws pin t to the terminal grid point, whose x0 estimate becomes the
    // sampler output and therefore dominates completion quality
    int t_floor = sched.T / 4;
    int t = noise_rng.uniform() < 0.5
                ? t_floor
                : static_cast<int>(noise_rng.uniform_int(t_floor, sched.T - 1));
    LatentBlock eps = dualnet::gaussian_latent(cl, x0.height, x0.width, noise_rng);
    LatentBlock xt = dualnet::add_noise(x0, t, eps, sched);
    LatentBlock pred = model.forward(xt, t, cond_tar, mask_lat, cond_cloud);

    double w_sum = 0;
    for (uint8_t v : w_lat_inv.values) w_sum += v ? 0.0 : 1.0;
    double denom = static_cast<double>(cl) * std::max(1.0, w_sum);
    Mat diff = pred.tokens - eps.tokens;
    double loss = 0;
    Mat grad = Mat::Zero(diff.rows(), diff.cols());
    for (int row = 0; row < diff.rows(); ++row) {
      if (w_lat_inv.values[row]) continue;
      loss += diff.row(row).squaredNorm();
      grad.row(row) = 2.0 * diff.row(row) / denom * inv_batch;
    }
    loss /= denom;
    total_loss += loss * inv_batch;
    model.backward(grad);
  }

  if (!std::isfinite(total_loss)) {
    std::ostringstream msg;
    msg << "train_step: non-finite loss " << total_loss << " over batch of "
        << batch.size() << " samples (sources:";
    for (const auto& s : batch) msg << " " << s.source;
    msg << ")";
    throw NumericError(msg.str());
  }
  opt.step();
  return total_loss;
}

TrainResult train_scene(const SceneBundle& scene, const GeometryProducts& geo,
                        const TrainConfig& cfg, dualnet::Denoiser& model) {
  cfg.validate();
  auto sched = dualnet::NoiseSchedule::linear(cfg.model.T, cfg.model.beta_start,
                                              cfg.model.beta_end);
  dualnet::AdamOptimizer opt(model.params(), cfg.lr, cfg.adam_beta1,
                             cfg.adam_beta2, cfg.adam_eps);
  Rng base(cfg.seed);
  Rng sample_rng = base.fork(1);
  Rng noise_rng = base.fork(2);

  TrainResult result;
  result.loss_trace.reserve(cfg.iterations);
  for (int it = 0; it < cfg.iterations; ++it) {
    std::vector<masking::TrainingSample> batch;
    batch.reserve(cfg.batch_size);
    for (int b = 0; b < cfg.batch_size; ++b)
      batch.push_back(masking::build_training_sample(scene, geo, cfg.sampling, sample_rng));
    double loss = train_step(model, opt, batch, sched, noise_rng);
    result.loss_trace.push_back(loss);
    if (cfg.checkpoint_every > 0 && !cfg.checkpoint_dir.empty() &&
        (it + 1) % cfg.checkpoint_every == 0) {
      model.save_checkpoint(cfg.checkpoint_dir /
                            ("checkpoint_" + std::to_string(it + 1) + ".gckp"));
    }
  }
  return result;
}

Image infer(const SceneBundle& scene, const GeometryProducts& geo,
            dualnet::Denoiser& model, const InferConfig& cfg) {
  const auto& mcfg = model.config();
  if (cfg.steps < 1 || cfg.steps > mcfg.T)
    throw ConfigError("infer: steps must lie in [1, T]");
  int patch = mcfg.patch;
  int w = scene.target.cam.width, h = scene.target.cam.height;
  if (w % patch || h % patch)
    throw ValidationError("infer: scene resolution is not divisible by the model patch");

  auto sched = dualnet::NoiseSchedule::linear(mcfg.T, mcfg.beta_start, mcfg.beta_end);
  Image known = known_target(scene);
  LatentBlock cond_tar = dualnet::to_latent(known, patch);
  LatentBlock cond_cloud = dualnet::to_latent(geo.p_tar.image, patch);
  MaskImage mask_lat = dualnet::downsample_mask(scene.completion_mask, patch);

  Rng rng(cfg.seed);
  int cl = mcfg.latent_channels();
  LatentBlock xt = dualnet::gaussian_latent(cl, h / patch, w / patch, rng);

  // descend from T-1 to T/4; epsilon prediction is ill-conditioned for x0
  // recovery near t=0, so the last step jumps straight to the x0 estimate
  int t_floor = mcfg.T / 4;
  std::vector<int> ts(cfg.steps);
  for (int i = 0; i < cfg.steps; ++i) {
    ts[i] = cfg.steps == 1
                ? mcfg.T - 1
                : t_floor + static_cast<int>(std::lround(
                                static_cast<double>(mcfg.T - 1 - t_floor) *
                                (cfg.steps - 1 - i) / (cfg.steps - 1)));
  }

  double eta = cfg.sampler == SamplerType::Ancestral ? 1.0 : 0.0;
  for (int i = 0; i < cfg.steps; ++i) {
    int t = ts[i];
    double ab_t = sched.alpha_bars[t];
    double ab_prev = (i + 1 < cfg.steps) ? sched.alpha_bars[ts[i + 1]] : 1.0;
    LatentBlock pred = model.forward(xt, t, cond_tar, mask_lat, cond_cloud);
    Mat x0 = (xt.tokens - std::sqrt(1.0 - ab_t) * pred.tokens) / std::sqrt(ab_t);
    // the latent is a pixel permutation, so the data range is known exactly;
    // clamping the denoised estimate keeps early large-t steps from diverging
    x0 = x0.cwiseMax(0.0).cwiseMin(1.0);
    double sigma = eta * std::sqrt((1.0 - ab_prev) / (1.0 - ab_t)) *
                   std::sqrt(std::max(0.0, 1.0 - ab_t / ab_prev));
    double dir_coef = std::sqrt(std::max(0.0, 1.0 - ab_prev - sigma * sigma));
    Mat next = std::sqrt(ab_prev) * x0 + dir_coef * pred.tokens;
    if (sigma > 0 && i + 1 < cfg.steps) {
      LatentBlock z = dualnet::gaussian_latent(cl, xt.height, xt.width, rng);
      next += sigma * z.tokens;
    }
    xt.tokens = next;
  }

  Image out = dualnet::from_latent(xt, patch);
  for (float& v : out.data) v = std::clamp(v, 0.0f, 1.0f);
  if (cfg.composite) {
    for (size_t i = 0; i < scene.completion_mask.values.size(); ++i)
      if (!scene.completion_mask.values[i])
        for (int c = 0; c < 3; ++c)
          out.data[i * 3 + c] = scene.target.color.data[i * 3 + c];
  }
  return out;
}

Image paste_cloud_baseline(const SceneBundle& scene, const GeometryProducts& geo) {
  Image out = scene.target.color;
  for (size_t i = 0; i < scene.completion_mask.values.size(); ++i)
    if (scene.completion_mask.values[i])
      for (int c = 0; c < 3; ++c) out.data[i * 3 + c] = geo.p_tar.image.data[i * 3 + c];
  return out;
}

void RobustnessSpec::validate() const {
  if (levels.empty() || seeds.empty())
    throw ConfigError("robustness: levels and seeds must be non-empty");
  for (double l : levels)
    if (l < 0 || l > 1) throw ConfigError("robustness: levels must lie in [0,1]");
  if (sigma_fraction < 0) throw ConfigError("robustness: sigma fraction must be >= 0");
  if (!retrain && checkpoint.empty())
    throw ConfigError("robustness: reuse mode needs a checkpoint");
}

std::vector<RobustCell> robustness_run(const SceneBundle& scene,
                                       const TrainConfig& train_cfg,
                                       const InferConfig& infer_cfg,
                                       const RobustnessSpec& spec) {
  spec.validate();
  double sigma = spec.sigma_fraction * scene_diameter(scene);
  const char* kind_name = spec.kind == PerturbKind::Noise    ? "noise"
                          : spec.kind == PerturbKind::Sparse ? "sparse"
                                                             : "mask-error";

  std::vector<RobustCell> cells;
  for (double level : spec.levels) {
    for (uint64_t seed : spec.seeds) {
      SceneBundle work = scene;
      CloudPerturbation perturb;
      if (spec.kind == PerturbKind::Noise || spec.kind == PerturbKind::Sparse) {
        perturb.kind = spec.kind == PerturbKind::Noise
                           ? CloudPerturbation::Kind::Noise
                           : CloudPerturbation::Kind::Sparse;
        perturb.level = level;
        perturb.sigma = sigma;
        perturb.seed = seed;
      } else {
        Rng mask_rng = Rng(seed).fork(7);
        auto corrupt = [&](scene_forge::ViewRecord& rec) {
          if (spec.remove_masks)
            rec.dynamic_mask = MaskImage(rec.cam.width, rec.cam.height, 0);
          else if (level > 0)
            rec.dynamic_mask =
                scene_forge::corrupt_dynamic_mask(rec.dynamic_mask, level, mask_rng);
        };
        for (auto& r : work.references) corrupt(r);
        corrupt(work.target);
      }
      GeometryProducts geo = precompute_geometry(work, {}, perturb);

      TrainConfig tc = train_cfg;
      tc.seed = seed;
      Rng init_rng = Rng(seed).fork(0);
      dualnet::Denoiser model =
          spec.retrain ? dualnet::Denoiser(tc.model, init_rng)
                       : dualnet::Denoiser::load_checkpoint(spec.checkpoint);
      if (spec.retrain) train_scene(work, geo, tc, model);
      InferConfig ic = infer_cfg;
      ic.seed = seed;
      Image out = infer(work, geo, model, ic);

      RobustCell cell;
      cell.kind = kind_name;
      cell.level = level;
      cell.seed = seed;
      cell.psnr_masked = metrics::psnr(out, scene.target.color, scene.completion_mask);
      cell.ssim = metrics::ssim(out, scene.target.color);
      cells.push_back(cell);
    }
  }
  return cells;
}

std::string robustness_csv(const std::vector<RobustCell>& cells) {
  std::ostringstream s;
  s.precision(10);
  s << "kind,level,seed,psnr,ssim\n";
  for (const auto& c : cells)
    s << c.kind << "," << c.level << "," << c.seed << "," << c.psnr_masked << ","
      << c.ssim << "\n";
  return s.str();
}

metrics::EvalReport evaluate(const Image& output, const SceneBundle& scene,
                             const std::string& scene_id, uint64_t seed) {
  metrics::EvalReport r;
  r.scene_id = scene_id;
  r.seed = seed;
  r.psnr_full = metrics::psnr(output, scene.target.color);
  if (scene.completion_mask.count_ones() > 0)
    r.psnr_masked = metrics::psnr(output, scene.target.color, scene.completion_mask);
  else
    r.psnr_masked = r.psnr_full;
  r.ssim_full = metrics::ssim(output, scene.target.color);
  r.pixels_full = static_cast<size_t>(output.width) * output.height;
  r.pixels_masked = scene.completion_mask.count_ones();
  return r;
}

}  // namespace cloudfill::pipeline
