#include <CLI11.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>

#include "cloudfill/pipeline.hpp"

namespace fs = std::filesystem;
using namespace cloudfill;

namespace {

int exit_code_for(const Error& e) {
  switch (e.kind()) {
    case ErrorKind::Io: return 1;
    case ErrorKind::Config:
    case ErrorKind::Validation: return 2;
    case ErrorKind::Numeric: return 3;
  }
  return 3;
}

const char* category_for(const Error& e) {
  switch (e.kind()) {
    case ErrorKind::Io: return "io";
    case ErrorKind::Config: return "config";
    case ErrorKind::Validation: return "validation";
    case ErrorKind::Numeric: return "numeric";
  }
  return "error";
}

masking::SampleParams sampling_from_config(const io::KeyValues& kv) {
  masking::SampleParams p;
  p.rect.min_rects = static_cast<int>(kv.get_int("masking.min_rects", p.rect.min_rects));
  p.rect.max_rects = static_cast<int>(kv.get_int("masking.max_rects", p.rect.max_rects));
  p.rect.min_side_fraction =
      kv.get_double("masking.min_side_fraction", p.rect.min_side_fraction);
  p.rect.max_side_fraction =
      kv.get_double("masking.max_side_fraction", p.rect.max_side_fraction);
  std::string rect_mode = kv.get("masking.rect_mode", "either");
  if (rect_mode == "union") p.rect.mode = masking::RectMaskMode::Union;
  else if (rect_mode == "complement") p.rect.mode = masking::RectMaskMode::ComplementOfUnion;
  else if (rect_mode != "either")
    throw ConfigError("masking.rect_mode must be union, complement, or either");
  p.v_fill = static_cast<float>(kv.get_double("masking.v_fill", p.v_fill));
  std::string mode = kv.get("masking.mode", "target_aware");
  if (mode == "target_aware") p.mode = masking::MaskingMode::TargetAware;
  else if (mode == "random") p.mode = masking::MaskingMode::Random;
  else throw ConfigError("masking.mode must be target_aware or random");
  p.mask_cloud = kv.get_bool("masking.mask_cloud", p.mask_cloud);
  p.target_probability = kv.get_double("masking.target_probability", p.target_probability);
  return p;
}

pipeline::TrainConfig train_from_config(const io::KeyValues& kv) {
  pipeline::TrainConfig c;
  c.iterations = static_cast<int>(kv.get_int("train.iterations", c.iterations));
  c.batch_size = static_cast<int>(kv.get_int("train.batch_size", c.batch_size));
  c.lr = kv.get_double("train.lr", c.lr);
  c.seed = static_cast<uint64_t>(kv.get_int("train.seed", 0));
  c.checkpoint_every = static_cast<int>(kv.get_int("train.checkpoint_every", 0));
  c.sampling = sampling_from_config(kv);
  c.model = dualnet::DenoiserConfig::from_kv(kv);
  return c;
}

pipeline::InferConfig infer_from_config(const io::KeyValues& kv) {
  pipeline::InferConfig c;
  c.steps = static_cast<int>(kv.get_int("infer.steps", c.steps));
  std::string sampler = kv.get("infer.sampler", "ancestral");
  if (sampler == "ancestral") c.sampler = pipeline::SamplerType::Ancestral;
  else if (sampler == "deterministic") c.sampler = pipeline::SamplerType::Deterministic;
  else throw ConfigError("infer.sampler must be ancestral or deterministic");
  c.composite = kv.get_bool("infer.composite", true);
  return c;
}

io::KeyValues load_config(const std::string& path) {
  if (path.empty()) return io::KeyValues();
  return io::KeyValues::parse_file(path);
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot open for write: " + path.string());
  out << text;
}

struct CommonArgs {
  std::string scene_dir;
  std::string out_dir = ".";
  std::string config_path;
  uint64_t seed = 0;
  bool seed_given = false;
  int threads = 1;
};

void add_common(CLI::App* cmd, CommonArgs& a, bool needs_scene) {
  auto* s = cmd->add_option("--scene", a.scene_dir, "scene directory");
  if (needs_scene) s->required();
  cmd->add_option("-o,--out", a.out_dir, "output directory");
  cmd->add_option("--config", a.config_path, "config file");
  cmd->add_option("--seed", a.seed, "rng seed")->each([&](const std::string&) {
    a.seed_given = true;
  });
  cmd->add_option("--threads", a.threads, "worker threads (1 = fully deterministic)");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"geometry-conditioned reference-driven image completion toolkit"};
  app.require_subcommand(1);

  // gen
  auto* gen = app.add_subcommand("gen", "generate a synthetic scene");
  CommonArgs gen_args;
  std::string preset = "boxes3";
  add_common(gen, gen_args, false);
  gen->add_option("--preset", preset, "scene preset");

  // project
  auto* project = app.add_subcommand("project", "write projected clouds and masks");
  CommonArgs project_args;
  add_common(project, project_args, true);

  // mask-debug
  auto* maskdbg = app.add_subcommand("mask-debug", "dump one training sample");
  CommonArgs mask_args;
  add_common(maskdbg, mask_args, true);

  // train
  auto* train = app.add_subcommand("train", "per-scene training");
  CommonArgs train_args;
  int train_iters = -1;
  add_common(train, train_args, true);
  train->add_option("--iterations", train_iters, "override train.iterations");

  // infer
  auto* infer = app.add_subcommand("infer", "complete the target view");
  CommonArgs infer_args;
  std::string checkpoint_path;
  int infer_steps = -1;
  std::string sampler_name;
  bool composite_on = false, composite_off = false;
  add_common(infer, infer_args, true);
  infer->add_option("--checkpoint", checkpoint_path, "trained checkpoint")->required();
  infer->add_option("--steps", infer_steps, "sampler steps");
  infer->add_option("--sampler", sampler_name, "ancestral | deterministic");
  infer->add_flag("--composite", composite_on, "copy known pixels verbatim (default)");
  infer->add_flag("--no-composite", composite_off, "keep raw model output");

  // eval
  auto* eval = app.add_subcommand("eval", "score an output image against the scene");
  CommonArgs eval_args;
  std::string eval_image;
  add_common(eval, eval_args, true);
  eval->add_option("--image", eval_image, "completed image to score")->required();

  // robust
  auto* robust = app.add_subcommand("robust", "perturbation grid");
  CommonArgs robust_args;
  std::string robust_kind = "noise";
  std::vector<double> robust_levels = {0.0, 0.25, 0.5, 0.75};
  std::vector<uint64_t> robust_seeds = {1};
  bool remove_masks = false, no_retrain = false;
  add_common(robust, robust_args, true);
  robust->add_option("--kind", robust_kind, "noise | sparse | mask-error");
  robust->add_option("--levels", robust_levels, "perturbation levels in [0,1]");
  robust->add_option("--seeds", robust_seeds, "seeds");
  robust->add_flag("--remove-masks", remove_masks, "mask-error: drop dynamic masks");
  robust->add_flag("--no-retrain", no_retrain, "re-infer only (needs --checkpoint)");
  std::string robust_checkpoint;
  robust->add_option("--checkpoint", robust_checkpoint, "checkpoint for --no-retrain");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    int rc = app.exit(e);
    return rc == 0 ? 0 : 2;
  }

  try {
    if (*gen) {
      auto cfg = scene_forge::preset_config(preset);
      io::KeyValues kv = load_config(gen_args.config_path);
      cfg.width = static_cast<int>(kv.get_int("scene.width", cfg.width));
      cfg.height = static_cast<int>(kv.get_int("scene.height", cfg.height));
      auto bundle = scene_forge::generate_scene(cfg, gen_args.seed);
      fs::create_directories(gen_args.out_dir);
      scene_forge::save_scene(bundle, gen_args.out_dir);
      std::cout << "scene '" << preset << "' seed " << gen_args.seed << ": "
                << bundle.references.size() << " references, "
                << bundle.target.cam.width << "x" << bundle.target.cam.height
                << ", completion pixels " << bundle.completion_mask.count_ones()
                << " -> " << gen_args.out_dir << "\n";
    } else if (*project) {
      auto bundle = scene_forge::load_scene(project_args.scene_dir);
      auto geo = pipeline::precompute_geometry(bundle);
      fs::create_directories(project_args.out_dir);
      fs::path out = project_args.out_dir;
      io::write_png(out / "p_tar.png", geo.p_tar.image);
      for (size_t i = 0; i < geo.p_ref.size(); ++i) {
        io::write_png(out / ("p_ref_" + std::to_string(i) + ".png"), geo.p_ref[i].image);
        io::write_png(out / ("r_ref_" + std::to_string(i) + ".png"), geo.r_ref[i]);
      }
      std::cout << "wrote target cloud + " << geo.p_ref.size()
                << " reference clouds/masks to " << project_args.out_dir << "\n";
    } else if (*maskdbg) {
      auto bundle = scene_forge::load_scene(mask_args.scene_dir);
      auto geo = pipeline::precompute_geometry(bundle);
      io::KeyValues kv = load_config(mask_args.config_path);
      auto params = sampling_from_config(kv);
      Rng rng(mask_args.seed);
      auto sample = masking::build_training_sample(bundle, geo, params, rng);
      fs::create_directories(mask_args.out_dir);
      fs::path out = mask_args.out_dir;
      io::write_png(out / "cond_image.png", sample.cond_image);
      io::write_png(out / "cond_cloud.png", sample.cond_cloud);
      io::write_png(out / "cond_mask.png", sample.cond_mask);
      io::write_png(out / "weight.png", sample.weight);
      io::write_png(out / "ground_truth.png", sample.ground_truth);
      std::cout << "sample source "
                << (sample.source < 0 ? std::string("target")
                                      : "ref_" + std::to_string(sample.source))
                << " -> " << mask_args.out_dir << "\n";
    } else if (*train) {
      auto bundle = scene_forge::load_scene(train_args.scene_dir);
      auto geo = pipeline::precompute_geometry(bundle);
      io::KeyValues kv = load_config(train_args.config_path);
      auto cfg = train_from_config(kv);
      if (train_iters > 0) cfg.iterations = train_iters;
      if (train_args.seed_given) cfg.seed = train_args.seed;
      fs::create_directories(train_args.out_dir);
      cfg.checkpoint_dir = train_args.out_dir;
      Rng init_rng = Rng(cfg.seed).fork(0);
      dualnet::Denoiser model(cfg.model, init_rng);
      auto result = pipeline::train_scene(bundle, geo, cfg, model);
      fs::path out = train_args.out_dir;
      model.save_checkpoint(out / "checkpoint.gckp");
      std::ostringstream csv;
      csv.precision(10);
      csv << "step,loss\n";
      for (size_t i = 0; i < result.loss_trace.size(); ++i)
        csv << i << "," << result.loss_trace[i] << "\n";
      write_text(out / "loss.csv", csv.str());
      std::cout << "trained " << cfg.iterations << " iterations; final loss "
                << result.loss_trace.back() << "; checkpoint -> "
                << (out / "checkpoint.gckp").string() << "\n";
    } else if (*infer) {
      auto bundle = scene_forge::load_scene(infer_args.scene_dir);
      auto geo = pipeline::precompute_geometry(bundle);
      auto model = dualnet::Denoiser::load_checkpoint(checkpoint_path);
      io::KeyValues kv = load_config(infer_args.config_path);
      if (!infer_args.config_path.empty()) {
        auto expected = dualnet::DenoiserConfig::from_kv(kv);
        if (!(expected == model.config())) {
          auto ek = expected.to_kv().entries();
          auto mk = model.config().to_kv().entries();
          for (const auto& [key, val] : ek)
            if (mk.at(key) != val)
              throw ValidationError("checkpoint mismatch on " + key + ": config wants " +
                                    val + ", checkpoint has " + mk.at(key));
        }
      }
      auto icfg = infer_from_config(kv);
      if (infer_steps > 0) icfg.steps = infer_steps;
      if (!sampler_name.empty()) {
        if (sampler_name == "ancestral") icfg.sampler = pipeline::SamplerType::Ancestral;
        else if (sampler_name == "deterministic")
          icfg.sampler = pipeline::SamplerType::Deterministic;
        else throw ConfigError("--sampler must be ancestral or deterministic");
      }
      if (composite_on) icfg.composite = true;
      if (composite_off) icfg.composite = false;
      icfg.seed = infer_args.seed;
      auto out_img = pipeline::infer(bundle, geo, model, icfg);
      fs::create_directories(infer_args.out_dir);
      fs::path out = fs::path(infer_args.out_dir) / "completed.png";
      io::write_png(out, out_img);
      std::cout << "completed target -> " << out.string() << "\n";
    } else if (*eval) {
      auto bundle = scene_forge::load_scene(eval_args.scene_dir);
      Image img = io::read_png_image(eval_image);
      auto report = pipeline::evaluate(img, bundle, eval_args.scene_dir, eval_args.seed);
      std::cout << report.pretty();
      if (eval_args.out_dir != ".") {
        fs::create_directories(eval_args.out_dir);
        write_text(fs::path(eval_args.out_dir) / "eval.csv",
                   report.csv_header() + "\n" + report.csv_row() + "\n");
      }
    } else if (*robust) {
      auto bundle = scene_forge::load_scene(robust_args.scene_dir);
      io::KeyValues kv = load_config(robust_args.config_path);
      auto tcfg = train_from_config(kv);
      auto icfg = infer_from_config(kv);
      pipeline::RobustnessSpec spec;
      if (robust_kind == "noise") spec.kind = pipeline::PerturbKind::Noise;
      else if (robust_kind == "sparse") spec.kind = pipeline::PerturbKind::Sparse;
      else if (robust_kind == "mask-error") spec.kind = pipeline::PerturbKind::MaskError;
      else throw ConfigError("--kind must be noise, sparse, or mask-error");
      spec.levels = robust_levels;
      spec.seeds = robust_seeds;
      spec.remove_masks = remove_masks;
      spec.retrain = !no_retrain;
      spec.checkpoint = robust_checkpoint;
      auto cells = pipeline::robustness_run(bundle, tcfg, icfg, spec);
      fs::create_directories(robust_args.out_dir);
      write_text(fs::path(robust_args.out_dir) / "robust.csv",
                 pipeline::robustness_csv(cells));
      // deltas vs the first (reference) level
      double base = 0;
      int base_n = 0;
      for (const auto& c : cells)
        if (c.level == spec.levels.front()) {
          base += c.psnr_masked;
          ++base_n;
        }
      base /= std::max(1, base_n);
      std::cout << "kind level seed psnr ssim delta_vs_" << spec.levels.front() << "\n";
      for (const auto& c : cells)
        std::cout << c.kind << " " << c.level << " " << c.seed << " " << c.psnr_masked
                  << " " << c.ssim << " " << c.psnr_masked - base << "\n";
    }
  } catch (const Error& e) {
    std::cerr << category_for(e) << ": " << e.what() << "\n";
    return exit_code_for(e);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 3;
  }
  return 0;
}
