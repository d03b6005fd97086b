#pragma once

#include <filesystem>
#include <memory>
#include <string>
#include <vector>

#include "cloudfill/io.hpp"
#include "cloudfill/latent.hpp"

namespace cloudfill::dualnet {

struct Param {
  std::string name;
  Mat value;
  Mat grad;

  Param() = default;
  Param(std::string n, int rows, int cols)
      : name(std::move(n)), value(Mat::Zero(rows, cols)), grad(Mat::Zero(rows, cols)) {}
};

struct DenoiserConfig {
  int patch = 4;
  int dim = 128;
  int heads = 4;
  int blocks = 4;
  int temb_dim = 64;
  int T = 200;
  double beta_start = 1e-4;
  double beta_end = 0.02;
  bool use_cloud_branch = true;
  // early fusion ablation: no cloud tokens, cloud latent appended to the
  // target-branch input channels instead
  bool cloud_concat = false;
  bool separate_cloud_weights = false;
  JsaMode jsa_mode = JsaMode::MaskedAsymmetric;

  int latent_channels() const { return 3 * patch * patch; }
  // per-branch input: noisy + mask + conditioning latent(s)
  int input_channels() const {
    return (cloud_concat ? 3 : 2) * latent_channels() + 1;
  }

  void validate() const;
  io::KeyValues to_kv() const;
  static DenoiserConfig from_kv(const io::KeyValues& kv);
  bool operator==(const DenoiserConfig&) const = default;
};

// Q/K/V projection weights for one attention application.
struct AttentionParams {
  Mat Wq, Wk, Wv;  // dim x dim
  Vec bq, bk, bv;  // dim
};

// Scaled dot-product attention over concat(h_tar, h_pt) with disallowed
// logits forced to -inf before softmax; returns the two branch outputs.
std::pair<Mat, Mat> joint_self_attention(const Mat& h_tar, const Mat& h_pt,
                                         const AttentionMask& mask,
                                         const AttentionParams& params,
                                         int heads);

// Epsilon-predicting dual-branch transformer. One instance is single-writer:
// forward/backward keep caches, so interleave calls per sample.
class Denoiser {
 public:
  Denoiser(const DenoiserConfig& cfg, Rng& init_rng);

  // cond_tar / cond_cloud are the conditioning latents; mask_lat is the
  // latent-resolution conditioning mask. Returns the predicted noise.
  LatentBlock forward(const LatentBlock& noisy, int t, const LatentBlock& cond_tar,
                      const MaskImage& mask_lat, const LatentBlock& cond_cloud);

  // grad_eps: dLoss/d(prediction tokens), same shape as the forward output.
  void backward(const Mat& grad_eps);

  void zero_grad();
  std::vector<Param*> params();
  const DenoiserConfig& config() const { return cfg_; }

  void save_checkpoint(const std::filesystem::path& path) const;
  static Denoiser load_checkpoint(const std::filesystem::path& path);

 private:
  struct Impl;
  explicit Denoiser(const DenoiserConfig& cfg);  // uninitialized weights
  DenoiserConfig cfg_;
  std::shared_ptr<Impl> impl_;
};

// Adam over the model's parameter list.
class AdamOptimizer {
 public:
  AdamOptimizer(std::vector<Param*> params, double lr, double beta1 = 0.9,
                double beta2 = 0.999, double eps = 1e-8);
  void step();

 private:
  std::vector<Param*> params_;
  std::vector<Mat> m_, v_;
  double lr_, beta1_, beta2_, eps_;
  int64_t t_ = 0;
};

}  // namespace cloudfill::dualnet
