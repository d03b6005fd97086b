#pragma once

#include <Eigen/Dense>
#include <vector>

#include "cloudfill/image.hpp"
#include "cloudfill/rng.hpp"

namespace cloudfill::dualnet {

using Mat = Eigen::MatrixXd;
using Vec = Eigen::VectorXd;

// Spatial latent with a token view: tokens.row(y*w + x) is one c-dim token.
struct LatentBlock {
  int channels = 0;
  int height = 0;
  int width = 0;
  Mat tokens;  // (height*width) x channels

  LatentBlock() = default;
  LatentBlock(int c, int h, int w)
      : channels(c), height(h), width(w), tokens(Mat::Zero(h * w, c)) {}

  int num_tokens() const { return height * width; }
};

// Fixed invertible patchify (space-to-depth): 3 image channels become
// 3*patch^2 latent channels; exact inverse of to_latent.
LatentBlock to_latent(const Image& image, int patch);
Image from_latent(const LatentBlock& latent, int patch);

// Max-pool over each patch; 1 iff any covered image pixel is 1.
MaskImage downsample_mask(const MaskImage& mask, int patch);

struct NoiseSchedule {
  int T = 0;
  std::vector<double> betas;
  std::vector<double> alphas;
  std::vector<double> alpha_bars;  // cumulative products, strictly decreasing

  static NoiseSchedule linear(int T, double beta_start = 1e-4, double beta_end = 0.02);
  void validate() const;
};

// x_t = sqrt(alpha_bar_t) * x0 + sqrt(1 - alpha_bar_t) * eps
LatentBlock add_noise(const LatentBlock& x0, int t, const LatentBlock& eps,
                      const NoiseSchedule& sched);

LatentBlock gaussian_latent(int c, int h, int w, Rng& rng);

// 2L x 2L attention permission matrix. Target tokens occupy rows/cols
// [0, L), cloud tokens [L, 2L).
struct AttentionMask {
  int L = 0;
  std::vector<uint8_t> allowed;  // row-major 2L x 2L

  bool at(int row, int col) const {
    return allowed[static_cast<size_t>(row) * 2 * L + col] != 0;
  }
};

enum class JsaMode {
  MaskedAsymmetric,  // target->cloud diagonal only (default reading)
  MaskedSymmetric,   // diagonal links in both directions
  Full,              // no cross-branch blocking (JSA ablation)
};

AttentionMask build_attention_mask(int L, JsaMode mode = JsaMode::MaskedAsymmetric);

}  // namespace cloudfill::dualnet
