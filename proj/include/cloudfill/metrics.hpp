#pragma once

#include <optional>
#include <string>

#include "cloudfill/image.hpp"

namespace cloudfill::metrics {

struct EvalReport {
  double psnr_full = 0;
  double psnr_masked = 0;
  double ssim_full = 0;
  size_t pixels_full = 0;
  size_t pixels_masked = 0;
  std::string scene_id;
  uint64_t seed = 0;

  std::string csv_header() const;
  std::string csv_row() const;
  std::string pretty() const;
};

// 10*log10(1/MSE) over the region; identical images cap at 99 dB.
double psnr(const Image& a, const Image& b,
            const std::optional<MaskImage>& region = std::nullopt);

// Classic Gaussian-window SSIM: 11-tap window, sigma 1.5, dynamic range 1.0,
// C1 = (0.01)^2, C2 = (0.03)^2, computed per channel then averaged.
double ssim(const Image& a, const Image& b);

}  // namespace cloudfill::metrics
