#pragma once

#include <optional>

#include "cloudfill/image.hpp"
#include "cloudfill/rng.hpp"

namespace cloudfill::masking {

enum class RectMaskMode { Union, ComplementOfUnion };

struct RectMaskParams {
  int min_rects = 1;
  int max_rects = 4;
  double min_side_fraction = 0.2;
  double max_side_fraction = 0.6;
  // Unset = pick uniformly per draw.
  std::optional<RectMaskMode> mode;

  void validate() const {
    if (min_rects < 1 || max_rects < min_rects)
      throw ConfigError("rect mask: rectangle counts must satisfy 1 <= min <= max");
    if (min_side_fraction <= 0 || max_side_fraction > 1 ||
        min_side_fraction > max_side_fraction)
      throw ConfigError("rect mask: side fractions must be in (0,1] and ordered");
  }
};

// Training sample for the denoising loss: conditioning image, conditioning
// cloud, loss weight map, ground truth, and which pixels of the conditioning
// image were hidden.
struct TrainingSample {
  Image cond_image;    // x-hat
  Image cond_cloud;    // p-hat
  MaskImage cond_mask; // 1 = hidden in cond_image
  MaskImage weight;    // w, 1 = loss counts here
  Image ground_truth;
  int source = -1;     // reference index, or -1 for the target
};

// Initial random mask; 1 = kept, 0 = masked out.
MaskImage random_rect_mask(const RectMaskParams& params, int width, int height,
                           Rng& rng);

// x-hat = x * ((1 - r) + r * m_rand): informative pixels (r=1) survive only
// where m_rand = 1.
Image conditional_reference_mask(const Image& x_ref, const MaskImage& r,
                                 const MaskImage& m_rand);

// m_point = r + (1 - r) * m_rand; p-hat = p * m_point + v_fill * (1 - m_point).
Image conditional_cloud_mask(const Image& p_ref, const MaskImage& r,
                             const MaskImage& m_rand, float v_fill);

}  // namespace cloudfill::masking
