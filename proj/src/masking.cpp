#include "cloudfill/masking.hpp"

#include <algorithm>
#include <cmath>

namespace cloudfill::masking {

MaskImage random_rect_mask(const RectMaskParams& params, int width, int height,
                           Rng& rng) {
  params.validate();
  if (width < 1 || height < 1)
    throw ConfigError("rect mask: dimensions must be >= 1");

  int n = static_cast<int>(rng.uniform_int(params.min_rects, params.max_rects));
  RectMaskMode mode = params.mode ? *params.mode
                                  : (rng.uniform() < 0.5 ? RectMaskMode::Union
                                                         : RectMaskMode::ComplementOfUnion);

  MaskImage inside(width, height, 0);  // 1 = inside some rectangle
  for (int k = 0; k < n; ++k) {
    int rw = std::clamp(static_cast<int>(std::lround(
                 rng.uniform(params.min_side_fraction, params.max_side_fraction) * width)),
                 1, width);
    int rh = std::clamp(static_cast<int>(std::lround(
                 rng.uniform(params.min_side_fraction, params.max_side_fraction) * height)),
                 1, height);
    int x0 = static_cast<int>(rng.uniform_int(0, width - rw));
    int y0 = static_cast<int>(rng.uniform_int(0, height - rh));
    for (int y = y0; y < y0 + rh; ++y)
      for (int x = x0; x < x0 + rw; ++x) inside.at(x, y) = 1;
  }

  MaskImage out(width, height, 0);
  for (size_t i = 0; i < out.values.size(); ++i) {
    bool masked = (mode == RectMaskMode::Union) ? inside.values[i] != 0
                                                : inside.values[i] == 0;
    out.values[i] = masked ? 0 : 1;
  }
  return out;
}

Image conditional_reference_mask(const Image& x_ref, const MaskImage& r,
                                 const MaskImage& m_rand) {
  require_same_size(x_ref, r, "conditional_reference_mask");
  require_same_size(x_ref, m_rand, "conditional_reference_mask");
  r.validate_binary("conditional_reference_mask r");
  m_rand.validate_binary("conditional_reference_mask m_rand");

  Image out(x_ref.width, x_ref.height);
  for (size_t i = 0; i < r.values.size(); ++i) {
    float keep = static_cast<float>((1 - r.values[i]) + r.values[i] * m_rand.values[i]);
    for (int c = 0; c < 3; ++c) out.data[i * 3 + c] = x_ref.data[i * 3 + c] * keep;
  }
  return out;
}

Image conditional_cloud_mask(const Image& p_ref, const MaskImage& r,
                             const MaskImage& m_rand, float v_fill) {
  require_same_size(p_ref, r, "conditional_cloud_mask");
  require_same_size(p_ref, m_rand, "conditional_cloud_mask");
  r.validate_binary("conditional_cloud_mask r");
  m_rand.validate_binary("conditional_cloud_mask m_rand");
  if (v_fill < 0.0f || v_fill > 1.0f)
    throw ConfigError("conditional_cloud_mask: v_fill must be in [0,1]");

  Image out(p_ref.width, p_ref.height);
  for (size_t i = 0; i < r.values.size(); ++i) {
    int m_point = r.values[i] + (1 - r.values[i]) * m_rand.values[i];
    for (int c = 0; c < 3; ++c)
      out.data[i * 3 + c] =
          p_ref.data[i * 3 + c] * m_point + v_fill * (1 - m_point);
  }
  return out;
}

}  // namespace cloudfill::masking
