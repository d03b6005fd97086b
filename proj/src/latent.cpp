#include "cloudfill/latent.hpp"

#include <cmath>

namespace cloudfill::dualnet {

namespace {
void require_divisible(int w, int h, int patch, const char* what) {
  if (patch < 1 || w % patch || h % patch)
    throw ValidationError(std::string(what) + ": dimensions not divisible by patch size");
}
}  // namespace

LatentBlock to_latent(const Image& image, int patch) {
  require_divisible(image.width, image.height, patch, "to_latent");
  int w = image.width / patch, h = image.height / patch;
  LatentBlock lat(3 * patch * patch, h, w);
  for (int ty = 0; ty < h; ++ty) {
    for (int tx = 0; tx < w; ++tx) {
      int row = ty * w + tx;
      for (int py = 0; py < patch; ++py)
        for (int px = 0; px < patch; ++px)
          for (int c = 0; c < 3; ++c)
            lat.tokens(row, (py * patch + px) * 3 + c) =
                image.at(tx * patch + px, ty * patch + py, c);
    }
  }
  return lat;
}

Image from_latent(const LatentBlock& latent, int patch) {
  if (latent.channels != 3 * patch * patch)
    throw ValidationError("from_latent: channel count does not match patch size");
  Image img(latent.width * patch, latent.height * patch);
  for (int ty = 0; ty < latent.height; ++ty) {
    for (int tx = 0; tx < latent.width; ++tx) {
      int row = ty * latent.width + tx;
      for (int py = 0; py < patch; ++py)
        for (int px = 0; px < patch; ++px)
          for (int c = 0; c < 3; ++c)
            img.at(tx * patch + px, ty * patch + py, c) =
                static_cast<float>(latent.tokens(row, (py * patch + px) * 3 + c));
    }
  }
  return img;
}

MaskImage downsample_mask(const MaskImage& mask, int patch) {
  require_divisible(mask.width, mask.height, patch, "downsample_mask");
  mask.validate_binary("downsample_mask");
  MaskImage out(mask.width / patch, mask.height / patch, 0);
  for (int y = 0; y < mask.height; ++y)
    for (int x = 0; x < mask.width; ++x)
      if (mask.at(x, y)) out.at(x / patch, y / patch) = 1;
  return out;
}

NoiseSchedule NoiseSchedule::linear(int T, double beta_start, double beta_end) {
  NoiseSchedule s;
  s.T = T;
  s.betas.resize(T);
  s.alphas.resize(T);
  s.alpha_bars.resize(T);
  double prod = 1.0;
  for (int t = 0; t < T; ++t) {
    double b = T == 1 ? beta_start
                      : beta_start + (beta_end - beta_start) * t / (T - 1);
    s.betas[t] = b;
    s.alphas[t] = 1.0 - b;
    prod *= s.alphas[t];
    s.alpha_bars[t] = prod;
  }
  s.validate();
  return s;
}

void NoiseSchedule::validate() const {
  if (T < 1 || static_cast<int>(betas.size()) != T)
    throw ConfigError("noise schedule: bad timestep count");
  double prev = 1.0;
  for (int t = 0; t < T; ++t) {
    if (betas[t] <= 0 || betas[t] >= 1)
      throw ConfigError("noise schedule: betas must lie strictly in (0,1)");
    if (alpha_bars[t] >= prev)
      throw ConfigError("noise schedule: alpha_bar must be strictly decreasing");
    prev = alpha_bars[t];
  }
}

LatentBlock add_noise(const LatentBlock& x0, int t, const LatentBlock& eps,
                      const NoiseSchedule& sched) {
  if (t < 0 || t >= sched.T) throw ConfigError("add_noise: timestep out of range");
  if (x0.tokens.rows() != eps.tokens.rows() || x0.tokens.cols() != eps.tokens.cols())
    throw ValidationError("add_noise: shape mismatch");
  LatentBlock out = x0;
  double ab = sched.alpha_bars[t];
  out.tokens = std::sqrt(ab) * x0.tokens + std::sqrt(1.0 - ab) * eps.tokens;
  return out;
}

LatentBlock gaussian_latent(int c, int h, int w, Rng& rng) {
  LatentBlock lat(c, h, w);
  for (int i = 0; i < lat.tokens.rows(); ++i)
    for (int j = 0; j < lat.tokens.cols(); ++j) lat.tokens(i, j) = rng.normal();
  return lat;
}

AttentionMask build_attention_mask(int L, JsaMode mode) {
  if (L < 1) throw ConfigError("build_attention_mask: L must be >= 1");
  AttentionMask m;
  m.L = L;
  m.allowed.assign(static_cast<size_t>(2 * L) * 2 * L, 0);
  auto set = [&](int r, int c) { m.allowed[static_cast<size_t>(r) * 2 * L + c] = 1; };
  for (int i = 0; i < L; ++i)
    for (int j = 0; j < L; ++j) {
      set(i, j);          // target -> target
      set(L + i, L + j);  // cloud -> cloud
    }
  if (mode == JsaMode::Full) {
    for (int i = 0; i < L; ++i)
      for (int j = 0; j < L; ++j) {
        set(i, L + j);
        set(L + i, j);
      }
    return m;
  }
  for (int i = 0; i < L; ++i) {
    set(i, L + i);  // target token -> its cloud token
    if (mode == JsaMode::MaskedSymmetric) set(L + i, i);
  }
  return m;
}

}  // namespace cloudfill::dualnet
