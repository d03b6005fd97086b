#pragma once

#include <cstdint>
#include <vector>

#include "cloudfill/error.hpp"

namespace cloudfill {

// Interleaved RGB image, values in [0,1].
struct Image {
  int width = 0;
  int height = 0;
  std::vector<float> data;  // size = width*height*3, row-major, rgb

  Image() = default;
  Image(int w, int h, float fill = 0.0f)
      : width(w), height(h), data(static_cast<size_t>(w) * h * 3, fill) {}

  float& at(int x, int y, int c) {
    return data[(static_cast<size_t>(y) * width + x) * 3 + c];
  }
  float at(int x, int y, int c) const {
    return data[(static_cast<size_t>(y) * width + x) * 3 + c];
  }

  bool same_size(const Image& o) const {
    return width == o.width && height == o.height;
  }
};

// Strictly binary per-pixel mask.
struct MaskImage {
  int width = 0;
  int height = 0;
  std::vector<uint8_t> values;  // 0 or 1, row-major

  MaskImage() = default;
  MaskImage(int w, int h, uint8_t fill = 0)
      : width(w), height(h), values(static_cast<size_t>(w) * h, fill) {}

  uint8_t& at(int x, int y) { return values[static_cast<size_t>(y) * width + x]; }
  uint8_t at(int x, int y) const {
    return values[static_cast<size_t>(y) * width + x];
  }

  size_t count_ones() const {
    size_t n = 0;
    for (uint8_t v : values) n += v;
    return n;
  }

  void validate_binary(const char* what) const {
    for (uint8_t v : values) {
      if (v != 0 && v != 1)
        throw ValidationError(std::string(what) + ": mask is not binary");
    }
  }
};

inline void require_same_size(const Image& a, const Image& b, const char* what) {
  if (!a.same_size(b))
    throw ValidationError(std::string(what) + ": image dimensions differ");
}

inline void require_same_size(const Image& a, const MaskImage& m, const char* what) {
  if (a.width != m.width || a.height != m.height)
    throw ValidationError(std::string(what) + ": mask dimensions differ from image");
}

}  // namespace cloudfill
