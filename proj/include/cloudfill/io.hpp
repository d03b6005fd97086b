#pragma once

#include <filesystem>
#include <map>
#include <string>

#include "cloudfill/geometry.hpp"
#include "cloudfill/image.hpp"

namespace cloudfill::io {

void write_png(const std::filesystem::path& path, const Image& img);
void write_png(const std::filesystem::path& path, const MaskImage& mask);
Image read_png_image(const std::filesystem::path& path);
MaskImage read_png_mask(const std::filesystem::path& path);

// "GDPT": u32 width, u32 height, width*height f32 row-major depths,
// little-endian; non-positive or NaN depth = invalid pixel.
void write_depth(const std::filesystem::path& path, const geometry::DepthMap& d);
geometry::DepthMap read_depth(const std::filesystem::path& path);

// Textual key-value camera document.
void write_camera(const std::filesystem::path& path, const geometry::CameraParams& c);
geometry::CameraParams read_camera(const std::filesystem::path& path);

// "GPCD": u32 count, per point 3*f32 position + 3*u8 color.
void write_cloud(const std::filesystem::path& path, const geometry::PointCloud& pc);
geometry::PointCloud read_cloud(const std::filesystem::path& path);

// Flat key-value config text with [section] headers; keys stored as
// "section.key" ("" section = bare key). '#' starts a comment.
class KeyValues {
 public:
  KeyValues() = default;
  static KeyValues parse_file(const std::filesystem::path& path);
  static KeyValues parse_string(const std::string& text);

  bool has(const std::string& key) const { return map_.count(key) > 0; }
  std::string get(const std::string& key, const std::string& fallback = "") const;
  double get_double(const std::string& key, double fallback) const;
  int64_t get_int(const std::string& key, int64_t fallback) const;
  bool get_bool(const std::string& key, bool fallback) const;
  void set(const std::string& key, const std::string& value) { map_[key] = value; }
  void set_double(const std::string& key, double value);
  void set_int(const std::string& key, int64_t value);

  const std::map<std::string, std::string>& entries() const { return map_; }
  std::string serialize() const;
  void write_file(const std::filesystem::path& path) const;

 private:
  std::map<std::string, std::string> map_;
};

}  // namespace cloudfill::io
