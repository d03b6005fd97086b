#include "cloudfill/io.hpp"

#include <png.h>

#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <sstream>
#include <vector>

namespace cloudfill::io {

namespace {

struct FileCloser {
  void operator()(FILE* f) const {
    if (f) std::fclose(f);
  }
};
using FilePtr = std::unique_ptr<FILE, FileCloser>;

FilePtr open_file(const std::filesystem::path& path, const char* mode) {
  FilePtr f(std::fopen(path.c_str(), mode));
  if (!f) throw IoError("cannot open file: " + path.string());
  return f;
}

void write_png_rows(const std::filesystem::path& path, int width, int height,
                    int color_type, std::vector<png_bytep>& rows) {
  FilePtr f = open_file(path, "wb");
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  if (!png) throw IoError("png_create_write_struct failed");
  png_infop info = png_create_info_struct(png);
  if (!info) {
    png_destroy_write_struct(&png, nullptr);
    throw IoError("png_create_info_struct failed");
  }
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    throw IoError("png write failed: " + path.string());
  }
  png_init_io(png, f.get());
  png_set_IHDR(png, info, width, height, 8, color_type, PNG_INTERLACE_NONE,
               PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  png_write_image(png, rows.data());
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
}

uint8_t to_byte(float v) {
  float c = v < 0.0f ? 0.0f : (v > 1.0f ? 1.0f : v);
  return static_cast<uint8_t>(std::lround(c * 255.0f));
}

struct PngReader {
  png_structp png = nullptr;
  png_infop info = nullptr;
  std::vector<uint8_t> pixels;  // RGB8 interleaved after normalization
  int width = 0, height = 0;

  explicit PngReader(const std::filesystem::path& path) {
    FilePtr f = open_file(path, "rb");
    uint8_t header[8];
    if (std::fread(header, 1, 8, f.get()) != 8 || png_sig_cmp(header, 0, 8))
      throw IoError("not a PNG file: " + path.string());
    png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    if (!png) throw IoError("png_create_read_struct failed");
    info = png_create_info_struct(png);
    if (!info) {
      png_destroy_read_struct(&png, nullptr, nullptr);
      throw IoError("png_create_info_struct failed");
    }
    if (setjmp(png_jmpbuf(png))) {
      png_destroy_read_struct(&png, &info, nullptr);
      throw IoError("png read failed: " + path.string());
    }
    png_init_io(png, f.get());
    png_set_sig_bytes(png, 8);
    png_read_info(png, info);
    width = png_get_image_width(png, info);
    height = png_get_image_height(png, info);
    int bit_depth = png_get_bit_depth(png, info);
    int color_type = png_get_color_type(png, info);
    if (bit_depth == 16) png_set_strip_16(png);
    if (color_type == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(png);
    if (color_type == PNG_COLOR_TYPE_GRAY && bit_depth < 8) png_set_expand_gray_1_2_4_to_8(png);
    if (png_get_valid(png, info, PNG_INFO_tRNS)) png_set_tRNS_to_alpha(png);
    if (color_type == PNG_COLOR_TYPE_GRAY || color_type == PNG_COLOR_TYPE_GRAY_ALPHA)
      png_set_gray_to_rgb(png);
    png_set_strip_alpha(png);
    png_read_update_info(png, info);
    pixels.resize(static_cast<size_t>(width) * height * 3);
    std::vector<png_bytep> rows(height);
    for (int y = 0; y < height; ++y)
      rows[y] = pixels.data() + static_cast<size_t>(y) * width * 3;
    png_read_image(png, rows.data());
    png_destroy_read_struct(&png, &info, nullptr);
  }
};

template <typename T>
void write_raw(std::ofstream& out, const T& v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T read_raw(std::ifstream& in, const std::filesystem::path& path) {
  T v;
  in.read(reinterpret_cast<char*>(&v), sizeof(T));
  if (!in) throw IoError("truncated file: " + path.string());
  return v;
}

}  // namespace

void write_png(const std::filesystem::path& path, const Image& img) {
  std::vector<uint8_t> bytes(static_cast<size_t>(img.width) * img.height * 3);
  for (size_t i = 0; i < bytes.size(); ++i) bytes[i] = to_byte(img.data[i]);
  std::vector<png_bytep> rows(img.height);
  for (int y = 0; y < img.height; ++y)
    rows[y] = bytes.data() + static_cast<size_t>(y) * img.width * 3;
  write_png_rows(path, img.width, img.height, PNG_COLOR_TYPE_RGB, rows);
}

void write_png(const std::filesystem::path& path, const MaskImage& mask) {
  std::vector<uint8_t> bytes(mask.values.size());
  for (size_t i = 0; i < bytes.size(); ++i) bytes[i] = mask.values[i] ? 255 : 0;
  std::vector<png_bytep> rows(mask.height);
  for (int y = 0; y < mask.height; ++y)
    rows[y] = bytes.data() + static_cast<size_t>(y) * mask.width;
  write_png_rows(path, mask.width, mask.height, PNG_COLOR_TYPE_GRAY, rows);
}

Image read_png_image(const std::filesystem::path& path) {
  PngReader r(path);
  Image img(r.width, r.height);
  for (size_t i = 0; i < r.pixels.size(); ++i)
    img.data[i] = static_cast<float>(r.pixels[i]) / 255.0f;
  return img;
}

MaskImage read_png_mask(const std::filesystem::path& path) {
  PngReader r(path);
  MaskImage m(r.width, r.height);
  for (size_t i = 0; i < m.values.size(); ++i)
    m.values[i] = r.pixels[i * 3] >= 128 ? 1 : 0;
  return m;
}

void write_depth(const std::filesystem::path& path, const geometry::DepthMap& d) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open file for write: " + path.string());
  out.write("GDPT", 4);
  write_raw(out, static_cast<uint32_t>(d.width));
  write_raw(out, static_cast<uint32_t>(d.height));
  for (size_t i = 0; i < d.values.size(); ++i) {
    float v = d.valid[i] ? d.values[i] : -1.0f;
    write_raw(out, v);
  }
  if (!out) throw IoError("write failed: " + path.string());
}

geometry::DepthMap read_depth(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open file: " + path.string());
  char magic[4];
  in.read(magic, 4);
  if (!in || std::memcmp(magic, "GDPT", 4) != 0)
    throw IoError("bad depth file magic: " + path.string());
  uint32_t w = read_raw<uint32_t>(in, path);
  uint32_t h = read_raw<uint32_t>(in, path);
  if (w == 0 || h == 0 || w > 1u << 16 || h > 1u << 16)
    throw IoError("bad depth dimensions: " + path.string());
  geometry::DepthMap d(static_cast<int>(w), static_cast<int>(h));
  for (size_t i = 0; i < d.values.size(); ++i) {
    float v = read_raw<float>(in, path);
    if (std::isfinite(v) && v > 0) {
      d.values[i] = v;
      d.valid[i] = 1;
    }
  }
  return d;
}

void write_camera(const std::filesystem::path& path, const geometry::CameraParams& c) {
  std::ostringstream s;
  s.precision(17);
  s << "fx " << c.fx << "\n"
    << "fy " << c.fy << "\n"
    << "cx " << c.cx << "\n"
    << "cy " << c.cy << "\n"
    << "width " << c.width << "\n"
    << "height " << c.height << "\n";
  s << "rotation";
  for (double v : c.rotation) s << " " << v;
  s << "\ntranslation";
  for (double v : c.translation) s << " " << v;
  s << "\n";
  std::ofstream out(path);
  if (!out) throw IoError("cannot open file for write: " + path.string());
  out << s.str();
  if (!out) throw IoError("write failed: " + path.string());
}

geometry::CameraParams read_camera(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open file: " + path.string());
  geometry::CameraParams c;
  bool got[8] = {};
  std::string key;
  while (in >> key) {
    if (key == "fx") { in >> c.fx; got[0] = true; }
    else if (key == "fy") { in >> c.fy; got[1] = true; }
    else if (key == "cx") { in >> c.cx; got[2] = true; }
    else if (key == "cy") { in >> c.cy; got[3] = true; }
    else if (key == "width") { in >> c.width; got[4] = true; }
    else if (key == "height") { in >> c.height; got[5] = true; }
    else if (key == "rotation") {
      for (double& v : c.rotation) in >> v;
      got[6] = true;
    } else if (key == "translation") {
      for (double& v : c.translation) in >> v;
      got[7] = true;
    } else {
      throw IoError("unknown camera key '" + key + "' in " + path.string());
    }
    if (in.fail()) throw IoError("malformed camera file: " + path.string());
  }
  for (bool g : got)
    if (!g) throw IoError("incomplete camera file: " + path.string());
  c.validate();
  return c;
}

void write_cloud(const std::filesystem::path& path, const geometry::PointCloud& pc) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open file for write: " + path.string());
  out.write("GPCD", 4);
  write_raw(out, static_cast<uint32_t>(pc.size()));
  for (size_t i = 0; i < pc.size(); ++i) {
    for (int k = 0; k < 3; ++k) write_raw(out, static_cast<float>(pc.points[i][k]));
    for (int k = 0; k < 3; ++k) write_raw(out, to_byte(pc.colors[i][k]));
  }
  if (!out) throw IoError("write failed: " + path.string());
}

geometry::PointCloud read_cloud(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open file: " + path.string());
  char magic[4];
  in.read(magic, 4);
  if (!in || std::memcmp(magic, "GPCD", 4) != 0)
    throw IoError("bad point cloud magic: " + path.string());
  uint32_t n = read_raw<uint32_t>(in, path);
  geometry::PointCloud pc;
  pc.points.resize(n);
  pc.colors.resize(n);
  pc.source_tag.assign(n, 0);
  for (uint32_t i = 0; i < n; ++i) {
    for (int k = 0; k < 3; ++k) pc.points[i][k] = read_raw<float>(in, path);
    for (int k = 0; k < 3; ++k)
      pc.colors[i][k] = static_cast<float>(read_raw<uint8_t>(in, path)) / 255.0f;
  }
  return pc;
}

KeyValues KeyValues::parse_string(const std::string& text) {
  KeyValues kv;
  std::istringstream in(text);
  std::string line, section;
  while (std::getline(in, line)) {
    size_t hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    size_t b = line.find_first_not_of(" \t\r");
    if (b == std::string::npos) continue;
    size_t e = line.find_last_not_of(" \t\r");
    line = line.substr(b, e - b + 1);
    if (line.front() == '[') {
      if (line.back() != ']') throw ConfigError("malformed section header: " + line);
      section = line.substr(1, line.size() - 2);
      continue;
    }
    size_t eq = line.find('=');
    if (eq == std::string::npos) throw ConfigError("malformed config line: " + line);
    std::string key = line.substr(0, eq);
    std::string val = line.substr(eq + 1);
    auto trim = [](std::string& s) {
      size_t a = s.find_first_not_of(" \t");
      size_t z = s.find_last_not_of(" \t");
      s = (a == std::string::npos) ? "" : s.substr(a, z - a + 1);
    };
    trim(key);
    trim(val);
    if (key.empty()) throw ConfigError("empty config key in line: " + line);
    kv.map_[section.empty() ? key : section + "." + key] = val;
  }
  return kv;
}

KeyValues KeyValues::parse_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config file: " + path.string());
  std::stringstream buf;
  buf << in.rdbuf();
  return parse_string(buf.str());
}

std::string KeyValues::get(const std::string& key, const std::string& fallback) const {
  auto it = map_.find(key);
  return it == map_.end() ? fallback : it->second;
}

double KeyValues::get_double(const std::string& key, double fallback) const {
  auto it = map_.find(key);
  if (it == map_.end()) return fallback;
  try {
    return std::stod(it->second);
  } catch (const std::exception&) {
    throw ConfigError("config key '" + key + "' is not a number: " + it->second);
  }
}

int64_t KeyValues::get_int(const std::string& key, int64_t fallback) const {
  auto it = map_.find(key);
  if (it == map_.end()) return fallback;
  try {
    return std::stoll(it->second);
  } catch (const std::exception&) {
    throw ConfigError("config key '" + key + "' is not an integer: " + it->second);
  }
}

bool KeyValues::get_bool(const std::string& key, bool fallback) const {
  auto it = map_.find(key);
  if (it == map_.end()) return fallback;
  const std::string& v = it->second;
  if (v == "true" || v == "1" || v == "yes") return true;
  if (v == "false" || v == "0" || v == "no") return false;
  throw ConfigError("config key '" + key + "' is not a boolean: " + v);
}

void KeyValues::set_double(const std::string& key, double value) {
  std::ostringstream s;
  s.precision(17);
  s << value;
  map_[key] = s.str();
}

void KeyValues::set_int(const std::string& key, int64_t value) {
  map_[key] = std::to_string(value);
}

std::string KeyValues::serialize() const {
  // bare keys first so a later [section] header cannot capture them
  std::ostringstream out;
  for (const auto& [key, val] : map_)
    if (key.find('.') == std::string::npos) out << key << " = " << val << "\n";
  std::string current;
  for (const auto& [key, val] : map_) {
    size_t dot = key.find('.');
    if (dot == std::string::npos) continue;
    std::string section = key.substr(0, dot);
    if (section != current) {
      out << "[" << section << "]\n";
      current = section;
    }
    out << key.substr(dot + 1) << " = " << val << "\n";
  }
  return out.str();
}

void KeyValues::write_file(const std::filesystem::path& path) const {
  std::ofstream out(path);
  if (!out) throw IoError("cannot open config file for write: " + path.string());
  out << serialize();
  if (!out) throw IoError("write failed: " + path.string());
}

}  // namespace cloudfill::io
