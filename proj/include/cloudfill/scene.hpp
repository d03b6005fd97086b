#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "cloudfill/geometry.hpp"
#include "cloudfill/image.hpp"
#include "cloudfill/io.hpp"
#include "cloudfill/rng.hpp"

namespace cloudfill::scene_forge {

using geometry::CameraParams;
using geometry::DepthMap;
using geometry::Vec3;
using geometry::operator+;
using geometry::operator-;
using geometry::operator*;
using geometry::cross;
using geometry::dot;
using geometry::norm;
using geometry::normalized;

enum class PrimitiveKind { Plane, Sphere, Box };
enum class TextureKind { Checker, Noise };

// Analytic scene primitive; dynamic primitives get an extra per-view offset.
struct Primitive {
  PrimitiveKind kind;
  Vec3 a{};         // plane point / sphere center / box min
  Vec3 b{};         // plane normal / unused / box max
  double radius = 0;
  TextureKind texture = TextureKind::Checker;
  double tex_scale = 1.0;
  std::array<float, 3> color_a = {0.8f, 0.8f, 0.8f};
  std::array<float, 3> color_b = {0.2f, 0.2f, 0.2f};
  uint32_t noise_seed = 0;
  bool dynamic = false;
  std::vector<Vec3> view_offsets;  // per view (references then target); dynamic only
};

enum class CompletionMode { Inpaint, Outpaint };

struct SceneConfig {
  int width = 64;
  int height = 64;
  int num_references = 3;          // 1..5
  int num_objects = 2;             // boxes/spheres on the ground plane
  int num_dynamic = 1;             // of which dynamic
  double rotation_jitter_deg = 8.0;
  double translation_jitter = 0.35;
  double dynamic_displacement = 0.5;
  CompletionMode completion_mode = CompletionMode::Inpaint;
  double completion_area_fraction = 0.25;
  int latent_patch = 4;            // resolution must divide by this
  int max_retries = 8;

  void validate() const;
};

struct ViewRecord {
  Image color;
  DepthMap depth;
  CameraParams cam;
  MaskImage dynamic_mask;  // 1 = dynamic content
};

struct SceneBundle {
  std::vector<ViewRecord> references;
  ViewRecord target;              // color = ground truth completion
  MaskImage completion_mask;      // 1 = missing region of the target
  uint64_t seed = 0;
  io::KeyValues meta;             // generation config echo
  std::vector<Primitive> primitives;  // empty for loaded scenes

  void validate() const;
};

SceneBundle generate_scene(const SceneConfig& cfg, uint64_t seed);

void save_scene(const SceneBundle& bundle, const std::filesystem::path& dir);
SceneBundle load_scene(const std::filesystem::path& dir);

// Pixels with dyn_mask = 1 become the background value.
Image apply_dynamic_filter(const Image& image, const MaskImage& dyn_mask,
                           std::array<float, 3> background = {1.0f, 1.0f, 1.0f});

// Flips floor(extra_fraction * #zeros) random 0-pixels to 1; never unmasks.
MaskImage corrupt_dynamic_mask(const MaskImage& mask, double extra_fraction,
                               Rng& rng);

// Exact analytic hit test used by the renderer; exposed for silhouette oracles.
// Returns the ray parameter (camera-frame depth) or +inf on miss.
double intersect_primitive(const Primitive& prim, const Vec3& origin,
                           const Vec3& dir, int view_index);

// Known preset names for the CLI.
std::vector<std::string> preset_names();
SceneConfig preset_config(const std::string& name);

}  // namespace cloudfill::scene_forge
