#pragma once

#include <array>
#include <cstdint>
#include <limits>
#include <vector>

#include "cloudfill/image.hpp"
#include "cloudfill/rng.hpp"

namespace cloudfill::geometry {

using Vec3 = std::array<double, 3>;

inline Vec3 operator+(const Vec3& a, const Vec3& b) {
  return {a[0] + b[0], a[1] + b[1], a[2] + b[2]};
}
inline Vec3 operator-(const Vec3& a, const Vec3& b) {
  return {a[0] - b[0], a[1] - b[1], a[2] - b[2]};
}
inline Vec3 operator*(double s, const Vec3& a) {
  return {s * a[0], s * a[1], s * a[2]};
}
inline double dot(const Vec3& a, const Vec3& b) {
  return a[0] * b[0] + a[1] * b[1] + a[2] * b[2];
}
inline Vec3 cross(const Vec3& a, const Vec3& b) {
  return {a[1] * b[2] - a[2] * b[1], a[2] * b[0] - a[0] * b[2],
          a[0] * b[1] - a[1] * b[0]};
}
inline double norm(const Vec3& a) { return std::sqrt(dot(a, a)); }
inline Vec3 normalized(const Vec3& a) {
  double n = norm(a);
  return {a[0] / n, a[1] / n, a[2] / n};
}

// Pinhole intrinsics plus world->camera rigid transform.
struct CameraParams {
  double fx = 0, fy = 0;
  double cx = 0, cy = 0;
  std::array<double, 9> rotation{};   // row-major, world->camera
  Vec3 translation{};                 // world->camera
  int width = 0, height = 0;

  void validate() const;

  Vec3 world_to_camera(const Vec3& p) const {
    const auto& r = rotation;
    return {r[0] * p[0] + r[1] * p[1] + r[2] * p[2] + translation[0],
            r[3] * p[0] + r[4] * p[1] + r[5] * p[2] + translation[1],
            r[6] * p[0] + r[7] * p[1] + r[8] * p[2] + translation[2]};
  }

  // Inverse rigid transform: Xw = R^T (Xc - t).
  Vec3 camera_to_world(const Vec3& p) const {
    const auto& r = rotation;
    Vec3 q = {p[0] - translation[0], p[1] - translation[1], p[2] - translation[2]};
    return {r[0] * q[0] + r[3] * q[1] + r[6] * q[2],
            r[1] * q[0] + r[4] * q[1] + r[7] * q[2],
            r[2] * q[0] + r[5] * q[1] + r[8] * q[2]};
  }

  Vec3 center() const { return camera_to_world({0, 0, 0}); }
};

struct DepthMap {
  int width = 0;
  int height = 0;
  std::vector<float> values;
  std::vector<uint8_t> valid;

  DepthMap() = default;
  DepthMap(int w, int h)
      : width(w),
        height(h),
        values(static_cast<size_t>(w) * h, 0.0f),
        valid(static_cast<size_t>(w) * h, 0) {}

  float depth(int x, int y) const { return values[static_cast<size_t>(y) * width + x]; }
  bool is_valid(int x, int y) const {
    return valid[static_cast<size_t>(y) * width + x] != 0;
  }
  void set(int x, int y, float d) {
    size_t i = static_cast<size_t>(y) * width + x;
    values[i] = d;
    valid[i] = 1;
  }
  void invalidate(int x, int y) { valid[static_cast<size_t>(y) * width + x] = 0; }
};

struct PointCloud {
  std::vector<Vec3> points;
  std::vector<std::array<float, 3>> colors;  // rgb in [0,1]
  std::vector<int32_t> source_tag;           // contributing view id

  size_t size() const { return points.size(); }
  void append(const PointCloud& other);
};

struct ProjectedCloud {
  Image image;                       // background where uncovered
  std::vector<float> depth_buffer;   // +inf where uncovered
  MaskImage coverage;                // 1 where any point splatted

  float depth_at(int x, int y) const {
    return depth_buffer[static_cast<size_t>(y) * image.width + x];
  }
};

struct ProjectOptions {
  int splat_radius = 1;        // 1 = nearest pixel only
  double near_epsilon = 1e-6;  // camera-z cutoff
  std::array<float, 3> background = {1.0f, 1.0f, 1.0f};  // matches v_fill
};

// One calibrated colored view.
struct ViewData {
  Image color;
  DepthMap depth;
  CameraParams cam;
};

PointCloud back_project(const DepthMap& depth, const CameraParams& cam,
                        const Image& color, int32_t source_tag = 0);

ProjectedCloud project(const PointCloud& cloud, const CameraParams& cam,
                       const ProjectOptions& opts = {});

// Leave-one-out cloud (all other references plus the target) rendered into
// reference view i.
ProjectedCloud render_reference_cloud(const std::vector<ViewData>& references,
                                      const ViewData& target, size_t i,
                                      const ProjectOptions& opts = {});

// All-references cloud rendered into the target view.
ProjectedCloud render_target_cloud(const std::vector<ViewData>& references,
                                   const CameraParams& target_cam,
                                   const ProjectOptions& opts = {});

// 1 where the reference view does NOT see the target's geometry (informative),
// 0 where the projected target covers the pixel.
MaskImage informative_mask(const ViewData& target, const CameraParams& ref_cam,
                           const ProjectOptions& opts = {});

PointCloud perturb_noise(const PointCloud& cloud, double ratio, double sigma,
                         Rng& rng);

PointCloud sparsify(const PointCloud& cloud, double ratio, Rng& rng);

// Uniform k-subset of [0,n) by partial Fisher-Yates; selection order preserved
// so tests can replay the trace.
std::vector<size_t> sample_indices(size_t n, size_t k, Rng& rng);

}  // namespace cloudfill::geometry
