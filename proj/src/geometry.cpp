#include "cloudfill/geometry.hpp"

#include <algorithm>
#include <cmath>

namespace cloudfill::geometry {

void CameraParams::validate() const {
  if (fx <= 0 || fy <= 0) throw ValidationError("camera: focal lengths must be positive");
  if (width < 1 || height < 1) throw ValidationError("camera: resolution must be >= 1");
  // R^T R == I within 1e-6, det +1
  const auto& r = rotation;
  double rtri[9];
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j) {
      double s = 0;
      for (int k = 0; k < 3; ++k) s += r[k * 3 + i] * r[k * 3 + j];
      rtri[i * 3 + j] = s;
    }
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j) {
      double expect = (i == j) ? 1.0 : 0.0;
      if (std::abs(rtri[i * 3 + j] - expect) > 1e-6)
        throw ValidationError("camera: rotation is not orthonormal");
    }
  double det = r[0] * (r[4] * r[8] - r[5] * r[7]) - r[1] * (r[3] * r[8] - r[5] * r[6]) +
               r[2] * (r[3] * r[7] - r[4] * r[6]);
  if (std::abs(det - 1.0) > 1e-6)
    throw ValidationError("camera: rotation determinant is not +1");
}

void PointCloud::append(const PointCloud& other) {
  points.insert(points.end(), other.points.begin(), other.points.end());
  colors.insert(colors.end(), other.colors.begin(), other.colors.end());
  source_tag.insert(source_tag.end(), other.source_tag.begin(), other.source_tag.end());
}

PointCloud back_project(const DepthMap& depth, const CameraParams& cam,
                        const Image& color, int32_t source_tag) {
  if (depth.width != cam.width || depth.height != cam.height)
    throw ValidationError("back_project: depth dimensions differ from camera");
  if (color.width != cam.width || color.height != cam.height)
    throw ValidationError("back_project: color dimensions differ from camera");

  PointCloud cloud;
  cloud.points.reserve(static_cast<size_t>(depth.width) * depth.height);
  for (int v = 0; v < depth.height; ++v) {
    for (int u = 0; u < depth.width; ++u) {
      if (!depth.is_valid(u, v)) continue;
      double z = depth.depth(u, v);
      if (!std::isfinite(z) || z <= 0)
        throw ValidationError("back_project: non-finite or non-positive depth on valid pixel");
      Vec3 pc = {(u - cam.cx) * z / cam.fx, (v - cam.cy) * z / cam.fy, z};
      cloud.points.push_back(cam.camera_to_world(pc));
      cloud.colors.push_back({color.at(u, v, 0), color.at(u, v, 1), color.at(u, v, 2)});
      cloud.source_tag.push_back(source_tag);
    }
  }
  return cloud;
}

ProjectedCloud project(const PointCloud& cloud, const CameraParams& cam,
                       const ProjectOptions& opts) {
  cam.validate();
  ProjectedCloud out;
  out.image = Image(cam.width, cam.height);
  for (int y = 0; y < cam.height; ++y)
    for (int x = 0; x < cam.width; ++x)
      for (int c = 0; c < 3; ++c) out.image.at(x, y, c) = opts.background[c];
  out.depth_buffer.assign(static_cast<size_t>(cam.width) * cam.height,
                          std::numeric_limits<float>::infinity());
  out.coverage = MaskImage(cam.width, cam.height, 0);

  std::vector<size_t> winner(static_cast<size_t>(cam.width) * cam.height,
                             std::numeric_limits<size_t>::max());
  int r = std::max(0, opts.splat_radius - 1);

  for (size_t idx = 0; idx < cloud.points.size(); ++idx) {
    Vec3 pc = cam.world_to_camera(cloud.points[idx]);
    double z = pc[2];
    if (z <= opts.near_epsilon) continue;
    double u = cam.fx * pc[0] / z + cam.cx;
    double v = cam.fy * pc[1] / z + cam.cy;
    long px = std::lround(u);
    long py = std::lround(v);
    for (long yy = py - r; yy <= py + r; ++yy) {
      for (long xx = px - r; xx <= px + r; ++xx) {
        if (xx < 0 || yy < 0 || xx >= cam.width || yy >= cam.height) continue;
        size_t pix = static_cast<size_t>(yy) * cam.width + xx;
        float zf = static_cast<float>(z);
        // strict min, index tie-break: deterministic splat order
        if (zf < out.depth_buffer[pix] ||
            (zf == out.depth_buffer[pix] && idx < winner[pix])) {
          out.depth_buffer[pix] = zf;
          winner[pix] = idx;
          out.coverage.values[pix] = 1;
          const auto& col = cloud.colors[idx];
          out.image.data[pix * 3 + 0] = col[0];
          out.image.data[pix * 3 + 1] = col[1];
          out.image.data[pix * 3 + 2] = col[2];
        }
      }
    }
  }
  return out;
}

ProjectedCloud render_reference_cloud(const std::vector<ViewData>& references,
                                      const ViewData& target, size_t i,
                                      const ProjectOptions& opts) {
  if (i >= references.size())
    throw ValidationError("render_reference_cloud: reference index out of range");
  PointCloud cloud;
  for (size_t j = 0; j < references.size(); ++j) {
    if (j == i) continue;
    cloud.append(back_project(references[j].depth, references[j].cam,
                              references[j].color, static_cast<int32_t>(j)));
  }
  cloud.append(back_project(target.depth, target.cam, target.color, -1));
  return project(cloud, references[i].cam, opts);
}

ProjectedCloud render_target_cloud(const std::vector<ViewData>& references,
                                   const CameraParams& target_cam,
                                   const ProjectOptions& opts) {
  if (references.empty())
    throw ConfigError("render_target_cloud: empty reference set");
  PointCloud cloud;
  for (size_t j = 0; j < references.size(); ++j)
    cloud.append(back_project(references[j].depth, references[j].cam,
                              references[j].color, static_cast<int32_t>(j)));
  return project(cloud, target_cam, opts);
}

MaskImage informative_mask(const ViewData& target, const CameraParams& ref_cam,
                           const ProjectOptions& opts) {
  PointCloud cloud = back_project(target.depth, target.cam, target.color, -1);
  ProjectedCloud proj = project(cloud, ref_cam, opts);
  MaskImage r(ref_cam.width, ref_cam.height, 0);
  for (size_t i = 0; i < r.values.size(); ++i)
    r.values[i] = proj.coverage.values[i] ? 0 : 1;
  return r;
}

std::vector<size_t> sample_indices(size_t n, size_t k, Rng& rng) {
  std::vector<size_t> idx(n);
  for (size_t i = 0; i < n; ++i) idx[i] = i;
  for (size_t i = 0; i < k && i < n; ++i) {
    size_t j = static_cast<size_t>(
        rng.uniform_int(static_cast<int64_t>(i), static_cast<int64_t>(n) - 1));
    std::swap(idx[i], idx[j]);
  }
  idx.resize(std::min(k, n));
  return idx;
}

PointCloud perturb_noise(const PointCloud& cloud, double ratio, double sigma,
                         Rng& rng) {
  if (ratio < 0 || ratio > 1)
    throw ConfigError("perturb_noise: ratio must be in [0,1]");
  if (sigma < 0) throw ConfigError("perturb_noise: sigma must be >= 0");
  PointCloud out = cloud;
  size_t k = static_cast<size_t>(ratio * static_cast<double>(cloud.size()));
  auto chosen = sample_indices(cloud.size(), k, rng);
  std::sort(chosen.begin(), chosen.end());
  for (size_t i : chosen) {
    out.points[i][0] += rng.normal(0.0, sigma);
    out.points[i][1] += rng.normal(0.0, sigma);
    out.points[i][2] += rng.normal(0.0, sigma);
  }
  return out;
}

PointCloud sparsify(const PointCloud& cloud, double ratio, Rng& rng) {
  if (ratio < 0 || ratio > 1)
    throw ConfigError("sparsify: ratio must be in [0,1]");
  size_t k = static_cast<size_t>(ratio * static_cast<double>(cloud.size()));
  auto chosen = sample_indices(cloud.size(), k, rng);
  std::vector<uint8_t> drop(cloud.size(), 0);
  for (size_t i : chosen) drop[i] = 1;
  PointCloud out;
  out.points.reserve(cloud.size() - k);
  for (size_t i = 0; i < cloud.size(); ++i) {
    if (drop[i]) continue;
    out.points.push_back(cloud.points[i]);
    out.colors.push_back(cloud.colors[i]);
    out.source_tag.push_back(cloud.source_tag[i]);
  }
  return out;
}

}  // namespace cloudfill::geometry
