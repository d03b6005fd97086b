#include "cloudfill/scene.hpp"

#include <algorithm>
#include <cmath>

namespace cloudfill::scene_forge {

namespace {

constexpr std::array<float, 3> kSky = {0.92f, 0.95f, 1.0f};

double deg2rad(double d) { return d * M_PI / 180.0; }

uint32_t hash_u32(uint32_t x) {
  x ^= x >> 16;
  x *= 0x7feb352dU;
  x ^= x >> 15;
  x *= 0x846ca68bU;
  x ^= x >> 16;
  return x;
}

// Smooth lattice value noise in [0,1].
double value_noise(double x, double y, uint32_t seed) {
  auto lattice = [seed](int32_t ix, int32_t iy) {
    uint32_t h = hash_u32(static_cast<uint32_t>(ix) * 374761393U +
                          static_cast<uint32_t>(iy) * 668265263U + seed);
    return static_cast<double>(h) / 4294967295.0;
  };
  double fx = std::floor(x), fy = std::floor(y);
  int32_t ix = static_cast<int32_t>(fx), iy = static_cast<int32_t>(fy);
  double tx = x - fx, ty = y - fy;
  double sx = tx * tx * (3 - 2 * tx), sy = ty * ty * (3 - 2 * ty);
  double v00 = lattice(ix, iy), v10 = lattice(ix + 1, iy);
  double v01 = lattice(ix, iy + 1), v11 = lattice(ix + 1, iy + 1);
  return (v00 * (1 - sx) + v10 * sx) * (1 - sy) + (v01 * (1 - sx) + v11 * sx) * sy;
}

Vec3 primitive_offset(const Primitive& p, int view_index) {
  if (!p.dynamic || view_index < 0 ||
      view_index >= static_cast<int>(p.view_offsets.size()))
    return {0, 0, 0};
  return p.view_offsets[view_index];
}

std::array<float, 3> shade(const Primitive& p, const Vec3& hit, int view_index) {
  // texture in object-local coordinates so dynamic objects keep their look
  Vec3 local = hit - primitive_offset(p, view_index);
  double u, v;
  if (p.kind == PrimitiveKind::Plane) {
    u = local[0];
    v = local[2];
  } else {
    u = local[0] + local[1];
    v = local[2] - local[1];
  }
  double t;
  if (p.texture == TextureKind::Checker) {
    int64_t iu = static_cast<int64_t>(std::floor(u * p.tex_scale));
    int64_t iv = static_cast<int64_t>(std::floor(v * p.tex_scale));
    t = ((iu + iv) & 1) ? 1.0 : 0.0;
  } else {
    t = value_noise(u * p.tex_scale, v * p.tex_scale, p.noise_seed);
  }
  std::array<float, 3> c;
  for (int k = 0; k < 3; ++k)
    c[k] = static_cast<float>(p.color_a[k] * (1 - t) + p.color_b[k] * t);
  return c;
}

CameraParams look_at(const Vec3& eye, const Vec3& at, const Vec3& up, double fx,
                     int width, int height) {
  Vec3 fwd = normalized(at - eye);           // camera +z
  Vec3 right = normalized(geometry::cross(fwd, up));
  Vec3 down = geometry::cross(fwd, right);   // camera +y (image rows grow down)
  CameraParams c;
  c.fx = fx;
  c.fy = fx;
  c.cx = (width - 1) / 2.0;
  c.cy = (height - 1) / 2.0;
  c.width = width;
  c.height = height;
  c.rotation = {right[0], right[1], right[2], down[0], down[1], down[2],
                fwd[0], fwd[1], fwd[2]};
  c.translation = {0, 0, 0};
  Vec3 rot_eye = c.world_to_camera(eye);  // R * eye since t is zero
  c.translation = {-rot_eye[0], -rot_eye[1], -rot_eye[2]};
  return c;
}

std::array<double, 9> euler_rotation(double ax, double ay, double az) {
  double cx = std::cos(ax), sx = std::sin(ax);
  double cy = std::cos(ay), sy = std::sin(ay);
  double cz = std::cos(az), sz = std::sin(az);
  // Rz * Ry * Rx
  return {cz * cy, cz * sy * sx - sz * cx, cz * sy * cx + sz * sx,
          sz * cy, sz * sy * sx + cz * cx, sz * sy * cx - cz * sx,
          -sy, cy * sx, cy * cx};
}

void premultiply_rotation(CameraParams& cam, const std::array<double, 9>& j) {
  // R' = J * R, t' = J * t: rotates the camera about its own center
  std::array<double, 9> r{};
  for (int i = 0; i < 3; ++i)
    for (int k = 0; k < 3; ++k) {
      double s = 0;
      for (int m = 0; m < 3; ++m) s += j[i * 3 + m] * cam.rotation[m * 3 + k];
      r[i * 3 + k] = s;
    }
  Vec3 t = {j[0] * cam.translation[0] + j[1] * cam.translation[1] + j[2] * cam.translation[2],
            j[3] * cam.translation[0] + j[4] * cam.translation[1] + j[5] * cam.translation[2],
            j[6] * cam.translation[0] + j[7] * cam.translation[1] + j[8] * cam.translation[2]};
  cam.rotation = r;
  cam.translation = t;
}

// Renders one view; view_index selects dynamic offsets.
ViewRecord render_view(const std::vector<Primitive>& prims, const CameraParams& cam,
                       int view_index) {
  ViewRecord rec;
  rec.cam = cam;
  rec.color = Image(cam.width, cam.height);
  rec.depth = DepthMap(cam.width, cam.height);
  rec.dynamic_mask = MaskImage(cam.width, cam.height, 0);
  Vec3 origin = cam.center();
  for (int y = 0; y < cam.height; ++y) {
    for (int x = 0; x < cam.width; ++x) {
      // dir_cam has unit z so the ray parameter equals camera-frame depth
      Vec3 dir_cam = {(x - cam.cx) / cam.fx, (y - cam.cy) / cam.fy, 1.0};
      const auto& r = cam.rotation;  // world dir = R^T * dir_cam
      Vec3 dir = {r[0] * dir_cam[0] + r[3] * dir_cam[1] + r[6] * dir_cam[2],
                  r[1] * dir_cam[0] + r[4] * dir_cam[1] + r[7] * dir_cam[2],
                  r[2] * dir_cam[0] + r[5] * dir_cam[1] + r[8] * dir_cam[2]};
      double best = std::numeric_limits<double>::infinity();
      int best_prim = -1;
      for (size_t pi = 0; pi < prims.size(); ++pi) {
        double t = intersect_primitive(prims[pi], origin, dir, view_index);
        if (t < best) {
          best = t;
          best_prim = static_cast<int>(pi);
        }
      }
      if (best_prim >= 0) {
        Vec3 hit = origin + best * dir;
        auto c = shade(prims[best_prim], hit, view_index);
        for (int k = 0; k < 3; ++k) rec.color.at(x, y, k) = c[k];
        rec.depth.set(x, y, static_cast<float>(best));
        if (prims[best_prim].dynamic) rec.dynamic_mask.at(x, y) = 1;
      } else {
        for (int k = 0; k < 3; ++k) rec.color.at(x, y, k) = kSky[k];
      }
    }
  }
  // snap to the 8-bit grid so PNG round-trips are exact
  for (float& v : rec.color.data)
    v = std::lround(std::clamp(v, 0.0f, 1.0f) * 255.0f) / 255.0f;
  return rec;
}

MaskImage make_completion_mask(const SceneConfig& cfg, Rng& rng) {
  int w = cfg.width, h = cfg.height;
  MaskImage m(w, h, 0);
  size_t want = static_cast<size_t>(cfg.completion_area_fraction * w * h);
  if (cfg.completion_mode == CompletionMode::Outpaint) {
    // widen the border band until the masked area reaches the target
    for (int b = 1; b <= std::min(w, h) / 2; ++b) {
      size_t area = static_cast<size_t>(w) * h -
                    static_cast<size_t>(w - 2 * b) * (h - 2 * b);
      if (area >= want || b == std::min(w, h) / 2) {
        for (int y = 0; y < h; ++y)
          for (int x = 0; x < w; ++x)
            if (x < b || y < b || x >= w - b || y >= h - b) m.at(x, y) = 1;
        break;
      }
    }
    return m;
  }
  double side = std::sqrt(cfg.completion_area_fraction);
  for (int attempt = 0; attempt < 16 && m.count_ones() < want; ++attempt) {
    int rw = std::clamp(static_cast<int>(std::lround(rng.uniform(0.6, 1.1) * side * w)), 2, w);
    int rh = std::clamp(static_cast<int>(std::lround(rng.uniform(0.6, 1.1) * side * h)), 2, h);
    int x0 = static_cast<int>(rng.uniform_int(0, w - rw));
    int y0 = static_cast<int>(rng.uniform_int(0, h - rh));
    for (int y = y0; y < y0 + rh; ++y)
      for (int x = x0; x < x0 + rw; ++x) m.at(x, y) = 1;
  }
  return m;
}

}  // namespace

void SceneConfig::validate() const {
  if (width < 8 || height < 8) throw ConfigError("scene: resolution too small");
  if (latent_patch < 1 || width % latent_patch || height % latent_patch)
    throw ConfigError("scene: resolution must be a multiple of the latent patch size");
  if (num_references < 1 || num_references > 5)
    throw ConfigError("scene: num_references must be in [1,5]");
  if (num_objects < 0 || num_dynamic < 0 || num_dynamic > num_objects)
    throw ConfigError("scene: invalid object counts");
  if (completion_area_fraction <= 0 || completion_area_fraction >= 1)
    throw ConfigError("scene: completion area fraction must be in (0,1)");
}

void SceneBundle::validate() const {
  if (references.empty()) throw ValidationError("scene bundle: no references");
  auto check_view = [](const ViewRecord& v, const std::string& name) {
    if (v.color.width != v.cam.width || v.color.height != v.cam.height)
      throw ValidationError("scene bundle: color/camera size mismatch in " + name);
    if (v.depth.width != v.cam.width || v.depth.height != v.cam.height)
      throw ValidationError("scene bundle: depth/camera size mismatch in " + name);
    if (v.dynamic_mask.width != v.cam.width || v.dynamic_mask.height != v.cam.height)
      throw ValidationError("scene bundle: mask/camera size mismatch in " + name);
    v.dynamic_mask.validate_binary(name.c_str());
    v.cam.validate();
  };
  for (size_t i = 0; i < references.size(); ++i)
    check_view(references[i], "ref_" + std::to_string(i));
  check_view(target, "target");
  if (completion_mask.width != target.cam.width ||
      completion_mask.height != target.cam.height)
    throw ValidationError("scene bundle: completion mask size mismatch");
  completion_mask.validate_binary("completion mask");
}

double intersect_primitive(const Primitive& prim, const Vec3& origin,
                           const Vec3& dir, int view_index) {
  constexpr double kEps = 1e-9;
  const double inf = std::numeric_limits<double>::infinity();
  Vec3 off = primitive_offset(prim, view_index);
  switch (prim.kind) {
    case PrimitiveKind::Plane: {
      double denom = dot(dir, prim.b);
      if (std::abs(denom) < kEps) return inf;
      double t = dot((prim.a + off) - origin, prim.b) / denom;
      return t > kEps ? t : inf;
    }
    case PrimitiveKind::Sphere: {
      Vec3 oc = origin - (prim.a + off);
      double a = dot(dir, dir);
      double b = 2.0 * dot(oc, dir);
      double c = dot(oc, oc) - prim.radius * prim.radius;
      double disc = b * b - 4 * a * c;
      if (disc < 0) return inf;
      double sq = std::sqrt(disc);
      double t0 = (-b - sq) / (2 * a);
      double t1 = (-b + sq) / (2 * a);
      if (t0 > kEps) return t0;
      if (t1 > kEps) return t1;
      return inf;
    }
    case PrimitiveKind::Box: {
      Vec3 lo = prim.a + off, hi = prim.b + off;
      double tmin = -inf, tmax = inf;
      for (int k = 0; k < 3; ++k) {
        if (std::abs(dir[k]) < kEps) {
          if (origin[k] < lo[k] || origin[k] > hi[k]) return inf;
          continue;
        }
        double t0 = (lo[k] - origin[k]) / dir[k];
        double t1 = (hi[k] - origin[k]) / dir[k];
        if (t0 > t1) std::swap(t0, t1);
        tmin = std::max(tmin, t0);
        tmax = std::min(tmax, t1);
      }
      if (tmax < tmin) return inf;
      if (tmin > kEps) return tmin;
      if (tmax > kEps) return tmax;
      return inf;
    }
  }
  return inf;
}

SceneBundle generate_scene(const SceneConfig& cfg, uint64_t seed) {
  cfg.validate();
  Rng rng(seed);
  int n_views = cfg.num_references + 1;  // references then target

  for (int attempt = 0; attempt <= cfg.max_retries; ++attempt) {
    std::vector<Primitive> prims;
    Primitive ground;
    ground.kind = PrimitiveKind::Plane;
    ground.a = {0, 0, 0};
    ground.b = {0, 1, 0};
    ground.texture = TextureKind::Checker;
    ground.tex_scale = 2.0;
    ground.color_a = {0.85f, 0.82f, 0.75f};
    ground.color_b = {0.35f, 0.30f, 0.28f};
    prims.push_back(ground);

    for (int i = 0; i < cfg.num_objects; ++i) {
      Primitive p;
      bool sphere = (i % 2 == 0);
      double px = rng.uniform(-0.9, 0.9);
      double pz = rng.uniform(-0.9, 0.9);
      if (sphere) {
        p.kind = PrimitiveKind::Sphere;
        p.radius = rng.uniform(0.25, 0.45);
        p.a = {px, p.radius, pz};
      } else {
        p.kind = PrimitiveKind::Box;
        double ex = rng.uniform(0.2, 0.4), ey = rng.uniform(0.2, 0.5),
               ez = rng.uniform(0.2, 0.4);
        p.a = {px - ex, 0, pz - ez};
        p.b = {px + ex, 2 * ey, pz + ez};
      }
      p.texture = (i % 3 == 2) ? TextureKind::Noise : TextureKind::Checker;
      p.tex_scale = rng.uniform(3.0, 8.0);
      p.noise_seed = static_cast<uint32_t>(rng.next_u64());
      for (int k = 0; k < 3; ++k) {
        p.color_a[k] = static_cast<float>(rng.uniform(0.4, 1.0));
        p.color_b[k] = static_cast<float>(rng.uniform(0.0, 0.5));
      }
      p.dynamic = i < cfg.num_dynamic;
      if (p.dynamic) {
        p.view_offsets.resize(n_views);
        for (int v = 0; v < n_views; ++v) {
          p.view_offsets[v] = {rng.uniform(-1, 1) * cfg.dynamic_displacement, 0,
                               rng.uniform(-1, 1) * cfg.dynamic_displacement};
        }
      }
      prims.push_back(p);
    }

    // base pose shared by all views; per-view jitter supplies the parallax
    // pitched well below the half field of view so the plane fills the frame
    Vec3 eye = {0.0, 2.6, -2.4};
    Vec3 at = {0.0, 0.0, 0.4};
    double fx = 0.9 * cfg.width;
    std::vector<CameraParams> cams(n_views);
    for (int v = 0; v < n_views; ++v) {
      bool is_target = (v == n_views - 1);
      Vec3 e = eye;
      if (!is_target) {
        e = e + Vec3{rng.uniform(-1, 1) * cfg.translation_jitter,
                     rng.uniform(-1, 1) * cfg.translation_jitter * 0.5,
                     rng.uniform(-1, 1) * cfg.translation_jitter};
      }
      CameraParams cam = look_at(e, at, {0, 1, 0}, fx, cfg.width, cfg.height);
      if (!is_target) {
        double jr = deg2rad(cfg.rotation_jitter_deg);
        auto j = euler_rotation(rng.uniform(-jr, jr), rng.uniform(-jr, jr),
                                rng.uniform(-jr, jr) * 0.3);
        premultiply_rotation(cam, j);
      }
      cams[v] = cam;
    }

    SceneBundle bundle;
    bundle.seed = seed;
    for (int v = 0; v < cfg.num_references; ++v)
      bundle.references.push_back(render_view(prims, cams[v], v));
    bundle.target = render_view(prims, cams[n_views - 1], n_views - 1);
    bundle.completion_mask = make_completion_mask(cfg, rng);
    bundle.primitives = prims;

    // degenerate placement guard: the target must see geometry
    size_t covered = 0;
    for (uint8_t v : bundle.target.depth.valid) covered += v;
    if (covered < bundle.target.depth.valid.size() / 4) continue;

    bundle.meta.set_int("scene.width", cfg.width);
    bundle.meta.set_int("scene.height", cfg.height);
    bundle.meta.set_int("scene.num_references", cfg.num_references);
    bundle.meta.set_int("scene.num_objects", cfg.num_objects);
    bundle.meta.set_int("scene.num_dynamic", cfg.num_dynamic);
    bundle.meta.set_double("scene.rotation_jitter_deg", cfg.rotation_jitter_deg);
    bundle.meta.set_double("scene.translation_jitter", cfg.translation_jitter);
    bundle.meta.set_double("scene.dynamic_displacement", cfg.dynamic_displacement);
    bundle.meta.set("scene.completion_mode",
                    cfg.completion_mode == CompletionMode::Inpaint ? "inpaint" : "outpaint");
    bundle.meta.set_double("scene.completion_area_fraction", cfg.completion_area_fraction);
    bundle.meta.set_int("scene.latent_patch", cfg.latent_patch);
    bundle.meta.set_int("scene.seed", static_cast<int64_t>(seed));
    bundle.validate();
    return bundle;
  }
  throw ConfigError("generate_scene: degenerate camera placement after retries");
}

void save_scene(const SceneBundle& bundle, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  for (size_t i = 0; i < bundle.references.size(); ++i) {
    std::string stem = "ref_" + std::to_string(i);
    io::write_png(dir / (stem + ".png"), bundle.references[i].color);
    io::write_depth(dir / (stem + ".gdpt"), bundle.references[i].depth);
    io::write_camera(dir / (stem + ".cam"), bundle.references[i].cam);
    if (bundle.references[i].dynamic_mask.count_ones() > 0)
      io::write_png(dir / (stem + "_dyn.png"), bundle.references[i].dynamic_mask);
  }
  io::write_png(dir / "target_gt.png", bundle.target.color);
  io::write_depth(dir / "target.gdpt", bundle.target.depth);
  io::write_camera(dir / "target.cam", bundle.target.cam);
  io::write_png(dir / "target_mask.png", bundle.completion_mask);
  if (bundle.target.dynamic_mask.count_ones() > 0)
    io::write_png(dir / "target_dyn.png", bundle.target.dynamic_mask);
  bundle.meta.write_file(dir / "scene.meta");
}

SceneBundle load_scene(const std::filesystem::path& dir) {
  if (!std::filesystem::is_directory(dir))
    throw IoError("scene directory not found: " + dir.string());
  SceneBundle bundle;
  for (size_t i = 0;; ++i) {
    std::string stem = "ref_" + std::to_string(i);
    if (!std::filesystem::exists(dir / (stem + ".png"))) break;
    ViewRecord rec;
    rec.color = io::read_png_image(dir / (stem + ".png"));
    rec.depth = io::read_depth(dir / (stem + ".gdpt"));
    rec.cam = io::read_camera(dir / (stem + ".cam"));
    if (std::filesystem::exists(dir / (stem + "_dyn.png")))
      rec.dynamic_mask = io::read_png_mask(dir / (stem + "_dyn.png"));
    else
      rec.dynamic_mask = MaskImage(rec.cam.width, rec.cam.height, 0);
    bundle.references.push_back(std::move(rec));
  }
  if (bundle.references.empty())
    throw IoError("scene directory has no references (ref_0.png missing): " + dir.string());
  if (!std::filesystem::exists(dir / "target_gt.png"))
    throw IoError("scene directory has no target (target_gt.png missing): " + dir.string());
  bundle.target.color = io::read_png_image(dir / "target_gt.png");
  bundle.target.depth = io::read_depth(dir / "target.gdpt");
  bundle.target.cam = io::read_camera(dir / "target.cam");
  if (std::filesystem::exists(dir / "target_dyn.png"))
    bundle.target.dynamic_mask = io::read_png_mask(dir / "target_dyn.png");
  else
    bundle.target.dynamic_mask = MaskImage(bundle.target.cam.width, bundle.target.cam.height, 0);
  bundle.completion_mask = io::read_png_mask(dir / "target_mask.png");
  if (std::filesystem::exists(dir / "scene.meta")) {
    bundle.meta = io::KeyValues::parse_file(dir / "scene.meta");
    bundle.seed = static_cast<uint64_t>(bundle.meta.get_int("scene.seed", 0));
  }
  bundle.validate();
  return bundle;
}

Image apply_dynamic_filter(const Image& image, const MaskImage& dyn_mask,
                           std::array<float, 3> background) {
  require_same_size(image, dyn_mask, "apply_dynamic_filter");
  dyn_mask.validate_binary("apply_dynamic_filter");
  Image out = image;
  for (size_t i = 0; i < dyn_mask.values.size(); ++i) {
    if (!dyn_mask.values[i]) continue;
    for (int c = 0; c < 3; ++c) out.data[i * 3 + c] = background[c];
  }
  return out;
}

MaskImage corrupt_dynamic_mask(const MaskImage& mask, double extra_fraction,
                               Rng& rng) {
  if (extra_fraction < 0 || extra_fraction > 1)
    throw ConfigError("corrupt_dynamic_mask: extra_fraction must be in [0,1]");
  mask.validate_binary("corrupt_dynamic_mask");
  std::vector<size_t> zeros;
  for (size_t i = 0; i < mask.values.size(); ++i)
    if (!mask.values[i]) zeros.push_back(i);
  size_t k = static_cast<size_t>(extra_fraction * static_cast<double>(zeros.size()));
  auto chosen = geometry::sample_indices(zeros.size(), k, rng);
  MaskImage out = mask;
  for (size_t c : chosen) out.values[zeros[c]] = 1;
  return out;
}

std::vector<std::string> preset_names() {
  return {"flat1", "planar3", "boxes3", "dyn3", "full5"};
}

SceneConfig preset_config(const std::string& name) {
  SceneConfig cfg;
  if (name == "flat1") {
    cfg.num_references = 1;
    cfg.num_objects = 0;
    cfg.num_dynamic = 0;
    cfg.rotation_jitter_deg = 0;
    cfg.translation_jitter = 0;
  } else if (name == "planar3") {
    cfg.num_references = 3;
    cfg.num_objects = 0;
    cfg.num_dynamic = 0;
  } else if (name == "boxes3") {
    cfg.num_references = 3;
    cfg.num_objects = 2;
    cfg.num_dynamic = 0;
  } else if (name == "dyn3") {
    cfg.num_references = 3;
    cfg.num_objects = 2;
    cfg.num_dynamic = 1;
  } else if (name == "full5") {
    cfg.num_references = 5;
    cfg.num_objects = 3;
    cfg.num_dynamic = 1;
  } else {
    std::string valid;
    for (const auto& n : preset_names()) valid += (valid.empty() ? "" : ", ") + n;
    throw ConfigError("unknown preset '" + name + "' (valid: " + valid + ")");
  }
  return cfg;
}

}  // namespace cloudfill::scene_forge
