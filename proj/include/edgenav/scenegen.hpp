// Synthetic room scenes: a per-pixel raycaster over colored cuboids in a
// textured room, with labels taken from exact pinhole projections of the box
// geometry. Stands in for simulator captures; also renders the navigation
// environment's first-person views.
#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <optional>

#include "edgenav/core.hpp"

namespace edgenav {

inline constexpr int kNumClasses = 3;

// red, blue, black
inline std::array<std::array<uint8_t, 3>, kNumClasses> class_colors() {
  return {{{200, 40, 40}, {40, 60, 200}, {25, 25, 25}}};
}

struct RgbImage {
  int64_t width = 0, height = 0;
  std::vector<uint8_t> pixels;  // RGB8, row-major

  uint8_t* px(int64_t x, int64_t y) { return &pixels[(y * width + x) * 3]; }
  const uint8_t* px(int64_t x, int64_t y) const { return &pixels[(y * width + x) * 3]; }
};

struct LabelBox {
  int class_id = 0;
  double x1 = 0, y1 = 0, x2 = 0, y2 = 0;  // normalized corners
};

struct LabeledImage {
  RgbImage image;
  std::vector<LabelBox> labels;
};

struct BoxPlacement {
  int class_id = 0;
  double x = 0, y = 0;  // center, meters
  double size = 0.8;    // cuboid edge, meters
};

struct CameraPose {
  double x = 0, y = 0, z = 0.6;
  double yaw = 0;             // radians, 0 looks along +x
  double hfov_deg = 60.0;
};

struct RoomSpec {
  double width = 10.0, depth = 10.0;
  std::array<uint8_t, 3> wall_color{172, 176, 182};
  std::array<uint8_t, 3> floor_color{108, 108, 112};
  double lighting = 1.0;  // global multiplier
  double noise = 4.0;     // additive uniform pixel noise amplitude
  uint64_t seed = 0;      // drives the pixel noise
};

struct SceneSpec {
  RoomSpec room;
  std::vector<BoxPlacement> boxes;
  CameraPose camera;
  int64_t image_size = 224;
};

// ---------------------------------------------------------------------------
// camera geometry
// ---------------------------------------------------------------------------

namespace camgeo {

struct Basis {
  double fx, fy;  // forward
  double rx, ry;  // right
  double tan_half;
};

inline Basis basis(const CameraPose& cam) {
  Basis b;
  b.fx = std::cos(cam.yaw);
  b.fy = std::sin(cam.yaw);
  b.rx = b.fy;
  b.ry = -b.fx;
  b.tan_half = std::tan(cam.hfov_deg * 0.5 * M_PI / 180.0);
  return b;
}

// Projects a world point to normalized image coordinates; z-depth returned
// separately. Square images share the horizontal FOV vertically.
struct Projected {
  double u, v, depth;
};

inline Projected project_point(const CameraPose& cam, const Basis& b, double px,
                               double py, double pz) {
  const double vx = px - cam.x, vy = py - cam.y, vz = pz - cam.z;
  Projected p;
  p.depth = vx * b.fx + vy * b.fy;
  const double xc = vx * b.rx + vy * b.ry;
  const double yc = vz;
  p.u = 0.5 * (xc / p.depth / b.tan_half + 1.0);
  p.v = 0.5 * (1.0 - yc / p.depth / b.tan_half);
  return p;
}

inline constexpr double kNearPlane = 0.02;

// Exact projected extent of an axis-aligned cuboid: every box edge is clipped
// against the near plane, surviving vertices are projected, and the extent is
// intersected with the image. Returns nothing when out of view or degenerate.
inline std::optional<LabelBox> project_box(const CameraPose& cam, const BoxPlacement& box) {
  const Basis b = basis(cam);
  const double h = box.size * 0.5;
  const double xs[2] = {box.x - h, box.x + h};
  const double ys[2] = {box.y - h, box.y + h};
  const double zs[2] = {0.0, box.size};
  std::array<std::array<double, 3>, 8> corners;
  int ci = 0;
  for (int i = 0; i < 2; ++i)
    for (int j = 0; j < 2; ++j)
      for (int k = 0; k < 2; ++k) corners[ci++] = {xs[i], ys[j], zs[k]};
  auto depth_of = [&](const std::array<double, 3>& p) {
    return (p[0] - cam.x) * b.fx + (p[1] - cam.y) * b.fy;
  };
  static constexpr int edges[12][2] = {{0, 1}, {2, 3}, {4, 5}, {6, 7}, {0, 2}, {1, 3},
                                       {4, 6}, {5, 7}, {0, 4}, {1, 5}, {2, 6}, {3, 7}};
  std::vector<std::array<double, 3>> pts;
  pts.reserve(16);
  for (const auto& c : corners)
    if (depth_of(c) > kNearPlane) pts.push_back(c);
  for (const auto& e : edges) {
    const auto &p0 = corners[e[0]], &p1 = corners[e[1]];
    const double d0 = depth_of(p0), d1 = depth_of(p1);
    if ((d0 > kNearPlane) != (d1 > kNearPlane)) {
      const double t = (kNearPlane - d0) / (d1 - d0);
      pts.push_back({p0[0] + t * (p1[0] - p0[0]), p0[1] + t * (p1[1] - p0[1]),
                     p0[2] + t * (p1[2] - p0[2])});
    }
  }
  if (pts.empty()) return std::nullopt;
  double u1 = 1e30, v1 = 1e30, u2 = -1e30, v2 = -1e30;
  for (const auto& p : pts) {
    const Projected pr = project_point(cam, b, p[0], p[1], p[2]);
    u1 = std::min(u1, pr.u);
    v1 = std::min(v1, pr.v);
    u2 = std::max(u2, pr.u);
    v2 = std::max(v2, pr.v);
  }
  LabelBox lb;
  lb.class_id = box.class_id;
  lb.x1 = std::clamp(u1, 0.0, 1.0);
  lb.y1 = std::clamp(v1, 0.0, 1.0);
  lb.x2 = std::clamp(u2, 0.0, 1.0);
  lb.y2 = std::clamp(v2, 0.0, 1.0);
  if (lb.x2 - lb.x1 < 1e-6 || lb.y2 - lb.y1 < 1e-6) return std::nullopt;
  return lb;
}

}  // namespace camgeo

// ---------------------------------------------------------------------------
// rendering
// ---------------------------------------------------------------------------

namespace detail_render {

// Small integer hash for procedural wall/floor texture.
inline uint32_t coord_hash(int64_t a, int64_t b, uint64_t seed) {
  uint64_t h = seed ^ (uint64_t(a) * 0x9e3779b97f4a7c15ULL) ^
               (uint64_t(b) * 0xc2b2ae3d27d4eb4fULL);
  h ^= h >> 33;
  h *= 0xff51afd7ed558ccdULL;
  h ^= h >> 33;
  return static_cast<uint32_t>(h);
}

struct Hit {
  double t = 1e30;
  int material = -1;  // 0 floor, 1 wall, 2+ box index
  int face_axis = 0;  // for boxes: 0=x faces, 1=y faces, 2=top
  double wx = 0, wy = 0, wz = 0;
};

inline bool ray_aabb(double ox, double oy, double oz, double dx, double dy, double dz,
                     double minx, double miny, double minz, double maxx, double maxy,
                     double maxz, double& t_hit, int& axis) {
  double tmin = 0.0, tmax = 1e30;
  int ax = 0;
  const double o[3] = {ox, oy, oz}, d[3] = {dx, dy, dz};
  const double lo[3] = {minx, miny, minz}, hi[3] = {maxx, maxy, maxz};
  for (int i = 0; i < 3; ++i) {
    if (std::abs(d[i]) < 1e-12) {
      if (o[i] < lo[i] || o[i] > hi[i]) return false;
      continue;
    }
    double t0 = (lo[i] - o[i]) / d[i];
    double t1 = (hi[i] - o[i]) / d[i];
    if (t0 > t1) std::swap(t0, t1);
    if (t0 > tmin) {
      tmin = t0;
      ax = i;
    }
    tmax = std::min(tmax, t1);
    if (tmin > tmax) return false;
  }
  if (tmin <= 1e-6) return false;
  t_hit = tmin;
  axis = ax;
  return true;
}

}  // namespace detail_render

// Flat-shaded perspective rendering by per-pixel raycasting: floor plane,
// four bounded walls, and the axis-aligned colored cuboids, plus additive
// seeded pixel noise. Occlusion falls out of nearest-hit selection.
inline RgbImage render_view(const RoomSpec& room, const std::vector<BoxPlacement>& boxes,
                            const CameraPose& cam, int64_t image_size) {
  RgbImage img;
  img.width = img.height = image_size;
  img.pixels.assign(image_size * image_size * 3, 0);
  const camgeo::Basis cb = camgeo::basis(cam);
  const auto palette = class_colors();

  for (int64_t py = 0; py < image_size; ++py) {
    for (int64_t px = 0; px < image_size; ++px) {
      const double ndc_x = (2.0 * (px + 0.5) / image_size - 1.0) * cb.tan_half;
      const double ndc_y = (1.0 - 2.0 * (py + 0.5) / image_size) * cb.tan_half;
      double dx = cb.fx + ndc_x * cb.rx;
      double dy = cb.fy + ndc_x * cb.ry;
      double dz = ndc_y;
      detail_render::Hit hit;
      // boxes
      for (size_t bi = 0; bi < boxes.size(); ++bi) {
        const auto& bx = boxes[bi];
        const double h = bx.size * 0.5;
        double t;
        int axis;
        if (detail_render::ray_aabb(cam.x, cam.y, cam.z, dx, dy, dz, bx.x - h, bx.y - h,
                                    0.0, bx.x + h, bx.y + h, bx.size, t, axis) &&
            t < hit.t) {
          hit.t = t;
          hit.material = 2 + static_cast<int>(bi);
          hit.face_axis = axis;
        }
      }
      // floor (z = 0, downward rays only)
      if (dz < -1e-9) {
        const double t = -cam.z / dz;
        if (t > 1e-6 && t < hit.t) {
          const double wx = cam.x + t * dx, wy = cam.y + t * dy;
          if (wx >= 0 && wx <= room.width && wy >= 0 && wy <= room.depth) {
            hit.t = t;
            hit.material = 0;
            hit.wx = wx;
            hit.wy = wy;
          }
        }
      }
      // walls
      struct Wall {
        int axis;
        double coord;
      };
      static constexpr Wall walls[4] = {{0, 0.0}, {0, -1.0}, {1, 0.0}, {1, -1.0}};
      for (const auto& w : walls) {
        const double bound = w.axis == 0 ? room.width : room.depth;
        const double plane = w.coord < 0 ? bound : 0.0;
        const double o = w.axis == 0 ? cam.x : cam.y;
        const double d = w.axis == 0 ? dx : dy;
        if (std::abs(d) < 1e-12) continue;
        const double t = (plane - o) / d;
        if (t <= 1e-6 || t >= hit.t) continue;
        const double ox = cam.x + t * dx, oy = cam.y + t * dy, oz = cam.z + t * dz;
        const double lateral = w.axis == 0 ? oy : ox;
        const double lat_bound = w.axis == 0 ? room.depth : room.width;
        if (oz < 0 || oz > 3.0 || lateral < -1e-9 || lateral > lat_bound + 1e-9) continue;
        hit.t = t;
        hit.material = 1;
        hit.wx = lateral;
        hit.wz = oz;
      }

      double r, g, b;
      if (hit.material >= 2) {
        const auto& bx = boxes[hit.material - 2];
        const auto& col = palette[bx.class_id];
        const double shade = hit.face_axis == 2 ? 1.0 : (hit.face_axis == 0 ? 0.9 : 0.8);
        r = col[0] * shade;
        g = col[1] * shade;
        b = col[2] * shade;
      } else if (hit.material == 0) {
        const int64_t cx = static_cast<int64_t>(std::floor(hit.wx * 2.0));
        const int64_t cy = static_cast<int64_t>(std::floor(hit.wy * 2.0));
        const double tex = ((cx + cy) & 1) ? 8.0 : -8.0;
        r = room.floor_color[0] * 0.95 + tex;
        g = room.floor_color[1] * 0.95 + tex;
        b = room.floor_color[2] * 0.95 + tex;
      } else if (hit.material == 1) {
        const int64_t stripe = static_cast<int64_t>(std::floor(hit.wx * 3.0));
        const double tex =
            (detail_render::coord_hash(stripe, 0, room.seed) % 21) - 10.0;
        r = room.wall_color[0] + tex;
        g = room.wall_color[1] + tex;
        b = room.wall_color[2] + tex;
      } else {
        r = g = b = 150.0;  // ceiling/void fallback
      }
      r *= room.lighting;
      g *= room.lighting;
      b *= room.lighting;
      uint8_t* out = img.px(px, py);
      // deterministic per-pixel noise
      const uint32_t nh = detail_render::coord_hash(py * image_size + px, 1, room.seed);
      const double n0 = ((nh & 0xff) / 255.0 * 2.0 - 1.0) * room.noise;
      const double n1 = (((nh >> 8) & 0xff) / 255.0 * 2.0 - 1.0) * room.noise;
      const double n2 = (((nh >> 16) & 0xff) / 255.0 * 2.0 - 1.0) * room.noise;
      out[0] = static_cast<uint8_t>(std::clamp(r + n0, 0.0, 255.0));
      out[1] = static_cast<uint8_t>(std::clamp(g + n1, 0.0, 255.0));
      out[2] = static_cast<uint8_t>(std::clamp(b + n2, 0.0, 255.0));
    }
  }
  return img;
}

inline LabeledImage render_scene(const SceneSpec& spec) {
  if (spec.boxes.size() > kNumClasses)
    throw ContractError("render_scene: at most " + std::to_string(kNumClasses) +
                        " boxes, got " + std::to_string(spec.boxes.size()));
  std::array<bool, kNumClasses> seen{};
  for (const auto& b : spec.boxes) {
    if (b.class_id < 0 || b.class_id >= kNumClasses)
      throw ContractError("render_scene: class id out of range");
    if (seen[b.class_id]) throw ContractError("render_scene: duplicate class");
    seen[b.class_id] = true;
  }
  LabeledImage out;
  out.image = render_view(spec.room, spec.boxes, spec.camera, spec.image_size);
  for (const auto& b : spec.boxes)
    if (auto lb = camgeo::project_box(spec.camera, b)) out.labels.push_back(*lb);
  return out;
}

// ---------------------------------------------------------------------------
// dataset generation
// ---------------------------------------------------------------------------

struct DatasetOptions {
  int64_t count = 5500;
  int64_t image_size = 224;
  uint64_t seed = 0;
};

struct Dataset {
  std::vector<LabeledImage> train, val;
  std::array<double, 3> norm_mean{0.5, 0.5, 0.5};
  std::array<double, 3> norm_std{0.25, 0.25, 0.25};
  int64_t image_size = 224;
  uint64_t seed = 0;
};

inline double label_iou(const LabelBox& a, const LabelBox& b) {
  const double ix = std::max(0.0, std::min(a.x2, b.x2) - std::max(a.x1, b.x1));
  const double iy = std::max(0.0, std::min(a.y2, b.y2) - std::max(a.y1, b.y1));
  const double inter = ix * iy;
  const double ua =
      (a.x2 - a.x1) * (a.y2 - a.y1) + (b.x2 - b.x1) * (b.y2 - b.y1) - inter;
  return ua > 0 ? inter / ua : 0.0;
}

// Places the camera and the present boxes inside the view wedge, rejecting
// placements that overlap beyond IoU 0.3 in image space or leave the room.
inline SceneSpec sample_scene(uint64_t seed, int64_t image_size) {
  Rng rng(seed);
  SceneSpec spec;
  spec.image_size = image_size;
  spec.room.seed = rng.next_u64();
  spec.room.lighting = rng.uniform(0.9, 1.1);
  const int wall_base = static_cast<int>(rng.uniform_int(160, 195));
  spec.room.wall_color = {static_cast<uint8_t>(wall_base),
                          static_cast<uint8_t>(wall_base + rng.uniform_int(0, 8)),
                          static_cast<uint8_t>(wall_base + rng.uniform_int(0, 12))};
  const int floor_base = static_cast<int>(rng.uniform_int(98, 126));
  spec.room.floor_color = {static_cast<uint8_t>(floor_base),
                           static_cast<uint8_t>(floor_base),
                           static_cast<uint8_t>(floor_base + rng.uniform_int(0, 8))};
  spec.camera.x = rng.uniform(1.0, spec.room.width - 1.0);
  spec.camera.y = rng.uniform(1.0, spec.room.depth - 1.0);
  spec.camera.yaw = rng.uniform(0.0, 2.0 * M_PI);
  spec.camera.z = 0.6;

  std::array<bool, kNumClasses> present{};
  do {
    for (int c = 0; c < kNumClasses; ++c) present[c] = rng.uniform(0.0, 1.0) < 0.75;
  } while (!present[0] && !present[1] && !present[2]);

  const double half_wedge = (spec.camera.hfov_deg * 0.5 - 5.0) * M_PI / 180.0;
  std::vector<LabelBox> accepted;
  for (int c = 0; c < kNumClasses; ++c) {
    if (!present[c]) continue;
    for (int attempt = 0; attempt < 60; ++attempt) {
      BoxPlacement box;
      box.class_id = c;
      box.size = rng.uniform(0.55, 1.0);
      const double dist = rng.uniform(1.4, 7.0);
      const double ang = spec.camera.yaw + rng.uniform(-half_wedge, half_wedge);
      box.x = spec.camera.x + dist * std::cos(ang);
      box.y = spec.camera.y + dist * std::sin(ang);
      const double margin = box.size * 0.5 + 0.1;
      if (box.x < margin || box.x > spec.room.width - margin || box.y < margin ||
          box.y > spec.room.depth - margin)
        continue;
      auto lb = camgeo::project_box(spec.camera, box);
      if (!lb) continue;
      if (lb->x2 - lb->x1 < 0.02 || lb->y2 - lb->y1 < 0.02) continue;
      bool ok = true;
      for (const auto& prev : accepted) ok = ok && label_iou(*lb, prev) <= 0.3;
      if (!ok) continue;
      accepted.push_back(*lb);
      spec.boxes.push_back(box);
      break;
    }
  }
  return spec;
}

inline Dataset gen_dataset(const DatasetOptions& opts) {
  Dataset ds;
  ds.image_size = opts.image_size;
  ds.seed = opts.seed;
  const int64_t n_train = static_cast<int64_t>(0.9 * opts.count);
  std::vector<LabeledImage> all(opts.count);
#ifdef _OPENMP
#pragma omp parallel for schedule(dynamic, 8)
#endif
  for (int64_t i = 0; i < opts.count; ++i)
    all[i] = render_scene(sample_scene(derive_seed(opts.seed, i), opts.image_size));
  ds.train.assign(all.begin(), all.begin() + n_train);
  ds.val.assign(all.begin() + n_train, all.end());

  // per-channel normalization stats over the training split, pixels in [0,1]
  double mean[3] = {0, 0, 0}, sq[3] = {0, 0, 0};
  int64_t count = 0;
  for (const auto& li : ds.train) {
    const auto& px = li.image.pixels;
    for (size_t i = 0; i < px.size(); i += 3) {
      for (int c = 0; c < 3; ++c) {
        const double v = px[i + c] / 255.0;
        mean[c] += v;
        sq[c] += v * v;
      }
      ++count;
    }
  }
  if (count > 0)
    for (int c = 0; c < 3; ++c) {
      mean[c] /= count;
      sq[c] = std::sqrt(std::max(1e-12, sq[c] / count - mean[c] * mean[c]));
      ds.norm_mean[c] = mean[c];
      ds.norm_std[c] = sq[c];
    }
  return ds;
}

// ---------------------------------------------------------------------------
// on-disk format: images/NNNNNN.ppm + labels/NNNNNN.txt + train.txt/val.txt
// + manifest.json
// ---------------------------------------------------------------------------

inline void write_ppm(const std::string& path, const RgbImage& img) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write image: " + path);
  out << "P6\n" << img.width << " " << img.height << "\n255\n";
  out.write(reinterpret_cast<const char*>(img.pixels.data()),
            static_cast<std::streamsize>(img.pixels.size()));
}

inline RgbImage read_ppm(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot read image: " + path);
  std::string magic;
  int64_t w, h, maxv;
  in >> magic >> w >> h >> maxv;
  if (magic != "P6" || maxv != 255)
    throw IoError("unsupported PPM header in " + path);
  in.get();  // single whitespace after header
  RgbImage img;
  img.width = w;
  img.height = h;
  img.pixels.resize(w * h * 3);
  in.read(reinterpret_cast<char*>(img.pixels.data()),
          static_cast<std::streamsize>(img.pixels.size()));
  if (!in) throw IoError("truncated PPM payload in " + path);
  return img;
}

void save_dataset(const Dataset& ds, const std::string& dir);
Dataset load_dataset(const std::string& dir);

}  // namespace edgenav

// json.hpp lives in vendor/, already on the include path
#include <json.hpp>

namespace edgenav {

inline std::string scene_id(int64_t index) {
  char buf[16];
  std::snprintf(buf, sizeof(buf), "%06lld", static_cast<long long>(index));
  return buf;
}

inline void save_dataset(const Dataset& ds, const std::string& dir) {
  namespace fs = std::filesystem;
  fs::create_directories(fs::path(dir) / "images");
  fs::create_directories(fs::path(dir) / "labels");
  std::ofstream train_list(fs::path(dir) / "train.txt"),
      val_list(fs::path(dir) / "val.txt");
  int64_t index = 0;
  auto dump_split = [&](const std::vector<LabeledImage>& split, std::ofstream& list) {
    for (const auto& li : split) {
      const std::string id = scene_id(index++);
      write_ppm((fs::path(dir) / "images" / (id + ".ppm")).string(), li.image);
      std::ofstream lf(fs::path(dir) / "labels" / (id + ".txt"));
      for (const auto& lb : li.labels)
        lf << lb.class_id << ' ' << fmt_g17(lb.x1) << ' ' << fmt_g17(lb.y1) << ' '
           << fmt_g17(lb.x2) << ' ' << fmt_g17(lb.y2) << '\n';
      list << id << '\n';
    }
  };
  dump_split(ds.train, train_list);
  dump_split(ds.val, val_list);
  nlohmann::ordered_json manifest;
  manifest["seed"] = ds.seed;
  manifest["image_size"] = ds.image_size;
  manifest["num_classes"] = kNumClasses;
  manifest["train_count"] = ds.train.size();
  manifest["val_count"] = ds.val.size();
  manifest["norm_mean"] = ds.norm_mean;
  manifest["norm_std"] = ds.norm_std;
  std::ofstream mf(fs::path(dir) / "manifest.json");
  mf << manifest.dump(2) << '\n';
}

inline Dataset load_dataset(const std::string& dir) {
  namespace fs = std::filesystem;
  Dataset ds;
  const fs::path manifest_path = fs::path(dir) / "manifest.json";
  if (!fs::exists(manifest_path)) return ds;  // empty dataset handle
  std::ifstream mf(manifest_path);
  nlohmann::json manifest;
  try {
    mf >> manifest;
  } catch (const std::exception& e) {
    throw IoError("invalid manifest " + manifest_path.string() + ": " + e.what());
  }
  ds.seed = manifest.value("seed", 0ULL);
  ds.image_size = manifest.value("image_size", 224);
  ds.norm_mean = manifest.value("norm_mean", ds.norm_mean);
  ds.norm_std = manifest.value("norm_std", ds.norm_std);

  auto load_split = [&](const std::string& list_name, std::vector<LabeledImage>& out) {
    const fs::path list_path = fs::path(dir) / list_name;
    if (!fs::exists(list_path)) return;
    std::ifstream list(list_path);
    std::string id;
    while (std::getline(list, id)) {
      if (id.empty()) continue;
      LabeledImage li;
      li.image = read_ppm((fs::path(dir) / "images" / (id + ".ppm")).string());
      const fs::path label_path = fs::path(dir) / "labels" / (id + ".txt");
      std::ifstream lf(label_path);
      if (!lf) throw IoError("missing label file: " + label_path.string());
      std::string line;
      int line_no = 0;
      while (std::getline(lf, line)) {
        ++line_no;
        if (line.empty()) continue;
        LabelBox lb;
        std::istringstream ss(line);
        if (!(ss >> lb.class_id >> lb.x1 >> lb.y1 >> lb.x2 >> lb.y2))
          throw IoError("corrupt label at " + label_path.string() + ":" +
                        std::to_string(line_no));
        const bool in_range = lb.class_id >= 0 && lb.class_id < kNumClasses &&
                              lb.x1 >= 0 && lb.y1 >= 0 && lb.x2 <= 1 && lb.y2 <= 1 &&
                              lb.x1 < lb.x2 && lb.y1 < lb.y2;
        if (!in_range)
          throw IoError("label violates invariants at " + label_path.string() + ":" +
                        std::to_string(line_no));
        li.labels.push_back(lb);
      }
      out.push_back(std::move(li));
    }
  };
  load_split("train.txt", ds.train);
  load_split("val.txt", ds.val);
  return ds;
}

}  // namespace edgenav
