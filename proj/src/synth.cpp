#include "splat/synth.hpp"

#include <Eigen/Geometry>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numbers>
#include <random>

#include "splat/checkpoint.hpp"
#include "splat/dataset.hpp"
#include "splat/errors.hpp"
#include "splat/sh.hpp"

namespace splat {

namespace {

namespace fs = std::filesystem;
using nlohmann::json;

double get_number(const json& v, const std::string& key) {
  if (!v.is_number()) throw std::invalid_argument("scene spec key '" + key + "' must be a number");
  return v.get<double>();
}

int get_int(const json& v, const std::string& key) {
  if (!v.is_number_integer())
    throw std::invalid_argument("scene spec key '" + key + "' must be an integer");
  return v.get<int>();
}

std::string frame_file(const char* stem, int index, const char* ext) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%s_%03d.%s", stem, index, ext);
  return buf;
}

// Hash-based smooth value noise in (position, time), used only by the
// opacity-jitter flag. Lattice values come from a mixed integer hash.
double lattice_value(std::int64_t x, std::int64_t y, std::int64_t z, std::int64_t w,
                     std::uint64_t seed) {
  std::uint64_t h = seed;
  for (std::uint64_t v : {static_cast<std::uint64_t>(x), static_cast<std::uint64_t>(y),
                          static_cast<std::uint64_t>(z), static_cast<std::uint64_t>(w)}) {
    h ^= v + 0x9e3779b97f4a7c15ull + (h << 6) + (h >> 2);
    h *= 0xff51afd7ed558ccdull;
    h ^= h >> 33;
  }
  return static_cast<double>(h >> 11) * (2.0 / 9007199254740992.0) - 1.0;
}

double smoothstep(double t) { return t * t * (3.0 - 2.0 * t); }

double value_noise(const Eigen::Vector3d& p, double t, std::uint64_t seed) {
  const double coords[4] = {p.x(), p.y(), p.z(), t};
  std::int64_t base[4];
  double frac[4];
  for (int i = 0; i < 4; ++i) {
    const double f = std::floor(coords[i]);
    base[i] = static_cast<std::int64_t>(f);
    frac[i] = smoothstep(coords[i] - f);
  }
  double acc = 0.0;
  for (int corner = 0; corner < 16; ++corner) {
    double weight = 1.0;
    std::int64_t at[4];
    for (int i = 0; i < 4; ++i) {
      const int bit = (corner >> i) & 1;
      at[i] = base[i] + bit;
      weight *= bit ? frac[i] : 1.0 - frac[i];
    }
    acc += weight * lattice_value(at[0], at[1], at[2], at[3], seed);
  }
  return acc;
}

struct Box {
  Eigen::Vector3d center;
  Eigen::Vector3d half;  // half extents
  Eigen::Vector3d tint;
};

/// Smooth pseudo-temperature over the scene, mapped into [0.05, 0.95].
double thermal_field(const Eigen::Vector3d& p) {
  const double v = 0.45 + 0.22 * std::sin(0.9 * p.x() + 0.4) * std::cos(1.1 * p.y()) +
                   0.28 * (p.z() / 1.2);
  return std::clamp(v, 0.05, 0.95);
}

GaussianPrimitive surface_sample(const Eigen::Vector3d& position, const Eigen::Vector4d& rotation,
                                 double tangent_scale, const Eigen::Vector3d& rgb, int d_rgb,
                                 int d_t, std::mt19937_64& rng) {
  GaussianPrimitive g;
  g.sh_rgb = Eigen::MatrixXd::Zero(sh_coeff_count(d_rgb), 3);
  g.sh_thermal = Eigen::VectorXd::Zero(sh_coeff_count(d_t));
  g.position = position;
  g.rotation = rotation;
  // Flat disk: wide in the local xy plane, thin along the local z (the
  // face normal after rotation).
  g.log_scale = {std::log(tangent_scale), std::log(tangent_scale), std::log(tangent_scale / 8.0)};
  g.opacity_logit = logit(0.95);
  for (int c = 0; c < 3; ++c) g.sh_rgb(0, c) = (rgb[c] - 0.5) / kShC0;
  std::uniform_real_distribution<double> tilt(-0.08, 0.08);
  if (g.sh_rgb.rows() > 3)
    for (int r = 1; r <= 3; ++r)
      for (int c = 0; c < 3; ++c) g.sh_rgb(r, c) = tilt(rng) / kShC0;
  g.sh_thermal[0] = (thermal_field(position) - 0.5) / kShC0;
  return g;
}

// Quaternions (w,x,y,z) rotating local +z onto the face normal.
const Eigen::Vector4d kFaceUp{1.0, 0.0, 0.0, 0.0};
const double kHalfSqrt2 = std::sqrt(0.5);
const Eigen::Vector4d kFacePosX{kHalfSqrt2, 0.0, kHalfSqrt2, 0.0};   // +90 deg about y
const Eigen::Vector4d kFaceNegX{kHalfSqrt2, 0.0, -kHalfSqrt2, 0.0};  // -90 deg about y
const Eigen::Vector4d kFacePosY{kHalfSqrt2, -kHalfSqrt2, 0.0, 0.0};  // -90 deg about x
const Eigen::Vector4d kFaceNegY{kHalfSqrt2, kHalfSqrt2, 0.0, 0.0};   // +90 deg about x

Camera orbit_camera(double angle, double radius, double height, const Eigen::Vector3d& target,
                    const Eigen::Vector3d& lateral_offset, int size, Modality modality) {
  Camera cam;
  cam.modality = modality;
  cam.width = size;
  cam.height = size;
  cam.fx = cam.fy = 0.9 * size;
  cam.cx = 0.5 * (size - 1);
  cam.cy = 0.5 * (size - 1);

  const Eigen::Vector3d up(0.0, 0.0, 1.0);
  Eigen::Vector3d pos(radius * std::cos(angle), radius * std::sin(angle), height);
  const Eigen::Vector3d fwd0 = (target - pos).normalized();
  const Eigen::Vector3d right0 = fwd0.cross(up).normalized();
  pos += lateral_offset.x() * right0 + lateral_offset.z() * up;

  const Eigen::Vector3d z_c = (target - pos).normalized();
  const Eigen::Vector3d x_c = z_c.cross(up).normalized();
  const Eigen::Vector3d y_c = z_c.cross(x_c).normalized();
  cam.rotation.row(0) = x_c;
  cam.rotation.row(1) = y_c;
  cam.rotation.row(2) = z_c;
  cam.translation = -cam.rotation * pos;
  return cam;
}

json camera_to_json(const Camera& cam) {
  json rot = json::array();
  for (int r = 0; r < 3; ++r)
    for (int c = 0; c < 3; ++c) rot.push_back(cam.rotation(r, c));
  return json{{"fx", cam.fx},
              {"fy", cam.fy},
              {"cx", cam.cx},
              {"cy", cam.cy},
              {"width", cam.width},
              {"height", cam.height},
              {"rotation", std::move(rot)},
              {"translation", {cam.translation.x(), cam.translation.y(), cam.translation.z()}}};
}

}  // namespace

SceneSpec scene_spec_from_json(const json& j) {
  SceneSpec s;
  if (!j.is_object()) throw std::invalid_argument("scene spec must be a JSON object");
  for (const auto& [key, val] : j.items()) {
    if (key == "seed") {
      if (!val.is_number_integer()) throw std::invalid_argument("seed must be an integer");
      s.seed = val.get<std::uint64_t>();
    } else if (key == "name") {
      s.name = val.get<std::string>();
    } else if (key == "surface_count") s.surface_count = get_int(val, key);
    else if (key == "blob_count") s.blob_count = get_int(val, key);
    else if (key == "particles_per_blob") s.particles_per_blob = get_int(val, key);
    else if (key == "drift_speed") s.drift_speed = get_number(val, key);
    else if (key == "growth_rate") s.growth_rate = get_number(val, key);
    else if (key == "opacity_rgb_min") s.opacity_rgb_min = get_number(val, key);
    else if (key == "opacity_rgb_max") s.opacity_rgb_max = get_number(val, key);
    else if (key == "opacity_thermal") s.opacity_thermal = get_number(val, key);
    else if (key == "smoke_gray") s.smoke_gray = get_number(val, key);
    else if (key == "opacity_jitter") {
      if (!val.is_boolean()) throw std::invalid_argument("opacity_jitter must be a boolean");
      s.opacity_jitter = val.get<bool>();
    } else if (key == "opacity_jitter_amount") s.opacity_jitter_amount = get_number(val, key);
    else if (key == "orbit_radius") s.orbit_radius = get_number(val, key);
    else if (key == "orbit_height") s.orbit_height = get_number(val, key);
    else if (key == "n_frames") s.n_frames = get_int(val, key);
    else if (key == "rgb_size") s.rgb_size = get_int(val, key);
    else if (key == "thermal_size") s.thermal_size = get_int(val, key);
    else if (key == "sh_degree_rgb") s.sh_degree_rgb = get_int(val, key);
    else if (key == "sh_degree_thermal") s.sh_degree_thermal = get_int(val, key);
    else throw std::invalid_argument("unknown scene spec key: " + key);
  }
  if (s.surface_count < 100) throw std::invalid_argument("surface_count too small");
  if (s.n_frames < 2) throw std::invalid_argument("n_frames must be at least 2");
  if (s.blob_count < 1 || s.particles_per_blob < 1)
    throw std::invalid_argument("smoke needs at least one blob and one particle");
  if (!(s.opacity_rgb_min > 0.0 && s.opacity_rgb_max < 1.0 &&
        s.opacity_rgb_min <= s.opacity_rgb_max))
    throw std::invalid_argument("opacity_rgb bounds must satisfy 0 < min <= max < 1");
  if (!(s.opacity_thermal > 0.0 && s.opacity_thermal < s.opacity_rgb_min))
    throw std::invalid_argument("opacity_thermal must be positive and below opacity_rgb_min");
  if (s.rgb_size < 16 || s.thermal_size < 16) throw std::invalid_argument("image sizes too small");
  return s;
}

json scene_spec_to_json(const SceneSpec& s) {
  return json{{"seed", s.seed},
              {"name", s.name},
              {"surface_count", s.surface_count},
              {"blob_count", s.blob_count},
              {"particles_per_blob", s.particles_per_blob},
              {"drift_speed", s.drift_speed},
              {"growth_rate", s.growth_rate},
              {"opacity_rgb_min", s.opacity_rgb_min},
              {"opacity_rgb_max", s.opacity_rgb_max},
              {"opacity_thermal", s.opacity_thermal},
              {"smoke_gray", s.smoke_gray},
              {"opacity_jitter", s.opacity_jitter},
              {"opacity_jitter_amount", s.opacity_jitter_amount},
              {"orbit_radius", s.orbit_radius},
              {"orbit_height", s.orbit_height},
              {"n_frames", s.n_frames},
              {"rgb_size", s.rgb_size},
              {"thermal_size", s.thermal_size},
              {"sh_degree_rgb", s.sh_degree_rgb},
              {"sh_degree_thermal", s.sh_degree_thermal}};
}

GaussianSet SmokeTrajectory::at(double t) const {
  GaussianSet set;
  set.kind = SetKind::Smoke;
  set.scene_extent = scene_extent;
  set.sh_degree_rgb = sh_degree_rgb;
  set.sh_degree_thermal = sh_degree_thermal;

  TemporalOpacity plateau;
  plateau.t_appear = 0.0;
  plateau.span_raw = softplus_inv(1.0);
  plateau.width_appear_raw = softplus_inv(0.1 - 1e-3);
  plateau.width_disappear_raw = plateau.width_appear_raw;

  for (const SmokeBlob& blob : blobs) {
    const double ratio = blob.radius(t) / blob.radius0;
    for (std::size_t j = 0; j < blob.offsets.size(); ++j) {
      GaussianPrimitive g;
      g.sh_rgb = Eigen::MatrixXd::Zero(sh_coeff_count(sh_degree_rgb), 3);
      g.sh_thermal = Eigen::VectorXd::Zero(sh_coeff_count(sh_degree_thermal));
      g.position = blob.particle_position(static_cast<int>(j), t);
      g.log_scale = blob.log_scales[j].array() + std::log(ratio);
      g.opacity_logit = blob.opacity_logits[j];
      if (opacity_jitter)
        g.opacity_logit +=
            opacity_jitter_amount * value_noise(2.0 * g.position, 1.7 * t, jitter_seed);
      g.opacity_gap_raw = blob.opacity_gap_raws[j];
      for (int c = 0; c < 3; ++c) g.sh_rgb(0, c) = (blob.colors[j][c] - 0.5) / kShC0;
      g.sh_thermal[0] = (blob.colors[j].mean() - 0.5) / kShC0;
      g.temporal = plateau;
      set.primitives.push_back(std::move(g));
    }
  }
  return set;
}

GeneratedScene gen_scene(const SceneSpec& spec) {
  std::mt19937_64 rng(spec.seed);
  GeneratedScene out;

  const int d_rgb = spec.sh_degree_rgb;
  const int d_t = spec.sh_degree_thermal;
  out.surface.kind = SetKind::Surface;
  out.surface.sh_degree_rgb = d_rgb;
  out.surface.sh_degree_thermal = d_t;

  // Desk top plus three boxes standing on it.
  const double plane_half = 1.5;
  const std::vector<Box> boxes = {
      {{-0.55, -0.35, 0.25}, {0.28, 0.22, 0.25}, {0.75, 0.35, 0.30}},
      {{0.55, -0.50, 0.35}, {0.20, 0.25, 0.35}, {0.25, 0.45, 0.70}},
      {{0.15, 0.60, 0.15}, {0.32, 0.18, 0.15}, {0.30, 0.62, 0.35}},
  };

  double box_area = 0.0;
  std::vector<double> face_area;  // 5 faces per box: +z, +x, -x, +y, -y
  for (const Box& b : boxes) {
    const double ax = 4.0 * b.half.y() * b.half.z();
    const double ay = 4.0 * b.half.x() * b.half.z();
    const double az = 4.0 * b.half.x() * b.half.y();
    face_area.insert(face_area.end(), {az, ax, ax, ay, ay});
    box_area += az + 2.0 * ax + 2.0 * ay;
  }
  const double plane_area = 4.0 * plane_half * plane_half;
  const double total_area = plane_area + box_area;

  std::uniform_real_distribution<double> u01(0.0, 1.0);
  std::uniform_real_distribution<double> shade(-0.05, 0.05);

  const int plane_count =
      std::max(1, static_cast<int>(std::lround(spec.surface_count * plane_area / total_area)));
  const double plane_spacing = std::sqrt(plane_area / plane_count);
  for (int i = 0; i < plane_count; ++i) {
    const Eigen::Vector3d p(plane_half * (2.0 * u01(rng) - 1.0),
                            plane_half * (2.0 * u01(rng) - 1.0), 0.0);
    const bool check = (static_cast<int>(std::floor(p.x() / 0.5)) +
                        static_cast<int>(std::floor(p.y() / 0.5))) % 2 == 0;
    const double tone = check ? 0.62 : 0.42;
    const Eigen::Vector3d rgb = Eigen::Vector3d(tone + 0.05, tone, tone - 0.06) +
                                Eigen::Vector3d(shade(rng), shade(rng), shade(rng));
    out.surface.primitives.push_back(
        surface_sample(p, kFaceUp, 0.7 * plane_spacing, rgb, d_rgb, d_t, rng));
  }

  int face_index = 0;
  for (const Box& b : boxes) {
    for (int f = 0; f < 5; ++f, ++face_index) {
      const int count = std::max(
          1, static_cast<int>(std::lround(spec.surface_count * face_area[face_index] / total_area)));
      const double spacing = std::sqrt(face_area[face_index] / count);
      for (int i = 0; i < count; ++i) {
        const double u = 2.0 * u01(rng) - 1.0;
        const double v = 2.0 * u01(rng) - 1.0;
        Eigen::Vector3d p;
        Eigen::Vector4d q;
        switch (f) {
          case 0:  // +z
            p = b.center + Eigen::Vector3d(u * b.half.x(), v * b.half.y(), b.half.z());
            q = kFaceUp;
            break;
          case 1:  // +x
            p = b.center + Eigen::Vector3d(b.half.x(), u * b.half.y(), v * b.half.z());
            q = kFacePosX;
            break;
          case 2:  // -x
            p = b.center + Eigen::Vector3d(-b.half.x(), u * b.half.y(), v * b.half.z());
            q = kFaceNegX;
            break;
          case 3:  // +y
            p = b.center + Eigen::Vector3d(u * b.half.x(), b.half.y(), v * b.half.z());
            q = kFacePosY;
            break;
          default:  // -y
            p = b.center + Eigen::Vector3d(u * b.half.x(), -b.half.y(), v * b.half.z());
            q = kFaceNegY;
            break;
        }
        const double stripe = 0.5 + 0.5 * std::sin(14.0 * (u + v));
        const Eigen::Vector3d rgb =
            (b.tint * (0.75 + 0.25 * stripe)) +
            Eigen::Vector3d(shade(rng), shade(rng), shade(rng));
        out.surface.primitives.push_back(
            surface_sample(p, q, 0.8 * spacing, rgb.cwiseMax(0.02).cwiseMin(0.98), d_rgb, d_t,
                           rng));
      }
    }
  }

  // Smoke blobs hovering over the desk, drifting mostly upward.
  out.smoke.sh_degree_rgb = d_rgb;
  out.smoke.sh_degree_thermal = d_t;
  out.smoke.opacity_jitter = spec.opacity_jitter;
  out.smoke.opacity_jitter_amount = spec.opacity_jitter_amount;
  out.smoke.jitter_seed = spec.seed ^ 0xa5a5a5a5ull;

  std::uniform_real_distribution<double> ucx(-0.7, 0.7);
  std::uniform_real_distribution<double> ucz(0.45, 0.85);
  std::uniform_real_distribution<double> uvel(-0.6, 0.6);
  std::uniform_real_distribution<double> uvz(0.5, 1.0);
  std::uniform_real_distribution<double> urad(0.22, 0.38);
  std::uniform_real_distribution<double> ugrow(0.7, 1.3);
  std::uniform_real_distribution<double> usize(0.18, 0.30);
  std::uniform_real_distribution<double> uop(spec.opacity_rgb_min, spec.opacity_rgb_max);
  std::uniform_real_distribution<double> uth(0.5, 1.0);
  std::uniform_real_distribution<double> utint(-0.05, 0.05);
  std::normal_distribution<double> normal(0.0, 1.0);

  for (int bi = 0; bi < spec.blob_count; ++bi) {
    SmokeBlob blob;
    blob.center0 = {ucx(rng), ucx(rng), ucz(rng)};
    blob.velocity = Eigen::Vector3d(uvel(rng), uvel(rng), uvz(rng)).normalized() *
                    (spec.drift_speed * ugrow(rng));
    blob.radius0 = urad(rng);
    blob.growth = spec.growth_rate * ugrow(rng);
    for (int j = 0; j < spec.particles_per_blob; ++j) {
      blob.offsets.emplace_back(0.55 * blob.radius0 *
                                Eigen::Vector3d(normal(rng), normal(rng), normal(rng)));
      blob.log_scales.emplace_back(
          Eigen::Vector3d::Constant(std::log(blob.radius0 * usize(rng))));
      const double op_rgb = uop(rng);
      blob.opacity_logits.push_back(logit(op_rgb));
      const double op_th = spec.opacity_thermal * uth(rng);
      blob.opacity_gap_raws.push_back(softplus_inv(logit(op_rgb) - logit(op_th)));
      const double tone = spec.smoke_gray + utint(rng);
      blob.colors.emplace_back(tone + 0.3 * utint(rng), tone + 0.3 * utint(rng),
                               tone + 0.3 * utint(rng));
    }
    out.smoke.blobs.push_back(std::move(blob));
  }

  // Scene bounds: surface plus the smoke swept over t in [0, 1] (motion and
  // growth are linear, so the endpoints bound the sweep), with a margin.
  Eigen::Vector3d lo = Eigen::Vector3d::Constant(std::numeric_limits<double>::infinity());
  Eigen::Vector3d hi = -lo;
  for (const auto& g : out.surface.primitives) {
    lo = lo.cwiseMin(g.position);
    hi = hi.cwiseMax(g.position);
  }
  for (const SmokeBlob& blob : out.smoke.blobs) {
    double reach = 0.0;
    for (std::size_t j = 0; j < blob.offsets.size(); ++j)
      reach = std::max(reach, blob.offsets[j].norm() +
                                  3.0 * blob.log_scales[j].array().exp().maxCoeff());
    for (double t : {0.0, 1.0}) {
      const double r = reach * blob.radius(t) / blob.radius0;
      lo = lo.cwiseMin(blob.center(t) - Eigen::Vector3d::Constant(r));
      hi = hi.cwiseMax(blob.center(t) + Eigen::Vector3d::Constant(r));
    }
  }
  const Eigen::Vector3d margin = 0.05 * (hi - lo) + Eigen::Vector3d::Constant(0.05);
  out.aabb_min = lo - margin;
  out.aabb_max = hi + margin;

  const double extent = (out.aabb_max - out.aabb_min).norm();
  out.surface.scene_extent = extent;
  out.smoke.scene_extent = extent;
  return out;
}

fs::path gen_dataset(const GeneratedScene& scene, const SceneSpec& spec, const fs::path& out_dir) {
  for (const char* sub : {"rgb", "thermal", "clear", "mask", "depth"})
    fs::create_directories(out_dir / sub);

  std::mt19937_64 rng(spec.seed ^ 0x5bd1e995ull);
  const Eigen::Vector3d target(0.0, 0.0, 0.35);

  Scene render_scene;
  render_scene.surface = scene.surface;
  render_scene.deform = DeformField(DeformConfig{}, 0);  // zero head: exact identity

  json frames = json::array();
  for (int i = 0; i < spec.n_frames; ++i) {
    const double t = static_cast<double>(i) / (spec.n_frames - 1);
    const double angle = 2.0 * std::numbers::pi * i / spec.n_frames;
    render_scene.smoke = scene.smoke.at(t);

    const Camera rgb_cam = orbit_camera(angle, spec.orbit_radius, spec.orbit_height, target,
                                        Eigen::Vector3d::Zero(), spec.rgb_size, Modality::RGB);
    const Camera th_cam =
        orbit_camera(angle, spec.orbit_radius, spec.orbit_height, target,
                     Eigen::Vector3d(0.06, 0.0, 0.03), spec.thermal_size, Modality::Thermal);

    // RGB capture, its clear plate and the smoke mask.
    const RenderOutput rgb = render(render_scene, rgb_cam, t, RenderMode::Combined);
    const RenderOutput rgb_clear = render(render_scene, rgb_cam, t, RenderMode::SurfaceOnly);
    const RenderOutput rgb_smoke = render(render_scene, rgb_cam, t, RenderMode::SmokeOnly);
    const std::string rgb_name = frame_file("frame", i, "png");
    write_png(out_dir / "rgb" / rgb_name, rgb.color);
    const std::string clear_rgb_name = frame_file("rgb", i, "png");
    write_png(out_dir / "clear" / clear_rgb_name, rgb_clear.color);
    Image mask(spec.rgb_size, spec.rgb_size, 1);
    for (int y = 0; y < spec.rgb_size; ++y)
      for (int x = 0; x < spec.rgb_size; ++x) {
        const double a = rgb_smoke.accumulation.at(x, y);
        mask.at(x, y) = a < 0.5 ? 0.0 : a;
      }
    const std::string mask_name = frame_file("frame", i, "png");
    write_png(out_dir / "mask" / mask_name, mask);

    frames.push_back(json{{"image", "rgb/" + rgb_name},
                          {"modality", "rgb"},
                          {"time", t},
                          {"camera", camera_to_json(rgb_cam)},
                          {"mask", "mask/" + mask_name},
                          {"clear", "clear/" + clear_rgb_name}});

    // Thermal capture, clear plate and surface depth.
    const RenderOutput th = render(render_scene, th_cam, t, RenderMode::Combined);
    const RenderOutput th_clear = render(render_scene, th_cam, t, RenderMode::SurfaceOnly);
    const std::string th_name = frame_file("frame", i, "png");
    write_png(out_dir / "thermal" / th_name, th.color);
    const std::string clear_th_name = frame_file("thermal", i, "png");
    write_png(out_dir / "clear" / clear_th_name, th_clear.color);
    const std::string depth_name = frame_file("frame", i, "pfm");
    write_pfm(out_dir / "depth" / depth_name, th_clear.depth);

    frames.push_back(json{{"image", "thermal/" + th_name},
                          {"modality", "thermal"},
                          {"time", t},
                          {"camera", camera_to_json(th_cam)},
                          {"depth", "depth/" + depth_name},
                          {"clear", "clear/" + clear_th_name}});
  }

  // Point hints: jittered subsample of the true surface, standing in for a
  // sparse reconstruction.
  json points = json::array();
  std::uniform_real_distribution<double> jitter(-0.02, 0.02);
  for (std::size_t i = 0; i < scene.surface.size(); i += 2) {
    const Eigen::Vector3d& p = scene.surface.primitives[i].position;
    points.push_back({p.x() + jitter(rng), p.y() + jitter(rng), p.z() + jitter(rng)});
  }

  const json manifest{
      {"format_version", kManifestFormatVersion},
      {"name", spec.name},
      {"scene_aabb",
       {{"min", {scene.aabb_min.x(), scene.aabb_min.y(), scene.aabb_min.z()}},
        {"max", {scene.aabb_max.x(), scene.aabb_max.y(), scene.aabb_max.z()}}}},
      {"points", std::move(points)},
      {"frames", std::move(frames)}};

  const fs::path manifest_path = out_dir / "manifest.json";
  {
    std::ofstream f(manifest_path, std::ios::binary);
    if (!f) throw std::runtime_error("cannot write manifest: " + manifest_path.string());
    f << manifest.dump(2) << "\n";
  }

  // Ground-truth surface checkpoint, so evaluations can re-render the clear
  // scene exactly.
  Scene gt;
  gt.surface = scene.surface;
  gt.smoke.scene_extent = scene.surface.scene_extent;
  gt.smoke.sh_degree_rgb = spec.sh_degree_rgb;
  gt.smoke.sh_degree_thermal = spec.sh_degree_thermal;
  gt.deform = render_scene.deform;
  save_checkpoint(gt, out_dir / "gt_surface");

  return manifest_path;
}

}  // namespace splat
