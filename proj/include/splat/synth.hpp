#pragma once

#include <Eigen/Core>
#include <cstdint>
#include <filesystem>
#include <vector>

#include <json.hpp>

#include "splat/render.hpp"
#include "splat/types.hpp"

namespace splat {

/// Parameters of the procedural desk scene and its capture rig.
struct SceneSpec {
  std::uint64_t seed = 1;
  std::string name = "desk";

  int surface_count = 2000;

  int blob_count = 6;
  int particles_per_blob = 45;
  double drift_speed = 0.25;        // blob center motion, scene units over t in [0,1]
  double growth_rate = 0.35;        // fractional radius growth over t in [0,1]
  double opacity_rgb_min = 0.3;
  double opacity_rgb_max = 0.8;
  double opacity_thermal = 0.01;
  double smoke_gray = 0.55;
  bool opacity_jitter = false;      // value-noise perturbation of smoke opacity
  double opacity_jitter_amount = 0.15;

  double orbit_radius = 3.2;
  double orbit_height = 1.6;
  int n_frames = 60;
  int rgb_size = 128;
  int thermal_size = 96;

  int sh_degree_rgb = 3;
  int sh_degree_thermal = 0;
};

SceneSpec scene_spec_from_json(const nlohmann::json& j);
nlohmann::json scene_spec_to_json(const SceneSpec& spec);

/// One smoke puff: a rigid cloud of particles around a drifting, growing
/// center. Particle world positions at time t follow the closed form
/// center(t) + offset * radius(t)/radius(0) with radius(t) linear in t.
struct SmokeBlob {
  Eigen::Vector3d center0 = Eigen::Vector3d::Zero();
  Eigen::Vector3d velocity = Eigen::Vector3d::Zero();
  double radius0 = 0.3;
  double growth = 0.0;  // radius(t) = radius0 * (1 + growth * t)

  std::vector<Eigen::Vector3d> offsets;      // at t = 0
  std::vector<Eigen::Vector3d> log_scales;   // at t = 0
  std::vector<double> opacity_logits;        // RGB
  std::vector<double> opacity_gap_raws;
  std::vector<Eigen::Vector3d> colors;       // degree-0 RGB color

  double radius(double t) const { return radius0 * (1.0 + growth * t); }
  Eigen::Vector3d center(double t) const { return center0 + velocity * t; }
  Eigen::Vector3d particle_position(int j, double t) const {
    return center(t) + offsets[j] * (radius(t) / radius0);
  }
};

/// Analytic ground-truth smoke: exact Gaussian set at any time.
struct SmokeTrajectory {
  std::vector<SmokeBlob> blobs;
  int sh_degree_rgb = 3;
  int sh_degree_thermal = 0;
  double scene_extent = 1.0;
  bool opacity_jitter = false;
  double opacity_jitter_amount = 0.0;
  std::uint64_t jitter_seed = 0;

  GaussianSet at(double t) const;
};

struct GeneratedScene {
  GaussianSet surface;
  SmokeTrajectory smoke;
  Eigen::Vector3d aabb_min = Eigen::Vector3d::Zero();
  Eigen::Vector3d aabb_max = Eigen::Vector3d::Ones();
};

/// Build the ground-truth desk: textured plane-and-box surface Gaussians
/// (RGB texture, smooth pseudo-temperature thermal channel) plus drifting,
/// growing smoke blobs. Deterministic in the seed.
GeneratedScene gen_scene(const SceneSpec& spec);

/// Render the scene into a dataset directory: per frame an RGB and a
/// thermal capture (combined render), clear renders of both modalities,
/// smoke mask (smoke-only accumulation, zeroed below 0.5) and surface
/// depth for the thermal camera; plus manifest.json and a ground-truth
/// surface checkpoint. Returns the manifest path.
std::filesystem::path gen_dataset(const GeneratedScene& scene, const SceneSpec& spec,
                                  const std::filesystem::path& out_dir);

}  // namespace splat
