#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include <json.hpp>

#include "splat/dataset.hpp"
#include "splat/losses.hpp"
#include "splat/render.hpp"

namespace splat {

struct LearningRates {
  double position = 1.6e-4;  // multiplied by scene_extent, exponential decay
  double position_final = 1.6e-6;
  double opacity = 0.05;
  double log_scale = 5e-3;
  double rotation = 1e-3;
  double sh = 2.5e-3;
  double deform = 8e-4;
  double temporal = 2e-3;
};

struct DensifyConfig {
  int start = 500;
  int stop = -1;  // resolved to iterations/2 when negative
  int interval = 100;
  double grad_threshold = 2e-4;  // in half-diagonal screen units
  double min_opacity = 0.005;
  double percent_dense = 0.01;  // split/clone size boundary, x scene_extent
};

struct SmokeInitConfig {
  int count = 5000;
  double opacity_rgb = 0.1;
  double opacity_thermal = 0.01;
  double gray_level = 0.5;
};

struct TrainConfig {
  int iterations_stage2 = 3000;
  int iterations_stage3 = 3000;
  LearningRates lr;
  DensifyConfig densify;
  LossWeights weights;
  SmokeInitConfig smoke_init;
  std::uint64_t seed = 0;
  Modality smoke_alpha_modality = Modality::RGB;
  int sh_degree_rgb = 3;
  int sh_degree_thermal = 0;
  int surface_init_count = 2000;  // used when the dataset has no point hints
  int checkpoint_interval = 0;    // 0 = only at exit
  bool rgb_only = false;          // drop thermal frames and the depth term
};

/// Merge settings from a JSON object onto the defaults above. Unknown keys
/// raise std::invalid_argument to catch config typos early.
TrainConfig train_config_from_json(const nlohmann::json& j);
nlohmann::json train_config_to_json(const TrainConfig& config);

struct AdamParams {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

/// First/second moment buffers for a Gaussian set, stored with the same
/// shapes as the gradients so densification can move rows around.
struct AdamSetState {
  std::vector<PrimitiveGrad> m;
  std::vector<PrimitiveGrad> v;
  std::int64_t step = 0;
};

AdamSetState make_adam_state(const GaussianSet& set);

struct AdamDeformState {
  DeformGradients m;
  DeformGradients v;
  std::int64_t step = 0;
};

AdamDeformState make_adam_state(const DeformField& field);

/// Per-iteration resolved step sizes for the set parameter groups.
struct GroupLearningRates {
  double position = 0.0;
  double opacity = 0.0;
  double log_scale = 0.0;
  double rotation = 0.0;
  double sh = 0.0;
  double temporal = 0.0;
};

/// Exponentially decayed position learning rate at `iteration` of `total`.
double position_lr(const LearningRates& lr, double scene_extent, int iteration, int total);

/// One bias-corrected Adam update over every primitive parameter.
/// Quaternions are renormalized afterwards. Throws TrainingDivergence
/// naming the parameter group on non-finite gradients.
void adam_step(GaussianSet& set, const SetGrad& grads, AdamSetState& state,
               const GroupLearningRates& lrs, const AdamParams& params = {});

void adam_step(DeformField& field, const DeformGradients& grads, AdamDeformState& state,
               double lr, const AdamParams& params = {});

/// Uniformly sampled smoke set inside the AABB: gray, faint in RGB and
/// nearly transparent in thermal, temporal plateau covering [0,1], scales
/// from the mean distance to the three nearest neighbours.
GaussianSet init_smoke(const SmokeInitConfig& config, const Eigen::Vector3d& aabb_min,
                       const Eigen::Vector3d& aabb_max, int sh_degree_rgb, int sh_degree_thermal,
                       std::mt19937_64& rng);

/// Random surface set inside the AABB (or centered on point hints when
/// given): used to seed Stage 2.
GaussianSet init_surface(const std::vector<Eigen::Vector3d>& point_hints, int random_count,
                         const Eigen::Vector3d& aabb_min, const Eigen::Vector3d& aabb_max,
                         int sh_degree_rgb, int sh_degree_thermal, std::mt19937_64& rng);

/// Positional-gradient statistics accumulated between densification passes.
struct DensifyStats {
  std::vector<double> grad_norm_sum;
  std::vector<int> seen;

  void resize_to(std::size_t n);
  void accumulate(const SetGrad& grads, double half_diagonal);
};

/// Clone small / split large primitives whose mean positional gradient
/// exceeds the threshold, then prune low-opacity ones. Adam moment rows and
/// the stats follow the primitive list.
void densify_and_prune(GaussianSet& set, AdamSetState& adam, DensifyStats& stats,
                       const DensifyConfig& config, double scene_extent, std::mt19937_64& rng);

struct LossRow {
  int iteration = 0;
  LossTerms terms;
  double total = 0.0;
};

std::string loss_log_header();
std::string loss_row_to_csv(const LossRow& row);

struct StageResult {
  Scene scene;
  std::vector<LossRow> log;
};

/// Surface-only fit against the thermal frames (render loss only).
/// Needs at least two thermal frames.
StageResult run_stage2(const Dataset& dataset, const TrainConfig& config);

/// Joint surface+smoke optimization over all frames. `initial` carries the
/// Stage-2 surface set; smoke and deformation start fresh. Saves periodic
/// checkpoints into `checkpoint_dir` when provided, and the last finite
/// state if the total loss diverges (the TrainingDivergence propagates).
StageResult run_stage3(const Dataset& dataset, const GaussianSet& surface_init,
                       const TrainConfig& config,
                       const std::optional<std::filesystem::path>& checkpoint_dir = {});

}  // namespace splat
