#include "splat/train.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

#include "splat/checkpoint.hpp"
#include "splat/covariance.hpp"
#include "splat/errors.hpp"
#include "splat/sh.hpp"

namespace splat {

namespace {

using nlohmann::json;

void validate(const TrainConfig& c) {
  if (c.iterations_stage2 <= 0 || c.iterations_stage3 <= 0)
    throw std::invalid_argument("iteration counts must be positive");
  const double lrs[] = {c.lr.position, c.lr.position_final, c.lr.opacity, c.lr.log_scale,
                        c.lr.rotation, c.lr.sh,             c.lr.deform,  c.lr.temporal};
  for (double v : lrs)
    if (!(v > 0.0)) throw std::invalid_argument("learning rates must be positive");
  if (c.densify.interval <= 0) throw std::invalid_argument("densify.interval must be positive");
  if (!(c.densify.grad_threshold > 0.0))
    throw std::invalid_argument("densify.grad_threshold must be positive");
  if (!(c.densify.min_opacity > 0.0 && c.densify.min_opacity < 1.0))
    throw std::invalid_argument("densify.min_opacity must lie in (0, 1)");
  if (!(c.densify.percent_dense > 0.0))
    throw std::invalid_argument("densify.percent_dense must be positive");
  if (c.smoke_init.count < 0) throw std::invalid_argument("smoke_init.count must be >= 0");
  if (!(c.smoke_init.opacity_rgb > 0.0 && c.smoke_init.opacity_rgb < 1.0) ||
      !(c.smoke_init.opacity_thermal > 0.0 &&
        c.smoke_init.opacity_thermal < c.smoke_init.opacity_rgb))
    throw std::invalid_argument("smoke_init opacities need 0 < thermal < rgb < 1");
  if (!(c.smoke_init.gray_level > 0.0 && c.smoke_init.gray_level < 1.0))
    throw std::invalid_argument("smoke_init.gray_level must lie in (0, 1)");
  if (c.sh_degree_rgb < 0 || c.sh_degree_rgb > 3 || c.sh_degree_thermal < 0 ||
      c.sh_degree_thermal > 3)
    throw std::invalid_argument("spherical-harmonic degrees must lie in [0, 3]");
  const double ws[] = {c.weights.render, c.weights.smoke_alpha, c.weights.smoke_color,
                       c.weights.mono,   c.weights.depth,       c.weights.mask};
  for (double v : ws)
    if (!(v >= 0.0)) throw std::invalid_argument("loss weights must be non-negative");
  if (!(c.weights.dssim >= 0.0 && c.weights.dssim <= 1.0))
    throw std::invalid_argument("weights.dssim must lie in [0, 1]");
  if (c.surface_init_count < 0)
    throw std::invalid_argument("surface_init_count must be >= 0");
  if (c.checkpoint_interval < 0)
    throw std::invalid_argument("checkpoint_interval must be >= 0");
}

double get_number(const json& v, const std::string& key) {
  if (!v.is_number()) throw std::invalid_argument("config key '" + key + "' must be a number");
  return v.get<double>();
}

int get_int(const json& v, const std::string& key) {
  if (!v.is_number_integer())
    throw std::invalid_argument("config key '" + key + "' must be an integer");
  return v.get<int>();
}

GaussianPrimitive blank_primitive(int sh_degree_rgb, int sh_degree_thermal) {
  GaussianPrimitive g;
  g.sh_rgb = Eigen::MatrixXd::Zero(sh_coeff_count(sh_degree_rgb), 3);
  g.sh_thermal = Eigen::VectorXd::Zero(sh_coeff_count(sh_degree_thermal));
  return g;
}

/// Isotropic log-scales from the mean distance to the three nearest
/// neighbours, the usual point-cloud seeding heuristic.
void assign_neighbor_scales(GaussianSet& set) {
  const std::size_t n = set.size();
  if (n == 0) return;
  const double fallback = std::max(set.scene_extent, 1e-3) * 0.01;
  if (n == 1) {
    set.primitives[0].log_scale.setConstant(std::log(fallback));
    return;
  }
  for (std::size_t i = 0; i < n; ++i) {
    double best[3] = {std::numeric_limits<double>::infinity(),
                      std::numeric_limits<double>::infinity(),
                      std::numeric_limits<double>::infinity()};
    const Eigen::Vector3d& pi = set.primitives[i].position;
    for (std::size_t j = 0; j < n; ++j) {
      if (j == i) continue;
      const double d2 = (set.primitives[j].position - pi).squaredNorm();
      if (d2 < best[2]) {
        best[2] = d2;
        if (best[2] < best[1]) std::swap(best[1], best[2]);
        if (best[1] < best[0]) std::swap(best[0], best[1]);
      }
    }
    double sum = 0.0;
    int k = 0;
    for (double d2 : best)
      if (std::isfinite(d2)) {
        sum += std::sqrt(d2);
        ++k;
      }
    const double mean = k > 0 ? sum / k : fallback;
    set.primitives[i].log_scale.setConstant(std::log(std::max(mean, 1e-6)));
  }
}

GroupLearningRates group_lrs(const LearningRates& lr, double lr_position_now, double scale) {
  GroupLearningRates g;
  g.position = lr_position_now * scale;
  g.opacity = lr.opacity * scale;
  g.log_scale = lr.log_scale * scale;
  g.rotation = lr.rotation * scale;
  g.sh = lr.sh * scale;
  g.temporal = lr.temporal * scale;
  return g;
}

void scale_in_place(Image& img, double s) {
  double* p = img.data();
  for (std::size_t i = 0; i < img.size(); ++i) p[i] *= s;
}

void write_loss_log(const std::filesystem::path& path, const std::vector<LossRow>& log) {
  std::ofstream f(path, std::ios::binary);
  f << loss_log_header();
  for (const LossRow& row : log) f << loss_row_to_csv(row);
}

}  // namespace

TrainConfig train_config_from_json(const json& j) {
  TrainConfig c;
  if (!j.is_object()) throw std::invalid_argument("train config must be a JSON object");
  for (const auto& [key, val] : j.items()) {
    if (key == "iterations_stage2") {
      c.iterations_stage2 = get_int(val, key);
    } else if (key == "iterations_stage3") {
      c.iterations_stage3 = get_int(val, key);
    } else if (key == "lr") {
      for (const auto& [k2, v2] : val.items()) {
        if (k2 == "position") c.lr.position = get_number(v2, k2);
        else if (k2 == "position_final") c.lr.position_final = get_number(v2, k2);
        else if (k2 == "opacity") c.lr.opacity = get_number(v2, k2);
        else if (k2 == "log_scale") c.lr.log_scale = get_number(v2, k2);
        else if (k2 == "rotation") c.lr.rotation = get_number(v2, k2);
        else if (k2 == "sh") c.lr.sh = get_number(v2, k2);
        else if (k2 == "deform") c.lr.deform = get_number(v2, k2);
        else if (k2 == "temporal") c.lr.temporal = get_number(v2, k2);
        else throw std::invalid_argument("unknown config key: lr." + k2);
      }
    } else if (key == "densify") {
      for (const auto& [k2, v2] : val.items()) {
        if (k2 == "start") c.densify.start = get_int(v2, k2);
        else if (k2 == "stop") c.densify.stop = get_int(v2, k2);
        else if (k2 == "interval") c.densify.interval = get_int(v2, k2);
        else if (k2 == "grad_threshold") c.densify.grad_threshold = get_number(v2, k2);
        else if (k2 == "min_opacity") c.densify.min_opacity = get_number(v2, k2);
        else if (k2 == "percent_dense") c.densify.percent_dense = get_number(v2, k2);
        else throw std::invalid_argument("unknown config key: densify." + k2);
      }
    } else if (key == "weights") {
      for (const auto& [k2, v2] : val.items()) {
        if (k2 == "render") c.weights.render = get_number(v2, k2);
        else if (k2 == "smoke_alpha") c.weights.smoke_alpha = get_number(v2, k2);
        else if (k2 == "smoke_color") c.weights.smoke_color = get_number(v2, k2);
        else if (k2 == "mono") c.weights.mono = get_number(v2, k2);
        else if (k2 == "depth") c.weights.depth = get_number(v2, k2);
        else if (k2 == "mask") c.weights.mask = get_number(v2, k2);
        else if (k2 == "dssim") c.weights.dssim = get_number(v2, k2);
        else throw std::invalid_argument("unknown config key: weights." + k2);
      }
    } else if (key == "smoke_init") {
      for (const auto& [k2, v2] : val.items()) {
        if (k2 == "count") c.smoke_init.count = get_int(v2, k2);
        else if (k2 == "opacity_rgb") c.smoke_init.opacity_rgb = get_number(v2, k2);
        else if (k2 == "opacity_thermal") c.smoke_init.opacity_thermal = get_number(v2, k2);
        else if (k2 == "gray_level") c.smoke_init.gray_level = get_number(v2, k2);
        else throw std::invalid_argument("unknown config key: smoke_init." + k2);
      }
    } else if (key == "seed") {
      if (!val.is_number_integer()) throw std::invalid_argument("seed must be an integer");
      c.seed = val.get<std::uint64_t>();
    } else if (key == "smoke_alpha_modality") {
      const std::string s = val.get<std::string>();
      if (s == "rgb") c.smoke_alpha_modality = Modality::RGB;
      else if (s == "thermal") c.smoke_alpha_modality = Modality::Thermal;
      else throw std::invalid_argument("smoke_alpha_modality must be 'rgb' or 'thermal'");
    } else if (key == "sh_degree_rgb") {
      c.sh_degree_rgb = get_int(val, key);
    } else if (key == "sh_degree_thermal") {
      c.sh_degree_thermal = get_int(val, key);
    } else if (key == "surface_init_count") {
      c.surface_init_count = get_int(val, key);
    } else if (key == "checkpoint_interval") {
      c.checkpoint_interval = get_int(val, key);
    } else if (key == "rgb_only") {
      if (!val.is_boolean()) throw std::invalid_argument("rgb_only must be a boolean");
      c.rgb_only = val.get<bool>();
    } else {
      throw std::invalid_argument("unknown config key: " + key);
    }
  }
  validate(c);
  return c;
}

json train_config_to_json(const TrainConfig& c) {
  return json{
      {"iterations_stage2", c.iterations_stage2},
      {"iterations_stage3", c.iterations_stage3},
      {"lr",
       {{"position", c.lr.position},
        {"position_final", c.lr.position_final},
        {"opacity", c.lr.opacity},
        {"log_scale", c.lr.log_scale},
        {"rotation", c.lr.rotation},
        {"sh", c.lr.sh},
        {"deform", c.lr.deform},
        {"temporal", c.lr.temporal}}},
      {"densify",
       {{"start", c.densify.start},
        {"stop", c.densify.stop},
        {"interval", c.densify.interval},
        {"grad_threshold", c.densify.grad_threshold},
        {"min_opacity", c.densify.min_opacity},
        {"percent_dense", c.densify.percent_dense}}},
      {"weights",
       {{"render", c.weights.render},
        {"smoke_alpha", c.weights.smoke_alpha},
        {"smoke_color", c.weights.smoke_color},
        {"mono", c.weights.mono},
        {"depth", c.weights.depth},
        {"mask", c.weights.mask},
        {"dssim", c.weights.dssim}}},
      {"smoke_init",
       {{"count", c.smoke_init.count},
        {"opacity_rgb", c.smoke_init.opacity_rgb},
        {"opacity_thermal", c.smoke_init.opacity_thermal},
        {"gray_level", c.smoke_init.gray_level}}},
      {"seed", c.seed},
      {"smoke_alpha_modality", c.smoke_alpha_modality == Modality::RGB ? "rgb" : "thermal"},
      {"sh_degree_rgb", c.sh_degree_rgb},
      {"sh_degree_thermal", c.sh_degree_thermal},
      {"surface_init_count", c.surface_init_count},
      {"checkpoint_interval", c.checkpoint_interval},
      {"rgb_only", c.rgb_only}};
}

AdamSetState make_adam_state(const GaussianSet& set) {
  AdamSetState st;
  st.m.reserve(set.size());
  st.v.reserve(set.size());
  for (const auto& g : set.primitives) {
    st.m.push_back(zero_grad_like(g));
    st.v.push_back(zero_grad_like(g));
  }
  return st;
}

AdamDeformState make_adam_state(const DeformField& field) {
  AdamDeformState st;
  st.m = field.zero_gradients();
  st.v = field.zero_gradients();
  return st;
}

double position_lr(const LearningRates& lr, double scene_extent, int iteration, int total) {
  const double init = lr.position * scene_extent;
  const double final = lr.position_final * scene_extent;
  if (total <= 0) return init;
  const double t = std::clamp(static_cast<double>(iteration) / total, 0.0, 1.0);
  return init * std::pow(final / init, t);
}

void adam_step(GaussianSet& set, const SetGrad& grads, AdamSetState& state,
               const GroupLearningRates& lrs, const AdamParams& params) {
  if (grads.primitives.size() != set.size() || state.m.size() != set.size() ||
      state.v.size() != set.size())
    throw std::invalid_argument("adam_step: gradient/state shape mismatch");

  state.step += 1;
  const double bc1 = 1.0 - std::pow(params.beta1, static_cast<double>(state.step));
  const double bc2 = 1.0 - std::pow(params.beta2, static_cast<double>(state.step));

  auto update = [&](double& param, double g, double& m, double& v, double lr, const char* group) {
    if (!std::isfinite(g))
      throw TrainingDivergence(std::string("non-finite gradient in parameter group '") + group +
                               "'");
    m = params.beta1 * m + (1.0 - params.beta1) * g;
    v = params.beta2 * v + (1.0 - params.beta2) * g * g;
    param -= lr * (m / bc1) / (std::sqrt(v / bc2) + params.eps);
  };

  for (std::size_t i = 0; i < set.size(); ++i) {
    GaussianPrimitive& g = set.primitives[i];
    const PrimitiveGrad& d = grads.primitives[i];
    PrimitiveGrad& m = state.m[i];
    PrimitiveGrad& v = state.v[i];

    for (int k = 0; k < 3; ++k)
      update(g.position[k], d.position[k], m.position[k], v.position[k], lrs.position, "position");
    for (int k = 0; k < 4; ++k)
      update(g.rotation[k], d.rotation[k], m.rotation[k], v.rotation[k], lrs.rotation, "rotation");
    const double norm = g.rotation.norm();
    if (norm > 0.0) g.rotation /= norm;
    for (int k = 0; k < 3; ++k)
      update(g.log_scale[k], d.log_scale[k], m.log_scale[k], v.log_scale[k], lrs.log_scale,
             "log_scale");
    update(g.opacity_logit, d.opacity_logit, m.opacity_logit, v.opacity_logit, lrs.opacity,
           "opacity");
    update(g.opacity_gap_raw, d.opacity_gap_raw, m.opacity_gap_raw, v.opacity_gap_raw, lrs.opacity,
           "opacity");
    for (Eigen::Index r = 0; r < g.sh_rgb.rows(); ++r)
      for (Eigen::Index col = 0; col < 3; ++col)
        update(g.sh_rgb(r, col), d.sh_rgb(r, col), m.sh_rgb(r, col), v.sh_rgb(r, col), lrs.sh,
               "sh");
    for (Eigen::Index r = 0; r < g.sh_thermal.size(); ++r)
      update(g.sh_thermal[r], d.sh_thermal[r], m.sh_thermal[r], v.sh_thermal[r], lrs.sh, "sh");
    if (g.temporal) {
      TemporalOpacity& t = *g.temporal;
      update(t.t_appear, d.temporal.t_appear, m.temporal.t_appear, v.temporal.t_appear,
             lrs.temporal, "temporal");
      update(t.width_appear_raw, d.temporal.width_appear_raw, m.temporal.width_appear_raw,
             v.temporal.width_appear_raw, lrs.temporal, "temporal");
      update(t.span_raw, d.temporal.span_raw, m.temporal.span_raw, v.temporal.span_raw,
             lrs.temporal, "temporal");
      update(t.width_disappear_raw, d.temporal.width_disappear_raw,
             m.temporal.width_disappear_raw, v.temporal.width_disappear_raw, lrs.temporal,
             "temporal");
    }
  }
}

void adam_step(DeformField& field, const DeformGradients& grads, AdamDeformState& state, double lr,
               const AdamParams& params) {
  if (static_cast<int>(grads.weights.size()) != field.layer_count())
    throw std::invalid_argument("adam_step: deform gradient shape mismatch");
  for (const auto& w : grads.weights)
    if (!w.allFinite()) throw TrainingDivergence("non-finite gradient in parameter group 'deform'");
  for (const auto& b : grads.biases)
    if (!b.allFinite()) throw TrainingDivergence("non-finite gradient in parameter group 'deform'");

  state.step += 1;
  const double bc1 = 1.0 - std::pow(params.beta1, static_cast<double>(state.step));
  const double bc2 = 1.0 - std::pow(params.beta2, static_cast<double>(state.step));
  for (int i = 0; i < field.layer_count(); ++i) {
    auto& w = field.weights()[i];
    auto& mw = state.m.weights[i];
    auto& vw = state.v.weights[i];
    mw = params.beta1 * mw + (1.0 - params.beta1) * grads.weights[i];
    vw = params.beta2 * vw + (1.0 - params.beta2) * grads.weights[i].cwiseProduct(grads.weights[i]);
    w.array() -= lr * (mw.array() / bc1) / ((vw.array() / bc2).sqrt() + params.eps);

    auto& b = field.biases()[i];
    auto& mb = state.m.biases[i];
    auto& vb = state.v.biases[i];
    mb = params.beta1 * mb + (1.0 - params.beta1) * grads.biases[i];
    vb = params.beta2 * vb + (1.0 - params.beta2) * grads.biases[i].cwiseProduct(grads.biases[i]);
    b.array() -= lr * (mb.array() / bc1) / ((vb.array() / bc2).sqrt() + params.eps);
  }
}

GaussianSet init_smoke(const SmokeInitConfig& config, const Eigen::Vector3d& aabb_min,
                       const Eigen::Vector3d& aabb_max, int sh_degree_rgb, int sh_degree_thermal,
                       std::mt19937_64& rng) {
  if (config.count <= 0) throw std::invalid_argument("init_smoke: count must be positive");
  if (!((aabb_max - aabb_min).array() > 0.0).all())
    throw std::invalid_argument("init_smoke: degenerate AABB");

  GaussianSet set;
  set.kind = SetKind::Smoke;
  set.scene_extent = (aabb_max - aabb_min).norm();
  set.sh_degree_rgb = sh_degree_rgb;
  set.sh_degree_thermal = sh_degree_thermal;

  std::uniform_real_distribution<double> ux(aabb_min.x(), aabb_max.x());
  std::uniform_real_distribution<double> uy(aabb_min.y(), aabb_max.y());
  std::uniform_real_distribution<double> uz(aabb_min.z(), aabb_max.z());

  const double dc = (config.gray_level - 0.5) / kShC0;
  const double logit_rgb = logit(config.opacity_rgb);
  const double gap_raw = softplus_inv(logit_rgb - logit(config.opacity_thermal));

  TemporalOpacity plateau;
  plateau.t_appear = 0.0;
  plateau.span_raw = softplus_inv(1.0);
  plateau.width_appear_raw = softplus_inv(0.1 - 1e-3);
  plateau.width_disappear_raw = plateau.width_appear_raw;

  set.primitives.reserve(config.count);
  for (int i = 0; i < config.count; ++i) {
    GaussianPrimitive g = blank_primitive(sh_degree_rgb, sh_degree_thermal);
    g.position = {ux(rng), uy(rng), uz(rng)};
    g.opacity_logit = logit_rgb;
    g.opacity_gap_raw = gap_raw;
    for (int c = 0; c < 3; ++c) g.sh_rgb(0, c) = dc;
    g.sh_thermal[0] = dc;
    g.temporal = plateau;
    set.primitives.push_back(std::move(g));
  }
  assign_neighbor_scales(set);
  return set;
}

GaussianSet init_surface(const std::vector<Eigen::Vector3d>& point_hints, int random_count,
                         const Eigen::Vector3d& aabb_min, const Eigen::Vector3d& aabb_max,
                         int sh_degree_rgb, int sh_degree_thermal, std::mt19937_64& rng) {
  if (point_hints.empty() && random_count <= 0)
    throw std::invalid_argument("init_surface: need point hints or a positive random count");
  if (!((aabb_max - aabb_min).array() > 0.0).all())
    throw std::invalid_argument("init_surface: degenerate AABB");

  GaussianSet set;
  set.kind = SetKind::Surface;
  set.scene_extent = (aabb_max - aabb_min).norm();
  set.sh_degree_rgb = sh_degree_rgb;
  set.sh_degree_thermal = sh_degree_thermal;

  std::vector<Eigen::Vector3d> positions = point_hints;
  if (positions.empty()) {
    std::uniform_real_distribution<double> ux(aabb_min.x(), aabb_max.x());
    std::uniform_real_distribution<double> uy(aabb_min.y(), aabb_max.y());
    std::uniform_real_distribution<double> uz(aabb_min.z(), aabb_max.z());
    positions.reserve(random_count);
    for (int i = 0; i < random_count; ++i) positions.push_back({ux(rng), uy(rng), uz(rng)});
  }

  std::uniform_real_distribution<double> ucolor(0.35, 0.65);
  set.primitives.reserve(positions.size());
  for (const Eigen::Vector3d& p : positions) {
    GaussianPrimitive g = blank_primitive(sh_degree_rgb, sh_degree_thermal);
    g.position = p;
    g.opacity_logit = logit(0.1);
    for (int c = 0; c < 3; ++c) g.sh_rgb(0, c) = (ucolor(rng) - 0.5) / kShC0;
    g.sh_thermal[0] = (ucolor(rng) - 0.5) / kShC0;
    set.primitives.push_back(std::move(g));
  }
  assign_neighbor_scales(set);
  return set;
}

void DensifyStats::resize_to(std::size_t n) {
  grad_norm_sum.assign(n, 0.0);
  seen.assign(n, 0);
}

void DensifyStats::accumulate(const SetGrad& grads, double half_diagonal) {
  const std::size_t n = std::min(grad_norm_sum.size(), grads.screen_grad_norm.size());
  for (std::size_t i = 0; i < n; ++i) {
    const double v = grads.screen_grad_norm[i];
    if (v > 0.0) {
      grad_norm_sum[i] += v * half_diagonal;
      seen[i] += 1;
    }
  }
}

void densify_and_prune(GaussianSet& set, AdamSetState& adam, DensifyStats& stats,
                       const DensifyConfig& config, double scene_extent, std::mt19937_64& rng) {
  const std::size_t n = set.size();
  if (stats.grad_norm_sum.size() != n || adam.m.size() != n)
    throw std::invalid_argument("densify_and_prune: stats/state size mismatch");

  std::normal_distribution<double> normal(0.0, 1.0);
  const double size_limit = config.percent_dense * scene_extent;

  std::vector<GaussianPrimitive> prims;
  std::vector<PrimitiveGrad> m_rows, v_rows;
  std::vector<std::size_t> clones;
  prims.reserve(n + 8);
  m_rows.reserve(n + 8);
  v_rows.reserve(n + 8);

  for (std::size_t i = 0; i < n; ++i) {
    const GaussianPrimitive& g = set.primitives[i];
    const double mean_grad =
        stats.seen[i] > 0 ? stats.grad_norm_sum[i] / stats.seen[i] : 0.0;
    const bool hot = mean_grad > config.grad_threshold;
    const bool large = g.log_scale.array().exp().maxCoeff() > size_limit;

    if (hot && large) {
      // Split: two children sampled from the parent's own footprint,
      // scales shrunk so the pair covers roughly the same volume.
      const Eigen::Matrix3d r = quat_to_rotation(g.rotation);
      const Eigen::Vector3d s = g.log_scale.array().exp();
      for (int child = 0; child < 2; ++child) {
        GaussianPrimitive c = g;
        const Eigen::Vector3d e(normal(rng), normal(rng), normal(rng));
        c.position = g.position + r * (s.cwiseProduct(e));
        c.log_scale = g.log_scale.array() - std::log(1.6);
        prims.push_back(std::move(c));
        m_rows.push_back(adam.m[i]);
        v_rows.push_back(adam.v[i]);
      }
    } else {
      prims.push_back(g);
      m_rows.push_back(adam.m[i]);
      v_rows.push_back(adam.v[i]);
      if (hot) clones.push_back(i);
    }
  }
  for (std::size_t i : clones) {
    prims.push_back(set.primitives[i]);
    m_rows.push_back(adam.m[i]);
    v_rows.push_back(adam.v[i]);
  }

  // Prune transparent primitives (RGB opacity, the larger of the two).
  std::vector<GaussianPrimitive> kept;
  std::vector<PrimitiveGrad> kept_m, kept_v;
  kept.reserve(prims.size());
  kept_m.reserve(prims.size());
  kept_v.reserve(prims.size());
  for (std::size_t i = 0; i < prims.size(); ++i) {
    if (prims[i].opacity(Modality::RGB, set.kind) < config.min_opacity) continue;
    kept.push_back(std::move(prims[i]));
    kept_m.push_back(std::move(m_rows[i]));
    kept_v.push_back(std::move(v_rows[i]));
  }

  set.primitives = std::move(kept);
  adam.m = std::move(kept_m);
  adam.v = std::move(kept_v);
  stats.resize_to(set.size());
}

std::string loss_log_header() {
  return "iteration,render,smoke_alpha,smoke_color,mono,depth,mask,total\n";
}

std::string loss_row_to_csv(const LossRow& row) {
  std::ostringstream out;
  out.precision(17);
  out << row.iteration << ',' << row.terms.render << ',' << row.terms.smoke_alpha << ','
      << row.terms.smoke_color << ',' << row.terms.mono << ',' << row.terms.depth << ','
      << row.terms.mask << ',' << row.total << '\n';
  return out.str();
}

StageResult run_stage2(const Dataset& dataset, const TrainConfig& config) {
  validate(config);
  const std::vector<int> thermal = dataset.frames_of(Modality::Thermal);
  if (thermal.size() < 2)
    throw std::invalid_argument("stage 2 needs at least two thermal frames, got " +
                                std::to_string(thermal.size()));

  std::mt19937_64 rng(config.seed);
  const double extent = dataset.scene_extent();

  StageResult result;
  Scene& scene = result.scene;
  scene.surface = init_surface(dataset.points, config.surface_init_count, dataset.aabb_min,
                               dataset.aabb_max, config.sh_degree_rgb, config.sh_degree_thermal,
                               rng);
  scene.surface.scene_extent = extent;
  scene.smoke.scene_extent = extent;
  scene.smoke.sh_degree_rgb = config.sh_degree_rgb;
  scene.smoke.sh_degree_thermal = config.sh_degree_thermal;
  scene.deform = DeformField(DeformConfig{}, config.seed);

  AdamSetState adam = make_adam_state(scene.surface);
  DensifyStats stats;
  stats.resize_to(scene.surface.size());
  const int iters = config.iterations_stage2;
  const int densify_stop = config.densify.stop < 0 ? iters / 2 : config.densify.stop;
  std::uniform_int_distribution<std::size_t> pick(0, thermal.size() - 1);

  for (int it = 1; it <= iters; ++it) {
    const FrameBundle& frame = dataset.frames[thermal[pick(rng)]];
    const Camera& cam = frame.camera;

    const RenderOutput out = render(scene, cam, frame.time, RenderMode::SurfaceOnly);
    Image grad_color(cam.width, cam.height, cam.image_channels());
    LossRow row;
    row.iteration = it;
    row.terms.render = render_loss(out.color, frame.image, config.weights.dssim, grad_color);
    row.total = total_loss(row.terms, config.weights);

    scale_in_place(grad_color, config.weights.render);
    RenderGrads rg;
    rg.color = &grad_color;
    const SceneGrad grads =
        render_backward(scene, cam, frame.time, RenderMode::SurfaceOnly, out, rg);

    stats.accumulate(grads.surface, 0.5 * std::hypot(cam.width, cam.height));
    const GroupLearningRates lrs =
        group_lrs(config.lr, position_lr(config.lr, extent, it, iters), 1.0);
    adam_step(scene.surface, grads.surface, adam, lrs);

    if (it >= config.densify.start && it <= densify_stop && it % config.densify.interval == 0)
      densify_and_prune(scene.surface, adam, stats, config.densify, extent, rng);

    result.log.push_back(std::move(row));
  }
  return result;
}

StageResult run_stage3(const Dataset& dataset, const GaussianSet& surface_init,
                       const TrainConfig& config,
                       const std::optional<std::filesystem::path>& checkpoint_dir) {
  validate(config);
  std::vector<int> frames;
  for (std::size_t i = 0; i < dataset.frames.size(); ++i)
    if (!config.rgb_only || dataset.frames[i].camera.modality == Modality::RGB)
      frames.push_back(static_cast<int>(i));
  if (frames.empty()) throw std::invalid_argument("stage 3 has no frames to train on");

  std::mt19937_64 rng(config.seed);
  const double extent = dataset.scene_extent();

  StageResult result;
  Scene& scene = result.scene;
  scene.surface = surface_init;
  scene.surface.kind = SetKind::Surface;
  scene.surface.scene_extent = extent;
  if (config.smoke_init.count > 0) {
    scene.smoke = init_smoke(config.smoke_init, dataset.aabb_min, dataset.aabb_max,
                             config.sh_degree_rgb, config.sh_degree_thermal, rng);
  } else {
    scene.smoke.sh_degree_rgb = config.sh_degree_rgb;
    scene.smoke.sh_degree_thermal = config.sh_degree_thermal;
  }
  scene.smoke.scene_extent = extent;
  scene.deform = DeformField(DeformConfig{}, config.seed);

  AdamSetState adam_surface = make_adam_state(scene.surface);
  AdamSetState adam_smoke = make_adam_state(scene.smoke);
  AdamDeformState adam_deform = make_adam_state(scene.deform);
  DensifyStats stats_surface, stats_smoke;
  stats_surface.resize_to(scene.surface.size());
  stats_smoke.resize_to(scene.smoke.size());

  const int iters = config.iterations_stage3;
  const int densify_stop = config.densify.stop < 0 ? iters / 2 : config.densify.stop;
  std::uniform_int_distribution<std::size_t> pick(0, frames.size() - 1);
  const bool have_smoke = scene.smoke.size() > 0;

  auto save_state = [&](const std::vector<LossRow>& log) {
    if (!checkpoint_dir) return;
    save_checkpoint(scene, *checkpoint_dir);
    write_loss_log(*checkpoint_dir / "loss_log.csv", log);
  };

  for (int it = 1; it <= iters; ++it) {
    const FrameBundle& frame = dataset.frames[frames[pick(rng)]];
    const Camera& cam = frame.camera;
    const double half_diag = 0.5 * std::hypot(cam.width, cam.height);

    try {
      LossRow row;
      row.iteration = it;

      const RenderOutput out = render(scene, cam, frame.time, RenderMode::Combined);
      Image grad_color(cam.width, cam.height, cam.image_channels());
      row.terms.render = render_loss(out.color, frame.image, config.weights.dssim, grad_color);
      scale_in_place(grad_color, config.weights.render);
      RenderGrads rg;
      rg.color = &grad_color;
      SceneGrad grads = render_backward(scene, cam, frame.time, RenderMode::Combined, out, rg);

      if (frame.mask && config.weights.mask > 0.0) {
        const RenderOutput so = render(scene, cam, frame.time, RenderMode::SmokeOnly);
        Image grad_accum(cam.width, cam.height, 1);
        row.terms.mask = mask_loss(so.accumulation, *frame.mask, grad_accum);
        scale_in_place(grad_accum, config.weights.mask);
        RenderGrads mg;
        mg.accumulation = &grad_accum;
        grads.add(render_backward(scene, cam, frame.time, RenderMode::SmokeOnly, so, mg));
      }

      if (!config.rgb_only && frame.depth && config.weights.depth > 0.0 &&
          cam.modality == Modality::Thermal) {
        const RenderOutput su = render(scene, cam, frame.time, RenderMode::SurfaceOnly);
        Image valid(cam.width, cam.height, 1);
        for (int y = 0; y < cam.height; ++y)
          for (int x = 0; x < cam.width; ++x)
            valid.at(x, y) =
                su.accumulation.at(x, y) > 0.5 && std::isfinite(frame.depth->at(x, y)) ? 1.0 : 0.0;
        Image grad_depth(cam.width, cam.height, 1);
        row.terms.depth = depth_loss(su.depth, *frame.depth, valid, grad_depth);
        scale_in_place(grad_depth, config.weights.depth);
        RenderGrads dg;
        dg.depth = &grad_depth;
        grads.add(render_backward(scene, cam, frame.time, RenderMode::SurfaceOnly, su, dg));
      }

      if (have_smoke) {
        if (config.weights.smoke_alpha > 0.0) {
          SetGrad g = zero_grad_like(scene.smoke);
          row.terms.smoke_alpha = smoke_alpha_loss(scene.smoke, config.smoke_alpha_modality, g);
          grads.smoke.add_scaled(g, config.weights.smoke_alpha);
        }
        if (config.weights.smoke_color > 0.0) {
          SetGrad g = zero_grad_like(scene.smoke);
          row.terms.smoke_color = smoke_color_loss(scene.smoke, g);
          grads.smoke.add_scaled(g, config.weights.smoke_color);
        }
        if (config.weights.mono > 0.0) {
          SetGrad g = zero_grad_like(scene.smoke);
          row.terms.mono = mono_loss(scene.smoke, g);
          grads.smoke.add_scaled(g, config.weights.mono);
        }
      }

      row.total = total_loss(row.terms, config.weights);

      // Stage-2 output is refined, not re-learned: surface steps at a tenth
      // of the smoke rates.
      const double pos_lr = position_lr(config.lr, extent, it, iters);
      adam_step(scene.surface, grads.surface, adam_surface,
                group_lrs(config.lr, pos_lr, 0.1));
      if (have_smoke) {
        adam_step(scene.smoke, grads.smoke, adam_smoke, group_lrs(config.lr, pos_lr, 1.0));
        adam_step(scene.deform, grads.deform, adam_deform, config.lr.deform);
      }

      stats_surface.accumulate(grads.surface, half_diag);
      stats_smoke.accumulate(grads.smoke, half_diag);
      if (it >= config.densify.start && it <= densify_stop &&
          it % config.densify.interval == 0) {
        densify_and_prune(scene.surface, adam_surface, stats_surface, config.densify, extent, rng);
        if (have_smoke)
          densify_and_prune(scene.smoke, adam_smoke, stats_smoke, config.densify, extent, rng);
      }

      result.log.push_back(std::move(row));
    } catch (const TrainingDivergence&) {
      save_state(result.log);
      throw;
    }

    if (checkpoint_dir && config.checkpoint_interval > 0 &&
        it % config.checkpoint_interval == 0)
      save_state(result.log);
  }

  save_state(result.log);
  return result;
}

}  // namespace splat
