#include "splat/render.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <vector>

#include "splat/covariance.hpp"
#include "splat/parallel.hpp"
#include "splat/sh.hpp"

namespace splat {

namespace {

constexpr double kDilation = 0.3;        // px^2 added to cov2d
constexpr double kAlphaClamp = 0.99;     // max per-splat alpha
constexpr double kAlphaSkip = 1.0 / 255.0;
constexpr double kBboxSigmas = 3.5;      // > sqrt(2 ln 255), so the box is exact w.r.t. the skip rule
constexpr double kAccEps = 1e-8;

struct Geom {
  Splat2D splat;
  Eigen::Vector3d t_cam;
  Eigen::Matrix<double, 2, 3> m;  // J * W
  // Effective (deformed, for smoke) shape parameters.
  Eigen::Vector3d position;
  Eigen::Vector4d rotation;
  Eigen::Vector3d log_scale;
};

Eigen::Matrix<double, 2, 3> projection_jacobian(const Camera& cam, const Eigen::Vector3d& t) {
  const double z = t.z();
  Eigen::Matrix<double, 2, 3> j;
  j << cam.fx / z, 0.0, -cam.fx * t.x() / (z * z),
      0.0, cam.fy / z, -cam.fy * t.y() / (z * z);
  return j;
}

std::optional<Geom> project_geometry(const GaussianPrimitive& g, const Camera& cam, double time,
                                     const DeformField* deform, double scene_extent, SetKind kind,
                                     int source_index) {
  Geom geom;
  geom.position = g.position;
  geom.rotation = g.rotation;
  geom.log_scale = g.log_scale;
  if (kind == SetKind::Smoke && deform) {
    const DeformDelta delta = deform->evaluate(g.position, time);
    geom.position += delta.position;
    geom.log_scale += delta.log_scale;
    geom.rotation += delta.rotation;
  }

  geom.t_cam = cam.rotation * geom.position + cam.translation;
  if (geom.t_cam.z() <= 0.01 * scene_extent) return std::nullopt;

  geom.m = projection_jacobian(cam, geom.t_cam) * cam.rotation;
  const Eigen::Matrix3d sigma3 = covariance3d(geom.rotation, geom.log_scale);

  geom.splat.mean2d =
      Eigen::Vector2d(cam.fx * geom.t_cam.x() / geom.t_cam.z() + cam.cx,
                      cam.fy * geom.t_cam.y() / geom.t_cam.z() + cam.cy);
  geom.splat.cov2d = geom.m * sigma3 * geom.m.transpose();
  geom.splat.cov2d(0, 0) += kDilation;
  geom.splat.cov2d(1, 1) += kDilation;
  geom.splat.depth = geom.t_cam.z();
  geom.splat.source_index = source_index;
  geom.splat.source_set = kind;
  return geom;
}

// Everything the per-pixel loops need for one visible splat.
struct Prepared {
  Geom geom;
  Eigen::Matrix2d inv_cov;
  double alpha = 0.0;         // opacity x temporal multiplier, before falloff
  double q_threshold = 0.0;   // keep pixels with mahalanobis^2 <= this
  Eigen::VectorXd color;
  Eigen::Vector3d view_dir;
  double view_dist = 0.0;
  int x0 = 0, x1 = -1, y0 = 0, y1 = -1;
};

double splat_alpha(const GaussianPrimitive& g, SetKind kind, Modality modality, double time) {
  if (kind == SetKind::Surface) return sigmoid(g.opacity_logit);
  const double base = sigmoid(g.opacity_logit_for(modality, kind));
  return g.temporal ? base * temporal_multiplier(*g.temporal, time) : base;
}

const Eigen::MatrixXd& sh_coeffs_for(const GaussianPrimitive& g, Modality modality,
                                     Eigen::MatrixXd& thermal_storage) {
  if (modality == Modality::RGB) return g.sh_rgb;
  thermal_storage = g.sh_thermal;
  return thermal_storage;
}

struct PreparedScene {
  std::vector<Prepared> splats;           // depth-sorted front to back
  std::vector<std::vector<int>> rows;     // splat ids per image row
};

void append_set(const GaussianSet& set, const Camera& cam, double time, const DeformField* deform,
                const Eigen::Vector3d& cam_center, int width, int height,
                std::vector<Prepared>& out) {
  const int degree = cam.modality == Modality::RGB ? set.sh_degree_rgb : set.sh_degree_thermal;
  const DeformField* field = set.kind == SetKind::Smoke ? deform : nullptr;

  for (std::size_t i = 0; i < set.primitives.size(); ++i) {
    const GaussianPrimitive& g = set.primitives[i];
    const auto& coeff_rows = cam.modality == Modality::RGB ? g.sh_rgb.rows() : g.sh_thermal.size();
    if (coeff_rows != sh_coeff_count(degree))
      throw std::invalid_argument("primitive lacks SH coefficients for the camera modality");

    const double alpha = splat_alpha(g, set.kind, cam.modality, time);
    if (alpha < kAlphaSkip) continue;  // every pixel would fall below the skip threshold

    auto geom = project_geometry(g, cam, time, field, set.scene_extent, set.kind,
                                 static_cast<int>(i));
    if (!geom) continue;

    Prepared p;
    p.geom = *geom;
    p.alpha = alpha;
    p.q_threshold = 2.0 * std::log(255.0 * alpha);

    const Eigen::Matrix2d& cov = p.geom.splat.cov2d;
    const double det = cov(0, 0) * cov(1, 1) - cov(0, 1) * cov(1, 0);
    p.inv_cov << cov(1, 1) / det, -cov(0, 1) / det, -cov(1, 0) / det, cov(0, 0) / det;

    // Exact screen bounds: outside the +-3.5 sigma_max box the falloff alone
    // drops alpha' below 1/255.
    const double mid = 0.5 * (cov(0, 0) + cov(1, 1));
    const double disc = std::sqrt(std::max(0.0, 0.25 * (cov(0, 0) - cov(1, 1)) * (cov(0, 0) - cov(1, 1)) +
                                                     cov(0, 1) * cov(1, 0)));
    const double radius = kBboxSigmas * std::sqrt(mid + disc);
    p.x0 = std::max(0, static_cast<int>(std::ceil(p.geom.splat.mean2d.x() - radius)));
    p.x1 = std::min(width - 1, static_cast<int>(std::floor(p.geom.splat.mean2d.x() + radius)));
    p.y0 = std::max(0, static_cast<int>(std::ceil(p.geom.splat.mean2d.y() - radius)));
    p.y1 = std::min(height - 1, static_cast<int>(std::floor(p.geom.splat.mean2d.y() + radius)));
    if (p.x0 > p.x1 || p.y0 > p.y1) continue;

    const Eigen::Vector3d v = p.geom.position - cam_center;
    p.view_dist = v.norm();
    p.view_dir = v / p.view_dist;
    Eigen::MatrixXd thermal_storage;
    p.color = sh_eval(sh_coeffs_for(g, cam.modality, thermal_storage), degree, p.view_dir);

    out.push_back(std::move(p));
  }
}

PreparedScene prepare(const Scene& scene, const Camera& cam, double time, RenderMode mode) {
  PreparedScene ps;
  const Eigen::Vector3d center = cam.center();
  if (mode != RenderMode::SmokeOnly)
    append_set(scene.surface, cam, time, nullptr, center, cam.width, cam.height, ps.splats);
  if (mode != RenderMode::SurfaceOnly)
    append_set(scene.smoke, cam, time, &scene.deform, center, cam.width, cam.height, ps.splats);

  // Front-to-back order; stable sort keeps the surface-then-smoke source
  // order on exact depth ties.
  std::stable_sort(ps.splats.begin(), ps.splats.end(),
                   [](const Prepared& a, const Prepared& b) {
                     return a.geom.splat.depth < b.geom.splat.depth;
                   });

  ps.rows.resize(cam.height);
  for (int id = 0; id < static_cast<int>(ps.splats.size()); ++id)
    for (int y = ps.splats[id].y0; y <= ps.splats[id].y1; ++y) ps.rows[y].push_back(id);
  return ps;
}

}  // namespace

std::optional<Splat2D> project_gaussian(const GaussianPrimitive& g, const Camera& cam, double time,
                                        const DeformField* deform, double scene_extent,
                                        SetKind kind, int source_index) {
  auto geom = project_geometry(g, cam, time, kind == SetKind::Smoke ? deform : nullptr,
                               scene_extent, kind, source_index);
  if (!geom) return std::nullopt;
  return geom->splat;
}

RenderOutput render(const Scene& scene, const Camera& cam, double time, RenderMode mode) {
  const int width = cam.width, height = cam.height, channels = cam.image_channels();
  RenderOutput out;
  out.color = Image(width, height, channels);
  out.accumulation = Image(width, height, 1);
  out.depth = Image(width, height, 1);
  out.final_transmittance = Image(width, height, 1, 1.0);
  if (width <= 0 || height <= 0) return out;

  const PreparedScene ps = prepare(scene, cam, time, mode);

  parallel_chunks(height, kRenderChunks, [&](int, std::size_t row_begin, std::size_t row_end) {
    std::vector<double> color(channels);
    for (std::size_t y = row_begin; y < row_end; ++y) {
      const auto& row = ps.rows[y];
      for (int x = 0; x < width; ++x) {
        std::fill(color.begin(), color.end(), 0.0);
        double transmittance = 1.0;
        double depth_sum = 0.0;
        for (int id : row) {
          const Prepared& p = ps.splats[id];
          if (x < p.x0 || x > p.x1) continue;
          const Eigen::Vector2d d(x - p.geom.splat.mean2d.x(), y - p.geom.splat.mean2d.y());
          const double q = d.dot(p.inv_cov * d);
          if (q > p.q_threshold) continue;  // alpha' would fall below 1/255
          const double alpha = std::min(p.alpha * std::exp(-0.5 * q), kAlphaClamp);
          const double weight = alpha * transmittance;
          for (int c = 0; c < channels; ++c) color[c] += p.color[c] * weight;
          depth_sum += p.geom.splat.depth * weight;
          transmittance *= 1.0 - alpha;
        }
        const int xi = static_cast<int>(x), yi = static_cast<int>(y);
        for (int c = 0; c < channels; ++c) out.color.at(xi, yi, c) = color[c];
        // The exact complement of the transmittance product; equals the
        // accumulated alpha weights up to rounding.
        const double acc = 1.0 - transmittance;
        out.accumulation.at(xi, yi) = acc;
        out.depth.at(xi, yi) = depth_sum / (acc + kAccEps);
        out.final_transmittance.at(xi, yi) = transmittance;
      }
    }
  });
  return out;
}

namespace {

// Per-splat upstream gradients gathered over all pixels.
struct SplatAccum {
  Eigen::Vector2d g_mean2d = Eigen::Vector2d::Zero();
  Eigen::Matrix2d g_inv_cov = Eigen::Matrix2d::Zero();
  double g_alpha = 0.0;
  double g_depth = 0.0;
  Eigen::VectorXd g_color;
};

}  // namespace

SceneGrad render_backward(const Scene& scene, const Camera& cam, double time, RenderMode mode,
                          const RenderOutput& forward, const RenderGrads& grads) {
  const int width = cam.width, height = cam.height, channels = cam.image_channels();
  auto check_dims = [&](const Image* img, int want_channels, const char* name) {
    if (!img) return;
    if (img->width() != width || img->height() != height || img->channels() != want_channels)
      throw std::invalid_argument(std::string("gradient buffer dims mismatch: ") + name);
  };
  check_dims(grads.color, channels, "color");
  check_dims(grads.accumulation, 1, "accumulation");
  check_dims(grads.depth, 1, "depth");

  SceneGrad result;
  result.surface = zero_grad_like(scene.surface);
  result.smoke = zero_grad_like(scene.smoke);
  result.deform = scene.deform.zero_gradients();
  if (width <= 0 || height <= 0) return result;

  const PreparedScene ps = prepare(scene, cam, time, mode);
  const int n = static_cast<int>(ps.splats.size());
  if (n == 0) return result;

  // Phase 1: per-pixel pass gathering per-splat image-space gradients.
  // Chunks keep private accumulators, combined in chunk order below so the
  // result does not depend on the thread count.
  std::vector<std::vector<SplatAccum>> chunk_accums(kRenderChunks);
  parallel_chunks(height, kRenderChunks, [&](int chunk, std::size_t row_begin, std::size_t row_end) {
    auto& accums = chunk_accums[chunk];
    accums.resize(n);
    for (auto& a : accums) a.g_color = Eigen::VectorXd::Zero(channels);

    std::vector<double> g_col(channels), suffix_color(channels);
    for (std::size_t y = row_begin; y < row_end; ++y) {
      const auto& row = ps.rows[y];
      for (int x = 0; x < width; ++x) {
        const int xi = static_cast<int>(x), yi = static_cast<int>(y);
        for (int c = 0; c < channels; ++c)
          g_col[c] = grads.color ? grads.color->at(xi, yi, c) : 0.0;
        const double acc = forward.accumulation.at(xi, yi);
        const double g_depth_up = grads.depth ? grads.depth->at(xi, yi) : 0.0;
        const double g_depth_sum = g_depth_up / (acc + kAccEps);
        double g_acc = grads.accumulation ? grads.accumulation->at(xi, yi) : 0.0;
        g_acc -= g_depth_up * forward.depth.at(xi, yi) / (acc + kAccEps);

        bool any = g_depth_sum != 0.0 || g_acc != 0.0;
        for (int c = 0; c < channels && !any; ++c) any = g_col[c] != 0.0;
        if (!any) continue;

        // Back-to-front: rebuild each splat's transmittance by dividing the
        // final value by (1 - alpha), bounded below by 1 - 0.99.
        double t_cur = forward.final_transmittance.at(xi, yi);
        std::fill(suffix_color.begin(), suffix_color.end(), 0.0);
        double suffix_acc = 0.0, suffix_depth = 0.0;

        for (auto it = row.rbegin(); it != row.rend(); ++it) {
          const Prepared& p = ps.splats[*it];
          if (x < p.x0 || x > p.x1) continue;
          const Eigen::Vector2d d(x - p.geom.splat.mean2d.x(), y - p.geom.splat.mean2d.y());
          const double q = d.dot(p.inv_cov * d);
          if (q > p.q_threshold) continue;
          const double falloff = std::exp(-0.5 * q);
          const double raw_alpha = p.alpha * falloff;
          const double alpha = std::min(raw_alpha, kAlphaClamp);
          const double t_i = t_cur / (1.0 - alpha);
          const double weight = alpha * t_i;

          double g_alpha_prime = g_acc * (t_i - suffix_acc / (1.0 - alpha)) +
                                 g_depth_sum * (p.geom.splat.depth * t_i -
                                                suffix_depth / (1.0 - alpha));
          SplatAccum& a = accums[*it];
          for (int c = 0; c < channels; ++c) {
            g_alpha_prime += g_col[c] * (p.color[c] * t_i - suffix_color[c] / (1.0 - alpha));
            a.g_color[c] += g_col[c] * weight;
          }
          a.g_depth += g_depth_sum * weight;

          if (raw_alpha <= kAlphaClamp) {  // the clamp zeroes the falloff path
            a.g_alpha += g_alpha_prime * falloff;
            const double g_q = -0.5 * raw_alpha * g_alpha_prime;
            const Eigen::Vector2d lam_d = p.inv_cov * d;
            a.g_mean2d -= 2.0 * g_q * lam_d;
            a.g_inv_cov += g_q * (d * d.transpose());
          }

          for (int c = 0; c < channels; ++c) suffix_color[c] += p.color[c] * weight;
          suffix_acc += weight;
          suffix_depth += p.geom.splat.depth * weight;
          t_cur = t_i;
        }
      }
    }
  });

  std::vector<SplatAccum> accums(n);
  for (auto& a : accums) a.g_color = Eigen::VectorXd::Zero(channels);
  for (const auto& chunk : chunk_accums) {
    if (chunk.empty()) continue;
    for (int i = 0; i < n; ++i) {
      accums[i].g_mean2d += chunk[i].g_mean2d;
      accums[i].g_inv_cov += chunk[i].g_inv_cov;
      accums[i].g_alpha += chunk[i].g_alpha;
      accums[i].g_depth += chunk[i].g_depth;
      accums[i].g_color += chunk[i].g_color;
    }
  }

  // Phase 2: per-splat chain back to primitive parameters. Slots are
  // disjoint across splats; the deformation gradients get per-chunk buffers.
  std::vector<DeformGradients> chunk_deform(kRenderChunks);
  parallel_chunks(n, kRenderChunks, [&](int chunk, std::size_t begin, std::size_t end) {
    DeformGradients* dg = nullptr;
    for (std::size_t s = begin; s < end; ++s) {
      const Prepared& p = ps.splats[s];
      const SplatAccum& a = accums[s];
      const bool is_smoke = p.geom.splat.source_set == SetKind::Smoke;
      const GaussianSet& set = is_smoke ? scene.smoke : scene.surface;
      const GaussianPrimitive& g = set.primitives[p.geom.splat.source_index];
      SetGrad& out_set = is_smoke ? result.smoke : result.surface;
      PrimitiveGrad& pg = out_set.primitives[p.geom.splat.source_index];
      out_set.screen_grad_norm[p.geom.splat.source_index] += a.g_mean2d.norm();

      // Screen covariance chain: Lambda -> cov2d -> (M, Sigma3).
      const Eigen::Matrix2d g_cov2d = -p.inv_cov * a.g_inv_cov * p.inv_cov;
      const Eigen::Matrix3d sigma3 = covariance3d(p.geom.rotation, p.geom.log_scale);
      const Eigen::Matrix2d g_cov_sym = 0.5 * (g_cov2d + g_cov2d.transpose());
      const Eigen::Matrix3d g_sigma3 =
          p.geom.m.transpose() * g_cov_sym * p.geom.m;
      const Eigen::Matrix<double, 2, 3> g_m = 2.0 * g_cov_sym * p.geom.m * sigma3;
      const Eigen::Matrix<double, 2, 3> g_j = g_m * cam.rotation.transpose();

      // Camera-frame point: projection Jacobian doubles as dmean/dt.
      const Eigen::Vector3d& t = p.geom.t_cam;
      const double z = t.z(), z2 = z * z, z3 = z2 * z;
      const Eigen::Matrix<double, 2, 3> j = projection_jacobian(cam, t);
      Eigen::Vector3d g_t = j.transpose() * a.g_mean2d;
      g_t.x() += g_j(0, 2) * (-cam.fx / z2);
      g_t.y() += g_j(1, 2) * (-cam.fy / z2);
      g_t.z() += g_j(0, 0) * (-cam.fx / z2) + g_j(0, 2) * (2.0 * cam.fx * t.x() / z3) +
                 g_j(1, 1) * (-cam.fy / z2) + g_j(1, 2) * (2.0 * cam.fy * t.y() / z3);
      g_t.z() += a.g_depth;
      Eigen::Vector3d g_pos = cam.rotation.transpose() * g_t;

      // View-dependent color.
      const int degree = cam.modality == Modality::RGB ? set.sh_degree_rgb : set.sh_degree_thermal;
      Eigen::MatrixXd thermal_storage;
      const Eigen::MatrixXd& coeffs = sh_coeffs_for(g, cam.modality, thermal_storage);
      Eigen::MatrixXd g_coeffs;
      Eigen::Vector3d g_dir;
      sh_eval_backward(coeffs, degree, p.view_dir, a.g_color, g_coeffs, g_dir);
      g_pos += (g_dir - p.view_dir * p.view_dir.dot(g_dir)) / p.view_dist;
      if (cam.modality == Modality::RGB)
        pg.sh_rgb += g_coeffs;
      else
        pg.sh_thermal += g_coeffs.col(0);

      // Shape.
      Eigen::Vector4d g_quat;
      Eigen::Vector3d g_log_scale;
      covariance3d_backward(p.geom.rotation, p.geom.log_scale, g_sigma3, g_quat, g_log_scale);

      // Opacity.
      if (!is_smoke) {
        const double sig = sigmoid(g.opacity_logit);
        pg.opacity_logit += a.g_alpha * sig * (1.0 - sig);
      } else {
        const double logit = g.opacity_logit_for(cam.modality, SetKind::Smoke);
        const double sig = sigmoid(logit);
        const double mult = g.temporal ? temporal_multiplier(*g.temporal, time) : 1.0;
        const double g_logit = a.g_alpha * mult * sig * (1.0 - sig);
        pg.opacity_logit += g_logit;
        if (cam.modality == Modality::Thermal)
          pg.opacity_gap_raw -= g_logit * sigmoid(g.opacity_gap_raw);
        if (g.temporal) {
          const TemporalGrad tg =
              temporal_multiplier_backward(*g.temporal, time, a.g_alpha * sig);
          pg.temporal.t_appear += tg.t_appear;
          pg.temporal.width_appear_raw += tg.width_appear_raw;
          pg.temporal.span_raw += tg.span_raw;
          pg.temporal.width_disappear_raw += tg.width_disappear_raw;
        }
      }

      pg.rotation += g_quat;
      pg.log_scale += g_log_scale;
      if (is_smoke) {
        DeformDelta delta_grad;
        delta_grad.position = g_pos;
        delta_grad.log_scale = g_log_scale;
        delta_grad.rotation = g_quat;
        if (!dg) {
          chunk_deform[chunk] = scene.deform.zero_gradients();
          dg = &chunk_deform[chunk];
        }
        pg.position += g_pos + scene.deform.backward(g.position, time, delta_grad, *dg);
      } else {
        pg.position += g_pos;
      }
    }
  });
  for (auto& dg : chunk_deform)
    if (!dg.weights.empty()) result.deform.add(dg);

  return result;
}

}  // namespace splat
