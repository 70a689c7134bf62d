#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <Eigen/Core>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "splat/checkpoint.hpp"
#include "splat/dataset.hpp"
#include "splat/errors.hpp"
#include "splat/image.hpp"
#include "splat/metrics.hpp"
#include "splat/render.hpp"
#include "splat/sh.hpp"
#include "splat/synth.hpp"
#include "test_util.hpp"

using namespace splat;
namespace fs = std::filesystem;

namespace {

SceneSpec small_spec() {
  SceneSpec spec;
  spec.seed = 11;
  spec.name = "tiny";
  spec.surface_count = 140;
  spec.blob_count = 2;
  spec.particles_per_blob = 8;
  spec.n_frames = 3;
  spec.rgb_size = 32;
  spec.thermal_size = 24;
  spec.sh_degree_rgb = 2;
  return spec;
}

// Default-density smoke at small resolution: the capture-corruption claims
// depend on how much smoke the default construction puts in view.
SceneSpec dense_spec() {
  SceneSpec spec = small_spec();
  spec.blob_count = 5;
  spec.particles_per_blob = 45;
  return spec;
}

bool sets_equal(const GaussianSet& a, const GaussianSet& b) {
  if (a.size() != b.size()) return false;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const auto& p = a.primitives[i];
    const auto& q = b.primitives[i];
    if (p.position != q.position || p.log_scale != q.log_scale || p.rotation != q.rotation)
      return false;
    if (p.opacity_logit != q.opacity_logit || p.opacity_gap_raw != q.opacity_gap_raw)
      return false;
    if (p.sh_rgb != q.sh_rgb || p.sh_thermal != q.sh_thermal) return false;
  }
  return true;
}

std::vector<char> file_bytes(const fs::path& path) {
  std::ifstream f(path, std::ios::binary);
  REQUIRE(f.good());
  return std::vector<char>(std::istreambuf_iterator<char>(f), std::istreambuf_iterator<char>());
}

}  // namespace

TEST_CASE("scene spec survives a json round trip") {
  SceneSpec spec = small_spec();
  spec.drift_speed = 0.4;
  spec.opacity_jitter = true;
  spec.opacity_jitter_amount = 0.2;
  const SceneSpec back = scene_spec_from_json(scene_spec_to_json(spec));
  CHECK(back.seed == spec.seed);
  CHECK(back.name == spec.name);
  CHECK(back.surface_count == spec.surface_count);
  CHECK(back.blob_count == spec.blob_count);
  CHECK(back.particles_per_blob == spec.particles_per_blob);
  CHECK(back.drift_speed == spec.drift_speed);
  CHECK(back.growth_rate == spec.growth_rate);
  CHECK(back.opacity_rgb_min == spec.opacity_rgb_min);
  CHECK(back.opacity_rgb_max == spec.opacity_rgb_max);
  CHECK(back.opacity_thermal == spec.opacity_thermal);
  CHECK(back.smoke_gray == spec.smoke_gray);
  CHECK(back.opacity_jitter == spec.opacity_jitter);
  CHECK(back.opacity_jitter_amount == spec.opacity_jitter_amount);
  CHECK(back.orbit_radius == spec.orbit_radius);
  CHECK(back.orbit_height == spec.orbit_height);
  CHECK(back.n_frames == spec.n_frames);
  CHECK(back.rgb_size == spec.rgb_size);
  CHECK(back.thermal_size == spec.thermal_size);
  CHECK(back.sh_degree_rgb == spec.sh_degree_rgb);
  CHECK(back.sh_degree_thermal == spec.sh_degree_thermal);
}

TEST_CASE("scene spec parsing rejects unknown keys and invalid values") {
  const nlohmann::json base = scene_spec_to_json(small_spec());

  nlohmann::json j = base;
  j["blob_radius"] = 0.5;
  CHECK_THROWS_AS(scene_spec_from_json(j), std::invalid_argument);

  j = base;
  j["n_frames"] = 1;
  CHECK_THROWS_AS(scene_spec_from_json(j), std::invalid_argument);

  j = base;
  j["surface_count"] = 50;
  CHECK_THROWS_AS(scene_spec_from_json(j), std::invalid_argument);

  j = base;
  j["opacity_thermal"] = 0.4;  // not below opacity_rgb_min
  CHECK_THROWS_AS(scene_spec_from_json(j), std::invalid_argument);

  j = base;
  j["seed"] = "eleven";
  CHECK_THROWS_AS(scene_spec_from_json(j), std::invalid_argument);

  CHECK_THROWS_AS(scene_spec_from_json(nlohmann::json::array()), std::invalid_argument);
}

TEST_CASE("scene generation is deterministic in the seed") {
  const SceneSpec spec = small_spec();
  const GeneratedScene a = gen_scene(spec);
  const GeneratedScene b = gen_scene(spec);
  CHECK(sets_equal(a.surface, b.surface));
  CHECK(a.aabb_min == b.aabb_min);
  CHECK(a.aabb_max == b.aabb_max);
  REQUIRE(a.smoke.blobs.size() == b.smoke.blobs.size());
  for (std::size_t i = 0; i < a.smoke.blobs.size(); ++i) {
    const SmokeBlob& x = a.smoke.blobs[i];
    const SmokeBlob& y = b.smoke.blobs[i];
    CHECK(x.center0 == y.center0);
    CHECK(x.velocity == y.velocity);
    CHECK(x.radius0 == y.radius0);
    CHECK(x.growth == y.growth);
    CHECK(x.offsets == y.offsets);
    CHECK(x.opacity_logits == y.opacity_logits);
  }
  CHECK(sets_equal(a.smoke.at(0.37), b.smoke.at(0.37)));

  SceneSpec other = spec;
  other.seed = 12;
  const GeneratedScene c = gen_scene(other);
  CHECK(!sets_equal(a.surface, c.surface));
}

TEST_CASE("zero drift and zero growth freeze the smoke in time") {
  SceneSpec spec = small_spec();
  spec.drift_speed = 0.0;
  spec.growth_rate = 0.0;
  const GeneratedScene scene = gen_scene(spec);
  const GaussianSet at0 = scene.smoke.at(0.0);
  const GaussianSet late = scene.smoke.at(0.62);
  CHECK(sets_equal(at0, late));
}

TEST_CASE("smoke sets follow the closed-form advection of each blob") {
  const GeneratedScene scene = gen_scene(small_spec());
  const double t = 0.37;
  const GaussianSet set = scene.smoke.at(t);

  std::size_t k = 0;
  for (const SmokeBlob& blob : scene.smoke.blobs) {
    for (std::size_t j = 0; j < blob.offsets.size(); ++j, ++k) {
      REQUIRE(k < set.size());
      const GaussianPrimitive& g = set.primitives[k];
      // Rigid cloud around a linearly drifting center, offsets scaled with
      // the linearly growing radius.
      const double scale_ratio = 1.0 + blob.growth * t;
      const Eigen::Vector3d expect_pos =
          blob.center0 + blob.velocity * t + blob.offsets[j] * scale_ratio;
      CHECK((g.position - expect_pos).norm() < 1e-12);
      const Eigen::Vector3d expect_ls =
          blob.log_scales[j].array() + std::log(scale_ratio);
      CHECK((g.log_scale - expect_ls).norm() < 1e-12);
      CHECK(g.opacity_logit == blob.opacity_logits[j]);
      CHECK(g.opacity_gap_raw == blob.opacity_gap_raws[j]);
      for (int c = 0; c < 3; ++c)
        CHECK(g.sh_rgb(0, c) == doctest::Approx((blob.colors[j][c] - 0.5) / kShC0).epsilon(1e-12));
      CHECK(g.sh_thermal[0] ==
            doctest::Approx((blob.colors[j].mean() - 0.5) / kShC0).epsilon(1e-12));
      REQUIRE(g.temporal.has_value());
      CHECK(g.temporal->t_appear == 0.0);
      // The plateau covers the whole capture interval.
      CHECK(temporal_multiplier(*g.temporal, 0.5) == 1.0);
      CHECK(temporal_multiplier(*g.temporal, 0.99) == 1.0);
    }
  }
  CHECK(k == set.size());
}

TEST_CASE("opacity jitter perturbs opacities only, deterministically") {
  SceneSpec spec = small_spec();
  spec.opacity_jitter = true;
  const GeneratedScene jittered = gen_scene(spec);
  spec.opacity_jitter = false;
  const GeneratedScene plain = gen_scene(spec);

  const GaussianSet a = jittered.smoke.at(0.4);
  const GaussianSet b = plain.smoke.at(0.4);
  REQUIRE(a.size() == b.size());
  bool any_opacity_changed = false;
  for (std::size_t i = 0; i < a.size(); ++i) {
    CHECK(a.primitives[i].position == b.primitives[i].position);
    CHECK(a.primitives[i].log_scale == b.primitives[i].log_scale);
    CHECK(a.primitives[i].opacity_gap_raw == b.primitives[i].opacity_gap_raw);
    if (a.primitives[i].opacity_logit != b.primitives[i].opacity_logit)
      any_opacity_changed = true;
  }
  CHECK(any_opacity_changed);
  CHECK(sets_equal(jittered.smoke.at(0.4), jittered.smoke.at(0.4)));
}

TEST_CASE("generated datasets load cleanly and are byte-for-byte reproducible") {
  const SceneSpec spec = small_spec();
  const GeneratedScene scene = gen_scene(spec);
  const fs::path dir_a = testutil::scratch_dir("synth_a");
  const fs::path dir_b = testutil::scratch_dir("synth_b");
  const fs::path manifest_a = gen_dataset(scene, spec, dir_a);
  const fs::path manifest_b = gen_dataset(scene, spec, dir_b);

  CHECK(file_bytes(manifest_a) == file_bytes(manifest_b));
  CHECK(file_bytes(dir_a / "rgb" / "frame_000.png") == file_bytes(dir_b / "rgb" / "frame_000.png"));
  CHECK(file_bytes(dir_a / "depth" / "frame_001.pfm") ==
        file_bytes(dir_b / "depth" / "frame_001.pfm"));

  const Dataset ds = load_dataset(manifest_a);
  CHECK(ds.name == "tiny");
  REQUIRE(static_cast<int>(ds.frames.size()) == 2 * spec.n_frames);
  int n_rgb = 0, n_thermal = 0;
  for (const FrameBundle& f : ds.frames) {
    CHECK(f.time >= 0.0);
    CHECK(f.time <= 1.0);
    REQUIRE(f.clear.has_value());
    if (f.camera.modality == Modality::RGB) {
      ++n_rgb;
      CHECK(f.image.channels() == 3);
      CHECK(f.image.width() == spec.rgb_size);
      REQUIRE(f.mask.has_value());
      CHECK(!f.depth.has_value());
    } else {
      ++n_thermal;
      CHECK(f.image.channels() == 1);
      CHECK(f.image.width() == spec.thermal_size);
      REQUIRE(f.depth.has_value());
      CHECK(!f.mask.has_value());
    }
  }
  CHECK(n_rgb == spec.n_frames);
  CHECK(n_thermal == spec.n_frames);

  const Scene gt = load_checkpoint(dir_a / "gt_surface");
  CHECK(gt.surface.size() > 0);
  CHECK(gt.smoke.size() == 0);
  CHECK(ds.points.size() == (gt.surface.size() + 1) / 2);

  fs::remove_all(dir_a);
  fs::remove_all(dir_b);
}

TEST_CASE("stored clear plates match surface-only renders of the saved ground truth") {
  const SceneSpec spec = small_spec();
  const GeneratedScene scene = gen_scene(spec);
  const fs::path dir = testutil::scratch_dir("synth_clear");
  const Dataset ds = load_dataset(gen_dataset(scene, spec, dir));
  Scene gt = load_checkpoint(dir / "gt_surface");

  for (const FrameBundle& f : ds.frames) {
    const RenderOutput out = render(gt, f.camera, f.time, RenderMode::SurfaceOnly);
    REQUIRE(f.clear.has_value());
    REQUIRE(f.clear->size() == out.color.size());
    for (std::size_t i = 0; i < out.color.size(); ++i) {
      const double stored = f.clear->data()[i];
      const double requantized = quantize8(out.color.data()[i]) / 255.0;
      CHECK(stored == requantized);
    }
    if (f.camera.modality == Modality::Thermal) {
      REQUIRE(f.depth.has_value());
      for (std::size_t i = 0; i < out.depth.size(); ++i) {
        const double stored = f.depth->data()[i];
        const double through_float = static_cast<float>(out.depth.data()[i]);
        CHECK(stored == through_float);
      }
    }
  }
  fs::remove_all(dir);
}

TEST_CASE("masks are zero exactly where no smoke reaches the pixel") {
  const SceneSpec spec = dense_spec();
  const GeneratedScene scene = gen_scene(spec);
  const fs::path dir = testutil::scratch_dir("synth_mask");
  const Dataset ds = load_dataset(gen_dataset(scene, spec, dir));

  Scene full = load_checkpoint(dir / "gt_surface");
  int smoke_free = 0, smoke_covered = 0;
  for (const FrameBundle& f : ds.frames) {
    if (f.camera.modality != Modality::RGB) continue;
    full.smoke = scene.smoke.at(f.time);
    const RenderOutput out = render(full, f.camera, f.time, RenderMode::SmokeOnly);
    REQUIRE(f.mask.has_value());
    for (int y = 0; y < f.camera.height; ++y)
      for (int x = 0; x < f.camera.width; ++x) {
        const double accum = out.accumulation.at(x, y);
        const double mask = f.mask->at(x, y);
        if (accum == 0.0) {
          CHECK(mask == 0.0);
          ++smoke_free;
        } else if (accum >= 0.5) {
          CHECK(mask == quantize8(accum) / 255.0);
          ++smoke_covered;
        } else {
          CHECK(mask == 0.0);
        }
      }
  }
  // The scene must actually exercise both sides of the threshold.
  CHECK(smoke_free > 100);
  CHECK(smoke_covered > 100);
  fs::remove_all(dir);
}

TEST_CASE("smoke corrupts the rgb capture far more than the thermal one") {
  const SceneSpec spec = dense_spec();
  const GeneratedScene scene = gen_scene(spec);
  const fs::path dir = testutil::scratch_dir("synth_contrast");
  const Dataset ds = load_dataset(gen_dataset(scene, spec, dir));

  double rgb_sum = 0.0, thermal_sum = 0.0;
  int n_rgb = 0, n_thermal = 0;
  for (const FrameBundle& f : ds.frames) {
    const double p = psnr(f.image, *f.clear);
    if (f.camera.modality == Modality::RGB) {
      rgb_sum += p;
      ++n_rgb;
    } else {
      thermal_sum += p;
      ++n_thermal;
    }
  }
  CHECK(rgb_sum / n_rgb < 25.0);
  CHECK(thermal_sum / n_thermal > 35.0);
  fs::remove_all(dir);
}
