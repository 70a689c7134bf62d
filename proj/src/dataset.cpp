#include "splat/dataset.hpp"

#include <fstream>
#include <json.hpp>

#include "splat/errors.hpp"
#include "splat/image.hpp"

namespace splat {

namespace {

namespace fs = std::filesystem;
using nlohmann::json;

Eigen::Vector3d vec3_from_json(const json& j, const std::string& what) {
  if (!j.is_array() || j.size() != 3)
    throw LoadError(what + " must be an array of 3 numbers");
  return {j[0].get<double>(), j[1].get<double>(), j[2].get<double>()};
}

Camera camera_from_json(const json& j, const std::string& frame_name) {
  Camera cam;
  try {
    cam.fx = j.at("fx").get<double>();
    cam.fy = j.at("fy").get<double>();
    cam.cx = j.at("cx").get<double>();
    cam.cy = j.at("cy").get<double>();
    cam.width = j.at("width").get<int>();
    cam.height = j.at("height").get<int>();
    const json& rot = j.at("rotation");
    if (!rot.is_array() || rot.size() != 9)
      throw LoadError("rotation must hold 9 row-major entries");
    for (int r = 0; r < 3; ++r)
      for (int c = 0; c < 3; ++c) cam.rotation(r, c) = rot[r * 3 + c].get<double>();
    cam.translation = vec3_from_json(j.at("translation"), "translation");
  } catch (const json::exception& e) {
    throw LoadError("frame " + frame_name + ": bad camera: " + e.what());
  }
  if (cam.width <= 0 || cam.height <= 0 || cam.fx <= 0.0 || cam.fy <= 0.0)
    throw LoadError("frame " + frame_name + ": camera dimensions and focal lengths must be positive");
  if (!cam.rotation.allFinite() || !cam.translation.allFinite() || !std::isfinite(cam.fx) ||
      !std::isfinite(cam.fy) || !std::isfinite(cam.cx) || !std::isfinite(cam.cy))
    throw LoadError("frame " + frame_name + ": camera pose has non-finite entries");
  return cam;
}

Image load_image_checked(const fs::path& path, const std::string& frame_name,
                         const char* role) {
  if (!fs::exists(path))
    throw LoadError("frame " + frame_name + ": missing " + role + " file " + path.string());
  try {
    if (path.extension() == ".pfm") return read_pfm(path);
    return read_png(path);
  } catch (const std::exception& e) {
    throw LoadError("frame " + frame_name + ": cannot read " + role + ": " + e.what());
  }
}

}  // namespace

std::vector<int> Dataset::frames_of(Modality m) const {
  std::vector<int> out;
  for (std::size_t i = 0; i < frames.size(); ++i)
    if (frames[i].camera.modality == m) out.push_back(static_cast<int>(i));
  return out;
}

Dataset load_dataset(const fs::path& manifest_path) {
  std::ifstream f(manifest_path, std::ios::binary);
  if (!f) throw LoadError("cannot open manifest: " + manifest_path.string());

  json doc;
  try {
    doc = json::parse(f);
  } catch (const json::parse_error& e) {
    throw ParseError("malformed manifest JSON: " + std::string(e.what()),
                     e.byte > 0 ? static_cast<std::size_t>(e.byte - 1) : 0);
  }

  if (!doc.contains("format_version") || !doc["format_version"].is_number_integer())
    throw VersionError("manifest lacks a format_version");
  const int version = doc["format_version"].get<int>();
  if (version != kManifestFormatVersion)
    throw VersionError("unsupported manifest format_version " + std::to_string(version));

  const fs::path base = manifest_path.parent_path();
  Dataset ds;
  ds.name = doc.value("name", std::string("unnamed"));
  if (doc.contains("scene_aabb")) {
    ds.aabb_min = vec3_from_json(doc["scene_aabb"].at("min"), "scene_aabb.min");
    ds.aabb_max = vec3_from_json(doc["scene_aabb"].at("max"), "scene_aabb.max");
    if (!((ds.aabb_max - ds.aabb_min).array() > 0.0).all())
      throw LoadError("scene_aabb must have positive extent on every axis");
  }
  if (doc.contains("points"))
    for (const json& p : doc["points"]) ds.points.push_back(vec3_from_json(p, "point"));

  if (!doc.contains("frames") || !doc["frames"].is_array() || doc["frames"].empty())
    throw LoadError("manifest holds no frames");

  for (const json& jf : doc["frames"]) {
    FrameBundle frame;
    frame.name = jf.value("image", std::string("frame ") + std::to_string(ds.frames.size()));

    const std::string modality = jf.value("modality", std::string());
    if (modality == "rgb")
      frame.camera.modality = Modality::RGB;
    else if (modality == "thermal")
      frame.camera.modality = Modality::Thermal;
    else
      throw LoadError("frame " + frame.name + ": modality must be 'rgb' or 'thermal'");

    if (!jf.contains("camera")) throw LoadError("frame " + frame.name + ": missing camera");
    const Modality m = frame.camera.modality;
    frame.camera = camera_from_json(jf["camera"], frame.name);
    frame.camera.modality = m;

    if (!jf.contains("time") || !jf["time"].is_number())
      throw LoadError("frame " + frame.name + ": missing time");
    frame.time = jf["time"].get<double>();
    if (!std::isfinite(frame.time) || frame.time < 0.0 || frame.time > 1.0)
      throw LoadError("frame " + frame.name + ": time must lie in [0, 1]");

    if (!jf.contains("image")) throw LoadError("frame " + frame.name + ": missing image");
    frame.image = load_image_checked(base / jf["image"].get<std::string>(), frame.name, "image");
    if (frame.image.width() != frame.camera.width || frame.image.height() != frame.camera.height)
      throw LoadError("frame " + frame.name + ": image size does not match the camera");
    if (frame.image.channels() != frame.camera.image_channels())
      throw LoadError("frame " + frame.name + ": image channel count does not match the modality");

    if (jf.contains("mask")) {
      Image mask = load_image_checked(base / jf["mask"].get<std::string>(), frame.name, "mask");
      if (mask.width() != frame.camera.width || mask.height() != frame.camera.height ||
          mask.channels() != 1)
        throw LoadError("frame " + frame.name + ": mask must be single-channel at camera size");
      frame.mask = std::move(mask);
    }
    if (jf.contains("depth")) {
      Image depth = load_image_checked(base / jf["depth"].get<std::string>(), frame.name, "depth");
      if (depth.width() != frame.camera.width || depth.height() != frame.camera.height ||
          depth.channels() != 1)
        throw LoadError("frame " + frame.name + ": depth must be single-channel at camera size");
      frame.depth = std::move(depth);
    }
    if (jf.contains("clear")) {
      Image clear = load_image_checked(base / jf["clear"].get<std::string>(), frame.name, "clear");
      if (clear.width() != frame.camera.width || clear.height() != frame.camera.height ||
          clear.channels() != frame.camera.image_channels())
        throw LoadError("frame " + frame.name + ": clear plate must match the capture layout");
      frame.clear = std::move(clear);
    }
    ds.frames.push_back(std::move(frame));
  }
  return ds;
}

}  // namespace splat
