#pragma once

#include <Eigen/Core>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "splat/types.hpp"

namespace splat {

/// A loaded multi-modal capture: frames with poses, timestamps and the
/// optional supervision maps, plus scene bounds and point hints used to
/// seed optimization.
struct Dataset {
  std::string name;
  Eigen::Vector3d aabb_min = Eigen::Vector3d::Zero();
  Eigen::Vector3d aabb_max = Eigen::Vector3d::Ones();
  std::vector<Eigen::Vector3d> points;  // optional initialization hints
  std::vector<FrameBundle> frames;

  double scene_extent() const { return (aabb_max - aabb_min).norm(); }
  std::vector<int> frames_of(Modality m) const;
};

/// Read a manifest (JSON) and every asset it references. Images arrive in
/// [0,1]; depth maps keep scene units. Throws LoadError naming the frame on
/// missing files, dimension mismatches or non-finite poses.
Dataset load_dataset(const std::filesystem::path& manifest_path);

inline constexpr int kManifestFormatVersion = 1;

}  // namespace splat
