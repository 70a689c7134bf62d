#pragma once

#include <filesystem>

#include "splat/render.hpp"

namespace splat {

/// Write a scene to `dir` as two binary PLY payloads (surface.ply,
/// smoke.ply, double-precision properties for bit-exact round-trips) plus
/// checkpoint.json carrying set metadata and the deformation weights.
void save_checkpoint(const Scene& scene, const std::filesystem::path& dir);

/// Inverse of save_checkpoint. Throws ParseError (with byte offset) on
/// malformed payloads, VersionError on format_version mismatch or on a
/// smoke payload lacking the temporal block.
Scene load_checkpoint(const std::filesystem::path& dir);

inline constexpr int kCheckpointFormatVersion = 1;

}  // namespace splat
