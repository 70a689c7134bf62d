#pragma once

#include <string>
#include <vector>

#include <json.hpp>

#include "splat/dataset.hpp"
#include "splat/render.hpp"

namespace splat {

/// Per-frame evaluation: surface-only render against the clear ground
/// truth (decomposition quality) and combined render against the capture.
struct FrameEval {
  int frame_index = 0;
  Modality modality = Modality::RGB;
  double time = 0.0;
  double psnr_clear = 0.0;
  double ssim_clear = 0.0;
  double psnr_input = 0.0;
  double ssim_input = 0.0;
  bool has_clear = false;
};

std::vector<FrameEval> evaluate_scene(const Scene& scene, const Dataset& dataset);

/// Mean decomposition PSNR over RGB frames that carry clear ground truth.
double mean_clear_psnr_rgb(const std::vector<FrameEval>& rows);

std::string eval_rows_to_csv(const std::vector<FrameEval>& rows);
nlohmann::json eval_summary_json(const std::vector<FrameEval>& rows);

}  // namespace splat
