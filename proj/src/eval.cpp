#include "splat/eval.hpp"

#include <cmath>
#include <sstream>

#include "splat/metrics.hpp"

namespace splat {

namespace {

const char* modality_name(Modality m) { return m == Modality::RGB ? "rgb" : "thermal"; }

double mean_of(const std::vector<double>& v) {
  if (v.empty()) return std::numeric_limits<double>::quiet_NaN();
  double s = 0.0;
  for (double x : v) s += x;
  return s / static_cast<double>(v.size());
}

}  // namespace

std::vector<FrameEval> evaluate_scene(const Scene& scene, const Dataset& dataset) {
  std::vector<FrameEval> rows;
  rows.reserve(dataset.frames.size());
  for (std::size_t i = 0; i < dataset.frames.size(); ++i) {
    const FrameBundle& frame = dataset.frames[i];
    FrameEval row;
    row.frame_index = static_cast<int>(i);
    row.modality = frame.camera.modality;
    row.time = frame.time;

    const RenderOutput combined = render(scene, frame.camera, frame.time, RenderMode::Combined);
    row.psnr_input = psnr(combined.color, frame.image);
    row.ssim_input = ssim(combined.color, frame.image);

    if (frame.clear) {
      const RenderOutput surface =
          render(scene, frame.camera, frame.time, RenderMode::SurfaceOnly);
      row.psnr_clear = psnr(surface.color, *frame.clear);
      row.ssim_clear = ssim(surface.color, *frame.clear);
      row.has_clear = true;
    }
    rows.push_back(row);
  }
  return rows;
}

double mean_clear_psnr_rgb(const std::vector<FrameEval>& rows) {
  std::vector<double> vals;
  for (const FrameEval& r : rows)
    if (r.has_clear && r.modality == Modality::RGB) vals.push_back(r.psnr_clear);
  return mean_of(vals);
}

std::string eval_rows_to_csv(const std::vector<FrameEval>& rows) {
  std::ostringstream out;
  out.precision(17);
  out << "frame_index,modality,time,psnr_input,ssim_input,psnr_clear,ssim_clear\n";
  for (const FrameEval& r : rows) {
    out << r.frame_index << ',' << modality_name(r.modality) << ',' << r.time << ','
        << r.psnr_input << ',' << r.ssim_input << ',';
    if (r.has_clear)
      out << r.psnr_clear << ',' << r.ssim_clear;
    else
      out << ',';
    out << '\n';
  }
  return out.str();
}

nlohmann::json eval_summary_json(const std::vector<FrameEval>& rows) {
  std::vector<double> psnr_in_rgb, psnr_in_thermal, psnr_clear_rgb, ssim_clear_rgb;
  for (const FrameEval& r : rows) {
    if (r.modality == Modality::RGB)
      psnr_in_rgb.push_back(r.psnr_input);
    else
      psnr_in_thermal.push_back(r.psnr_input);
    if (r.has_clear && r.modality == Modality::RGB) {
      psnr_clear_rgb.push_back(r.psnr_clear);
      ssim_clear_rgb.push_back(r.ssim_clear);
    }
  }
  nlohmann::json j{{"frames", rows.size()},
                   {"mean_psnr_input_rgb", mean_of(psnr_in_rgb)},
                   {"mean_psnr_input_thermal", mean_of(psnr_in_thermal)}};
  if (!psnr_clear_rgb.empty()) {
    j["mean_psnr_clear_rgb"] = mean_of(psnr_clear_rgb);
    j["mean_ssim_clear_rgb"] = mean_of(ssim_clear_rgb);
  }
  return j;
}

}  // namespace splat
