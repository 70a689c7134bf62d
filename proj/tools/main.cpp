#include <CLI11.hpp>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <json.hpp>
#include <optional>

#include "splat/checkpoint.hpp"
#include "splat/dataset.hpp"
#include "splat/errors.hpp"
#include "splat/eval.hpp"
#include "splat/image.hpp"
#include "splat/mie.hpp"
#include "splat/render.hpp"
#include "splat/synth.hpp"
#include "splat/train.hpp"
#include "splat/version.hpp"

namespace {

namespace fs = std::filesystem;
using nlohmann::json;

/// Bad invocations (missing inputs, malformed flags) exit with code 2;
/// module failures exit with code 1.
struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

bool quiet() { return std::getenv("SMOKESPLAT_QUIET") != nullptr; }

json read_json_file(const fs::path& path, const char* what) {
  if (!fs::exists(path))
    throw UsageError(std::string(what) + " file not found: " + path.string());
  std::ifstream f(path, std::ios::binary);
  if (!f) throw UsageError(std::string("cannot open ") + what + ": " + path.string());
  try {
    return json::parse(f);
  } catch (const json::parse_error& e) {
    throw UsageError(std::string("malformed ") + what + " JSON: " + e.what());
  }
}

void require_file(const fs::path& path, const char* what) {
  if (!fs::exists(path))
    throw UsageError(std::string(what) + " not found: " + path.string());
}

// Accept either the manifest itself or the dataset directory holding it.
fs::path resolve_manifest(const fs::path& data) {
  if (fs::is_directory(data)) return data / "manifest.json";
  return data;
}

void log_run(const char* command, std::uint64_t seed, const json& config) {
  std::cout << "version " << splat::kVersion << "\n";
  std::cout << "command " << command << "\n";
  std::cout << "seed " << seed << "\n";
  std::cout << "config " << config.dump() << "\n";
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot write " + path.string());
  f << text;
}

struct GenArgs {
  std::string out;
  std::string spec_path;
  std::optional<std::uint64_t> seed;
};

int run_gen(const GenArgs& args) {
  splat::SceneSpec spec;
  if (!args.spec_path.empty())
    spec = splat::scene_spec_from_json(read_json_file(args.spec_path, "scene spec"));
  if (args.seed) spec.seed = *args.seed;

  log_run("gen", spec.seed, splat::scene_spec_to_json(spec));
  const splat::GeneratedScene scene = splat::gen_scene(spec);
  fs::create_directories(args.out);
  write_text(fs::path(args.out) / "scene_spec.json",
             splat::scene_spec_to_json(spec).dump(2) + "\n");
  const fs::path manifest = splat::gen_dataset(scene, spec, args.out);
  if (!quiet()) std::cout << "wrote " << manifest.string() << "\n";
  return 0;
}

struct TrainArgs {
  std::string data;
  std::string out;
  std::string config_path;
  std::string ablate;
  bool stage2_only = false;
  bool rgb_only = false;
  std::optional<std::uint64_t> seed;
};

int run_train(const TrainArgs& args) {
  const fs::path manifest_path = resolve_manifest(args.data);
  require_file(manifest_path, "dataset manifest");
  splat::TrainConfig config;
  if (!args.config_path.empty())
    config = splat::train_config_from_json(read_json_file(args.config_path, "train config"));
  if (args.seed) config.seed = *args.seed;
  if (args.rgb_only) config.rgb_only = true;
  if (args.ablate == "smoke_alpha") config.weights.smoke_alpha = 0.0;
  else if (args.ablate == "smoke_color") config.weights.smoke_color = 0.0;
  else if (args.ablate == "mono") config.weights.mono = 0.0;
  else if (args.ablate == "depth") config.weights.depth = 0.0;
  else if (args.ablate == "mask") config.weights.mask = 0.0;
  else if (!args.ablate.empty())
    throw UsageError("unknown ablation term: " + args.ablate);

  json logged = splat::train_config_to_json(config);
  logged["stage2_only"] = args.stage2_only;
  logged["ablate"] = args.ablate;
  log_run("train", config.seed, logged);

  const splat::Dataset dataset = splat::load_dataset(manifest_path);
  fs::create_directories(args.out);
  const fs::path out(args.out);
  write_text(out / "config.json", logged.dump(2) + "\n");

  if (!quiet()) std::cout << "stage 2: " << config.iterations_stage2 << " iterations\n";
  const splat::StageResult stage2 = splat::run_stage2(dataset, config);
  {
    std::string csv = splat::loss_log_header();
    for (const auto& row : stage2.log) csv += splat::loss_row_to_csv(row);
    write_text(out / "loss_log_stage2.csv", csv);
  }

  if (args.stage2_only) {
    splat::save_checkpoint(stage2.scene, out);
    if (!quiet()) std::cout << "wrote checkpoint to " << out.string() << "\n";
    return 0;
  }

  if (!quiet()) std::cout << "stage 3: " << config.iterations_stage3 << " iterations\n";
  splat::run_stage3(dataset, stage2.scene.surface, config, out);
  if (!quiet()) std::cout << "wrote checkpoint to " << out.string() << "\n";
  return 0;
}

struct RenderArgs {
  std::string checkpoint;
  std::string data;
  std::string out;
  int frame = 0;
  std::string mode = "combined";
  std::optional<double> time;
};

int run_render(const RenderArgs& args) {
  require_file(fs::path(args.checkpoint) / "checkpoint.json", "checkpoint");
  const fs::path manifest_path = resolve_manifest(args.data);
  require_file(manifest_path, "dataset manifest");

  splat::RenderMode mode;
  if (args.mode == "combined") mode = splat::RenderMode::Combined;
  else if (args.mode == "surface") mode = splat::RenderMode::SurfaceOnly;
  else if (args.mode == "smoke") mode = splat::RenderMode::SmokeOnly;
  else throw UsageError("unknown render mode: " + args.mode);

  const splat::Dataset dataset = splat::load_dataset(manifest_path);
  if (args.frame < 0 || args.frame >= static_cast<int>(dataset.frames.size()))
    throw UsageError("frame index out of range: " + std::to_string(args.frame));
  const splat::FrameBundle& frame = dataset.frames[args.frame];
  const double time = args.time.value_or(frame.time);

  log_run("render", 0,
          json{{"checkpoint", args.checkpoint},
               {"data", args.data},
               {"frame", args.frame},
               {"mode", args.mode},
               {"time", time}});

  const splat::Scene scene = splat::load_checkpoint(args.checkpoint);
  const splat::RenderOutput result = splat::render(scene, frame.camera, time, mode);
  splat::write_png(args.out, result.color);
  if (!quiet()) std::cout << "wrote " << args.out << "\n";
  return 0;
}

struct EvalArgs {
  std::string checkpoint;
  std::string data;
  std::string out;
};

int run_eval(const EvalArgs& args) {
  require_file(fs::path(args.checkpoint) / "checkpoint.json", "checkpoint");
  const fs::path manifest_path = resolve_manifest(args.data);
  require_file(manifest_path, "dataset manifest");
  log_run("eval", 0, json{{"checkpoint", args.checkpoint}, {"data", args.data}});

  const splat::Scene scene = splat::load_checkpoint(args.checkpoint);
  const splat::Dataset dataset = splat::load_dataset(manifest_path);
  const std::vector<splat::FrameEval> rows = splat::evaluate_scene(scene, dataset);

  fs::create_directories(args.out);
  write_text(fs::path(args.out) / "metrics.csv", splat::eval_rows_to_csv(rows));
  const json summary = splat::eval_summary_json(rows);
  write_text(fs::path(args.out) / "metrics.json", summary.dump(2) + "\n");
  std::cout << summary.dump() << "\n";
  return 0;
}

struct MieArgs {
  std::string out;
  std::string spec_path;
  double lambda_min = 0.3;
  double lambda_max = 15.0;
  int steps = 200;
};

int run_mie(const MieArgs& args) {
  splat::ParticleSpec spec;
  if (!args.spec_path.empty()) {
    const json j = read_json_file(args.spec_path, "particle spec");
    for (const auto& [key, val] : j.items()) {
      if (key == "radius_um") spec.radius_um = val.get<double>();
      else if (key == "number_density") spec.number_density = val.get<double>();
      else if (key == "refractive_index") {
        if (!val.is_array() || val.size() != 2)
          throw UsageError("refractive_index must be [real, imag]");
        spec.refractive_index = {val[0].get<double>(), val[1].get<double>()};
      } else {
        throw UsageError("unknown particle spec key: " + key);
      }
    }
  }
  log_run("mie", 0,
          json{{"radius_um", spec.radius_um},
               {"refractive_index", {spec.refractive_index.real(), spec.refractive_index.imag()}},
               {"number_density", spec.number_density},
               {"lambda_min_um", args.lambda_min},
               {"lambda_max_um", args.lambda_max},
               {"steps", args.steps}});

  const auto rows = splat::spectrum_sweep(args.lambda_min, args.lambda_max, args.steps, spec);
  std::ostringstream csv;
  csv.precision(17);
  csv << "wavelength_um,beta_per_m\n";
  for (const auto& row : rows) csv << row.wavelength_um << ',' << row.beta << '\n';
  write_text(args.out, csv.str());
  if (!quiet()) std::cout << "wrote " << args.out << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Dual-set Gaussian splatting: see-through-smoke reconstruction toolkit"};
  app.require_subcommand(1);

  GenArgs gen_args;
  CLI::App* gen = app.add_subcommand("gen", "Generate a synthetic multi-modal dataset");
  gen->add_option("--out", gen_args.out, "Output dataset directory")->required();
  gen->add_option("--spec", gen_args.spec_path, "Scene spec JSON file");
  gen->add_option("--seed", gen_args.seed, "Override the spec seed");

  TrainArgs train_args;
  CLI::App* train = app.add_subcommand("train", "Run the two-stage optimization");
  train->add_option("--data", train_args.data, "Dataset manifest JSON")->required();
  train->add_option("--out", train_args.out, "Output directory for checkpoints and logs")
      ->required();
  train->add_option("--config", train_args.config_path, "Train config JSON file");
  train->add_option("--seed", train_args.seed, "Override the config seed");
  train->add_flag("--stage2-only", train_args.stage2_only, "Stop after the surface fit");
  train->add_flag("--rgb-only", train_args.rgb_only,
                  "Drop thermal frames and the depth loss (baseline)");
  train->add_option("--ablate", train_args.ablate, "Zero one prior's weight")
      ->check(CLI::IsMember({"smoke_alpha", "smoke_color", "mono", "depth", "mask"}));

  RenderArgs render_args;
  CLI::App* rend = app.add_subcommand("render", "Render one view from a checkpoint");
  rend->add_option("--checkpoint", render_args.checkpoint, "Checkpoint directory")->required();
  rend->add_option("--data", render_args.data, "Dataset manifest (camera source)")->required();
  rend->add_option("--out", render_args.out, "Output PNG path")->required();
  rend->add_option("--frame", render_args.frame, "Frame index providing camera and time");
  rend->add_option("--mode", render_args.mode, "combined|surface|smoke");
  rend->add_option("--time", render_args.time, "Override the frame's timestamp");

  EvalArgs eval_args;
  CLI::App* ev = app.add_subcommand("eval", "Evaluate a checkpoint against a dataset");
  ev->add_option("--checkpoint", eval_args.checkpoint, "Checkpoint directory")->required();
  ev->add_option("--data", eval_args.data, "Dataset manifest JSON")->required();
  ev->add_option("--out", eval_args.out, "Output directory for metrics")->required();

  MieArgs mie_args;
  CLI::App* mie = app.add_subcommand("mie", "Scattering-coefficient wavelength sweep");
  mie->add_option("--out", mie_args.out, "Output CSV path")->required();
  mie->add_option("--spec", mie_args.spec_path, "Particle spec JSON file");
  mie->add_option("--lambda-min", mie_args.lambda_min, "Sweep start, micrometers");
  mie->add_option("--lambda-max", mie_args.lambda_max, "Sweep end, micrometers");
  mie->add_option("--steps", mie_args.steps, "Number of sweep samples");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    if (gen->parsed()) return run_gen(gen_args);
    if (train->parsed()) return run_train(train_args);
    if (rend->parsed()) return run_render(render_args);
    if (ev->parsed()) return run_eval(eval_args);
    if (mie->parsed()) return run_mie(mie_args);
  } catch (const UsageError& e) {
    std::cerr << "usage error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
