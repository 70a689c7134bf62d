#include "splat/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <json.hpp>
#include <sstream>

#include "splat/errors.hpp"
#include "splat/sh.hpp"

namespace splat {

namespace {

namespace fs = std::filesystem;
using nlohmann::json;

static_assert(std::endian::native == std::endian::little,
              "checkpoint writer assumes a little-endian host");

std::vector<std::string> property_names(const GaussianSet& set) {
  std::vector<std::string> names = {"x",       "y",       "z",           "rot_w",
                                    "rot_x",   "rot_y",   "rot_z",       "scale_log_x",
                                    "scale_log_y", "scale_log_z", "opacity_logit"};
  if (set.kind == SetKind::Smoke) {
    names.insert(names.end(), {"opacity_gap_raw", "t_appear", "width_appear_raw", "span_raw",
                               "width_disappear_raw"});
  }
  const int d_rgb = sh_coeff_count(set.sh_degree_rgb);
  for (int i = 0; i < d_rgb; ++i)
    for (int c = 0; c < 3; ++c)
      names.push_back("sh_rgb_" + std::to_string(i * 3 + c));
  const int d_t = sh_coeff_count(set.sh_degree_thermal);
  for (int i = 0; i < d_t; ++i) names.push_back("sh_t_" + std::to_string(i));
  return names;
}

void write_ply(const fs::path& path, const GaussianSet& set) {
  const std::vector<std::string> names = property_names(set);
  std::ostringstream header;
  header << "ply\nformat binary_little_endian 1.0\nelement vertex " << set.size() << "\n";
  for (const auto& n : names) header << "property double " << n << "\n";
  header << "end_header\n";

  std::ofstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot open for writing: " + path.string());
  const std::string h = header.str();
  f.write(h.data(), static_cast<std::streamsize>(h.size()));

  std::vector<double> row(names.size());
  for (const auto& g : set.primitives) {
    std::size_t at = 0;
    for (int k = 0; k < 3; ++k) row[at++] = g.position[k];
    for (int k = 0; k < 4; ++k) row[at++] = g.rotation[k];
    for (int k = 0; k < 3; ++k) row[at++] = g.log_scale[k];
    row[at++] = g.opacity_logit;
    if (set.kind == SetKind::Smoke) {
      if (!g.temporal)
        throw std::invalid_argument("smoke primitive without temporal parameters");
      row[at++] = g.opacity_gap_raw;
      row[at++] = g.temporal->t_appear;
      row[at++] = g.temporal->width_appear_raw;
      row[at++] = g.temporal->span_raw;
      row[at++] = g.temporal->width_disappear_raw;
    }
    for (Eigen::Index i = 0; i < g.sh_rgb.rows(); ++i)
      for (Eigen::Index c = 0; c < 3; ++c) row[at++] = g.sh_rgb(i, c);
    for (Eigen::Index i = 0; i < g.sh_thermal.size(); ++i) row[at++] = g.sh_thermal[i];
    f.write(reinterpret_cast<const char*>(row.data()),
            static_cast<std::streamsize>(row.size() * sizeof(double)));
  }
  if (!f) throw std::runtime_error("short write: " + path.string());
}

struct PlyContents {
  std::vector<std::string> names;
  std::size_t count = 0;
  std::vector<double> values;  // count x names.size(), row-major

  int column(const std::string& name) const {
    for (std::size_t i = 0; i < names.size(); ++i)
      if (names[i] == name) return static_cast<int>(i);
    return -1;
  }
  double value(std::size_t row, int col) const { return values[row * names.size() + col]; }
};

PlyContents read_ply(const fs::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw LoadError("cannot open PLY file: " + path.string());
  std::string bytes((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());

  PlyContents ply;
  std::size_t pos = 0;
  auto next_line = [&](std::string& line) {
    const std::size_t start = pos;
    const std::size_t nl = bytes.find('\n', pos);
    if (nl == std::string::npos) throw ParseError("unterminated PLY header line", start);
    line = bytes.substr(start, nl - start);
    pos = nl + 1;
  };

  std::string line;
  next_line(line);
  if (line != "ply") throw ParseError("not a PLY file", 0);
  next_line(line);
  if (line != "format binary_little_endian 1.0")
    throw ParseError("unsupported PLY format: " + line, pos - line.size() - 1);

  bool have_element = false;
  while (true) {
    const std::size_t line_start = pos;
    next_line(line);
    if (line == "end_header") break;
    std::istringstream ss(line);
    std::string tag;
    ss >> tag;
    if (tag == "comment") continue;
    if (tag == "element") {
      std::string name;
      long long count = -1;
      ss >> name >> count;
      if (name != "vertex" || count < 0)
        throw ParseError("unsupported PLY element: " + line, line_start);
      ply.count = static_cast<std::size_t>(count);
      have_element = true;
    } else if (tag == "property") {
      std::string type, name;
      ss >> type >> name;
      if (type != "double" || name.empty())
        throw ParseError("unsupported PLY property: " + line, line_start);
      ply.names.push_back(name);
    } else {
      throw ParseError("unrecognized PLY header line: " + line, line_start);
    }
  }
  if (!have_element) throw ParseError("PLY header lacks a vertex element", pos);

  const std::size_t want = ply.count * ply.names.size() * sizeof(double);
  if (bytes.size() - pos < want)
    throw ParseError("truncated PLY payload in " + path.string(), bytes.size());
  ply.values.resize(ply.count * ply.names.size());
  std::memcpy(ply.values.data(), bytes.data() + pos, want);
  return ply;
}

GaussianSet set_from_ply(const PlyContents& ply, SetKind kind, double scene_extent,
                         int sh_degree_rgb, int sh_degree_thermal) {
  GaussianSet set;
  set.kind = kind;
  set.scene_extent = scene_extent;
  set.sh_degree_rgb = sh_degree_rgb;
  set.sh_degree_thermal = sh_degree_thermal;

  auto need = [&](const std::string& name) {
    const int col = ply.column(name);
    if (col < 0) throw VersionError("checkpoint payload lacks property '" + name + "'");
    return col;
  };

  const int cx = need("x"), cy = need("y"), cz = need("z");
  const int cq[4] = {need("rot_w"), need("rot_x"), need("rot_y"), need("rot_z")};
  const int cs[3] = {need("scale_log_x"), need("scale_log_y"), need("scale_log_z")};
  const int cop = need("opacity_logit");
  int cgap = -1, ctemporal[4] = {-1, -1, -1, -1};
  if (kind == SetKind::Smoke) {
    cgap = need("opacity_gap_raw");
    ctemporal[0] = need("t_appear");
    ctemporal[1] = need("width_appear_raw");
    ctemporal[2] = need("span_raw");
    ctemporal[3] = need("width_disappear_raw");
  }
  const int d_rgb = sh_coeff_count(sh_degree_rgb);
  const int d_t = sh_coeff_count(sh_degree_thermal);
  std::vector<int> crgb(static_cast<std::size_t>(d_rgb) * 3);
  for (int i = 0; i < d_rgb * 3; ++i) crgb[i] = need("sh_rgb_" + std::to_string(i));
  std::vector<int> ct(d_t);
  for (int i = 0; i < d_t; ++i) ct[i] = need("sh_t_" + std::to_string(i));

  set.primitives.resize(ply.count);
  for (std::size_t r = 0; r < ply.count; ++r) {
    GaussianPrimitive& g = set.primitives[r];
    g.position = {ply.value(r, cx), ply.value(r, cy), ply.value(r, cz)};
    for (int k = 0; k < 4; ++k) g.rotation[k] = ply.value(r, cq[k]);
    for (int k = 0; k < 3; ++k) g.log_scale[k] = ply.value(r, cs[k]);
    g.opacity_logit = ply.value(r, cop);
    if (kind == SetKind::Smoke) {
      g.opacity_gap_raw = ply.value(r, cgap);
      TemporalOpacity t;
      t.t_appear = ply.value(r, ctemporal[0]);
      t.width_appear_raw = ply.value(r, ctemporal[1]);
      t.span_raw = ply.value(r, ctemporal[2]);
      t.width_disappear_raw = ply.value(r, ctemporal[3]);
      g.temporal = t;
    }
    g.sh_rgb.resize(d_rgb, 3);
    for (int i = 0; i < d_rgb; ++i)
      for (int c = 0; c < 3; ++c) g.sh_rgb(i, c) = ply.value(r, crgb[i * 3 + c]);
    g.sh_thermal.resize(d_t);
    for (int i = 0; i < d_t; ++i) g.sh_thermal[i] = ply.value(r, ct[i]);
  }
  return set;
}

json set_meta(const GaussianSet& set, const std::string& ply_name) {
  return json{{"ply", ply_name},
              {"count", set.size()},
              {"scene_extent", set.scene_extent},
              {"sh_degree_rgb", set.sh_degree_rgb},
              {"sh_degree_thermal", set.sh_degree_thermal}};
}

json matrix_to_json(const Eigen::MatrixXd& m) {
  json rows = json::array();
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    json row = json::array();
    for (Eigen::Index c = 0; c < m.cols(); ++c) row.push_back(m(r, c));
    rows.push_back(std::move(row));
  }
  return rows;
}

Eigen::MatrixXd matrix_from_json(const json& j) {
  if (!j.is_array() || j.empty()) throw VersionError("deformation weight matrix malformed");
  const Eigen::Index rows = static_cast<Eigen::Index>(j.size());
  const Eigen::Index cols = static_cast<Eigen::Index>(j[0].size());
  Eigen::MatrixXd m(rows, cols);
  for (Eigen::Index r = 0; r < rows; ++r) {
    if (static_cast<Eigen::Index>(j[r].size()) != cols)
      throw VersionError("deformation weight matrix is ragged");
    for (Eigen::Index c = 0; c < cols; ++c) m(r, c) = j[r][c].get<double>();
  }
  return m;
}

}  // namespace

void save_checkpoint(const Scene& scene, const fs::path& dir) {
  fs::create_directories(dir);
  write_ply(dir / "surface.ply", scene.surface);
  write_ply(dir / "smoke.ply", scene.smoke);

  json deform{{"config",
               {{"pos_freqs", scene.deform.config().pos_freqs},
                {"time_freqs", scene.deform.config().time_freqs},
                {"hidden_width", scene.deform.config().hidden_width},
                {"hidden_depth", scene.deform.config().hidden_depth}}}};
  json weights = json::array(), biases = json::array();
  for (int i = 0; i < scene.deform.layer_count(); ++i) {
    weights.push_back(matrix_to_json(scene.deform.weights()[i]));
    json b = json::array();
    for (Eigen::Index k = 0; k < scene.deform.biases()[i].size(); ++k)
      b.push_back(scene.deform.biases()[i][k]);
    biases.push_back(std::move(b));
  }
  deform["weights"] = std::move(weights);
  deform["biases"] = std::move(biases);

  const json doc{{"format_version", kCheckpointFormatVersion},
                 {"surface", set_meta(scene.surface, "surface.ply")},
                 {"smoke", set_meta(scene.smoke, "smoke.ply")},
                 {"deform", std::move(deform)}};

  std::ofstream f(dir / "checkpoint.json", std::ios::binary);
  if (!f) throw std::runtime_error("cannot open for writing: " + (dir / "checkpoint.json").string());
  f << doc.dump(2) << "\n";
  if (!f) throw std::runtime_error("short write: " + (dir / "checkpoint.json").string());
}

Scene load_checkpoint(const fs::path& dir) {
  const fs::path sidecar = dir / "checkpoint.json";
  std::ifstream f(sidecar, std::ios::binary);
  if (!f) throw LoadError("cannot open checkpoint sidecar: " + sidecar.string());

  json doc;
  try {
    doc = json::parse(f);
  } catch (const json::parse_error& e) {
    throw ParseError("malformed checkpoint JSON: " + std::string(e.what()),
                     e.byte > 0 ? static_cast<std::size_t>(e.byte - 1) : 0);
  }

  if (!doc.contains("format_version") || !doc["format_version"].is_number_integer())
    throw VersionError("checkpoint lacks a format_version");
  const int version = doc["format_version"].get<int>();
  if (version != kCheckpointFormatVersion)
    throw VersionError("unsupported checkpoint format_version " + std::to_string(version));

  Scene scene;
  auto load_set = [&](const char* key, SetKind kind) {
    const json& meta = doc.at(key);
    const PlyContents ply = read_ply(dir / meta.at("ply").get<std::string>());
    if (ply.count != meta.at("count").get<std::size_t>())
      throw VersionError(std::string("checkpoint count mismatch for ") + key);
    return set_from_ply(ply, kind, meta.at("scene_extent").get<double>(),
                        meta.at("sh_degree_rgb").get<int>(),
                        meta.at("sh_degree_thermal").get<int>());
  };
  scene.surface = load_set("surface", SetKind::Surface);
  scene.smoke = load_set("smoke", SetKind::Smoke);

  const json& dj = doc.at("deform");
  DeformConfig config;
  config.pos_freqs = dj.at("config").at("pos_freqs").get<int>();
  config.time_freqs = dj.at("config").at("time_freqs").get<int>();
  config.hidden_width = dj.at("config").at("hidden_width").get<int>();
  config.hidden_depth = dj.at("config").at("hidden_depth").get<int>();
  DeformField field(config, 0);
  const json& weights = dj.at("weights");
  const json& biases = dj.at("biases");
  if (static_cast<int>(weights.size()) != field.layer_count() ||
      static_cast<int>(biases.size()) != field.layer_count())
    throw VersionError("deformation layer count mismatch");
  for (int i = 0; i < field.layer_count(); ++i) {
    Eigen::MatrixXd w = matrix_from_json(weights[i]);
    if (w.rows() != field.weights()[i].rows() || w.cols() != field.weights()[i].cols())
      throw VersionError("deformation weight shape mismatch");
    field.weights()[i] = std::move(w);
    if (static_cast<Eigen::Index>(biases[i].size()) != field.biases()[i].size())
      throw VersionError("deformation bias shape mismatch");
    for (Eigen::Index k = 0; k < field.biases()[i].size(); ++k)
      field.biases()[i][k] = biases[i][k].get<double>();
  }
  scene.deform = std::move(field);
  return scene;
}

}  // namespace splat
