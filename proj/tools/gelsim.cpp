// gelsim command-line front end.

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <numeric>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "gelsim/elastic.hpp"
#include "gelsim/error.hpp"
#include "gelsim/io.hpp"
#include "gelsim/metrics.hpp"
#include "gelsim/optics.hpp"
#include "gelsim/pipeline.hpp"
#include "gelsim/scene.hpp"
#include "gelsim/shadow.hpp"
#include "gelsim/synth.hpp"

namespace fs = std::filesystem;
using json = nlohmann::json;
using namespace gelsim;

namespace {

constexpr const char* kVersion = "1.0.0";

constexpr int kExitOk = 0;
constexpr int kExitInput = 2;
constexpr int kExitNumerical = 3;

void warn(const std::string& msg) {
  std::cerr << json{{"warning", msg}}.dump() << "\n";
}

void emit(const json& j) { std::cout << j.dump() << std::endl; }

json read_json(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  try {
    return json::parse(in);
  } catch (const json::parse_error& e) {
    throw ParseError(path.string() + ": " + e.what(), e.byte);
  }
}

// Sensor precedence: --sensor file, then an existing bundle, then a flat gel
// matching `fallback_size`.
SensorConfig pick_sensor(const std::string& sensor_file, const std::optional<CalibrationBundle>& existing,
                         int width, int height, double pitch) {
  if (!sensor_file.empty()) return load_sensor(sensor_file);
  if (existing) return existing->sensor;
  return SensorConfig::flat(width, height, pitch);
}

std::optional<CalibrationBundle> existing_bundle(const fs::path& dir) {
  if (!fs::exists(dir / "manifest.json")) return std::nullopt;
  return load_bundle(dir);
}

double theta_max_rad(double deg) {
  if (!(deg > 0 && deg < 90)) throw RangeError("--theta-max must lie in (0, 90) degrees");
  return deg * std::acos(-1.0) / 180.0;
}

// ------------------------------------------------------------ calibrate-optics

struct OpticsArgs {
  std::string records, out, sensor;
  bool lookup = false;
  int bins = 125;
  double theta_max = 70.0;
  int min_samples = 15;
  double pitch = 0.025;
};

int cmd_calibrate_optics(const OpticsArgs& a) {
  const fs::path dir(a.records);
  const fs::path index = dir / "records.json";
  if (!fs::exists(index)) throw IoError("no records.json in " + dir.string());
  const json idx = read_json(index);
  const double default_ball = idx.value("ball_radius_mm", 2.0);
  const ImageRgb background = load_png(dir / idx.at("background").get<std::string>());

  std::vector<CalibrationRecord> records;
  for (const auto& r : idx.at("records")) {
    try {
      CalibrationRecord rec;
      rec.image = load_png(dir / r.at("image").get<std::string>());
      rec.background = background;
      rec.center_col = r.at("center_col").get<double>();
      rec.center_row = r.at("center_row").get<double>();
      rec.radius_px = r.at("radius_px").get<double>();
      rec.ball_radius_mm = r.value("ball_radius_mm", default_ball);
      records.push_back(std::move(rec));
    } catch (const std::exception& e) {
      warn(std::string("skipping record: ") + e.what());
    }
  }
  if (records.empty()) throw CalibrationError("no usable calibration records in " + dir.string());

  auto existing = existing_bundle(a.out);
  CalibrationBundle bundle = existing ? *existing : CalibrationBundle{};
  bundle.sensor = pick_sensor(a.sensor, existing, background.cols(), background.rows(), a.pitch);
  bundle.background = background;

  CalibrationOptions opts;
  opts.bins.bins = a.bins;
  opts.bins.theta_max = theta_max_rad(a.theta_max);
  opts.min_samples = a.min_samples;
  FillStats stats;
  if (a.lookup) {
    bundle.lookup = calibrate_lookup(records, bundle.sensor, opts);
    stats = fill_stats(bundle.lookup->fill_mask());
  } else {
    bundle.poly = calibrate_polytable(records, bundle.sensor, opts);
    stats = fill_stats(bundle.poly->fill_mask());
  }
  save_bundle(a.out, bundle);
  emit({{"table", a.lookup ? "lookup" : "polynomial"},
        {"records", records.size()},
        {"bins", a.bins},
        {"calibrated", stats.calibrated},
        {"interpolated", stats.interpolated},
        {"degenerate", stats.degenerate},
        {"coverage", static_cast<double>(stats.calibrated + stats.degenerate) / (a.bins * a.bins)},
        {"bundle", a.out}});
  return kExitOk;
}

// ------------------------------------------------------------ calibrate-shadow

struct ShadowArgs {
  std::string records, out, sensor;
  double pitch = 0.025;
};

int cmd_calibrate_shadow(const ShadowArgs& a) {
  const fs::path dir(a.records);
  const fs::path index = dir / "records.json";
  if (!fs::exists(index)) throw IoError("no records.json in " + dir.string());
  const json idx = read_json(index);
  const ImageRgb background = load_png(dir / idx.at("background").get<std::string>());
  const double default_pin = idx.value("pin_diameter_mm", 1.0);
  std::vector<PinPressRecord> records;
  for (const auto& r : idx.at("records")) {
    try {
      PinPressRecord rec;
      rec.image = load_png(dir / r.at("image").get<std::string>());
      rec.background = background;
      rec.center_col = r.at("center_col").get<double>();
      rec.center_row = r.at("center_row").get<double>();
      rec.depth_mm = r.at("depth_mm").get<double>();
      rec.pin_diameter_mm = r.value("pin_diameter_mm", default_pin);
      records.push_back(std::move(rec));
    } catch (const std::exception& e) {
      warn(std::string("skipping record: ") + e.what());
    }
  }
  if (records.empty()) throw CalibrationError("no usable pin records in " + dir.string());

  auto existing = existing_bundle(a.out);
  CalibrationBundle bundle = existing ? *existing : CalibrationBundle{};
  bundle.sensor = pick_sensor(a.sensor, existing, background.cols(), background.rows(), a.pitch);
  if (bundle.background.empty()) bundle.background = background;
  bundle.shadows = extract_shadow_masks(records, bundle.sensor);
  save_bundle(a.out, bundle);
  json lights = json::array();
  for (const auto& l : bundle.shadows->lights)
    lights.push_back({{"dir", {l.dir_x, l.dir_y}}, {"masks", l.masks.size()}, {"unit_width_px", l.unit_width_px}});
  const int groups = static_cast<int>(std::count_if(bundle.shadows->lights.begin(), bundle.shadows->lights.end(),
                                                    [](const LightShadows& l) { return !l.masks.empty(); }));
  emit({{"records", records.size()}, {"light_groups", groups}, {"lights", lights}, {"bundle", a.out}});
  return kExitOk;
}

// ------------------------------------------------------------ calibrate-elastic

struct ElasticArgs {
  std::string fields, analytic, out, sensor;
  int radius = 60;
  double spacing = 0.1;
  double layer_depth = 0.5;
  int extent = -1;
};

std::vector<double> radial_profile(const TensorKernel& k) {
  std::vector<double> sum(k.radius + 1, 0.0);
  std::vector<int> count(k.radius + 1, 0);
  for (int dy = -k.radius; dy <= k.radius; ++dy)
    for (int dx = -k.radius; dx <= k.radius; ++dx) {
      const int ring = static_cast<int>(std::lround(std::hypot(dx, dy)));
      if (ring > k.radius) continue;
      sum[ring] += k.response(dx, dy).norm();
      ++count[ring];
    }
  for (int i = 0; i <= k.radius; ++i) sum[i] /= std::max(count[i], 1);
  return sum;
}

int cmd_calibrate_elastic(const ElasticArgs& a) {
  if (a.radius < 0) throw RangeError("--radius must be non-negative");
  std::vector<UnitLoadField> fields;
  if (!a.analytic.empty()) {
    double e = 0, nu = 0;
    char sep = 0;
    std::istringstream ss(a.analytic);
    if (!(ss >> e >> sep >> nu) || sep != ',' || !ss.eof())
      throw ParseError("--analytic expects E,nu", 0);
    const int extent = a.extent >= 0 ? a.extent : a.radius;
    fields = generate_halfspace_fields(e, nu, a.spacing, extent, a.layer_depth);
  } else {
    fields = load_unit_fields(a.fields);
    if (fields.empty()) throw CalibrationError("no unit-load fields in " + a.fields);
    const auto missing = missing_unit_cases(fields);
    if (!missing.empty()) {
      std::string names;
      for (const auto& m : missing) names += (names.empty() ? "" : ", ") + m;
      throw CalibrationError("missing unit case: " + names);
    }
  }
  const TensorKernel kernel = calibrate_tensors(fields, a.radius);

  auto existing = existing_bundle(a.out);
  CalibrationBundle bundle = existing ? *existing : CalibrationBundle{};
  bundle.sensor = pick_sensor(a.sensor, existing, 640, 480, 0.025);
  bundle.kernel = kernel;
  save_bundle(a.out, bundle);
  emit({{"radius", kernel.radius},
        {"spacing_mm", kernel.spacing},
        {"layer_depth_mm", kernel.layer_depth_mm},
        {"cases", fields.size()},
        {"decay", radial_profile(kernel)},
        {"bundle", a.out}});
  return kExitOk;
}

// ------------------------------------------------------------ render / markers / bench

struct SceneArgs {
  std::string scene, bundle, out;
};

struct LoadedScene {
  SceneSpec spec;
  CalibrationBundle bundle;
  SensorConfig sensor;
  TriangleMesh mesh;
};

LoadedScene load_all(const SceneArgs& a) {
  LoadedScene s;
  s.spec = load_scene(a.scene);
  const fs::path bundle = !a.bundle.empty() ? fs::path(a.bundle) : s.spec.bundle;
  if (bundle.empty()) throw ConfigError("no bundle given on the command line or in the scene");
  s.bundle = load_bundle(bundle);
  s.sensor = s.spec.sensor.empty() ? s.bundle.sensor : load_sensor(s.spec.sensor);
  s.mesh = load_mesh(s.spec.mesh);
  return s;
}

json timings_json(const StageTimings& t) {
  return {{"rasterize_ms", t.rasterize_ms}, {"smooth_ms", t.smooth_ms}, {"normals_ms", t.normals_ms},
          {"optics_ms", t.optics_ms},       {"shadow_ms", t.shadow_ms}, {"total_ms", t.total_ms}};
}

struct RenderArgs : SceneArgs {
  bool no_shadow = false;
  bool lookup = false;
  bool diff = false;
  std::string heightmap;
};

fs::path sibling(const fs::path& p, const std::string& suffix) {
  return p.parent_path() / (p.stem().string() + suffix + p.extension().string());
}

int cmd_render(const RenderArgs& a) {
  const LoadedScene s = load_all(a);
  RenderOptions opts;
  opts.shadows = !a.no_shadow;
  opts.use_lookup = a.lookup;
  const RenderResult r = render_press(s.mesh, s.spec.pose, s.spec.press_depth, s.sensor, s.bundle, opts);
  save_png(a.out, r.image);
  json outputs = {{"image", a.out}};
  if (!a.heightmap.empty()) {
    save_pfm(a.heightmap, r.height);
    outputs["heightmap"] = a.heightmap;
  }
  if (a.diff) {
    ImageRgb d(r.image.rows(), r.image.cols());
    const ImageRgb q = quantize(r.image);
    for (std::size_t i = 0; i < d.size(); ++i)
      for (int ch = 0; ch < 3; ++ch) d[i][ch] = 128.f + q[i][ch] - s.bundle.background[i][ch];
    const fs::path dpath = sibling(a.out, "_diff");
    save_png(dpath, d);
    outputs["diff"] = dpath.string();
  }
  emit({{"timings", timings_json(r.timings)}, {"contact_px", r.mask.count()}, {"outputs", outputs}});
  return kExitOk;
}

struct MarkerArgs : SceneArgs {
  std::string overlay;
  double scale = 20.0;
};

std::vector<Eigen::Vector2d> scene_markers(const SceneSpec& s) {
  if (s.markers.rows > 0 && s.markers.cols > 0)
    return marker_grid(s.markers.rows, s.markers.cols, s.markers.spacing, s.markers.origin_x,
                       s.markers.origin_y);
  return marker_grid(7, 9, 1.0, -4.0, -3.0);
}

int cmd_markers(const MarkerArgs& a) {
  const LoadedScene s = load_all(a);
  if (!s.bundle.kernel) throw ConfigError("bundle has no elastic kernel");
  const TensorKernel& kernel = *s.bundle.kernel;
  if (s.spec.node_spacing > 0 && std::abs(s.spec.node_spacing - kernel.spacing) > 1e-9)
    throw ConfigError("scene node_spacing differs from the kernel spacing");
  const PressResult press = rasterize_press(s.mesh, s.spec.pose, s.spec.press_depth, s.sensor);
  const MarkerResult m = simulate_markers(press, s.sensor, kernel, s.spec.shear.x(), s.spec.shear.y(),
                                          scene_markers(s.spec));
  save_markers(a.out, m.markers);
  json outputs = {{"markers", a.out}};
  if (!a.overlay.empty()) {
    ImageRgb base;
    if (s.bundle.poly && !s.bundle.background.empty()) {
      RenderOptions opts;
      base = render_press(s.mesh, s.spec.pose, s.spec.press_depth, s.sensor, s.bundle, opts).image;
    } else if (!s.bundle.background.empty()) {
      base = s.bundle.background;
    } else {
      base = ImageRgb(s.sensor.height_px, s.sensor.width_px, Rgb{200.f, 200.f, 200.f});
    }
    save_png(a.overlay, draw_marker_arrows(base, m.markers, s.sensor, a.scale));
    outputs["overlay"] = a.overlay;
  }
  emit({{"active_nodes", m.active.size()},
        {"markers", m.markers.positions.size()},
        {"elastic_ms", m.elastic_ms},
        {"residual", {m.report.residual[0], m.report.residual[1], m.report.residual[2]}},
        {"outputs", outputs}});
  return kExitOk;
}

struct BenchArgs : SceneArgs {
  int frames = 100;
  bool no_shadow = false;
};

int cmd_bench(const BenchArgs& a) {
  if (a.frames <= 0) throw RangeError("--frames must be positive");
  const LoadedScene s = load_all(a);
  RenderOptions opts;
  opts.shadows = !a.no_shadow;
  StageTimings sum;
  const auto start = std::chrono::steady_clock::now();
  for (int i = 0; i < a.frames; ++i) {
    const RenderResult r = render_press(s.mesh, s.spec.pose, s.spec.press_depth, s.sensor, s.bundle, opts);
    sum.rasterize_ms += r.timings.rasterize_ms;
    sum.smooth_ms += r.timings.smooth_ms;
    sum.normals_ms += r.timings.normals_ms;
    sum.optics_ms += r.timings.optics_ms;
    sum.shadow_ms += r.timings.shadow_ms;
    sum.total_ms += r.timings.total_ms;
  }
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  for (double* v : {&sum.rasterize_ms, &sum.smooth_ms, &sum.normals_ms, &sum.optics_ms, &sum.shadow_ms,
                    &sum.total_ms})
    *v /= a.frames;
  emit({{"frames", a.frames},
        {"shadows", opts.shadows},
        {"fps", a.frames / secs},
        {"mean_timings", timings_json(sum)},
        {"size", {s.sensor.height_px, s.sensor.width_px}}});
  return kExitOk;
}

// ------------------------------------------------------------ compare

struct CompareArgs {
  std::string ref, cand, crop;
};

int cmd_compare(const CompareArgs& a) {
  const ImageRgb ref = load_png(a.ref);
  const ImageRgb cand = load_png(a.cand);
  std::optional<CropRect> crop;
  if (!a.crop.empty()) {
    CropRect r;
    char c1 = 0, c2 = 0, c3 = 0;
    std::istringstream ss(a.crop);
    if (!(ss >> r.x >> c1 >> r.y >> c2 >> r.width >> c3 >> r.height) || c1 != ',' || c2 != ',' || c3 != ',' ||
        !ss.eof())
      throw ParseError("--crop expects X,Y,W,H", 0);
    crop = r;
  }
  const ImageMetrics m = image_metrics(ref, cand, crop);
  json out = {{"l1", m.l1}, {"mse", m.mse}, {"ssim", m.ssim}};
  if (std::isinf(m.psnr))
    out["psnr"] = "inf";
  else
    out["psnr"] = m.psnr;
  emit(out);
  return kExitOk;
}

// ------------------------------------------------------------ synth

struct SynthArgs {
  std::string kind, out;
  int count = -1;  // 50 ball presses or 10 pin presses
  std::uint64_t seed = 7;
  double depth = 0.5;
};

int cmd_synth(const SynthArgs& a) {
  const fs::path dir(a.out);
  fs::create_directories(dir);
  const SensorConfig cfg = SensorConfig::flat(640, 480, 0.025);
  const PolynomialTable table = synth::planted_table();
  const ImageRgb bg = synth::planted_background(table, cfg);
  json summary = {{"kind", a.kind}, {"out", a.out}};
  if (a.kind == "optics") {
    save_png(dir / "background.png", bg);
    const auto recs = synth::ball_records(table, bg, cfg, a.count > 0 ? a.count : 50, a.seed);
    json idx = {{"background", "background.png"}, {"ball_radius_mm", 2.0}, {"records", json::array()}};
    for (std::size_t i = 0; i < recs.size(); ++i) {
      const std::string name = "press_" + std::to_string(i) + ".png";
      save_png(dir / name, recs[i].image);
      idx["records"].push_back({{"image", name},
                                {"center_col", recs[i].center_col},
                                {"center_row", recs[i].center_row},
                                {"radius_px", recs[i].radius_px}});
    }
    std::ofstream(dir / "records.json") << idx.dump(2) << "\n";
    summary["records"] = recs.size();
  } else if (a.kind == "shadow") {
    save_png(dir / "background.png", bg);
    json idx = {{"background", "background.png"}, {"pin_diameter_mm", 1.0}, {"records", json::array()}};
    const int count = a.count > 0 ? a.count : 10;
    if (count > 12) throw RangeError("at most 12 pin records fit the demo layout");
    for (int i = 0; i < count; ++i) {
      const double depth = 0.1 * (i + 1);
      const double col = 160 + 320 * ((i % 4) / 3.0), row = 140 + 200 * ((i / 4) % 3 / 2.0);
      const auto rec = synth::pin_record(bg, cfg, col, row, 1.0, depth);
      const std::string name = "pin_" + std::to_string(i) + ".png";
      save_png(dir / name, rec.image);
      idx["records"].push_back({{"image", name}, {"center_col", col}, {"center_row", row}, {"depth_mm", depth}});
    }
    std::ofstream(dir / "records.json") << idx.dump(2) << "\n";
    summary["records"] = count;
  } else if (a.kind == "fields") {
    const auto fields = generate_halfspace_fields(0.1, 0.45, 0.1, 60, 0.5);
    const char* names[] = {"z", "zx", "zy"};
    for (std::size_t i = 0; i < fields.size(); ++i) {
      const std::string layer = fields[i].depth_mm > 0 ? "_layer" : "_surface";
      save_unit_field(dir / (std::string("case_") + names[i % 3] + layer + ".csv"), fields[i]);
    }
    summary["fields"] = fields.size();
  } else if (a.kind == "scene") {
    save_stl(dir / "sphere.stl", synth::sphere_mesh(2.0));
    save_stl(dir / "pin.stl", synth::cylinder_mesh(0.5, 3.0));
    std::ofstream(dir / "sphere.scene") << "# ball press at the sensor centre\n"
                                        << "mesh = sphere.stl\n"
                                        << "press_depth = " << a.depth << "\n"
                                        << "shear = 0, 0\n"
                                        << "markers.rows = 9\nmarkers.cols = 11\nmarkers.spacing = 0.8\n"
                                        << "markers.origin = -4, -3.2\n";
  } else {
    throw ConfigError("unknown synth kind '" + a.kind + "' (optics, shadow, fields, scene)");
  }
  emit(summary);
  return kExitOk;
}

const char* error_kind(const Error& e) {
  if (dynamic_cast<const ParseError*>(&e)) return "parse";
  if (dynamic_cast<const IntegrityError*>(&e)) return "integrity";
  if (dynamic_cast<const IoError*>(&e)) return "io";
  if (dynamic_cast<const CalibrationError*>(&e)) return "calibration";
  if (dynamic_cast<const NumericalError*>(&e)) return "numerical";
  if (dynamic_cast<const RangeError*>(&e)) return "range";
  if (dynamic_cast<const ConfigError*>(&e)) return "config";
  if (dynamic_cast<const ContentError*>(&e)) return "content";
  if (dynamic_cast<const DomainError*>(&e)) return "domain";
  return "error";
}

void print_formats() {
  std::cout << "bundle       " << kBundleFormat << " v" << kBundleVersion << "\n"
            << "unit-field   csv x_mm,y_mm,ux_mm,uy_mm,uz_mm + json sidecar v" << kFieldCsvVersion << "\n"
            << "markers      csv mx_mm,my_mm,ux_mm,uy_mm,uz_mm\n"
            << "scene        key=value v" << kSceneVersion << "\n"
            << "heightmap    pfm Pf little-endian float32\n"
            << "image        png 8-bit rgb\n"
            << "mesh         stl (ascii, binary), obj\n";
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Tactile sensor simulator: optical rendering, shadows and marker motion"};
  app.require_subcommand(0, 1);
  bool version = false, formats = false;
  app.add_flag("--version", version, "Print the program and format versions");
  app.add_flag("--formats", formats, "Print the supported file formats");

  OpticsArgs optics;
  auto* c_opt = app.add_subcommand("calibrate-optics", "Fit the reflectance table from ball presses");
  c_opt->add_option("--records", optics.records, "Directory with records.json and images")->required();
  c_opt->add_option("--out", optics.out, "Bundle directory to write or update")->required();
  c_opt->add_flag("--lookup", optics.lookup, "Fit the location-independent lookup baseline");
  c_opt->add_option("--bins", optics.bins, "Bins per normal angle")->check(CLI::PositiveNumber);
  c_opt->add_option("--theta-max", optics.theta_max, "Largest binned polar angle in degrees");
  c_opt->add_option("--min-samples", optics.min_samples, "Samples a bin needs to be fitted");
  c_opt->add_option("--sensor", optics.sensor, "Sensor description file");
  c_opt->add_option("--pitch", optics.pitch, "Pixel pitch in mm when no sensor is known");

  ShadowArgs shadow;
  auto* c_sh = app.add_subcommand("calibrate-shadow", "Extract unit shadow masks from pin presses");
  c_sh->add_option("--records", shadow.records, "Directory with records.json and images")->required();
  c_sh->add_option("--out", shadow.out, "Bundle directory to write or update")->required();
  c_sh->add_option("--sensor", shadow.sensor, "Sensor description file");
  c_sh->add_option("--pitch", shadow.pitch, "Pixel pitch in mm when no sensor is known");

  ElasticArgs elastic;
  auto* c_el = app.add_subcommand("calibrate-elastic", "Calibrate influence tensors");
  auto* o_fields = c_el->add_option("--fields", elastic.fields, "Directory of unit-load CSV fields");
  auto* o_an = c_el->add_option("--analytic", elastic.analytic, "Half-space fields for E,nu (MPa, -)");
  o_fields->excludes(o_an);
  c_el->add_option("--out", elastic.out, "Bundle directory to write or update")->required();
  c_el->add_option("--radius", elastic.radius, "Truncation radius in nodes");
  c_el->add_option("--spacing", elastic.spacing, "Node spacing in mm for --analytic");
  c_el->add_option("--layer-depth", elastic.layer_depth, "Marker layer depth in mm for --analytic (0: surface only)");
  c_el->add_option("--extent", elastic.extent, "Half-width in nodes of analytic fields (default: radius)");

  RenderArgs render;
  auto* c_r = app.add_subcommand("render", "Render a tactile image");
  c_r->add_option("--scene", render.scene, "Scene file")->required();
  c_r->add_option("--bundle", render.bundle, "Calibration bundle (default: scene's)");
  c_r->add_option("--out", render.out, "Output PNG")->required();
  c_r->add_flag("--no-shadow", render.no_shadow, "Skip shadow synthesis");
  c_r->add_flag("--lookup", render.lookup, "Render with the lookup baseline");
  c_r->add_option("--heightmap", render.heightmap, "Also write the smoothed height map (PFM)");
  c_r->add_flag("--diff", render.diff, "Also write <out>_diff.png: 128 + image - background");

  MarkerArgs markers;
  auto* c_m = app.add_subcommand("markers", "Simulate marker motion");
  c_m->add_option("--scene", markers.scene, "Scene file")->required();
  c_m->add_option("--bundle", markers.bundle, "Calibration bundle (default: scene's)");
  c_m->add_option("--out", markers.out, "Output marker CSV")->required();
  c_m->add_option("--overlay", markers.overlay, "Also write an arrow overlay PNG");
  c_m->add_option("--scale", markers.scale, "Arrow scale factor");

  CompareArgs compare;
  auto* c_c = app.add_subcommand("compare", "Image similarity metrics");
  c_c->add_option("--ref", compare.ref, "Reference PNG")->required();
  c_c->add_option("--cand", compare.cand, "Candidate PNG")->required();
  c_c->add_option("--crop", compare.crop, "Crop rectangle X,Y,W,H");

  BenchArgs bench;
  auto* c_b = app.add_subcommand("bench", "Render repeatedly and report the frame rate");
  c_b->add_option("--scene", bench.scene, "Scene file")->required();
  c_b->add_option("--bundle", bench.bundle, "Calibration bundle (default: scene's)");
  c_b->add_option("--frames", bench.frames, "Number of frames");
  c_b->add_flag("--no-shadow", bench.no_shadow, "Skip shadow synthesis");

  SynthArgs syn;
  auto* c_s = app.add_subcommand("synth", "Write synthetic demo inputs");
  c_s->add_option("--kind", syn.kind, "optics, shadow, fields or scene")->required();
  c_s->add_option("--out", syn.out, "Output directory")->required();
  c_s->add_option("--count", syn.count, "Number of records");
  c_s->add_option("--seed", syn.seed, "Random seed");
  c_s->add_option("--depth", syn.depth, "Press depth written to the demo scene (mm)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitInput;
  }

  try {
    if (version) {
      std::cout << "gelsim " << kVersion << "\n";
      print_formats();
      return kExitOk;
    }
    if (formats) {
      print_formats();
      return kExitOk;
    }
    if (*c_opt) return cmd_calibrate_optics(optics);
    if (*c_sh) return cmd_calibrate_shadow(shadow);
    if (*c_el) {
      if (elastic.fields.empty() == elastic.analytic.empty())
        throw ConfigError("give exactly one of --fields or --analytic");
      return cmd_calibrate_elastic(elastic);
    }
    if (*c_r) return cmd_render(render);
    if (*c_m) return cmd_markers(markers);
    if (*c_c) return cmd_compare(compare);
    if (*c_b) return cmd_bench(bench);
    if (*c_s) return cmd_synth(syn);
    std::cerr << app.help();
    return kExitInput;
  } catch (const NumericalError& e) {
    std::cerr << json{{"error", "numerical"}, {"message", e.what()}}.dump() << "\n";
    return kExitNumerical;
  } catch (const Error& e) {
    json err{{"error", error_kind(e)}, {"message", e.what()}};
    if (const auto* p = dynamic_cast<const ParseError*>(&e)) err["offset"] = p->offset();
    std::cerr << err.dump() << "\n";
    return kExitInput;
  } catch (const nlohmann::json::exception& e) {
    std::cerr << json{{"error", "content"}, {"message", e.what()}}.dump() << "\n";
    return kExitInput;
  } catch (const std::filesystem::filesystem_error& e) {
    std::cerr << json{{"error", "io"}, {"message", e.what()}}.dump() << "\n";
    return kExitInput;
  }
}
