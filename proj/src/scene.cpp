#include "gelsim/scene.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <functional>
#include <map>
#include <set>
#include <sstream>
#include <vector>

#include "gelsim/error.hpp"
#include "gelsim/io.hpp"

namespace gelsim {

namespace {

std::string_view trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

struct Entry {
  std::string value;
  std::size_t offset = 0;      // byte offset of the value
  std::size_t key_offset = 0;  // byte offset of the key
};

std::map<std::string, Entry> parse_pairs(const std::string& text) {
  std::map<std::string, Entry> out;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    std::size_t end = text.find('\n', pos);
    if (end == std::string::npos) end = text.size();
    std::string_view line(text.data() + pos, end - pos);
    if (const auto hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
    if (!trim(line).empty()) {
      const auto eq = line.find('=');
      if (eq == std::string_view::npos) throw ParseError("expected 'key = value'", pos);
      const std::string key(trim(line.substr(0, eq)));
      const std::string_view raw = line.substr(eq + 1);
      const std::string_view value = trim(raw);
      const std::size_t voff = pos + eq + 1 + (value.empty() ? 0 : raw.find(value.front()));
      if (key.empty()) throw ParseError("empty key", pos);
      if (value.empty()) throw ParseError("empty value for '" + key + "'", voff);
      const std::size_t koff = pos + line.find_first_not_of(" \t");
      if (!out.emplace(key, Entry{std::string(value), voff, koff}).second)
        throw ParseError("duplicate key '" + key + "'", pos);
    }
    if (end == text.size()) break;
    pos = end + 1;
  }
  return out;
}

double to_double(const Entry& e, const std::string& key) {
  double v = 0;
  const char* b = e.value.data();
  const char* end = b + e.value.size();
  if (b != end && *b == '+') ++b;
  const auto res = std::from_chars(b, end, v);
  if (res.ec != std::errc() || res.ptr != end || !std::isfinite(v))
    throw ParseError("'" + key + "' expects a number", e.offset);
  return v;
}

int to_int(const Entry& e, const std::string& key) {
  int v = 0;
  const auto res = std::from_chars(e.value.data(), e.value.data() + e.value.size(), v);
  if (res.ec != std::errc() || res.ptr != e.value.data() + e.value.size())
    throw ParseError("'" + key + "' expects an integer", e.offset);
  return v;
}

std::vector<double> to_vector(const Entry& e, const std::string& key, std::size_t n) {
  std::vector<double> out;
  std::size_t start = 0;
  for (;;) {
    const std::size_t comma = e.value.find(',', start);
    const std::string_view part =
        trim(std::string_view(e.value).substr(start, comma == std::string::npos ? std::string::npos : comma - start));
    out.push_back(to_double(Entry{std::string(part), e.offset + start, e.key_offset}, key));
    if (comma == std::string::npos) break;
    start = comma + 1;
  }
  if (out.size() != n)
    throw ParseError("'" + key + "' expects " + std::to_string(n) + " comma-separated numbers", e.offset);
  return out;
}

using Handler = std::function<void(const Entry&, const std::string&)>;

void dispatch(const std::map<std::string, Entry>& pairs, const std::map<std::string, Handler>& handlers) {
  for (const auto& [key, entry] : pairs) {
    const auto it = handlers.find(key);
    if (it == handlers.end()) throw ParseError("unknown key '" + key + "'", entry.key_offset);
    it->second(entry, key);
  }
}

std::string read_text(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return std::move(ss).str();
}

std::filesystem::path resolve(const std::filesystem::path& base, const std::string& p) {
  const std::filesystem::path path(p);
  return path.is_absolute() ? path : base / path;
}

}  // namespace

SceneSpec parse_scene(const std::string& text, const std::filesystem::path& base_dir) {
  SceneSpec s;
  const auto pairs = parse_pairs(text);
  std::map<std::string, Handler> h;
  h["version"] = [&](const Entry& e, const std::string& k) {
    if (to_int(e, k) != kSceneVersion) throw ParseError("unsupported scene version", e.offset);
  };
  h["mesh"] = [&](const Entry& e, const std::string&) { s.mesh = resolve(base_dir, e.value); };
  h["pose.translation"] = [&](const Entry& e, const std::string& k) {
    const auto v = to_vector(e, k, 3);
    s.pose.translation = Eigen::Vector3d(v[0], v[1], v[2]);
  };
  h["pose.rotation"] = [&](const Entry& e, const std::string& k) {
    const auto v = to_vector(e, k, 3);
    s.pose.rotation = Eigen::Vector3d(v[0], v[1], v[2]);
  };
  h["press_depth"] = [&](const Entry& e, const std::string& k) {
    s.press_depth = to_double(e, k);
    if (s.press_depth < 0) throw RangeError("press_depth must be non-negative");
  };
  h["shear"] = [&](const Entry& e, const std::string& k) {
    const auto v = to_vector(e, k, 2);
    s.shear = Eigen::Vector2d(v[0], v[1]);
  };
  h["markers.rows"] = [&](const Entry& e, const std::string& k) { s.markers.rows = to_int(e, k); };
  h["markers.cols"] = [&](const Entry& e, const std::string& k) { s.markers.cols = to_int(e, k); };
  h["markers.spacing"] = [&](const Entry& e, const std::string& k) {
    s.markers.spacing = to_double(e, k);
  };
  h["markers.origin"] = [&](const Entry& e, const std::string& k) {
    const auto v = to_vector(e, k, 2);
    s.markers.origin_x = v[0];
    s.markers.origin_y = v[1];
  };
  h["node_spacing"] = [&](const Entry& e, const std::string& k) { s.node_spacing = to_double(e, k); };
  h["sensor"] = [&](const Entry& e, const std::string&) { s.sensor = resolve(base_dir, e.value); };
  h["bundle"] = [&](const Entry& e, const std::string&) { s.bundle = resolve(base_dir, e.value); };
  dispatch(pairs, h);

  if (!pairs.count("mesh")) throw ParseError("scene is missing 'mesh'", text.size());
  if (s.markers.rows < 0 || s.markers.cols < 0) throw RangeError("marker counts must be non-negative");
  if (!(s.markers.spacing > 0)) throw RangeError("markers.spacing must be positive");
  if (s.node_spacing < 0) throw RangeError("node_spacing must be non-negative");
  return s;
}

SceneSpec load_scene(const std::filesystem::path& path) {
  SceneSpec s = parse_scene(read_text(path), path.parent_path());
  if (!std::filesystem::exists(s.mesh)) throw IoError("scene mesh not found: " + s.mesh.string());
  if (!s.sensor.empty() && !std::filesystem::exists(s.sensor))
    throw IoError("scene sensor file not found: " + s.sensor.string());
  if (!s.bundle.empty() && !std::filesystem::exists(s.bundle))
    throw IoError("scene bundle not found: " + s.bundle.string());
  return s;
}

SensorConfig parse_sensor(const std::string& text, const std::filesystem::path& base_dir) {
  int width = 640, height = 480;
  double pitch = 0.025, max_indent = 1.5, dome_radius = 0;
  std::string gel = "flat";
  std::size_t gel_offset = 0;
  const auto pairs = parse_pairs(text);
  std::map<std::string, Handler> h;
  h["width"] = [&](const Entry& e, const std::string& k) { width = to_int(e, k); };
  h["height"] = [&](const Entry& e, const std::string& k) { height = to_int(e, k); };
  h["pitch"] = [&](const Entry& e, const std::string& k) { pitch = to_double(e, k); };
  h["max_indent"] = [&](const Entry& e, const std::string& k) { max_indent = to_double(e, k); };
  h["dome_radius"] = [&](const Entry& e, const std::string& k) { dome_radius = to_double(e, k); };
  h["gel"] = [&](const Entry& e, const std::string&) {
    gel = e.value;
    gel_offset = e.offset;
  };
  dispatch(pairs, h);

  SensorConfig cfg;
  if (gel == "flat") {
    cfg = SensorConfig::flat(width, height, pitch, max_indent);
  } else if (gel == "dome") {
    if (!(dome_radius > 0)) throw ParseError("gel = dome needs a positive dome_radius", gel_offset);
    cfg = SensorConfig::dome(width, height, pitch, dome_radius, max_indent);
  } else {
    cfg = SensorConfig::flat(width, height, pitch, max_indent);
    cfg.gel_surface = HeightMap(load_pfm(resolve(base_dir, gel)));
  }
  cfg.validate();
  return cfg;
}

SensorConfig load_sensor(const std::filesystem::path& path) {
  return parse_sensor(read_text(path), path.parent_path());
}

}  // namespace gelsim
