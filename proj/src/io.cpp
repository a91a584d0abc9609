#include "gelsim/io.hpp"

#include <algorithm>
#include <bit>
#include <cctype>
#include <charconv>
#include <cstring>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include <Eigen/Geometry>
#include <png.h>
#include <zlib.h>
#include <json.hpp>

#include "gelsim/error.hpp"

namespace gelsim {

using json = nlohmann::json;

namespace {

// ---------------------------------------------------------------- bytes

std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  if (in.bad()) throw IoError("cannot read " + path.string());
  return std::move(ss).str();
}

void write_file(const fs::path& path, const std::string& bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot create " + path.string());
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("cannot write " + path.string());
}

void put_u32(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

std::uint32_t get_u32(const char* p, bool little = true) {
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) {
    const auto b = static_cast<std::uint32_t>(static_cast<unsigned char>(p[little ? i : 3 - i]));
    v |= b << (8 * i);
  }
  return v;
}

void put_f32(std::string& out, float v) { put_u32(out, std::bit_cast<std::uint32_t>(v)); }
float get_f32(const char* p, bool little = true) { return std::bit_cast<float>(get_u32(p, little)); }

std::string encode_f32(const std::vector<float>& values) {
  std::string out;
  out.reserve(values.size() * 4);
  for (float v : values) put_f32(out, v);
  return out;
}

std::vector<float> decode_f32(const std::string& bytes, std::size_t count, const std::string& what) {
  if (bytes.size() != count * 4)
    throw ContentError(what + ": expected " + std::to_string(count * 4) + " bytes, found " +
                       std::to_string(bytes.size()));
  std::vector<float> out(count);
  for (std::size_t i = 0; i < count; ++i) out[i] = get_f32(bytes.data() + 4 * i);
  return out;
}

std::string format_double(double v) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

bool parse_double(std::string_view s, double& v) {
  const char* b = s.data();
  const char* e = s.data() + s.size();
  if (b != e && *b == '+') ++b;
  const auto res = std::from_chars(b, e, v);
  return res.ec == std::errc() && res.ptr == e;
}

bool parse_int(std::string_view s, long& v) {
  const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  return res.ec == std::errc() && res.ptr == s.data() + s.size();
}

std::string lower_ext(const fs::path& p) {
  std::string e = p.extension().string();
  for (auto& ch : e) ch = static_cast<char>(std::tolower(static_cast<unsigned char>(ch)));
  return e;
}

// Whitespace-separated token with its byte offset.
struct Token {
  std::string_view text;
  std::size_t offset = 0;
};

class Tokenizer {
 public:
  explicit Tokenizer(std::string_view s, std::size_t pos = 0) : s_(s), pos_(pos) {}

  bool next(Token& t) {
    while (pos_ < s_.size() && std::isspace(static_cast<unsigned char>(s_[pos_]))) ++pos_;
    if (pos_ >= s_.size()) return false;
    const std::size_t start = pos_;
    while (pos_ < s_.size() && !std::isspace(static_cast<unsigned char>(s_[pos_]))) ++pos_;
    t = {s_.substr(start, pos_ - start), start};
    return true;
  }

  Token expect(const char* what) {
    Token t;
    if (!next(t)) throw ParseError(std::string("unexpected end of file, expected ") + what, pos_);
    return t;
  }

  void expect_word(const char* word) {
    const Token t = expect(word);
    if (t.text != word) throw ParseError(std::string("expected '") + word + "'", t.offset);
  }

  double expect_number() {
    const Token t = expect("a number");
    double v;
    if (!parse_double(t.text, v) || !std::isfinite(v))
      throw ParseError("invalid number '" + std::string(t.text) + "'", t.offset);
    return v;
  }

  void skip_line() {
    while (pos_ < s_.size() && s_[pos_] != '\n') ++pos_;
  }
  std::size_t pos() const noexcept { return pos_; }

 private:
  std::string_view s_;
  std::size_t pos_;
};

}  // namespace

// ---------------------------------------------------------------- PFM

namespace {

std::string encode_pfm(const Grid<float>& img) {
  std::string out = "Pf\n" + std::to_string(img.cols()) + " " + std::to_string(img.rows()) + "\n-1.0\n";
  out.reserve(out.size() + img.size() * 4);
  for (int r = img.rows() - 1; r >= 0; --r)
    for (int c = 0; c < img.cols(); ++c) put_f32(out, img(r, c));
  return out;
}

Grid<float> decode_pfm(const std::string& bytes) {
  Tokenizer tok(bytes);
  const Token magic = tok.expect("PFM magic");
  if (magic.text == "PF") throw ContentError("colour PFM is not supported for height maps");
  if (magic.text != "Pf") throw ParseError("not a PFM file", magic.offset);
  long w = 0, h = 0;
  const Token tw = tok.expect("width");
  if (!parse_int(tw.text, w) || w <= 0) throw ParseError("invalid PFM width", tw.offset);
  const Token th = tok.expect("height");
  if (!parse_int(th.text, h) || h <= 0) throw ParseError("invalid PFM height", th.offset);
  const Token ts = tok.expect("scale");
  double scale = 0;
  if (!parse_double(ts.text, scale) || scale == 0 || !std::isfinite(scale))
    throw ParseError("invalid PFM scale", ts.offset);
  std::size_t pos = tok.pos();
  if (pos >= bytes.size() || !std::isspace(static_cast<unsigned char>(bytes[pos])))
    throw ParseError("missing whitespace after PFM header", pos);
  ++pos;
  const std::size_t need = static_cast<std::size_t>(w) * static_cast<std::size_t>(h) * 4;
  if (bytes.size() - pos != need)
    throw ParseError("PFM payload has " + std::to_string(bytes.size() - pos) + " bytes, expected " +
                         std::to_string(need),
                     pos);
  const bool little = scale < 0;
  Grid<float> img(static_cast<int>(h), static_cast<int>(w));
  const char* p = bytes.data() + pos;
  for (long r = h - 1; r >= 0; --r)
    for (long c = 0; c < w; ++c, p += 4) img(static_cast<int>(r), static_cast<int>(c)) = get_f32(p, little);
  return img;
}

}  // namespace

void save_pfm(const fs::path& path, const Grid<float>& img) { write_file(path, encode_pfm(img)); }

Grid<float> load_pfm(const fs::path& path) { return decode_pfm(read_file(path)); }

// ---------------------------------------------------------------- PNG

ImageRgb load_png(const fs::path& path) {
  const std::string bytes = read_file(path);
  png_image image;
  std::memset(&image, 0, sizeof image);
  image.version = PNG_IMAGE_VERSION;
  if (!png_image_begin_read_from_memory(&image, bytes.data(), bytes.size()))
    throw ParseError(std::string("invalid PNG: ") + image.message, 0);
  image.format = PNG_FORMAT_RGB;
  std::vector<unsigned char> buf(PNG_IMAGE_SIZE(image));
  if (!png_image_finish_read(&image, nullptr, buf.data(), 0, nullptr)) {
    const std::string msg = image.message;
    png_image_free(&image);
    throw ParseError("invalid PNG: " + msg, 0);
  }
  ImageRgb img(static_cast<int>(image.height), static_cast<int>(image.width));
  for (std::size_t i = 0; i < img.size(); ++i)
    img[i] = {static_cast<float>(buf[3 * i]), static_cast<float>(buf[3 * i + 1]),
              static_cast<float>(buf[3 * i + 2])};
  return img;
}

void save_png(const fs::path& path, const ImageRgb& img) {
  if (img.empty()) throw DomainError("cannot write an empty PNG");
  std::vector<unsigned char> buf(img.size() * 3);
  const ImageRgb q = quantize(img);
  for (std::size_t i = 0; i < q.size(); ++i)
    for (int c = 0; c < 3; ++c) buf[3 * i + c] = static_cast<unsigned char>(q[i][c]);
  png_image image;
  std::memset(&image, 0, sizeof image);
  image.version = PNG_IMAGE_VERSION;
  image.width = static_cast<png_uint_32>(img.cols());
  image.height = static_cast<png_uint_32>(img.rows());
  image.format = PNG_FORMAT_RGB;
  if (!png_image_write_to_file(&image, path.string().c_str(), 0, buf.data(), 0, nullptr))
    throw IoError("cannot write PNG " + path.string() + ": " + image.message);
}

// ---------------------------------------------------------------- meshes

namespace {

TriangleMesh finish_mesh(TriangleMesh mesh) {
  if (mesh.triangles.empty()) throw ContentError("mesh has no triangles");
  mesh.validate();
  return mesh;
}

TriangleMesh parse_stl_ascii(const std::string& text) {
  TriangleMesh mesh;
  Tokenizer tok(text);
  tok.expect_word("solid");
  tok.skip_line();
  for (;;) {
    const Token t = tok.expect("'facet' or 'endsolid'");
    if (t.text == "endsolid") break;
    if (t.text != "facet") throw ParseError("expected 'facet'", t.offset);
    tok.expect_word("normal");
    for (int i = 0; i < 3; ++i) tok.expect_number();
    tok.expect_word("outer");
    tok.expect_word("loop");
    std::array<int, 3> tri{};
    for (int k = 0; k < 3; ++k) {
      tok.expect_word("vertex");
      Eigen::Vector3d v;
      for (int i = 0; i < 3; ++i) v[i] = tok.expect_number();
      tri[k] = static_cast<int>(mesh.vertices.size());
      mesh.vertices.push_back(v);
    }
    tok.expect_word("endloop");
    tok.expect_word("endfacet");
    mesh.triangles.push_back(tri);
  }
  return mesh;
}

TriangleMesh parse_stl_binary(const std::string& bytes) {
  if (bytes.size() < 84) throw ParseError("binary STL shorter than its header", bytes.size());
  const std::uint32_t n = get_u32(bytes.data() + 80);
  const std::uint64_t need = 84 + 50ull * n;
  if (bytes.size() != need)
    throw ParseError("binary STL declares " + std::to_string(n) + " triangles but has " +
                         std::to_string(bytes.size()) + " bytes",
                     80);
  TriangleMesh mesh;
  mesh.vertices.reserve(3ull * n);
  mesh.triangles.reserve(n);
  for (std::uint32_t t = 0; t < n; ++t) {
    const char* p = bytes.data() + 84 + 50ull * t + 12;
    std::array<int, 3> tri{};
    for (int k = 0; k < 3; ++k) {
      Eigen::Vector3d v;
      for (int i = 0; i < 3; ++i) v[i] = get_f32(p + 12 * k + 4 * i);
      if (!v.allFinite()) throw ParseError("non-finite vertex", 84 + 50ull * t + 12 + 12 * k);
      tri[k] = static_cast<int>(mesh.vertices.size());
      mesh.vertices.push_back(v);
    }
    mesh.triangles.push_back(tri);
  }
  return mesh;
}

}  // namespace

TriangleMesh parse_stl(const std::string& bytes) {
  std::size_t p = 0;
  while (p < bytes.size() && std::isspace(static_cast<unsigned char>(bytes[p]))) ++p;
  // Binary headers may also start with "solid"; a consistent binary length wins.
  const bool ascii = bytes.compare(p, 5, "solid") == 0 &&
                     !(bytes.size() >= 84 && 84 + 50ull * get_u32(bytes.data() + 80) == bytes.size());
  return finish_mesh(ascii ? parse_stl_ascii(bytes) : parse_stl_binary(bytes));
}

TriangleMesh parse_obj(const std::string& text) {
  TriangleMesh mesh;
  std::size_t line_start = 0;
  while (line_start < text.size()) {
    std::size_t line_end = text.find('\n', line_start);
    if (line_end == std::string::npos) line_end = text.size();
    const std::string_view line(text.data() + line_start, line_end - line_start);
    Tokenizer tok(line);
    Token head;
    if (tok.next(head) && head.text[0] != '#') {
      if (head.text == "v") {
        Eigen::Vector3d v;
        for (int i = 0; i < 3; ++i) {
          Token t;
          double x;
          if (!tok.next(t)) throw ParseError("vertex needs three coordinates", line_start + line.size());
          if (!parse_double(t.text, x) || !std::isfinite(x))
            throw ParseError("invalid coordinate", line_start + t.offset);
          v[i] = x;
        }
        mesh.vertices.push_back(v);
      } else if (head.text == "f") {
        std::vector<int> idx;
        Token t;
        while (tok.next(t)) {
          const std::string_view first = t.text.substr(0, t.text.find('/'));
          long i = 0;
          if (!parse_int(first, i) || i == 0)
            throw ParseError("invalid face index", line_start + t.offset);
          const long n = static_cast<long>(mesh.vertices.size());
          const long k = i > 0 ? i - 1 : n + i;
          if (k < 0 || k >= n) throw ParseError("face index out of range", line_start + t.offset);
          idx.push_back(static_cast<int>(k));
        }
        if (idx.size() < 3) throw ParseError("face needs at least three vertices", line_start);
        for (std::size_t k = 1; k + 1 < idx.size(); ++k)
          mesh.triangles.push_back({idx[0], idx[k], idx[k + 1]});
      }
    }
    line_start = line_end + 1;
  }
  return finish_mesh(std::move(mesh));
}

TriangleMesh load_mesh(const fs::path& path) {
  const std::string ext = lower_ext(path);
  if (ext != ".stl" && ext != ".obj")
    throw IoError("unsupported mesh extension '" + ext + "' (expected .stl or .obj)");
  const std::string bytes = read_file(path);
  return ext == ".stl" ? parse_stl(bytes) : parse_obj(bytes);
}

void save_stl(const fs::path& path, const TriangleMesh& mesh) {
  mesh.validate();
  std::string out(80, '\0');
  const char* tag = "gelsim binary stl";
  std::copy(tag, tag + std::strlen(tag), out.begin());
  put_u32(out, static_cast<std::uint32_t>(mesh.triangles.size()));
  for (const auto& t : mesh.triangles) {
    const Eigen::Vector3d& a = mesh.vertices[t[0]];
    const Eigen::Vector3d& b = mesh.vertices[t[1]];
    const Eigen::Vector3d& c = mesh.vertices[t[2]];
    Eigen::Vector3d n = (b - a).cross(c - a);
    if (n.norm() > 0) n.normalize();
    for (int i = 0; i < 3; ++i) put_f32(out, static_cast<float>(n[i]));
    for (const auto* v : {&a, &b, &c})
      for (int i = 0; i < 3; ++i) put_f32(out, static_cast<float>((*v)[i]));
    out.push_back('\0');
    out.push_back('\0');
  }
  write_file(path, out);
}

// ---------------------------------------------------------------- CSV

namespace {

struct CsvRow {
  double v[5];
};

std::vector<CsvRow> parse_csv5(const std::string& text, const char* header) {
  std::vector<CsvRow> rows;
  std::size_t pos = 0;
  bool seen_header = false;
  while (pos < text.size()) {
    std::size_t end = text.find('\n', pos);
    if (end == std::string::npos) end = text.size();
    std::string_view line(text.data() + pos, end - pos);
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    if (!line.empty()) {
      if (!seen_header) {
        if (line != header) throw ParseError(std::string("expected header '") + header + "'", pos);
        seen_header = true;
      } else {
        CsvRow row{};
        std::size_t field_start = 0;
        for (int k = 0; k < 5; ++k) {
          const std::size_t comma = k < 4 ? line.find(',', field_start) : line.size();
          if (comma == std::string_view::npos)
            throw ParseError("expected 5 comma-separated fields", pos + field_start);
          const std::string_view f = line.substr(field_start, comma - field_start);
          if (!parse_double(f, row.v[k]) || !std::isfinite(row.v[k]))
            throw ParseError("invalid number '" + std::string(f) + "'", pos + field_start);
          field_start = comma + 1;
        }
        rows.push_back(row);
      }
    }
    pos = end + 1;
  }
  if (!seen_header) throw ParseError(std::string("missing header '") + header + "'", 0);
  return rows;
}

fs::path sidecar_of(const fs::path& csv) {
  fs::path p = csv;
  p.replace_extension(".json");
  return p;
}

json parse_json(const std::string& text, const fs::path& path) {
  try {
    return json::parse(text);
  } catch (const json::parse_error& e) {
    throw ParseError(path.string() + ": " + e.what(), e.byte);
  }
}

std::string dump_json(const json& j) { return j.dump(2) + "\n"; }

const char* kFieldHeader = "x_mm,y_mm,ux_mm,uy_mm,uz_mm";
const char* kMarkerHeader = "mx_mm,my_mm,ux_mm,uy_mm,uz_mm";

}  // namespace

void save_unit_field(const fs::path& csv_path, const UnitLoadField& field) {
  if (field.displacement.size() != field.grid.size())
    throw DomainError("unit-load field size does not match its grid");
  std::string out = std::string(kFieldHeader) + "\n";
  for (int r = 0; r < field.grid.rows; ++r)
    for (int c = 0; c < field.grid.cols; ++c) {
      const Vec3d& u = field.displacement[static_cast<std::size_t>(r) * field.grid.cols + c];
      out += format_double(field.grid.x(c)) + "," + format_double(field.grid.y(r)) + "," +
             format_double(u.x()) + "," + format_double(u.y()) + "," + format_double(u.z()) + "\n";
    }
  write_file(csv_path, out);
  json side = {{"format", "gelsim-unit-field"},
               {"version", kFieldCsvVersion},
               {"load_position_mm", {field.load_x, field.load_y}},
               {"prescribed_mm", {field.prescribed.x(), field.prescribed.y(), field.prescribed.z()}},
               {"spacing_mm", field.grid.spacing},
               {"depth_mm", field.depth_mm}};
  write_file(sidecar_of(csv_path), dump_json(side));
}

UnitLoadField load_unit_field(const fs::path& csv_path) {
  const fs::path side_path = sidecar_of(csv_path);
  const json side = parse_json(read_file(side_path), side_path);
  UnitLoadField f;
  try {
    const auto& lp = side.at("load_position_mm");
    const auto& pr = side.at("prescribed_mm");
    if (lp.size() != 2 || pr.size() != 3) throw ContentError("sidecar vectors have the wrong length");
    f.load_x = lp.at(0).get<double>();
    f.load_y = lp.at(1).get<double>();
    f.prescribed = Vec3d(pr.at(0).get<double>(), pr.at(1).get<double>(), pr.at(2).get<double>());
    f.grid.spacing = side.at("spacing_mm").get<double>();
    f.depth_mm = side.value("depth_mm", 0.0);
  } catch (const json::exception& e) {
    throw ContentError(side_path.string() + ": " + e.what());
  }
  const double s = f.grid.spacing;
  if (!(s > 0)) throw ContentError(side_path.string() + ": spacing_mm must be positive");

  const auto rows = parse_csv5(read_file(csv_path), kFieldHeader);
  if (rows.empty()) throw ContentError(csv_path.string() + ": no samples");
  auto index_of = [&](double v) {
    const double k = std::round(v / s);
    if (std::abs(v / s - k) > 1e-6)
      throw ContentError(csv_path.string() + ": sample off the " + format_double(s) + " mm grid");
    return static_cast<long>(k);
  };
  long c_min = index_of(rows[0].v[0]), c_max = c_min, r_min = index_of(rows[0].v[1]), r_max = r_min;
  for (const auto& row : rows) {
    c_min = std::min(c_min, index_of(row.v[0]));
    c_max = std::max(c_max, index_of(row.v[0]));
    r_min = std::min(r_min, index_of(row.v[1]));
    r_max = std::max(r_max, index_of(row.v[1]));
  }
  f.grid.first_col = static_cast<int>(c_min);
  f.grid.first_row = static_cast<int>(r_min);
  f.grid.cols = static_cast<int>(c_max - c_min + 1);
  f.grid.rows = static_cast<int>(r_max - r_min + 1);
  if (f.grid.size() != rows.size())
    throw ContentError(csv_path.string() + ": samples do not form a complete regular grid");
  f.displacement.assign(f.grid.size(), Vec3d::Zero());
  std::vector<bool> seen(f.grid.size(), false);
  for (const auto& row : rows) {
    const std::size_t i = static_cast<std::size_t>(index_of(row.v[1]) - r_min) * f.grid.cols +
                          static_cast<std::size_t>(index_of(row.v[0]) - c_min);
    if (seen[i]) throw ContentError(csv_path.string() + ": duplicate grid sample");
    seen[i] = true;
    f.displacement[i] = Vec3d(row.v[2], row.v[3], row.v[4]);
  }
  return f;
}

std::vector<UnitLoadField> load_unit_fields(const fs::path& dir) {
  if (!fs::is_directory(dir)) throw IoError("not a directory: " + dir.string());
  std::vector<fs::path> csvs;
  for (const auto& e : fs::directory_iterator(dir))
    if (e.is_regular_file() && lower_ext(e.path()) == ".csv" && fs::exists(sidecar_of(e.path())))
      csvs.push_back(e.path());
  std::sort(csvs.begin(), csvs.end());
  std::vector<UnitLoadField> out;
  for (const auto& p : csvs) out.push_back(load_unit_field(p));
  return out;
}

std::vector<std::string> missing_unit_cases(const std::vector<UnitLoadField>& fields) {
  std::map<double, std::set<std::string>> kinds;
  for (const auto& f : fields) {
    const Vec3d& p = f.prescribed;
    const double tol = 1e-9 * std::max(p.norm(), 1e-300);
    const bool has_x = std::abs(p.x()) > tol, has_y = std::abs(p.y()) > tol;
    const bool has_z = std::abs(p.z()) > tol;
    std::string kind;
    if (has_z && !has_x && !has_y) kind = "z";
    else if (has_z && has_x && !has_y) kind = "z+x";
    else if (has_z && has_y && !has_x) kind = "z+y";
    else return {};
    double depth = f.depth_mm;
    for (const auto& [d, _] : kinds)
      if (std::abs(d - depth) <= 1e-9) depth = d;
    kinds[depth].insert(kind);
  }
  std::vector<std::string> missing;
  if (kinds.empty()) return {"z", "z+x", "z+y"};
  for (const auto& [depth, present] : kinds)
    for (const char* k : {"z", "z+x", "z+y"})
      if (!present.count(k)) {
        std::string label = k;
        if (kinds.size() > 1) label += " at depth " + format_double(depth) + " mm";
        missing.push_back(label);
      }
  return missing;
}

void save_markers(const fs::path& path, const MarkerField& markers) {
  if (markers.positions.size() != markers.displacement.size())
    throw DomainError("marker positions and displacements differ in count");
  std::string out = std::string(kMarkerHeader) + "\n";
  for (std::size_t i = 0; i < markers.positions.size(); ++i) {
    const auto& p = markers.positions[i];
    const auto& u = markers.displacement[i];
    out += format_double(p.x()) + "," + format_double(p.y()) + "," + format_double(u.x()) + "," +
           format_double(u.y()) + "," + format_double(u.z()) + "\n";
  }
  write_file(path, out);
}

MarkerField load_markers(const fs::path& path) {
  MarkerField m;
  for (const auto& row : parse_csv5(read_file(path), kMarkerHeader)) {
    m.positions.emplace_back(row.v[0], row.v[1]);
    m.displacement.emplace_back(row.v[2], row.v[3], row.v[4]);
  }
  return m;
}

// ---------------------------------------------------------------- bundle

namespace {

std::uint32_t crc_of(const std::string& bytes) {
  uLong crc = crc32(0L, Z_NULL, 0);
  std::size_t pos = 0;
  while (pos < bytes.size()) {
    const auto chunk = static_cast<uInt>(std::min<std::size_t>(bytes.size() - pos, 1u << 30));
    crc = crc32(crc, reinterpret_cast<const Bytef*>(bytes.data() + pos), chunk);
    pos += chunk;
  }
  return static_cast<std::uint32_t>(crc);
}

std::string encode_fill(const std::vector<BinFill>& fill) {
  std::string out(fill.size(), '\0');
  for (std::size_t i = 0; i < fill.size(); ++i) out[i] = static_cast<char>(fill[i]);
  return out;
}

std::vector<BinFill> decode_fill(const std::string& bytes, std::size_t count, const std::string& what) {
  if (bytes.size() != count) throw ContentError(what + ": wrong size");
  std::vector<BinFill> out(count);
  for (std::size_t i = 0; i < count; ++i) {
    const auto v = static_cast<unsigned char>(bytes[i]);
    if (v > 2) throw ContentError(what + ": invalid fill flag");
    out[i] = static_cast<BinFill>(v);
  }
  return out;
}

std::string encode_tensors(const std::vector<Eigen::Matrix3d>& t) {
  std::string out;
  out.reserve(t.size() * 36);
  for (const auto& m : t)
    for (int a = 0; a < 3; ++a)
      for (int b = 0; b < 3; ++b) put_f32(out, static_cast<float>(m(a, b)));
  return out;
}

std::vector<Eigen::Matrix3d> decode_tensors(const std::string& bytes, std::size_t count,
                                            const std::string& what) {
  const auto v = decode_f32(bytes, count * 9, what);
  std::vector<Eigen::Matrix3d> out(count);
  for (std::size_t k = 0; k < count; ++k)
    for (int a = 0; a < 3; ++a)
      for (int b = 0; b < 3; ++b) out[k](a, b) = v[k * 9 + a * 3 + b];
  return out;
}

// Collects payload files in memory before anything touches the disk.
struct Payload {
  std::map<std::string, std::string> files;
  void add(const std::string& name, std::string bytes) { files[name] = std::move(bytes); }
};

}  // namespace

void save_bundle(const fs::path& dir, const CalibrationBundle& b) {
  b.sensor.validate();
  if (!b.background.empty() &&
      (b.background.rows() != b.sensor.height_px || b.background.cols() != b.sensor.width_px))
    throw DomainError("bundle background does not match the sensor size");

  const fs::path parent = dir.has_parent_path() ? dir.parent_path() : fs::path(".");
  fs::create_directories(parent);
  const std::string base = dir.filename().string();
  const fs::path tmp = parent / ("." + base + ".tmp");
  const fs::path old = parent / ("." + base + ".old");
  fs::remove_all(tmp);
  fs::create_directories(tmp);

  Payload pay;
  json manifest = {{"format", kBundleFormat}, {"version", kBundleVersion}};
  manifest["sensor"] = {{"width_px", b.sensor.width_px},
                        {"height_px", b.sensor.height_px},
                        {"pixel_pitch_mm", b.sensor.pixel_pitch},
                        {"max_indent_mm", b.sensor.max_indent}};
  pay.add("gel.pfm", encode_pfm(b.sensor.gel_surface));
  if (!b.background.empty()) {
    save_png(tmp / "background.png", b.background);
    pay.add("background.png", read_file(tmp / "background.png"));
  }
  auto bins_json = [](const BinSpec& s) {
    return json{{"bins", s.bins}, {"theta_max_rad", s.theta_max}};
  };
  if (b.poly) {
    manifest["poly"] = bins_json(b.poly->spec());
    manifest["poly"]["shape"] = {b.poly->bins(), b.poly->bins(), 3, kPolyTerms};
    pay.add("poly.f32", encode_f32(b.poly->raw()));
    pay.add("poly_fill.u8", encode_fill(b.poly->fill_mask()));
  }
  if (b.lookup) {
    manifest["lookup"] = bins_json(b.lookup->spec());
    manifest["lookup"]["shape"] = {b.lookup->bins(), b.lookup->bins(), 3};
    pay.add("lookup.f32", encode_f32(b.lookup->raw()));
    pay.add("lookup_fill.u8", encode_fill(b.lookup->fill_mask()));
  }
  if (b.shadows) {
    json sm = {{"depth_step_mm", b.shadows->depth_step_mm}, {"lights", json::array()}};
    for (int l = 0; l < 3; ++l) {
      const auto& light = b.shadows->lights[l];
      json lj = {{"dir", {light.dir_x, light.dir_y}},
                 {"unit_width_px", light.unit_width_px},
                 {"masks", json::array()}};
      for (std::size_t k = 0; k < light.masks.size(); ++k) {
        const auto& m = light.masks[k];
        const std::string file = "light" + std::to_string(l) + "_mask" + std::to_string(k) + ".f32";
        lj["masks"].push_back({{"depth_mm", m.depth_mm},
                               {"anchor", {m.anchor.row, m.anchor.col}},
                               {"dir", {m.dir_x, m.dir_y}},
                               {"length_px", m.length_px},
                               {"rows", m.stencil.rows()},
                               {"cols", m.stencil.cols()},
                               {"file", file}});
        pay.add("shadow/" + file, encode_f32({m.stencil.values().begin(), m.stencil.values().end()}));
      }
      sm["lights"].push_back(std::move(lj));
    }
    pay.add("shadow/manifest.json", dump_json(sm));
  }
  if (b.kernel) {
    const auto& k = *b.kernel;
    const std::size_t n = static_cast<std::size_t>(k.width()) * k.width();
    if (k.surface.size() != n || (!k.layer.empty() && k.layer.size() != n))
      throw DomainError("kernel tensor count does not match its radius");
    json em = {{"radius", k.radius},
               {"spacing_mm", k.spacing},
               {"layer_depth_mm", k.layer_depth_mm},
               {"shape", {k.width(), k.width(), 3, 3}},
               {"response", "kernel.f32"}};
    if (!k.layer.empty()) {
      em["surface"] = "kernel_surface.f32";
      pay.add("elastic/kernel.f32", encode_tensors(k.layer));
      pay.add("elastic/kernel_surface.f32", encode_tensors(k.surface));
    } else {
      pay.add("elastic/kernel.f32", encode_tensors(k.surface));
    }
    pay.add("elastic/manifest.json", dump_json(em));
  }

  json files = json::object();
  for (const auto& [name, bytes] : pay.files) {
    const fs::path p = tmp / name;
    fs::create_directories(p.parent_path());
    write_file(p, bytes);
    files[name] = {{"bytes", bytes.size()}, {"crc32", crc_of(bytes)}};
  }
  manifest["files"] = files;
  write_file(tmp / "manifest.json", dump_json(manifest));

  fs::remove_all(old);
  if (fs::exists(dir)) fs::rename(dir, old);
  fs::rename(tmp, dir);
  fs::remove_all(old);
}

CalibrationBundle load_bundle(const fs::path& dir) {
  const fs::path mpath = dir / "manifest.json";
  if (!fs::exists(mpath)) throw IoError("bundle manifest missing: " + mpath.string());
  const json manifest = parse_json(read_file(mpath), mpath);

  std::map<std::string, std::string> files;
  try {
    if (manifest.at("format").get<std::string>() != kBundleFormat)
      throw ContentError("not a calibration bundle: " + dir.string());
    if (manifest.at("version").get<int>() != kBundleVersion)
      throw ContentError("unsupported bundle version " + manifest.at("version").dump());
    for (const auto& [name, meta] : manifest.at("files").items()) {
      if (name.find("..") != std::string::npos || fs::path(name).is_absolute())
        throw ContentError("invalid payload path " + name);
      const fs::path p = dir / name;
      if (!fs::exists(p)) throw IntegrityError("bundle payload missing: " + name);
      std::string bytes = read_file(p);
      if (bytes.size() != meta.at("bytes").get<std::uint64_t>())
        throw IntegrityError("bundle payload " + name + " has " + std::to_string(bytes.size()) +
                             " bytes, manifest says " + meta.at("bytes").dump());
      if (crc_of(bytes) != meta.at("crc32").get<std::uint32_t>())
        throw IntegrityError("bundle payload " + name + " fails its CRC-32 check");
      files[name] = std::move(bytes);
    }
  } catch (const json::exception& e) {
    throw ContentError(mpath.string() + ": " + e.what());
  }

  auto need = [&](const std::string& name) -> const std::string& {
    auto it = files.find(name);
    if (it == files.end()) throw IntegrityError("bundle manifest does not list " + name);
    return it->second;
  };

  CalibrationBundle b;
  try {
    const auto& s = manifest.at("sensor");
    b.sensor.width_px = s.at("width_px").get<int>();
    b.sensor.height_px = s.at("height_px").get<int>();
    b.sensor.pixel_pitch = s.at("pixel_pitch_mm").get<double>();
    b.sensor.max_indent = s.at("max_indent_mm").get<double>();
    b.sensor.gel_surface = HeightMap(decode_pfm(need("gel.pfm")));
    b.sensor.validate();
    if (files.count("background.png")) b.background = load_png(dir / "background.png");

    auto spec_of = [](const json& j) {
      BinSpec spec;
      spec.bins = j.at("bins").get<int>();
      spec.theta_max = j.at("theta_max_rad").get<double>();
      if (spec.bins <= 0) throw ContentError("bin count must be positive");
      return spec;
    };
    if (manifest.contains("poly")) {
      PolynomialTable t(spec_of(manifest["poly"]));
      const std::size_t nb = static_cast<std::size_t>(t.bins()) * t.bins();
      t.raw() = decode_f32(need("poly.f32"), nb * 3 * kPolyTerms, "poly.f32");
      t.fill_mask() = decode_fill(need("poly_fill.u8"), nb, "poly_fill.u8");
      b.poly = std::move(t);
    }
    if (manifest.contains("lookup")) {
      LookupTable t(spec_of(manifest["lookup"]));
      const std::size_t nb = static_cast<std::size_t>(t.bins()) * t.bins();
      t.raw() = decode_f32(need("lookup.f32"), nb * 3, "lookup.f32");
      t.fill_mask() = decode_fill(need("lookup_fill.u8"), nb, "lookup_fill.u8");
      b.lookup = std::move(t);
    }
    if (files.count("shadow/manifest.json")) {
      const json sm = parse_json(need("shadow/manifest.json"), dir / "shadow/manifest.json");
      ShadowMaskSet set;
      set.depth_step_mm = sm.at("depth_step_mm").get<double>();
      const auto& lights = sm.at("lights");
      if (lights.size() != 3) throw ContentError("shadow manifest needs three light groups");
      for (int l = 0; l < 3; ++l) {
        const auto& lj = lights[l];
        auto& light = set.lights[l];
        light.dir_x = lj.at("dir").at(0).get<double>();
        light.dir_y = lj.at("dir").at(1).get<double>();
        light.unit_width_px = lj.at("unit_width_px").get<double>();
        for (const auto& mj : lj.at("masks")) {
          ShadowMask m;
          m.depth_mm = mj.at("depth_mm").get<double>();
          m.anchor = {mj.at("anchor").at(0).get<int>(), mj.at("anchor").at(1).get<int>()};
          m.dir_x = mj.at("dir").at(0).get<double>();
          m.dir_y = mj.at("dir").at(1).get<double>();
          m.length_px = mj.at("length_px").get<double>();
          const int rows = mj.at("rows").get<int>(), cols = mj.at("cols").get<int>();
          if (rows < 0 || cols < 0) throw ContentError("negative stencil size");
          const std::string file = "shadow/" + mj.at("file").get<std::string>();
          const auto v = decode_f32(need(file), static_cast<std::size_t>(rows) * cols, file);
          m.stencil = Grid<float>(rows, cols);
          std::copy(v.begin(), v.end(), m.stencil.data());
          light.masks.push_back(std::move(m));
        }
      }
      b.shadows = std::move(set);
    }
    if (files.count("elastic/manifest.json")) {
      const json em = parse_json(need("elastic/manifest.json"), dir / "elastic/manifest.json");
      TensorKernel k;
      k.radius = em.at("radius").get<int>();
      k.spacing = em.at("spacing_mm").get<double>();
      k.layer_depth_mm = em.at("layer_depth_mm").get<double>();
      if (k.radius < 0 || !(k.spacing > 0)) throw ContentError("invalid kernel geometry");
      const std::size_t n = static_cast<std::size_t>(k.width()) * k.width();
      const std::string response = "elastic/" + em.at("response").get<std::string>();
      if (em.contains("surface")) {
        k.layer = decode_tensors(need(response), n, response);
        const std::string surface = "elastic/" + em.at("surface").get<std::string>();
        k.surface = decode_tensors(need(surface), n, surface);
      } else {
        k.surface = decode_tensors(need(response), n, response);
      }
      b.kernel = std::move(k);
    }
  } catch (const json::exception& e) {
    throw ContentError(dir.string() + ": " + e.what());
  }
  return b;
}

}  // namespace gelsim
