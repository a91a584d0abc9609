#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "gelsim/elastic.hpp"
#include "gelsim/geometry.hpp"
#include "gelsim/grid.hpp"
#include "gelsim/optics.hpp"
#include "gelsim/shadow.hpp"

namespace gelsim {

namespace fs = std::filesystem;

inline constexpr const char* kBundleFormat = "gelsim-bundle";
inline constexpr int kBundleVersion = 1;
inline constexpr int kFieldCsvVersion = 1;
inline constexpr int kSceneVersion = 1;

// PFM, single channel ("Pf"), little-endian, rows stored bottom to top.
Grid<float> load_pfm(const fs::path& path);
void save_pfm(const fs::path& path, const Grid<float>& img);

// 8-bit RGB PNG. Saving quantizes to the nearest level in [0, 255].
ImageRgb load_png(const fs::path& path);
void save_png(const fs::path& path, const ImageRgb& img);

/// STL (ASCII or binary) or OBJ, chosen by extension. OBJ polygons are fan
/// triangulated. Throws ParseError with a byte offset on malformed input and
/// ContentError when the mesh has no triangles.
TriangleMesh load_mesh(const fs::path& path);
TriangleMesh parse_stl(const std::string& bytes);
TriangleMesh parse_obj(const std::string& text);
void save_stl(const fs::path& path, const TriangleMesh& mesh);  // binary

/// Unit-load field as `x_mm,y_mm,ux_mm,uy_mm,uz_mm` CSV plus a JSON sidecar
/// (same stem, `.json`) holding the load position, prescription, spacing and
/// sampling depth.
UnitLoadField load_unit_field(const fs::path& csv_path);
void save_unit_field(const fs::path& csv_path, const UnitLoadField& field);
/// Every `*.csv` with a sidecar in `dir`, sorted by file name.
std::vector<UnitLoadField> load_unit_fields(const fs::path& dir);

/// Names of the canonical unit cases ("z", "z+x", "z+y") absent from each
/// sampling depth. Empty when the set is complete or uses other prescriptions.
std::vector<std::string> missing_unit_cases(const std::vector<UnitLoadField>& fields);

MarkerField load_markers(const fs::path& path);
void save_markers(const fs::path& path, const MarkerField& markers);

/// Everything calibration produces, persisted as one directory.
struct CalibrationBundle {
  SensorConfig sensor;
  ImageRgb background;
  std::optional<PolynomialTable> poly;
  std::optional<LookupTable> lookup;
  std::optional<ShadowMaskSet> shadows;
  std::optional<TensorKernel> kernel;
};

/// Writes through a sibling temp directory and renames it into place.
/// Kernel tensors are stored as float32.
void save_bundle(const fs::path& dir, const CalibrationBundle& bundle);

/// Verifies size and CRC-32 of every payload listed in the manifest before
/// decoding. Throws IntegrityError on any mismatch.
CalibrationBundle load_bundle(const fs::path& dir);

}  // namespace gelsim
