#pragma once

#include <vector>

#include <Eigen/Core>

#include "gelsim/geometry.hpp"

namespace gelsim {

using Vec3d = Eigen::Vector3d;

/// Regular grid of surface nodes aligned with the sensor frame. Node (r, c)
/// sits at x = (c + first_col) * spacing, y = (r + first_row) * spacing, so
/// the frame origin is always a node when it lies inside the grid.
struct NodeGrid {
  int rows = 0;
  int cols = 0;
  double spacing = 0.1;  // mm
  int first_row = 0;
  int first_col = 0;

  /// Largest grid of nodes that falls inside the sensor image.
  static NodeGrid for_sensor(const SensorConfig& cfg, double spacing);

  double x(int c) const noexcept { return (c + first_col) * spacing; }
  double y(int r) const noexcept { return (r + first_row) * spacing; }
  std::size_t size() const noexcept { return static_cast<std::size_t>(rows) * cols; }
  bool contains(int r, int c) const noexcept { return r >= 0 && c >= 0 && r < rows && c < cols; }
  bool operator==(const NodeGrid&) const = default;
};

struct NodeIndex {
  int row = 0;
  int col = 0;
  bool operator==(const NodeIndex&) const = default;
};

/// Displacement field produced by loading a single node (FEM export or the
/// analytic half-space). `depth_mm` is how far below the surface the field
/// was sampled; the loaded node's prescription is always at the surface.
struct UnitLoadField {
  double load_x = 0;  // mm, must coincide with a node
  double load_y = 0;
  Vec3d prescribed = Vec3d::Zero();
  double depth_mm = 0;
  NodeGrid grid;
  std::vector<Vec3d> displacement;  // row-major over grid
};

/// Shift-invariant 3x3 influence tensors on relative node offsets.
///
/// `surface` couples active nodes to each other and drives the amendment
/// solve. `layer` maps virtual loads to displacements at the marker layer
/// and drives the final superposition; it is empty when both were
/// calibrated at the same depth.
struct TensorKernel {
  int radius = 0;
  double spacing = 0.1;
  double layer_depth_mm = 0;
  std::vector<Eigen::Matrix3d> surface;  // (2r+1)^2, index [dy + r][dx + r]
  std::vector<Eigen::Matrix3d> layer;

  int width() const noexcept { return 2 * radius + 1; }
  bool covers(int dx, int dy) const noexcept {
    return dx >= -radius && dx <= radius && dy >= -radius && dy <= radius;
  }
  const Eigen::Matrix3d& at(int dx, int dy) const noexcept { return surface[slot(dx, dy)]; }
  const Eigen::Matrix3d& response(int dx, int dy) const noexcept {
    return layer.empty() ? surface[slot(dx, dy)] : layer[slot(dx, dy)];
  }
  std::size_t slot(int dx, int dy) const noexcept {
    return static_cast<std::size_t>(dy + radius) * width() + (dx + radius);
  }
};

/// Recovers T(offset) by least squares from unit cases whose prescriptions
/// span 3D. Cases at the shallowest depth give the surface tensors; cases
/// at a deeper depth, if present, give the layer tensors.
TensorKernel calibrate_tensors(const std::vector<UnitLoadField>& cases, int radius);

/// Half-space Green's tensor: displacement at lateral offset (dx, dy) and
/// `depth` below the surface per unit surface point force, z out of the gel.
/// The surface self-point is averaged over a spacing x spacing patch.
Eigen::Matrix3d halfspace_green(double dx, double dy, double depth, double nu,
                                double shear_modulus, double spacing);

/// Boussinesq/Cerruti fields for unit forces (0,0,-1), (1,0,-1) and (0,1,-1) N
/// on a (2 extent + 1)^2 grid centred on the load. With layer_depth > 0 the
/// three surface fields are followed by the same loads sampled at that depth.
std::vector<UnitLoadField> generate_halfspace_fields(double youngs_modulus, double nu,
                                                     double spacing, int extent,
                                                     double layer_depth = 0.0);

/// Nodes in contact and their initial (load) displacements.
struct ActiveSet {
  std::vector<NodeIndex> nodes;
  std::vector<Vec3d> displacement;

  std::size_t size() const noexcept { return nodes.size(); }
};

struct AmendOptions {
  int direct_limit = 4000;          // dense LU up to this many active nodes
  double condition_limit = 1e12;    // Tikhonov beyond this estimate
  double tikhonov_scale = 1e-8;     // lambda = scale * trace(M) / m
  double iterative_tolerance = 1e-9;
  int max_iterations = 5000;
};

struct AmendReport {
  double condition[3] = {1, 1, 1};  // reciprocal-condition based estimate, direct path only
  bool regularized[3] = {false, false, false};
  double residual[3] = {0, 0, 0};   // ||M u~ - u|| / ||u|| per axis
  int iterations[3] = {0, 0, 0};    // 0 for the direct path
};

/// Per-axis amendment: solves M_a u~[a] = u[a] where M_a(i, j) is the [a, a]
/// entry of T(node_i - node_j).
std::vector<Vec3d> amend_active(const ActiveSet& active, const TensorKernel& kernel,
                                const AmendOptions& opts = {}, AmendReport* report = nullptr);

/// Same system matrix the amendment solves, for inspection and tests.
Eigen::MatrixXd amendment_matrix(const ActiveSet& active, const TensorKernel& kernel, int axis);

struct DisplacementField {
  NodeGrid grid;
  std::vector<Vec3d> u;

  const Vec3d& at(int r, int c) const noexcept {
    return u[static_cast<std::size_t>(r) * grid.cols + c];
  }
};

enum class KernelLayer { surface, markers };
enum class Coupling { full, diagonal };

/// u_j = sum_i T(node_j - node_i) u~_i over the whole grid. `diagonal` keeps
/// only the per-axis [a, a] terms, the form the amendment enforces.
DisplacementField superpose(const ActiveSet& active, const std::vector<Vec3d>& amended,
                            const TensorKernel& kernel, const NodeGrid& grid,
                            KernelLayer layer = KernelLayer::markers,
                            Coupling coupling = Coupling::full);

/// Active nodes under the contact mask with displacement
/// (shear_x, shear_y, -indentation), indentation measured from the gel surface.
ActiveSet press_to_active(const HeightMap& h, const ContactMask& mask, const SensorConfig& cfg,
                          double shear_x, double shear_y, const NodeGrid& grid);

struct MarkerField {
  std::vector<Eigen::Vector2d> positions;  // mm, sensor frame
  std::vector<Vec3d> displacement;
};

/// Regular marker layout: `rows` x `cols` markers starting at (origin_x, origin_y).
std::vector<Eigen::Vector2d> marker_grid(int rows, int cols, double spacing, double origin_x,
                                         double origin_y);

/// Bilinear interpolation of the field at each marker. Throws RangeError for
/// markers outside the node grid.
MarkerField sample_markers(const DisplacementField& field,
                           const std::vector<Eigen::Vector2d>& positions);

}  // namespace gelsim
