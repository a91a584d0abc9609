#include "gelsim/elastic.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numbers>
#include <string>

#include <fftw3.h>
#include <Eigen/Dense>
#include <Eigen/IterativeLinearSolvers>
#include <Eigen/Sparse>

#include "gelsim/error.hpp"

namespace gelsim {
namespace detail {
class ConvolutionOperator;
}
}  // namespace gelsim

namespace Eigen::internal {
template <>
struct traits<gelsim::detail::ConvolutionOperator>
    : public Eigen::internal::traits<Eigen::SparseMatrix<double>> {};
}  // namespace Eigen::internal

namespace gelsim {
namespace detail {

/// Matrix-free M_a: one axis of the kernel convolved over the active
/// bounding box with FFTW, gathered back at the active nodes.
class ConvolutionOperator : public Eigen::EigenBase<ConvolutionOperator> {
 public:
  using Scalar = double;
  using RealScalar = double;
  using StorageIndex = int;
  enum { ColsAtCompileTime = Eigen::Dynamic, MaxColsAtCompileTime = Eigen::Dynamic, IsRowMajor = false };

  ConvolutionOperator(const ActiveSet& active, const TensorKernel& kernel, int axis) {
    int r0 = active.nodes[0].row, r1 = r0, c0 = active.nodes[0].col, c1 = c0;
    for (const auto& n : active.nodes) {
      r0 = std::min(r0, n.row);
      r1 = std::max(r1, n.row);
      c0 = std::min(c0, n.col);
      c1 = std::max(c1, n.col);
    }
    const int a = r1 - r0 + 1, b = c1 - c0 + 1;
    const int reach_r = std::min(kernel.radius, a - 1);
    const int reach_c = std::min(kernel.radius, b - 1);
    rows_ = fft_size(a + reach_r);
    cols_ = fft_size(b + reach_c);
    half_ = cols_ / 2 + 1;
    m_ = static_cast<int>(active.size());
    offsets_.reserve(active.size());
    for (const auto& n : active.nodes)
      offsets_.push_back(static_cast<std::size_t>(n.row - r0) * cols_ + (n.col - c0));

    const std::size_t nreal = static_cast<std::size_t>(rows_) * cols_;
    const std::size_t ncplx = static_cast<std::size_t>(rows_) * half_;
    real_ = fftw_alloc_real(nreal);
    spec_ = fftw_alloc_complex(ncplx);
    kspec_ = fftw_alloc_complex(ncplx);
    forward_ = fftw_plan_dft_r2c_2d(rows_, cols_, real_, spec_, FFTW_ESTIMATE);
    backward_ = fftw_plan_dft_c2r_2d(rows_, cols_, spec_, real_, FFTW_ESTIMATE);

    std::fill(real_, real_ + nreal, 0.0);
    for (int dy = -reach_r; dy <= reach_r; ++dy)
      for (int dx = -reach_c; dx <= reach_c; ++dx) {
        const int rr = (dy + rows_) % rows_, cc = (dx + cols_) % cols_;
        real_[static_cast<std::size_t>(rr) * cols_ + cc] = kernel.at(dx, dy)(axis, axis);
      }
    fftw_execute(forward_);
    const double norm = 1.0 / static_cast<double>(nreal);
    for (std::size_t i = 0; i < ncplx; ++i) {
      kspec_[i][0] = spec_[i][0] * norm;
      kspec_[i][1] = spec_[i][1] * norm;
    }
  }

  ConvolutionOperator(const ConvolutionOperator&) = delete;
  ConvolutionOperator& operator=(const ConvolutionOperator&) = delete;

  ~ConvolutionOperator() {
    fftw_destroy_plan(forward_);
    fftw_destroy_plan(backward_);
    fftw_free(real_);
    fftw_free(spec_);
    fftw_free(kspec_);
  }

  Eigen::Index rows() const { return m_; }
  Eigen::Index cols() const { return m_; }

  template <typename Rhs>
  Eigen::Product<ConvolutionOperator, Rhs, Eigen::AliasFreeProduct> operator*(
      const Eigen::MatrixBase<Rhs>& x) const {
    return Eigen::Product<ConvolutionOperator, Rhs, Eigen::AliasFreeProduct>(*this, x.derived());
  }

  void apply(const double* x, double* y) const {
    std::fill(real_, real_ + static_cast<std::size_t>(rows_) * cols_, 0.0);
    for (int i = 0; i < m_; ++i) real_[offsets_[i]] = x[i];
    fftw_execute(forward_);
    const std::size_t ncplx = static_cast<std::size_t>(rows_) * half_;
    for (std::size_t i = 0; i < ncplx; ++i) {
      const double re = spec_[i][0] * kspec_[i][0] - spec_[i][1] * kspec_[i][1];
      const double im = spec_[i][0] * kspec_[i][1] + spec_[i][1] * kspec_[i][0];
      spec_[i][0] = re;
      spec_[i][1] = im;
    }
    fftw_execute(backward_);
    for (int i = 0; i < m_; ++i) y[i] = real_[offsets_[i]];
  }

 private:
  static int fft_size(int n) {
    for (int s = std::max(n, 1);; ++s) {
      int v = s;
      for (int p : {2, 3, 5, 7})
        while (v % p == 0) v /= p;
      if (v == 1) return s;
    }
  }

  int rows_ = 0, cols_ = 0, half_ = 0, m_ = 0;
  std::vector<std::size_t> offsets_;
  double* real_ = nullptr;
  fftw_complex* spec_ = nullptr;
  fftw_complex* kspec_ = nullptr;
  fftw_plan forward_ = nullptr;
  fftw_plan backward_ = nullptr;
};

}  // namespace detail
}  // namespace gelsim

namespace Eigen::internal {
template <typename Rhs>
struct generic_product_impl<gelsim::detail::ConvolutionOperator, Rhs, SparseShape, DenseShape,
                            GemvProduct>
    : generic_product_impl_base<gelsim::detail::ConvolutionOperator, Rhs,
                                generic_product_impl<gelsim::detail::ConvolutionOperator, Rhs>> {
  template <typename Dest>
  static void scaleAndAddTo(Dest& dst, const gelsim::detail::ConvolutionOperator& lhs,
                            const Rhs& rhs, const double& alpha) {
    Eigen::VectorXd x = rhs;
    Eigen::VectorXd y(x.size());
    lhs.apply(x.data(), y.data());
    dst.noalias() += alpha * y;
  }
};
}  // namespace Eigen::internal

namespace gelsim {

namespace {

constexpr double kEps = 1e-9;

int node_index_of(double coord, double spacing, int first, const char* what) {
  const double v = coord / spacing - first;
  const double k = std::round(v);
  if (std::abs(v - k) > 1e-6)
    throw CalibrationError(std::string("load ") + what + " does not coincide with a node");
  return static_cast<int>(k);
}

}  // namespace

NodeGrid NodeGrid::for_sensor(const SensorConfig& cfg, double spacing) {
  if (!(spacing > 0)) throw ConfigError("node spacing must be positive");
  const double x0 = cfg.x_of_col(0), x1 = cfg.x_of_col(cfg.width_px - 1);
  const double y0 = cfg.y_of_row(0), y1 = cfg.y_of_row(cfg.height_px - 1);
  NodeGrid g;
  g.spacing = spacing;
  g.first_col = static_cast<int>(std::ceil(x0 / spacing - kEps));
  g.first_row = static_cast<int>(std::ceil(y0 / spacing - kEps));
  g.cols = static_cast<int>(std::floor(x1 / spacing + kEps)) - g.first_col + 1;
  g.rows = static_cast<int>(std::floor(y1 / spacing + kEps)) - g.first_row + 1;
  if (g.rows <= 0 || g.cols <= 0) throw ConfigError("node spacing exceeds the sensor size");
  return g;
}

Eigen::Matrix3d halfspace_green(double dx, double dy, double depth, double nu,
                                double shear_modulus, double spacing) {
  const double c = 1.0 / (4.0 * std::numbers::pi * shear_modulus);
  const double k = 1.0 - 2.0 * nu;
  Eigen::Matrix3d g = Eigen::Matrix3d::Zero();
  const double rho = std::sqrt(dx * dx + dy * dy + depth * depth);
  if (rho < 1e-12 * spacing) {
    const double a = 4.0 * std::log1p(std::numbers::sqrt2) / spacing;
    g(0, 0) = g(1, 1) = c * a * (2.0 - nu);
    g(2, 2) = c * a * 2.0 * (1.0 - nu);
    return g;
  }
  const double z = depth;
  const double r3 = rho * rho * rho;
  const double rz = rho + z;
  // Columns are the force directions, rows the displacement components.
  g(0, 0) = c * (1.0 / rho + dx * dx / r3 + k * (1.0 / rz - dx * dx / (rho * rz * rz)));
  g(1, 1) = c * (1.0 / rho + dy * dy / r3 + k * (1.0 / rz - dy * dy / (rho * rz * rz)));
  g(1, 0) = g(0, 1) = c * (dx * dy / r3 - k * dx * dy / (rho * rz * rz));
  g(2, 0) = -c * (dx * z / r3 + k * dx / (rho * rz));
  g(2, 1) = -c * (dy * z / r3 + k * dy / (rho * rz));
  g(0, 2) = -c * (dx * z / r3 - k * dx / (rho * rz));
  g(1, 2) = -c * (dy * z / r3 - k * dy / (rho * rz));
  g(2, 2) = c * (z * z / r3 + 2.0 * (1.0 - nu) / rho);
  return g;
}

std::vector<UnitLoadField> generate_halfspace_fields(double youngs_modulus, double nu,
                                                     double spacing, int extent,
                                                     double layer_depth) {
  if (!(youngs_modulus > 0)) throw DomainError("elastic modulus must be positive");
  if (!(nu > 0 && nu <= 0.5)) throw DomainError("Poisson ratio must lie in (0, 0.5]");
  if (!(spacing > 0)) throw DomainError("grid spacing must be positive");
  if (extent < 0) throw DomainError("extent must be non-negative");
  if (!(layer_depth >= 0)) throw DomainError("layer depth must be non-negative");

  const double shear = youngs_modulus / (2.0 * (1.0 + nu));
  NodeGrid grid{2 * extent + 1, 2 * extent + 1, spacing, -extent, -extent};
  const Eigen::Matrix3d self = halfspace_green(0, 0, 0, nu, shear, spacing);
  const Vec3d forces[3] = {Vec3d(0, 0, -1), Vec3d(1, 0, -1), Vec3d(0, 1, -1)};

  std::vector<double> depths{0.0};
  if (layer_depth > 0) depths.push_back(layer_depth);

  std::vector<UnitLoadField> out;
  for (double depth : depths) {
    std::vector<Eigen::Matrix3d> green(grid.size());
    for (int r = 0; r < grid.rows; ++r)
      for (int c = 0; c < grid.cols; ++c)
        green[static_cast<std::size_t>(r) * grid.cols + c] =
            halfspace_green(grid.x(c), grid.y(r), depth, nu, shear, spacing);
    for (const Vec3d& f : forces) {
      UnitLoadField field;
      field.grid = grid;
      field.depth_mm = depth;
      field.prescribed = self * f;
      field.displacement.resize(grid.size());
      for (std::size_t i = 0; i < grid.size(); ++i) field.displacement[i] = green[i] * f;
      out.push_back(std::move(field));
    }
  }
  return out;
}

namespace {

std::vector<Eigen::Matrix3d> fit_tensors(const std::vector<const UnitLoadField*>& cases,
                                         int radius, double spacing) {
  const int k = static_cast<int>(cases.size());
  Eigen::MatrixXd p(k, 3);
  for (int i = 0; i < k; ++i) p.row(i) = cases[i]->prescribed.transpose();
  if (!p.allFinite()) throw CalibrationError("prescribed displacements must be finite");
  Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(p);
  qr.setThreshold(1e-10);
  if (qr.rank() < 3)
    throw CalibrationError("unit cases do not span three independent prescriptions");

  std::vector<int> load_r(k), load_c(k);
  for (int i = 0; i < k; ++i) {
    const auto& f = *cases[i];
    load_c[i] = node_index_of(f.load_x, spacing, f.grid.first_col, "x");
    load_r[i] = node_index_of(f.load_y, spacing, f.grid.first_row, "y");
  }

  const int w = 2 * radius + 1;
  std::vector<Eigen::Matrix3d> out(static_cast<std::size_t>(w) * w);
  Eigen::MatrixXd u(k, 3);
  for (int dy = -radius; dy <= radius; ++dy)
    for (int dx = -radius; dx <= radius; ++dx) {
      for (int i = 0; i < k; ++i) {
        const auto& f = *cases[i];
        const int r = load_r[i] + dy, c = load_c[i] + dx;
        if (!f.grid.contains(r, c))
          throw CalibrationError("unit-load field does not cover the requested radius");
        u.row(i) = f.displacement[static_cast<std::size_t>(r) * f.grid.cols + c].transpose();
      }
      if (!u.allFinite()) throw CalibrationError("unit-load field contains non-finite values");
      // Rows of P^T and U^T: p_i^T T^T = u_i^T.
      const Eigen::Matrix3d tt = qr.solve(u);
      out[static_cast<std::size_t>(dy + radius) * w + (dx + radius)] = tt.transpose();
    }
  return out;
}

}  // namespace

TensorKernel calibrate_tensors(const std::vector<UnitLoadField>& cases, int radius) {
  if (radius < 0) throw CalibrationError("radius must be non-negative");
  if (cases.size() < 3) throw CalibrationError("at least three unit cases are required");
  const double spacing = cases.front().grid.spacing;
  std::map<double, std::vector<const UnitLoadField*>> by_depth;
  for (const auto& f : cases) {
    if (std::abs(f.grid.spacing - spacing) > 1e-12 * spacing)
      throw CalibrationError("unit cases must share the grid spacing");
    if (f.displacement.size() != f.grid.size())
      throw CalibrationError("unit-load field size does not match its grid");
    auto it = std::find_if(by_depth.begin(), by_depth.end(), [&](const auto& kv) {
      return std::abs(kv.first - f.depth_mm) <= 1e-9;
    });
    if (it == by_depth.end()) it = by_depth.emplace(f.depth_mm, std::vector<const UnitLoadField*>{}).first;
    it->second.push_back(&f);
  }
  if (by_depth.size() > 2)
    throw CalibrationError("unit cases span more than two sampling depths");

  TensorKernel kernel;
  kernel.radius = radius;
  kernel.spacing = spacing;
  kernel.surface = fit_tensors(by_depth.begin()->second, radius, spacing);
  kernel.layer_depth_mm = by_depth.begin()->first;
  if (by_depth.size() == 2) {
    kernel.layer = fit_tensors(by_depth.rbegin()->second, radius, spacing);
    kernel.layer_depth_mm = by_depth.rbegin()->first;
  }
  return kernel;
}

Eigen::MatrixXd amendment_matrix(const ActiveSet& active, const TensorKernel& kernel, int axis) {
  const int m = static_cast<int>(active.size());
  Eigen::MatrixXd mat = Eigen::MatrixXd::Zero(m, m);
  for (int j = 0; j < m; ++j)
    for (int i = 0; i < m; ++i) {
      const int dx = active.nodes[i].col - active.nodes[j].col;
      const int dy = active.nodes[i].row - active.nodes[j].row;
      if (kernel.covers(dx, dy)) mat(i, j) = kernel.at(dx, dy)(axis, axis);
    }
  return mat;
}

namespace {

void check_active(const ActiveSet& active) {
  if (active.displacement.size() != active.nodes.size())
    throw DomainError("active set needs one displacement per node");
  std::vector<std::pair<int, int>> seen;
  seen.reserve(active.size());
  for (const auto& n : active.nodes) seen.emplace_back(n.row, n.col);
  std::sort(seen.begin(), seen.end());
  if (std::adjacent_find(seen.begin(), seen.end()) != seen.end())
    throw DomainError("active node indices must be distinct");
}

bool axis_symmetric(const TensorKernel& kernel, int axis) {
  for (int dy = -kernel.radius; dy <= kernel.radius; ++dy)
    for (int dx = -kernel.radius; dx <= kernel.radius; ++dx) {
      const double a = kernel.at(dx, dy)(axis, axis), b = kernel.at(-dx, -dy)(axis, axis);
      if (std::abs(a - b) > 1e-12 * std::max({std::abs(a), std::abs(b), 1e-300})) return false;
    }
  return true;
}

std::string cond_text(double cond) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.3e", cond);
  return buf;
}

}  // namespace

std::vector<Vec3d> amend_active(const ActiveSet& active, const TensorKernel& kernel,
                                const AmendOptions& opts, AmendReport* report) {
  check_active(active);
  const int m = static_cast<int>(active.size());
  if (m == 0) throw DomainError("amendment needs at least one active node");
  AmendReport rep;
  std::vector<Vec3d> out(m);

  for (int axis = 0; axis < 3; ++axis) {
    Eigen::VectorXd rhs(m);
    for (int i = 0; i < m; ++i) rhs[i] = active.displacement[i][axis];
    const double rhs_norm = rhs.norm();
    Eigen::VectorXd sol = Eigen::VectorXd::Zero(m);
    if (rhs_norm == 0.0) {
      for (int i = 0; i < m; ++i) out[i][axis] = 0.0;
      continue;
    }

    if (m <= opts.direct_limit) {
      Eigen::MatrixXd mat = amendment_matrix(active, kernel, axis);
      Eigen::PartialPivLU<Eigen::MatrixXd> lu(mat);
      double rcond = lu.rcond();
      double cond = rcond > 0 ? 1.0 / rcond : std::numeric_limits<double>::infinity();
      rep.condition[axis] = cond;
      Eigen::MatrixXd system = mat;
      if (!(cond <= opts.condition_limit)) {
        const double lambda = opts.tikhonov_scale * mat.trace() / m;
        system.diagonal().array() += lambda;
        lu.compute(system);
        rcond = lu.rcond();
        rep.regularized[axis] = true;
        if (!(rcond > 0) || !std::isfinite(1.0 / rcond))
          throw NumericalError("amendment matrix singular after regularization (condition " +
                               cond_text(cond) + ")");
      }
      sol = lu.solve(rhs);
      rep.residual[axis] = (system * sol - rhs).norm() / rhs_norm;
      if (!sol.allFinite())
        throw NumericalError("amendment solve produced non-finite values (condition " +
                             cond_text(cond) + ")");
    } else {
      detail::ConvolutionOperator op(active, kernel, axis);
      if (axis_symmetric(kernel, axis)) {
        Eigen::ConjugateGradient<detail::ConvolutionOperator, Eigen::Lower | Eigen::Upper,
                                 Eigen::IdentityPreconditioner>
            cg;
        cg.setTolerance(opts.iterative_tolerance);
        cg.setMaxIterations(opts.max_iterations);
        cg.compute(op);
        sol = cg.solve(rhs);
        rep.iterations[axis] = static_cast<int>(cg.iterations());
      } else {
        Eigen::BiCGSTAB<detail::ConvolutionOperator, Eigen::IdentityPreconditioner> bicg;
        bicg.setTolerance(opts.iterative_tolerance);
        bicg.setMaxIterations(opts.max_iterations);
        bicg.compute(op);
        sol = bicg.solve(rhs);
        rep.iterations[axis] = static_cast<int>(bicg.iterations());
      }
      Eigen::VectorXd check(m);
      op.apply(sol.data(), check.data());
      rep.residual[axis] = (check - rhs).norm() / rhs_norm;
      rep.condition[axis] = std::numeric_limits<double>::quiet_NaN();
      if (!sol.allFinite() || !(rep.residual[axis] <= 10 * opts.iterative_tolerance))
        throw NumericalError("iterative amendment did not converge (relative residual " +
                             cond_text(rep.residual[axis]) + ")");
    }
    for (int i = 0; i < m; ++i) out[i][axis] = sol[i];
  }
  if (report) *report = rep;
  return out;
}

DisplacementField superpose(const ActiveSet& active, const std::vector<Vec3d>& amended,
                            const TensorKernel& kernel, const NodeGrid& grid, KernelLayer layer,
                            Coupling coupling) {
  if (amended.size() != active.nodes.size())
    throw DomainError("amended displacements must match the active set");
  DisplacementField field{grid, std::vector<Vec3d>(grid.size(), Vec3d::Zero())};
  if (active.nodes.empty()) return field;

  std::vector<int> slot(grid.size(), -1);
  int r0 = grid.rows, r1 = -1, c0 = grid.cols, c1 = -1;
  for (std::size_t i = 0; i < active.nodes.size(); ++i) {
    const auto& n = active.nodes[i];
    if (!grid.contains(n.row, n.col)) throw RangeError("active node outside the node grid");
    slot[static_cast<std::size_t>(n.row) * grid.cols + n.col] = static_cast<int>(i);
    r0 = std::min(r0, n.row);
    r1 = std::max(r1, n.row);
    c0 = std::min(c0, n.col);
    c1 = std::max(c1, n.col);
  }

  const int rad = kernel.radius;
  const bool diagonal = coupling == Coupling::diagonal;
  for (int r = std::max(0, r0 - rad); r <= std::min(grid.rows - 1, r1 + rad); ++r)
    for (int c = std::max(0, c0 - rad); c <= std::min(grid.cols - 1, c1 + rad); ++c) {
      Vec3d sum = Vec3d::Zero();
      for (int dy = -rad; dy <= rad; ++dy) {
        const int sr = r - dy;
        if (sr < r0 || sr > r1) continue;
        for (int dx = -rad; dx <= rad; ++dx) {
          const int sc = c - dx;
          if (sc < c0 || sc > c1) continue;
          const int i = slot[static_cast<std::size_t>(sr) * grid.cols + sc];
          if (i < 0) continue;
          const Eigen::Matrix3d& t =
              layer == KernelLayer::surface ? kernel.at(dx, dy) : kernel.response(dx, dy);
          if (diagonal)
            sum += t.diagonal().cwiseProduct(amended[i]);
          else
            sum += t * amended[i];
        }
      }
      field.u[static_cast<std::size_t>(r) * grid.cols + c] = sum;
    }
  return field;
}

ActiveSet press_to_active(const HeightMap& h, const ContactMask& mask, const SensorConfig& cfg,
                          double shear_x, double shear_y, const NodeGrid& grid) {
  if (!h.same_shape(mask) || !h.same_shape(cfg.gel_surface))
    throw DomainError("height map, contact mask and gel surface must share a shape");
  ActiveSet active;
  for (int r = 0; r < grid.rows; ++r)
    for (int c = 0; c < grid.cols; ++c) {
      const long pr = std::lround(cfg.row_of_y(grid.y(r)));
      const long pc = std::lround(cfg.col_of_x(grid.x(c)));
      if (!mask.contains(static_cast<int>(pr), static_cast<int>(pc))) continue;
      if (!mask(static_cast<int>(pr), static_cast<int>(pc))) continue;
      const double indent = static_cast<double>(cfg.gel_surface(pr, pc)) - h(pr, pc);
      active.nodes.push_back({r, c});
      active.displacement.emplace_back(shear_x, shear_y, -std::max(indent, 0.0));
    }
  return active;
}

std::vector<Eigen::Vector2d> marker_grid(int rows, int cols, double spacing, double origin_x,
                                         double origin_y) {
  if (rows < 0 || cols < 0) throw ConfigError("marker grid dimensions must be non-negative");
  if (!(spacing > 0)) throw ConfigError("marker spacing must be positive");
  std::vector<Eigen::Vector2d> out;
  out.reserve(static_cast<std::size_t>(rows) * cols);
  for (int r = 0; r < rows; ++r)
    for (int c = 0; c < cols; ++c) out.emplace_back(origin_x + c * spacing, origin_y + r * spacing);
  return out;
}

MarkerField sample_markers(const DisplacementField& field,
                           const std::vector<Eigen::Vector2d>& positions) {
  const NodeGrid& g = field.grid;
  MarkerField out;
  out.positions = positions;
  out.displacement.reserve(positions.size());
  for (const auto& p : positions) {
    double fx = p.x() / g.spacing - g.first_col;
    double fy = p.y() / g.spacing - g.first_row;
    if (!(fx >= -kEps && fy >= -kEps && fx <= g.cols - 1 + kEps && fy <= g.rows - 1 + kEps))
      throw RangeError("marker outside the node grid");
    fx = std::clamp(fx, 0.0, static_cast<double>(g.cols - 1));
    fy = std::clamp(fy, 0.0, static_cast<double>(g.rows - 1));
    // Snap positions that sit on a node so they return the nodal value exactly.
    if (std::abs(fx - std::round(fx)) <= kEps) fx = std::round(fx);
    if (std::abs(fy - std::round(fy)) <= kEps) fy = std::round(fy);
    const int c0 = std::min(static_cast<int>(fx), std::max(g.cols - 2, 0));
    const int r0 = std::min(static_cast<int>(fy), std::max(g.rows - 2, 0));
    const int c1 = std::min(c0 + 1, g.cols - 1), r1 = std::min(r0 + 1, g.rows - 1);
    const double tx = fx - c0, ty = fy - r0;
    const Vec3d v = (1 - ty) * ((1 - tx) * field.at(r0, c0) + tx * field.at(r0, c1)) +
                    ty * ((1 - tx) * field.at(r1, c0) + tx * field.at(r1, c1));
    out.displacement.push_back(v);
  }
  return out;
}

}  // namespace gelsim
