#include <cmath>
#include <numbers>
#include <random>

#include <gtest/gtest.h>

#include "gelsim/elastic.hpp"
#include "gelsim/error.hpp"
#include "gelsim/synth.hpp"

using namespace gelsim;

namespace {

constexpr double kPi = std::numbers::pi;

const std::vector<Vec3d>& canonical_prescriptions() {
  static const std::vector<Vec3d> p = {Vec3d(0, 0, 1), Vec3d(1, 0, 1), Vec3d(0, 1, 1)};
  return p;
}

const TensorKernel& analytic_kernel() {
  static const TensorKernel k =
      calibrate_tensors(generate_halfspace_fields(0.2, 0.45, 0.1, 30, 0.5), 30);
  return k;
}

// Sign of T_ab under offset reversal: in-plane/normal cross terms are odd.
double parity(int a, int b) { return ((a == 2) != (b == 2)) ? -1.0 : 1.0; }

double max_norm(const std::vector<Vec3d>& u) {
  double m = 0;
  for (const auto& v : u) m = std::max(m, v.cwiseAbs().maxCoeff());
  return m;
}

// Random distinct nodes inside a square patch of the grid.
ActiveSet random_active(const NodeGrid& grid, int m, int patch, std::mt19937_64& rng) {
  std::uniform_int_distribution<int> pick(0, patch * patch - 1);
  std::normal_distribution<double> n(0, 0.1);
  std::vector<std::uint8_t> used(static_cast<std::size_t>(patch) * patch, 0);
  const int r0 = grid.rows / 2 - patch / 2, c0 = grid.cols / 2 - patch / 2;
  ActiveSet a;
  while (static_cast<int>(a.size()) < m) {
    const int k = pick(rng);
    if (used[k]) continue;
    used[k] = 1;
    a.nodes.push_back({r0 + k / patch, c0 + k % patch});
    a.displacement.push_back(Vec3d(n(rng), n(rng), -std::abs(n(rng)) - 0.05));
  }
  return a;
}

NodeGrid square_grid(int n, double spacing = 0.1) { return NodeGrid{n, n, spacing, -n / 2, -n / 2}; }

}  // namespace

TEST(NodeGrid, ForSensorContainsOrigin) {
  const auto cfg = SensorConfig::flat(640, 480, 0.025);
  const auto g = NodeGrid::for_sensor(cfg, 0.1);
  EXPECT_EQ(g.x(-g.first_col), 0.0);
  EXPECT_EQ(g.y(-g.first_row), 0.0);
  EXPECT_GE(g.x(0), cfg.x_of_col(0) - 1e-12);
  EXPECT_LE(g.x(g.cols - 1), cfg.x_of_col(cfg.width_px - 1) + 1e-12);
  EXPECT_GE(g.y(0), cfg.y_of_row(0) - 1e-12);
  EXPECT_LE(g.y(g.rows - 1), cfg.y_of_row(cfg.height_px - 1) + 1e-12);
  EXPECT_EQ(g.cols, 160);
  EXPECT_EQ(g.rows, 120);
}

TEST(Calibrate, PlantedKernelRoundTrip) {
  const auto planted = synth::random_kernel(4, 0.1, 42);
  auto prescriptions = canonical_prescriptions();
  prescriptions.push_back(Vec3d(0.5, -0.25, 2.0));
  const auto fields = synth::kernel_fields(planted, prescriptions, 6);
  const auto k = calibrate_tensors(fields, 4);
  ASSERT_EQ(k.radius, 4);
  EXPECT_TRUE(k.layer.empty());
  for (int dy = -4; dy <= 4; ++dy)
    for (int dx = -4; dx <= 4; ++dx)
      EXPECT_LE((k.at(dx, dy) - planted.at(dx, dy)).cwiseAbs().maxCoeff(), 1e-9);
}

TEST(Calibrate, RadiusZeroKeepsSelfTerm) {
  const auto planted = synth::random_kernel(2, 0.1, 1);
  const auto k = calibrate_tensors(synth::kernel_fields(planted, canonical_prescriptions(), 2), 0);
  ASSERT_EQ(k.surface.size(), 1u);
  EXPECT_LE((k.at(0, 0) - planted.at(0, 0)).cwiseAbs().maxCoeff(), 1e-9);
}

TEST(Calibrate, RejectsBadCaseSets) {
  const auto planted = synth::random_kernel(2, 0.1, 2);
  const std::vector<Vec3d> degenerate = {Vec3d(0, 0, 1), Vec3d(0, 0, 2), Vec3d(1, 0, 1)};
  EXPECT_THROW(calibrate_tensors(synth::kernel_fields(planted, degenerate, 2), 2), CalibrationError);
  auto two = synth::kernel_fields(planted, canonical_prescriptions(), 2);
  two.pop_back();
  EXPECT_THROW(calibrate_tensors(two, 2), CalibrationError);
  // Requested radius beyond the field extent.
  EXPECT_THROW(calibrate_tensors(synth::kernel_fields(planted, canonical_prescriptions(), 2), 3),
               CalibrationError);
  auto mixed = synth::kernel_fields(planted, canonical_prescriptions(), 2);
  mixed[1].grid.spacing = 0.2;
  EXPECT_THROW(calibrate_tensors(mixed, 1), CalibrationError);
}

TEST(HalfSpace, SurfaceMatchesBoussinesqCerruti) {
  const double E = 2.0, nu = 0.3, h = 0.1;
  const auto fields = generate_halfspace_fields(E, nu, h, 20);
  ASSERT_EQ(fields.size(), 3u);
  const auto& normal = fields[0];
  const auto& tangential = fields[1];
  for (int r = 0; r < normal.grid.rows; ++r)
    for (int c = 0; c < normal.grid.cols; ++c) {
      const double x = normal.grid.x(c), y = normal.grid.y(r), rr = std::hypot(x, y);
      if (rr < 1e-9) continue;
      const std::size_t i = static_cast<std::size_t>(r) * normal.grid.cols + c;
      // Unit normal load pressing into the gel.
      const double uz = -(1 - nu * nu) / (kPi * E * rr);
      const double ur = -(1 - 2 * nu) * (1 + nu) / (2 * kPi * E * rr);
      EXPECT_NEAR(normal.displacement[i].z(), uz, 1e-12);
      EXPECT_NEAR(normal.displacement[i].x(), ur * x / rr, 1e-12);
      EXPECT_NEAR(normal.displacement[i].y(), ur * y / rr, 1e-12);
      // Unit tangential load along +x, with the same normal load on top.
      const Vec3d d = tangential.displacement[i] - normal.displacement[i];
      const double ux = (1 + nu) / (kPi * E * rr) * ((1 - nu) + nu * x * x / (rr * rr));
      const double uy = (1 + nu) / (kPi * E * rr) * (nu * x * y / (rr * rr));
      EXPECT_NEAR(d.x(), ux, 1e-12);
      EXPECT_NEAR(d.y(), uy, 1e-12);
      EXPECT_NEAR(std::abs(d.z()), (1 + nu) * (1 - 2 * nu) * std::abs(x) / (2 * kPi * E * rr * rr),
                  1e-12);
    }
}

TEST(HalfSpace, IncompressibleHasNoRadialTerm) {
  const auto fields = generate_halfspace_fields(1.0, 0.5, 0.1, 8);
  for (const auto& u : fields[0].displacement) {
    EXPECT_EQ(u.x(), 0.0);
    EXPECT_EQ(u.y(), 0.0);
  }
}

TEST(HalfSpace, StiffnessScaling) {
  const auto a = generate_halfspace_fields(1.0, 0.4, 0.1, 6, 0.5);
  const auto b = generate_halfspace_fields(2.0, 0.4, 0.1, 6, 0.5);
  ASSERT_EQ(a.size(), 6u);
  for (std::size_t f = 0; f < a.size(); ++f) {
    EXPECT_LE((b[f].prescribed * 2 - a[f].prescribed).norm(), 1e-12);
    for (std::size_t i = 0; i < a[f].displacement.size(); ++i)
      EXPECT_LE((b[f].displacement[i] * 2 - a[f].displacement[i]).norm(), 1e-12);
  }
}

TEST(HalfSpace, SurfaceDecayIsInverseDistance) {
  const auto fields = generate_halfspace_fields(1.0, 0.45, 0.1, 30);
  for (const auto& f : fields) {
    const int row = f.grid.rows / 2;
    auto mag_r = [&](int c) {
      const double r = std::abs(f.grid.x(c));
      return f.displacement[static_cast<std::size_t>(row) * f.grid.cols + c].norm() * r;
    };
    const int c0 = f.grid.cols / 2 + 5;
    for (int c = c0; c < f.grid.cols; ++c) EXPECT_NEAR(mag_r(c) / mag_r(c0), 1.0, 0.02);
  }
}

TEST(HalfSpace, RejectsBadParameters) {
  EXPECT_THROW(generate_halfspace_fields(0.0, 0.3, 0.1, 5), DomainError);
  EXPECT_THROW(generate_halfspace_fields(1.0, 0.6, 0.1, 5), DomainError);
  EXPECT_THROW(generate_halfspace_fields(1.0, 0.0, 0.1, 5), DomainError);
  EXPECT_THROW(generate_halfspace_fields(1.0, 0.3, -0.1, 5), DomainError);
}

TEST(AnalyticKernel, SelfTermAndSymmetry) {
  const auto& k = analytic_kernel();
  EXPECT_LE((k.at(0, 0) - Eigen::Matrix3d::Identity()).cwiseAbs().maxCoeff(), 1e-12);
  ASSERT_FALSE(k.layer.empty());
  for (const auto* tensors : {&k.surface, &k.layer})
    for (int dy = -k.radius; dy <= k.radius; ++dy)
      for (int dx = -k.radius; dx <= k.radius; ++dx) {
        const auto& t = (*tensors)[k.slot(dx, dy)];
        const auto& m = (*tensors)[k.slot(-dx, -dy)];
        for (int a = 0; a < 3; ++a)
          for (int b = 0; b < 3; ++b) ASSERT_NEAR(m(a, b), parity(a, b) * t(a, b), 1e-12);
      }
  // Normal response dominates at the loaded node.
  const auto& s = k.at(0, 0);
  EXPECT_GT(std::abs(s(2, 2)), std::abs(s(0, 2)));
  EXPECT_GT(std::abs(s(2, 2)), std::abs(s(1, 2)));
}

TEST(AnalyticKernel, Decay) {
  const auto& k = analytic_kernel();
  for (int d = 6; d < k.radius; ++d) {
    EXPECT_LT(k.at(d + 1, 0)(2, 2), k.at(d, 0)(2, 2));
    EXPECT_GT(k.at(d + 1, 0)(2, 2), 0.0);
    EXPECT_LT(k.response(0, d + 1).norm(), k.response(0, d).norm());
  }
}

TEST(Amend, SingleNodeDividesByDiagonal) {
  const auto k = synth::random_kernel(3, 0.1, 5);
  ActiveSet a;
  a.nodes = {{10, 10}};
  a.displacement = {Vec3d(0.1, -0.2, -0.3)};
  const auto u = amend_active(a, k);
  ASSERT_EQ(u.size(), 1u);
  for (int ax = 0; ax < 3; ++ax)
    EXPECT_NEAR(u[0][ax], a.displacement[0][ax] / k.at(0, 0)(ax, ax), 1e-14);
}

TEST(Amend, FarApartNodesDecouple) {
  const auto k = synth::random_kernel(3, 0.1, 6);
  ActiveSet a;
  a.nodes = {{0, 0}, {0, 10}, {10, 0}};
  a.displacement = {Vec3d(0.1, 0, -0.3), Vec3d(0, 0.2, -0.1), Vec3d(-0.1, 0.1, -0.2)};
  const auto u = amend_active(a, k);
  for (std::size_t i = 0; i < 3; ++i)
    for (int ax = 0; ax < 3; ++ax)
      EXPECT_NEAR(u[i][ax], a.displacement[i][ax] / k.at(0, 0)(ax, ax), 1e-14);
}

TEST(Amend, ResidualAgainstIndependentMatrix) {
  const auto& k = analytic_kernel();
  std::mt19937_64 rng(21);
  const auto a = random_active(square_grid(40), 20, 8, rng);
  AmendReport rep;
  const auto u = amend_active(a, k, {}, &rep);
  for (int ax = 0; ax < 3; ++ax) {
    Eigen::MatrixXd M(20, 20);
    Eigen::VectorXd rhs(20), sol(20);
    for (int i = 0; i < 20; ++i) {
      rhs[i] = a.displacement[i][ax];
      sol[i] = u[i][ax];
      for (int j = 0; j < 20; ++j) {
        const int dx = a.nodes[i].col - a.nodes[j].col, dy = a.nodes[i].row - a.nodes[j].row;
        M(i, j) = k.covers(dx, dy) ? k.at(dx, dy)(ax, ax) : 0.0;
      }
    }
    EXPECT_LE((amendment_matrix(a, k, ax) - M).cwiseAbs().maxCoeff(), 0.0);
    EXPECT_LT((M * sol - rhs).norm() / rhs.norm(), 1e-9);
    EXPECT_LT(rep.residual[ax], 1e-9);
    EXPECT_FALSE(rep.regularized[ax]);
    EXPECT_EQ(rep.iterations[ax], 0);
  }
}

TEST(Amend, IterativeAgreesWithDirect) {
  std::mt19937_64 rng(8);
  const auto grid = square_grid(60);
  const auto a = random_active(grid, 300, 24, rng);
  AmendOptions iterative;
  iterative.direct_limit = 0;
  for (const TensorKernel* k : {&analytic_kernel()}) {
    AmendReport rd, ri;
    const auto d = amend_active(a, *k, {}, &rd);
    const auto it = amend_active(a, *k, iterative, &ri);
    for (int ax = 0; ax < 3; ++ax) {
      EXPECT_GT(ri.iterations[ax], 0);
      EXPECT_LT(ri.residual[ax], 1e-9);
    }
    double worst = 0;
    for (std::size_t i = 0; i < d.size(); ++i) worst = std::max(worst, (d[i] - it[i]).norm());
    EXPECT_LT(worst, 1e-7 * max_norm(d));
  }
  // Non-symmetric per-axis matrices take the other Krylov path.
  const auto planted = synth::random_kernel(3, 0.1, 13);
  const auto d = amend_active(a, planted);
  AmendReport ri;
  const auto it = amend_active(a, planted, iterative, &ri);
  for (int ax = 0; ax < 3; ++ax) EXPECT_LT(ri.residual[ax], 1e-9);
  double worst = 0;
  for (std::size_t i = 0; i < d.size(); ++i) worst = std::max(worst, (d[i] - it[i]).norm());
  EXPECT_LT(worst, 1e-7 * max_norm(d));
}

TEST(Amend, SingularSystemRegularized) {
  TensorKernel k;
  k.radius = 1;
  k.surface.assign(9, Eigen::Matrix3d::Identity());
  ActiveSet a;
  a.nodes = {{5, 5}, {5, 6}};
  a.displacement = {Vec3d(0.1, 0.1, -0.1), Vec3d(0.1, 0.1, -0.1)};
  AmendReport rep;
  const auto u = amend_active(a, k, {}, &rep);
  for (int ax = 0; ax < 3; ++ax) EXPECT_TRUE(rep.regularized[ax]);
  for (const auto& v : u) EXPECT_TRUE(v.allFinite());
}

TEST(Amend, ZeroKernelIsNumericalError) {
  TensorKernel k;
  k.radius = 1;
  k.surface.assign(9, Eigen::Matrix3d::Zero());
  ActiveSet a;
  a.nodes = {{5, 5}, {5, 6}};
  a.displacement = {Vec3d(0.1, 0.1, -0.1), Vec3d(0.1, 0.1, -0.1)};
  EXPECT_THROW(amend_active(a, k), NumericalError);
}

TEST(Superpose, EmptySetGivesZeroField) {
  const auto grid = square_grid(30);
  const auto f = superpose(ActiveSet{}, {}, analytic_kernel(), grid);
  ASSERT_EQ(f.u.size(), grid.size());
  for (const auto& v : f.u) EXPECT_EQ(v, Vec3d::Zero());
}

TEST(Superpose, SingleNodeReproducesKernelColumn) {
  const auto& k = analytic_kernel();
  const auto grid = square_grid(80);
  ActiveSet a;
  a.nodes = {{40, 40}};
  a.displacement = {Vec3d::Zero()};
  const std::vector<Vec3d> tilde = {Vec3d(0, 0, 1)};
  for (auto layer : {KernelLayer::surface, KernelLayer::markers}) {
    const auto f = superpose(a, tilde, k, grid, layer);
    for (int r = 0; r < grid.rows; ++r)
      for (int c = 0; c < grid.cols; ++c) {
        const int dx = c - 40, dy = r - 40;
        if (!k.covers(dx, dy)) {
          EXPECT_EQ(f.at(r, c), Vec3d::Zero());
          continue;
        }
        const auto& t = layer == KernelLayer::surface ? k.at(dx, dy) : k.response(dx, dy);
        EXPECT_LE((f.at(r, c) - t.col(2)).norm(), 1e-15);
      }
  }
}

TEST(Superpose, Linearity) {
  const auto& k = analytic_kernel();
  const auto grid = square_grid(50);
  std::mt19937_64 rng(3);
  const auto a = random_active(grid, 30, 10, rng);
  std::normal_distribution<double> n(0, 1);
  std::vector<Vec3d> p(30), q(30), pq(30);
  for (int i = 0; i < 30; ++i) {
    p[i] = Vec3d(n(rng), n(rng), n(rng));
    q[i] = Vec3d(n(rng), n(rng), n(rng));
    pq[i] = 2.5 * p[i] - q[i];
  }
  const auto fp = superpose(a, p, k, grid), fq = superpose(a, q, k, grid), fpq = superpose(a, pq, k, grid);
  for (std::size_t i = 0; i < grid.size(); ++i)
    EXPECT_LE((fpq.u[i] - (2.5 * fp.u[i] - fq.u[i])).norm(), 1e-12);
}

TEST(Superpose, AmendmentConsistency) {
  const auto& k = analytic_kernel();
  const auto grid = square_grid(60);
  std::mt19937_64 rng(17);
  for (int m : {1, 10, 100}) {
    const auto a = random_active(grid, m, 14, rng);
    const auto tilde = amend_active(a, k);
    const auto f = superpose(a, tilde, k, grid, KernelLayer::surface, Coupling::diagonal);
    for (int ax = 0; ax < 3; ++ax) {
      double num = 0, den = 0;
      for (std::size_t i = 0; i < a.size(); ++i) {
        const double d = f.at(a.nodes[i].row, a.nodes[i].col)[ax] - a.displacement[i][ax];
        num += d * d;
        den += a.displacement[i][ax] * a.displacement[i][ax];
      }
      EXPECT_LT(std::sqrt(num / den), 1e-6) << "m " << m << " axis " << ax;
    }
  }
}

TEST(Superpose, ScalingPrescriptionScalesField) {
  const auto& k = analytic_kernel();
  const auto grid = square_grid(50);
  std::mt19937_64 rng(12);
  auto a = random_active(grid, 40, 10, rng);
  const auto f1 = superpose(a, amend_active(a, k), k, grid);
  for (auto& v : a.displacement) v *= 3.0;
  const auto f3 = superpose(a, amend_active(a, k), k, grid);
  double worst = 0, scale = 0;
  for (std::size_t i = 0; i < grid.size(); ++i) {
    worst = std::max(worst, (f3.u[i] - 3.0 * f1.u[i]).norm());
    scale = std::max(scale, f3.u[i].norm());
  }
  EXPECT_LE(worst, 1e-9 * scale);
}

TEST(PressToActive, SpherePress) {
  const auto cfg = SensorConfig::flat(200, 200, 0.025);
  const auto press = synth::sphere_press(cfg, 100, 100, 2.0, 0.5);
  const auto grid = NodeGrid::for_sensor(cfg, 0.1);
  const auto a = press_to_active(press.height, press.mask, cfg, 0, 0, grid);
  ASSERT_GT(a.size(), 0u);
  double deepest = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const auto& u = a.displacement[i];
    EXPECT_EQ(u.x(), 0.0);
    EXPECT_EQ(u.y(), 0.0);
    EXPECT_LT(u.z(), 0.0);
    EXPECT_GE(u.z(), -0.5 - 1e-6);
    deepest = std::min(deepest, u.z());
    const double x = grid.x(a.nodes[i].col), y = grid.y(a.nodes[i].row);
    EXPECT_LT(std::hypot(x, y), std::sqrt(2 * 2.0 * 0.5 - 0.25) + 0.025);
  }
  EXPECT_NEAR(deepest, -0.5, 1e-6);

  const auto sheared = press_to_active(press.height, press.mask, cfg, 0.3, 0, grid);
  ASSERT_EQ(sheared.size(), a.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    EXPECT_EQ(sheared.displacement[i].x(), 0.3);
    EXPECT_EQ(sheared.displacement[i].y(), 0.0);
    EXPECT_EQ(sheared.displacement[i].z(), a.displacement[i].z());
  }
}

TEST(PressToActive, NoContactNoNodes) {
  const auto cfg = SensorConfig::flat(100, 100, 0.025);
  ContactMask none(100, 100, 0);
  EXPECT_EQ(press_to_active(cfg.gel_surface, none, cfg, 0.1, 0, NodeGrid::for_sensor(cfg, 0.1)).size(), 0u);
}

TEST(Markers, GridLayout) {
  const auto m = marker_grid(2, 3, 0.5, -1.0, 2.0);
  ASSERT_EQ(m.size(), 6u);
  EXPECT_EQ(m[0], Eigen::Vector2d(-1.0, 2.0));
  EXPECT_EQ(m[2], Eigen::Vector2d(0.0, 2.0));
  EXPECT_EQ(m[3], Eigen::Vector2d(-1.0, 2.5));
}

TEST(Markers, BilinearSampling) {
  DisplacementField f;
  f.grid = square_grid(10, 0.1);
  f.u.resize(f.grid.size());
  // Linear field: u = (x, 2y, x - y).
  for (int r = 0; r < 10; ++r)
    for (int c = 0; c < 10; ++c) {
      const double x = f.grid.x(c), y = f.grid.y(r);
      f.u[static_cast<std::size_t>(r) * 10 + c] = Vec3d(x, 2 * y, x - y);
    }
  const std::vector<Eigen::Vector2d> pos = {{f.grid.x(3), f.grid.y(6)}, {0.05, -0.15}, {0.123, 0.077}};
  const auto m = sample_markers(f, pos);
  ASSERT_EQ(m.displacement.size(), 3u);
  EXPECT_EQ(m.displacement[0], f.at(6, 3));
  for (std::size_t i = 0; i < pos.size(); ++i) {
    const double x = pos[i].x(), y = pos[i].y();
    EXPECT_LE((m.displacement[i] - Vec3d(x, 2 * y, x - y)).norm(), 1e-12);
  }
  EXPECT_THROW(sample_markers(f, {{5.0, 0.0}}), RangeError);
  EXPECT_THROW(sample_markers(f, {{0.0, -0.6}}), RangeError);
}

TEST(Markers, UniformFieldIsUniform) {
  DisplacementField f;
  f.grid = square_grid(6, 0.1);
  f.u.assign(f.grid.size(), Vec3d(0.01, -0.02, 0.03));
  const auto m = sample_markers(f, marker_grid(3, 3, 0.07, -0.2, -0.2));
  for (const auto& v : m.displacement) EXPECT_LE((v - Vec3d(0.01, -0.02, 0.03)).norm(), 1e-15);
}
