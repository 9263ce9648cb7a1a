#include <gtest/gtest.h>

#include "support.hpp"

using namespace thintube;
using tt_test::kPi;
using tt_test::kTwoPi;

namespace {

// closed polyline with the first point repeated at the end
Eigen::MatrixXd sample_closed(int m, int dim, const std::function<Eigen::VectorXd(double)>& r) {
  Eigen::MatrixXd p(m + 1, dim);
  for (int i = 0; i <= m; ++i) p.row(i) = r(kTwoPi * (i % m) / m).transpose();
  return p;
}

CurveGeometry embedded(const Eigen::MatrixXd& pts, int n) { return bishop_frame(arclength_reparametrize(pts, n)); }

Eigen::VectorXd trefoil(double t) {
  Eigen::VectorXd v(3);
  v << std::sin(t) + 2 * std::sin(2 * t), std::cos(t) - 2 * std::cos(2 * t), -std::sin(3 * t);
  return v;
}

}  // namespace

TEST(Geometry, CircleHasConstantCurvatureAndUnitSpeed) {
  const double R = 1.3;
  const CurveGeometry c = embedded(sample_closed(200, 2, [&](double t) {
                                     Eigen::VectorXd v(2);
                                     v << R * std::cos(t), R * std::sin(t);
                                     return v;
                                   }),
                                   128);
  EXPECT_NEAR(c.length, kTwoPi * R, 1e-10);
  EXPECT_EQ(c.k, 1);
  for (int j = 0; j < c.samples; ++j) EXPECT_NEAR(std::abs(c.kappa(j, 0)), 1.0 / R, 1e-8);
  // equal chords on a circle mean equal arclength steps
  const double chord = (c.positions.row(1) - c.positions.row(0)).norm();
  for (int j = 0; j < c.samples; ++j)
    EXPECT_NEAR((c.positions.row((j + 1) % c.samples) - c.positions.row(j)).norm(), chord, 1e-10);
}

TEST(Geometry, EllipseCurvatureExtremesMatchClosedForm) {
  const double a = 2.0, b = 1.0;
  const CurveGeometry c = embedded(sample_closed(400, 2, [&](double t) {
                                     Eigen::VectorXd v(2);
                                     v << a * std::cos(t), b * std::sin(t);
                                     return v;
                                   }),
                                   512);
  const Eigen::VectorXd k = c.kappa.col(0).cwiseAbs();
  EXPECT_NEAR(k.maxCoeff(), a / (b * b), 1e-4);
  EXPECT_NEAR(k.minCoeff(), b / (a * a), 1e-4);
}

TEST(Geometry, TiltedCircleInSpaceIsPlanarWithZeroHolonomy) {
  const CurveGeometry c = embedded(sample_closed(160, 3, [](double t) {
                                     Eigen::VectorXd v(3);
                                     v << std::cos(t), 0.6 * std::sin(t), 0.8 * std::sin(t);
                                     return v;
                                   }),
                                   128);
  EXPECT_EQ(c.k, 2);
  EXPECT_NEAR(std::remainder(c.holonomy, kTwoPi), 0.0, 1e-8);
  for (int j = 0; j < c.samples; ++j) {
    EXPECT_NEAR(c.kappa.row(j).norm(), 1.0, 1e-8);
    EXPECT_NEAR(c.kappa(j, 0), c.kappa(0, 0), 1e-8);
  }
}

TEST(Geometry, FrameIsOrthonormalAndNormal) {
  const CurveGeometry c = embedded(sample_closed(300, 3, trefoil), 256);
  for (int j = 0; j < c.samples; ++j) {
    const Eigen::RowVectorXd t = c.tangents.row(j), e1 = c.frame[0].row(j), e2 = c.frame[1].row(j);
    EXPECT_NEAR(t.norm(), 1.0, 1e-8);
    EXPECT_NEAR(e1.norm(), 1.0, 1e-8);
    EXPECT_NEAR(e2.norm(), 1.0, 1e-8);
    EXPECT_NEAR(e1.dot(e2), 0.0, 1e-8);
    EXPECT_NEAR(e1.dot(t), 0.0, 1e-8);
    EXPECT_NEAR(e2.dot(t), 0.0, 1e-8);
  }
}

TEST(Geometry, ParallelTransportResidualIsSecondOrder) {
  const Eigen::MatrixXd pts = sample_closed(400, 3, trefoil);
  const double r1 = parallel_transport_residual(embedded(pts, 128));
  const double r2 = parallel_transport_residual(embedded(pts, 256));
  EXPECT_GT(r1 / r2, 3.5) << r1 << " " << r2;
}

TEST(Geometry, CurvatureWrapsAroundUpToHolonomy) {
  const CurveGeometry c = embedded(sample_closed(300, 3, trefoil), 256);
  const Eigen::VectorXd k0 = c.kappa_at(0.0), kL = c.kappa_at(c.length);
  const double cs = std::cos(c.holonomy), sn = std::sin(c.holonomy);
  Eigen::Vector2d rotated(cs * kL[0] - sn * kL[1], sn * kL[0] + cs * kL[1]);
  EXPECT_LT((rotated - k0).norm(), 1e-8);
  // the smooth profile reproduces the samples
  for (int j = 0; j < c.samples; j += 17) EXPECT_LT((c.kappa_at(c.q(j)) - c.kappa.row(j).transpose()).norm(), 1e-9);
}

TEST(Geometry, CurvatureMagnitudeMatchesParametricFormula) {
  // |kappa| = |r' x r''| / |r'|^3 on the trefoil; compare the extreme values over the loop
  const CurveGeometry c = embedded(sample_closed(600, 3, trefoil), 512);
  double kmax = 0.0, kmin = 1e300;
  for (int i = 0; i < 20000; ++i) {
    const double t = kTwoPi * i / 20000;
    Eigen::Vector3d d1(std::cos(t) + 4 * std::cos(2 * t), -std::sin(t) + 4 * std::sin(2 * t), -3 * std::cos(3 * t));
    Eigen::Vector3d d2(-std::sin(t) - 8 * std::sin(2 * t), -std::cos(t) + 8 * std::cos(2 * t), 9 * std::sin(3 * t));
    const double k = d1.cross(d2).norm() / std::pow(d1.norm(), 3);
    kmax = std::max(kmax, k);
    kmin = std::min(kmin, k);
  }
  double smax = 0.0, smin = 1e300;
  for (int i = 0; i < 8 * c.samples; ++i) {
    const double k = c.kappa_at(c.length * i / (8 * c.samples)).norm();
    smax = std::max(smax, k);
    smin = std::min(smin, k);
  }
  EXPECT_NEAR(smax, kmax, 1e-4 * kmax);
  EXPECT_NEAR(smin, kmin, 1e-4 * kmax);
}

TEST(Geometry, OpenCurveIsRefused) {
  Eigen::MatrixXd pts(40, 2);
  for (int i = 0; i < 40; ++i) pts.row(i) << std::cos(0.1 * i), std::sin(0.1 * i);
  try {
    arclength_reparametrize(pts, 64);
    FAIL() << "expected OpenCurve";
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::OpenCurve);
  }
}

TEST(Geometry, TooFewPointsAreDegenerate) {
  Eigen::MatrixXd pts(5, 2);
  pts << 0, 0, 1, 0, 1, 1, 0, 1, 0, 0;
  try {
    arclength_reparametrize(pts, 64);
    FAIL() << "expected DegenerateCurve";
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::DegenerateCurve);
  }
}

TEST(Geometry, SyntheticCurvatureMustBePeriodic) {
  std::vector<double> row(33);
  for (int j = 0; j <= 32; ++j) row[j] = 1.0 + 0.01 * j;
  try {
    synthetic_from_samples(kTwoPi, {row}, 0.0);
    FAIL() << "expected PeriodicityViolation";
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::PeriodicityViolation);
  }
}

TEST(Geometry, SyntheticGridIsUniform) {
  const CurveGeometry c = synthetic_geometry(kTwoPi, {PeriodicProfile::constant(kTwoPi, 1.0)}, 0.0, 64);
  EXPECT_EQ(c.samples, 64);
  for (int j = 0; j < 64; ++j) EXPECT_DOUBLE_EQ(c.q(j), kTwoPi * j / 64);
  EXPECT_DOUBLE_EQ(c.max_abs_kappa(), 1.0);
}
