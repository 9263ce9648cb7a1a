#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <complex>
#include <numbers>
#include <optional>
#include <vector>

#include "thintube/error.hpp"
#include "thintube/profile.hpp"

namespace thintube {

/// Closed base curve in R^{1+k}: arclength grid, curvature components in a parallel normal frame,
/// frame holonomy and (optionally) the embedding it came from.
struct CurveGeometry {
  int k = 1;
  double length = 0.0;
  int samples = 0;
  Eigen::MatrixXd kappa;  // samples x k
  double holonomy = 0.0;

  // embedded mode only
  bool embedded = false;
  Eigen::MatrixXd positions;           // samples x (1+k)
  Eigen::MatrixXd tangents;            // samples x (1+k)
  std::vector<Eigen::MatrixXd> frame;  // k entries, samples x (1+k)

  // smooth curvature; for k = 2 these hold kappa_c(q) exp(i holonomy q / L), which is periodic
  std::vector<PeriodicProfile> kappa_profiles;

  double spacing() const { return length / samples; }
  double q(int j) const { return length * j / samples; }

  /// Curvature vector at an arbitrary arclength q in [0, L].
  Eigen::VectorXd kappa_at(double q) const {
    Eigen::VectorXd v(k);
    if (k == 1) {
      v[0] = kappa_profiles[0](q);
      return v;
    }
    const std::complex<double> g(kappa_profiles[0](q), kappa_profiles[1](q));
    const std::complex<double> c = g * std::polar(1.0, -holonomy * q / length);
    v[0] = c.real();
    v[1] = c.imag();
    return v;
  }

  double max_abs_kappa() const {
    double m = 0.0;
    const int fine = std::max(4 * samples, 256);
    for (int j = 0; j < fine; ++j) m = std::max(m, kappa_at(length * j / fine).norm());
    return m;
  }
};

namespace detail {

inline void build_kappa_profiles(CurveGeometry& c) {
  c.kappa_profiles.clear();
  if (c.k == 1) {
    std::vector<double> s(c.samples);
    for (int j = 0; j < c.samples; ++j) s[j] = c.kappa(j, 0);
    c.kappa_profiles.push_back(PeriodicProfile::from_samples(c.length, s));
    return;
  }
  std::vector<double> re(c.samples), im(c.samples);
  for (int j = 0; j < c.samples; ++j) {
    const std::complex<double> g =
        std::complex<double>(c.kappa(j, 0), c.kappa(j, 1)) * std::polar(1.0, c.holonomy * c.q(j) / c.length);
    re[j] = g.real();
    im[j] = g.imag();
  }
  c.kappa_profiles.push_back(PeriodicProfile::from_samples(c.length, re));
  c.kappa_profiles.push_back(PeriodicProfile::from_samples(c.length, im));
}

inline double wrap_angle(double a) {
  a = std::remainder(a, 2.0 * std::numbers::pi);
  if (a <= -std::numbers::pi) a += 2.0 * std::numbers::pi;
  return a;
}

}  // namespace detail

/// Resamples a closed polyline (first point repeated at the end) on a uniform arclength grid of n_out points.
/// Coordinates are interpolated trigonometrically in the sample index, so the arclength is spectrally accurate
/// for smooth curves.
inline CurveGeometry arclength_reparametrize(const Eigen::MatrixXd& points, int n_out) {
  const int dim = static_cast<int>(points.cols());
  require(dim == 2 || dim == 3, ErrorKind::ConfigError, "points must live in R^2 or R^3");
  require(n_out >= 8, ErrorKind::ConfigError, "need at least 8 output samples");
  int m = static_cast<int>(points.rows());
  require(m >= 17, ErrorKind::DegenerateCurve, "need at least 16 distinct points to resolve the curve");
  double extent = 0.0;
  for (int i = 0; i < m; ++i) extent = std::max(extent, (points.row(i) - points.row(0)).norm());
  const double gap = (points.row(m - 1) - points.row(0)).norm();
  if (gap > 1e-9 * std::max(extent, 1e-300)) fail(ErrorKind::OpenCurve, "first and last point differ by " + std::to_string(gap));
  --m;  // drop the repeated endpoint

  double chord = 0.0, max_chord = 0.0;
  for (int i = 0; i < m; ++i) {
    const double d = (points.row((i + 1) % m) - points.row(i)).norm();
    chord += d;
    max_chord = std::max(max_chord, d);
  }
  require(max_chord < chord / 16.0, ErrorKind::DegenerateCurve, "point spacing does not resolve the curve");

  std::vector<PeriodicProfile> coord;
  for (int d = 0; d < dim; ++d) {
    std::vector<double> s(m);
    for (int i = 0; i < m; ++i) s[i] = points(i, d);
    coord.push_back(PeriodicProfile::from_samples(1.0, s));
  }
  auto velocity = [&](double t) {
    Eigen::VectorXd v(dim);
    for (int d = 0; d < dim; ++d) v[d] = coord[d].derivative(t);
    return v;
  };
  const int over = 4 * m;
  std::vector<double> speed(over);
  for (int i = 0; i < over; ++i) {
    speed[i] = velocity(static_cast<double>(i) / over).norm();
    require(speed[i] >= 1e-12, ErrorKind::DegenerateCurve, "vanishing tangent");
  }
  const PeriodicProfile sp = PeriodicProfile::from_samples(1.0, speed);
  const double L = sp.integral(1.0);

  CurveGeometry c;
  c.k = dim - 1;
  c.length = L;
  c.samples = n_out;
  c.embedded = true;
  c.positions.resize(n_out, dim);
  c.tangents.resize(n_out, dim);
  double t = 0.0;
  for (int j = 0; j < n_out; ++j) {
    const double target = L * j / n_out;
    for (int it = 0; it < 60; ++it) {
      const double f = sp.integral(t) - target;
      const double step = f / sp(t);
      t -= step;
      if (std::abs(step) < 1e-15) break;
    }
    Eigen::VectorXd v = velocity(t);
    const double nv = v.norm();
    require(nv >= 1e-12, ErrorKind::DegenerateCurve, "vanishing tangent");
    for (int d = 0; d < dim; ++d) c.positions(j, d) = coord[d](t);
    c.tangents.row(j) = (v / nv).transpose();
  }
  c.kappa = Eigen::MatrixXd::Zero(n_out, c.k);
  return c;
}

/// Parallel (rotation-minimizing) normal frame by double reflection, curvature components in it and the
/// holonomy angle of the frame after one loop.
inline CurveGeometry bishop_frame(const CurveGeometry& in) {
  require(in.embedded, ErrorKind::ConfigError, "bishop_frame needs an embedded curve");
  CurveGeometry c = in;
  const int n = c.samples, dim = c.k + 1;
  // second derivative from the trigonometric interpolant on the arclength grid
  Eigen::MatrixXd acc(n, dim);
  for (int d = 0; d < dim; ++d) {
    std::vector<double> s(n);
    for (int j = 0; j < n; ++j) s[j] = c.positions(j, d);
    const PeriodicProfile p = PeriodicProfile::from_samples(c.length, s);
    for (int j = 0; j < n; ++j) acc(j, d) = p.second_derivative(c.q(j));
  }
  c.frame.assign(c.k, Eigen::MatrixXd(n, dim));
  c.kappa.resize(n, c.k);
  if (c.k == 1) {
    for (int j = 0; j < n; ++j) {
      c.frame[0](j, 0) = -c.tangents(j, 1);
      c.frame[0](j, 1) = c.tangents(j, 0);
      c.kappa(j, 0) = acc.row(j).dot(c.frame[0].row(j));
    }
    c.holonomy = 0.0;
    detail::build_kappa_profiles(c);
    return c;
  }
  Eigen::Vector3d t0 = c.tangents.row(0).transpose();
  Eigen::Vector3d axis = Eigen::Vector3d::Zero();
  Eigen::Index imin = 0;
  t0.cwiseAbs().minCoeff(&imin);
  axis[imin] = 1.0;
  Eigen::Vector3d r = (axis - axis.dot(t0) * t0).normalized();
  Eigen::Vector3d r0 = r;
  for (int j = 0; j <= n; ++j) {
    const int jj = j % n;
    if (j < n) {
      const Eigen::Vector3d tj = c.tangents.row(jj).transpose();
      c.frame[0].row(jj) = r.transpose();
      c.frame[1].row(jj) = tj.cross(r).transpose();
    }
    if (j == n) break;
    const int jn = (j + 1) % n;
    const Eigen::Vector3d x0 = c.positions.row(jj).transpose(), x1 = c.positions.row(jn).transpose();
    const Eigen::Vector3d ti = c.tangents.row(jj).transpose(), tn = c.tangents.row(jn).transpose();
    const Eigen::Vector3d v1 = x1 - x0;
    const double c1 = v1.squaredNorm();
    const Eigen::Vector3d rL = r - (2.0 / c1) * v1.dot(r) * v1;
    const Eigen::Vector3d tL = ti - (2.0 / c1) * v1.dot(ti) * v1;
    const Eigen::Vector3d v2 = tn - tL;
    const double c2 = v2.squaredNorm();
    r = c2 > 0.0 ? Eigen::Vector3d(rL - (2.0 / c2) * v2.dot(rL) * v2) : rL;
    // keep r exactly normal and unit
    r = (r - r.dot(tn) * tn).normalized();
  }
  const Eigen::Vector3d e2_0 = c.frame[1].row(0).transpose();
  c.holonomy = detail::wrap_angle(std::atan2(r.dot(e2_0), r.dot(r0)));
  for (int j = 0; j < n; ++j) {
    c.kappa(j, 0) = acc.row(j).dot(c.frame[0].row(j));
    c.kappa(j, 1) = acc.row(j).dot(c.frame[1].row(j));
  }
  detail::build_kappa_profiles(c);
  return c;
}

/// Curve given only through its curvature components (k = profiles.size()) and the frame holonomy.
/// No closure constraint is imposed: the data need not come from a closed embedding.
inline CurveGeometry synthetic_geometry(double length, const std::vector<PeriodicProfile>& profiles, double holonomy,
                                        int samples) {
  require(length > 0.0, ErrorKind::ConfigError, "length must be positive");
  require(profiles.size() == 1 || profiles.size() == 2, ErrorKind::ConfigError, "need one or two curvature profiles");
  require(samples >= 8, ErrorKind::ConfigError, "need at least 8 samples");
  const int k = static_cast<int>(profiles.size());
  if (k == 1) require(holonomy == 0.0, ErrorKind::ConfigError, "holonomy must vanish for planar curves");
  double mismatch = 0.0;
  if (k == 1) {
    mismatch = std::abs(profiles[0](length) - profiles[0](0.0));
  } else {
    const std::complex<double> end(profiles[0](length), profiles[1](length));
    const std::complex<double> start(profiles[0](0.0), profiles[1](0.0));
    mismatch = std::abs(std::polar(1.0, holonomy) * end - start);
  }
  if (mismatch > 1e-8)
    fail(ErrorKind::PeriodicityViolation, "curvature wrap-around mismatch " + std::to_string(mismatch));
  CurveGeometry c;
  c.k = k;
  c.length = length;
  c.samples = samples;
  c.holonomy = holonomy;
  c.kappa.resize(samples, k);
  for (int j = 0; j < samples; ++j)
    for (int a = 0; a < k; ++a) c.kappa(j, a) = profiles[a](c.q(j));
  if (holonomy == 0.0) {
    c.kappa_profiles = profiles;
  } else {
    detail::build_kappa_profiles(c);
  }
  return c;
}

/// Synthetic curve from sampled curvature: each row holds samples at q_j = j L / N for j = 0..N,
/// the last one at q = L so that the wrap-around can be checked.
inline CurveGeometry synthetic_from_samples(double length, const std::vector<std::vector<double>>& kappa, double holonomy) {
  require(!kappa.empty() && kappa.size() <= 2, ErrorKind::ConfigError, "need one or two curvature sample rows");
  const std::size_t n1 = kappa[0].size();
  for (const auto& row : kappa)
    require(row.size() == n1 && n1 >= 9, ErrorKind::ConfigError, "curvature rows need N+1 >= 9 equal-length samples");
  const int n = static_cast<int>(n1) - 1;
  double mismatch = 0.0;
  if (kappa.size() == 1) {
    require(holonomy == 0.0, ErrorKind::ConfigError, "holonomy must vanish for planar curves");
    mismatch = std::abs(kappa[0][n] - kappa[0][0]);
  } else {
    const std::complex<double> end(kappa[0][n], kappa[1][n]), start(kappa[0][0], kappa[1][0]);
    mismatch = std::abs(std::polar(1.0, holonomy) * end - start);
  }
  if (mismatch > 1e-8)
    fail(ErrorKind::PeriodicityViolation, "curvature wrap-around mismatch " + std::to_string(mismatch));
  CurveGeometry c;
  c.k = static_cast<int>(kappa.size());
  c.length = length;
  c.samples = n;
  c.holonomy = holonomy;
  c.kappa.resize(n, c.k);
  for (int j = 0; j < n; ++j)
    for (int a = 0; a < c.k; ++a) c.kappa(j, a) = kappa[a][j];
  detail::build_kappa_profiles(c);
  return c;
}

/// Largest normal component of the central-difference frame derivative (zero for an exactly parallel frame).
inline double parallel_transport_residual(const CurveGeometry& c) {
  require(c.embedded && !c.frame.empty(), ErrorKind::ConfigError, "needs an embedded curve with a frame");
  const int n = c.samples;
  const double h = c.spacing();
  double worst = 0.0;
  for (int a = 0; a < c.k; ++a) {
    for (int j = 0; j < n; ++j) {
      const int jp = (j + 1) % n, jm = (j + n - 1) % n;
      Eigen::RowVectorXd ep = c.frame[a].row(jp), em = c.frame[a].row(jm);
      if (c.k == 2) {
        // undo the holonomy when the difference straddles the seam
        auto rotate = [&](int idx, double ang) {
          return Eigen::RowVectorXd(std::cos(ang) * c.frame[0].row(idx) + std::sin(ang) * c.frame[1].row(idx));
        };
        const double base = a == 0 ? 0.0 : std::numbers::pi / 2;
        if (j == n - 1) ep = rotate(jp, base + c.holonomy);
        if (j == 0) em = rotate(jm, base - c.holonomy);
      }
      Eigen::RowVectorXd d = (ep - em) / (2.0 * h);
      const Eigen::RowVectorXd t = c.tangents.row(j);
      d -= d.dot(t) * t;
      worst = std::max(worst, d.norm());
    }
  }
  return worst;
}

}  // namespace thintube
