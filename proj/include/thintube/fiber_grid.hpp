#pragma once

#include <Eigen/Dense>
#include <array>
#include <cmath>
#include <numbers>
#include <optional>
#include <vector>

#include "thintube/error.hpp"
#include "thintube/profile.hpp"
#include "thintube/structured_form.hpp"

namespace thintube {

enum class FiberShape { Interval, Rectangle, Star };

/// Computational grid of a reference cross-section. Nodes carry computational coordinates xi;
/// the reference coordinates are s = Phi(xi) with Jacobian P = dPhi/dxi.
///  Interval:  xi = s in [-1/2, 1/2], Dirichlet.
///  Rectangle: xi = s in [-a/2, a/2] x [-b/2, b/2], Dirichlet.
///  Star:      xi = (r, t) in [0, 1] x [0, 2 pi), s = r rho(t) (cos t, sin t), Dirichlet at r = 1.
class FiberGrid {
 public:
  struct Point {
    Eigen::Vector2d s = Eigen::Vector2d::Zero();
    Eigen::Matrix2d P = Eigen::Matrix2d::Identity();
    double det = 1.0;
  };

  static FiberGrid interval(int n) {
    require(n >= 3, ErrorKind::ResolutionTooCoarse, "interval fiber needs at least 3 points");
    FiberGrid g;
    g.shape_ = FiberShape::Interval;
    g.axes_ = {Axis{AxisKind::Dirichlet, n, -0.5, 0.5}};
    return g;
  }

  /// `narrow` interior points across the shorter side; the other side gets the same spacing as closely as possible.
  static FiberGrid rectangle(double a, double b, int narrow) {
    require(a > 0 && b > 0, ErrorKind::ConfigError, "rectangle sides must be positive");
    require(narrow >= 3, ErrorKind::ResolutionTooCoarse, "rectangle needs at least 3 points per side");
    const double h = std::min(a, b) / (narrow + 1);
    const int na = a <= b ? narrow : static_cast<int>(std::lround(a / h)) - 1;
    const int nb = b < a ? narrow : static_cast<int>(std::lround(b / h)) - 1;
    FiberGrid g;
    g.shape_ = FiberShape::Rectangle;
    g.a_ = a;
    g.b_ = b;
    g.axes_ = {Axis{AxisKind::Dirichlet, na, -0.5 * a, 0.5 * a}, Axis{AxisKind::Dirichlet, nb, -0.5 * b, 0.5 * b}};
    return g;
  }

  static FiberGrid star(PeriodicProfile rho, int nr, int nt) {
    require(nr >= 3, ErrorKind::ResolutionTooCoarse, "star fiber needs at least 3 radial points");
    require(nt >= 8 && nt % 2 == 0, ErrorKind::ResolutionTooCoarse, "star fiber needs an even angular count >= 8");
    require(std::abs(rho.period() - 2.0 * std::numbers::pi) < 1e-12, ErrorKind::ConfigError, "rho must be 2 pi periodic");
    require(rho.slope() == 0.0 && rho.range().first > 0.0, ErrorKind::ConfigError, "rho must be positive and periodic");
    FiberGrid g;
    g.shape_ = FiberShape::Star;
    g.rho_ = std::move(rho);
    g.axes_ = {Axis{AxisKind::NaturalDirichlet, nr, 0.0, 1.0}, Axis{AxisKind::Periodic, nt, 0.0, 2.0 * std::numbers::pi}};
    return g;
  }

  FiberShape shape() const { return shape_; }
  int k() const { return shape_ == FiberShape::Interval ? 1 : 2; }
  const std::vector<Axis>& axes() const { return axes_; }
  StructuredGrid structured() const { return StructuredGrid(axes_); }
  int size() const {
    int n = 1;
    for (const auto& a : axes_) n *= a.n;
    return n;
  }
  double cell_volume() const {
    double v = 1.0;
    for (const auto& a : axes_) v *= a.h();
    return v;
  }
  const PeriodicProfile& rho() const { return rho_; }
  double side_a() const { return a_; }
  double side_b() const { return b_; }

  /// Grid points across the narrowest width of the cross-section.
  int points_across() const {
    switch (shape_) {
      case FiberShape::Interval: return axes_[0].n;
      case FiberShape::Rectangle: return std::min(axes_[0].n, axes_[1].n);
      case FiberShape::Star: return 2 * axes_[0].n;
    }
    return 0;
  }

  /// Geometry at doubled computational indices (node i at 2i, midpoint at 2i+1).
  Point point(int t0, int t1 = 0) const {
    Point p;
    switch (shape_) {
      case FiberShape::Interval:
        p.s[0] = axes_[0].coord(t0);
        p.P(0, 0) = 1.0;
        p.det = 1.0;
        break;
      case FiberShape::Rectangle:
        p.s << axes_[0].coord(t0), axes_[1].coord(t1);
        break;
      case FiberShape::Star: {
        const double r = axes_[0].coord(t0), t = axes_[1].coord(t1);
        const double R = rho_(t), Rp = rho_.derivative(t);
        const Eigen::Vector2d er(std::cos(t), std::sin(t)), et(-std::sin(t), std::cos(t));
        p.s = r * R * er;
        p.P.col(0) = R * er;
        p.P.col(1) = Rp * r * er + R * r * et;
        p.det = R * R * r;
        break;
      }
    }
    return p;
  }

  Point node_point(int flat) const {
    const auto i = multi(flat);
    return point(2 * i[0], 2 * i[1]);
  }

  std::array<int, 2> multi(int flat) const {
    if (axes_.size() == 1) return {flat, 0};
    return {flat / axes_[1].n, flat % axes_[1].n};
  }

  int flat(int i0, int i1 = 0) const { return axes_.size() == 1 ? i0 : i0 * axes_[1].n + i1; }

  /// Node quadrature weights |det P| * cell volume (the lumped mass of the fiber form).
  Eigen::VectorXd weights() const {
    Eigen::VectorXd w(size());
    const double v = cell_volume();
    for (int p = 0; p < size(); ++p) w[p] = std::abs(node_point(p).det) * v;
    return w;
  }

  /// Node positions s, one row per node (k columns).
  Eigen::MatrixXd positions() const {
    Eigen::MatrixXd s(size(), k());
    for (int p = 0; p < size(); ++p) {
      const Point pt = node_point(p);
      for (int a = 0; a < k(); ++a) s(p, a) = pt.s[a];
    }
    return s;
  }

  /// Central-difference gradient with respect to s of a nodal field vanishing on the Dirichlet boundary.
  Eigen::MatrixXd gradient(const Eigen::VectorXd& u) const {
    const int n = size();
    Eigen::MatrixXd g(n, k());
    for (int p = 0; p < n; ++p) {
      const auto i = multi(p);
      Eigen::Vector2d dxi = Eigen::Vector2d::Zero();
      for (int a = 0; a < static_cast<int>(axes_.size()); ++a) {
        std::array<int, 2> ip = i, im = i;
        ip[a] += 1;
        im[a] -= 1;
        dxi[a] = (value(u, ip) - value(u, im)) / (2.0 * axes_[a].h());
      }
      const Point pt = node_point(p);
      if (k() == 1) {
        g(p, 0) = dxi[0] / pt.P(0, 0);
      } else {
        const Eigen::Vector2d gs = pt.P.transpose().inverse() * dxi;
        g(p, 0) = gs[0];
        g(p, 1) = gs[1];
      }
    }
    return g;
  }

  /// Boundary rows of the trapezoid rule. Fields vanish there but their gradients do not, so integrals of
  /// gradient products need these to stay second order.
  struct BoundarySamples {
    Eigen::MatrixXd s;     // positions, one row per sample
    Eigen::VectorXd w;     // weights
    std::vector<int> axis; // axis normal to the boundary
    std::vector<int> side; // 0 at lo, 1 at hi
    std::vector<std::array<int, 2>> at;  // node index on the boundary axis nearest to the sample, other index
  };

  BoundarySamples boundary_samples() const {
    BoundarySamples b;
    std::vector<Eigen::Vector2d> pos;
    std::vector<double> w;
    const int na = static_cast<int>(axes_.size());
    for (int a = 0; a < na; ++a) {
      const Axis& ax = axes_[a];
      if (ax.kind == AxisKind::Periodic) continue;
      const int other = na == 2 ? axes_[1 - a].n : 1;
      const double other_h = na == 2 ? axes_[1 - a].h() : 1.0;
      for (int side = 0; side < 2; ++side) {
        if (side == 0 && ax.kind == AxisKind::NaturalDirichlet) continue;
        const int twice = side == 0 ? -2 : 2 * ax.n;
        for (int j = 0; j < other; ++j) {
          const Point pt = a == 0 ? point(twice, 2 * j) : point(2 * j, twice);
          pos.push_back(pt.s);
          w.push_back(0.5 * ax.h() * other_h * std::abs(pt.det));
          b.axis.push_back(a);
          b.side.push_back(side);
          b.at.push_back({side == 0 ? 0 : ax.n - 1, j});
        }
      }
    }
    const int m = static_cast<int>(pos.size());
    b.s.resize(m, k());
    b.w.resize(m);
    for (int i = 0; i < m; ++i) {
      for (int c = 0; c < k(); ++c) b.s(i, c) = pos[i][c];
      b.w[i] = w[i];
    }
    return b;
  }

  /// Gradient with respect to s at the boundary samples: one-sided second-order normal derivative, zero tangential.
  Eigen::MatrixXd boundary_gradient(const BoundarySamples& b, const Eigen::VectorXd& u) const {
    const int m = static_cast<int>(b.w.size());
    Eigen::MatrixXd g(m, k());
    for (int i = 0; i < m; ++i) {
      const int a = b.axis[i];
      const Axis& ax = axes_[a];
      const int n0 = b.at[i][0], j = b.at[i][1];
      auto idx = [&](int along) { return a == 0 ? flat(along, j) : flat(j, along); };
      const int inward = b.side[i] == 0 ? 1 : -1;
      const double u1 = u[idx(n0)], u2 = ax.n > 1 ? u[idx(n0 + inward)] : 0.0;
      Eigen::Vector2d dxi = Eigen::Vector2d::Zero();
      dxi[a] = inward * (4.0 * u1 - u2) / (2.0 * ax.h());
      const int twice = b.side[i] == 0 ? -2 : 2 * ax.n;
      const Point pt = a == 0 ? point(twice, 2 * j) : point(2 * j, twice);
      if (k() == 1) {
        g(i, 0) = dxi[0] / pt.P(0, 0);
      } else {
        const Eigen::Vector2d gs = pt.P.transpose().inverse() * dxi;
        g(i, 0) = gs[0];
        g(i, 1) = gs[1];
      }
    }
    return g;
  }

  /// Node permutation realizing s -> R(angle) s on the grid, if the grid has that symmetry.
  /// perm[j] is the node whose position is R(angle) * s_j.
  std::optional<std::vector<int>> rotation_permutation(double angle) const {
    const double two_pi = 2.0 * std::numbers::pi;
    double a = std::fmod(angle, two_pi);
    if (a < 0) a += two_pi;
    auto near = [&](double x, double y) { return std::abs(x - y) < 1e-9; };
    const int n = size();
    std::vector<int> perm(n);
    if (shape_ == FiberShape::Interval) {
      if (!(near(a, 0.0) || near(a, two_pi))) return std::nullopt;
      for (int p = 0; p < n; ++p) perm[p] = p;
      return perm;
    }
    if (shape_ == FiberShape::Rectangle) {
      const int n0 = axes_[0].n, n1 = axes_[1].n;
      int quarter = -1;
      for (int qd = 0; qd <= 4; ++qd)
        if (near(a, qd * std::numbers::pi / 2)) quarter = qd % 4;
      if (quarter < 0) return std::nullopt;
      if ((quarter == 1 || quarter == 3) && !(n0 == n1 && std::abs(a_ - b_) < 1e-12)) return std::nullopt;
      for (int p = 0; p < n; ++p) {
        const auto [i0, i1] = multi(p);
        int j0 = i0, j1 = i1;
        switch (quarter) {
          case 1: j0 = n0 - 1 - i1; j1 = i0; break;  // (x, y) -> (-y, x)
          case 2: j0 = n0 - 1 - i0; j1 = n1 - 1 - i1; break;
          case 3: j0 = i1; j1 = n1 - 1 - i0; break;  // (x, y) -> (y, -x)
          default: break;
        }
        perm[p] = flat(j0, j1);
      }
      return perm;
    }
    const int nt = axes_[1].n;
    const double dt = axes_[1].h();
    const double m_real = a / dt;
    const long m = std::lround(m_real);
    if (std::abs(m_real - static_cast<double>(m)) > 1e-7) return std::nullopt;
    const int shift = static_cast<int>(m % nt);
    double scale = 0.0, worst = 0.0;
    for (int j = 0; j < nt; ++j) {
      const double t = j * dt;
      scale = std::max(scale, std::abs(rho_(t)));
      worst = std::max(worst, std::abs(rho_(t + a) - rho_(t)));
    }
    if (worst > 1e-10 * scale) return std::nullopt;
    for (int p = 0; p < n; ++p) {
      const auto [i0, i1] = multi(p);
      perm[p] = flat(i0, (i1 + shift) % nt);
    }
    return perm;
  }

 private:
  // value at a possibly out-of-range node: zero on the Dirichlet boundary, reflected through the origin on the
  // polar axis
  double value(const Eigen::VectorXd& u, std::array<int, 2> i) const {
    for (int a = 0; a < static_cast<int>(axes_.size()); ++a) {
      const Axis& ax = axes_[a];
      if (ax.kind == AxisKind::Periodic) {
        i[a] = ((i[a] % ax.n) + ax.n) % ax.n;
      } else if (ax.kind == AxisKind::NaturalDirichlet && i[a] == -1) {
        i[a] = 0;
        const int nt = axes_[1].n;
        i[1] = (i[1] + nt / 2) % nt;
      } else if (i[a] < 0 || i[a] >= ax.n) {
        return 0.0;
      }
    }
    return u[flat(i[0], i[1])];
  }

  FiberShape shape_ = FiberShape::Interval;
  std::vector<Axis> axes_;
  PeriodicProfile rho_;
  double a_ = 0.0, b_ = 0.0;
};

/// Structured form of -Delta_s on the reference grid: C = |det P| P^-1 P^-T, mass |det P|.
inline FormMatrices assemble_fiber_laplacian(const FiberGrid& g) {
  const StructuredGrid sg = g.structured();
  const int k = g.k();
  auto coeff = [&](const std::array<int, 3>& t, Eigen::Matrix3d& C) {
    const FiberGrid::Point p = g.point(t[0], t[1]);
    if (k == 1) {
      C(0, 0) = 1.0 / (p.P(0, 0) * p.P(0, 0)) * std::abs(p.det);
      return;
    }
    const Eigen::Matrix2d Pi = p.P.inverse();
    C.topLeftCorner<2, 2>() = std::abs(p.det) * Pi * Pi.transpose();
  };
  auto weight = [&](const std::array<int, 3>& t) { return std::abs(g.point(t[0], t[1]).det); };
  return assemble_form(sg, coeff, weight);
}

}  // namespace thintube
