#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <array>
#include <cmath>
#include <memory>
#include <numbers>
#include <optional>
#include <vector>

#include "thintube/error.hpp"
#include "thintube/fiber_grid.hpp"
#include "thintube/geometry.hpp"
#include "thintube/lanczos.hpp"
#include "thintube/profile.hpp"
#include "thintube/quadrature.hpp"

namespace thintube {

/// Reference cross-section for codimension-two families.
struct ReferenceDomain {
  enum class Kind { Rectangle, Star };
  Kind kind = Kind::Rectangle;
  double a = 1.0, b = 1.0;  // rectangle sides
  PeriodicProfile rho;      // star radius rho(t), 2 pi periodic
  int resolution = 24;      // points across the narrowest width (radial points for stars)

  FiberGrid grid() const {
    if (kind == Kind::Rectangle) return FiberGrid::rectangle(a, b, resolution);
    return FiberGrid::star(rho, resolution, 4 * resolution);
  }
};

/// Per-q affine fiber map n = c(q) + S(q) s with S = sigma R(theta).
struct FiberMap {
  int k = 1;
  double sigma = 1.0, dsigma = 0.0, theta = 0.0, dtheta = 0.0;
  Eigen::VectorXd c, dc;

  Eigen::MatrixXd S() const {
    if (k == 1) return Eigen::MatrixXd::Constant(1, 1, sigma);
    Eigen::MatrixXd m(2, 2);
    m << std::cos(theta), -std::sin(theta), std::sin(theta), std::cos(theta);
    return sigma * m;
  }
};

/// Interval{ell, center} for k = 1, ScaledRotated{reference, scale, angle} for k = 2.
struct CrossSectionFamily {
  enum class Kind { Interval, ScaledRotated };
  Kind kind = Kind::Interval;
  PeriodicProfile ell, center;
  ReferenceDomain reference;
  PeriodicProfile scale, angle;

  static CrossSectionFamily interval(PeriodicProfile ell, PeriodicProfile center) {
    CrossSectionFamily f;
    f.kind = Kind::Interval;
    require(ell.slope() == 0.0 && center.slope() == 0.0, ErrorKind::ConfigError, "interval profiles must be periodic");
    require(ell.range().first > 0.0, ErrorKind::ConfigError, "ell must stay positive");
    f.ell = std::move(ell);
    f.center = std::move(center);
    return f;
  }

  static CrossSectionFamily scaled_rotated(ReferenceDomain ref, PeriodicProfile scale, PeriodicProfile angle) {
    CrossSectionFamily f;
    f.kind = Kind::ScaledRotated;
    require(scale.slope() == 0.0, ErrorKind::ConfigError, "scale must be periodic");
    require(scale.range().first > 0.0, ErrorKind::ConfigError, "scale must stay positive");
    f.reference = std::move(ref);
    f.scale = std::move(scale);
    f.angle = std::move(angle);
    return f;
  }

  int k() const { return kind == Kind::Interval ? 1 : 2; }
  double period() const { return kind == Kind::Interval ? ell.period() : scale.period(); }

  FiberMap at(double q) const {
    FiberMap m;
    m.k = k();
    if (kind == Kind::Interval) {
      m.sigma = ell(q);
      m.dsigma = ell.derivative(q);
      m.c = Eigen::VectorXd::Constant(1, center(q));
      m.dc = Eigen::VectorXd::Constant(1, center.derivative(q));
    } else {
      m.sigma = scale(q);
      m.dsigma = scale.derivative(q);
      m.theta = angle(q);
      m.dtheta = angle.derivative(q);
      m.c = Eigen::VectorXd::Zero(2);
      m.dc = Eigen::VectorXd::Zero(2);
    }
    return m;
  }

  /// Largest |n| over all fibers (used for the tube-overlap guard).
  double max_normal_extent(const std::optional<FiberGrid>& grid = std::nullopt) const {
    double worst = 0.0;
    const int samples = 2048;
    double ref_radius = 0.5;
    if (kind == Kind::ScaledRotated) {
      if (reference.kind == ReferenceDomain::Kind::Rectangle) {
        ref_radius = 0.5 * std::hypot(reference.a, reference.b);
      } else {
        ref_radius = reference.rho.range().second;
      }
      (void)grid;
    }
    for (int j = 0; j < samples; ++j) {
      const FiberMap m = at(period() * j / samples);
      worst = std::max(worst, m.c.norm() + std::abs(m.sigma) * ref_radius);
    }
    return worst;
  }

  /// Rotation of the reference grid across the seam: holonomy + theta(L) - theta(0).
  double seam_rotation(const CurveGeometry& geom) const {
    if (kind == Kind::Interval) return 0.0;
    return geom.holonomy + angle(geom.length) - angle(0.0);
  }
};

/// Reference-fiber data from which every per-q quantity follows by the affine transformation laws.
/// Fields used for horizontal derivatives: k = 1: {s, e_1}; k = 2: {s, Js, e_1, e_2}.
struct ReferenceFiber {
  int k = 1;
  bool analytic = false;
  Eigen::VectorXd E;                 // reference eigenvalues
  std::vector<Eigen::MatrixXd> S;    // <phi_I| s^a phi_J>
  Eigen::MatrixXd D;                 // <phi_I|(k/2 + s.grad) phi_J>, antisymmetric
  Eigen::MatrixXd Theta;             // <phi_I|(J s).grad phi_J>, antisymmetric
  std::vector<Eigen::MatrixXd> G;    // <phi_I| d_a phi_J>, antisymmetric
  std::vector<Eigen::VectorXd> m1;   // per band <s>
  std::vector<Eigen::MatrixXd> m2;   // per band <s s^T>
  std::vector<Eigen::MatrixXd> Q;    // per band Gram matrix of field derivatives
  // closed-form rectangle fibers only: sides and (m, n) per band
  double rect_a = 0.0, rect_b = 0.0;
  std::vector<std::array<int, 2>> modes;
  // grid fibers only
  std::shared_ptr<const FiberGrid> grid;
  Eigen::MatrixXd phi;               // nodes x bands, orthonormal in the grid weights
  Eigen::VectorXd weights;

  int bands() const { return static_cast<int>(E.size()); }
  static int field_count(int k) { return k == 1 ? 2 : 4; }
};

namespace detail {

inline void antisymmetrize(Eigen::MatrixXd& m) { m = (0.5 * (m - m.transpose())).eval(); }

inline Eigen::MatrixXd weighted_gram(const Eigen::MatrixXd& A, const Eigen::VectorXd& w, const Eigen::MatrixXd& B) {
  return A.transpose() * w.asDiagonal() * B;
}

// derivative fields of one band: k = 1: {s.grad, d_1}; k = 2: {s.grad, (Js).grad, d_1, d_2}
inline Eigen::MatrixXd derivative_fields(int k, const Eigen::MatrixXd& grad, const Eigen::MatrixXd& s) {
  const Eigen::Index n = grad.rows();
  Eigen::MatrixXd fields(n, ReferenceFiber::field_count(k));
  if (k == 1) {
    fields.col(0) = s.col(0).cwiseProduct(grad.col(0));
    fields.col(1) = grad.col(0);
  } else {
    fields.col(0) = s.col(0).cwiseProduct(grad.col(0)) + s.col(1).cwiseProduct(grad.col(1));
    fields.col(1) = -s.col(1).cwiseProduct(grad.col(0)) + s.col(0).cwiseProduct(grad.col(1));
    fields.col(2) = grad.col(0);
    fields.col(3) = grad.col(1);
  }
  return fields;
}

// Boundary samples where every band vanishes: they only enter the gradient Grams.
struct BoundaryTerms {
  Eigen::MatrixXd s;
  Eigen::VectorXd w;
  std::vector<Eigen::MatrixXd> grad;  // per band
};

// fills moments/generators from nodal values, gradients and weights
inline void fill_from_samples(ReferenceFiber& f, const Eigen::MatrixXd& phi, const std::vector<Eigen::MatrixXd>& grad,
                              const Eigen::MatrixXd& s, const Eigen::VectorXd& w, const BoundaryTerms* boundary = nullptr) {
  const int nb = static_cast<int>(phi.cols());
  const int k = f.k;
  f.S.assign(k, Eigen::MatrixXd());
  for (int a = 0; a < k; ++a) f.S[a] = weighted_gram(phi, w.cwiseProduct(s.col(a)), phi);
  // derivative fields X.grad phi_J for every band J
  const int n = static_cast<int>(phi.rows());
  Eigen::MatrixXd sgrad(n, nb), jgrad = Eigen::MatrixXd::Zero(n, nb);
  for (int J = 0; J < nb; ++J) {
    sgrad.col(J) = s.col(0).cwiseProduct(grad[J].col(0));
    if (k == 2) {
      sgrad.col(J) += s.col(1).cwiseProduct(grad[J].col(1));
      // J s = (-s2, s1)
      jgrad.col(J) = -s.col(1).cwiseProduct(grad[J].col(0)) + s.col(0).cwiseProduct(grad[J].col(1));
    }
  }
  f.D = weighted_gram(phi, w, sgrad) + 0.5 * k * weighted_gram(phi, w, phi);
  f.Theta = weighted_gram(phi, w, jgrad);
  f.G.assign(k, Eigen::MatrixXd());
  for (int a = 0; a < k; ++a) {
    Eigen::MatrixXd ga(n, nb);
    for (int J = 0; J < nb; ++J) ga.col(J) = grad[J].col(a);
    f.G[a] = weighted_gram(phi, w, ga);
  }
  antisymmetrize(f.D);
  antisymmetrize(f.Theta);
  for (auto& g : f.G) antisymmetrize(g);
  f.m1.assign(nb, Eigen::VectorXd(k));
  f.m2.assign(nb, Eigen::MatrixXd(k, k));
  f.Q.assign(nb, Eigen::MatrixXd());
  for (int J = 0; J < nb; ++J) {
    const Eigen::VectorXd p2 = phi.col(J).cwiseAbs2().cwiseProduct(w);
    for (int a = 0; a < k; ++a) {
      f.m1[J][a] = p2.dot(s.col(a));
      for (int b = 0; b < k; ++b) f.m2[J](a, b) = p2.dot(s.col(a).cwiseProduct(s.col(b)));
    }
    const Eigen::MatrixXd fields = derivative_fields(k, grad[J], s);
    f.Q[J] = weighted_gram(fields, w, fields);
    if (boundary != nullptr && boundary->w.size() > 0) {
      const Eigen::MatrixXd bf = derivative_fields(k, boundary->grad[J], boundary->s);
      f.Q[J] += weighted_gram(bf, boundary->w, bf);
    }
  }
}

}  // namespace detail

/// Dirichlet sine modes of [-1/2, 1/2] in closed form; matrix elements by Gauss-Legendre quadrature.
inline ReferenceFiber analytic_interval_fiber(int bands) {
  require(bands >= 2, ErrorKind::ConfigError, "need at least two bands");
  ReferenceFiber f;
  f.k = 1;
  f.analytic = true;
  f.E.resize(bands);
  for (int I = 0; I < bands; ++I) f.E[I] = std::pow((I + 1) * std::numbers::pi, 2);
  const QuadratureRule rule = gauss_legendre(4 * bands + 96, -0.5, 0.5);
  const int nq = static_cast<int>(rule.nodes.size());
  Eigen::MatrixXd phi(nq, bands);
  std::vector<Eigen::MatrixXd> grad(bands, Eigen::MatrixXd(nq, 1));
  Eigen::MatrixXd s(nq, 1);
  Eigen::VectorXd w(nq);
  for (int i = 0; i < nq; ++i) {
    const double x = rule.nodes[i];
    s(i, 0) = x;
    w[i] = rule.weights[i];
    for (int I = 0; I < bands; ++I) {
      const double kk = (I + 1) * std::numbers::pi;
      phi(i, I) = std::sqrt(2.0) * std::sin(kk * (x + 0.5));
      grad[I](i, 0) = std::sqrt(2.0) * kk * std::cos(kk * (x + 0.5));
    }
  }
  detail::fill_from_samples(f, phi, grad, s, w);
  return f;
}

/// Dirichlet modes of the centered a x b rectangle, sin(m pi (x/a + 1/2)) sin(n pi (y/b + 1/2)) normalized,
/// ordered by energy then (m, n). Matrix elements by tensor Gauss-Legendre quadrature.
inline double rectangle_mode(double a, double b, std::array<int, 2> mn, double x, double y) {
  if (std::abs(x) > 0.5 * a || std::abs(y) > 0.5 * b) return 0.0;
  const double pi = std::numbers::pi;
  return 2.0 / std::sqrt(a * b) * std::sin(mn[0] * pi * (x / a + 0.5)) * std::sin(mn[1] * pi * (y / b + 0.5));
}

inline ReferenceFiber analytic_rectangle_fiber(double a, double b, int bands) {
  require(bands >= 2, ErrorKind::ConfigError, "need at least two bands");
  require(a > 0 && b > 0, ErrorKind::ConfigError, "rectangle sides must be positive");
  const double pi = std::numbers::pi;
  std::vector<std::pair<double, std::array<int, 2>>> all;
  for (int m = 1; m <= bands; ++m)
    for (int n = 1; n <= bands; ++n) all.push_back({std::pow(m * pi / a, 2) + std::pow(n * pi / b, 2), {m, n}});
  std::sort(all.begin(), all.end());
  ReferenceFiber f;
  f.k = 2;
  f.analytic = true;
  f.rect_a = a;
  f.rect_b = b;
  f.E.resize(bands);
  int mmax = 1, nmax = 1;
  for (int I = 0; I < bands; ++I) {
    f.E[I] = all[I].first;
    f.modes.push_back(all[I].second);
    mmax = std::max(mmax, all[I].second[0]);
    nmax = std::max(nmax, all[I].second[1]);
  }
  const QuadratureRule rx = gauss_legendre(4 * mmax + 48, -0.5 * a, 0.5 * a);
  const QuadratureRule ry = gauss_legendre(4 * nmax + 48, -0.5 * b, 0.5 * b);
  const int nx = static_cast<int>(rx.nodes.size()), ny = static_cast<int>(ry.nodes.size());
  const int nq = nx * ny;
  Eigen::MatrixXd phi(nq, bands), s(nq, 2);
  std::vector<Eigen::MatrixXd> grad(bands, Eigen::MatrixXd(nq, 2));
  Eigen::VectorXd w(nq);
  for (int i = 0; i < nx; ++i)
    for (int j = 0; j < ny; ++j) {
      const int p = i * ny + j;
      const double x = rx.nodes[i], y = ry.nodes[j];
      s(p, 0) = x;
      s(p, 1) = y;
      w[p] = rx.weights[i] * ry.weights[j];
      for (int I = 0; I < bands; ++I) {
        const double kx = f.modes[I][0] * pi / a, ky = f.modes[I][1] * pi / b;
        const double c = 2.0 / std::sqrt(a * b);
        const double sx = std::sin(kx * (x + 0.5 * a)), sy = std::sin(ky * (y + 0.5 * b));
        phi(p, I) = c * sx * sy;
        grad[I](p, 0) = c * kx * std::cos(kx * (x + 0.5 * a)) * sy;
        grad[I](p, 1) = c * ky * sx * std::cos(ky * (y + 0.5 * b));
      }
    }
  detail::fill_from_samples(f, phi, grad, s, w);
  return f;
}

/// Lowest `bands` Dirichlet eigenpairs of the reference grid. Eigenvectors are orthonormal in the grid
/// weights; the ground state is positive.
inline ReferenceFiber grid_fiber(const FiberGrid& grid, int bands) {
  const int n = grid.size();
  require(bands >= 2 && bands < n, ErrorKind::ResolutionTooCoarse, "fiber grid too small for the requested bands");
  const FormMatrices fm = assemble_fiber_laplacian(grid);
  Eigen::VectorXd E;
  Eigen::MatrixXd V;
  if (n <= 1200) {
    const Eigen::VectorXd dinv = fm.M.cwiseSqrt().cwiseInverse();
    const Eigen::MatrixXd B = dinv.asDiagonal() * Eigen::MatrixXd(fm.K) * dinv.asDiagonal();
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(B);
    E = es.eigenvalues().head(bands);
    V = dinv.asDiagonal() * es.eigenvectors().leftCols(bands);
  } else {
    const EigenPairs ep = lowest_eigenpairs(fm.K, fm.M, bands, 0.0);
    E = ep.values;
    V = ep.vectors;
  }
  for (int I = 0; I < bands; ++I) {
    // deterministic sign: ground state positive, others by their largest entry
    double ref = 0.0;
    if (I == 0) {
      ref = V.col(0).sum();
    } else {
      Eigen::Index imax = 0;
      V.col(I).cwiseAbs().maxCoeff(&imax);
      ref = V(imax, I);
    }
    if (ref < 0) V.col(I) = -V.col(I);
  }
  ReferenceFiber f;
  f.k = grid.k();
  f.analytic = false;
  f.E = E;
  f.grid = std::make_shared<const FiberGrid>(grid);
  f.weights = grid.weights();
  f.phi = V;
  std::vector<Eigen::MatrixXd> grad(bands);
  for (int I = 0; I < bands; ++I) grad[I] = grid.gradient(V.col(I));
  const FiberGrid::BoundarySamples bs = grid.boundary_samples();
  detail::BoundaryTerms bt{bs.s, bs.w, {}};
  for (int I = 0; I < bands; ++I) bt.grad.push_back(grid.boundary_gradient(bs, V.col(I)));
  detail::fill_from_samples(f, V, grad, grid.positions(), f.weights, &bt);
  return f;
}

/// Refuses a band whose reference eigenvalue is (numerically) degenerate with a neighbour.
inline void check_simple(const ReferenceFiber& f, int J, double gap_tol_rel = 1e-6) {
  require(J >= 0 && J + 1 < f.bands(), ErrorKind::ConfigError, "band index out of range");
  const double tol = gap_tol_rel * f.E[f.bands() - 1];
  double gap = f.E[J + 1] - f.E[J];
  if (J > 0) gap = std::min(gap, f.E[J] - f.E[J - 1]);
  if (gap <= tol)
    fail(ErrorKind::DegeneracyDetected, "band " + std::to_string(J) + " is degenerate (gap " + std::to_string(gap) + ")");
}

/// Lowest reference eigenpairs of a ReferenceDomain (the k = 2 fiber solve).
inline ReferenceFiber reference_domain_solve(const ReferenceDomain& dom, int bands) {
  const FiberGrid g = dom.grid();
  require(g.points_across() >= 16, ErrorKind::ResolutionTooCoarse, "reference grid needs >= 16 points across");
  return grid_fiber(g, bands);
}

/// All band-level coefficients at one arclength position.
struct BandPoint {
  double q = 0.0;
  double E = 0.0;                   // E_J(q)
  Eigen::VectorXd energies;         // E_I(q), I = 0..I_max+1
  Eigen::VectorXd M1;               // <n>
  Eigen::MatrixXd M2;               // <n n^T>
  double A = 0.0;                   // <phi_J| d_q phi_J>, vanishes for real gauges
  double beta = 0.0;                // 2 kappa.<phi_J|(n - M1) d_q phi_J>
  double vbh = 0.0;
  double T11 = 0.0, T12 = 0.0, T22 = 0.0;
  double tail11 = 0.0, tail12 = 0.0, tail22 = 0.0;
  double gap = 0.0;                 // distance to the neighbouring bands
  double dphi_norm = 0.0;           // ||d_q phi_J||, a gauge smoothness diagnostic
  Eigen::VectorXd kappa;
};

/// Transformation-law evaluation of band J at q.
inline BandPoint evaluate_band(const ReferenceFiber& f, const CrossSectionFamily& fam, const CurveGeometry& geom, int J,
                               int I_max, double q) {
  require(fam.k() == f.k && geom.k == f.k, ErrorKind::GridMismatch, "codimension mismatch between fiber and curve");
  require(I_max + 1 < f.bands(), ErrorKind::ConfigError, "reference fiber lacks bands for the truncation tail");
  const int k = f.k;
  const FiberMap m = fam.at(q);
  const Eigen::MatrixXd S = m.S();
  const Eigen::VectorXd kap = geom.kappa_at(q);
  BandPoint b;
  b.q = q;
  b.kappa = kap;
  const double s2 = m.sigma * m.sigma;
  b.energies = f.E.head(I_max + 2) / s2;
  b.E = b.energies[J];
  const Eigen::VectorXd Sm1 = S * f.m1[J];
  b.M1 = m.c + Sm1;
  b.M2 = m.c * m.c.transpose() + m.c * Sm1.transpose() + Sm1 * m.c.transpose() + S * f.m2[J] * S.transpose();

  // horizontal derivative d_q phi_J = (v.grad + a) phi_J in reference coordinates
  const double cs = -m.dsigma / m.sigma;
  const double cJ = -m.dtheta;
  const Eigen::VectorXd ce = -S.inverse() * m.dc;
  const int nf = ReferenceFiber::field_count(k);
  Eigen::VectorXd fc(nf);
  if (k == 1) {
    fc << cs, ce[0];
  } else {
    fc << cs, cJ, ce[0], ce[1];
  }
  const int nI = I_max + 1;
  Eigen::VectorXd g = cs * f.D.col(J).head(nI);
  if (k == 2) g += cJ * f.Theta.col(J).head(nI);
  for (int a = 0; a < k; ++a) g += ce[a] * f.G[a].col(J).head(nI);
  b.A = g[J];
  const double g2 = std::max(0.0, fc.dot(f.Q[J] * fc) - cs * cs * k * k / 4.0);
  b.vbh = std::max(0.0, g2 - b.A * b.A);
  b.dphi_norm = std::sqrt(g2);

  // W-moment term of the momentum, closed form of <phi_J| s^a (v.grad + a) phi_J>
  {
    const Eigen::VectorXd& mm = f.m1[J];
    Eigen::VectorXd sg = -0.5 * (1.0 + k) * cs * mm - 0.5 * ce + (cs * k / 2.0) * mm;
    if (k == 2) {
      Eigen::VectorXd Jm(2);
      Jm << -mm[1], mm[0];
      sg += -0.5 * cJ * Jm;
    }
    const Eigen::VectorXd proj = S * (sg - mm * b.A);
    b.beta = 2.0 * kap.dot(proj);
  }

  // off-band sources: u1 = 2 d_q phi_J, u2 = (kappa.n) phi_J
  const Eigen::VectorXd u1 = 2.0 * g;
  const double kc = kap.dot(m.c);
  const Eigen::VectorXd Stk = S.transpose() * kap;
  Eigen::VectorXd u2 = Eigen::VectorXd::Zero(nI);
  for (int a = 0; a < k; ++a) u2 += Stk[a] * f.S[a].col(J).head(nI);
  u2[J] += kc;
  const double u1n = 4.0 * g2;
  const double u2n = kc * kc + 2.0 * kc * Stk.dot(f.m1[J]) + Stk.dot(f.m2[J] * Stk);
  double s11 = 0, s12 = 0, s22 = 0;
  for (int I = 0; I < nI; ++I) {
    if (I == J) continue;
    const double de = b.energies[I] - b.E;
    s11 += u1[I] * u1[I] / de;
    s12 += u1[I] * u2[I] / de;
    s22 += u2[I] * u2[I] / de;
  }
  b.T11 = s11;
  b.T12 = s12;
  b.T22 = s22;
  const double top_gap = b.energies[I_max + 1] - b.E;
  b.tail11 = std::max(0.0, u1n - u1.squaredNorm()) / top_gap;
  b.tail22 = std::max(0.0, u2n - u2.squaredNorm()) / top_gap;
  b.tail12 = std::sqrt(b.tail11 * b.tail22);
  b.gap = b.energies[J + 1] - b.E;
  if (J > 0) b.gap = std::min(b.gap, b.E - b.energies[J - 1]);
  return b;
}

/// Band J sampled on the curve grid together with the model used to evaluate it anywhere.
struct BandData {
  int J = 0;
  int I_max = 0;
  std::shared_ptr<const ReferenceFiber> fiber;
  CrossSectionFamily family;
  CurveGeometry geometry;
  std::vector<BandPoint> samples;  // at q_j = j L / N of the geometry grid
  double gap_margin = 0.0;         // min_q distance of E_J to the other bands
  double tail_estimate = 0.0;      // max_q truncation bound over all T_ab
  double loop_overlap = 1.0;       // <phi_J(L)|phi_J(0)> after transport around the loop
  double max_abs_A = 0.0;

  BandPoint at(double q) const { return evaluate_band(*fiber, family, geometry, J, I_max, q); }
  double min_energy() const {
    double e = samples[0].E;
    for (const auto& s : samples) e = std::min(e, s.E);
    return e;
  }
  double max_energy() const {
    double e = samples[0].E;
    for (const auto& s : samples) e = std::max(e, s.E);
    return e;
  }
  /// min_q E_{J+1}(q)
  double next_band_bottom() const {
    double e = samples[0].energies[J + 1];
    for (const auto& s : samples) e = std::min(e, s.energies[J + 1]);
    return e;
  }
};

/// Reference fiber appropriate for a family: closed-form sines for intervals and rectangles, a grid solve for stars.
inline std::shared_ptr<const ReferenceFiber> make_reference_fiber(const CrossSectionFamily& fam, int bands) {
  if (fam.kind == CrossSectionFamily::Kind::Interval)
    return std::make_shared<const ReferenceFiber>(analytic_interval_fiber(bands));
  if (fam.reference.kind == ReferenceDomain::Kind::Rectangle)
    return std::make_shared<const ReferenceFiber>(analytic_rectangle_fiber(fam.reference.a, fam.reference.b, bands));
  return std::make_shared<const ReferenceFiber>(reference_domain_solve(fam.reference, bands));
}

/// Overlap of phi_J with its own transport around the loop (seam rotation applied on the grid).
inline double loop_closure_overlap(const ReferenceFiber& f, const CrossSectionFamily& fam, const CurveGeometry& geom,
                                   int J) {
  if (fam.kind == CrossSectionFamily::Kind::Interval) return 1.0;
  if (!f.modes.empty()) {
    // closed form: quadrature of phi_J(s) phi_J(R s); a rotation that is not a symmetry loses mass
    const double th = fam.seam_rotation(geom), c = std::cos(th), sn = std::sin(th);
    const QuadratureRule rx = gauss_legendre(4 * f.modes[J][0] + 64, -0.5 * f.rect_a, 0.5 * f.rect_a);
    const QuadratureRule ry = gauss_legendre(4 * f.modes[J][1] + 64, -0.5 * f.rect_b, 0.5 * f.rect_b);
    double ov = 0.0;
    for (std::size_t i = 0; i < rx.nodes.size(); ++i)
      for (std::size_t j = 0; j < ry.nodes.size(); ++j) {
        const double x = rx.nodes[i], y = ry.nodes[j];
        ov += rx.weights[i] * ry.weights[j] * rectangle_mode(f.rect_a, f.rect_b, f.modes[J], x, y) *
              rectangle_mode(f.rect_a, f.rect_b, f.modes[J], c * x - sn * y, sn * x + c * y);
      }
    return ov;
  }
  if (!f.grid) return 1.0;
  const auto perm = f.grid->rotation_permutation(fam.seam_rotation(geom));
  if (!perm) fail(ErrorKind::ConfigError, "seam rotation is not a symmetry of the reference grid");
  double ov = 0.0;
  for (int p = 0; p < f.grid->size(); ++p) ov += f.weights[p] * f.phi(p, J) * f.phi((*perm)[p], J);
  return ov;
}

inline BandData build_band_data(const CrossSectionFamily& fam, const CurveGeometry& geom, int J, int I_max,
                                std::shared_ptr<const ReferenceFiber> fiber = nullptr, double gap_tol_rel = 1e-6) {
  require(J >= 0, ErrorKind::ConfigError, "band index must be non-negative");
  require(I_max >= J + 3, ErrorKind::ConfigError, "I_max must be at least J + 3");
  require(fam.k() == geom.k, ErrorKind::GridMismatch, "family and curve codimension differ");
  require(std::abs(fam.period() - geom.length) <= 1e-12 * geom.length, ErrorKind::GridMismatch,
          "family profiles must have the curve length as period");
  if (!fiber) fiber = make_reference_fiber(fam, I_max + 2);
  check_simple(*fiber, J, gap_tol_rel);
  BandData bd;
  bd.J = J;
  bd.I_max = I_max;
  bd.fiber = fiber;
  bd.family = fam;
  bd.geometry = geom;
  bd.samples.reserve(geom.samples);
  double emax = 0.0;
  bd.gap_margin = INFINITY;
  for (int j = 0; j < geom.samples; ++j) {
    bd.samples.push_back(evaluate_band(*fiber, fam, geom, J, I_max, geom.q(j)));
    const BandPoint& b = bd.samples.back();
    bd.gap_margin = std::min(bd.gap_margin, b.gap);
    bd.tail_estimate = std::max({bd.tail_estimate, b.tail11, b.tail12, b.tail22});
    bd.max_abs_A = std::max(bd.max_abs_A, std::abs(b.A));
    emax = std::max(emax, b.energies[J + 1]);
  }
  if (bd.gap_margin <= gap_tol_rel * emax)
    fail(ErrorKind::GapViolation, "band " + std::to_string(J) + " touches a neighbour (gap " + std::to_string(bd.gap_margin) + ")");
  bd.loop_overlap = loop_closure_overlap(*fiber, fam, geom, J);
  if (bd.loop_overlap < 1.0 - 1e-6)
    fail(ErrorKind::GaugeInconsistency, "real gauge does not close around the loop (overlap " + std::to_string(bd.loop_overlap) + ")");
  return bd;
}

struct GapReport {
  double min_gap = 0.0;
  std::vector<double> crossings;  // q positions where E_J meets another scanned band
};

/// min_q min_{I != J, I <= J_scan} |E_I(q) - E_J(q)|.
inline GapReport admissibility_check(const CrossSectionFamily& fam, const CurveGeometry& geom, int J, int J_scan,
                                     std::shared_ptr<const ReferenceFiber> fiber = nullptr) {
  require(J_scan > J, ErrorKind::ConfigError, "J_scan must exceed J");
  if (!fiber) fiber = make_reference_fiber(fam, J_scan + 2);
  require(J_scan < fiber->bands(), ErrorKind::ConfigError, "reference fiber has too few bands");
  GapReport rep;
  rep.min_gap = INFINITY;
  const double tol = 1e-6 * fiber->E[J_scan];
  std::vector<double> prev;
  for (int j = 0; j <= geom.samples; ++j) {
    const double q = geom.length * j / geom.samples;
    const double s2 = std::pow(fam.at(q).sigma, 2);
    std::vector<double> diff;
    for (int I = 0; I <= J_scan; ++I) {
      if (I == J) continue;
      const double d = (fiber->E[I] - fiber->E[J]) / s2;
      rep.min_gap = std::min(rep.min_gap, std::abs(d));
      diff.push_back(d);
    }
    for (std::size_t i = 0; i < diff.size(); ++i) {
      const bool touch = std::abs(diff[i]) <= tol;
      const bool flip = !prev.empty() && (prev[i] > 0) != (diff[i] > 0);
      if ((touch || flip) && j < geom.samples) rep.crossings.push_back(q);
    }
    prev = diff;
  }
  return rep;
}

/// Closed-form bands of an interval family.
struct IntervalBands {
  CrossSectionFamily family;

  double energy(int J, double q) const {
    const double l = family.ell(q);
    return std::pow((J + 1) * std::numbers::pi / l, 2);
  }
  double eigenfunction(int J, double q, double n) const {
    const double l = family.ell(q), c = family.center(q);
    const double x = n - c + 0.5 * l;
    if (x <= 0.0 || x >= l) return 0.0;
    return std::sqrt(2.0 / l) * std::sin((J + 1) * std::numbers::pi * x / l);
  }
};

inline IntervalBands interval_bands(const CrossSectionFamily& fam) {
  require(fam.kind == CrossSectionFamily::Kind::Interval, ErrorKind::ConfigError, "interval_bands needs an interval family");
  return IntervalBands{fam};
}

}  // namespace thintube
