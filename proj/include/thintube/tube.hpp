#pragma once

#include <Eigen/Dense>
#include <Eigen/SparseCore>
#include <cmath>
#include <complex>
#include <cstdint>
#include <fstream>
#include <string>
#include <vector>

#include "thintube/error.hpp"
#include "thintube/fiber.hpp"
#include "thintube/fiber_grid.hpp"
#include "thintube/geometry.hpp"
#include "thintube/lanczos.hpp"
#include "thintube/structured_form.hpp"

namespace thintube {

/// -eps^2 Laplacian of the full tube in Fermi coordinates, pulled back to the fixed reference cylinder
/// [0, L) x (reference fiber). Unknowns are ordered q-major: index = i_q * fiber.size() + fiber node.
struct TubeOperator {
  double eps = 0.0;
  int k = 1;
  CurveGeometry geometry;
  CrossSectionFamily family;
  FiberGrid fiber;
  StructuredGrid grid;
  SparseMatrix K;
  Eigen::VectorXd M;
  double min_rho = 1.0;
  std::vector<double> sigma;  // sigma(q_i) at the q nodes

  int Nq() const { return grid.axis(0).n; }
  int fiber_size() const { return fiber.size(); }
  int size() const { return grid.size(); }
  double hq() const { return grid.axis(0).h(); }
};

inline TubeOperator assemble_tube(const CurveGeometry& geom, const CrossSectionFamily& fam, double eps, int Nq,
                                  const FiberGrid& fiber) {
  require(eps > 0.0, ErrorKind::ConfigError, "eps must be positive");
  require(fam.k() == geom.k && fiber.k() == geom.k, ErrorKind::GridMismatch, "codimension mismatch");
  require(std::abs(fam.period() - geom.length) <= 1e-12 * geom.length, ErrorKind::GridMismatch,
          "family profiles must have the curve length as period");
  require(fiber.points_across() >= 12, ErrorKind::ResolutionTooCoarse, "fewer than 12 transverse points across the fiber");
  require(Nq >= 3, ErrorKind::ResolutionTooCoarse, "need at least 3 longitudinal points");
  const double overlap = eps * fam.max_normal_extent() * geom.max_abs_kappa();
  if (overlap >= 1.0) fail(ErrorKind::TubeOverlap, "eps sup|n||kappa| = " + std::to_string(overlap));

  TubeOperator op;
  op.eps = eps;
  op.k = geom.k;
  op.geometry = geom;
  op.family = fam;
  op.fiber = fiber;
  std::vector<int> seam;
  if (fam.kind == CrossSectionFamily::Kind::ScaledRotated) {
    const auto perm = fiber.rotation_permutation(fam.seam_rotation(geom));
    if (!perm)
      fail(ErrorKind::ConfigError, "seam rotation holonomy + theta(L) - theta(0) is not a symmetry of the reference grid");
    bool identity = true;
    for (int j = 0; j < static_cast<int>(perm->size()); ++j) identity = identity && (*perm)[j] == j;
    if (!identity) seam = *perm;
  }
  std::vector<Axis> axes{Axis{AxisKind::Periodic, Nq, 0.0, geom.length}};
  for (const auto& a : fiber.axes()) axes.push_back(a);
  op.grid = StructuredGrid(axes, seam);

  // per-q data at doubled indices 0..2 Nq
  struct QData {
    FiberMap map;
    Eigen::VectorXd kappa;
    Eigen::MatrixXd S, Sinv;
    double detS;
  };
  std::vector<QData> qd(2 * Nq + 1);
  for (int t = 0; t <= 2 * Nq; ++t) {
    const double q = op.grid.axis(0).coord(t);
    QData& d = qd[t];
    d.map = fam.at(q);
    d.kappa = geom.kappa_at(q);
    d.S = d.map.S();
    d.Sinv = d.S.inverse();
    d.detS = std::pow(d.map.sigma, geom.k);
  }
  op.sigma.resize(Nq);
  for (int i = 0; i < Nq; ++i) op.sigma[i] = qd[2 * i].map.sigma;

  const int k = geom.k;
  double min_rho = INFINITY;
  auto local = [&](const std::array<int, 3>& t, Eigen::Matrix3d* C, double* w) {
    const QData& d = qd[t[0]];
    const FiberGrid::Point p = fiber.point(t[1], t[2]);
    const Eigen::VectorXd s = p.s.head(k);
    const Eigen::VectorXd n = d.map.c + d.S * s;
    const double rho = 1.0 - eps * d.kappa.dot(n);
    min_rho = std::min(min_rho, rho);
    if (rho <= 0.0) fail(ErrorKind::TubeOverlap, "metric factor rho vanishes inside the tube");
    const double jac = std::abs(p.det);
    if (w) *w = rho * d.detS * jac;
    if (!C) return;
    Eigen::VectorXd b = -d.Sinv * d.map.dc - (d.map.dsigma / d.map.sigma) * s;
    if (k == 2) {
      Eigen::VectorXd js(2);
      js << -s[1], s[0];
      b -= d.map.dtheta * js;
    }
    const double aqq = eps * eps * d.detS / rho;
    const Eigen::VectorXd aqs = aqq * b;
    const Eigen::MatrixXd ass = aqq * b * b.transpose() + rho * d.detS * d.Sinv * d.Sinv.transpose();
    const Eigen::MatrixXd Pinv = p.P.topLeftCorner(k, k).inverse();
    (*C)(0, 0) = aqq * jac;
    const Eigen::VectorXd axi = jac * Pinv * aqs;
    const Eigen::MatrixXd axx = jac * Pinv * ass * Pinv.transpose();
    for (int a = 0; a < k; ++a) {
      (*C)(0, a + 1) = axi[a];
      (*C)(a + 1, 0) = axi[a];
      for (int c = 0; c < k; ++c) (*C)(a + 1, c + 1) = axx(a, c);
    }
  };
  auto coeff = [&](const std::array<int, 3>& t, Eigen::Matrix3d& C) { local(t, &C, nullptr); };
  auto weight = [&](const std::array<int, 3>& t) {
    double w = 0.0;
    local(t, nullptr, &w);
    return w;
  };
  FormMatrices fm = assemble_form(op.grid, coeff, weight);
  op.K = std::move(fm.K);
  op.M = std::move(fm.M);
  op.min_rho = min_rho;
  return op;
}

/// Convenience for k = 1: interval fiber with Nn transverse points.
inline TubeOperator assemble_tube(const CurveGeometry& geom, const CrossSectionFamily& fam, double eps, int Nq, int Nn) {
  if (fam.k() == 1) return assemble_tube(geom, fam, eps, Nq, FiberGrid::interval(Nn));
  ReferenceDomain ref = fam.reference;
  ref.resolution = Nn;
  return assemble_tube(geom, fam, eps, Nq, ref.grid());
}

/// Lowest eigenpairs below e_max by shift-invert Lanczos around `target` (normally min_q E_J(q)).
inline EigenPairs tube_spectrum(const TubeOperator& op, int count, double e_max, double target, const EigenOptions& opt = {}) {
  EigenPairs ep = lowest_eigenpairs(op.K, op.M, count, target, opt);
  int keep = 0;
  while (keep < ep.values.size() && ep.values[keep] < e_max) ++keep;
  if (keep < ep.values.size()) {
    ep.values.conservativeResize(keep);
    ep.residuals.conservativeResize(keep);
    ep.vectors.conservativeResize(Eigen::NoChange, keep);
  }
  return ep;
}

/// Fiberwise projection psi(q) = <phi_J(q,.)|state(q,.)> with the physical fiber measure (no rho factor).
/// `fiber` must be a grid fiber on the same grid as the tube.
template <class Vec>
Eigen::Matrix<typename Vec::Scalar, Eigen::Dynamic, 1> band_project(const TubeOperator& op, const ReferenceFiber& fiber, int J,
                                                                      const Vec& state) {
  require(fiber.grid && fiber.grid->size() == op.fiber_size(), ErrorKind::GridMismatch, "fiber grid differs from the tube grid");
  require(state.size() == op.size(), ErrorKind::GridMismatch, "state size differs from the tube grid");
  const int nf = op.fiber_size();
  Eigen::Matrix<typename Vec::Scalar, Eigen::Dynamic, 1> psi(op.Nq());
  const Eigen::VectorXd wphi = fiber.weights.cwiseProduct(fiber.phi.col(J));
  for (int i = 0; i < op.Nq(); ++i) {
    const double scale = std::pow(op.sigma[i], 0.5 * op.k);
    psi[i] = scale * (wphi.transpose().template cast<typename Vec::Scalar>() * state.segment(i * nf, nf))(0, 0);
  }
  return psi;
}

/// lift(psi)(q, s) = psi(q) phi_J(q, s).
template <class Vec>
Eigen::Matrix<typename Vec::Scalar, Eigen::Dynamic, 1> band_lift(const TubeOperator& op, const ReferenceFiber& fiber, int J,
                                                                   const Vec& psi) {
  require(fiber.grid && fiber.grid->size() == op.fiber_size(), ErrorKind::GridMismatch, "fiber grid differs from the tube grid");
  require(psi.size() == op.Nq(), ErrorKind::GridMismatch, "function size differs from the longitudinal grid");
  const int nf = op.fiber_size();
  Eigen::Matrix<typename Vec::Scalar, Eigen::Dynamic, 1> out(op.size());
  for (int i = 0; i < op.Nq(); ++i) {
    const double scale = std::pow(op.sigma[i], -0.5 * op.k);
    out.segment(i * nf, nf) = (scale * psi[i]) * fiber.phi.col(J).template cast<typename Vec::Scalar>();
  }
  return out;
}

/// Spectral propagation restricted to a computed subspace of M-orthonormal eigenvectors.
class TubePropagator {
 public:
  TubePropagator(const TubeOperator& op, EigenPairs pairs) : M_(op.M), pairs_(std::move(pairs)) {}

  const EigenPairs& pairs() const { return pairs_; }

  Eigen::VectorXcd coefficients(const Eigen::VectorXcd& state) const {
    return pairs_.vectors.transpose().cast<std::complex<double>>() * (M_.cast<std::complex<double>>().asDiagonal() * state);
  }

  double norm(const Eigen::VectorXcd& state) const { return std::sqrt((M_.array() * state.array().abs2()).sum()); }

  /// Squared norm fraction of `state` outside the computed subspace.
  double leakage(const Eigen::VectorXcd& state) const {
    const double n2 = std::pow(norm(state), 2);
    return std::max(0.0, n2 - coefficients(state).squaredNorm()) / n2;
  }

  Eigen::VectorXcd evolve_coefficients(const Eigen::VectorXcd& c, double t, const Eigen::VectorXd* values = nullptr) const {
    const Eigen::VectorXd& lam = values ? *values : pairs_.values;
    Eigen::VectorXcd out = c;
    for (Eigen::Index i = 0; i < c.size(); ++i) out[i] *= std::polar(1.0, -lam[i] * t);
    return out;
  }

  Eigen::VectorXcd synthesize(const Eigen::VectorXcd& c) const { return pairs_.vectors.cast<std::complex<double>>() * c; }

 private:
  Eigen::VectorXd M_;
  EigenPairs pairs_;
};

/// States at the requested times; the initial state must lie in the computed cutoff subspace.
inline std::vector<Eigen::VectorXcd> tube_propagate(const TubeOperator& op, const EigenPairs& cutoff_pairs,
                                                    const Eigen::VectorXcd& state, const std::vector<double>& times,
                                                    double* leak_out = nullptr) {
  require(state.size() == op.size(), ErrorKind::GridMismatch, "state size differs from the tube grid");
  TubePropagator prop(op, cutoff_pairs);
  const double leak = prop.leakage(state);
  if (leak_out) *leak_out = leak;
  if (leak > 1e-6) fail(ErrorKind::CutoffLeak, "state has " + std::to_string(leak) + " of its norm above the cutoff");
  const Eigen::VectorXcd c = prop.coefficients(state);
  std::vector<Eigen::VectorXcd> out;
  for (double t : times) out.push_back(prop.synthesize(prop.evolve_coefficients(c, t)));
  return out;
}

/// Writes K and the diagonal of M as (int64 row, int64 col, float64 value) little-endian records.
inline void dump_triplets(const TubeOperator& op, const std::string& k_path, const std::string& m_path) {
  auto put = [](std::ofstream& os, std::int64_t r, std::int64_t c, double v) {
    os.write(reinterpret_cast<const char*>(&r), sizeof r);
    os.write(reinterpret_cast<const char*>(&c), sizeof c);
    os.write(reinterpret_cast<const char*>(&v), sizeof v);
  };
  std::ofstream ks(k_path, std::ios::binary), ms(m_path, std::ios::binary);
  require(ks.good() && ms.good(), ErrorKind::ConfigError, "cannot open dump files");
  for (int c = 0; c < op.K.outerSize(); ++c)
    for (SparseMatrix::InnerIterator it(op.K, c); it; ++it) put(ks, it.row(), it.col(), it.value());
  for (int i = 0; i < op.M.size(); ++i) put(ms, i, i, op.M[i]);
}

}  // namespace thintube
