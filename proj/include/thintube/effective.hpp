#pragma once

#include <Eigen/Dense>
#include <Eigen/SparseCore>
#include <cmath>
#include <complex>
#include <vector>

#include "thintube/error.hpp"
#include "thintube/fiber.hpp"
#include "thintube/geometry.hpp"
#include "thintube/lanczos.hpp"

namespace thintube {

struct EffectivePotentials {
  std::vector<double> vgeom, vbh, vamb;  // on the curve grid
};

/// V_geom = -|kappa|^2 / 4, V_BH from the band, V_amb = 0 (flat ambient space).
inline EffectivePotentials effective_potentials(const CurveGeometry& geom, const BandData& band) {
  require(static_cast<int>(band.samples.size()) == geom.samples && std::abs(band.geometry.length - geom.length) < 1e-12 * geom.length,
          ErrorKind::GridMismatch, "band data and curve use different grids");
  EffectivePotentials p;
  p.vgeom.resize(geom.samples);
  p.vbh.resize(geom.samples);
  p.vamb.assign(geom.samples, 0.0);
  for (int j = 0; j < geom.samples; ++j) {
    p.vgeom[j] = -0.25 * geom.kappa.row(j).squaredNorm();
    p.vbh[j] = band.samples[j].vbh;
  }
  return p;
}

/// Discretized quadratic form of the effective band operator on a uniform periodic grid.
/// order 0: -eps^2 d^2 + E_J; order 1 adds the O(eps) metric and connection terms; order 2 is complete.
struct EffectiveOperator {
  double eps = 0.0;
  int N = 0;
  double length = 0.0;
  int order = 2;
  // at nodes q_j
  Eigen::VectorXd W, w_node, T11, T12, T22, E_J, vgeom, vbh, vamb;
  // at midpoints q_{j+1/2}
  Eigen::VectorXd a_half, w_half, A_half, beta_half;
  SparseMatrix K;
  Eigen::VectorXd M;
  double offband_ratio = 0.0;  // largest off-band / kinetic symbol ratio on the grid

  double h() const { return length / N; }
};

inline EffectiveOperator assemble_effective(const BandData& band, double eps, int N, int order = 2) {
  const CurveGeometry& geom = band.geometry;
  require(eps > 0.0, ErrorKind::ConfigError, "eps must be positive");
  require(N >= 4, ErrorKind::ResolutionTooCoarse, "effective grid needs at least 4 points");
  require(order >= 0 && order <= 2, ErrorKind::ConfigError, "order must be 0, 1 or 2");
  const double overlap = eps * band.family.max_normal_extent() * geom.max_abs_kappa();
  if (overlap >= 1.0) fail(ErrorKind::TubeOverlap, "eps sup|n||kappa| = " + std::to_string(overlap));

  EffectiveOperator op;
  op.eps = eps;
  op.N = N;
  op.length = geom.length;
  op.order = order;
  const double h = geom.length / N;
  op.W.resize(N);
  op.w_node.resize(N);
  op.T11.resize(N);
  op.T12.resize(N);
  op.T22.resize(N);
  op.E_J.resize(N);
  op.vgeom.resize(N);
  op.vbh.resize(N);
  op.vamb = Eigen::VectorXd::Zero(N);
  op.a_half.resize(N);
  op.w_half.resize(N);
  op.A_half.resize(N);
  op.beta_half.resize(N);

  auto metric = [&](const BandPoint& b) {
    double a = 1.0;
    if (order >= 1) a += 2.0 * eps * b.kappa.dot(b.M1);
    if (order >= 2) a += 3.0 * eps * eps * b.kappa.dot(b.M2 * b.kappa);
    if (a <= 0.0) fail(ErrorKind::MetricDegenerate, "effective metric coefficient not positive at q = " + std::to_string(b.q));
    return a;
  };

  for (int j = 0; j < N; ++j) {
    const BandPoint b = band.at(h * j);
    const double a = metric(b);
    op.E_J[j] = b.E;
    op.vgeom[j] = -0.25 * b.kappa.squaredNorm();
    op.vbh[j] = b.vbh;
    op.w_node[j] = order >= 1 ? 1.0 / std::sqrt(a) : 1.0;
    op.W[j] = b.E + (order >= 2 ? eps * eps * (op.vgeom[j] + op.vbh[j] + op.vamb[j]) : 0.0);
    op.T11[j] = order >= 2 ? b.T11 : 0.0;
    op.T12[j] = order >= 2 ? b.T12 : 0.0;
    op.T22[j] = order >= 2 ? b.T22 : 0.0;
    const BandPoint bh = band.at(h * (j + 0.5));
    const double ah = metric(bh);
    op.a_half[j] = ah;
    op.w_half[j] = order >= 1 ? 1.0 / std::sqrt(ah) : 1.0;
    op.A_half[j] = order >= 1 ? bh.A : 0.0;
    op.beta_half[j] = order >= 2 ? bh.beta : 0.0;
    if (std::abs(bh.A) > 1e-8) fail(ErrorKind::GaugeInconsistency, "Berry connection does not vanish in the real gauge");
  }

  // guard: the subtracted off-band symbol must stay below the kinetic one on every grid mode
  {
    const double kmax = 2.0 / h;
    double ratio = 0.0;
    for (int j = 0; j < N; ++j) {
      const double r = eps * eps * std::abs(op.T11[j]) + 2.0 * std::pow(eps, 3) * std::abs(op.T12[j]) * kmax +
                       std::pow(eps, 4) * std::abs(op.T22[j]) * kmax * kmax;
      ratio = std::max(ratio, r / op.a_half.minCoeff());
    }
    op.offband_ratio = ratio;
    if (ratio >= 0.5)
      fail(ErrorKind::MetricDegenerate, "off-band term dominates the kinetic term on this grid (ratio " + std::to_string(ratio) + ")");
  }

  std::vector<Triplet> trip;
  trip.reserve(static_cast<std::size_t>(N) * 40);
  auto add_square = [&](const std::vector<std::pair<int, double>>& lin, double weight) {
    for (std::size_t x = 0; x < lin.size(); ++x) {
      trip.emplace_back(lin[x].first, lin[x].first, weight * lin[x].second * lin[x].second);
      for (std::size_t y = x + 1; y < lin.size(); ++y) {
        const double e = weight * lin[x].second * lin[y].second;
        trip.emplace_back(lin[x].first, lin[y].first, e);
        trip.emplace_back(lin[y].first, lin[x].first, e);
      }
    }
  };
  auto add_product = [&](const std::vector<std::pair<int, double>>& l1, const std::vector<std::pair<int, double>>& l2,
                         double weight) {
    for (const auto& [p, cp] : l1)
      for (const auto& [q, cq] : l2) {
        trip.emplace_back(p, q, weight * cp * cq);
        trip.emplace_back(q, p, weight * cp * cq);
      }
  };
  for (int j = 0; j < N; ++j) {
    const int jp = (j + 1) % N, jm = (j + N - 1) % N;
    // kinetic: a |eps psi' - eps^2 beta psi|^2 + a (eps A psi)^2, weight w, at midpoints
    const double ab = op.a_half[j] * op.w_half[j] * h;
    const double bt = op.beta_half[j];
    add_square({{j, -eps / h - 0.5 * eps * eps * bt}, {jp, eps / h - 0.5 * eps * eps * bt}}, ab);
    if (op.A_half[j] != 0.0) add_square({{j, 0.5 * eps * op.A_half[j]}, {jp, 0.5 * eps * op.A_half[j]}}, ab);
    // potential
    trip.emplace_back(j, j, op.W[j] * op.w_node[j] * h);
    // off-band: -eps^2 [T11 D1^2 + 2 T12 D1 D2 + T22 D2^2] w, D1 = eps d, D2 = eps^2 d^2
    if (order >= 2) {
      const double wt = -eps * eps * op.w_node[j] * h;
      const std::vector<std::pair<int, double>> d1{{jp, eps / (2 * h)}, {jm, -eps / (2 * h)}};
      const std::vector<std::pair<int, double>> d2{{jp, eps * eps / (h * h)}, {j, -2 * eps * eps / (h * h)}, {jm, eps * eps / (h * h)}};
      if (op.T11[j] != 0.0) add_square(d1, wt * op.T11[j]);
      if (op.T12[j] != 0.0) add_product(d1, d2, wt * op.T12[j]);
      if (op.T22[j] != 0.0) add_square(d2, wt * op.T22[j]);
    }
  }
  op.K.resize(N, N);
  op.K.setFromTriplets(trip.begin(), trip.end());
  op.K.makeCompressed();
  op.M = op.w_node * h;
  return op;
}

/// Overload mirroring the data flow curve -> band -> potentials -> operator; checks that the grids agree.
inline EffectiveOperator assemble_effective(const CurveGeometry& geom, const BandData& band, const EffectivePotentials& pots,
                                            double eps, int N, int order = 2) {
  require(static_cast<int>(pots.vgeom.size()) == geom.samples && static_cast<int>(band.samples.size()) == geom.samples,
          ErrorKind::GridMismatch, "potentials, band and curve use different grids");
  return assemble_effective(band, eps, N, order);
}

/// Lowest eigenpairs of K x = l M x; dense for small grids, shift-invert Lanczos otherwise.
inline EigenPairs effective_spectrum(const EffectiveOperator& op, int count) {
  require(count >= 1 && count < op.N, ErrorKind::ConfigError, "count must be below the grid size");
  if (op.N <= 800) {
    const Eigen::VectorXd dinv = op.M.cwiseSqrt().cwiseInverse();
    Eigen::MatrixXd B = dinv.asDiagonal() * Eigen::MatrixXd(op.K) * dinv.asDiagonal();
    B = 0.5 * (B + B.transpose()).eval();
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(B);
    if (es.info() != Eigen::Success) fail(ErrorKind::SolverFailure, "dense eigensolver failed");
    EigenPairs ep;
    ep.values = es.eigenvalues().head(count);
    ep.vectors = dinv.asDiagonal() * es.eigenvectors().leftCols(count);
    ep.residuals = Eigen::VectorXd::Zero(count);
    for (int i = 0; i < count; ++i) {
      const Eigen::VectorXd x = es.eigenvectors().col(i);
      ep.residuals[i] = (B * x - ep.values[i] * x).norm() / std::max(1.0, std::abs(ep.values[i]));
    }
    return ep;
  }
  return lowest_eigenpairs(op.K, op.M, count, op.W.minCoeff());
}

/// Exact propagation in the full eigenbasis of the discretized operator.
class EffectivePropagator {
 public:
  explicit EffectivePropagator(const EffectiveOperator& op) : M_(op.M) {
    const Eigen::VectorXd dinv = op.M.cwiseSqrt().cwiseInverse();
    Eigen::MatrixXd B = dinv.asDiagonal() * Eigen::MatrixXd(op.K) * dinv.asDiagonal();
    B = 0.5 * (B + B.transpose()).eval();
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(B);
    if (es.info() != Eigen::Success) fail(ErrorKind::SolverFailure, "dense eigensolver failed");
    values_ = es.eigenvalues();
    vectors_ = dinv.asDiagonal() * es.eigenvectors();  // M-orthonormal
  }

  const Eigen::VectorXd& values() const { return values_; }
  const Eigen::MatrixXd& vectors() const { return vectors_; }

  Eigen::VectorXcd coefficients(const Eigen::VectorXcd& psi) const {
    return vectors_.transpose().cast<std::complex<double>>() * (M_.cast<std::complex<double>>().asDiagonal() * psi);
  }

  Eigen::VectorXcd evolve(const Eigen::VectorXcd& psi0, double t) const {
    Eigen::VectorXcd c = coefficients(psi0);
    for (Eigen::Index i = 0; i < c.size(); ++i) c[i] *= std::polar(1.0, -values_[i] * t);
    return vectors_.cast<std::complex<double>>() * c;
  }

  double norm(const Eigen::VectorXcd& psi) const { return std::sqrt((M_.array() * psi.array().abs2()).sum()); }

 private:
  Eigen::VectorXd M_;
  Eigen::VectorXd values_;
  Eigen::MatrixXd vectors_;
};

inline std::vector<Eigen::VectorXcd> effective_propagate(const EffectiveOperator& op, const Eigen::VectorXcd& psi0,
                                                         const std::vector<double>& times) {
  require(psi0.size() == op.N, ErrorKind::GridMismatch, "state size differs from the grid");
  EffectivePropagator prop(op);
  std::vector<Eigen::VectorXcd> out;
  out.reserve(times.size());
  for (double t : times) out.push_back(prop.evolve(psi0, t));
  return out;
}

}  // namespace thintube
