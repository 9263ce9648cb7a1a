#pragma once

#include <Eigen/Dense>
#include <Eigen/SparseCholesky>
#include <Eigen/SparseCore>
#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <sstream>
#include <vector>

#include "thintube/error.hpp"
#include "thintube/structured_form.hpp"

namespace thintube {

struct EigenOptions {
  double tol = 1e-12;        // relative Ritz residual of the shift-inverted operator
  int max_restarts = 400;
  int max_passes = 8;        // deflation passes (each one can recover one more copy of a multiple eigenvalue)
  int stall_restarts = 30;   // restarts without a newly converged pair before a pass returns early
  std::uint64_t seed = 12345;
};

struct EigenPairs {
  Eigen::VectorXd values;     // ascending
  Eigen::MatrixXd vectors;    // columns, orthonormal in the M inner product
  Eigen::VectorXd residuals;  // ||K y - l M y||_{M^-1} / max(1,|l|)
  double shift = 0.0;
  int operator_applications = 0;
};

namespace detail {

// Largest eigenpairs of a symmetric operator restricted to the complement of `locked`,
// thick-restart Lanczos with full reorthogonalization.
template <class Op>
void thick_restart_lanczos(Op&& op, int n, const Eigen::MatrixXd& locked, int nev, const EigenOptions& opt,
                           std::uint64_t seed, Eigen::VectorXd& theta_out, Eigen::MatrixXd& x_out, int& applications) {
  const int free_dim = n - static_cast<int>(locked.cols());
  nev = std::min(nev, free_dim);
  const int m = std::min(free_dim, std::max(2 * nev + 20, 40));
  Eigen::MatrixXd V(n, m + 1);
  Eigen::MatrixXd H = Eigen::MatrixXd::Zero(m, m);
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> uni(-1.0, 1.0);

  auto deflate = [&](Eigen::Ref<Eigen::VectorXd> w, int basis) {
    for (int pass = 0; pass < 2; ++pass) {
      if (locked.cols() > 0) w -= locked * (locked.transpose() * w);
      if (basis > 0) w -= V.leftCols(basis) * (V.leftCols(basis).transpose() * w);
    }
  };
  auto random_vector = [&](int basis) {
    Eigen::VectorXd v(n);
    for (int tries = 0; tries < 10; ++tries) {
      for (int i = 0; i < n; ++i) v[i] = uni(rng);
      deflate(v, basis);
      const double nv = v.norm();
      if (nv > 1e-8) return Eigen::VectorXd(v / nv);
    }
    fail(ErrorKind::SolverFailure, "could not build a start vector");
  };

  V.col(0) = random_vector(0);
  int k = 0;
  double beta = 0.0;
  int best_conv = 0, stall = 0;
  Eigen::VectorXd w(n);
  for (int restart = 0; restart <= opt.max_restarts; ++restart) {
    for (int j = k; j < m; ++j) {
      w = op(V.col(j));
      ++applications;
      if (locked.cols() > 0) w -= locked * (locked.transpose() * w);
      Eigen::VectorXd h = V.leftCols(j + 1).transpose() * w;
      w -= V.leftCols(j + 1) * h;
      Eigen::VectorXd h2 = V.leftCols(j + 1).transpose() * w;
      w -= V.leftCols(j + 1) * h2;
      h += h2;
      if (locked.cols() > 0) w -= locked * (locked.transpose() * w);
      for (int i = 0; i <= j; ++i) {
        H(i, j) = h[i];
        H(j, i) = h[i];
      }
      beta = w.norm();
      const double scale = std::max(std::abs(h[j]), 1e-300);
      if (beta <= 1e-14 * scale) {
        // invariant subspace reached: continue with a fresh direction
        beta = 0.0;
        if (j + 1 < free_dim) V.col(j + 1) = random_vector(j + 1);
        else V.col(j + 1).setZero();
      } else {
        V.col(j + 1) = w / beta;
      }
    }
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(H);
    const Eigen::VectorXd& th = es.eigenvalues();
    const Eigen::MatrixXd& S = es.eigenvectors();
    std::vector<int> done;
    for (int i = m - 1; i >= m - nev; --i) {
      const double res = std::abs(beta * S(m - 1, i));
      if (res <= opt.tol * std::abs(th[i]) || m >= free_dim) done.push_back(i);
    }
    const int nconv = static_cast<int>(done.size());
    if (nconv > best_conv) {
      best_conv = nconv;
      stall = 0;
    } else {
      ++stall;
    }
    // a second copy of a multiple eigenvalue enters the Krylov space only through rounding and may never
    // converge here; return what has converged and let the next deflation pass pick it up
    const bool stalled = nconv > 0 && (stall >= opt.stall_restarts || restart == opt.max_restarts);
    if (nconv == nev || stalled) {
      theta_out.resize(nconv);
      x_out.resize(n, nconv);
      for (int c = 0; c < nconv; ++c) {
        theta_out[c] = th[done[c]];
        x_out.col(c) = V.leftCols(m) * S.col(done[c]);
      }
      return;
    }
    if (restart == opt.max_restarts) {
      std::ostringstream os;
      os << "Lanczos did not converge after " << opt.max_restarts << " restarts (n = " << n << ", nev = " << nev << ")";
      fail(ErrorKind::SolverFailure, os.str());
    }
    const int kk = std::min(nev + (m - nev) / 2, m - 1);
    Eigen::MatrixXd keep = V.leftCols(m) * S.rightCols(kk);
    Eigen::VectorXd next = V.col(m);
    V.leftCols(kk) = keep;
    V.col(kk) = next;
    H.setZero();
    for (int i = 0; i < kk; ++i) H(i, i) = th[m - kk + i];
    k = kk;
  }
}

}  // namespace detail

/// Lowest `count` eigenpairs of K y = l diag(M) y (K symmetric, M > 0) by shift-invert Lanczos.
/// The shift starts at `target` and is lowered until K - shift*M is positive definite.
inline EigenPairs lowest_eigenpairs(const SparseMatrix& K, const Eigen::VectorXd& M, int count, double target,
                                    const EigenOptions& opt = {}) {
  const int n = static_cast<int>(K.rows());
  require(K.cols() == n && M.size() == n, ErrorKind::GridMismatch, "eigenproblem dimensions disagree");
  require((M.array() > 0.0).all(), ErrorKind::SolverFailure, "mass matrix must be positive");
  count = std::clamp(count, 1, n);
  const Eigen::VectorXd dinv = M.cwiseSqrt().cwiseInverse();
  SparseMatrix B = dinv.asDiagonal() * K * dinv.asDiagonal();
  B.makeCompressed();
  SparseMatrix I(n, n);
  I.setIdentity();

  double scale = 0.0;
  for (int c = 0; c < B.outerSize(); ++c)
    for (SparseMatrix::InnerIterator it(B, c); it; ++it) scale = std::max(scale, std::abs(it.value()));
  double sigma = target;
  double step = std::max(1e-3 * std::abs(target), 1e-10 * std::max(scale, 1.0));
  Eigen::SimplicialLLT<SparseMatrix> llt;
  bool ok = false;
  for (int attempt = 0; attempt < 200; ++attempt) {
    SparseMatrix A = B - sigma * I;
    llt.compute(A);
    if (llt.info() == Eigen::Success) {
      ok = true;
      break;
    }
    sigma -= step;
    step *= 2.0;
  }
  if (!ok) fail(ErrorKind::SolverFailure, "could not find a shift below the spectrum");

  auto op = [&](const Eigen::VectorXd& x) -> Eigen::VectorXd { return llt.solve(x); };

  EigenPairs out;
  out.shift = sigma;
  std::vector<double> vals;
  std::vector<Eigen::VectorXd> vecs;
  Eigen::MatrixXd locked(n, 0);
  int applications = 0;
  for (int pass = 0; pass < opt.max_passes || (static_cast<int>(vals.size()) < count && pass < 4 * opt.max_passes); ++pass) {
    if (locked.cols() >= n) break;
    Eigen::VectorXd theta;
    Eigen::MatrixXd X;
    detail::thick_restart_lanczos(op, n, locked, count, opt, opt.seed + 7919u * pass, theta, X, applications);
    std::vector<double> cur = vals;
    std::sort(cur.begin(), cur.end());
    const double threshold = cur.size() >= static_cast<std::size_t>(count) ? cur[count - 1] : INFINITY;
    bool improved = false;
    Eigen::MatrixXd grown(n, locked.cols() + X.cols());
    grown << locked, X;
    for (int i = 0; i < X.cols(); ++i) {
      const double lam = sigma + 1.0 / theta[i];
      if (lam < threshold - 1e-10 * std::max(1.0, std::abs(threshold))) improved = true;
      vals.push_back(lam);
      vecs.push_back(X.col(i));
    }
    locked = grown;
    if (pass > 0 && !improved) break;
    if (static_cast<int>(locked.cols()) >= n) break;
  }
  out.operator_applications = applications;
  if (static_cast<int>(vals.size()) < count)
    fail(ErrorKind::SolverFailure, "found " + std::to_string(vals.size()) + " of " + std::to_string(count) + " eigenpairs");

  std::vector<int> order(vals.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](int a, int b) { return vals[a] < vals[b]; });
  const int take = std::min<int>(count, static_cast<int>(order.size()));
  Eigen::MatrixXd X(n, take);
  for (int i = 0; i < take; ++i) X.col(i) = vecs[order[i]];
  // Rayleigh-Ritz on the collected vectors cleans up mixing inside clusters
  Eigen::HouseholderQR<Eigen::MatrixXd> qr(X);
  Eigen::MatrixXd Qb = qr.householderQ() * Eigen::MatrixXd::Identity(n, take);
  Eigen::MatrixXd BQ = B * Qb;
  Eigen::MatrixXd Hs = Qb.transpose() * BQ;
  Hs = 0.5 * (Hs + Hs.transpose()).eval();
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(Hs);
  Eigen::MatrixXd Xr = Qb * es.eigenvectors();
  Eigen::MatrixXd BX = BQ * es.eigenvectors();
  out.values = es.eigenvalues();
  out.residuals.resize(take);
  for (int i = 0; i < take; ++i) {
    out.residuals[i] = (BX.col(i) - out.values[i] * Xr.col(i)).norm() / std::max(1.0, std::abs(out.values[i]));
    // deterministic sign: largest-magnitude component positive
    Eigen::Index imax = 0;
    Xr.col(i).cwiseAbs().maxCoeff(&imax);
    if (Xr(imax, i) < 0) Xr.col(i) = -Xr.col(i);
  }
  out.vectors = dinv.asDiagonal() * Xr;
  return out;
}

/// All eigenpairs below e_max, found by doubling the requested count.
inline EigenPairs eigenpairs_below(const SparseMatrix& K, const Eigen::VectorXd& M, double e_max, double target,
                                   int initial_count, const EigenOptions& opt = {}) {
  const int n = static_cast<int>(K.rows());
  int count = std::clamp(initial_count, 1, n);
  for (;;) {
    EigenPairs ep = lowest_eigenpairs(K, M, count, target, opt);
    const int found = static_cast<int>(ep.values.size());
    if (ep.values[found - 1] >= e_max || count >= n) {
      int keep = 0;
      while (keep < found && ep.values[keep] < e_max) ++keep;
      EigenPairs out;
      out.values = ep.values.head(keep);
      out.vectors = ep.vectors.leftCols(keep);
      out.residuals = ep.residuals.head(keep);
      out.shift = ep.shift;
      out.operator_applications = ep.operator_applications;
      return out;
    }
    count = std::min(n, 2 * count);
  }
}

/// Number of eigenvalues of K x = l M x below e, from the inertia of K - e M (sparse LDL^T).
inline int count_eigenvalues_below(const SparseMatrix& K, const Eigen::VectorXd& M, double e) {
  SparseMatrix A = K;
  for (int i = 0; i < A.rows(); ++i) A.coeffRef(i, i) -= e * M[i];
  Eigen::SimplicialLDLT<SparseMatrix> ldlt(A);
  if (ldlt.info() != Eigen::Success) fail(ErrorKind::SolverFailure, "LDL^T factorization failed");
  int neg = 0;
  for (Eigen::Index i = 0; i < ldlt.vectorD().size(); ++i) neg += ldlt.vectorD()[i] < 0.0 ? 1 : 0;
  return neg;
}

}  // namespace thintube
