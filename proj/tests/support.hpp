#pragma once

#include <Eigen/Dense>
#include <Eigen/SparseCholesky>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <functional>
#include <numbers>
#include <sstream>
#include <string>
#include <vector>

#include "thintube/thintube.hpp"

namespace tt_test {

using thintube::json;
inline constexpr double kPi = std::numbers::pi;
inline constexpr double kTwoPi = 2.0 * std::numbers::pi;

inline std::string source_path(const std::string& rel) { return std::string(THINTUBE_SOURCE_DIR) + "/" + rel; }

inline std::filesystem::path scratch_dir(const std::string& name) {
  const auto p = std::filesystem::temp_directory_path() / ("thintube_test_" + name);
  std::filesystem::remove_all(p);
  std::filesystem::create_directories(p);
  return p;
}

inline std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

/// Planar closed strip: curvature profile (json), interval width and offset profiles (json).
inline json strip_config(const json& kappa, const json& ell, const json& center, std::vector<double> eps, int samples = 128) {
  return json{{"schema_version", 1},
              {"geometry", {{"synthetic", {{"length", kTwoPi}, {"kappa", json::array({kappa})}}}, {"samples", samples}}},
              {"family", {{"interval", {{"ell", ell}, {"center", center}}}}},
              {"band", 0},
              {"epsilons", eps},
              {"resolution", {{"N", 128}, {"N_levels", 3}, {"Nq", 16}, {"Nn", 15}, {"levels", 3}, {"I_max", 20}}},
              {"count", 4}};
}

inline thintube::BandData band_of(const thintube::ExperimentConfig& c) {
  return thintube::build_band_data(c.family, c.geometry, c.band, c.resolution.I_max);
}

/// Discrete eigenvalues of -u'' on n interior nodes of (0, width), Dirichlet, three-point stencil.
inline Eigen::VectorXd dirichlet_1d(int n, double width) {
  const double h = width / (n + 1);
  Eigen::VectorXd v(n);
  for (int j = 1; j <= n; ++j) v[j - 1] = 4.0 / (h * h) * std::pow(std::sin(kPi * j / (2.0 * (n + 1))), 2);
  return v;
}

/// Discrete eigenvalues of -u'' on N periodic nodes of a circle of length L, three-point stencil.
inline Eigen::VectorXd periodic_1d(int N, double L) {
  const double h = L / N;
  Eigen::VectorXd v(N);
  for (int m = 0; m < N; ++m) v[m] = 4.0 / (h * h) * std::pow(std::sin(kPi * m / N), 2);
  std::sort(v.data(), v.data() + N);
  return v;
}

/// <x^2> of the ground mode cos(pi x / a) on (-a/2, a/2).
inline double second_moment(double a) { return a * a * (1.0 / 12.0 - 1.0 / (2.0 * kPi * kPi)); }

/// ||d_theta phi||^2 for the Dirichlet ground mode of the centered a x b rectangle, in closed form.
inline double rectangle_twist_constant(double a, double b) {
  return second_moment(a) * std::pow(kPi / b, 2) + second_moment(b) * std::pow(kPi / a, 2) - 0.5;
}

/// Reference-domain oracle for the twist constant: ground state of the five-point Laplacian on an n x m interior
/// grid of the a x b rectangle, then the Hellmann-Feynman derivative of -Lap + mu (-d_theta^2) at mu = 0. The
/// rotation form is integrated cell by cell (cell-centred differences, zero padding), which keeps the boundary
/// cells in the quadrature.
inline double twist_constant_oracle(double a, double b, int narrow) {
  const double h = std::min(a, b) / (narrow + 1);
  const int nx = static_cast<int>(std::lround(a / h)) - 1, ny = static_cast<int>(std::lround(b / h)) - 1;
  const double hx = a / (nx + 1), hy = b / (ny + 1);
  const int n = nx * ny;
  auto id = [&](int i, int j) { return i * ny + j; };
  std::vector<Eigen::Triplet<double>> t;
  for (int i = 0; i < nx; ++i)
    for (int j = 0; j < ny; ++j) {
      t.emplace_back(id(i, j), id(i, j), 2.0 / (hx * hx) + 2.0 / (hy * hy));
      if (i > 0) t.emplace_back(id(i, j), id(i - 1, j), -1.0 / (hx * hx));
      if (i + 1 < nx) t.emplace_back(id(i, j), id(i + 1, j), -1.0 / (hx * hx));
      if (j > 0) t.emplace_back(id(i, j), id(i, j - 1), -1.0 / (hy * hy));
      if (j + 1 < ny) t.emplace_back(id(i, j), id(i, j + 1), -1.0 / (hy * hy));
    }
  Eigen::SparseMatrix<double> L(n, n);
  L.setFromTriplets(t.begin(), t.end());
  Eigen::SimplicialLDLT<Eigen::SparseMatrix<double>> ldlt(L);
  Eigen::VectorXd u = Eigen::VectorXd::Ones(n);
  for (int it = 0; it < 400; ++it) {
    Eigen::VectorXd v = ldlt.solve(u);
    v /= v.norm();
    const double change = (v - u / u.norm()).norm();
    u = v;
    if (change < 1e-14) break;
  }
  // padded value lookup and cell-centred form
  auto val = [&](int i, int j) { return (i < 0 || j < 0 || i >= nx || j >= ny) ? 0.0 : u[id(i, j)]; };
  double form = 0.0, mass = 0.0;
  for (int i = -1; i < nx; ++i)
    for (int j = -1; j < ny; ++j) {
      const double ux = 0.5 * ((val(i + 1, j) - val(i, j)) + (val(i + 1, j + 1) - val(i, j + 1))) / hx;
      const double uy = 0.5 * ((val(i, j + 1) - val(i, j)) + (val(i + 1, j + 1) - val(i + 1, j))) / hy;
      const double x = -0.5 * a + (i + 1.5) * hx, y = -0.5 * b + (j + 1.5) * hy;
      form += std::pow(x * uy - y * ux, 2) * hx * hy;
    }
  for (int p = 0; p < n; ++p) mass += u[p] * u[p] * hx * hy;
  return form / mass;
}

/// One invariant check: name, outcome and a short measured value.
struct Check {
  std::string name;
  bool pass = false;
  std::string detail;
};

inline std::string num(double v) {
  std::ostringstream os;
  os.precision(6);
  os << v;
  return os.str();
}

inline thintube::ExperimentConfig bent_annulus(std::vector<double> eps = {0.2, 0.1}) {
  return thintube::parse_config(strip_config(1.0, 0.8, 0.0, std::move(eps)));
}

inline thintube::ExperimentConfig varying_strip(std::vector<double> eps = {0.2, 0.1}) {
  return thintube::parse_config(strip_config(json{{"constant", 0.6}, {"cos", {0.3}}},
                                             json{{"constant", 0.8}, {"cos", {0.16}}},
                                             json{{"constant", 0.05}, {"sin", {0.04}}}, std::move(eps)));
}

inline thintube::ExperimentConfig twisted_rectangle(double omega, std::vector<double> eps = {0.2, 0.1, 0.05}) {
  json j = thintube::read_json_file(source_path("configs/twisted_rectangle.json"));
  j["family"]["scaled_rotated"]["angle"] = json{{"constant", 0.0}, {"slope", omega}};
  j["epsilons"] = eps;
  return thintube::parse_config(j);
}

/// Module invariants as one list of checks. Shared by the property-test suite and the acceptance binary.
inline std::vector<Check> invariant_checks() {
  using namespace thintube;
  std::vector<Check> out;

  // Hermiticity and mass positivity of both discretizations
  {
    const ExperimentConfig c = varying_strip();
    const BandData band = band_of(c);
    const EffectiveOperator eff = assemble_effective(band, 0.1, 128, 2);
    const double asym = Eigen::MatrixXd(eff.K - SparseMatrix(eff.K.transpose())).cwiseAbs().maxCoeff();
    const double scale = Eigen::MatrixXd(eff.K).cwiseAbs().maxCoeff();
    out.push_back({"effective K symmetric", asym <= 1e-12 * scale, num(asym / scale)});
    out.push_back({"effective M positive", eff.M.minCoeff() > 0.0, num(eff.M.minCoeff())});
    const TubeOperator tube = assemble_tube(c.geometry, c.family, 0.1, 16, FiberGrid::interval(15));
    const SparseMatrix d = tube.K - SparseMatrix(tube.K.transpose());
    double tasym = 0.0, tscale = 0.0;
    for (int kk = 0; kk < d.outerSize(); ++kk)
      for (SparseMatrix::InnerIterator it(d, kk); it; ++it) tasym = std::max(tasym, std::abs(it.value()));
    for (int kk = 0; kk < tube.K.outerSize(); ++kk)
      for (SparseMatrix::InnerIterator it(tube.K, kk); it; ++it) tscale = std::max(tscale, std::abs(it.value()));
    out.push_back({"tube K symmetric", tasym <= 1e-12 * tscale, num(tasym / tscale)});
    out.push_back({"tube M positive", tube.M.minCoeff() > 0.0 && tube.min_rho > 0.0, num(tube.min_rho)});
  }

  // normalization of grid fibers and band-level positivity statements
  {
    const FiberGrid g = FiberGrid::rectangle(kPi, kPi / 2, 24);
    const ReferenceFiber f = grid_fiber(g, 6);
    const Eigen::MatrixXd gram = f.phi.transpose() * f.weights.asDiagonal() * f.phi;
    const double dev = (gram - Eigen::MatrixXd::Identity(6, 6)).cwiseAbs().maxCoeff();
    out.push_back({"grid fiber orthonormal", dev <= 1e-10, num(dev)});
    const ReferenceFiber ia = analytic_interval_fiber(8);
    double s0 = 0.0;
    for (int I = 0; I < 8; ++I) s0 = std::max(s0, std::abs(ia.S[0](I, I) - ia.m1[I][0]));
    out.push_back({"interval fiber moments consistent", s0 <= 1e-12, num(s0)});
  }
  for (const auto& [label, cfg] : std::vector<std::pair<std::string, ExperimentConfig>>{
           {"varying strip", varying_strip()}, {"twisted rectangle", twisted_rectangle(1.0)}}) {
    const BandData band = band_of(cfg);
    double minE = 1e300, minV = 1e300, maxA = 0.0, minT = 1e300, minCentered = 1e300, minGap = 1e300;
    for (const BandPoint& p : band.samples) {
      minE = std::min(minE, p.E);
      minV = std::min(minV, p.vbh);
      maxA = std::max(maxA, std::abs(p.A));
      minT = std::min(minT, p.T11);
      minGap = std::min(minGap, p.gap);
      const Eigen::MatrixXd centered = p.M2 - p.M1 * p.M1.transpose();
      minCentered = std::min(minCentered, Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd>(centered).eigenvalues().minCoeff());
    }
    out.push_back({label + ": E_J > 0", minE > 0.0, num(minE)});
    out.push_back({label + ": V_BH >= 0", minV >= 0.0, num(minV)});
    out.push_back({label + ": |A| <= 1e-8", maxA <= 1e-8, num(maxA)});
    out.push_back({label + ": T11 >= 0", minT >= 0.0, num(minT)});
    out.push_back({label + ": centered M2 positive definite", minCentered > 0.0, num(minCentered)});
    out.push_back({label + ": gap > 0", minGap > 0.0 && band.gap_margin > 0.0, num(band.gap_margin)});
  }

  // gauge-sign invariance: flipping phi_J changes no coefficient and no eigenvalue
  {
    const ExperimentConfig c = varying_strip();
    const auto fiber = make_reference_fiber(c.family, c.resolution.I_max + 2);
    ReferenceFiber flipped = *fiber;
    const int J = c.band;
    auto flip = [&](Eigen::MatrixXd& m) {
      m.row(J) *= -1.0;
      m.col(J) *= -1.0;
    };
    for (auto& m : flipped.S) flip(m);
    flip(flipped.D);
    flip(flipped.Theta);
    for (auto& m : flipped.G) flip(m);
    const BandData b0 = build_band_data(c.family, c.geometry, J, c.resolution.I_max, fiber);
    const BandData b1 = build_band_data(c.family, c.geometry, J, c.resolution.I_max, std::make_shared<const ReferenceFiber>(flipped));
    const EffectiveOperator e0 = assemble_effective(b0, 0.1, 128, 2), e1 = assemble_effective(b1, 0.1, 128, 2);
    const bool same_k = Eigen::MatrixXd(e0.K) == Eigen::MatrixXd(e1.K) && e0.M == e1.M;
    const EigenPairs p0 = effective_spectrum(e0, 6), p1 = effective_spectrum(e1, 6);
    out.push_back({"gauge sign flip leaves K, M bit-identical", same_k, same_k ? "identical" : "differs"});
    out.push_back({"gauge sign flip leaves eigenvalues bit-identical", p0.values == p1.values,
                   num((p0.values - p1.values).cwiseAbs().maxCoeff())});
  }

  // Dirichlet domain monotonicity: a pointwise wider fiber lowers every eigenvalue
  {
    const ExperimentConfig narrow = parse_config(strip_config(1.0, json{{"constant", 0.7}, {"cos", {0.1}}}, 0.0, {0.1}));
    const ExperimentConfig wide = parse_config(strip_config(1.0, json{{"constant", 0.8}, {"cos", {0.1}}, {"sin", {0.05}}}, 0.0, {0.1}));
    const TubeOperator tn = assemble_tube(narrow.geometry, narrow.family, 0.1, 32, FiberGrid::interval(31));
    const TubeOperator tw = assemble_tube(wide.geometry, wide.family, 0.1, 32, FiberGrid::interval(31));
    const EigenPairs en = lowest_eigenpairs(tn.K, tn.M, 8, 0.0), ew = lowest_eigenpairs(tw.K, tw.M, 8, 0.0);
    double worst = -1e300;
    for (int i = 0; i < 8; ++i) worst = std::max(worst, ew.values[i] - en.values[i]);
    out.push_back({"domain monotonicity (wider is lower)", worst < 0.0, num(worst)});
    out.push_back({"Dirichlet positivity", en.values[0] > 0.0 && ew.values[0] > 0.0, num(ew.values[0])});
  }

  // shear isometry: a constant normal offset of a straight strip is an isometry
  {
    const ExperimentConfig c0 = parse_config(strip_config(0.0, 0.8, 0.0, {0.1}));
    const ExperimentConfig c1 = parse_config(strip_config(0.0, 0.8, 0.07, {0.1}));
    const TubeOperator t0 = assemble_tube(c0.geometry, c0.family, 0.1, 32, FiberGrid::interval(31));
    const TubeOperator t1 = assemble_tube(c1.geometry, c1.family, 0.1, 32, FiberGrid::interval(31));
    const EigenPairs e0 = lowest_eigenpairs(t0.K, t0.M, 6, 0.0), e1 = lowest_eigenpairs(t1.K, t1.M, 6, 0.0);
    const double diff = (e0.values - e1.values).cwiseAbs().maxCoeff() / e0.values[0];
    out.push_back({"shear isometry (constant offset)", diff <= 1e-10, num(diff)});
  }
  return out;
}

}  // namespace tt_test
