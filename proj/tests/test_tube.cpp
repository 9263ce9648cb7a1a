#include <gtest/gtest.h>

#include <cstring>
#include <fstream>

#include "support.hpp"

using namespace thintube;
using tt_test::json;
using tt_test::kPi;
using tt_test::kTwoPi;

namespace {

Eigen::VectorXd separable(int Nq, int Nn, double eps, double ell, int count) {
  const Eigen::VectorXd p = tt_test::periodic_1d(Nq, kTwoPi), d = tt_test::dirichlet_1d(Nn, ell);
  std::vector<double> all;
  for (int i = 0; i < p.size(); ++i)
    for (int j = 0; j < d.size(); ++j) all.push_back(eps * eps * p[i] + d[j]);
  std::sort(all.begin(), all.end());
  return Eigen::Map<Eigen::VectorXd>(all.data(), count);
}

}  // namespace

TEST(Tube, FlatStripIsTensorSum) {
  const ExperimentConfig c = parse_config(tt_test::strip_config(0.0, 0.8, 0.0, {0.1}));
  for (double eps : {0.2, 0.05}) {
    const TubeOperator op = assemble_tube(c.geometry, c.family, eps, 24, FiberGrid::interval(15));
    const EigenPairs ep = lowest_eigenpairs(op.K, op.M, 12, 0.0);
    const Eigen::VectorXd ref = separable(24, 15, eps, 0.8, 12);
    for (int i = 0; i < 12; ++i) EXPECT_NEAR(ep.values[i], ref[i], 1e-9 * ref[i]) << "eps " << eps << " level " << i;
  }
}

TEST(Tube, ScalingInEpsilonIsSeparable) {
  const ExperimentConfig c = parse_config(tt_test::strip_config(0.0, 0.8, 0.0, {0.1}));
  const TubeOperator a = assemble_tube(c.geometry, c.family, 0.2, 24, FiberGrid::interval(15));
  const TubeOperator b = assemble_tube(c.geometry, c.family, 0.1, 24, FiberGrid::interval(15));
  const Eigen::VectorXd la = lowest_eigenpairs(a.K, a.M, 5, 0.0).values, lb = lowest_eigenpairs(b.K, b.M, 5, 0.0).values;
  const Eigen::VectorXd p = tt_test::periodic_1d(24, kTwoPi);
  // the lowest five levels all sit on the first transverse mode
  for (int i = 0; i < 5; ++i) EXPECT_NEAR(la[i] - lb[i], (0.04 - 0.01) * p[i], 1e-9 * la[i]);
}

TEST(Tube, JacobianStaysPositive) {
  const ExperimentConfig c = tt_test::bent_annulus();
  const TubeOperator op = assemble_tube(c.geometry, c.family, 0.2, 16, FiberGrid::interval(15));
  EXPECT_GT(op.min_rho, 0.0);
  EXPECT_NEAR(op.min_rho, 1.0 - 0.2 * 0.4, 0.02);
  EXPECT_GT(op.M.minCoeff(), 0.0);
}

TEST(Tube, OverlappingTubeIsRefused) {
  const ExperimentConfig c = parse_config(tt_test::strip_config(3.0, 0.8, 0.0, {0.1}));
  try {
    assemble_tube(c.geometry, c.family, 0.9, 16, FiberGrid::interval(15));
    FAIL() << "expected TubeOverlap";
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::TubeOverlap);
  }
}

TEST(Tube, SinusoidalOffsetMatchesEffectiveAtHighOrder) {
  // a q-dependent offset is not an isometry: the shear terms move the spectrum at eps^2. The wavy - flat shift
  // is taken on identical grids so the transverse discretization error cancels, and the effective operator
  // must track it to beyond eps^3.
  const ExperimentConfig c0 = parse_config(tt_test::strip_config(0.0, 0.8, 0.0, {0.1}));
  const ExperimentConfig c1 = parse_config(tt_test::strip_config(0.0, 0.8, json{{"constant", 0.0}, {"sin", {0.08}}}, {0.1}));
  const BandData b0 = tt_test::band_of(c0), b1 = tt_test::band_of(c1);
  auto tube_shift = [&](double e) {
    std::vector<Eigen::VectorXd> lv;
    for (int l = 0; l < 3; ++l) {
      const FiberGrid g = FiberGrid::interval(refine_transverse(15, l));
      const TubeOperator wavy = assemble_tube(c1.geometry, c1.family, e, 32 << l, g);
      const TubeOperator flat = assemble_tube(c0.geometry, c0.family, e, 32 << l, g);
      lv.push_back(lowest_eigenpairs(wavy.K, wavy.M, 1, 0.0).values - lowest_eigenpairs(flat.K, flat.M, 1, 0.0).values);
    }
    return richardson(lv).value[0];
  };
  std::vector<double> eps{0.2, 0.1, 0.05}, diff;
  for (double e : eps) {
    const double t = tube_shift(e);
    const double f = effective_spectrum(assemble_effective(b1, e, 512, 2), 1).values[0] -
                     effective_spectrum(assemble_effective(b0, e, 512, 2), 1).values[0];
    EXPECT_GT(t, 0.5 * e * e * 0.0032 * kPi * kPi / 0.64) << "eps " << e;
    diff.push_back(std::abs(t - f));
  }
  const PowerFit fit = fit_power(eps, diff);
  ASSERT_TRUE(fit.valid);
  EXPECT_GE(fit.exponent, 2.7) << fit.exponent << " " << diff[0] << " " << diff[1] << " " << diff[2];
}

TEST(Tube, SeamRotationMustBeAGridSymmetry) {
  json j = read_json_file(tt_test::source_path("configs/twisted_rectangle.json"));
  j["family"]["scaled_rotated"]["angle"] = json{{"constant", 0.0}, {"slope", 0.25}};
  const ExperimentConfig c = parse_config(j);
  EXPECT_THROW(assemble_tube(c.geometry, c.family, 0.1, 4, FiberGrid::rectangle(kPi, kPi / 2, 15)), Error);
}

TEST(Tube, DumpWritesLittleEndianTriplets) {
  const ExperimentConfig c = tt_test::bent_annulus();
  const TubeOperator op = assemble_tube(c.geometry, c.family, 0.2, 8, FiberGrid::interval(15));
  const auto dir = tt_test::scratch_dir("dump");
  dump_triplets(op, (dir / "K.bin").string(), (dir / "M.bin").string());
  const std::string k = tt_test::slurp(dir / "K.bin"), m = tt_test::slurp(dir / "M.bin");
  EXPECT_EQ(k.size(), static_cast<std::size_t>(op.K.nonZeros()) * 24);
  EXPECT_EQ(m.size(), static_cast<std::size_t>(op.size()) * 24);
  std::int64_t r = 0, col = 0;
  double v = 0;
  std::memcpy(&r, m.data(), 8);
  std::memcpy(&col, m.data() + 8, 8);
  std::memcpy(&v, m.data() + 16, 8);
  EXPECT_EQ(r, 0);
  EXPECT_EQ(col, 0);
  EXPECT_DOUBLE_EQ(v, op.M[0]);
}
