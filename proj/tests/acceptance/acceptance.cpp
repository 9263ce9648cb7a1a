// Acceptance run: one PASS/FAIL line per criterion, nonzero exit if any fails.

#include <chrono>
#include <cstdio>
#include <iostream>

#include "support.hpp"

using namespace thintube;
using tt_test::json;
using tt_test::kPi;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

json shipped(const std::string& name) { return read_json_file(tt_test::source_path("configs/" + name + ".json")); }

// continuum flat cylinder: pi^2/l^2 + eps^2 m^2, m = 0, +-1, +-2, ...
double flat_level(double eps, double ell, int i) {
  const int m = (i + 1) / 2;
  return kPi * kPi / (ell * ell) + eps * eps * m * m;
}

Outcome c1_flat() {
  json j = shipped("flat_cylinder");
  j["mode"] = "spectrum";
  j["orders"] = {2};
  j["count"] = 10;
  const ConvergenceReport r = run_spectrum_compare(prepare_study(parse_config(j)));
  double worst_tube = 0, worst_eff = 0, worst_err = 0;
  int n = 0;
  for (const auto& e : r.per_eps) {
    const auto& tv = e.tube.extrapolated;
    const auto& ev = e.orders.at(0).effective.extrapolated;
    for (int i = 0; i < 10 && i < tv.value.size() && i < ev.value.size(); ++i, ++n) {
      const double exact = flat_level(e.eps, 0.8, i);
      worst_tube = std::max(worst_tube, std::abs(tv.value[i] - exact) / exact);
      worst_eff = std::max(worst_eff, std::abs(ev.value[i] - exact) / exact);
      worst_err = std::max(worst_err, std::max(tv.error[i], ev.error[i]) / exact);
    }
  }
  const bool ok = n == 10 * static_cast<int>(r.per_eps.size()) && worst_tube <= 1e-6 && worst_eff <= 1e-6 && worst_err <= 1e-6;
  return {ok, "levels " + std::to_string(n) + ", tube-analytic " + tt_test::num(worst_tube) + ", effective-analytic " + tt_test::num(worst_eff) +
                  ", Richardson error " + tt_test::num(worst_err) + " (relative, limit 1e-06)"};
}

Outcome c2_c3_bent(Outcome& c3) {
  json j = shipped("bent_annulus");
  j["orders"] = {0, 2};
  j["order"] = 2;
  const ConvergenceReport r = run_spectrum_compare(prepare_study(parse_config(j)));
  bool ok2 = r.mesh_converged, ok3 = true;
  std::string p2, p0;
  for (int i = 0; i < 5; ++i) {
    const LevelFit* f2 = r.find_fit(2, i);
    const LevelFit* f0 = r.find_fit(0, i);
    const bool v2 = f2 && f2->fit.valid, v0 = f0 && f0->fit.valid;
    ok2 = ok2 && v2 && f2->fit.exponent >= 2.7;
    ok3 = ok3 && v0 && std::abs(f0->fit.exponent - 2.0) <= 0.3;
    p2 += (i ? " " : "") + (v2 ? tt_test::num(f2->fit.exponent) : std::string("n/a"));
    p0 += (i ? " " : "") + (v0 ? tt_test::num(f0->fit.exponent) : std::string("n/a"));
  }
  c3 = {ok3, "order-0 exponents " + p0 + " (target 2 +- 0.3)"};
  return {ok2, "order-2 exponents " + p2 + " (limit 2.7), mesh guard " + (r.mesh_converged ? "passed" : "failed")};
}

Outcome c4_varying() {
  const SpacingReport r = run_level_spacing(prepare_study(parse_config(shipped("varying_ell"))));
  double worst = 0;
  for (const auto& e : r.per_eps) worst = std::max(worst, std::abs(e.bottom_spacing / e.harmonic_spacing - 1.0));
  const bool ok = r.fit_bottom.valid && std::abs(r.fit_bottom.exponent - 1.0) <= 0.1 && worst <= 0.1;
  return {ok, "bottom spacing exponent " + tt_test::num(r.fit_bottom.exponent) + " (target 1 +- 0.1), worst deviation from 2 eps omega " +
                  tt_test::num(worst) + " (limit 0.1), omega " + tt_test::num(r.omega)};
}

Outcome c5_flat_spacing() {
  const SpacingReport r = run_level_spacing(prepare_study(parse_config(shipped("flat_cylinder"))));
  const bool ok = r.fit_bottom.valid && std::abs(r.fit_bottom.exponent - 2.0) <= 0.15;
  return {ok, "bottom spacing exponent " + tt_test::num(r.fit_bottom.exponent) + " (target 2 +- 0.15)"};
}

Outcome c6_twist() {
  const double a = kPi, b = kPi / 2;
  // dense reference-domain oracle, Richardson over three grids
  std::vector<Eigen::VectorXd> lv;
  for (int n : {16, 32, 64}) lv.push_back(Eigen::VectorXd::Constant(1, tt_test::twist_constant_oracle(a, b, n)));
  const double c_ref = richardson(lv).value[0];
  const double omega = 1.0;
  const ExperimentConfig c1 = tt_test::twisted_rectangle(omega, {0.1});
  const ExperimentConfig c0 = tt_test::twisted_rectangle(0.0, {0.1});
  const Study s1 = prepare_study(c1), s0 = prepare_study(c0);
  double worst = 0;
  for (const BandPoint& p : s1.band->samples) worst = std::max(worst, std::abs(p.vbh / (omega * omega * c_ref) - 1.0));
  const double eps = 0.1;
  const double l1 = tube_levels(s1, eps, 1).extrapolated.value[0];
  const double l0 = tube_levels(s0, eps, 1).extrapolated.value[0];
  const double shift = (l1 - l0) / (eps * eps);
  const double rel = std::abs(shift / (omega * omega * c_ref) - 1.0);
  const bool ok = worst <= 0.01 && shift * c_ref > 0 && rel <= 0.2;
  return {ok, "c_ref " + tt_test::num(c_ref) + " (closed form " + tt_test::num(tt_test::rectangle_twist_constant(a, b)) + "), V_BH deviation " +
                  tt_test::num(worst) + " (limit 0.01), tube shift / eps^2 " + tt_test::num(shift) + ", deviation " + tt_test::num(rel) + " (limit 0.2)"};
}

Outcome c7_dynamics() {
  const DynamicsReport r = run_dynamics_compare(prepare_study(parse_config(shipped("bent_annulus"))));
  bool linear = true;
  double gamma = 0;
  for (const auto& e : r.per_eps) {
    linear = linear && e.linear_ok && e.growth.valid && e.growth.exponent <= 1.2;
    gamma = std::max(gamma, e.growth.valid ? e.growth.exponent : 99.0);
  }
  const double p = std::max(r.fit_excess.valid ? r.fit_excess.exponent : 0.0, r.fit_drift.valid ? r.fit_drift.exponent : 0.0);
  const bool ok = linear && p >= 1.8;
  return {ok, "excess slope exponent " + tt_test::num(r.fit_excess.exponent) + ", drift slope exponent " + tt_test::num(r.fit_drift.exponent) +
                  " (limit 1.8), raw err slope exponent " + tt_test::num(r.fit_err.exponent) + ", largest growth exponent " + tt_test::num(gamma) +
                  " (limit 1.2)"};
}

Outcome c8_invariants() {
  int failed = 0;
  std::string names;
  const auto checks = tt_test::invariant_checks();
  for (const auto& c : checks)
    if (!c.pass) {
      ++failed;
      names += " " + c.name + " [" + c.detail + "]";
    }
  return {failed == 0, std::to_string(checks.size() - failed) + "/" + std::to_string(checks.size()) + " checks" + names};
}

}  // namespace

int main() {
  bool all = true;
  auto report = [&](int id, const Outcome& o, double seconds) {
    all = all && o.pass;
    std::printf("criterion %d: %s  %s  [%.0f s]\n", id, o.pass ? "PASS" : "FAIL", o.detail.c_str(), seconds);
    std::fflush(stdout);
  };
  auto timed = [&](int id, auto&& fn) {
    const auto t0 = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = fn();
    } catch (const std::exception& e) {
      o = {false, std::string("error: ") + e.what()};
    }
    report(id, o, std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count());
  };
  timed(1, c1_flat);
  {
    const auto t0 = std::chrono::steady_clock::now();
    Outcome c2, c3{false, "not run"};
    try {
      c2 = c2_c3_bent(c3);
    } catch (const std::exception& e) {
      c2 = {false, std::string("error: ") + e.what()};
      c3 = c2;
    }
    const double s = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    report(2, c2, s);
    report(3, c3, 0.0);
  }
  timed(4, c4_varying);
  timed(5, c5_flat_spacing);
  timed(6, c6_twist);
  timed(7, c7_dynamics);
  timed(8, c8_invariants);
  std::printf("%s\n", all ? "all criteria passed" : "some criteria failed");
  return all ? 0 : 1;
}
