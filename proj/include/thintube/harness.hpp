#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <atomic>
#include <charconv>
#include <cmath>
#include <complex>
#include <exception>
#include <filesystem>
#include <fstream>
#include <limits>
#include <memory>
#include <string>
#include <thread>
#include <tuple>
#include <vector>

#include "thintube/config.hpp"
#include "thintube/effective.hpp"
#include "thintube/fiber.hpp"
#include "thintube/richardson.hpp"
#include "thintube/tube.hpp"

namespace thintube {

struct RunOptions {
  int threads = 0;             // 0: take the config value
  bool force_large = false;    // lift the k = 2 size cap
  bool throw_on_guard = true;  // raise MeshNotConverged / InsufficientSpectrum instead of only recording them
};

/// fn(i) for i in [0, n) on a fixed number of workers. Results must be stored by index, so the schedule
/// never changes them. The first failure (lowest index) is rethrown.
template <class F>
void parallel_for(int n, int threads, F&& fn) {
  threads = std::clamp(threads, 1, std::max(1, n));
  std::vector<std::exception_ptr> errors(n);
  if (threads == 1) {
    for (int i = 0; i < n; ++i) {
      try {
        fn(i);
      } catch (...) {
        errors[i] = std::current_exception();
      }
    }
  } else {
    std::atomic<int> next{0};
    std::vector<std::thread> pool;
    for (int w = 0; w < threads; ++w)
      pool.emplace_back([&] {
        for (int i = next++; i < n; i = next++) {
          try {
            fn(i);
          } catch (...) {
            errors[i] = std::current_exception();
          }
        }
      });
    for (auto& t : pool) t.join();
  }
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
}

/// Shortest decimal that round-trips.
inline std::string fmt(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[64];
  const auto r = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, r.ptr);
}

inline json num(double v) { return std::isfinite(v) ? json(v) : json(nullptr); }

inline json to_json(const PowerFit& f) {
  return {{"valid", f.valid}, {"exponent", num(f.exponent)}, {"log_prefactor", num(f.log_prefactor)},
          {"residual", num(f.residual)}, {"points", f.points}, {"note", f.note}};
}

/// Band data and cutoff shared by every run on one config.
struct Study {
  ExperimentConfig config;
  std::shared_ptr<const BandData> band;
  double e_max = 0.0;
};

inline Study prepare_study(const ExperimentConfig& cfg) {
  Study st;
  st.config = cfg;
  st.band = std::make_shared<const BandData>(build_band_data(cfg.family, cfg.geometry, cfg.band, cfg.resolution.I_max));
  st.e_max = cfg.e_max.value_or(0.5 * (st.band->max_energy() + st.band->next_band_bottom()));
  require(st.e_max > st.band->min_energy(), ErrorKind::ConfigError, "/E_max: below the band bottom");
  return st;
}

inline json provenance(const Study& st) {
  const ExperimentConfig& c = st.config;
  const BandData& b = *st.band;
  const Resolution& r = c.resolution;
  return {{"config_hash", c.hash},
          {"config", c.source},
          {"band", c.band},
          {"k", c.geometry.k},
          {"length", c.geometry.length},
          {"E_max", st.e_max},
          {"band_min", b.min_energy()},
          {"band_max", b.max_energy()},
          {"next_band_bottom", b.next_band_bottom()},
          {"gap", b.gap_margin},
          {"truncation_tail", b.tail_estimate},
          {"loop_overlap", b.loop_overlap},
          {"max_abs_berry", b.max_abs_A},
          {"resolution",
           {{"samples", r.samples}, {"N", r.N}, {"N_levels", r.N_levels}, {"Nq", r.Nq}, {"Nn", r.Nn}, {"levels", r.levels},
            {"I_max", r.I_max}, {"mesh_guard", r.mesh_guard}, {"refine_q", r.refine_q}}},
          {"seed", c.seed}};
}

/// Transverse count after `level` halvings of the spacing.
inline int refine_transverse(int nn, int level) { return (nn + 1) * (1 << level) - 1; }

inline FiberGrid tube_fiber_grid(const CrossSectionFamily& fam, int nn) {
  if (fam.k() == 1) return FiberGrid::interval(nn);
  ReferenceDomain ref = fam.reference;
  ref.resolution = nn;
  return ref.grid();
}

inline void check_size_cap(const ExperimentConfig& cfg, long long unknowns, bool force_large) {
  if (cfg.geometry.k == 2 && static_cast<double>(unknowns) > cfg.size_cap && !force_large)
    fail(ErrorKind::SizeCapExceeded, std::to_string(unknowns) + " unknowns exceed the cap of " + fmt(cfg.size_cap) +
                                         " (pass --force-large to run anyway)");
}

inline void check_refinable(const CrossSectionFamily& fam, int levels) {
  if (levels > 1 && fam.kind == CrossSectionFamily::Kind::ScaledRotated && fam.reference.kind == ReferenceDomain::Kind::Star)
    fail(ErrorKind::ConfigError, "/resolution/levels: star grids cannot be halved; use a single level");
}

struct LevelSpectra {
  std::vector<Eigen::VectorXd> raw;  // per level, common length
  Extrapolated extrapolated;
  std::vector<long long> sizes;
  double max_residual = 0.0;
  double offband_ratio = 0.0;
};

inline void truncate_common(LevelSpectra& s) {
  Eigen::Index n = std::numeric_limits<Eigen::Index>::max();
  for (const auto& v : s.raw) n = std::min(n, v.size());
  for (auto& v : s.raw) v.conservativeResize(n);
  s.extrapolated = richardson(s.raw);
}

/// Tube eigenvalues below E_max at `levels` resolutions (Nq and the transverse spacing halved together).
inline LevelSpectra tube_levels(const Study& st, double eps, int count, const RunOptions& ro = {}) {
  const ExperimentConfig& c = st.config;
  check_refinable(c.family, c.resolution.levels);
  LevelSpectra out;
  for (int l = c.resolution.levels - 1; l >= 0; --l)
    check_size_cap(c, static_cast<long long>(c.resolution.nq(l)) * tube_fiber_grid(c.family, refine_transverse(c.resolution.Nn, l)).size(),
                   ro.force_large);
  for (int l = 0; l < c.resolution.levels; ++l) {
    const FiberGrid g = tube_fiber_grid(c.family, refine_transverse(c.resolution.Nn, l));
    const int nq = c.resolution.nq(l);
    const TubeOperator op = assemble_tube(c.geometry, c.family, eps, nq, g);
    EigenOptions opt;
    opt.seed = c.seed;
    const EigenPairs ep = tube_spectrum(op, count, st.e_max, st.band->min_energy(), opt);
    out.raw.push_back(ep.values);
    out.sizes.push_back(op.size());
    if (ep.residuals.size() > 0) out.max_residual = std::max(out.max_residual, ep.residuals.maxCoeff());
  }
  truncate_common(out);
  return out;
}

/// Effective eigenvalues below E_max on N, 2N, 4N, ...
inline LevelSpectra effective_levels(const Study& st, double eps, int order, int count) {
  const ExperimentConfig& c = st.config;
  LevelSpectra out;
  for (int l = 0; l < c.resolution.N_levels; ++l) {
    const EffectiveOperator op = assemble_effective(*st.band, eps, c.resolution.N << l, order);
    const EigenPairs ep = effective_spectrum(op, std::min(count, op.N - 1));
    int keep = 0;
    while (keep < ep.values.size() && ep.values[keep] < st.e_max) ++keep;
    out.raw.push_back(ep.values.head(keep));
    out.sizes.push_back(op.N);
    out.offband_ratio = std::max(out.offband_ratio, op.offband_ratio);
    if (ep.residuals.size() > 0) out.max_residual = std::max(out.max_residual, ep.residuals.maxCoeff());
  }
  truncate_common(out);
  return out;
}

// ---------------------------------------------------------------------------------------------------------
// spectrum comparison

enum class PointStatus { Resolved, Zero, Unresolved };

inline std::string to_string(PointStatus s) {
  switch (s) {
    case PointStatus::Resolved: return "resolved";
    case PointStatus::Zero: return "zero";
    case PointStatus::Unresolved: return "unresolved";
  }
  return "unresolved";
}

struct PairedLevel {
  int index = 0;
  double tube = 0, tube_err = 0, effective = 0, effective_err = 0;
  double d = 0, d_coarse = 0, disc_err = 0;
  bool guard = false;    // disc_err < 0.1 d
  bool mesh_ok = false;  // |d - d_coarse| < 0.1 d
  PointStatus status = PointStatus::Unresolved;
};

struct OrderComparison {
  int order = 2;
  std::vector<PairedLevel> levels;
  LevelSpectra effective;
};

struct EpsilonComparison {
  double eps = 0;
  LevelSpectra tube;
  std::vector<OrderComparison> orders;
  bool mesh_ok = false;  // at the primary order, no level unresolved
};

struct LevelFit {
  int order = 2;
  int index = 0;
  PowerFit fit;
  std::vector<double> eps;
};

struct ConvergenceReport {
  json provenance;
  int primary_order = 2;
  std::vector<int> orders;
  std::vector<EpsilonComparison> per_eps;
  std::vector<LevelFit> fits;
  bool mesh_converged = false;
  std::string guard_failure;

  const LevelFit* find_fit(int order, int index) const {
    for (const auto& f : fits)
      if (f.order == order && f.index == index) return &f;
    return nullptr;
  }
  const OrderComparison* find(std::size_t e, int order) const {
    for (const auto& o : per_eps.at(e).orders)
      if (o.order == order) return &o;
    return nullptr;
  }
};

inline std::vector<int> ladder(const ExperimentConfig& c) {
  std::vector<int> o = c.orders;
  if (std::find(o.begin(), o.end(), c.order) == o.end()) o.push_back(c.order);
  std::sort(o.begin(), o.end());
  o.erase(std::unique(o.begin(), o.end()), o.end());
  return o;
}

inline std::vector<PairedLevel> pair_levels(const LevelSpectra& tube, const LevelSpectra& eff) {
  // sorted-order pairing: a degenerate cluster is compared as a sorted vector
  const Eigen::Index n = std::min(tube.extrapolated.value.size(), eff.extrapolated.value.size());
  std::vector<PairedLevel> out;
  for (Eigen::Index i = 0; i < n; ++i) {
    PairedLevel p;
    p.index = static_cast<int>(i);
    p.tube = tube.extrapolated.value[i];
    p.tube_err = tube.extrapolated.error[i];
    p.effective = eff.extrapolated.value[i];
    p.effective_err = eff.extrapolated.error[i];
    p.d = std::abs(p.tube - p.effective);
    p.d_coarse = std::abs(tube.extrapolated.coarse[i] - eff.extrapolated.coarse[i]);
    p.disc_err = p.tube_err + p.effective_err;
    p.guard = p.disc_err < 0.1 * p.d;
    p.mesh_ok = std::abs(p.d - p.d_coarse) < 0.1 * p.d;
    const double zero_floor = 1e-8 * std::max(1.0, std::abs(p.tube));
    if (p.guard && p.mesh_ok) {
      p.status = PointStatus::Resolved;
    } else if (p.d <= 10.0 * p.disc_err + 1e-13 * std::abs(p.tube) && p.disc_err <= zero_floor) {
      p.status = PointStatus::Zero;  // no difference to resolve
    } else {
      p.status = PointStatus::Unresolved;
    }
    out.push_back(p);
  }
  return out;
}

inline ConvergenceReport run_spectrum_compare(const Study& st, const RunOptions& ro = {}) {
  const ExperimentConfig& c = st.config;
  ConvergenceReport rep;
  rep.provenance = provenance(st);
  rep.primary_order = c.order;
  rep.orders = ladder(c);
  const int ne = static_cast<int>(c.epsilons.size());
  const int no = static_cast<int>(rep.orders.size());
  rep.per_eps.resize(ne);
  for (int e = 0; e < ne; ++e) {
    rep.per_eps[e].eps = c.epsilons[e];
    rep.per_eps[e].orders.resize(no);
  }
  // tube runs and effective runs are independent tasks
  const int threads = ro.threads > 0 ? ro.threads : c.threads;
  parallel_for(ne * (1 + no), threads, [&](int task) {
    const int e = task / (1 + no), slot = task % (1 + no);
    const double eps = c.epsilons[e];
    if (slot == 0) {
      rep.per_eps[e].tube = tube_levels(st, eps, c.count, ro);
    } else {
      OrderComparison& oc = rep.per_eps[e].orders[slot - 1];
      oc.order = rep.orders[slot - 1];
      oc.effective = effective_levels(st, eps, oc.order, c.count);
    }
  });
  bool any_ok = false;
  for (auto& ec : rep.per_eps) {
    for (auto& oc : ec.orders) oc.levels = pair_levels(ec.tube, oc.effective);
    ec.mesh_ok = true;
    for (const auto& oc : ec.orders)
      if (oc.order == c.order)
        for (const auto& p : oc.levels) ec.mesh_ok = ec.mesh_ok && p.status != PointStatus::Unresolved;
    any_ok = any_ok || ec.mesh_ok;
  }
  rep.mesh_converged = any_ok;
  for (int order : rep.orders) {
    int nlev = c.count;
    for (std::size_t e = 0; e < rep.per_eps.size(); ++e)
      nlev = std::min<int>(nlev, static_cast<int>(rep.find(e, order)->levels.size()));
    for (int i = 0; i < nlev; ++i) {
      LevelFit lf;
      lf.order = order;
      lf.index = i;
      std::vector<double> ds;
      for (std::size_t e = 0; e < rep.per_eps.size(); ++e) {
        const PairedLevel& p = rep.find(e, order)->levels[i];
        if (p.status == PointStatus::Resolved) {
          lf.eps.push_back(rep.per_eps[e].eps);
          ds.push_back(p.d);
        }
      }
      lf.fit = fit_power(lf.eps, ds);
      rep.fits.push_back(lf);
    }
  }
  if (c.resolution.mesh_guard && !rep.mesh_converged) {
    rep.guard_failure = "MeshNotConverged: the mesh-independence guard fails for every eps";
    if (ro.throw_on_guard) fail(ErrorKind::MeshNotConverged, "the mesh-independence guard fails for every eps");
  }
  return rep;
}

inline json to_json(const ConvergenceReport& r) {
  json j;
  j["kind"] = "spectrum";
  j["provenance"] = r.provenance;
  j["primary_order"] = r.primary_order;
  j["orders"] = r.orders;
  j["pairing"] = "sorted order below E_max";
  j["mesh_converged"] = r.mesh_converged;
  j["guard_failure"] = r.guard_failure;
  json per = json::array();
  for (const auto& ec : r.per_eps) {
    json e;
    e["eps"] = ec.eps;
    e["mesh_ok"] = ec.mesh_ok;
    e["tube_sizes"] = ec.tube.sizes;
    e["tube_max_residual"] = ec.tube.max_residual;
    json raw = json::array();
    for (const auto& v : ec.tube.raw) raw.push_back(std::vector<double>(v.data(), v.data() + v.size()));
    e["tube_raw"] = raw;
    json ords = json::array();
    for (const auto& oc : ec.orders) {
      json o;
      o["order"] = oc.order;
      o["effective_sizes"] = oc.effective.sizes;
      o["offband_ratio"] = oc.effective.offband_ratio;
      json lv = json::array();
      for (const auto& p : oc.levels)
        lv.push_back({{"index", p.index}, {"tube", p.tube}, {"tube_err", num(p.tube_err)}, {"effective", p.effective},
                      {"effective_err", num(p.effective_err)}, {"d", p.d}, {"d_coarse", p.d_coarse},
                      {"disc_err", num(p.disc_err)}, {"guard", p.guard}, {"mesh_ok", p.mesh_ok},
                      {"status", to_string(p.status)}});
      o["levels"] = lv;
      ords.push_back(o);
    }
    e["orders"] = ords;
    per.push_back(e);
  }
  j["per_eps"] = per;
  json fits = json::array();
  for (const auto& f : r.fits) fits.push_back({{"order", f.order}, {"index", f.index}, {"eps", f.eps}, {"fit", to_json(f.fit)}});
  j["fits"] = fits;
  return j;
}

// ---------------------------------------------------------------------------------------------------------
// dynamics

struct DynamicsEpsilon {
  double eps = 0;
  double wavenumber = 0;         // momentum / eps rounded to a periodic mode
  int modes = 0;                 // tube eigenpairs below E_max
  double lambda_err = 0;         // largest Richardson error of the tube eigenvalues
  double eta = 0;                // || psi0 - U P lift psi0 ||
  double lift_leak = 0;          // fraction of lift(psi0) above the cutoff
  double err0 = 0;
  double slope_err = 0;          // max_t (err(t) - err(0)) / t
  double slope_drift = 0;        // max_t drift(t) / t
  double slope_excess = 0;       // max_t sqrt(err(t)^2 - err(0)^2) / t
  PowerFit growth;               // sqrt(err(t)^2 - err(0)^2) ~ t^gamma
  bool linear_ok = false;
  std::vector<double> times, err, drift, offband;
};

struct DynamicsReport {
  json provenance;
  std::vector<DynamicsEpsilon> per_eps;
  PowerFit fit_err;    // slope_err vs eps
  PowerFit fit_drift;  // slope_drift vs eps
  PowerFit fit_excess; // slope_excess vs eps
};

inline Eigen::VectorXcd gaussian_packet(double L, int N, double center, double width, double wavenumber) {
  const double h = L / N;
  Eigen::VectorXcd psi(N);
  for (int j = 0; j < N; ++j) {
    double amp = 0.0;
    for (int m = -3; m <= 3; ++m) amp += std::exp(-std::pow(j * h - center + m * L, 2) / (2.0 * width * width));
    psi[j] = std::polar(amp, wavenumber * j * h);
  }
  return psi / std::sqrt(h * psi.squaredNorm());
}

inline DynamicsReport run_dynamics_compare(const Study& st, const RunOptions& ro = {}) {
  const ExperimentConfig& c = st.config;
  const DynamicsSpec& d = c.dynamics;
  const double L = c.geometry.length;
  check_refinable(c.family, d.levels);
  DynamicsReport rep;
  rep.provenance = provenance(st);
  rep.per_eps.resize(c.epsilons.size());
  const int threads = ro.threads > 0 ? ro.threads : c.threads;
  parallel_for(static_cast<int>(c.epsilons.size()), threads, [&](int e) {
    const double eps = c.epsilons[e];
    DynamicsEpsilon& out = rep.per_eps[e];
    out.eps = eps;
    // tube eigenpairs at fixed Nq, transverse spacing halved per level
    std::vector<TubeOperator> ops;
    std::vector<EigenPairs> pairs;
    LevelSpectra ls;
    for (int l = 0; l < d.levels; ++l) {
      const FiberGrid g = tube_fiber_grid(c.family, refine_transverse(d.Nn, l));
      check_size_cap(c, static_cast<long long>(d.Nq) * g.size(), ro.force_large);
      ops.push_back(assemble_tube(c.geometry, c.family, eps, d.Nq, g));
      EigenOptions opt;
      opt.seed = c.seed;
      pairs.push_back(eigenpairs_below(ops.back().K, ops.back().M, st.e_max, st.band->min_energy(), d.Nq + 8, opt));
      ls.raw.push_back(pairs.back().values);
    }
    truncate_common(ls);
    const Eigen::Index n = ls.raw[0].size();
    require(n > 0, ErrorKind::InsufficientSpectrum, "no tube eigenvalues below E_max");
    out.modes = static_cast<int>(n);
    const Eigen::VectorXd lambda = ls.extrapolated.value;
    out.lambda_err = d.levels > 1 ? ls.extrapolated.error.maxCoeff() : std::numeric_limits<double>::quiet_NaN();
    const TubeOperator& op = ops.back();
    EigenPairs fine = pairs.back();
    fine.values = lambda;
    fine.vectors.conservativeResize(Eigen::NoChange, n);
    fine.residuals.conservativeResize(n);
    const ReferenceFiber fiber = grid_fiber(op.fiber, c.band + 2);
    const TubePropagator tprop(op, fine);

    const EffectiveOperator eop = assemble_effective(*st.band, eps, d.Nq, c.order);
    const EffectivePropagator eprop(eop);
    const double h = L / d.Nq;
    auto norm1 = [&](const Eigen::VectorXcd& v) { return std::sqrt(h * v.squaredNorm()); };

    const double k0 = 2.0 * std::numbers::pi / L;
    out.wavenumber = k0 * std::round(d.momentum / eps / k0);
    const Eigen::VectorXcd psi0 = gaussian_packet(L, d.Nq, d.center.value_or(0.5 * L), d.width, out.wavenumber);
    const Eigen::VectorXcd lifted0 = band_lift(op, fiber, c.band, psi0);
    out.lift_leak = tprop.leakage(lifted0);
    const Eigen::VectorXcd coef = tprop.coefficients(lifted0);
    const Eigen::VectorXcd Psi0 = tprop.synthesize(coef);
    const Eigen::VectorXcd UPsi0 = band_project(op, fiber, c.band, Psi0);
    out.eta = norm1(psi0 - UPsi0);

    const double t_max = d.t_max.value_or(d.t_max_factor / eps);
    for (int s = 0; s < d.steps; ++s) {
      const double t = t_max * s / (d.steps - 1);
      const Eigen::VectorXcd Psi = tprop.synthesize(tprop.evolve_coefficients(coef, t));
      const Eigen::VectorXcd psi = eprop.evolve(psi0, t);
      const Eigen::VectorXcd UPsi = band_project(op, fiber, c.band, Psi);
      out.times.push_back(t);
      out.err.push_back(tprop.norm(Psi - band_lift(op, fiber, c.band, psi)));
      out.drift.push_back(norm1(UPsi - eprop.evolve(UPsi0, t)));
      out.offband.push_back(tprop.norm(Psi - band_lift(op, fiber, c.band, UPsi)));
    }
    out.err0 = out.err[0];
    std::vector<double> tt, gg;
    for (std::size_t s = 1; s < out.times.size(); ++s) {
      const double t = out.times[s];
      out.slope_err = std::max(out.slope_err, (out.err[s] - out.err0) / t);
      out.slope_drift = std::max(out.slope_drift, out.drift[s] / t);
      // the off-band part of err(0) is nearly orthogonal to the in-band mismatch, so the mismatch adds in quadrature
      const double excess = std::sqrt(std::max(0.0, out.err[s] * out.err[s] - out.err0 * out.err0));
      out.slope_excess = std::max(out.slope_excess, excess / t);
      if (excess > 0) {
        tt.push_back(t);
        gg.push_back(excess);
      }
    }
    out.growth = fit_power(tt, gg);
    out.linear_ok = !out.growth.valid || out.growth.exponent <= 1.2;
  });
  std::vector<double> eps, se, sd, sx;
  for (const auto& r : rep.per_eps) {
    eps.push_back(r.eps);
    se.push_back(r.slope_err);
    sd.push_back(r.slope_drift);
    sx.push_back(r.slope_excess);
  }
  rep.fit_err = fit_power(eps, se);
  rep.fit_drift = fit_power(eps, sd);
  rep.fit_excess = fit_power(eps, sx);
  return rep;
}

inline json to_json(const DynamicsReport& r) {
  json j;
  j["kind"] = "dynamics";
  j["provenance"] = r.provenance;
  j["identification"] = "zeroth order: lift(psi) = psi phi_J, U = fiberwise projection onto phi_J";
  j["fit_err_slope"] = to_json(r.fit_err);
  j["fit_drift_slope"] = to_json(r.fit_drift);
  j["fit_excess_slope"] = to_json(r.fit_excess);
  json per = json::array();
  for (const auto& e : r.per_eps)
    per.push_back({{"eps", e.eps}, {"wavenumber", e.wavenumber}, {"modes", e.modes}, {"lambda_err", num(e.lambda_err)}, {"eta", e.eta},
                   {"lift_leak", e.lift_leak}, {"err0", e.err0}, {"slope_err", e.slope_err},
                   {"slope_drift", e.slope_drift}, {"slope_excess", e.slope_excess}, {"growth", to_json(e.growth)}, {"linear_ok", e.linear_ok}});
  j["per_eps"] = per;
  return j;
}

// ---------------------------------------------------------------------------------------------------------
// level spacing

struct SpacingWindow {
  std::string name;
  double lo = 0, hi = 0;
  int count = 0;
  double mean_spacing = std::numeric_limits<double>::quiet_NaN();
  double weyl_spacing = std::numeric_limits<double>::quiet_NaN();
};

struct SpacingEpsilon {
  double eps = 0;
  int N = 0;
  int levels_below_emax = 0;
  double bottom_spacing = std::numeric_limits<double>::quiet_NaN();  // first gap between distinct levels
  double harmonic_spacing = std::numeric_limits<double>::quiet_NaN();
  std::vector<double> eigenvalues;
  std::vector<SpacingWindow> windows;
};

struct WindowFit {
  std::string name;
  PowerFit observed, weyl;
  double weyl_alpha_exponent = std::numeric_limits<double>::quiet_NaN();  // alpha/2 + 1 for d = 1
};

struct SpacingReport {
  json provenance;
  double band_bottom = 0;
  double q_min = 0;
  double omega = 0;  // omega^2 = E_J''(q_min) / 2
  std::vector<SpacingEpsilon> per_eps;
  PowerFit fit_bottom;
  std::vector<WindowFit> window_fits;
  std::string guard_failure;
};

/// Minimum of E_J by golden section around the lowest sample, and omega = sqrt(E_J''/2) there.
inline void band_minimum(const BandData& band, double& q_min, double& e_min, double& omega) {
  const CurveGeometry& g = band.geometry;
  std::size_t jmin = 0;
  for (std::size_t j = 1; j < band.samples.size(); ++j)
    if (band.samples[j].E < band.samples[jmin].E) jmin = j;
  const double h = g.spacing();
  double a = g.q(static_cast<int>(jmin)) - h, b = g.q(static_cast<int>(jmin)) + h;
  const double r = 0.5 * (std::sqrt(5.0) - 1.0);
  auto E = [&](double q) { return band.at(q).E; };
  double x1 = b - r * (b - a), x2 = a + r * (b - a), f1 = E(x1), f2 = E(x2);
  for (int it = 0; it < 80 && b - a > 1e-10 * g.length; ++it) {
    if (f1 < f2) {
      b = x2;
      x2 = x1;
      f2 = f1;
      x1 = b - r * (b - a);
      f1 = E(x1);
    } else {
      a = x1;
      x1 = x2;
      f1 = f2;
      x2 = a + r * (b - a);
      f2 = E(x2);
    }
  }
  q_min = 0.5 * (a + b);
  e_min = E(q_min);
  const double dq = 1e-3 * g.length;
  const double e2 = (E(q_min + dq) - 2.0 * e_min + E(q_min - dq)) / (dq * dq);
  omega = std::sqrt(std::max(0.0, 0.5 * e2));
}

/// Phase-space count N(E) = (1 / 2 pi eps) int 2 sqrt((E - W) / a) dq of the effective symbol a eps^2 p^2 + W.
inline double weyl_count(const EffectiveOperator& op, double E) {
  double s = 0.0;
  for (int j = 0; j < op.N; ++j) {
    const double a = 0.5 * (op.a_half[j] + op.a_half[(j + op.N - 1) % op.N]);
    s += 2.0 * std::sqrt(std::max(0.0, (E - op.W[j]) / a));
  }
  return s * op.h() / (2.0 * std::numbers::pi * op.eps);
}

inline SpacingReport run_level_spacing(const Study& st, const RunOptions& ro = {}) {
  const ExperimentConfig& c = st.config;
  const SpacingSpec& sp = c.spacing;
  const double L = c.geometry.length;
  SpacingReport rep;
  rep.provenance = provenance(st);
  double e_bottom = 0;
  band_minimum(*st.band, rep.q_min, e_bottom, rep.omega);
  rep.band_bottom = e_bottom;
  rep.per_eps.resize(c.epsilons.size());
  const int threads = ro.threads > 0 ? ro.threads : c.threads;
  parallel_for(static_cast<int>(c.epsilons.size()), threads, [&](int e) {
    const double eps = c.epsilons[e];
    SpacingEpsilon& out = rep.per_eps[e];
    out.eps = eps;
    const double e_top = e_bottom + sp.order1_hi;
    const double waves = L * std::sqrt(e_top - st.band->min_energy()) / (2.0 * std::numbers::pi * eps);
    int N = std::max(c.resolution.N, static_cast<int>(std::ceil(sp.points_per_wavelength * waves)));
    N += N % 2;
    out.N = N;
    const EffectiveOperator op = assemble_effective(*st.band, eps, N, c.order);
    out.levels_below_emax = count_eigenvalues_below(op.K, op.M, st.e_max);
    const int n_top = count_eigenvalues_below(op.K, op.M, e_top);
    const EigenPairs ep = effective_spectrum(op, std::clamp(n_top + 1, 2, N - 1));
    for (Eigen::Index i = 0; i < ep.values.size(); ++i)
      if (ep.values[i] < e_top) out.eigenvalues.push_back(ep.values[i]);
    const auto& ev = out.eigenvalues;
    const double tol = 1e-9 * std::max(1.0, std::abs(ev.front()));
    for (std::size_t i = 1; i < ev.size(); ++i)
      if (ev[i] - ev[0] > tol) {
        out.bottom_spacing = ev[i] - ev[0];
        break;
      }
    out.harmonic_spacing = 2.0 * eps * rep.omega;
    const std::vector<std::tuple<std::string, double, double>> wins{
        {"bottom", e_bottom, e_bottom + sp.bottom_C * eps},
        {"mid", e_bottom + sp.bottom_C * eps, e_bottom + sp.mid_C},
        {"order1", e_bottom + sp.order1_lo, e_bottom + sp.order1_hi}};
    for (const auto& [name, lo, hi] : wins) {
      SpacingWindow w;
      w.name = name;
      w.lo = lo;
      w.hi = hi;
      std::vector<double> in;
      for (double v : ev)
        if (v >= lo && v < hi) in.push_back(v);
      w.count = static_cast<int>(in.size());
      // density estimate, robust to exactly degenerate pairs
      if (!in.empty()) w.mean_spacing = (hi - lo) / static_cast<double>(in.size());
      const double dn = weyl_count(op, hi) - weyl_count(op, lo);
      if (dn > 0) w.weyl_spacing = (hi - lo) / dn;
      out.windows.push_back(w);
    }
  });
  for (const auto& r : rep.per_eps) {
    if (r.levels_below_emax >= sp.min_levels) continue;
    const std::string msg = std::to_string(r.levels_below_emax) + " levels below E_max at eps = " + fmt(r.eps);
    if (ro.throw_on_guard) fail(ErrorKind::InsufficientSpectrum, msg);
    if (rep.guard_failure.empty()) rep.guard_failure = "InsufficientSpectrum: " + msg;
  }
  std::vector<double> eps, bottom;
  for (const auto& r : rep.per_eps) {
    eps.push_back(r.eps);
    bottom.push_back(r.bottom_spacing);
  }
  rep.fit_bottom = fit_power(eps, bottom);
  const double alpha_pred[3] = {1.5, std::numeric_limits<double>::quiet_NaN(), 1.0};
  for (std::size_t w = 0; w < 3; ++w) {
    WindowFit f;
    f.name = rep.per_eps.empty() ? "" : rep.per_eps[0].windows[w].name;
    std::vector<double> ms, ws;
    for (const auto& r : rep.per_eps) {
      ms.push_back(r.windows[w].mean_spacing);
      ws.push_back(r.windows[w].weyl_spacing);
    }
    f.observed = fit_power(eps, ms);
    f.weyl = fit_power(eps, ws);
    f.weyl_alpha_exponent = alpha_pred[w];
    rep.window_fits.push_back(f);
  }
  return rep;
}

inline json to_json(const SpacingReport& r) {
  json j;
  j["kind"] = "spacing";
  j["provenance"] = r.provenance;
  j["band_bottom"] = r.band_bottom;
  j["q_min"] = r.q_min;
  j["omega"] = r.omega;
  j["fit_bottom"] = to_json(r.fit_bottom);
  j["guard_failure"] = r.guard_failure;
  json wf = json::array();
  for (const auto& f : r.window_fits)
    wf.push_back({{"window", f.name}, {"observed", to_json(f.observed)}, {"weyl", to_json(f.weyl)},
                  {"weyl_alpha_exponent", num(f.weyl_alpha_exponent)}});
  j["window_fits"] = wf;
  json per = json::array();
  for (const auto& e : r.per_eps) {
    json ws = json::array();
    for (const auto& w : e.windows)
      ws.push_back({{"window", w.name}, {"lo", w.lo}, {"hi", w.hi}, {"count", w.count}, {"mean_spacing", num(w.mean_spacing)},
                    {"weyl_spacing", num(w.weyl_spacing)}});
    per.push_back({{"eps", e.eps}, {"N", e.N}, {"levels_below_emax", e.levels_below_emax},
                   {"bottom_spacing", num(e.bottom_spacing)}, {"harmonic_spacing", num(e.harmonic_spacing)},
                   {"windows", ws}});
  }
  j["per_eps"] = per;
  return j;
}

// ---------------------------------------------------------------------------------------------------------
// output

inline void write_text(const std::filesystem::path& p, const std::string& text) {
  std::filesystem::create_directories(p.parent_path().empty() ? std::filesystem::path(".") : p.parent_path());
  std::ofstream os(p, std::ios::binary);
  if (!os) fail(ErrorKind::ConfigError, "cannot write " + p.string());
  os << text;
}

inline void write_json(const std::filesystem::path& p, const json& j) { write_text(p, j.dump(2) + "\n"); }

inline void write_outputs(const std::filesystem::path& dir, const ConvergenceReport& r) {
  write_json(dir / "report.json", to_json(r));
  std::string csv = "eps,order,index,tube,effective,difference,disc_err,status\n";
  for (const auto& ec : r.per_eps)
    for (const auto& oc : ec.orders)
      for (const auto& p : oc.levels)
        csv += fmt(ec.eps) + "," + std::to_string(oc.order) + "," + std::to_string(p.index) + "," + fmt(p.tube) + "," +
               fmt(p.effective) + "," + fmt(p.d) + "," + fmt(p.disc_err) + "," + to_string(p.status) + "\n";
  write_text(dir / "eigenvalues.csv", csv);
}

inline void write_outputs(const std::filesystem::path& dir, const DynamicsReport& r) {
  write_json(dir / "report.json", to_json(r));
  std::string csv = "eps,t,err,drift,offband\n";
  for (const auto& e : r.per_eps)
    for (std::size_t s = 0; s < e.times.size(); ++s)
      csv += fmt(e.eps) + "," + fmt(e.times[s]) + "," + fmt(e.err[s]) + "," + fmt(e.drift[s]) + "," + fmt(e.offband[s]) + "\n";
  write_text(dir / "dynamics.csv", csv);
}

inline void write_outputs(const std::filesystem::path& dir, const SpacingReport& r) {
  write_json(dir / "report.json", to_json(r));
  std::string csv = "eps,window,lo,hi,count,mean_spacing,weyl_spacing\n";
  std::string ev = "eps,index,eigenvalue\n";
  for (const auto& e : r.per_eps) {
    for (const auto& w : e.windows)
      csv += fmt(e.eps) + "," + w.name + "," + fmt(w.lo) + "," + fmt(w.hi) + "," + std::to_string(w.count) + "," +
             fmt(w.mean_spacing) + "," + fmt(w.weyl_spacing) + "\n";
    for (std::size_t i = 0; i < e.eigenvalues.size(); ++i)
      ev += fmt(e.eps) + "," + std::to_string(i) + "," + fmt(e.eigenvalues[i]) + "\n";
  }
  write_text(dir / "spacings.csv", csv);
  write_text(dir / "eigenvalues.csv", ev);
}

}  // namespace thintube
