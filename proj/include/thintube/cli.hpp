#pragma once

#include <filesystem>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "thintube/harness.hpp"

namespace thintube {

/// 0 success, 2 bad input, 3 solver failure, 4 guard failure.
inline int exit_code(ErrorKind k) {
  switch (k) {
    case ErrorKind::ConfigError:
    case ErrorKind::SizeCapExceeded:
    case ErrorKind::OpenCurve:
    case ErrorKind::DegenerateCurve:
    case ErrorKind::PeriodicityViolation:
    case ErrorKind::GridMismatch:
    case ErrorKind::ResolutionTooCoarse:
      return 2;
    case ErrorKind::SolverFailure:
      return 3;
    default:
      return 4;
  }
}

namespace detail {

inline json profile_json(const Eigen::VectorXd& v) { return std::vector<double>(v.data(), v.data() + v.size()); }

inline int run_bands(const Study& st, const std::filesystem::path& dir, std::ostream& out) {
  const BandData& b = *st.band;
  const int k = st.config.geometry.k;
  std::string csv = "q,E_J,E_next,kappa_norm,vgeom,vbh,A,beta,T11,T12,T22,tail11,tail12,tail22,gap";
  for (int a = 0; a < k; ++a) csv += ",M1_" + std::to_string(a);
  for (int a = 0; a < k; ++a)
    for (int c = 0; c < k; ++c) csv += ",M2_" + std::to_string(a) + std::to_string(c);
  csv += "\n";
  for (const BandPoint& p : b.samples) {
    csv += fmt(p.q) + "," + fmt(p.E) + "," + fmt(p.energies[b.J + 1]) + "," + fmt(p.kappa.norm()) + "," +
           fmt(-0.25 * p.kappa.squaredNorm()) + "," + fmt(p.vbh) + "," + fmt(p.A) + "," + fmt(p.beta) + "," + fmt(p.T11) +
           "," + fmt(p.T12) + "," + fmt(p.T22) + "," + fmt(p.tail11) + "," + fmt(p.tail12) + "," + fmt(p.tail22) + "," +
           fmt(p.gap);
    for (int a = 0; a < k; ++a) csv += "," + fmt(p.M1[a]);
    for (int a = 0; a < k; ++a)
      for (int c = 0; c < k; ++c) csv += "," + fmt(p.M2(a, c));
    csv += "\n";
  }
  write_text(dir / "bands.csv", csv);
  const GapReport gr = admissibility_check(st.config.family, st.config.geometry, b.J, b.I_max, b.fiber);
  json j;
  j["kind"] = "bands";
  j["provenance"] = provenance(st);
  j["admissibility"] = {{"min_gap", gr.min_gap}, {"crossings", gr.crossings}, {"scanned_bands", b.I_max}};
  write_json(dir / "report.json", j);
  out << "band " << b.J << ": E_J in [" << fmt(b.min_energy()) << ", " << fmt(b.max_energy()) << "], gap " << fmt(b.gap_margin)
      << ", E_max " << fmt(st.e_max) << "\n";
  return 0;
}

inline int run_effective(const Study& st, const std::filesystem::path& dir, std::ostream& out) {
  const ExperimentConfig& c = st.config;
  std::vector<LevelSpectra> res(c.epsilons.size());
  std::vector<json> audit(c.epsilons.size());
  parallel_for(static_cast<int>(c.epsilons.size()), c.threads, [&](int e) {
    res[e] = effective_levels(st, c.epsilons[e], c.order, c.count);
    const EffectiveOperator op = assemble_effective(*st.band, c.epsilons[e], c.resolution.N, c.order);
    audit[e] = {{"eps", c.epsilons[e]}, {"N", op.N}, {"W", profile_json(op.W)}, {"E_J", profile_json(op.E_J)},
                {"vgeom", profile_json(op.vgeom)}, {"vbh", profile_json(op.vbh)}, {"vamb", profile_json(op.vamb)},
                {"w_node", profile_json(op.w_node)}, {"T11", profile_json(op.T11)}, {"T12", profile_json(op.T12)},
                {"T22", profile_json(op.T22)}, {"a_half", profile_json(op.a_half)}, {"beta_half", profile_json(op.beta_half)},
                {"A_half", profile_json(op.A_half)}, {"offband_ratio", op.offband_ratio}};
  });
  std::string csv = "eps,index,eigenvalue,extrapolated,extrapolation_error\n";
  json per = json::array();
  for (std::size_t e = 0; e < res.size(); ++e) {
    const LevelSpectra& r = res[e];
    for (Eigen::Index i = 0; i < r.extrapolated.value.size(); ++i)
      csv += fmt(c.epsilons[e]) + "," + std::to_string(i) + "," + fmt(r.raw.back()[i]) + "," + fmt(r.extrapolated.value[i]) +
             "," + fmt(r.extrapolated.error[i]) + "\n";
    json raw = json::array();
    for (const auto& v : r.raw) raw.push_back(profile_json(v));
    per.push_back({{"eps", c.epsilons[e]}, {"sizes", r.sizes}, {"raw", raw}, {"extrapolated", profile_json(r.extrapolated.value)},
                   {"assembled_coarsest", audit[e]}});
    out << "eps " << fmt(c.epsilons[e]) << ": " << r.extrapolated.value.size() << " eigenvalues below E_max\n";
  }
  write_text(dir / "eigenvalues.csv", csv);
  json j;
  j["kind"] = "effective-spectrum";
  j["provenance"] = provenance(st);
  j["order"] = c.order;
  j["per_eps"] = per;
  write_json(dir / "report.json", j);
  return 0;
}

inline int run_tube(const Study& st, const std::filesystem::path& dir, const RunOptions& ro, const std::string& dump,
                    std::ostream& out) {
  const ExperimentConfig& c = st.config;
  std::vector<LevelSpectra> res(c.epsilons.size());
  parallel_for(static_cast<int>(c.epsilons.size()), ro.threads > 0 ? ro.threads : c.threads,
               [&](int e) { res[e] = tube_levels(st, c.epsilons[e], c.count, ro); });
  std::string csv = "eps,index,eigenvalue,extrapolated,extrapolation_error\n";
  json per = json::array();
  for (std::size_t e = 0; e < res.size(); ++e) {
    const LevelSpectra& r = res[e];
    for (Eigen::Index i = 0; i < r.extrapolated.value.size(); ++i)
      csv += fmt(c.epsilons[e]) + "," + std::to_string(i) + "," + fmt(r.raw.back()[i]) + "," + fmt(r.extrapolated.value[i]) +
             "," + fmt(r.extrapolated.error[i]) + "\n";
    json raw = json::array();
    for (const auto& v : r.raw) raw.push_back(profile_json(v));
    per.push_back({{"eps", c.epsilons[e]}, {"sizes", r.sizes}, {"raw", raw}, {"extrapolated", profile_json(r.extrapolated.value)},
                   {"max_residual", r.max_residual}});
    out << "eps " << fmt(c.epsilons[e]) << ": " << r.extrapolated.value.size() << " eigenvalues below E_max\n";
    if (!dump.empty()) {
      const int l = c.resolution.levels - 1;
      const TubeOperator op = assemble_tube(c.geometry, c.family, c.epsilons[e], c.resolution.nq(l),
                                            tube_fiber_grid(c.family, refine_transverse(c.resolution.Nn, l)));
      const std::filesystem::path base = std::filesystem::path(dump);
      std::filesystem::create_directories(base);
      dump_triplets(op, (base / ("K_eps" + std::to_string(e) + ".bin")).string(), (base / ("M_eps" + std::to_string(e) + ".bin")).string());
    }
  }
  write_text(dir / "eigenvalues.csv", csv);
  json j;
  j["kind"] = "tube-spectrum";
  j["provenance"] = provenance(st);
  j["per_eps"] = per;
  write_json(dir / "report.json", j);
  return 0;
}

}  // namespace detail

/// Command-line entry point; returns the process exit code.
inline int cli_main(int argc, char** argv, std::ostream& out = std::cout, std::ostream& err = std::cerr) {
  CLI::App app{"Effective operators for thin Dirichlet tubes around closed curves"};
  app.require_subcommand(1);
  std::string config_path, out_dir, dump_dir;
  std::vector<std::string> overrides;
  int threads = 0;
  bool force_large = false;
  const std::vector<std::pair<std::string, std::string>> commands{
      {"bands", "sample the band data along the curve"},
      {"effective-spectrum", "eigenvalues of the effective operator"},
      {"tube-spectrum", "eigenvalues of the full tube operator"},
      {"compare", "tube versus effective eigenvalues over the eps list"},
      {"dynamics", "tube versus effective wavepacket propagation"},
      {"spacing", "level-spacing statistics of the effective operator"},
      {"validate-config", "parse and check a config file"}};
  std::vector<CLI::App*> subs;
  for (const auto& [name, help] : commands) {
    CLI::App* s = app.add_subcommand(name, help);
    s->add_option("--config", config_path, "JSON config")->required();
    s->add_option("--out", out_dir, "output directory (overrides output.dir)");
    s->add_option("--override", overrides, "key=value applied to the config, e.g. resolution.Nq=32");
    s->add_option("--threads", threads, "worker threads")->check(CLI::PositiveNumber);
    s->add_flag("--force-large", force_large, "allow k = 2 problems above the size cap");
    if (name == "tube-spectrum") s->add_option("--dump", dump_dir, "directory for binary K/M triplet dumps");
    subs.push_back(s);
  }
  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    out << app.help();
    return 0;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n";
    return 2;
  }
  std::string cmd;
  for (CLI::App* s : subs)
    if (s->parsed()) cmd = s->get_name();
  try {
    ExperimentConfig cfg = load_config(config_path, overrides);
    if (threads > 0) cfg.threads = threads;
    if (cmd == "validate-config") {
      out << "config ok (hash " << cfg.hash << ", k = " << cfg.geometry.k << ", " << cfg.epsilons.size() << " eps values)\n";
      return 0;
    }
    const std::filesystem::path dir = out_dir.empty() ? std::filesystem::path(cfg.output_dir) : std::filesystem::path(out_dir);
    RunOptions ro;
    ro.threads = cfg.threads;
    ro.force_large = force_large;
    ro.throw_on_guard = false;
    if (cmd == "tube-spectrum" || cmd == "compare") {
      // fail on the size cap before the band computation
      const int l = cfg.resolution.levels - 1;
      check_size_cap(cfg, static_cast<long long>(cfg.resolution.nq(l)) *
                              tube_fiber_grid(cfg.family, refine_transverse(cfg.resolution.Nn, l)).size(), force_large);
    }
    const Study st = prepare_study(cfg);
    if (cmd == "bands") return detail::run_bands(st, dir, out);
    if (cmd == "effective-spectrum") return detail::run_effective(st, dir, out);
    if (cmd == "tube-spectrum") return detail::run_tube(st, dir, ro, dump_dir, out);
    if (cmd == "compare") {
      const ConvergenceReport r = run_spectrum_compare(st, ro);
      write_outputs(dir, r);
      for (const auto& f : r.fits)
        if (f.order == r.primary_order)
          out << "level " << f.index << ": p = " << (f.fit.valid ? fmt(f.fit.exponent) : std::string("refused")) << " ("
              << f.fit.points << " points)\n";
      if (!r.guard_failure.empty()) {
        err << r.guard_failure << "\n";
        return 4;
      }
      return 0;
    }
    if (cmd == "dynamics") {
      const DynamicsReport r = run_dynamics_compare(st, ro);
      write_outputs(dir, r);
      out << "err slope exponent " << (r.fit_err.valid ? fmt(r.fit_err.exponent) : std::string("refused")) << ", drift slope exponent "
          << (r.fit_drift.valid ? fmt(r.fit_drift.exponent) : std::string("refused")) << ", excess slope exponent "
          << (r.fit_excess.valid ? fmt(r.fit_excess.exponent) : std::string("refused")) << "\n";
      return 0;
    }
    if (cmd == "spacing") {
      const SpacingReport r = run_level_spacing(st, ro);
      write_outputs(dir, r);
      out << "bottom spacing exponent " << (r.fit_bottom.valid ? fmt(r.fit_bottom.exponent) : std::string("refused")) << "\n";
      if (!r.guard_failure.empty()) {
        err << r.guard_failure << "\n";
        return 4;
      }
      return 0;
    }
    err << "unknown command\n";
    return 2;
  } catch (const Error& e) {
    err << "error: " << e.what() << "\n";
    return exit_code(e.kind());
  } catch (const json::exception& e) {
    err << "error: ConfigError: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return 3;
  }
}

}  // namespace thintube
