#pragma once

#include <cmath>
#include <cstdint>
#include <fstream>
#include <numbers>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "thintube/error.hpp"
#include "thintube/fiber.hpp"
#include "thintube/geometry.hpp"
#include "thintube/profile.hpp"

namespace thintube {

using json = nlohmann::json;

enum class CompareMode { Spectrum, Dynamics, Spacing };

inline std::string to_string(CompareMode m) {
  switch (m) {
    case CompareMode::Spectrum: return "spectrum";
    case CompareMode::Dynamics: return "dynamics";
    case CompareMode::Spacing: return "spacing";
  }
  return "spectrum";
}

struct Resolution {
  int samples = 256;   // curve grid
  int N = 256;         // effective grid, coarsest level
  int N_levels = 3;    // effective grids N, 2N, 4N, ...
  int Nq = 16;         // tube longitudinal nodes, coarsest level
  int Nn = 31;         // transverse nodes (k = 1) or points across the narrow side (k = 2), coarsest level
  int levels = 4;      // tube levels, both resolutions doubled each time
  int I_max = 20;
  bool mesh_guard = true;
  bool refine_q = true;  // false keeps Nq fixed (q-invariant tubes)

  int nq(int level) const { return refine_q ? Nq << level : Nq; }
};

struct DynamicsSpec {
  std::optional<double> center;  // default L/2
  double width = 0.5;
  double momentum = 0.0;         // semiclassical momentum p; the packet carries exp(i p q / eps)
  std::optional<double> t_max;   // default t_max_factor / eps
  double t_max_factor = 2.0;
  int steps = 21;
  int Nq = 64;
  int Nn = 31;
  int levels = 4;
};

struct SpacingSpec {
  double bottom_C = 1.0;        // [E_min, E_min + C eps]
  double mid_C = 0.5;           // [E_min + C eps, E_min + C']
  double order1_lo = 1.0;       // [E_min + lo, E_min + hi]
  double order1_hi = 3.0;
  double points_per_wavelength = 24.0;
  int min_levels = 30;
};

struct ExperimentConfig {
  json source;       // after overrides
  std::string hash;  // FNV-1a of the canonical dump
  CurveGeometry geometry;
  CrossSectionFamily family;
  int band = 0;
  std::vector<double> epsilons;
  Resolution resolution;
  std::optional<double> e_max;
  int count = 5;
  CompareMode mode = CompareMode::Spectrum;
  int order = 2;
  std::vector<int> orders = {0, 1, 2};
  std::string output_dir = "out";
  DynamicsSpec dynamics;
  SpacingSpec spacing;
  std::uint64_t seed = 12345;
  int threads = 1;
  double size_cap = 5e5;
};

namespace detail {

[[noreturn]] inline void config_fail(const std::string& path, const std::string& msg) {
  fail(ErrorKind::ConfigError, (path.empty() ? std::string("/") : path) + ": " + msg);
}

inline const json& member(const json& j, const std::string& path, const char* key) {
  if (!j.is_object() || !j.contains(key)) config_fail(path + "/" + key, "missing");
  return j.at(key);
}

inline double as_number(const json& j, const std::string& path) {
  if (!j.is_number()) config_fail(path, "expected a number");
  const double v = j.get<double>();
  if (!std::isfinite(v)) config_fail(path, "not finite");
  return v;
}

inline int as_int(const json& j, const std::string& path) {
  if (!j.is_number_integer()) config_fail(path, "expected an integer");
  return j.get<int>();
}

inline double number_or(const json& j, const std::string& path, const char* key, double fallback) {
  if (!j.contains(key) || j.at(key).is_null()) return fallback;
  return as_number(j.at(key), path + "/" + key);
}

inline int int_or(const json& j, const std::string& path, const char* key, int fallback) {
  if (!j.contains(key) || j.at(key).is_null()) return fallback;
  return as_int(j.at(key), path + "/" + key);
}

inline std::vector<double> number_array(const json& j, const std::string& path) {
  if (!j.is_array()) config_fail(path, "expected an array of numbers");
  std::vector<double> out;
  for (std::size_t i = 0; i < j.size(); ++i) out.push_back(as_number(j[i], path + "/" + std::to_string(i)));
  return out;
}

inline void check_keys(const json& j, const std::string& path, std::initializer_list<const char*> allowed) {
  if (!j.is_object()) config_fail(path, "expected an object");
  for (auto it = j.begin(); it != j.end(); ++it) {
    bool ok = false;
    for (const char* a : allowed) ok = ok || it.key() == a;
    if (!ok) config_fail(path + "/" + it.key(), "unknown key");
  }
}

}  // namespace detail

/// Profile formats: a number; {"constant", "cos", "sin", "slope"} Fourier data (cos[m-1] multiplies cos(2 pi m q/L));
/// {"samples": [f(0), ..., f(L)], "slope"} with N+1 uniform samples including the endpoint.
inline PeriodicProfile parse_profile(const json& j, double period, const std::string& path, bool allow_slope = false) {
  using namespace detail;
  if (j.is_number()) return PeriodicProfile::constant(period, as_number(j, path));
  if (!j.is_object()) config_fail(path, "expected a number or a profile object");
  const double slope = number_or(j, path, "slope", 0.0);
  if (slope != 0.0 && !allow_slope) config_fail(path + "/slope", "this profile must be periodic");
  if (j.contains("samples")) {
    check_keys(j, path, {"samples", "slope"});
    const std::vector<double> s = number_array(j.at("samples"), path + "/samples");
    if (s.size() < 2) config_fail(path + "/samples", "need at least two samples (endpoint included)");
    const double wrap = s.back() - s.front() - slope * period;
    if (std::abs(wrap) > 1e-8 * std::max(1.0, std::abs(s.front())))
      config_fail(path + "/samples", "last sample must equal the first (plus slope * period)");
    return PeriodicProfile::from_samples(period, std::vector<double>(s.begin(), s.end() - 1), slope);
  }
  check_keys(j, path, {"constant", "cos", "sin", "slope"});
  const double c = number_or(j, path, "constant", 0.0);
  std::vector<double> cs, sn;
  if (j.contains("cos")) cs = number_array(j.at("cos"), path + "/cos");
  if (j.contains("sin")) sn = number_array(j.at("sin"), path + "/sin");
  return PeriodicProfile(period, c, cs, sn, slope);
}

inline CurveGeometry parse_geometry(const json& j, const std::string& path) {
  using namespace detail;
  check_keys(j, path, {"synthetic", "points", "samples"});
  const int samples = int_or(j, path, "samples", 256);
  if (samples < 16) config_fail(path + "/samples", "need at least 16 samples");
  if (j.contains("synthetic") == j.contains("points")) config_fail(path, "give exactly one of synthetic or points");
  if (j.contains("synthetic")) {
    const std::string p = path + "/synthetic";
    const json& s = j.at("synthetic");
    check_keys(s, p, {"length", "kappa", "holonomy"});
    const double L = as_number(member(s, p, "length"), p + "/length");
    if (L <= 0) config_fail(p + "/length", "must be positive");
    const double hol = number_or(s, p, "holonomy", 0.0);
    const json& kap = member(s, p, "kappa");
    if (!kap.is_array() || kap.empty() || kap.size() > 2) config_fail(p + "/kappa", "expected one or two profiles");
    std::vector<PeriodicProfile> prof;
    for (std::size_t a = 0; a < kap.size(); ++a) {
      const std::string pa = p + "/kappa/" + std::to_string(a);
      if (kap[a].is_object() && kap[a].contains("samples")) {
        // sampled curvature may rotate by the holonomy across the seam, so it is not periodic on its own
        std::vector<std::vector<double>> rows;
        for (std::size_t b = 0; b < kap.size(); ++b) {
          const std::string pb = p + "/kappa/" + std::to_string(b);
          if (!kap[b].is_object() || !kap[b].contains("samples")) config_fail(pb, "mix of sampled and Fourier curvature");
          rows.push_back(number_array(kap[b].at("samples"), pb + "/samples"));
        }
        CurveGeometry g = synthetic_from_samples(L, rows, hol);
        if (j.contains("samples") && g.samples != samples)
          config_fail(path + "/samples", "sampled curvature fixes the grid at " + std::to_string(g.samples));
        return g;
      }
      prof.push_back(parse_profile(kap[a], L, pa));
    }
    return synthetic_geometry(L, prof, hol, samples);
  }
  const std::string p = path + "/points";
  const json& pts = j.at("points");
  if (!pts.is_array() || pts.size() < 4) config_fail(p, "expected an array of points");
  const std::size_t dim = pts[0].is_array() ? pts[0].size() : 0;
  if (dim != 2 && dim != 3) config_fail(p + "/0", "points must have 2 or 3 coordinates");
  Eigen::MatrixXd m(pts.size(), dim);
  for (std::size_t i = 0; i < pts.size(); ++i) {
    const std::vector<double> row = number_array(pts[i], p + "/" + std::to_string(i));
    if (row.size() != dim) config_fail(p + "/" + std::to_string(i), "inconsistent dimension");
    for (std::size_t d = 0; d < dim; ++d) m(i, d) = row[d];
  }
  return bishop_frame(arclength_reparametrize(m, samples));
}

inline CrossSectionFamily parse_family(const json& j, double L, const std::string& path) {
  using namespace detail;
  if (!j.is_object() || j.size() != 1) config_fail(path, "expected exactly one of interval or scaled_rotated");
  if (j.contains("interval")) {
    const std::string p = path + "/interval";
    const json& f = j.at("interval");
    check_keys(f, p, {"ell", "center"});
    PeriodicProfile ell = parse_profile(member(f, p, "ell"), L, p + "/ell");
    PeriodicProfile c = f.contains("center") ? parse_profile(f.at("center"), L, p + "/center") : PeriodicProfile::constant(L, 0.0);
    if (ell.range().first <= 0) config_fail(p + "/ell", "must stay positive");
    return CrossSectionFamily::interval(ell, c);
  }
  if (!j.contains("scaled_rotated")) config_fail(path, "expected interval or scaled_rotated");
  const std::string p = path + "/scaled_rotated";
  const json& f = j.at("scaled_rotated");
  check_keys(f, p, {"reference", "scale", "angle", "resolution"});
  ReferenceDomain ref;
  const json& r = member(f, p, "reference");
  const std::string pr = p + "/reference";
  if (r.is_object() && r.contains("rectangle") && r.size() == 1) {
    const json& rc = r.at("rectangle");
    check_keys(rc, pr + "/rectangle", {"a", "b"});
    ref.kind = ReferenceDomain::Kind::Rectangle;
    ref.a = as_number(member(rc, pr + "/rectangle", "a"), pr + "/rectangle/a");
    ref.b = as_number(member(rc, pr + "/rectangle", "b"), pr + "/rectangle/b");
    if (ref.a <= 0 || ref.b <= 0) config_fail(pr + "/rectangle", "sides must be positive");
  } else if (r.is_object() && r.contains("star") && r.size() == 1) {
    const json& st = r.at("star");
    check_keys(st, pr + "/star", {"rho"});
    ref.kind = ReferenceDomain::Kind::Star;
    ref.rho = parse_profile(member(st, pr + "/star", "rho"), 2.0 * std::numbers::pi, pr + "/star/rho");
    if (ref.rho.range().first <= 0) config_fail(pr + "/star/rho", "must stay positive");
  } else {
    config_fail(pr, "expected rectangle or star");
  }
  ref.resolution = int_or(f, p, "resolution", 48);
  if (ref.resolution < 16) config_fail(p + "/resolution", "need at least 16 points across");
  PeriodicProfile scale = f.contains("scale") ? parse_profile(f.at("scale"), L, p + "/scale") : PeriodicProfile::constant(L, 1.0);
  PeriodicProfile angle = f.contains("angle") ? parse_profile(f.at("angle"), L, p + "/angle", true) : PeriodicProfile::constant(L, 0.0);
  if (scale.range().first <= 0) config_fail(p + "/scale", "must stay positive");
  return CrossSectionFamily::scaled_rotated(ref, scale, angle);
}

/// 64-bit FNV-1a.
inline std::string fnv1a_hex(const std::string& data) {
  std::uint64_t h = 14695981039346656037ull;
  for (unsigned char c : data) {
    h ^= c;
    h *= 1099511628211ull;
  }
  std::ostringstream os;
  os << std::hex;
  os.width(16);
  os.fill('0');
  os << h;
  return os.str();
}

/// Applies "a.b.0=value" or "/a/b/0=value"; the value is parsed as JSON and falls back to a string.
inline void apply_override(json& j, const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos || eq == 0) fail(ErrorKind::ConfigError, "override '" + assignment + "' is not key=value");
  std::string key = assignment.substr(0, eq);
  const std::string raw = assignment.substr(eq + 1);
  if (key[0] != '/') {
    std::string p = "/";
    for (char c : key) p += c == '.' ? '/' : c;
    key = p;
  }
  json value;
  try {
    value = json::parse(raw);
  } catch (const json::exception&) {
    value = raw;
  }
  try {
    j[json::json_pointer(key)] = value;
  } catch (const json::exception& e) {
    fail(ErrorKind::ConfigError, key + ": cannot override (" + e.what() + ")");
  }
}

inline ExperimentConfig parse_config(const json& root) {
  using namespace detail;
  ExperimentConfig c;
  c.source = root;
  c.hash = fnv1a_hex(root.dump());
  check_keys(root, "", {"schema_version", "geometry", "family", "band", "epsilons", "resolution", "E_max", "count", "mode",
                        "order", "orders", "output", "dynamics", "spacing", "seed", "threads", "size_cap", "description"});
  const int version = as_int(member(root, "", "schema_version"), "/schema_version");
  if (version != 1) config_fail("/schema_version", "unsupported version " + std::to_string(version));

  c.geometry = parse_geometry(member(root, "", "geometry"), "/geometry");
  c.family = parse_family(member(root, "", "family"), c.geometry.length, "/family");
  if (c.family.k() != c.geometry.k) config_fail("/family", "codimension differs from the curve");

  c.band = int_or(root, "", "band", 0);
  if (c.band < 0) config_fail("/band", "must be non-negative");

  if (root.contains("epsilons")) {
    c.epsilons = number_array(root.at("epsilons"), "/epsilons");
  } else {
    c.epsilons = c.geometry.k == 1 ? std::vector<double>{0.2, 0.1, 0.05, 0.025} : std::vector<double>{0.2, 0.1, 0.05};
  }
  if (c.epsilons.empty()) config_fail("/epsilons", "empty");
  for (std::size_t i = 0; i < c.epsilons.size(); ++i) {
    if (c.epsilons[i] <= 0) config_fail("/epsilons/" + std::to_string(i), "must be positive");
    if (i > 0 && !(c.epsilons[i] < c.epsilons[i - 1]))
      config_fail("/epsilons/" + std::to_string(i), "list must be strictly decreasing");
  }

  Resolution& r = c.resolution;
  r.I_max = c.band + 20;
  if (root.contains("resolution")) {
    const json& rj = root.at("resolution");
    check_keys(rj, "/resolution", {"N", "N_levels", "Nq", "Nn", "levels", "I_max", "mesh_guard", "refine_q"});
    r.N = int_or(rj, "/resolution", "N", r.N);
    r.N_levels = int_or(rj, "/resolution", "N_levels", r.N_levels);
    r.Nq = int_or(rj, "/resolution", "Nq", r.Nq);
    r.Nn = int_or(rj, "/resolution", "Nn", r.Nn);
    r.levels = int_or(rj, "/resolution", "levels", r.levels);
    r.I_max = int_or(rj, "/resolution", "I_max", r.I_max);
    if (rj.contains("mesh_guard")) {
      if (!rj.at("mesh_guard").is_boolean()) config_fail("/resolution/mesh_guard", "expected a boolean");
      r.mesh_guard = rj.at("mesh_guard").get<bool>();
    }
    if (rj.contains("refine_q")) {
      if (!rj.at("refine_q").is_boolean()) config_fail("/resolution/refine_q", "expected a boolean");
      r.refine_q = rj.at("refine_q").get<bool>();
    }
  }
  r.samples = c.geometry.samples;
  if (r.N < 8) config_fail("/resolution/N", "need at least 8");
  if (r.N_levels < 1 || r.N_levels > 6) config_fail("/resolution/N_levels", "must be in 1..6");
  if (r.Nq < 3) config_fail("/resolution/Nq", "need at least 3");
  if (r.Nn < 12) config_fail("/resolution/Nn", "need at least 12 points across");
  if (r.levels < 1 || r.levels > 6) config_fail("/resolution/levels", "must be in 1..6");
  if (r.I_max < c.band + 3) config_fail("/resolution/I_max", "must be at least band + 3");
  if (r.mesh_guard && r.levels < 3) config_fail("/resolution/levels", "the mesh-independence guard needs at least 3 levels");

  if (root.contains("E_max") && !root.at("E_max").is_null()) {
    c.e_max = as_number(root.at("E_max"), "/E_max");
    if (*c.e_max <= 0) config_fail("/E_max", "must be positive");
  }
  c.count = int_or(root, "", "count", 5);
  if (c.count < 1) config_fail("/count", "must be at least 1");

  if (root.contains("mode")) {
    const json& m = root.at("mode");
    const std::string s = m.is_string() ? m.get<std::string>() : "";
    if (s == "spectrum") c.mode = CompareMode::Spectrum;
    else if (s == "dynamics") c.mode = CompareMode::Dynamics;
    else if (s == "spacing") c.mode = CompareMode::Spacing;
    else config_fail("/mode", "expected spectrum, dynamics or spacing");
  }
  c.order = int_or(root, "", "order", 2);
  if (c.order < 0 || c.order > 2) config_fail("/order", "must be 0, 1 or 2");
  if (root.contains("orders")) {
    const json& o = root.at("orders");
    if (!o.is_array()) config_fail("/orders", "expected an array");
    c.orders.clear();
    for (std::size_t i = 0; i < o.size(); ++i) {
      const int v = as_int(o[i], "/orders/" + std::to_string(i));
      if (v < 0 || v > 2) config_fail("/orders/" + std::to_string(i), "must be 0, 1 or 2");
      c.orders.push_back(v);
    }
  }
  if (root.contains("output")) {
    const json& o = root.at("output");
    check_keys(o, "/output", {"dir"});
    if (o.contains("dir")) {
      if (!o.at("dir").is_string()) config_fail("/output/dir", "expected a string");
      c.output_dir = o.at("dir").get<std::string>();
    }
  }
  if (root.contains("dynamics")) {
    const json& d = root.at("dynamics");
    const std::string p = "/dynamics";
    check_keys(d, p, {"center", "width", "momentum", "t_max", "t_max_factor", "steps", "Nq", "Nn", "levels"});
    DynamicsSpec& s = c.dynamics;
    if (d.contains("center") && !d.at("center").is_null()) s.center = as_number(d.at("center"), p + "/center");
    if (d.contains("t_max") && !d.at("t_max").is_null()) s.t_max = as_number(d.at("t_max"), p + "/t_max");
    s.width = number_or(d, p, "width", s.width);
    s.momentum = number_or(d, p, "momentum", s.momentum);
    s.t_max_factor = number_or(d, p, "t_max_factor", s.t_max_factor);
    s.steps = int_or(d, p, "steps", s.steps);
    s.Nq = int_or(d, p, "Nq", s.Nq);
    s.Nn = int_or(d, p, "Nn", s.Nn);
    s.levels = int_or(d, p, "levels", s.levels);
    if (s.width <= 0) config_fail(p + "/width", "must be positive");
    if (s.steps < 3) config_fail(p + "/steps", "need at least 3 time points");
    if (s.Nq < 8) config_fail(p + "/Nq", "need at least 8");
    if (s.Nn < 12) config_fail(p + "/Nn", "need at least 12 points across");
    if (s.levels < 1 || s.levels > 5) config_fail(p + "/levels", "must be in 1..5");
    if (s.t_max && *s.t_max <= 0) config_fail(p + "/t_max", "must be positive");
    if (s.t_max_factor <= 0) config_fail(p + "/t_max_factor", "must be positive");
  }
  if (root.contains("spacing")) {
    const json& d = root.at("spacing");
    const std::string p = "/spacing";
    check_keys(d, p, {"bottom_C", "mid_C", "order1", "points_per_wavelength", "min_levels"});
    SpacingSpec& s = c.spacing;
    s.bottom_C = number_or(d, p, "bottom_C", s.bottom_C);
    s.mid_C = number_or(d, p, "mid_C", s.mid_C);
    s.points_per_wavelength = number_or(d, p, "points_per_wavelength", s.points_per_wavelength);
    s.min_levels = int_or(d, p, "min_levels", s.min_levels);
    if (d.contains("order1")) {
      const std::vector<double> w = number_array(d.at("order1"), p + "/order1");
      if (w.size() != 2 || !(w[0] < w[1])) config_fail(p + "/order1", "expected [lo, hi] with lo < hi");
      s.order1_lo = w[0];
      s.order1_hi = w[1];
    }
    if (s.bottom_C <= 0) config_fail(p + "/bottom_C", "must be positive");
    if (s.mid_C <= s.bottom_C * c.epsilons.front()) config_fail(p + "/mid_C", "must exceed bottom_C * eps");
    if (s.points_per_wavelength < 4) config_fail(p + "/points_per_wavelength", "need at least 4");
  }
  if (root.contains("seed")) {
    const json& s = root.at("seed");
    if (!s.is_number_unsigned() && !(s.is_number_integer() && s.get<long long>() >= 0)) config_fail("/seed", "expected a non-negative integer");
    c.seed = s.get<std::uint64_t>();
  }
  c.threads = int_or(root, "", "threads", 1);
  if (c.threads < 1) config_fail("/threads", "must be at least 1");
  c.size_cap = number_or(root, "", "size_cap", 5e5);
  return c;
}

inline json read_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorKind::ConfigError, "cannot open " + path);
  try {
    return json::parse(in);
  } catch (const json::parse_error& e) {
    fail(ErrorKind::ConfigError, path + ": " + e.what());
  }
}

inline ExperimentConfig load_config(const std::string& path, const std::vector<std::string>& overrides = {}) {
  json j = read_json_file(path);
  for (const auto& o : overrides) apply_override(j, o);
  return parse_config(j);
}

}  // namespace thintube
