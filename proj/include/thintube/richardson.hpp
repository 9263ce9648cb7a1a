#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <limits>
#include <string>
#include <vector>

#include "thintube/error.hpp"

namespace thintube {

struct Extrapolated {
  Eigen::VectorXd value;  // best estimate
  Eigen::VectorXd coarse; // second best estimate (same stage, one level coarser)
  Eigen::VectorXd error;  // |best - coarse|, infinite with a single level
  int stages = 0;
};

/// Repeated Richardson elimination of h^2, h^4, ... for levels with h halving between consecutive entries.
/// Runs as many stages as leave two values, so the last stage doubles as an error estimate.
inline Extrapolated richardson(const std::vector<Eigen::VectorXd>& levels) {
  require(!levels.empty(), ErrorKind::ConfigError, "no levels to extrapolate");
  const Eigen::Index n = levels[0].size();
  for (const auto& l : levels) require(l.size() == n, ErrorKind::GridMismatch, "levels have different lengths");
  Extrapolated out;
  if (levels.size() == 1) {
    out.value = levels[0];
    out.coarse = levels[0];
    out.error = Eigen::VectorXd::Constant(n, std::numeric_limits<double>::infinity());
    return out;
  }
  std::vector<Eigen::VectorXd> cur = levels;
  double factor = 4.0;
  const int stages = std::max(1, static_cast<int>(levels.size()) - 2);
  Eigen::VectorXd prev_best = cur.back();
  for (int s = 0; s < stages; ++s) {
    prev_best = cur.back();
    std::vector<Eigen::VectorXd> next;
    for (std::size_t i = 0; i + 1 < cur.size(); ++i) next.push_back((factor * cur[i + 1] - cur[i]) / (factor - 1.0));
    cur = std::move(next);
    factor *= 4.0;
  }
  out.stages = stages;
  out.value = cur.back();
  out.coarse = cur.size() >= 2 ? cur[cur.size() - 2] : prev_best;
  out.error = (out.value - out.coarse).cwiseAbs();
  return out;
}

struct PowerFit {
  bool valid = false;
  double exponent = 0.0;
  double log_prefactor = 0.0;
  double residual = 0.0;  // rms of log residuals
  int points = 0;
  std::string note;
};

/// Least squares of log y = log C + p log x. Refuses fewer than three points.
inline PowerFit fit_power(const std::vector<double>& x, const std::vector<double>& y) {
  PowerFit f;
  std::vector<double> lx, ly;
  for (std::size_t i = 0; i < x.size() && i < y.size(); ++i) {
    if (x[i] > 0 && y[i] > 0 && std::isfinite(y[i])) {
      lx.push_back(std::log(x[i]));
      ly.push_back(std::log(y[i]));
    }
  }
  f.points = static_cast<int>(lx.size());
  if (f.points < 3) {
    f.note = "fewer than three admitted points";
    return f;
  }
  double mx = 0, my = 0;
  for (int i = 0; i < f.points; ++i) {
    mx += lx[i];
    my += ly[i];
  }
  mx /= f.points;
  my /= f.points;
  double sxx = 0, sxy = 0;
  for (int i = 0; i < f.points; ++i) {
    sxx += (lx[i] - mx) * (lx[i] - mx);
    sxy += (lx[i] - mx) * (ly[i] - my);
  }
  if (sxx <= 0) {
    f.note = "degenerate abscissae";
    return f;
  }
  f.exponent = sxy / sxx;
  f.log_prefactor = my - f.exponent * mx;
  double r2 = 0;
  for (int i = 0; i < f.points; ++i) r2 += std::pow(ly[i] - f.log_prefactor - f.exponent * lx[i], 2);
  f.residual = std::sqrt(r2 / f.points);
  f.valid = true;
  return f;
}

}  // namespace thintube
