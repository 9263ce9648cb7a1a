#pragma once

#include <cmath>
#include <numbers>
#include <vector>

#include "thintube/error.hpp"

namespace thintube {

/// f(q) = constant + slope*q + sum_m cos_m cos(2 pi m q/L) + sin_m sin(2 pi m q/L).
/// The linear part lets angle functions wind (theta(L) - theta(0) = slope*L).
class PeriodicProfile {
 public:
  PeriodicProfile() = default;

  PeriodicProfile(double period, double constant, std::vector<double> cos_coeffs = {},
                  std::vector<double> sin_coeffs = {}, double slope = 0.0)
      : period_(period), constant_(constant), slope_(slope), cos_(std::move(cos_coeffs)), sin_(std::move(sin_coeffs)) {
    require(period_ > 0.0, ErrorKind::ConfigError, "profile period must be positive");
  }

  static PeriodicProfile constant(double period, double value) { return PeriodicProfile(period, value); }

  /// Trigonometric interpolant through n uniform samples f(j L/n), j = 0..n-1.
  static PeriodicProfile from_samples(double period, const std::vector<double>& samples, double slope = 0.0) {
    const std::size_t n = samples.size();
    require(n >= 1, ErrorKind::ConfigError, "profile needs at least one sample");
    std::vector<double> ctab(n), stab(n);
    for (std::size_t j = 0; j < n; ++j) {
      const double a = 2.0 * std::numbers::pi * static_cast<double>(j) / static_cast<double>(n);
      ctab[j] = std::cos(a);
      stab[j] = std::sin(a);
    }
    // samples of the periodic part
    std::vector<double> f(n);
    for (std::size_t j = 0; j < n; ++j) f[j] = samples[j] - slope * period * static_cast<double>(j) / static_cast<double>(n);
    double mean = 0.0;
    for (double v : f) mean += v;
    mean /= static_cast<double>(n);
    const std::size_t half = (n - 1) / 2;
    std::vector<double> c(half + (n % 2 == 0 && n > 1 ? 1 : 0), 0.0), s(half, 0.0);
    for (std::size_t m = 1; m <= half; ++m) {
      double ac = 0.0, as = 0.0;
      for (std::size_t j = 0; j < n; ++j) {
        const std::size_t idx = (j * m) % n;
        ac += f[j] * ctab[idx];
        as += f[j] * stab[idx];
      }
      c[m - 1] = 2.0 * ac / static_cast<double>(n);
      s[m - 1] = 2.0 * as / static_cast<double>(n);
    }
    if (n % 2 == 0 && n > 1) {
      double nyq = 0.0;
      for (std::size_t j = 0; j < n; ++j) nyq += (j % 2 == 0 ? f[j] : -f[j]);
      c[n / 2 - 1] = nyq / static_cast<double>(n);
    }
    return PeriodicProfile(period, mean, std::move(c), std::move(s), slope);
  }

  double period() const { return period_; }
  double slope() const { return slope_; }
  double mean() const { return constant_; }
  const std::vector<double>& cos_coeffs() const { return cos_; }
  const std::vector<double>& sin_coeffs() const { return sin_; }

  /// derivative order 0, 1 or 2
  double eval(double q, int order = 0) const {
    const double w = 2.0 * std::numbers::pi / period_;
    double v = 0.0;
    if (order == 0) v = constant_ + slope_ * q;
    if (order == 1) v = slope_;
    const std::size_t nm = std::max(cos_.size(), sin_.size());
    for (std::size_t i = 0; i < nm; ++i) {
      const double m = static_cast<double>(i + 1);
      const double ca = i < cos_.size() ? cos_[i] : 0.0;
      const double sa = i < sin_.size() ? sin_[i] : 0.0;
      if (ca == 0.0 && sa == 0.0) continue;
      const double cs = std::cos(m * w * q), sn = std::sin(m * w * q);
      switch (order) {
        case 0: v += ca * cs + sa * sn; break;
        case 1: v += m * w * (-ca * sn + sa * cs); break;
        default: v += -(m * w) * (m * w) * (ca * cs + sa * sn); break;
      }
    }
    return v;
  }

  /// integral of the profile from 0 to q
  double integral(double q) const {
    const double w = 2.0 * std::numbers::pi / period_;
    double v = constant_ * q + 0.5 * slope_ * q * q;
    const std::size_t nm = std::max(cos_.size(), sin_.size());
    for (std::size_t i = 0; i < nm; ++i) {
      const double mw = static_cast<double>(i + 1) * w;
      const double ca = i < cos_.size() ? cos_[i] : 0.0;
      const double sa = i < sin_.size() ? sin_[i] : 0.0;
      v += ca * std::sin(mw * q) / mw + sa * (1.0 - std::cos(mw * q)) / mw;
    }
    return v;
  }

  double operator()(double q) const { return eval(q, 0); }
  double derivative(double q) const { return eval(q, 1); }
  double second_derivative(double q) const { return eval(q, 2); }

  bool is_constant() const {
    if (slope_ != 0.0) return false;
    for (double c : cos_)
      if (c != 0.0) return false;
    for (double s : sin_)
      if (s != 0.0) return false;
    return true;
  }

  /// min and max sampled on a fine grid
  std::pair<double, double> range(int samples = 4096) const {
    double lo = eval(0.0), hi = lo;
    for (int j = 1; j < samples; ++j) {
      const double v = eval(period_ * j / samples);
      lo = std::min(lo, v);
      hi = std::max(hi, v);
    }
    return {lo, hi};
  }

 private:
  double period_ = 1.0;
  double constant_ = 0.0;
  double slope_ = 0.0;
  std::vector<double> cos_, sin_;
};

}  // namespace thintube
