#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace thintube {

/// Failure categories raised by the library. The CLI maps these onto exit codes.
enum class ErrorKind {
  OpenCurve,
  DegenerateCurve,
  PeriodicityViolation,
  DegeneracyDetected,
  GapViolation,
  GaugeInconsistency,
  GridMismatch,
  MetricDegenerate,
  TubeOverlap,
  ResolutionTooCoarse,
  SolverFailure,
  CutoffLeak,
  MeshNotConverged,
  InsufficientSpectrum,
  SizeCapExceeded,
  ConfigError,
};

inline std::string_view to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::OpenCurve: return "OpenCurve";
    case ErrorKind::DegenerateCurve: return "DegenerateCurve";
    case ErrorKind::PeriodicityViolation: return "PeriodicityViolation";
    case ErrorKind::DegeneracyDetected: return "DegeneracyDetected";
    case ErrorKind::GapViolation: return "GapViolation";
    case ErrorKind::GaugeInconsistency: return "GaugeInconsistency";
    case ErrorKind::GridMismatch: return "GridMismatch";
    case ErrorKind::MetricDegenerate: return "MetricDegenerate";
    case ErrorKind::TubeOverlap: return "TubeOverlap";
    case ErrorKind::ResolutionTooCoarse: return "ResolutionTooCoarse";
    case ErrorKind::SolverFailure: return "SolverFailure";
    case ErrorKind::CutoffLeak: return "CutoffLeak";
    case ErrorKind::MeshNotConverged: return "MeshNotConverged";
    case ErrorKind::InsufficientSpectrum: return "InsufficientSpectrum";
    case ErrorKind::SizeCapExceeded: return "SizeCapExceeded";
    case ErrorKind::ConfigError: return "ConfigError";
  }
  return "Unknown";
}

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what)
      : std::runtime_error(std::string(to_string(kind)) + ": " + what), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

[[noreturn]] inline void fail(ErrorKind kind, const std::string& what) { throw Error(kind, what); }

inline void require(bool condition, ErrorKind kind, const std::string& what) {
  if (!condition) fail(kind, what);
}

}  // namespace thintube
