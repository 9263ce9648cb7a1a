#pragma once

#include <Eigen/Core>
#include <Eigen/SparseCore>
#include <array>
#include <cmath>
#include <vector>

#include "thintube/error.hpp"

namespace thintube {

using SparseMatrix = Eigen::SparseMatrix<double>;
using Triplet = Eigen::Triplet<double>;

/// Periodic: n nodes on [lo, hi) with wrap-around.
/// Dirichlet: n interior nodes, zero values at lo and hi.
/// NaturalDirichlet: staggered nodes (i + 1/2) h from lo, zero value at hi, no flux at lo
/// (radial axis of a polar grid, where the metric weight vanishes).
enum class AxisKind { Periodic, Dirichlet, NaturalDirichlet };

struct Axis {
  AxisKind kind = AxisKind::Dirichlet;
  int n = 0;
  double lo = 0.0;
  double hi = 1.0;

  double h() const {
    switch (kind) {
      case AxisKind::Periodic: return (hi - lo) / n;
      case AxisKind::Dirichlet: return (hi - lo) / (n + 1);
      case AxisKind::NaturalDirichlet: return (hi - lo) / (n + 0.5);
    }
    return 0.0;
  }

  /// Coordinate at a doubled index: node i sits at 2i, the midpoint i+1/2 at 2i+1.
  double coord(int twice) const {
    const double t = 0.5 * twice;
    switch (kind) {
      case AxisKind::Periodic: return lo + t * h();
      case AxisKind::Dirichlet: return lo + (t + 1.0) * h();
      case AxisKind::NaturalDirichlet: return lo + (t + 0.5) * h();
    }
    return 0.0;
  }

  double node(int i) const { return coord(2 * i); }

  // range of lower endpoints of edges carrying a difference term
  int first_edge() const { return kind == AxisKind::Dirichlet ? -1 : 0; }
  int last_edge() const { return n - 1; }
};

class StructuredGrid {
 public:
  StructuredGrid() = default;

  explicit StructuredGrid(std::vector<Axis> axes, std::vector<int> seam = {}) : axes_(std::move(axes)), seam_(std::move(seam)) {
    require(!axes_.empty() && axes_.size() <= 3, ErrorKind::ConfigError, "grid must have 1 to 3 axes");
    for (const auto& a : axes_) {
      require(a.n >= 1, ErrorKind::ResolutionTooCoarse, "axis without nodes");
      if (a.kind == AxisKind::Periodic) require(a.n >= 3, ErrorKind::ResolutionTooCoarse, "periodic axis needs at least 3 nodes");
    }
    rest_ = 1;
    for (std::size_t a = 1; a < axes_.size(); ++a) rest_ *= axes_[a].n;
    if (!seam_.empty()) {
      require(axes_[0].kind == AxisKind::Periodic, ErrorKind::ConfigError, "seam permutation needs a periodic first axis");
      require(static_cast<int>(seam_.size()) == rest_, ErrorKind::GridMismatch, "seam permutation has wrong size");
    }
  }

  int dim() const { return static_cast<int>(axes_.size()); }
  const Axis& axis(int a) const { return axes_[a]; }
  const std::vector<Axis>& axes() const { return axes_; }
  const std::vector<int>& seam() const { return seam_; }
  int size() const { return axes_[0].n * rest_; }
  int rest_size() const { return rest_; }

  double cell_volume() const {
    double v = 1.0;
    for (const auto& a : axes_) v *= a.h();
    return v;
  }

  /// Flat index of a node, or -1 for a node on a Dirichlet boundary / outside the grid.
  /// Crossing the upper end of a periodic first axis applies the seam permutation.
  int index(const std::array<int, 3>& idx) const {
    bool crossed = false;
    std::array<int, 3> i = idx;
    for (int a = 0; a < dim(); ++a) {
      const Axis& ax = axes_[a];
      if (ax.kind == AxisKind::Periodic) {
        if (i[a] == ax.n) {
          i[a] = 0;
          if (a == 0) crossed = true;
        } else if (i[a] < 0 || i[a] > ax.n) {
          return -1;
        }
      } else if (i[a] < 0 || i[a] >= ax.n) {
        return -1;
      }
    }
    int r = 0;
    for (int a = 1; a < dim(); ++a) r = r * axes_[a].n + i[a];
    if (crossed && !seam_.empty()) r = seam_[r];
    return i[0] * rest_ + r;
  }

  std::array<int, 3> multi_index(int flat) const {
    std::array<int, 3> i{0, 0, 0};
    for (int a = dim() - 1; a >= 0; --a) {
      i[a] = flat % axes_[a].n;
      flat /= axes_[a].n;
    }
    return i;
  }

 private:
  std::vector<Axis> axes_;
  std::vector<int> seam_;
  int rest_ = 1;
};

struct FormMatrices {
  SparseMatrix K;     // stiffness, exactly symmetric
  Eigen::VectorXd M;  // lumped mass
};

namespace detail {

template <class F>
void for_each_box(int dim, const std::array<int, 3>& lo, const std::array<int, 3>& hi, F&& f) {
  std::array<int, 3> i{0, 0, 0};
  for (i[0] = lo[0]; i[0] <= hi[0]; ++i[0]) {
    if (dim == 1) {
      f(i);
      continue;
    }
    for (i[1] = lo[1]; i[1] <= hi[1]; ++i[1]) {
      if (dim == 2) {
        f(i);
        continue;
      }
      for (i[2] = lo[2]; i[2] <= hi[2]; ++i[2]) f(i);
    }
  }
}

}  // namespace detail

/// Assembles the quadratic form  sum_ab C_ab d_a u d_b u + lumped mass  w u^2  on a structured grid.
/// coeff(twice, C) fills the symmetric matrix C (dim x dim) at the point with doubled indices `twice`;
/// diagonal entries are sampled at edge midpoints, off-diagonal ones at plaquette centres.
/// weight(twice) returns the mass density at a node.
template <class Coeff, class Weight>
FormMatrices assemble_form(const StructuredGrid& grid, Coeff&& coeff, Weight&& weight) {
  const int dim = grid.dim();
  const double vol = grid.cell_volume();
  std::vector<Triplet> trip;
  trip.reserve(static_cast<std::size_t>(grid.size()) * (dim == 1 ? 4 : dim == 2 ? 20 : 48));
  Eigen::Matrix3d C;

  auto edge_range = [&](int a, std::array<int, 3>& lo, std::array<int, 3>& hi) {
    for (int b = 0; b < dim; ++b) {
      lo[b] = 0;
      hi[b] = grid.axis(b).n - 1;
    }
    lo[a] = grid.axis(a).first_edge();
    hi[a] = grid.axis(a).last_edge();
  };

  for (int a = 0; a < dim; ++a) {
    std::array<int, 3> lo{}, hi{};
    edge_range(a, lo, hi);
    const double ha = grid.axis(a).h();
    detail::for_each_box(dim, lo, hi, [&](const std::array<int, 3>& i) {
      std::array<int, 3> j = i;
      j[a] += 1;
      const int p0 = grid.index(i), p1 = grid.index(j);
      if (p0 < 0 && p1 < 0) return;
      std::array<int, 3> t{2 * i[0], 2 * i[1], 2 * i[2]};
      t[a] += 1;
      C.setZero();
      coeff(t, C);
      const double c = C(a, a) * vol / (ha * ha);
      if (p0 >= 0) trip.emplace_back(p0, p0, c);
      if (p1 >= 0) trip.emplace_back(p1, p1, c);
      if (p0 >= 0 && p1 >= 0) {
        trip.emplace_back(p0, p1, -c);
        trip.emplace_back(p1, p0, -c);
      }
    });
  }

  for (int a = 0; a < dim; ++a) {
    for (int b = a + 1; b < dim; ++b) {
      std::array<int, 3> lo{}, hi{};
      edge_range(a, lo, hi);
      lo[b] = grid.axis(b).first_edge();
      hi[b] = grid.axis(b).last_edge();
      const double ha = grid.axis(a).h(), hb = grid.axis(b).h();
      detail::for_each_box(dim, lo, hi, [&](const std::array<int, 3>& i) {
        std::array<int, 3> i10 = i, i01 = i, i11 = i;
        i10[a] += 1;
        i01[b] += 1;
        i11[a] += 1;
        i11[b] += 1;
        const int c00 = grid.index(i), c10 = grid.index(i10), c01 = grid.index(i01), c11 = grid.index(i11);
        std::array<int, 3> t{2 * i[0], 2 * i[1], 2 * i[2]};
        t[a] += 1;
        t[b] += 1;
        C.setZero();
        coeff(t, C);
        const double v = C(a, b) * vol;
        if (v == 0.0) return;
        const std::array<int, 4> da_n{c10, c11, c00, c01};
        const std::array<double, 4> da_c{0.5 / ha, 0.5 / ha, -0.5 / ha, -0.5 / ha};
        const std::array<int, 4> db_n{c01, c11, c00, c10};
        const std::array<double, 4> db_c{0.5 / hb, 0.5 / hb, -0.5 / hb, -0.5 / hb};
        for (int x = 0; x < 4; ++x) {
          if (da_n[x] < 0) continue;
          for (int y = 0; y < 4; ++y) {
            if (db_n[y] < 0) continue;
            const double e = v * da_c[x] * db_c[y];
            trip.emplace_back(da_n[x], db_n[y], e);
            trip.emplace_back(db_n[y], da_n[x], e);
          }
        }
      });
    }
  }

  FormMatrices out;
  const int n = grid.size();
  out.K.resize(n, n);
  out.K.setFromTriplets(trip.begin(), trip.end());
  out.K.makeCompressed();
  out.M.resize(n);
  for (int p = 0; p < n; ++p) {
    const auto i = grid.multi_index(p);
    out.M[p] = weight(std::array<int, 3>{2 * i[0], 2 * i[1], 2 * i[2]}) * vol;
  }
  return out;
}

}  // namespace thintube
