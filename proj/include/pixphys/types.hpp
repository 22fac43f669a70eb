#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace pixphys {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

/// Single grayscale frame, intensities in [0, 1]. Stored in 32-bit floats to
/// match the on-disk sequence format exactly.
using Frame = Eigen::MatrixXf;

/// Uniformly sampled low-dimensional state history z(t), one row per sample.
struct TrajectorySeries {
  Vector times;   // strictly increasing, uniform spacing
  Matrix states;  // N x d

  /// Set when integration aborted early; index of the first bad step.
  std::optional<Eigen::Index> divergence_step;

  Eigen::Index samples() const { return states.rows(); }
  Eigen::Index dim() const { return states.cols(); }

  double dt() const {
    if (times.size() < 2) throw std::invalid_argument("TrajectorySeries: need >= 2 samples for dt");
    return times(1) - times(0);
  }

  /// First `n` samples as a new series.
  TrajectorySeries head(Eigen::Index n) const {
    TrajectorySeries out;
    out.times = times.head(n);
    out.states = states.topRows(n);
    return out;
  }

  /// Samples [begin, begin+n) as a new series.
  TrajectorySeries slice(Eigen::Index begin, Eigen::Index n) const {
    TrajectorySeries out;
    out.times = times.segment(begin, n);
    out.states = states.middleRows(begin, n);
    return out;
  }

  void validate() const;
};

/// Regular periodic grid: `rows` x `cols` cells with physical spacing (dx, dy).
/// Column index maps to x, row index to y.
struct GridSpec {
  int rows = 0;
  int cols = 0;
  double dx = 1.0;
  double dy = 1.0;

  bool operator==(const GridSpec&) const = default;
};

/// Time series of named scalar fields on a shared grid.
/// channels[c][t] is the H x W field of channel c at time step t.
struct FieldSeries {
  Vector times;
  GridSpec grid;
  std::vector<std::string> channel_names;
  std::vector<std::vector<Matrix>> channels;
  std::optional<Eigen::Index> divergence_step;

  Eigen::Index steps() const { return times.size(); }
  Eigen::Index channel_count() const { return static_cast<Eigen::Index>(channels.size()); }

  double dt() const {
    if (times.size() < 2) throw std::invalid_argument("FieldSeries: need >= 2 steps for dt");
    return times(1) - times(0);
  }

  const std::vector<Matrix>& channel(const std::string& name) const;
  bool has_channel(const std::string& name) const;

  /// Steps [begin, begin+n) as a new series (shares nothing; deep copy).
  FieldSeries slice(Eigen::Index begin, Eigen::Index n) const;

  void validate() const;
};

/// Uniform time grid starting at t0.
Vector uniform_times(double t0, double dt, Eigen::Index count);

}  // namespace pixphys
