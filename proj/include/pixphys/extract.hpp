#pragma once

#include "pixphys/render.hpp"
#include "pixphys/types.hpp"

namespace pixphys {

/// One connected bright (or dark) region of a frame.
struct Blob {
  Eigen::Vector2d centroid;  // sub-pixel (x, y) = (col, row)
  double area = 0.0;         // member pixel count
  double mean_intensity = 0.0;
};

/// 8-connected components of |pixel - background| > threshold with at least
/// min_area pixels; centroids weighted by |pixel - background|. Returned
/// sorted by descending area, ties by centroid (y, x).
std::vector<Blob> segment_frame(const Frame& frame, double threshold, int min_area,
                                double background = 0.0);

struct TrackConfig {
  double threshold = 0.3;
  int min_area = 4;
  double background = 0.0;
  double static_eps = 2.0;    // tracks moving less than this (total px) are static
  double match_radius = 6.0;  // association distance bound, px
  /// When set, centroid tracks are de-projected to world coordinates.
  std::optional<Eigen::Vector4d> world_window;
};

/// Associates blobs across frames by nearest neighbor, drops static targets,
/// and returns the single remaining centroid track ((x, y) per frame, world
/// units when a window is given, else pixels).
TrajectorySeries track_and_filter(const FrameSequence& frames, const TrackConfig& cfg);

/// Named full-grid feature stacks (channel values and their stencil
/// derivatives) for every time step.
struct FieldFeatures {
  std::vector<std::string> names;
  std::vector<std::vector<Matrix>> values;  // [feature][time step]
  GridSpec grid;
  Vector times;
};

/// Evaluates the requested features ("u", "u_x", "u_y", "u_xx", "u_yy",
/// "Δu", "Δ²u" per channel) on the full grid with periodic stencils.
FieldFeatures apply_stencils(const FieldSeries& fields, const std::vector<std::string>& requested);

/// Feature values at P sampled pixels for every time step, in the layout the
/// regression consumes.
struct StencilFeatures {
  std::vector<std::string> names;  // F
  std::vector<Matrix> values;      // one P x F matrix per time step
  Matrix coords;                   // P x 2 (row, col)
  Vector times;
  double dt = 0.0;
  double dx = 1.0;
  double dy = 1.0;

  Eigen::Index steps() const { return static_cast<Eigen::Index>(values.size()); }
  Eigen::Index samples() const { return coords.rows(); }

  /// Columns for the named features, rows stacked over time steps
  /// [t_begin, t_end) sample-major within each step.
  Matrix stacked(const std::vector<std::string>& which, Eigen::Index t_begin,
                 Eigen::Index t_end) const;

  /// Central-difference time derivative of the named (channel) features at
  /// the sampled pixels, stacked over interior steps 1..N-2; aligns with
  /// stacked(which, 1, steps()-1).
  Matrix time_derivative(const std::vector<std::string>& which) const;
};

/// Uniform sampling of n_samples distinct pixels (deterministic per seed),
/// kept in canonical row-major coordinate order. skip_boundary excludes a
/// 2-cell margin for callers that cannot rely on periodic wrap.
StencilFeatures sample_pixels(const FieldFeatures& features, Eigen::Index n_samples,
                              std::uint64_t seed, bool skip_boundary = false);

}  // namespace pixphys
