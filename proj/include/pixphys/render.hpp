#pragma once

#include "pixphys/types.hpp"

#include <json.hpp>

#include <utility>

namespace pixphys {

/// Grayscale video: one float32 frame per time step, intensities in [0, 1].
struct FrameSequence {
  int width = 0;
  int height = 0;
  double dt = 0.0;
  std::vector<Frame> frames;
  nlohmann::json meta = nlohmann::json::object();

  Eigen::Index count() const { return static_cast<Eigen::Index>(frames.size()); }
  void validate() const;
};

struct RenderConfig {
  int canvas_width = 64;
  int canvas_height = 64;
  Eigen::Vector4d world_window{-2.0, 2.0, -2.0, 2.0};  // (x_min, x_max, y_min, y_max)
  double ball_radius = 3.0;
  double background = 0.0;
  double noise_sigma = 0.0;
  std::uint64_t seed = 0;

  void validate() const;
};

/// World -> pixel map used by both rendering and track de-projection:
/// px = (x - x_min) / (x_max - x_min) * W - 0.5 (and y flipped), so world
/// window corners land on the outer pixel-edge corners.
Eigen::Vector2d world_to_pixel(const Eigen::Vector2d& xy, const Eigen::Vector4d& window,
                               int width, int height);
Eigen::Vector2d pixel_to_world(const Eigen::Vector2d& px, const Eigen::Vector4d& window,
                               int width, int height);

/// One anti-aliased unit-intensity disc per frame at the mapped (z1, z2)
/// position, over a constant background, plus clipped Gaussian pixel noise
/// drawn from a per-frame substream of `cfg.seed`.
FrameSequence render_object_video(const TrajectorySeries& traj, const RenderConfig& cfg);

/// Field values affinely mapped from [lo, hi] to [0, 1] (clipped); the range
/// and grid geometry are recorded in meta so extraction can invert to
/// physical units.
FrameSequence render_field_video(const FieldSeries& fields, const std::string& channel,
                                 std::pair<double, double> value_range);

/// Inverse of render_field_video for a single frame: intensities back to
/// physical values via the recorded range.
Matrix invert_field_frame(const Frame& frame, double lo, double hi);

}  // namespace pixphys
