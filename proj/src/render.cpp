#include "pixphys/render.hpp"

#include <algorithm>
#include <cmath>
#include <random>

namespace pixphys {

namespace {

// splitmix64; decorrelates per-frame noise substreams from (seed, frame).
std::uint64_t mix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

}  // namespace

void FrameSequence::validate() const {
  if (width <= 0 || height <= 0) throw std::invalid_argument("FrameSequence: empty canvas");
  if (frames.size() < 2) throw std::invalid_argument("FrameSequence: need at least 2 frames");
  if (!(dt > 0)) throw std::invalid_argument("FrameSequence: dt must be > 0");
  for (const Frame& f : frames) {
    if (f.rows() != height || f.cols() != width)
      throw std::invalid_argument("FrameSequence: frame shape mismatch");
    if (!f.allFinite() || f.minCoeff() < 0.0f || f.maxCoeff() > 1.0f)
      throw std::invalid_argument("FrameSequence: intensity outside [0, 1]");
  }
}

void RenderConfig::validate() const {
  if (canvas_width <= 0 || canvas_height <= 0)
    throw std::invalid_argument("RenderConfig: canvas must be positive");
  if (ball_radius < 2.0) throw std::invalid_argument("RenderConfig: ball_radius must be >= 2");
  if (!(world_window(0) < world_window(1)) || !(world_window(2) < world_window(3)))
    throw std::invalid_argument("RenderConfig: world_window must be strictly ordered");
  if (noise_sigma < 0.0) throw std::invalid_argument("RenderConfig: noise_sigma must be >= 0");
}

Eigen::Vector2d world_to_pixel(const Eigen::Vector2d& xy, const Eigen::Vector4d& window,
                               int width, int height) {
  const double px = (xy(0) - window(0)) / (window(1) - window(0)) * width - 0.5;
  const double py = (window(3) - xy(1)) / (window(3) - window(2)) * height - 0.5;
  return {px, py};
}

Eigen::Vector2d pixel_to_world(const Eigen::Vector2d& px, const Eigen::Vector4d& window,
                               int width, int height) {
  const double x = window(0) + (px(0) + 0.5) / width * (window(1) - window(0));
  const double y = window(3) - (px(1) + 0.5) / height * (window(3) - window(2));
  return {x, y};
}

FrameSequence render_object_video(const TrajectorySeries& traj, const RenderConfig& cfg) {
  cfg.validate();
  traj.validate();
  if (traj.dim() < 2)
    throw std::invalid_argument("render_object_video: need a 2D position state");
  if (traj.samples() < 2)
    throw std::invalid_argument("render_object_video: need at least 2 samples");

  const int W = cfg.canvas_width, H = cfg.canvas_height;
  FrameSequence seq;
  seq.width = W;
  seq.height = H;
  seq.dt = traj.dt();
  seq.frames.reserve(traj.samples());

  bool clipped = false;
  for (Eigen::Index i = 0; i < traj.samples(); ++i) {
    const double x = traj.states(i, 0), y = traj.states(i, 1);
    if (x < cfg.world_window(0) || x > cfg.world_window(1) || y < cfg.world_window(2) ||
        y > cfg.world_window(3))
      clipped = true;

    Frame frame = Frame::Constant(H, W, static_cast<float>(cfg.background));
    const Eigen::Vector2d p = world_to_pixel({x, y}, cfg.world_window, W, H);

    const int r0 = std::max(0, static_cast<int>(std::floor(p(1) - cfg.ball_radius - 1.0)));
    const int r1 = std::min(H - 1, static_cast<int>(std::ceil(p(1) + cfg.ball_radius + 1.0)));
    const int c0 = std::max(0, static_cast<int>(std::floor(p(0) - cfg.ball_radius - 1.0)));
    const int c1 = std::min(W - 1, static_cast<int>(std::ceil(p(0) + cfg.ball_radius + 1.0)));
    for (int r = r0; r <= r1; ++r) {
      for (int c = c0; c <= c1; ++c) {
        const double dist = std::hypot(c - p(0), r - p(1));
        const double coverage = std::clamp(cfg.ball_radius + 0.5 - dist, 0.0, 1.0);
        if (coverage > 0.0)
          frame(r, c) = static_cast<float>(coverage + (1.0 - coverage) * cfg.background);
      }
    }

    if (cfg.noise_sigma > 0.0) {
      std::mt19937_64 rng(mix64(cfg.seed ^ mix64(static_cast<std::uint64_t>(i))));
      std::normal_distribution<double> noise(0.0, cfg.noise_sigma);
      for (int r = 0; r < H; ++r)
        for (int c = 0; c < W; ++c)
          frame(r, c) = static_cast<float>(std::clamp(frame(r, c) + noise(rng), 0.0, 1.0));
    }
    seq.frames.push_back(std::move(frame));
  }

  seq.meta = {{"kind", "object"},
              {"seed", cfg.seed},
              {"noise_sigma", cfg.noise_sigma},
              {"ball_radius", cfg.ball_radius},
              {"background", cfg.background},
              {"world_window", {cfg.world_window(0), cfg.world_window(1), cfg.world_window(2),
                                cfg.world_window(3)}},
              {"clipped", clipped}};
  return seq;
}

FrameSequence render_field_video(const FieldSeries& fields, const std::string& channel,
                                 std::pair<double, double> value_range) {
  fields.validate();
  const auto& [lo, hi] = value_range;
  if (!(lo < hi)) throw std::invalid_argument("render_field_video: value range must have lo < hi");
  const auto& frames = fields.channel(channel);
  if (frames.size() < 2)
    throw std::invalid_argument("render_field_video: need at least 2 time steps");

  FrameSequence seq;
  seq.width = fields.grid.cols;
  seq.height = fields.grid.rows;
  seq.dt = fields.dt();
  seq.frames.reserve(frames.size());
  const double scale = 1.0 / (hi - lo);
  for (const Matrix& f : frames) {
    Frame frame(f.rows(), f.cols());
    for (Eigen::Index r = 0; r < f.rows(); ++r)
      for (Eigen::Index c = 0; c < f.cols(); ++c)
        frame(r, c) = static_cast<float>(std::clamp((f(r, c) - lo) * scale, 0.0, 1.0));
    seq.frames.push_back(std::move(frame));
  }

  seq.meta = {{"kind", "field"},
              {"channel", channel},
              {"value_lo", lo},
              {"value_hi", hi},
              {"dx", fields.grid.dx},
              {"dy", fields.grid.dy}};
  return seq;
}

Matrix invert_field_frame(const Frame& frame, double lo, double hi) {
  if (!(lo < hi)) throw std::invalid_argument("invert_field_frame: value range must have lo < hi");
  return lo + (hi - lo) * frame.cast<double>().array();
}

}  // namespace pixphys
