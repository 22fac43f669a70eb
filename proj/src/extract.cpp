#include "pixphys/extract.hpp"

#include "pixphys/stencils.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <sstream>

namespace pixphys {

std::vector<Blob> segment_frame(const Frame& frame, double threshold, int min_area,
                                double background) {
  if (threshold <= 0.0 || threshold >= 1.0)
    throw std::invalid_argument("segment_frame: threshold must be in (0, 1)");
  if (min_area < 1) throw std::invalid_argument("segment_frame: min_area must be >= 1");

  const int H = static_cast<int>(frame.rows()), W = static_cast<int>(frame.cols());
  std::vector<int> label(static_cast<std::size_t>(H * W), -1);
  auto idx = [W](int r, int c) { return static_cast<std::size_t>(r * W + c); };
  auto over = [&](int r, int c) {
    return std::abs(frame(r, c) - background) > threshold;
  };

  std::vector<Blob> blobs;
  std::vector<std::pair<int, int>> stack;
  for (int r0 = 0; r0 < H; ++r0) {
    for (int c0 = 0; c0 < W; ++c0) {
      if (label[idx(r0, c0)] != -1 || !over(r0, c0)) continue;

      const int id = static_cast<int>(blobs.size());
      double weight_sum = 0.0, cx = 0.0, cy = 0.0, intensity_sum = 0.0;
      int area = 0;
      stack.push_back({r0, c0});
      label[idx(r0, c0)] = id;
      while (!stack.empty()) {
        const auto [r, c] = stack.back();
        stack.pop_back();
        const double w = std::abs(frame(r, c) - background);
        weight_sum += w;
        cx += w * c;
        cy += w * r;
        intensity_sum += frame(r, c);
        ++area;
        for (int dr = -1; dr <= 1; ++dr) {
          for (int dc = -1; dc <= 1; ++dc) {
            const int rr = r + dr, cc = c + dc;
            if (rr < 0 || rr >= H || cc < 0 || cc >= W) continue;
            if (label[idx(rr, cc)] != -1 || !over(rr, cc)) continue;
            label[idx(rr, cc)] = id;
            stack.push_back({rr, cc});
          }
        }
      }

      Blob b;
      b.centroid = {cx / weight_sum, cy / weight_sum};
      b.area = area;
      b.mean_intensity = intensity_sum / area;
      if (area >= min_area) blobs.push_back(b);
    }
  }

  std::sort(blobs.begin(), blobs.end(), [](const Blob& a, const Blob& b) {
    if (a.area != b.area) return a.area > b.area;
    if (a.centroid(1) != b.centroid(1)) return a.centroid(1) < b.centroid(1);
    return a.centroid(0) < b.centroid(0);
  });
  return blobs;
}

TrajectorySeries track_and_filter(const FrameSequence& frames, const TrackConfig& cfg) {
  frames.validate();
  const Eigen::Index n = frames.count();

  std::vector<std::vector<Blob>> per_frame(static_cast<std::size_t>(n));
  for (Eigen::Index t = 0; t < n; ++t)
    per_frame[static_cast<std::size_t>(t)] =
        segment_frame(frames.frames[static_cast<std::size_t>(t)], cfg.threshold, cfg.min_area,
                      cfg.background);

  if (per_frame[0].empty()) throw std::runtime_error("track_and_filter: no dynamics detected");

  // One track per frame-0 blob, extended frame by frame.
  std::vector<std::vector<Eigen::Vector2d>> tracks;
  for (const Blob& b : per_frame[0]) tracks.push_back({b.centroid});

  for (Eigen::Index t = 1; t < n; ++t) {
    const auto& blobs = per_frame[static_cast<std::size_t>(t)];
    std::vector<int> claimed(blobs.size(), -1);
    for (std::size_t k = 0; k < tracks.size(); ++k) {
      const Eigen::Vector2d& last = tracks[k].back();
      int best = -1, second = -1;
      double best_d = std::numeric_limits<double>::infinity(), second_d = best_d;
      for (std::size_t b = 0; b < blobs.size(); ++b) {
        const double d = (blobs[b].centroid - last).norm();
        if (d < best_d) {
          second = best;
          second_d = best_d;
          best = static_cast<int>(b);
          best_d = d;
        } else if (d < second_d) {
          second = static_cast<int>(b);
          second_d = d;
        }
      }
      if (best < 0 || best_d > cfg.match_radius) {
        std::ostringstream msg;
        msg << "track_and_filter: lost track at frame " << t << " (nearest blob "
            << (best < 0 ? std::string("absent")
                         : std::to_string(best_d) + " px away") << ")";
        throw std::runtime_error(msg.str());
      }
      if ((second >= 0 && second_d <= cfg.match_radius) ||
          claimed[static_cast<std::size_t>(best)] != -1) {
        std::ostringstream msg;
        msg << "track_and_filter: ambiguous association at frame " << t
            << " (two blobs within match radius)";
        throw std::runtime_error(msg.str());
      }
      claimed[static_cast<std::size_t>(best)] = static_cast<int>(k);
      tracks[k].push_back(blobs[static_cast<std::size_t>(best)].centroid);
    }
  }

  // Static-target filter: drop tracks whose accumulated centroid displacement
  // stays under static_eps.
  std::vector<std::size_t> moving;
  for (std::size_t k = 0; k < tracks.size(); ++k) {
    double path = 0.0;
    for (std::size_t t = 1; t < tracks[k].size(); ++t)
      path += (tracks[k][t] - tracks[k][t - 1]).norm();
    if (path >= cfg.static_eps) moving.push_back(k);
  }

  if (moving.empty()) throw std::runtime_error("track_and_filter: no dynamics detected");
  if (moving.size() > 1)
    throw std::runtime_error("track_and_filter: " + std::to_string(moving.size()) +
                             " moving objects found; expected one");

  const auto& track = tracks[moving[0]];
  TrajectorySeries out;
  out.times = uniform_times(0.0, frames.dt, n);
  out.states.resize(n, 2);
  for (Eigen::Index t = 0; t < n; ++t) {
    Eigen::Vector2d p = track[static_cast<std::size_t>(t)];
    if (cfg.world_window)
      p = pixel_to_world(p, *cfg.world_window, frames.width, frames.height);
    out.states.row(t) = p.transpose();
  }
  return out;
}

FieldFeatures apply_stencils(const FieldSeries& fields,
                             const std::vector<std::string>& requested) {
  fields.validate();
  if (requested.empty()) throw std::invalid_argument("apply_stencils: no features requested");

  FieldFeatures out;
  out.names = requested;
  out.grid = fields.grid;
  out.times = fields.times;
  out.values.resize(requested.size());

  const Eigen::Index n = fields.steps();
  std::vector<Matrix> channels(fields.channels.size());
  for (Eigen::Index t = 0; t < n; ++t) {
    for (std::size_t c = 0; c < fields.channels.size(); ++c)
      channels[c] = fields.channels[c][static_cast<std::size_t>(t)];
    for (std::size_t f = 0; f < requested.size(); ++f)
      out.values[f].push_back(stencils::apply_named_stencil(requested[f], channels,
                                                            fields.channel_names, fields.grid));
  }
  return out;
}

Matrix StencilFeatures::stacked(const std::vector<std::string>& which, Eigen::Index t_begin,
                                Eigen::Index t_end) const {
  if (t_begin < 0 || t_end > steps() || t_begin > t_end)
    throw std::out_of_range("StencilFeatures::stacked: bad time range");
  std::vector<Eigen::Index> cols;
  for (const std::string& name : which) {
    const auto it = std::find(names.begin(), names.end(), name);
    if (it == names.end())
      throw std::invalid_argument("StencilFeatures: no feature named '" + name + "'");
    cols.push_back(it - names.begin());
  }

  const Eigen::Index p = samples();
  Matrix out((t_end - t_begin) * p, static_cast<Eigen::Index>(cols.size()));
  for (Eigen::Index t = t_begin; t < t_end; ++t)
    for (std::size_t j = 0; j < cols.size(); ++j)
      out.block((t - t_begin) * p, static_cast<Eigen::Index>(j), p, 1) =
          values[static_cast<std::size_t>(t)].col(cols[j]);
  return out;
}

Matrix StencilFeatures::time_derivative(const std::vector<std::string>& which) const {
  if (steps() < 3)
    throw std::invalid_argument("StencilFeatures::time_derivative: need >= 3 steps");
  Matrix later = stacked(which, 2, steps());
  Matrix earlier = stacked(which, 0, steps() - 2);
  return (later - earlier) / (2.0 * dt);
}

StencilFeatures sample_pixels(const FieldFeatures& features, Eigen::Index n_samples,
                              std::uint64_t seed, bool skip_boundary) {
  if (features.values.empty() || features.values[0].empty())
    throw std::invalid_argument("sample_pixels: empty feature stack");
  const int H = features.grid.rows, W = features.grid.cols;
  const int margin = skip_boundary ? 2 : 0;

  std::vector<std::pair<int, int>> valid;
  for (int r = margin; r < H - margin; ++r)
    for (int c = margin; c < W - margin; ++c) valid.push_back({r, c});
  if (n_samples < 1 || n_samples > static_cast<Eigen::Index>(valid.size())) {
    std::ostringstream msg;
    msg << "sample_pixels: n_samples " << n_samples << " outside [1, " << valid.size() << "]";
    throw std::invalid_argument(msg.str());
  }

  // Partial Fisher-Yates, then restore canonical row-major order.
  std::mt19937_64 rng(seed ^ 0x5851f42d4c957f2dULL);
  std::vector<std::size_t> pool(valid.size());
  std::iota(pool.begin(), pool.end(), 0);
  for (Eigen::Index i = 0; i < n_samples; ++i) {
    std::uniform_int_distribution<std::size_t> pick(static_cast<std::size_t>(i),
                                                    pool.size() - 1);
    std::swap(pool[static_cast<std::size_t>(i)], pool[pick(rng)]);
  }
  std::vector<std::size_t> chosen(pool.begin(), pool.begin() + n_samples);
  std::sort(chosen.begin(), chosen.end());

  StencilFeatures out;
  out.names = features.names;
  out.times = features.times;
  out.dt = features.times.size() >= 2 ? features.times(1) - features.times(0) : 0.0;
  out.dx = features.grid.dx;
  out.dy = features.grid.dy;
  out.coords.resize(n_samples, 2);
  for (Eigen::Index i = 0; i < n_samples; ++i) {
    out.coords(i, 0) = valid[chosen[static_cast<std::size_t>(i)]].first;
    out.coords(i, 1) = valid[chosen[static_cast<std::size_t>(i)]].second;
  }

  const Eigen::Index steps = static_cast<Eigen::Index>(features.values[0].size());
  out.values.reserve(static_cast<std::size_t>(steps));
  for (Eigen::Index t = 0; t < steps; ++t) {
    Matrix vt(n_samples, static_cast<Eigen::Index>(features.names.size()));
    for (std::size_t f = 0; f < features.names.size(); ++f) {
      const Matrix& grid_f = features.values[f][static_cast<std::size_t>(t)];
      for (Eigen::Index i = 0; i < n_samples; ++i)
        vt(i, static_cast<Eigen::Index>(f)) =
            grid_f(static_cast<Eigen::Index>(out.coords(i, 0)),
                   static_cast<Eigen::Index>(out.coords(i, 1)));
    }
    out.values.push_back(std::move(vt));
  }
  return out;
}

}  // namespace pixphys
