#include "pixphys/types.hpp"

#include <algorithm>
#include <cmath>

namespace pixphys {

namespace {

bool all_finite(const Matrix& m) { return m.allFinite(); }

}  // namespace

void TrajectorySeries::validate() const {
  if (states.rows() != times.size())
    throw std::invalid_argument("TrajectorySeries: states rows != times length");
  if (times.size() < 1) throw std::invalid_argument("TrajectorySeries: empty");
  if (times.size() >= 2) {
    const double step = times(1) - times(0);
    if (!(step > 0)) throw std::invalid_argument("TrajectorySeries: dt must be > 0");
    for (Eigen::Index i = 1; i < times.size(); ++i) {
      const double h = times(i) - times(i - 1);
      if (std::abs(h - step) > 1e-12 * std::max(1.0, std::abs(step)))
        throw std::invalid_argument("TrajectorySeries: non-uniform time spacing");
    }
  }
  if (!all_finite(states)) throw std::invalid_argument("TrajectorySeries: non-finite state entry");
}

const std::vector<Matrix>& FieldSeries::channel(const std::string& name) const {
  for (std::size_t i = 0; i < channel_names.size(); ++i)
    if (channel_names[i] == name) return channels[i];
  throw std::invalid_argument("FieldSeries: no channel named '" + name + "'");
}

bool FieldSeries::has_channel(const std::string& name) const {
  return std::find(channel_names.begin(), channel_names.end(), name) != channel_names.end();
}

FieldSeries FieldSeries::slice(Eigen::Index begin, Eigen::Index n) const {
  if (begin < 0 || begin + n > steps()) throw std::out_of_range("FieldSeries::slice out of range");
  FieldSeries out;
  out.times = times.segment(begin, n);
  out.grid = grid;
  out.channel_names = channel_names;
  out.channels.resize(channels.size());
  for (std::size_t c = 0; c < channels.size(); ++c)
    out.channels[c].assign(channels[c].begin() + begin, channels[c].begin() + begin + n);
  return out;
}

void FieldSeries::validate() const {
  if (grid.rows <= 0 || grid.cols <= 0) throw std::invalid_argument("FieldSeries: empty grid");
  if (!(grid.dx > 0) || !(grid.dy > 0)) throw std::invalid_argument("FieldSeries: spacing must be > 0");
  if (channel_names.size() != channels.size())
    throw std::invalid_argument("FieldSeries: channel name/count mismatch");
  for (std::size_t c = 0; c < channels.size(); ++c) {
    if (static_cast<Eigen::Index>(channels[c].size()) != steps())
      throw std::invalid_argument("FieldSeries: channel '" + channel_names[c] + "' step count mismatch");
    for (const Matrix& f : channels[c]) {
      if (f.rows() != grid.rows || f.cols() != grid.cols)
        throw std::invalid_argument("FieldSeries: field shape mismatch in channel '" + channel_names[c] + "'");
      if (!all_finite(f))
        throw std::invalid_argument("FieldSeries: non-finite entry in channel '" + channel_names[c] + "'");
    }
  }
}

Vector uniform_times(double t0, double dt, Eigen::Index count) {
  Vector t(count);
  for (Eigen::Index i = 0; i < count; ++i) t(i) = t0 + dt * static_cast<double>(i);
  return t;
}

}  // namespace pixphys
