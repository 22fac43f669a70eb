#include "pixphys/stencils.hpp"

#include <utility>
#include <vector>

namespace pixphys::stencils {

Matrix shift(const Matrix& f, int dr, int dc) {
  const Eigen::Index R = f.rows(), C = f.cols();
  Matrix out(R, C);
  const Eigen::Index sr = ((dr % R) + R) % R;
  const Eigen::Index sc = ((dc % C) + C) % C;
  // out(r, c) = f((r + sr) % R, (c + sc) % C), done block-wise.
  out.topLeftCorner(R - sr, C - sc) = f.block(sr, sc, R - sr, C - sc);
  if (sc > 0) out.topRightCorner(R - sr, sc) = f.block(sr, 0, R - sr, sc);
  if (sr > 0) out.bottomLeftCorner(sr, C - sc) = f.block(0, sc, sr, C - sc);
  if (sr > 0 && sc > 0) out.bottomRightCorner(sr, sc) = f.block(0, 0, sr, sc);
  return out;
}

Matrix d_dx(const Matrix& f, double dx) {
  return (shift(f, 0, +1) - shift(f, 0, -1)) / (2.0 * dx);
}

Matrix d_dy(const Matrix& f, double dy) {
  return (shift(f, +1, 0) - shift(f, -1, 0)) / (2.0 * dy);
}

Matrix d2_dx2(const Matrix& f, double dx) {
  return (shift(f, 0, +1) - 2.0 * f + shift(f, 0, -1)) / (dx * dx);
}

Matrix d2_dy2(const Matrix& f, double dy) {
  return (shift(f, +1, 0) - 2.0 * f + shift(f, -1, 0)) / (dy * dy);
}

Matrix laplacian(const Matrix& f, double dx, double dy) {
  return d2_dx2(f, dx) + d2_dy2(f, dy);
}

Matrix biharmonic(const Matrix& f, double dx, double dy) {
  // Direct 13-point form of Dxx^2 + 2 Dxx Dyy + Dyy^2; reduces to the
  // classical [20, -8, 2, 1]/h^4 pattern on square grids.
  const double ix4 = 1.0 / (dx * dx * dx * dx);
  const double iy4 = 1.0 / (dy * dy * dy * dy);
  const double ixy = 1.0 / (dx * dx * dy * dy);
  Matrix out = (6.0 * ix4 + 6.0 * iy4 + 8.0 * ixy) * f;
  out += (-4.0 * ix4 - 4.0 * ixy) * (shift(f, 0, +1) + shift(f, 0, -1));
  out += (-4.0 * iy4 - 4.0 * ixy) * (shift(f, +1, 0) + shift(f, -1, 0));
  out += ix4 * (shift(f, 0, +2) + shift(f, 0, -2));
  out += iy4 * (shift(f, +2, 0) + shift(f, -2, 0));
  out += (2.0 * ixy) *
         (shift(f, +1, +1) + shift(f, +1, -1) + shift(f, -1, +1) + shift(f, -1, -1));
  return out;
}

Matrix apply_named_stencil(const std::string& feature, const std::vector<Matrix>& channels,
                           const std::vector<std::string>& channel_names, const GridSpec& grid) {
  auto channel = [&](const std::string& name) -> const Matrix& {
    for (std::size_t i = 0; i < channel_names.size(); ++i)
      if (channel_names[i] == name) return channels[i];
    throw std::invalid_argument("stencil feature '" + feature + "': unknown channel '" + name +
                                "'");
  };

  for (std::size_t i = 0; i < channel_names.size(); ++i)
    if (channel_names[i] == feature) return channels[i];

  const std::string bih = "\xce\x94\xc2\xb2";  // Δ²
  const std::string lap = "\xce\x94";          // Δ
  if (feature.rfind(bih, 0) == 0) {
    if (grid.rows < 5 || grid.cols < 5)
      throw std::invalid_argument("stencil feature '" + feature + "': grid too small (need 5x5)");
    return biharmonic(channel(feature.substr(bih.size())), grid);
  }
  if (feature.rfind(lap, 0) == 0) return laplacian(channel(feature.substr(lap.size())), grid);

  const std::vector<std::pair<std::string, int>> suffixes = {
      {"_xx", 2}, {"_yy", 3}, {"_x", 0}, {"_y", 1}};
  for (const auto& [suffix, which] : suffixes) {
    if (feature.size() > suffix.size() &&
        feature.compare(feature.size() - suffix.size(), suffix.size(), suffix) == 0) {
      const Matrix& ch = channel(feature.substr(0, feature.size() - suffix.size()));
      switch (which) {
        case 0: return d_dx(ch, grid.dx);
        case 1: return d_dy(ch, grid.dy);
        case 2: return d2_dx2(ch, grid.dx);
        default: return d2_dy2(ch, grid.dy);
      }
    }
  }
  throw std::invalid_argument("unknown stencil feature '" + feature + "'");
}

}  // namespace pixphys::stencils
