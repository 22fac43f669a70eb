#include "pixphys/stencils.hpp"

#include "pixphys/dynamics.hpp"

#include <doctest.h>

#include <cmath>
#include <numbers>

using namespace pixphys;
using namespace pixphys::stencils;

namespace {

constexpr double kTwoPi = 2.0 * std::numbers::pi;

// f(x, y) = sin(2*pi*kx*x/L) * cos(2*pi*ky*y/L) sampled on an N x N grid.
Matrix wave(int n, double length, int kx, int ky) {
  const double h = length / n;
  Matrix f(n, n);
  for (int r = 0; r < n; ++r)
    for (int c = 0; c < n; ++c)
      f(r, c) = std::sin(kTwoPi * kx * c * h / length) * std::cos(kTwoPi * ky * r * h / length);
  return f;
}

double max_abs_err(const Matrix& a, const Matrix& b) { return (a - b).cwiseAbs().maxCoeff(); }

}  // namespace

TEST_CASE("shift wraps periodically in both directions") {
  Matrix f(3, 3);
  f << 1, 2, 3, 4, 5, 6, 7, 8, 9;

  Matrix right = shift(f, 0, +1);  // result(r, c) = f(r, c+1 mod 3)
  CHECK(right(0, 0) == 2);
  CHECK(right(0, 2) == 1);
  CHECK(right(2, 2) == 7);

  Matrix down = shift(f, +1, 0);
  CHECK(down(0, 0) == 4);
  CHECK(down(2, 0) == 1);

  CHECK(max_abs_err(shift(f, -1, 0), shift(f, 2, 0)) == 0.0);
  CHECK(max_abs_err(shift(f, 0, -1), shift(f, 0, 2)) == 0.0);
  CHECK(max_abs_err(shift(f, 3, 3), f) == 0.0);
  CHECK(max_abs_err(shift(f, -4, 7), shift(f, -1, 1)) == 0.0);
}

TEST_CASE("derivatives are exact on constants and vanish appropriately") {
  Matrix f = Matrix::Constant(16, 16, 3.7);
  CHECK(d_dx(f, 0.5).cwiseAbs().maxCoeff() == 0.0);
  CHECK(d_dy(f, 0.5).cwiseAbs().maxCoeff() == 0.0);
  CHECK(laplacian(f, 0.5, 0.5).cwiseAbs().maxCoeff() == 0.0);
  // The direct 13-point form cancels large coefficients, so allow rounding.
  CHECK(biharmonic(f, 0.5, 0.5).cwiseAbs().maxCoeff() < 1e-10);
}

TEST_CASE("d_dx approximates the analytic derivative of a sine wave") {
  const double length = 10.0;
  const int n = 64, k = 2;
  const double h = length / n;
  Matrix f = wave(n, length, k, 0);
  Matrix got = d_dx(f, h);

  const double w = kTwoPi * k / length;
  // Truncation bound for central differences: |err| <= w^3 h^2 / 6.
  Matrix want(n, n);
  for (int r = 0; r < n; ++r)
    for (int c = 0; c < n; ++c) want(r, c) = w * std::cos(w * c * h);
  CHECK(max_abs_err(got, want) < w * w * w * h * h / 6.0 * 1.01);
}

TEST_CASE("first and second differences converge at second order") {
  // Halving h must shrink the max error by ~4x; require >= 3.5 to leave
  // rounding headroom.
  const double length = 10.0;
  const int k = 3;
  const double w = kTwoPi * k / length;

  auto err_at = [&](int n) {
    const double h = length / n;
    Matrix f = wave(n, length, k, k);
    double worst = 0.0;

    Matrix dx_want(n, n), lap_want(n, n);
    for (int r = 0; r < n; ++r) {
      for (int c = 0; c < n; ++c) {
        const double sx = std::sin(w * c * h), cx = std::cos(w * c * h);
        const double sy = std::sin(w * r * h), cy = std::cos(w * r * h);
        dx_want(r, c) = w * cx * cy;
        lap_want(r, c) = -2.0 * w * w * sx * cy;
      }
    }
    worst = std::max(worst, max_abs_err(d_dx(f, h), dx_want));
    worst = std::max(worst, max_abs_err(laplacian(f, h, h), lap_want));
    return worst;
  };

  const double coarse = err_at(32), fine = err_at(64);
  CHECK(coarse / fine >= 3.5);
  CHECK(coarse / fine <= 4.5);
}

TEST_CASE("biharmonic stencil equals the Laplacian applied twice") {
  GridSpec g{48, 40, 0.31, 0.27};
  Matrix f = random_smooth_field(g, 7);
  Matrix direct = biharmonic(f, g.dx, g.dy);
  Matrix composed = laplacian(laplacian(f, g.dx, g.dy), g.dx, g.dy);
  CHECK(max_abs_err(direct, composed) < 1e-10);
}

TEST_CASE("anisotropic spacing is honored") {
  const double lx = 8.0, ly = 4.0;
  const int n = 64, kx = 1, ky = 3;
  const double dx = lx / n, dy = ly / n;
  const double wx = kTwoPi * kx / lx, wy = kTwoPi * ky / ly;

  Matrix f(n, n);
  for (int r = 0; r < n; ++r)
    for (int c = 0; c < n; ++c) f(r, c) = std::sin(wx * c * dx) * std::sin(wy * r * dy);

  Matrix lap = laplacian(f, dx, dy);
  Matrix want = -(wx * wx + wy * wy) * f;
  CHECK(max_abs_err(lap, want) < 0.25);

  // Swapping the spacings must change the answer (mode numbers differ per
  // axis, so the sampled array is not swap-symmetric).
  Matrix swapped = laplacian(f, dy, dx);
  CHECK(max_abs_err(lap, swapped) > 1.0);
}
