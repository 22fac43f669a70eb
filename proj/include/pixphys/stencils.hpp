#pragma once

// Central-difference stencils on periodic grids. Convention: column index is
// x, row index is y, so f(r, c) samples u(x = c*dx, y = r*dy).

#include "pixphys/types.hpp"

namespace pixphys::stencils {

/// Cyclic shift: result(r, c) = f(wrap(r + dr), wrap(c + dc)).
Matrix shift(const Matrix& f, int dr, int dc);

/// First derivatives, [-1, 0, 1] / (2h), periodic wrap.
Matrix d_dx(const Matrix& f, double dx);
Matrix d_dy(const Matrix& f, double dy);

/// Second derivatives, [1, -2, 1] / h^2.
Matrix d2_dx2(const Matrix& f, double dx);
Matrix d2_dy2(const Matrix& f, double dy);

/// Five-point Laplacian (d2/dx2 + d2/dy2); reduces to [1,1,-4,1,1]/dx^2 on
/// square grids.
Matrix laplacian(const Matrix& f, double dx, double dy);

/// Biharmonic operator via the direct 13-point stencil; agrees with applying
/// the 5-point Laplacian twice up to rounding.
Matrix biharmonic(const Matrix& f, double dx, double dy);

inline Matrix laplacian(const Matrix& f, const GridSpec& g) { return laplacian(f, g.dx, g.dy); }
inline Matrix biharmonic(const Matrix& f, const GridSpec& g) { return biharmonic(f, g.dx, g.dy); }

/// Applies a named feature to the matching channel: "u" passes the channel
/// through, "u_x"/"u_y"/"u_xx"/"u_yy" are axis derivatives, "Δu" the
/// Laplacian, "Δ²u" the biharmonic. Unknown names or channels raise.
Matrix apply_named_stencil(const std::string& feature, const std::vector<Matrix>& channels,
                           const std::vector<std::string>& channel_names, const GridSpec& grid);

}  // namespace pixphys::stencils
