#pragma once

#include "pixphys/types.hpp"

#include <functional>

namespace pixphys {

enum class SystemKind { Ode, Pde };

/// State components larger than this (or non-finite) abort an integration.
inline constexpr double kDivergenceBound = 1e6;

using OdeRhs = std::function<Vector(const Vector&)>;

/// PDE right-hand side: channel fields plus the named spatial-operator fields
/// the system declares (e.g. "Δu"), returning one time-derivative field per
/// channel.
using PdeRhs = std::function<std::vector<Matrix>(const std::vector<Matrix>&,
                                                 const std::map<std::string, Matrix>&)>;

/// One term of a canonical ground-truth equation: library feature name and
/// its coefficient.
struct TruthTerm {
  std::string feature;
  double coeff = 0.0;
};

/// Ground-truth support per output dimension, in canonical library names.
/// Absent when the true law is not representable in the candidate library.
using TruthSupport = std::vector<std::vector<TruthTerm>>;

struct SystemSpec {
  std::string name;
  SystemKind kind = SystemKind::Ode;
  int state_dim = 0;  // ODE: d; PDE: channel count
  std::map<std::string, double> params;

  double recommended_dt = 0.01;
  int recommended_steps = 1200;

  // ODE extras
  OdeRhs ode_rhs;
  Vector initial_state;
  Eigen::Vector4d recommended_window{-2, 2, -2, 2};  // (x_min, x_max, y_min, y_max)

  // PDE extras
  PdeRhs pde_rhs;
  std::vector<std::string> channel_names;
  std::vector<std::string> operator_names;  // spatial operators the rhs consumes
  double domain_length = 20.0;              // square periodic domain [0, L)^2
  int recommended_grid = 64;
  std::function<std::vector<Matrix>(const GridSpec&, std::uint64_t)> initial_field;

  std::optional<TruthSupport> truth;
  std::vector<std::string> truth_equations;
};

/// Names of the built-in systems, ODE cases first.
const std::vector<std::string>& system_names();

/// Canonical parameterization of a built-in system. `param_overrides` replaces
/// individual named parameters before the right-hand side closures are built.
/// Unknown system names raise an error enumerating the valid choices.
SystemSpec builtin_system(const std::string& name,
                          const std::map<std::string, double>& param_overrides = {});

/// Classical fixed-step RK4. Returns steps+1 samples including z0, truncating
/// early (divergence_step set) once any component leaves [-1e6, 1e6] or goes
/// non-finite.
TrajectorySeries integrate_ode(const OdeRhs& rhs, const Vector& z0, double dt,
                               Eigen::Index steps, double t0 = 0.0);
TrajectorySeries integrate_ode(const SystemSpec& spec, const Vector& z0, double dt,
                               Eigen::Index steps);

/// Field right-hand side with spatial operators already folded in (the callee
/// computes whatever stencils it needs from the channel fields).
using FieldRhs = std::function<std::vector<Matrix>(const std::vector<Matrix>&)>;

/// Method-of-lines RK4 on a periodic grid (>= 16x16). Spatial operators use
/// the same stencils as feature extraction. Returns steps+1 field snapshots
/// including the initial one; divergence truncates as in integrate_ode.
FieldSeries integrate_pde(const FieldRhs& rhs, const GridSpec& grid,
                          const std::vector<Matrix>& initial,
                          const std::vector<std::string>& channel_names, double dt,
                          Eigen::Index steps, double t0 = 0.0);
FieldSeries integrate_pde(const SystemSpec& spec, const GridSpec& grid,
                          const std::vector<Matrix>& initial, double dt, Eigen::Index steps);

/// Wraps a PDE system's rhs into a FieldRhs that evaluates the system's
/// declared operator names with the shared stencils.
FieldRhs make_field_rhs(const SystemSpec& spec, const GridSpec& grid);

/// Smooth periodic random field with entries roughly in [-1, 1]; a small
/// number of low-wavenumber Fourier modes with seeded coefficients.
Matrix random_smooth_field(const GridSpec& grid, std::uint64_t seed, int max_mode = 3);

}  // namespace pixphys
