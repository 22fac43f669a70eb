#include "pixphys/dynamics.hpp"

#include "pixphys/stencils.hpp"

#include <cmath>
#include <numbers>
#include <random>
#include <sstream>

namespace pixphys {

namespace {

double get_param(const SystemSpec& s, const std::string& key) {
  auto it = s.params.find(key);
  if (it == s.params.end())
    throw std::invalid_argument("system '" + s.name + "': missing parameter '" + key + "'");
  return it->second;
}

void apply_overrides(SystemSpec& s, const std::map<std::string, double>& overrides) {
  for (const auto& [k, v] : overrides) {
    if (!s.params.contains(k))
      throw std::invalid_argument("system '" + s.name + "': unknown parameter '" + k + "'");
    s.params[k] = v;
  }
}

SystemSpec make_linear() {
  SystemSpec s;
  s.name = "linear";
  s.kind = SystemKind::Ode;
  s.state_dim = 2;
  s.params = {{"a", -0.1}, {"b", 2.0}};
  s.recommended_dt = 0.01;
  s.recommended_steps = 1200;
  s.initial_state = Vector{{2.0, 0.0}};
  s.recommended_window = {-2.6, 2.6, -2.6, 2.6};
  return s;
}

SystemSpec make_cubic() {
  SystemSpec s = make_linear();
  s.name = "cubic";
  s.recommended_steps = 1200;
  return s;
}

SystemSpec make_circular() {
  SystemSpec s;
  s.name = "circular";
  s.kind = SystemKind::Ode;
  s.state_dim = 2;
  s.params = {{"omega", 1.0}};
  s.recommended_dt = 0.01;
  s.recommended_steps = 1200;
  s.initial_state = Vector{{1.0, 0.0}};
  s.recommended_window = {-1.4, 1.4, -1.4, 1.4};
  return s;
}

SystemSpec make_vdp() {
  SystemSpec s;
  s.name = "vdp";
  s.kind = SystemKind::Ode;
  s.state_dim = 2;
  s.params = {{"mu", 2.0}};
  s.recommended_dt = 0.01;
  s.recommended_steps = 1200;
  s.initial_state = Vector{{2.0, 0.0}};
  s.recommended_window = {-3.2, 3.2, -4.5, 4.5};
  return s;
}

SystemSpec make_glider() {
  SystemSpec s;
  s.name = "glider";
  s.kind = SystemKind::Ode;
  s.state_dim = 2;
  s.params = {{"drag", 0.05}};
  s.recommended_dt = 0.01;
  s.recommended_steps = 1200;
  s.initial_state = Vector{{1.2, 0.3}};
  s.recommended_window = {0.2, 2.0, -1.2, 1.2};
  return s;
}

SystemSpec make_lambda_omega() {
  SystemSpec s;
  s.name = "lambda_omega";
  s.kind = SystemKind::Pde;
  s.state_dim = 2;
  s.params = {{"d1", 0.1}, {"d2", 0.1}, {"beta", 1.0}};
  s.recommended_dt = 0.05;
  s.recommended_steps = 1100;
  s.channel_names = {"u", "v"};
  s.operator_names = {"Δu", "Δv"};
  s.domain_length = 20.0;
  s.recommended_grid = 64;
  return s;
}

SystemSpec make_brusselator() {
  SystemSpec s;
  s.name = "brusselator";
  s.kind = SystemKind::Pde;
  s.state_dim = 2;
  s.params = {{"a", 1.0}, {"b", 3.0}, {"du", 0.2}, {"dv", 0.2}};
  s.recommended_dt = 0.02;
  s.recommended_steps = 1100;
  s.channel_names = {"u", "v"};
  s.operator_names = {"Δu", "Δv"};
  s.domain_length = 20.0;
  s.recommended_grid = 64;
  return s;
}

SystemSpec make_fhn() {
  SystemSpec s;
  s.name = "fitzhugh_nagumo";
  s.kind = SystemKind::Pde;
  s.state_dim = 2;
  s.params = {{"du", 1.0}, {"dv", 0.5}, {"eps", 0.2}, {"gamma", 0.2}};
  s.recommended_dt = 0.02;
  s.recommended_steps = 1100;
  s.channel_names = {"u", "v"};
  s.operator_names = {"Δu", "Δv"};
  s.domain_length = 40.0;
  s.recommended_grid = 64;
  return s;
}

SystemSpec make_swift_hohenberg() {
  SystemSpec s;
  s.name = "swift_hohenberg";
  s.kind = SystemKind::Pde;
  s.state_dim = 1;
  s.params = {{"r", 0.7}};
  s.recommended_dt = 0.002;
  s.recommended_steps = 300;
  s.channel_names = {"u"};
  s.operator_names = {"Δu", "Δ²u"};
  s.domain_length = 32.0;
  s.recommended_grid = 64;
  return s;
}

void attach_rhs_and_truth(SystemSpec& s) {
  using std::cos;
  using std::sin;
  if (s.name == "linear") {
    const double a = get_param(s, "a"), b = get_param(s, "b");
    s.ode_rhs = [a, b](const Vector& z) {
      return Vector{{a * z(0) + b * z(1), -b * z(0) + a * z(1)}};
    };
    s.truth = TruthSupport{{{"z1", a}, {"z2", b}}, {{"z1", -b}, {"z2", a}}};
  } else if (s.name == "cubic") {
    const double a = get_param(s, "a"), b = get_param(s, "b");
    s.ode_rhs = [a, b](const Vector& z) {
      const double x3 = z(0) * z(0) * z(0), y3 = z(1) * z(1) * z(1);
      return Vector{{a * x3 + b * y3, -b * x3 + a * y3}};
    };
    s.truth = TruthSupport{{{"z1^3", a}, {"z2^3", b}}, {{"z1^3", -b}, {"z2^3", a}}};
  } else if (s.name == "circular") {
    const double w = get_param(s, "omega");
    s.ode_rhs = [w](const Vector& z) { return Vector{{-w * z(1), w * z(0)}}; };
    s.truth = TruthSupport{{{"z2", -w}}, {{"z1", w}}};
  } else if (s.name == "vdp") {
    const double mu = get_param(s, "mu");
    s.ode_rhs = [mu](const Vector& z) {
      return Vector{{z(1), mu * (1.0 - z(0) * z(0)) * z(1) - z(0)}};
    };
    s.truth = TruthSupport{{{"z2", 1.0}}, {{"z1", -1.0}, {"z2", mu}, {"z1^2*z2", -mu}}};
  } else if (s.name == "glider") {
    const double drag = get_param(s, "drag");
    s.ode_rhs = [drag](const Vector& z) {
      const double v = z(0), th = z(1);
      return Vector{{-sin(th) - drag * v * v, v - cos(th) / v}};
    };
    // cos(z2)/z1 is not a library feature; no canonical support is registered.
    std::ostringstream d;
    d << drag;
    s.truth_equations = {"dz1/dt = -sin(z2) - " + d.str() + "*z1^2",
                         "dz2/dt = z1 - cos(z2)/z1"};
  } else if (s.name == "lambda_omega") {
    const double d1 = get_param(s, "d1"), d2 = get_param(s, "d2"), beta = get_param(s, "beta");
    s.pde_rhs = [d1, d2, beta](const std::vector<Matrix>& ch,
                               const std::map<std::string, Matrix>& ops) {
      const Matrix& u = ch[0];
      const Matrix& v = ch[1];
      const Matrix amp2 = (u.array() * u.array() + v.array() * v.array()).matrix();
      Matrix ut = d1 * ops.at("Δu") +
                  ((1.0 - amp2.array()) * u.array() + beta * amp2.array() * v.array()).matrix();
      Matrix vt = d2 * ops.at("Δv") +
                  (-beta * amp2.array() * u.array() + (1.0 - amp2.array()) * v.array()).matrix();
      return std::vector<Matrix>{std::move(ut), std::move(vt)};
    };
    s.truth = TruthSupport{
        {{"u", 1.0}, {"u^3", -1.0}, {"u*v^2", -1.0}, {"u^2*v", beta}, {"v^3", beta}, {"Δu", d1}},
        {{"v", 1.0}, {"u^3", -beta}, {"u*v^2", -beta}, {"u^2*v", -1.0}, {"v^3", -1.0}, {"Δv", d2}}};
    s.initial_field = [](const GridSpec& g, std::uint64_t seed) {
      // Spiral-wave initial condition plus a small seeded perturbation.
      Matrix u(g.rows, g.cols), v(g.rows, g.cols);
      const double Lx = g.cols * g.dx, Ly = g.rows * g.dy;
      for (int r = 0; r < g.rows; ++r) {
        for (int c = 0; c < g.cols; ++c) {
          const double x = c * g.dx - Lx / 2.0, y = r * g.dy - Ly / 2.0;
          const double rad = std::sqrt(x * x + y * y), ang = std::atan2(y, x);
          u(r, c) = std::tanh(rad) * std::cos(ang - rad);
          v(r, c) = std::tanh(rad) * std::sin(ang - rad);
        }
      }
      u += 0.02 * random_smooth_field(g, seed * 2 + 1);
      v += 0.02 * random_smooth_field(g, seed * 2 + 2);
      return std::vector<Matrix>{u, v};
    };
  } else if (s.name == "brusselator") {
    const double a = get_param(s, "a"), b = get_param(s, "b");
    const double du = get_param(s, "du"), dv = get_param(s, "dv");
    s.pde_rhs = [a, b, du, dv](const std::vector<Matrix>& ch,
                               const std::map<std::string, Matrix>& ops) {
      const auto& u = ch[0].array();
      const auto& v = ch[1].array();
      Matrix ut = du * ops.at("Δu") + (a - (b + 1.0) * u + u * u * v).matrix();
      Matrix vt = dv * ops.at("Δv") + (b * u - u * u * v).matrix();
      return std::vector<Matrix>{std::move(ut), std::move(vt)};
    };
    s.truth = TruthSupport{{{"1", a}, {"u", -(b + 1.0)}, {"u^2*v", 1.0}, {"Δu", du}},
                           {{"u", b}, {"u^2*v", -1.0}, {"Δv", dv}}};
    s.initial_field = [a, b](const GridSpec& g, std::uint64_t seed) {
      Matrix u = Matrix::Constant(g.rows, g.cols, a) + 0.3 * random_smooth_field(g, seed * 2 + 1);
      Matrix v =
          Matrix::Constant(g.rows, g.cols, b / a) + 0.3 * random_smooth_field(g, seed * 2 + 2);
      return std::vector<Matrix>{u, v};
    };
  } else if (s.name == "fitzhugh_nagumo") {
    const double du = get_param(s, "du"), dv = get_param(s, "dv");
    const double eps = get_param(s, "eps"), gamma = get_param(s, "gamma");
    s.pde_rhs = [du, dv, eps, gamma](const std::vector<Matrix>& ch,
                                     const std::map<std::string, Matrix>& ops) {
      const auto& u = ch[0].array();
      const auto& v = ch[1].array();
      Matrix ut = du * ops.at("Δu") + (u - u * u * u - v).matrix();
      Matrix vt = dv * ops.at("Δv") + (eps * (u - gamma * v)).matrix();
      return std::vector<Matrix>{std::move(ut), std::move(vt)};
    };
    s.truth = TruthSupport{{{"u", 1.0}, {"u^3", -1.0}, {"v", -1.0}, {"Δu", du}},
                           {{"u", eps}, {"v", -eps * gamma}, {"Δv", dv}}};
    s.initial_field = [](const GridSpec& g, std::uint64_t seed) {
      // Phase-distributed start so spatial structure persists through training.
      Matrix u(g.rows, g.cols), v(g.rows, g.cols);
      const double Lx = g.cols * g.dx, Ly = g.rows * g.dy;
      for (int r = 0; r < g.rows; ++r) {
        for (int c = 0; c < g.cols; ++c) {
          const double x = c * g.dx - Lx / 2.0, y = r * g.dy - Ly / 2.0;
          const double rad = std::sqrt(x * x + y * y), ang = std::atan2(y, x);
          u(r, c) = std::tanh(rad / 2.0) * std::cos(ang - 0.3 * rad);
          v(r, c) = 0.5 * std::tanh(rad / 2.0) * std::sin(ang - 0.3 * rad);
        }
      }
      u += 0.05 * random_smooth_field(g, seed * 2 + 1);
      v += 0.05 * random_smooth_field(g, seed * 2 + 2);
      return std::vector<Matrix>{u, v};
    };
  } else if (s.name == "swift_hohenberg") {
    const double r = get_param(s, "r");
    s.pde_rhs = [r](const std::vector<Matrix>& ch, const std::map<std::string, Matrix>& ops) {
      const auto& u = ch[0].array();
      Matrix ut = (r - 1.0) * ch[0] - 2.0 * ops.at("Δu") - ops.at("Δ²u") - (u * u * u).matrix();
      return std::vector<Matrix>{std::move(ut)};
    };
    s.truth =
        TruthSupport{{{"u", r - 1.0}, {"Δu", -2.0}, {"Δ²u", -1.0}, {"u^3", -1.0}}};
    s.initial_field = [](const GridSpec& g, std::uint64_t seed) {
      Matrix u = 0.4 * random_smooth_field(g, seed * 2 + 1, 5);
      return std::vector<Matrix>{u};
    };
  } else {
    throw std::logic_error("attach_rhs_and_truth: unhandled system " + s.name);
  }
}

}  // namespace

const std::vector<std::string>& system_names() {
  static const std::vector<std::string> names = {
      "linear",       "cubic",       "circular",        "vdp",            "glider",
      "lambda_omega", "brusselator", "fitzhugh_nagumo", "swift_hohenberg"};
  return names;
}

SystemSpec builtin_system(const std::string& name,
                          const std::map<std::string, double>& param_overrides) {
  SystemSpec s;
  if (name == "linear")
    s = make_linear();
  else if (name == "cubic")
    s = make_cubic();
  else if (name == "circular")
    s = make_circular();
  else if (name == "vdp")
    s = make_vdp();
  else if (name == "glider")
    s = make_glider();
  else if (name == "lambda_omega")
    s = make_lambda_omega();
  else if (name == "brusselator")
    s = make_brusselator();
  else if (name == "fitzhugh_nagumo")
    s = make_fhn();
  else if (name == "swift_hohenberg")
    s = make_swift_hohenberg();
  else {
    std::ostringstream msg;
    msg << "unknown system '" << name << "'; valid choices:";
    for (const auto& n : system_names()) msg << " " << n;
    throw std::invalid_argument(msg.str());
  }
  apply_overrides(s, param_overrides);
  attach_rhs_and_truth(s);
  return s;
}

namespace {

bool within_bound(const Vector& z) {
  return z.allFinite() && z.cwiseAbs().maxCoeff() <= kDivergenceBound;
}

bool within_bound(const std::vector<Matrix>& fields) {
  for (const Matrix& f : fields)
    if (!f.allFinite() || f.cwiseAbs().maxCoeff() > kDivergenceBound) return false;
  return true;
}

}  // namespace

TrajectorySeries integrate_ode(const OdeRhs& rhs, const Vector& z0, double dt,
                               Eigen::Index steps, double t0) {
  if (!(dt > 0)) throw std::invalid_argument("integrate_ode: dt must be > 0");
  if (steps < 1) throw std::invalid_argument("integrate_ode: steps must be >= 1");
  if (!z0.allFinite()) throw std::invalid_argument("integrate_ode: non-finite initial state");

  const Eigen::Index d = z0.size();
  Matrix states(steps + 1, d);
  states.row(0) = z0.transpose();
  Vector z = z0;
  std::optional<Eigen::Index> divergence;

  Eigen::Index produced = 1;
  for (Eigen::Index k = 0; k < steps; ++k) {
    const Vector k1 = rhs(z);
    const Vector k2 = rhs(z + 0.5 * dt * k1);
    const Vector k3 = rhs(z + 0.5 * dt * k2);
    const Vector k4 = rhs(z + dt * k3);
    z = z + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
    if (!within_bound(z)) {
      divergence = k + 1;
      break;
    }
    states.row(k + 1) = z.transpose();
    ++produced;
  }

  TrajectorySeries out;
  out.states = states.topRows(produced);
  out.times = uniform_times(t0, dt, produced);
  out.divergence_step = divergence;
  return out;
}

TrajectorySeries integrate_ode(const SystemSpec& spec, const Vector& z0, double dt,
                               Eigen::Index steps) {
  if (spec.kind != SystemKind::Ode)
    throw std::invalid_argument("integrate_ode: system '" + spec.name + "' is not an ODE");
  if (z0.size() != spec.state_dim)
    throw std::invalid_argument("integrate_ode: initial state dimension mismatch");
  return integrate_ode(spec.ode_rhs, z0, dt, steps);
}

FieldSeries integrate_pde(const FieldRhs& rhs, const GridSpec& grid,
                          const std::vector<Matrix>& initial,
                          const std::vector<std::string>& channel_names, double dt,
                          Eigen::Index steps, double t0) {
  if (grid.rows < 16 || grid.cols < 16)
    throw std::invalid_argument("integrate_pde: grid must be at least 16x16");
  if (!(dt > 0)) throw std::invalid_argument("integrate_pde: dt must be > 0");
  if (steps < 1) throw std::invalid_argument("integrate_pde: steps must be >= 1");
  if (initial.size() != channel_names.size())
    throw std::invalid_argument("integrate_pde: channel count mismatch");
  for (const Matrix& f : initial)
    if (f.rows() != grid.rows || f.cols() != grid.cols)
      throw std::invalid_argument("integrate_pde: initial field shape mismatch");

  const std::size_t nch = initial.size();
  FieldSeries out;
  out.grid = grid;
  out.channel_names = channel_names;
  out.channels.resize(nch);
  for (std::size_t c = 0; c < nch; ++c) out.channels[c].push_back(initial[c]);

  auto axpy = [nch](const std::vector<Matrix>& base, double a, const std::vector<Matrix>& dir) {
    std::vector<Matrix> r(nch);
    for (std::size_t c = 0; c < nch; ++c) r[c] = base[c] + a * dir[c];
    return r;
  };

  std::vector<Matrix> z = initial;
  std::optional<Eigen::Index> divergence;
  Eigen::Index produced = 1;
  for (Eigen::Index k = 0; k < steps; ++k) {
    const auto k1 = rhs(z);
    const auto k2 = rhs(axpy(z, 0.5 * dt, k1));
    const auto k3 = rhs(axpy(z, 0.5 * dt, k2));
    const auto k4 = rhs(axpy(z, dt, k3));
    for (std::size_t c = 0; c < nch; ++c)
      z[c] += (dt / 6.0) * (k1[c] + 2.0 * k2[c] + 2.0 * k3[c] + k4[c]);
    if (!within_bound(z)) {
      divergence = k + 1;
      break;
    }
    for (std::size_t c = 0; c < nch; ++c) out.channels[c].push_back(z[c]);
    ++produced;
  }

  out.times = uniform_times(t0, dt, produced);
  out.divergence_step = divergence;
  return out;
}

FieldRhs make_field_rhs(const SystemSpec& spec, const GridSpec& grid) {
  if (spec.kind != SystemKind::Pde)
    throw std::invalid_argument("make_field_rhs: system '" + spec.name + "' is not a PDE");
  return [spec, grid](const std::vector<Matrix>& channels) {
    std::map<std::string, Matrix> ops;
    for (const std::string& opname : spec.operator_names) {
      // Operator names are "<op><channel>", e.g. "Δu" or "Δ²v".
      for (std::size_t c = 0; c < spec.channel_names.size(); ++c) {
        const std::string& ch = spec.channel_names[c];
        if (opname == "Δ" + ch) ops[opname] = stencils::laplacian(channels[c], grid);
        else if (opname == "Δ²" + ch) ops[opname] = stencils::biharmonic(channels[c], grid);
      }
      if (!ops.contains(opname))
        throw std::invalid_argument("make_field_rhs: unsupported operator '" + opname + "'");
    }
    return spec.pde_rhs(channels, ops);
  };
}

FieldSeries integrate_pde(const SystemSpec& spec, const GridSpec& grid,
                          const std::vector<Matrix>& initial, double dt, Eigen::Index steps) {
  return integrate_pde(make_field_rhs(spec, grid), grid, initial, spec.channel_names, dt, steps);
}

Matrix random_smooth_field(const GridSpec& grid, std::uint64_t seed, int max_mode) {
  std::mt19937_64 rng(seed ^ 0x9e3779b97f4a7c15ULL);
  std::uniform_real_distribution<double> unif(-1.0, 1.0);
  Matrix f = Matrix::Zero(grid.rows, grid.cols);
  const double two_pi = 2.0 * std::numbers::pi;
  for (int kx = 0; kx <= max_mode; ++kx) {
    for (int ky = 0; ky <= max_mode; ++ky) {
      if (kx == 0 && ky == 0) continue;
      const double amp = unif(rng) / (1.0 + kx * kx + ky * ky);
      const double phx = two_pi * unif(rng), phy = two_pi * unif(rng);
      for (int r = 0; r < grid.rows; ++r)
        for (int c = 0; c < grid.cols; ++c)
          f(r, c) += amp * std::cos(two_pi * kx * c / grid.cols + phx) *
                     std::cos(two_pi * ky * r / grid.rows + phy);
    }
  }
  const double m = f.cwiseAbs().maxCoeff();
  if (m > 0) f /= m;
  return f;
}

}  // namespace pixphys
