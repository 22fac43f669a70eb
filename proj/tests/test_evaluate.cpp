#include "pixphys/evaluate.hpp"

#include "pixphys/dynamics.hpp"
#include "pixphys/stencils.hpp"

#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <random>

using namespace pixphys;

namespace {

TrajectorySeries series_from(const Matrix& states, double dt = 0.1) {
  TrajectorySeries s;
  s.states = states;
  s.times = uniform_times(0.0, dt, states.rows());
  return s;
}

SparseModel fit_linear_fixture(double lambda_sp = 0.05) {
  SystemSpec sys = builtin_system("linear");
  TrajectorySeries tr = integrate_ode(sys, sys.initial_state, sys.recommended_dt, 600);
  Matrix dz = central_difference(tr);
  Matrix z_interior = tr.states.middleRows(1, tr.samples() - 2);
  CandidateLibrary lib = build_library(z_interior, ode_library(2, 3));
  return stlsq(lib, dz, lambda_sp);
}

FieldSeries rotation_field(int n, double h, int steps = 2) {
  // (u, v) = (-y, x) about the grid center; linear, so stencils are exact on
  // interior points (the periodic wrap is wrong only near the boundary).
  FieldSeries f;
  f.grid = {n, n, h, h};
  f.times = uniform_times(0.0, 1.0, steps);
  f.channel_names = {"u", "v"};
  Matrix u(n, n), v(n, n);
  for (int r = 0; r < n; ++r)
    for (int c = 0; c < n; ++c) {
      const double x = (c - n / 2.0) * h, y = (r - n / 2.0) * h;
      u(r, c) = -y;
      v(r, c) = x;
    }
  f.channels = {std::vector<Matrix>(steps, u), std::vector<Matrix>(steps, v)};
  return f;
}

}  // namespace

TEST_CASE("r2_score definition and invariances") {
  Matrix num(4, 2), model(4, 2);
  num << 1, 2, 3, 4, 5, 6, 7, 8;
  model << 1, 1, 2, 5, 6, 5, 7, 9;
  // SS_res = 6; SS_tot (about column means 4 and 5) = 40.
  CHECK(r2_score(num, model) == doctest::Approx(1.0 - 6.0 / 40.0).epsilon(1e-15));

  CHECK(r2_score(num, num) == 1.0);

  Matrix means = Matrix::Zero(4, 2);
  means.col(0).setConstant(4.0);
  means.col(1).setConstant(5.0);
  CHECK(r2_score(num, means) == doctest::Approx(0.0).epsilon(1e-15));

  SUBCASE("shift and scale invariance") {
    const double shifted =
        r2_score((num.array() + 3.7).matrix(), (model.array() + 3.7).matrix());
    CHECK(shifted == doctest::Approx(0.85).epsilon(1e-12));
    const double scaled = r2_score(-2.5 * num, -2.5 * model);
    CHECK(scaled == doctest::Approx(0.85).epsilon(1e-12));
  }

  SUBCASE("degenerate variance") {
    Matrix flat = Matrix::Constant(4, 2, 1.5);
    CHECK(r2_score(flat, flat) == 1.0);
    CHECK(std::isinf(r2_score(flat, model)));
    CHECK(r2_score(flat, model) < 0.0);
  }

  CHECK_THROWS_AS(r2_score(num, Matrix::Zero(3, 2)), std::invalid_argument);
}

TEST_CASE("complexity counts nonzero coefficients") {
  SparseModel zero;
  zero.xi = Matrix::Zero(6, 2);
  CHECK(complexity(zero) == 0);

  LibrarySpec spec = ode_library(2, 3);
  SystemSpec lin = builtin_system("linear");
  CHECK(complexity(truth_model(*lin.truth, spec)) == 4);
  SystemSpec circ = builtin_system("circular");
  CHECK(complexity(truth_model(*circ.truth, spec)) == 2);
}

TEST_CASE("extrapolate integrates the discovered law") {
  LibrarySpec spec = ode_library(2, 3);

  SUBCASE("zero model stays put") {
    SparseModel zero;
    zero.library_spec = spec;
    zero.names = feature_names(spec);
    zero.state_dim = 2;
    zero.xi = Matrix::Zero(static_cast<Eigen::Index>(zero.names.size()), 2);
    TrajectorySeries out = extrapolate(zero, Vector{{1.0, -2.0}}, 0.01, 50);
    CHECK(out.samples() == 51);
    CHECK((out.states.rowwise() - out.states.row(0)).cwiseAbs().maxCoeff() == 0.0);
  }

  SUBCASE("exact circular coefficients conserve the radius") {
    SystemSpec circ = builtin_system("circular");
    SparseModel model = truth_model(*circ.truth, spec);
    TrajectorySeries out = extrapolate(model, Vector{{1.0, 0.0}}, 0.01, 1000);
    for (Eigen::Index k = 0; k < out.samples(); ++k)
      CHECK(std::abs(out.states.row(k).norm() - 1.0) < 1e-8);
  }

  SUBCASE("discovered linear model extrapolates with R2 >= 0.99 over 1000 steps") {
    SparseModel model = fit_linear_fixture();
    SystemSpec sys = builtin_system("linear");
    TrajectorySeries truth = integrate_ode(sys, sys.initial_state, sys.recommended_dt, 1000);
    TrajectorySeries pred =
        extrapolate(model, sys.initial_state, sys.recommended_dt, 1000);
    REQUIRE(pred.samples() == truth.samples());
    CHECK(r2_score(truth.states, pred.states) >= 0.99);
  }
}

TEST_CASE("rmse over trajectories and fields") {
  Matrix base = Matrix::Random(40, 2);
  TrajectorySeries truth = series_from(base);

  CHECK(rmse(truth, truth) == 0.0);

  TrajectorySeries shifted = series_from((base.array() + 0.25).matrix());
  CHECK(rmse(shifted, truth) == doctest::Approx(0.25).epsilon(1e-12));
  CHECK(rmse(shifted, truth) == rmse(truth, shifted));

  SUBCASE("length mismatch requires a divergence marker") {
    TrajectorySeries shorter = series_from(base.topRows(30));
    CHECK_THROWS_AS(rmse(shorter, truth), std::invalid_argument);
    shorter.divergence_step = 30;
    CHECK(rmse(shorter, truth) == 0.0);  // identical over the valid prefix
  }

  SUBCASE("field overload") {
    GridSpec g{16, 16, 0.5, 0.5};
    FieldSeries a;
    a.grid = g;
    a.times = uniform_times(0.0, 0.1, 3);
    a.channel_names = {"u"};
    a.channels = {{random_smooth_field(g, 1), random_smooth_field(g, 2),
                   random_smooth_field(g, 3)}};
    FieldSeries b = a;
    for (Matrix& m : b.channels[0]) m.array() += 0.1;
    CHECK(rmse(a, a) == 0.0);
    CHECK(rmse(b, a) == doctest::Approx(0.1).epsilon(1e-12));
  }
}

TEST_CASE("vps counts consecutively valid steps") {
  // Truth: unit-variance-ish sinusoid; prediction drifts away linearly.
  const Eigen::Index n = 201;
  Matrix truth_states(n, 1), pred_states(n, 1);
  for (Eigen::Index k = 0; k < n; ++k) {
    truth_states(k, 0) = std::sin(0.1 * k);
    pred_states(k, 0) = truth_states(k, 0) + 0.005 * k;
  }
  TrajectorySeries truth = series_from(truth_states);
  TrajectorySeries pred = series_from(pred_states);

  const Matrix centered = truth_states.rowwise() - truth_states.colwise().mean();
  const double sigma = std::sqrt(centered.squaredNorm() / n);

  CHECK(vps(truth, truth) == n - 1);

  // Error at step k is 0.005 k; crossing happens at k = eps * sigma / 0.005.
  const Eigen::Index expect = static_cast<Eigen::Index>(std::ceil(0.5 * sigma / 0.005)) - 1;
  CHECK(vps(pred, truth) == expect);

  SUBCASE("monotone in eps, saturates at the horizon") {
    CHECK(vps(pred, truth, 0.25) <= vps(pred, truth, 0.5));
    CHECK(vps(pred, truth, 0.5) <= vps(pred, truth, 2.0));
    CHECK(vps(pred, truth, 1e18) == n - 1);
  }

  SUBCASE("immediate failure gives zero") {
    Matrix far = (truth_states.array() + 100.0).matrix();
    CHECK(vps(series_from(far), truth) == 0);
  }

  SUBCASE("truncated predictions cannot exceed their prefix") {
    TrajectorySeries cut = series_from(truth_states.topRows(50));
    cut.divergence_step = 50;
    CHECK(vps(cut, truth) == 49);
  }
}

TEST_CASE("procrustes_align recovers similarity transforms") {
  SystemSpec sys = builtin_system("circular");
  TrajectorySeries ref = integrate_ode(sys, sys.initial_state, 0.05, 200);

  SUBCASE("identity on itself") {
    auto [t, aligned] = procrustes_align(ref, ref);
    CHECK((t.map - Matrix::Identity(2, 2)).cwiseAbs().maxCoeff() < 1e-12);
    CHECK(t.scale == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(t.translation.cwiseAbs().maxCoeff() < 1e-12);
    CHECK(t.residual < 1e-12);
  }

  SUBCASE("undoes rotation + scale + shift") {
    const double c = std::cos(std::numbers::pi / 2), s = std::sin(std::numbers::pi / 2);
    Matrix rot(2, 2);
    rot << c, -s, s, c;
    TrajectorySeries latent = ref;
    latent.states = (3.0 * ref.states * rot).rowwise() + Eigen::RowVector2d(1.0, -2.0);

    auto [t, aligned] = procrustes_align(latent, ref);
    CHECK(t.residual < 1e-10);
    CHECK((aligned.states - ref.states).cwiseAbs().maxCoeff() < 1e-9);
    CHECK((t.map * t.map.transpose() - Matrix::Identity(2, 2)).cwiseAbs().maxCoeff() < 1e-10);
    CHECK(t.scale == doctest::Approx(1.0 / 3.0).epsilon(1e-10));
  }

  SUBCASE("reflections are permitted") {
    TrajectorySeries latent = ref;
    latent.states.col(0) *= -1.0;
    auto [t, aligned] = procrustes_align(latent, ref);
    CHECK(t.residual < 1e-10);
    CHECK(t.map.determinant() == doctest::Approx(-1.0).epsilon(1e-10));
  }

  SUBCASE("residual invariant under pre-applied similarity") {
    // Distort the latent so the residual is nonzero, then transform it.
    TrajectorySeries latent = ref;
    std::mt19937_64 rng(3);
    std::normal_distribution<double> noise(0.0, 0.05);
    for (Eigen::Index i = 0; i < latent.states.size(); ++i)
      latent.states.data()[i] += noise(rng);
    const double base = procrustes_align(latent, ref).first.residual;
    CHECK(base > 1e-3);

    Matrix rot(2, 2);
    const double a = 0.7;
    rot << std::cos(a), -std::sin(a), std::sin(a), std::cos(a);
    TrajectorySeries moved = latent;
    moved.states = (0.4 * latent.states * rot).rowwise() + Eigen::RowVector2d(-5.0, 2.5);
    CHECK(std::abs(procrustes_align(moved, ref).first.residual - base) < 1e-9);
  }

  SUBCASE("degenerate reference rejected") {
    TrajectorySeries flat = series_from(Matrix::Zero(10, 2));
    CHECK_THROWS_AS(procrustes_align(ref.head(10), flat), std::invalid_argument);
  }
}

TEST_CASE("vorticity and curl_error") {
  SUBCASE("rigid rotation has interior vorticity 2") {
    FieldSeries f = rotation_field(32, 0.25);
    Matrix w = vorticity(f, 0);
    for (int r = 2; r < 30; ++r)
      for (int c = 2; c < 30; ++c) CHECK(std::abs(w(r, c) - 2.0) < 1e-10);
    CHECK(curl_error(f, f) == 0.0);
  }

  SUBCASE("missing channel is named") {
    FieldSeries f = rotation_field(16, 0.5);
    f.channel_names = {"u", "w"};
    CHECK_THROWS_WITH_AS(vorticity(f, 0), doctest::Contains("missing channel 'v'"),
                         std::invalid_argument);
  }

  SUBCASE("curl-free perturbations decay at second order") {
    auto perturbed_error = [](int n) {
      const double length = 10.0, k = 2.0 * std::numbers::pi / length, h = length / n;
      FieldSeries truth;
      truth.grid = {n, n, h, h};
      truth.times = uniform_times(0.0, 1.0, 2);
      truth.channel_names = {"u", "v"};
      Matrix u(n, n), v(n, n);
      for (int r = 0; r < n; ++r)
        for (int c = 0; c < n; ++c) {
          u(r, c) = std::sin(k * r * h);  // periodic base flow
          v(r, c) = std::cos(k * c * h);
        }
      truth.channels = {std::vector<Matrix>(2, u), std::vector<Matrix>(2, v)};

      // phi = sin(2kx) cos(ky): grad(phi) is curl-free analytically, and the
      // unequal wavenumbers keep the sampled discrete curl from cancelling.
      FieldSeries pred = truth;
      Matrix du(n, n), dv(n, n);
      for (int r = 0; r < n; ++r)
        for (int c = 0; c < n; ++c) {
          const double x = c * h, y = r * h;
          du(r, c) = 2.0 * k * std::cos(2.0 * k * x) * std::cos(k * y);
          dv(r, c) = -k * std::sin(2.0 * k * x) * std::sin(k * y);
        }
      for (int t = 0; t < 2; ++t) {
        pred.channels[0][static_cast<std::size_t>(t)] += du;
        pred.channels[1][static_cast<std::size_t>(t)] += dv;
      }
      return curl_error(pred, truth);
    };

    const double coarse = perturbed_error(32), fine = perturbed_error(64);
    CHECK(coarse > 1e-6);  // nonzero: discrete curl of a sampled gradient
    CHECK(coarse / fine >= 3.5);
    CHECK(coarse / fine <= 4.5);
  }
}

TEST_CASE("report round trip and artifact emission") {
  DiagnosticReport r;
  r.iteration = 3;
  r.r2 = 0.98765432109876543;
  r.l0 = 4;
  r.rmse = 0.012345678901234567;
  r.vps = 871;
  r.horizon = 1000;
  r.recon_error = 0.25;
  r.divergence_step = 902;
  r.equations = {"dz1/dt = -0.1*z1 + 2*z2", "dz2/dt = -2*z1 - 0.1*z2"};
  r.tool_params = {{"lambda_sp", 0.05}, {"poly_degree", 3}};

  SUBCASE("JSON is lossless") {
    DiagnosticReport back = report_from_json(report_to_json(r));
    CHECK(back.iteration == r.iteration);
    CHECK(back.r2 == r.r2);
    CHECK(back.l0 == r.l0);
    CHECK(back.rmse == r.rmse);
    CHECK(back.vps == r.vps);
    CHECK(back.horizon == r.horizon);
    CHECK(back.recon_error == r.recon_error);
    CHECK(back.divergence_step == r.divergence_step);
    CHECK(back.equations == r.equations);
    CHECK(back.tool_params == r.tool_params);
  }

  SUBCASE("degenerate r2 survives the trip as -infinity") {
    DiagnosticReport d = r;
    d.r2 = -std::numeric_limits<double>::infinity();
    nlohmann::json j = report_to_json(d);
    CHECK(j["r2"] == "degenerate variance");
    CHECK(std::isinf(report_from_json(j).r2));
  }

  SUBCASE("invariants enforced") {
    DiagnosticReport bad = r;
    bad.vps = 1200;
    CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
    bad = r;
    bad.r2 = 1.5;
    CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
  }

  SUBCASE("emit_report writes the artifact set") {
    SystemSpec sys = builtin_system("circular");
    TrajectorySeries truth = integrate_ode(sys, sys.initial_state, 0.01, 400);
    SparseModel model = truth_model(*sys.truth, ode_library(2, 3));
    TrajectorySeries pred = extrapolate(model, sys.initial_state, 0.01, 400);

    DiagnosticReport rep;
    rep.iteration = 0;
    rep.r2 = r2_score(truth.states, pred.states);
    rep.l0 = complexity(model);
    rep.rmse = rmse(pred, truth);
    rep.vps = vps(pred, truth);
    rep.horizon = 400;
    rep.equations = to_symbolic(model);

    const auto dir = std::filesystem::temp_directory_path() / "pixphys_report_test";
    std::filesystem::remove_all(dir);
    DiagnosticReport emitted = emit_report(rep, pred, truth, dir);

    for (const char* name : {"report.json", "phase.csv", "phase.svg", "overlay.csv",
                             "overlay.svg"})
      CHECK(std::filesystem::exists(dir / name));
    CHECK(emitted.phase_portrait_path == (dir / "phase.svg").string());

    // The phase CSV of the circular fixture traces the unit circle.
    std::ifstream csv(dir / "phase.csv");
    std::string line;
    std::getline(csv, line);
    CHECK(line == "pair,t,zi,zj");
    int rows = 0;
    while (std::getline(csv, line)) {
      const auto c1 = line.find(','), c2 = line.find(',', c1 + 1), c3 = line.find(',', c2 + 1);
      const double zi = std::stod(line.substr(c2 + 1, c3 - c2 - 1));
      const double zj = std::stod(line.substr(c3 + 1));
      CHECK(std::abs(std::hypot(zi, zj) - 1.0) < 0.02);
      ++rows;
    }
    CHECK(rows == 401);

    std::ifstream report_file(dir / "report.json");
    DiagnosticReport parsed = report_from_json(nlohmann::json::parse(report_file));
    CHECK(parsed.rmse == emitted.rmse);
    CHECK(parsed.vps == emitted.vps);
    std::filesystem::remove_all(dir);
  }
}
