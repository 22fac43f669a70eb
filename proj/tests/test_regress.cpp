#include "pixphys/regress.hpp"

#include "pixphys/stencils.hpp"

#include <doctest.h>

#include <cmath>
#include <random>
#include <set>

using namespace pixphys;

namespace {

TrajectorySeries linear_fixture(Eigen::Index steps = 2500, double dt = 0.01) {
  SystemSpec s = builtin_system("linear");
  return integrate_ode(s, s.initial_state, dt, steps);
}

Matrix random_states(int n, int d, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> g(0.0, 1.0);
  Matrix z(n, d);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < d; ++j) z(i, j) = g(rng);
  return z;
}

}  // namespace

TEST_CASE("central differences: exactness and Taylor bound") {
  SUBCASE("constant trajectory gives zero derivative") {
    TrajectorySeries z;
    z.times = uniform_times(0.0, 0.1, 10);
    z.states = Matrix::Constant(10, 2, 3.0);
    Matrix dz = central_difference(z);
    CHECK(dz.rows() == 8);
    CHECK(dz.cwiseAbs().maxCoeff() == 0.0);
  }

  SUBCASE("t^2 recovered exactly at interior samples") {
    TrajectorySeries z;
    const double dt = 0.1;
    z.times = uniform_times(0.0, dt, 20);
    z.states.resize(20, 1);
    for (int i = 0; i < 20; ++i) z.states(i, 0) = z.times(i) * z.times(i);
    Matrix dz = central_difference(z);
    for (Eigen::Index k = 0; k < dz.rows(); ++k)
      CHECK(dz(k, 0) == doctest::Approx(2.0 * z.times(k + 1)).epsilon(1e-12));
  }

  SUBCASE("sin(t) within the third-derivative Taylor bound") {
    TrajectorySeries z;
    const double dt = 0.01;
    z.times = uniform_times(0.0, dt, 500);
    z.states.resize(500, 1);
    for (int i = 0; i < 500; ++i) z.states(i, 0) = std::sin(z.times(i));
    Matrix dz = central_difference(z);
    double worst = 0.0;
    for (Eigen::Index k = 0; k < dz.rows(); ++k)
      worst = std::max(worst, std::abs(dz(k, 0) - std::cos(z.times(k + 1))));
    CHECK(worst <= dt * dt / 6.0 + 1e-12);
  }

  SUBCASE("too few samples rejected") {
    TrajectorySeries z;
    z.times = uniform_times(0.0, 0.1, 2);
    z.states = Matrix::Zero(2, 1);
    CHECK_THROWS_AS(central_difference(z), std::invalid_argument);
  }
}

TEST_CASE("canonical library ordering") {
  SUBCASE("d = 2, degree 2") {
    LibrarySpec spec = ode_library(2, 2);
    CHECK(feature_names(spec) ==
          std::vector<std::string>{"1", "z1", "z2", "z1^2", "z1*z2", "z2^2"});
  }

  SUBCASE("d = 3, degree 3 has C(6,3) = 20 columns") {
    LibrarySpec spec = ode_library(3, 3);
    const auto names = feature_names(spec);
    CHECK(names.size() == 20);
    CHECK(std::set<std::string>(names.begin(), names.end()).size() == 20);
    CHECK(names[0] == "1");
    CHECK(names[4] == "z1^2");  // degree-2 block starts after 1, z1, z2, z3
  }

  SUBCASE("trig and exp follow the polynomial block in declaration order") {
    LibrarySpec spec = ode_library(2, 1, true, true);
    CHECK(feature_names(spec) == std::vector<std::string>{"1", "z1", "z2", "sin(z1)", "sin(z2)",
                                                          "cos(z1)", "cos(z2)", "exp(z1)",
                                                          "exp(z2)"});
  }

  SUBCASE("cross_terms off keeps pure powers only") {
    LibrarySpec spec = ode_library(2, 3);
    spec.cross_terms = false;
    CHECK(feature_names(spec) ==
          std::vector<std::string>{"1", "z1", "z2", "z1^2", "z2^2", "z1^3", "z2^3"});
  }

  SUBCASE("operator columns multiply monomials, declaration order") {
    LibrarySpec spec;
    spec.poly_degree = 2;
    spec.var_names = {"u", "v"};
    spec.custom = {"Δu", "Δv"};
    spec.op_product_degree = 1;
    const auto names = feature_names(spec);
    const std::vector<std::string> tail(names.end() - 6, names.end());
    CHECK(tail == std::vector<std::string>{"Δu", "u*Δu", "v*Δu", "Δv", "u*Δv", "v*Δv"});
  }

  SUBCASE("empty feature family rejected") {
    LibrarySpec spec;
    spec.poly_degree = 0;
    spec.var_names = {"z1"};
    CHECK_THROWS_AS(spec.validate(), std::invalid_argument);
  }
}

TEST_CASE("library evaluation at the origin") {
  LibrarySpec spec = ode_library(2, 3, true);
  CandidateLibrary lib = build_library(Matrix::Zero(1, 2), spec);
  REQUIRE(lib.matrix.rows() == 1);
  for (std::size_t i = 0; i < lib.names.size(); ++i) {
    const double want = lib.names[i] == "1" || lib.names[i].rfind("cos", 0) == 0 ? 1.0 : 0.0;
    CHECK_MESSAGE(lib.matrix(0, static_cast<Eigen::Index>(i)) == want, lib.names[i]);
  }
}

TEST_CASE("feature overflow raises an error naming the feature") {
  LibrarySpec spec = ode_library(1, 1, false, true);
  Matrix z(1, 1);
  z(0, 0) = 1e4;
  CHECK_THROWS_WITH_AS(build_library(z, spec),
                       "build_library: feature 'exp(z1)' overflowed (non-finite column)",
                       std::runtime_error);
}

TEST_CASE("stlsq recovers an exactly representable 1-sparse target") {
  Matrix z = random_states(200, 2, 1);
  LibrarySpec spec = ode_library(2, 2);
  CandidateLibrary lib = build_library(z, spec);

  Matrix dz = 2.0 * lib.matrix.col(1);  // 2*z1
  SparseModel model = stlsq(lib, dz, 0.1);
  CHECK(model.support(0) == std::vector<int>{1});
  CHECK(model.xi(1, 0) == doctest::Approx(2.0).epsilon(1e-10));
  CHECK_FALSE(model.empty_support);
}

TEST_CASE("stlsq with lambda 0 coincides with plain least squares") {
  Matrix z = random_states(300, 2, 2);
  LibrarySpec spec = ode_library(2, 2);
  CandidateLibrary lib = build_library(z, spec);
  Matrix dz = random_states(300, 1, 3);

  SparseModel model = stlsq(lib, dz, 0.0);
  Vector direct = lib.matrix.colPivHouseholderQr().solve(dz.col(0));
  CHECK((model.xi.col(0) - direct).cwiseAbs().maxCoeff() < 1e-10);
}

TEST_CASE("stlsq on the noise-free linear fixture: exact support, tight coefficients") {
  TrajectorySeries tr = linear_fixture();
  Matrix dz = central_difference(tr);
  Matrix z_interior = tr.states.middleRows(1, tr.samples() - 2);

  LibrarySpec spec = ode_library(2, 3);
  CandidateLibrary lib = build_library(z_interior, spec);
  SparseModel model = stlsq(lib, dz, 0.05);

  CHECK(model.support(0) == std::vector<int>{1, 2});  // z1, z2
  CHECK(model.support(1) == std::vector<int>{1, 2});
  CHECK(model.xi(1, 0) == doctest::Approx(-0.1).epsilon(0.1));   // within 1e-2 absolute
  CHECK(std::abs(model.xi(1, 0) - -0.1) < 1e-2);
  CHECK(std::abs(model.xi(2, 0) - 2.0) < 1e-2);
  CHECK(std::abs(model.xi(1, 1) - -2.0) < 1e-2);
  CHECK(std::abs(model.xi(2, 1) - -0.1) < 1e-2);
}

TEST_CASE("stlsq is idempotent on its own support") {
  TrajectorySeries tr = linear_fixture(800);
  Matrix dz = central_difference(tr);
  Matrix z_interior = tr.states.middleRows(1, tr.samples() - 2);
  LibrarySpec spec = ode_library(2, 3);
  CandidateLibrary lib = build_library(z_interior, spec);

  SparseModel a = stlsq(lib, dz, 0.05);
  SparseModel b = stlsq(lib, dz, 0.05);
  CHECK(a.xi == b.xi);

  // Refit restricted to the discovered support reproduces the coefficients.
  for (int j = 0; j < 2; ++j) {
    const auto sup = a.support(j);
    Matrix active(lib.matrix.rows(), static_cast<Eigen::Index>(sup.size()));
    for (std::size_t i = 0; i < sup.size(); ++i)
      active.col(static_cast<Eigen::Index>(i)) = lib.matrix.col(sup[i]);
    Vector w = active.colPivHouseholderQr().solve(dz.col(j));
    for (std::size_t i = 0; i < sup.size(); ++i)
      CHECK(w(static_cast<Eigen::Index>(i)) ==
            doctest::Approx(a.xi(sup[i], j)).epsilon(1e-10));
  }
}

TEST_CASE("support shrinks monotonically in lambda on the linear fixture") {
  TrajectorySeries tr = linear_fixture(1000);
  Matrix dz = central_difference(tr);
  Matrix z_interior = tr.states.middleRows(1, tr.samples() - 2);
  LibrarySpec spec = ode_library(2, 3);
  CandidateLibrary lib = build_library(z_interior, spec);

  const std::vector<double> ladder = {0.02, 0.05, 0.1, 0.2, 0.5};
  for (int j = 0; j < 2; ++j) {
    std::vector<int> prev;
    bool first = true;
    for (double lam : ladder) {
      const auto sup = stlsq(lib, dz, lam).support(j);
      if (!first)
        for (int f : sup) CHECK(std::find(prev.begin(), prev.end(), f) != prev.end());
      prev = sup;
      first = false;
    }
  }
}

TEST_CASE("all-eliminated support returns the zero model with the flag set") {
  Matrix z = random_states(100, 2, 4);
  LibrarySpec spec = ode_library(2, 2);
  CandidateLibrary lib = build_library(z, spec);
  Matrix dz = 0.001 * lib.matrix.col(1);

  SparseModel model = stlsq(lib, dz, 10.0);
  CHECK(model.empty_support);
  CHECK(model.xi.cwiseAbs().maxCoeff() == 0.0);
  const auto eq = to_symbolic(model);
  CHECK(eq[0] == "dz1/dt = 0");
}

TEST_CASE("duplicate columns are dropped with a warning") {
  Matrix z = random_states(150, 2, 5);
  LibrarySpec spec = ode_library(2, 1);
  CandidateLibrary lib = build_library(z, spec);
  // Make z2's column an exact copy of z1's.
  lib.matrix.col(2) = lib.matrix.col(1);
  Matrix dz = 3.0 * lib.matrix.col(1);

  SparseModel model = stlsq(lib, dz, 0.1);
  CHECK_FALSE(model.warnings.empty());
  CHECK(model.support(0).size() == 1);
  const int kept = model.support(0)[0];
  CHECK(model.xi(kept, 0) == doctest::Approx(3.0).epsilon(1e-8));
}

TEST_CASE("underdetermined fits carry a warning") {
  Matrix z = random_states(4, 2, 6);
  LibrarySpec spec = ode_library(2, 2);
  CandidateLibrary lib = build_library(z, spec);
  Matrix dz = lib.matrix.col(1);
  SparseModel model = stlsq(lib, dz, 0.0);
  REQUIRE_FALSE(model.warnings.empty());
  CHECK(model.warnings[0].find("underdetermined") != std::string::npos);
}

TEST_CASE("support_oracle enumerates exhaustively") {
  Matrix z = random_states(120, 2, 7);
  LibrarySpec spec = ode_library(2, 2);
  CandidateLibrary lib = build_library(z, spec);

  SUBCASE("k_max = 0 gives the empty support") {
    Matrix dz = lib.matrix.col(3);
    const auto best = support_oracle(lib, dz, 0);
    CHECK(best[0].empty());
  }

  SUBCASE("exact 1-sparse target matches stlsq") {
    Matrix dz = -1.5 * lib.matrix.col(4);
    const auto best = support_oracle(lib, dz, 2);
    CHECK(best[0] == std::vector<int>{4});
    CHECK(best[0] == stlsq(lib, dz, 0.1).support(0));
  }

  SUBCASE("planted 2-sparse Gaussian problems recovered") {
    std::mt19937_64 rng(11);
    Matrix theta = random_states(80, 8, 12);
    CandidateLibrary fake;
    fake.matrix = theta;
    fake.spec = ode_library(8, 1);
    fake.names = feature_names(fake.spec);
    REQUIRE(fake.names.size() >= 8);
    fake.names.resize(8);

    Matrix dz = theta.col(2) - theta.col(5);
    const auto best = support_oracle(fake, dz, 3);
    CHECK(best[0] == std::vector<int>{2, 5});
  }

  SUBCASE("size limits enforced") {
    CHECK_THROWS_AS(support_oracle(lib, lib.matrix.col(0), 5), std::invalid_argument);
    Matrix wide = random_states(40, 13, 13);
    CandidateLibrary fat;
    fat.matrix = wide;
    fat.spec = ode_library(13, 1);
    fat.names.resize(13);
    CHECK_THROWS_AS(support_oracle(fat, wide.col(0), 2), std::invalid_argument);
  }
}

TEST_CASE("stlsq agrees with the oracle on planted sparse problems") {
  std::mt19937_64 rng(21);
  std::normal_distribution<double> noise(0.0, 1e-3);
  int agreements = 0;
  const int cases = 20;
  for (int i = 0; i < cases; ++i) {
    const int F = 10, M = 120;
    Matrix theta = random_states(M, F, 100 + static_cast<std::uint64_t>(i));
    CandidateLibrary lib;
    lib.matrix = theta;
    lib.spec = ode_library(F, 1);
    lib.names = feature_names(lib.spec);
    lib.names.resize(F);

    std::uniform_int_distribution<int> pick(0, F - 1);
    std::set<int> planted;
    while (planted.size() < 3) planted.insert(pick(rng));
    Vector xi_true = Vector::Zero(F);
    for (int f : planted) xi_true(f) = (pick(rng) % 2 == 0) ? 1.0 : -1.0;

    Matrix dz = theta * xi_true;
    for (Eigen::Index r = 0; r < dz.rows(); ++r) dz(r, 0) += noise(rng);

    const auto oracle = support_oracle(lib, dz, 3);
    const auto got = stlsq(lib, dz, 0.2).support(0);
    if (oracle[0] == got && got == std::vector<int>(planted.begin(), planted.end())) ++agreements;
  }
  CHECK(agreements == cases);
}

TEST_CASE("symbolic output formats coefficients canonically") {
  LibrarySpec spec = ode_library(2, 2);
  SparseModel model;
  model.library_spec = spec;
  model.names = feature_names(spec);
  model.state_dim = 2;
  model.xi = Matrix::Zero(6, 2);

  SUBCASE("zero model") {
    const auto eq = to_symbolic(model);
    CHECK(eq == std::vector<std::string>{"dz1/dt = 0", "dz2/dt = 0"});
  }

  SUBCASE("single term") {
    model.xi(2, 0) = 2.0;
    CHECK(to_symbolic(model)[0] == "dz1/dt = 2*z2");
  }

  SUBCASE("signed multi-term with constant") {
    model.xi(0, 0) = 1.0;   // constant
    model.xi(1, 0) = -0.1;  // z1
    model.xi(2, 0) = 2.0;   // z2
    model.xi(4, 1) = -0.5;  // z1*z2
    const auto eq = to_symbolic(model);
    CHECK(eq[0] == "dz1/dt = 1 - 0.1*z1 + 2*z2");
    CHECK(eq[1] == "dz2/dt = -0.5*z1*z2");
  }

  SUBCASE("PDE variable names flow into the left-hand side") {
    LibrarySpec pde;
    pde.poly_degree = 1;
    pde.var_names = {"u"};
    pde.custom = {"Δu"};
    SparseModel m;
    m.library_spec = pde;
    m.names = feature_names(pde);
    m.state_dim = 1;
    m.xi = Matrix::Zero(static_cast<Eigen::Index>(m.names.size()), 1);
    m.xi(2, 0) = 0.1;  // Δu
    CHECK(to_symbolic(m)[0] == "du/dt = 0.1*Δu");
  }
}

TEST_CASE("evaluate_rhs matches hand-built and registered systems") {
  SUBCASE("hand-built rotation") {
    LibrarySpec spec = ode_library(2, 2);
    SparseModel model;
    model.library_spec = spec;
    model.names = feature_names(spec);
    model.state_dim = 2;
    model.xi = Matrix::Zero(6, 2);
    model.xi(2, 0) = -1.0;  // dz1/dt = -z2
    model.xi(1, 1) = 1.0;   // dz2/dt = z1
    Vector out = evaluate_rhs(model, Vector{{1.0, 0.0}});
    CHECK(out(0) == 0.0);
    CHECK(out(1) == 1.0);
  }

  SUBCASE("true linear coefficients reproduce the registered rhs") {
    SystemSpec s = builtin_system("linear");
    SparseModel model = truth_model(*s.truth, ode_library(2, 3));
    Matrix z = random_states(100, 2, 31);
    for (int i = 0; i < 100; ++i) {
      Vector zi = z.row(i).transpose();
      CHECK((evaluate_rhs(model, zi) - s.ode_rhs(zi)).cwiseAbs().maxCoeff() < 1e-12);
    }
  }

  SUBCASE("training-state reproduction within 1e-10 (original units)") {
    TrajectorySeries tr = linear_fixture(600);
    Matrix dz = central_difference(tr);
    Matrix z_interior = tr.states.middleRows(1, tr.samples() - 2);
    LibrarySpec spec = ode_library(2, 3);
    CandidateLibrary lib = build_library(z_interior, spec);
    SparseModel model = stlsq(lib, dz, 0.05);

    Matrix fitted = lib.matrix * model.xi;
    for (Eigen::Index k = 0; k < z_interior.rows(); k += 37) {
      Vector zk = z_interior.row(k).transpose();
      CHECK((evaluate_rhs(model, zk) - fitted.row(k).transpose()).cwiseAbs().maxCoeff() < 1e-10);
    }
  }
}

TEST_CASE("rhs_jacobian matches central differences of evaluate_rhs") {
  LibrarySpec spec = ode_library(3, 3, true, true);
  std::mt19937_64 rng(17);
  std::uniform_real_distribution<double> u(-0.8, 0.8);
  SparseModel model;
  model.library_spec = spec;
  model.names = feature_names(spec);
  model.state_dim = 3;
  model.xi = Matrix(static_cast<Eigen::Index>(model.names.size()), 3);
  for (Eigen::Index i = 0; i < model.xi.size(); ++i) model.xi.data()[i] = u(rng);

  const double h = 1e-6;
  for (int trial = 0; trial < 5; ++trial) {
    Vector z(3);
    for (int i = 0; i < 3; ++i) z(i) = u(rng);
    Matrix jac = rhs_jacobian(model, z);
    for (int j = 0; j < 3; ++j) {
      Vector up = z, down = z;
      up(j) += h;
      down(j) -= h;
      Vector numeric = (evaluate_rhs(model, up) - evaluate_rhs(model, down)) / (2.0 * h);
      CHECK((jac.col(j) - numeric).cwiseAbs().maxCoeff() < 1e-6);
    }
  }

  SUBCASE("operator features with nonzero weight are rejected") {
    LibrarySpec pde = ode_library(1, 2);
    pde.var_names = {"u"};
    pde.custom = {"Δu"};
    SparseModel field_model;
    field_model.library_spec = pde;
    field_model.names = feature_names(pde);
    field_model.state_dim = 1;
    field_model.xi = Matrix::Zero(static_cast<Eigen::Index>(field_model.names.size()), 1);
    field_model.xi(field_model.xi.rows() - 1, 0) = 0.2;
    CHECK_THROWS_AS(rhs_jacobian(field_model, Vector{{0.5}}), std::invalid_argument);
  }
}

TEST_CASE("model JSON round trip is exact") {
  TrajectorySeries tr = linear_fixture(500);
  Matrix dz = central_difference(tr);
  Matrix z_interior = tr.states.middleRows(1, tr.samples() - 2);
  LibrarySpec spec = ode_library(2, 3, true);
  CandidateLibrary lib = build_library(z_interior, spec);
  SparseModel model = stlsq(lib, dz, 0.05);

  nlohmann::json j = model_to_json(model);
  SparseModel back = model_from_json(j);
  CHECK(back.xi == model.xi);
  CHECK(back.names == model.names);
  CHECK(back.lambda_sp == model.lambda_sp);
  CHECK(back.library_spec == model.library_spec);
  CHECK(back.state_dim == model.state_dim);

  nlohmann::json corrupt = j;
  corrupt["names"][0] = "zz";
  CHECK_THROWS_AS(model_from_json(corrupt), std::invalid_argument);
}

TEST_CASE("field right-hand sides from discovered models") {
  SUBCASE("pure diffusion model equals the stencil Laplacian") {
    LibrarySpec spec;
    spec.poly_degree = 1;
    spec.var_names = {"u"};
    spec.custom = {"Δu"};
    SparseModel model;
    model.library_spec = spec;
    model.names = feature_names(spec);
    model.state_dim = 1;
    model.xi = Matrix::Zero(static_cast<Eigen::Index>(model.names.size()), 1);
    model.xi(2, 0) = 0.1;

    GridSpec g{32, 32, 0.5, 0.5};
    Matrix u = random_smooth_field(g, 9);
    FieldRhs rhs = make_model_field_rhs(model, g);
    auto out = rhs({u});
    CHECK((out[0] - 0.1 * stencils::laplacian(u, g)).cwiseAbs().maxCoeff() < 1e-14);
  }

  SUBCASE("lambda-omega truth coefficients reproduce the registered pde rhs") {
    SystemSpec s = builtin_system("lambda_omega");
    LibrarySpec spec;
    spec.poly_degree = 3;
    spec.var_names = {"u", "v"};
    spec.custom = {"Δu", "Δv"};
    SparseModel model = truth_model(*s.truth, spec);

    GridSpec g{32, 32, 0.5, 0.5};
    auto init = s.initial_field(g, 3);
    FieldRhs model_rhs = make_model_field_rhs(model, g);
    FieldRhs true_rhs = make_field_rhs(s, g);
    auto a = model_rhs(init);
    auto b = true_rhs(init);
    REQUIRE(a.size() == 2);
    CHECK((a[0] - b[0]).cwiseAbs().maxCoeff() < 1e-12);
    CHECK((a[1] - b[1]).cwiseAbs().maxCoeff() < 1e-12);
  }

  SUBCASE("axis-derivative operator names resolve") {
    LibrarySpec spec;
    spec.poly_degree = 1;
    spec.var_names = {"u"};
    spec.custom = {"u_x", "u_yy"};
    SparseModel model;
    model.library_spec = spec;
    model.names = feature_names(spec);
    model.state_dim = 1;
    model.xi = Matrix::Zero(static_cast<Eigen::Index>(model.names.size()), 1);
    const auto names = feature_names(spec);
    const int ux = static_cast<int>(std::find(names.begin(), names.end(), "u_x") - names.begin());
    model.xi(ux, 0) = 2.0;

    GridSpec g{24, 24, 0.25, 0.25};
    Matrix u = random_smooth_field(g, 17);
    auto out = make_model_field_rhs(model, g)({u});
    CHECK((out[0] - 2.0 * stencils::d_dx(u, g.dx)).cwiseAbs().maxCoeff() < 1e-14);
  }

  SUBCASE("unknown operator name rejected") {
    LibrarySpec spec;
    spec.poly_degree = 1;
    spec.var_names = {"u"};
    spec.custom = {"∇u"};
    SparseModel model;
    model.library_spec = spec;
    model.names = feature_names(spec);
    model.state_dim = 1;
    model.xi = Matrix::Zero(static_cast<Eigen::Index>(model.names.size()), 1);
    model.xi(2, 0) = 1.0;
    GridSpec g{16, 16, 1.0, 1.0};
    CHECK_THROWS_AS(make_model_field_rhs(model, g)({Matrix::Zero(16, 16)}),
                    std::invalid_argument);
  }
}

TEST_CASE("operator-feature models refuse pointwise evaluation") {
  LibrarySpec spec;
  spec.poly_degree = 1;
  spec.var_names = {"u"};
  spec.custom = {"Δu"};
  SparseModel model;
  model.library_spec = spec;
  model.names = feature_names(spec);
  model.state_dim = 1;
  model.xi = Matrix::Zero(static_cast<Eigen::Index>(model.names.size()), 1);
  model.xi(2, 0) = 0.1;
  CHECK_THROWS_AS(evaluate_rhs(model, Vector{{1.0}}), std::invalid_argument);
}
