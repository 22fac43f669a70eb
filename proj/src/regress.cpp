#include "pixphys/regress.hpp"

#include "pixphys/stencils.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <sstream>

namespace pixphys {

namespace {

// Exponent tuples of total degree `deg`, descending-lexicographic (z1^2
// before z1*z2 before z2^2), matching the canonical column order.
void monomials_of_degree(int vars, int deg, bool cross_terms, std::vector<int>& prefix,
                         std::vector<std::vector<int>>& out) {
  if (static_cast<int>(prefix.size()) == vars - 1) {
    prefix.push_back(deg);
    if (cross_terms || std::count_if(prefix.begin(), prefix.end(), [](int e) { return e > 0; }) <= 1)
      out.push_back(prefix);
    prefix.pop_back();
    return;
  }
  for (int e = deg; e >= 0; --e) {
    prefix.push_back(e);
    monomials_of_degree(vars, deg - e, cross_terms, prefix, out);
    prefix.pop_back();
  }
}

std::vector<std::vector<int>> monomial_exponents(int vars, int max_degree, bool cross_terms) {
  std::vector<std::vector<int>> out;
  std::vector<int> prefix;
  for (int deg = 0; deg <= max_degree; ++deg)
    monomials_of_degree(vars, deg, cross_terms, prefix, out);
  return out;
}

std::string monomial_name(const std::vector<int>& exponents,
                          const std::vector<std::string>& vars) {
  std::string name;
  for (std::size_t v = 0; v < exponents.size(); ++v) {
    if (exponents[v] == 0) continue;
    if (!name.empty()) name += "*";
    name += vars[v];
    if (exponents[v] > 1) name += "^" + std::to_string(exponents[v]);
  }
  return name.empty() ? "1" : name;
}

// Least-squares on selected columns with unit-norm standardization;
// coefficients returned in original units. Rank-deficient active sets drop
// the dependent columns (reported via `dropped`).
Vector fit_active(const Matrix& theta, const Vector& b, std::vector<int>& active,
                  std::vector<int>& dropped) {
  while (!active.empty()) {
    const int n = static_cast<int>(active.size());
    Matrix a(theta.rows(), n);
    Vector norms(n);
    for (int i = 0; i < n; ++i) {
      norms(i) = theta.col(active[i]).norm();
      a.col(i) = norms(i) > 0 ? (theta.col(active[i]) / norms(i)).eval() : theta.col(active[i]);
    }

    Eigen::ColPivHouseholderQR<Matrix> qr(a);
    qr.setThreshold(1e-10);
    const int rank = static_cast<int>(qr.rank());
    if (rank == n) {
      Vector w = qr.solve(b);
      Vector coeffs = Vector::Zero(theta.cols());
      for (int i = 0; i < n; ++i) coeffs(active[i]) = norms(i) > 0 ? w(i) / norms(i) : 0.0;
      return coeffs;
    }

    // Pivot columns beyond the numerical rank are linearly dependent on the
    // earlier ones; remove them and refit.
    const auto& perm = qr.colsPermutation().indices();
    std::vector<int> keep;
    std::vector<bool> dependent(static_cast<std::size_t>(n), false);
    for (int i = rank; i < n; ++i) dependent[static_cast<std::size_t>(perm(i))] = true;
    for (int i = 0; i < n; ++i) {
      if (dependent[static_cast<std::size_t>(i)])
        dropped.push_back(active[static_cast<std::size_t>(i)]);
      else
        keep.push_back(active[static_cast<std::size_t>(i)]);
    }
    active = std::move(keep);
  }
  return Vector::Zero(theta.cols());
}

double subset_ssr(const Matrix& theta, const Vector& b, const std::vector<int>& subset) {
  if (subset.empty()) return b.squaredNorm();
  Matrix a(theta.rows(), static_cast<Eigen::Index>(subset.size()));
  for (std::size_t i = 0; i < subset.size(); ++i) a.col(static_cast<Eigen::Index>(i)) = theta.col(subset[i]);
  Vector w = a.colPivHouseholderQr().solve(b);
  return (b - a * w).squaredNorm();
}

/// Data confined to a low-dimensional manifold makes candidate columns
/// collinear (on a circular orbit z2, z1^2*z2 and z2^3 are the same column),
/// and plain least squares then splits one true term across the group where
/// no threshold can prune it. The sparsity objective prefers the sparsest of
/// the residual-equivalent supports, so greedily drop active terms — most
/// complex first — that the remaining ones explain within the same near-tie
/// margin the exhaustive oracle uses.
void eliminate_redundant(const Matrix& theta, const Vector& b, std::vector<int>& active) {
  bool changed = true;
  while (changed && active.size() > 1) {
    changed = false;
    const double cutoff = subset_ssr(theta, b, active) * 1.05 + 1e-12;
    for (auto it = active.rbegin(); it != active.rend(); ++it) {
      std::vector<int> without;
      without.reserve(active.size() - 1);
      for (int f : active)
        if (f != *it) without.push_back(f);
      if (subset_ssr(theta, b, without) <= cutoff) {
        active = std::move(without);
        changed = true;
        break;
      }
    }
  }
}

void combinations(int n, int k, std::vector<int>& prefix, int start,
                  std::vector<std::vector<int>>& out) {
  if (static_cast<int>(prefix.size()) == k) {
    out.push_back(prefix);
    return;
  }
  for (int i = start; i < n; ++i) {
    prefix.push_back(i);
    combinations(n, k, prefix, i + 1, out);
    prefix.pop_back();
  }
}

std::string format_coeff(double value, int precision) {
  std::ostringstream out;
  out << std::setprecision(precision) << value;
  return out.str();
}

}  // namespace

void LibrarySpec::validate() const {
  if (poly_degree < 0) throw std::invalid_argument("LibrarySpec: poly_degree must be >= 0");
  if (op_product_degree < 0)
    throw std::invalid_argument("LibrarySpec: op_product_degree must be >= 0");
  if (var_names.empty()) throw std::invalid_argument("LibrarySpec: var_names must be set");
  if (poly_degree == 0 && !include_trig && !include_exp && custom.empty())
    throw std::invalid_argument("LibrarySpec: at least one feature family must be enabled");
}

LibrarySpec ode_library(int state_dim, int poly_degree, bool include_trig, bool include_exp) {
  LibrarySpec spec;
  spec.poly_degree = poly_degree;
  spec.include_trig = include_trig;
  spec.include_exp = include_exp;
  for (int i = 1; i <= state_dim; ++i) spec.var_names.push_back("z" + std::to_string(i));
  return spec;
}

int Feature::degree() const {
  int sum = 0;
  for (int e : exponents) sum += e;
  return sum;
}

std::vector<Feature> enumerate_features(const LibrarySpec& spec) {
  spec.validate();
  const int vars = static_cast<int>(spec.var_names.size());
  std::vector<Feature> features;

  for (const auto& exps : monomial_exponents(vars, spec.poly_degree, spec.cross_terms))
    features.push_back({exps, Feature::Kind::Monomial, -1});

  const std::vector<int> zero(static_cast<std::size_t>(vars), 0);
  if (spec.include_trig) {
    for (int v = 0; v < vars; ++v) features.push_back({zero, Feature::Kind::Sin, v});
    for (int v = 0; v < vars; ++v) features.push_back({zero, Feature::Kind::Cos, v});
  }
  if (spec.include_exp)
    for (int v = 0; v < vars; ++v) features.push_back({zero, Feature::Kind::Exp, v});

  for (std::size_t c = 0; c < spec.custom.size(); ++c)
    for (const auto& exps : monomial_exponents(vars, spec.op_product_degree, spec.cross_terms))
      features.push_back({exps, Feature::Kind::Custom, static_cast<int>(c)});

  return features;
}

std::string feature_name(const Feature& f, const LibrarySpec& spec) {
  const std::string mono = monomial_name(f.exponents, spec.var_names);
  switch (f.kind) {
    case Feature::Kind::Monomial:
      return mono;
    case Feature::Kind::Sin:
      return "sin(" + spec.var_names[static_cast<std::size_t>(f.index)] + ")";
    case Feature::Kind::Cos:
      return "cos(" + spec.var_names[static_cast<std::size_t>(f.index)] + ")";
    case Feature::Kind::Exp:
      return "exp(" + spec.var_names[static_cast<std::size_t>(f.index)] + ")";
    case Feature::Kind::Custom: {
      const std::string& op = spec.custom[static_cast<std::size_t>(f.index)];
      return mono == "1" ? op : mono + "*" + op;
    }
  }
  throw std::logic_error("feature_name: bad kind");
}

std::vector<std::string> feature_names(const LibrarySpec& spec) {
  std::vector<std::string> names;
  for (const Feature& f : enumerate_features(spec)) names.push_back(feature_name(f, spec));
  return names;
}

CandidateLibrary build_library(const Matrix& Z, const LibrarySpec& spec) {
  return build_library(Z, Matrix(Z.rows(), 0), spec);
}

CandidateLibrary build_library(const Matrix& Z, const Matrix& custom_values,
                               const LibrarySpec& spec) {
  spec.validate();
  if (Z.cols() != static_cast<Eigen::Index>(spec.var_names.size()))
    throw std::invalid_argument("build_library: state column count != var_names");
  if (custom_values.cols() != static_cast<Eigen::Index>(spec.custom.size()))
    throw std::invalid_argument("build_library: custom column count != spec.custom");
  if (!spec.custom.empty() && custom_values.rows() != Z.rows())
    throw std::invalid_argument("build_library: custom row count != state rows");
  if (!Z.allFinite() || !custom_values.allFinite())
    throw std::invalid_argument("build_library: non-finite input");

  CandidateLibrary lib;
  lib.spec = spec;
  lib.features = enumerate_features(spec);
  lib.matrix.resize(Z.rows(), static_cast<Eigen::Index>(lib.features.size()));

  for (std::size_t fidx = 0; fidx < lib.features.size(); ++fidx) {
    const Feature& f = lib.features[fidx];
    Eigen::ArrayXd col = Eigen::ArrayXd::Ones(Z.rows());
    for (std::size_t v = 0; v < f.exponents.size(); ++v)
      for (int e = 0; e < f.exponents[v]; ++e) col *= Z.col(static_cast<Eigen::Index>(v)).array();
    switch (f.kind) {
      case Feature::Kind::Monomial:
        break;
      case Feature::Kind::Sin:
        col *= Z.col(f.index).array().sin();
        break;
      case Feature::Kind::Cos:
        col *= Z.col(f.index).array().cos();
        break;
      case Feature::Kind::Exp:
        col *= Z.col(f.index).array().exp();
        break;
      case Feature::Kind::Custom:
        col *= custom_values.col(f.index).array();
        break;
    }
    if (!col.isFinite().all())
      throw std::runtime_error("build_library: feature '" + feature_name(f, spec) +
                               "' overflowed (non-finite column)");
    lib.matrix.col(static_cast<Eigen::Index>(fidx)) = col.matrix();
    lib.names.push_back(feature_name(f, spec));
  }
  return lib;
}

std::vector<int> SparseModel::support(int dim) const {
  std::vector<int> idx;
  for (Eigen::Index f = 0; f < xi.rows(); ++f)
    if (xi(f, dim) != 0.0) idx.push_back(static_cast<int>(f));
  return idx;
}

void SparseModel::validate() const {
  if (xi.rows() != static_cast<Eigen::Index>(names.size()))
    throw std::invalid_argument("SparseModel: xi rows != names");
  if (xi.cols() != state_dim) throw std::invalid_argument("SparseModel: xi cols != state_dim");
  if (lambda_sp < 0) throw std::invalid_argument("SparseModel: lambda_sp must be >= 0");
  for (Eigen::Index f = 0; f < xi.rows(); ++f)
    for (Eigen::Index j = 0; j < xi.cols(); ++j)
      if (xi(f, j) != 0.0 && std::abs(xi(f, j)) < lambda_sp)
        throw std::invalid_argument("SparseModel: nonzero coefficient below lambda_sp");
}

SparseModel stlsq(const CandidateLibrary& theta, const Matrix& dZ, double lambda_sp,
                  int max_iter) {
  if (theta.matrix.rows() != dZ.rows())
    throw std::invalid_argument("stlsq: row count mismatch between library and derivatives");
  if (theta.matrix.rows() < 1) throw std::invalid_argument("stlsq: empty data");
  if (lambda_sp < 0) throw std::invalid_argument("stlsq: lambda_sp must be >= 0");
  if (max_iter < 1) throw std::invalid_argument("stlsq: max_iter must be >= 1");
  if (!dZ.allFinite()) throw std::invalid_argument("stlsq: non-finite derivatives");

  const Eigen::Index F = theta.matrix.cols();
  const int d = static_cast<int>(dZ.cols());

  SparseModel model;
  model.names = theta.names;
  model.lambda_sp = lambda_sp;
  model.library_spec = theta.spec;
  model.state_dim = d;
  model.xi = Matrix::Zero(F, d);

  if (theta.matrix.rows() < F)
    model.warnings.push_back("underdetermined fit: " + std::to_string(theta.matrix.rows()) +
                             " samples for " + std::to_string(F) + " features");

  for (int j = 0; j < d; ++j) {
    std::vector<int> active;
    for (Eigen::Index f = 0; f < F; ++f)
      if (theta.matrix.col(f).norm() > 0) active.push_back(static_cast<int>(f));

    std::vector<int> dropped;
    Vector coeffs = Vector::Zero(F);
    bool converged = false;
    for (int it = 0; it < max_iter && !active.empty(); ++it) {
      coeffs = fit_active(theta.matrix, dZ.col(j), active, dropped);
      std::vector<int> next;
      for (int f : active)
        if (std::abs(coeffs(f)) >= lambda_sp) next.push_back(f);
      if (next == active) {
        converged = true;
        break;
      }
      active = std::move(next);
    }

    if (!active.empty() && !converged) {
      coeffs = fit_active(theta.matrix, dZ.col(j), active, dropped);
      model.warnings.push_back("dimension " + std::to_string(j + 1) +
                               ": support not converged after " + std::to_string(max_iter) +
                               " iterations");
    }

    // Resolve collinear groups to the sparsest equivalent support; skipped at
    // lambda_sp = 0, which promises plain least squares on all columns.
    if (lambda_sp > 0) {
      for (;;) {
        const std::size_t before = active.size();
        eliminate_redundant(theta.matrix, dZ.col(j), active);
        if (active.size() == before) break;
        coeffs = fit_active(theta.matrix, dZ.col(j), active, dropped);
        std::vector<int> kept;
        for (int f : active)
          if (std::abs(coeffs(f)) >= lambda_sp) kept.push_back(f);
        if (kept == active) break;
        active = std::move(kept);
        if (active.empty()) break;
        coeffs = fit_active(theta.matrix, dZ.col(j), active, dropped);
      }
    }

    for (int f : dropped)
      model.warnings.push_back("dimension " + std::to_string(j + 1) +
                               ": dropped dependent column '" + theta.names[static_cast<std::size_t>(f)] + "'");

    if (active.empty()) {
      model.empty_support = true;
      continue;
    }
    for (int f : active)
      if (std::abs(coeffs(f)) >= lambda_sp) model.xi(f, j) = coeffs(f);
  }

  model.validate();
  return model;
}

std::vector<std::vector<int>> support_oracle(const CandidateLibrary& theta, const Matrix& dZ,
                                             int k_max) {
  const int F = static_cast<int>(theta.matrix.cols());
  if (F > 12) throw std::invalid_argument("support_oracle: F must be <= 12");
  if (k_max > 4) throw std::invalid_argument("support_oracle: k_max must be <= 4");
  if (k_max < 0) throw std::invalid_argument("support_oracle: k_max must be >= 0");
  if (theta.matrix.rows() != dZ.rows())
    throw std::invalid_argument("support_oracle: row count mismatch");

  std::vector<std::vector<int>> subsets;
  std::vector<int> prefix;
  for (int k = 0; k <= k_max; ++k) combinations(F, k, prefix, 0, subsets);

  std::vector<std::vector<int>> best(static_cast<std::size_t>(dZ.cols()));
  for (Eigen::Index j = 0; j < dZ.cols(); ++j) {
    std::vector<double> ssr(subsets.size());
    double min_ssr = std::numeric_limits<double>::infinity();
    for (std::size_t s = 0; s < subsets.size(); ++s) {
      ssr[s] = subset_ssr(theta.matrix, dZ.col(j), subsets[s]);
      min_ssr = std::min(min_ssr, ssr[s]);
    }
    // Subsets are enumerated by ascending size then lexicographic order, so
    // the first one inside the tie band is the canonical winner.
    const double cutoff = min_ssr * 1.05 + 1e-12;
    for (std::size_t s = 0; s < subsets.size(); ++s) {
      if (ssr[s] <= cutoff) {
        best[static_cast<std::size_t>(j)] = subsets[s];
        break;
      }
    }
  }
  return best;
}

std::vector<std::string> to_symbolic(const SparseModel& model, int precision) {
  std::vector<std::string> equations;
  for (int j = 0; j < model.state_dim; ++j) {
    std::string rhs;
    for (Eigen::Index f = 0; f < model.xi.rows(); ++f) {
      const double c = model.xi(f, j);
      if (c == 0.0) continue;
      const std::string mag = format_coeff(std::abs(c), precision);
      const std::string& name = model.names[static_cast<std::size_t>(f)];
      const std::string term = name == "1" ? mag : mag + "*" + name;
      if (rhs.empty())
        rhs = (c < 0 ? "-" : "") + term;
      else
        rhs += (c < 0 ? " - " : " + ") + term;
    }
    if (rhs.empty()) rhs = "0";
    equations.push_back("d" + model.library_spec.var_names[static_cast<std::size_t>(j)] +
                        "/dt = " + rhs);
  }
  return equations;
}

Vector evaluate_rhs(const SparseModel& model, const Vector& z) {
  if (z.size() != static_cast<Eigen::Index>(model.library_spec.var_names.size()))
    throw std::invalid_argument("evaluate_rhs: state dimension mismatch");

  const std::vector<Feature> features = enumerate_features(model.library_spec);
  Vector theta(static_cast<Eigen::Index>(features.size()));
  for (std::size_t i = 0; i < features.size(); ++i) {
    const Feature& f = features[i];
    if (f.kind == Feature::Kind::Custom) {
      bool used = false;
      for (int j = 0; j < model.state_dim; ++j)
        if (model.xi(static_cast<Eigen::Index>(i), j) != 0.0) used = true;
      if (used)
        throw std::invalid_argument(
            "evaluate_rhs: model uses operator features; evaluate on fields instead");
      theta(static_cast<Eigen::Index>(i)) = 0.0;
      continue;
    }
    double value = 1.0;
    for (std::size_t v = 0; v < f.exponents.size(); ++v)
      for (int e = 0; e < f.exponents[v]; ++e) value *= z(static_cast<Eigen::Index>(v));
    if (f.kind == Feature::Kind::Sin) value *= std::sin(z(f.index));
    if (f.kind == Feature::Kind::Cos) value *= std::cos(z(f.index));
    if (f.kind == Feature::Kind::Exp) value *= std::exp(z(f.index));
    theta(static_cast<Eigen::Index>(i)) = value;
  }
  return model.xi.transpose() * theta;
}

Matrix rhs_jacobian(const SparseModel& model, const Vector& z) {
  if (z.size() != static_cast<Eigen::Index>(model.library_spec.var_names.size()))
    throw std::invalid_argument("rhs_jacobian: state dimension mismatch");

  const std::vector<Feature> features = enumerate_features(model.library_spec);
  const Eigen::Index d = z.size();
  Matrix dtheta = Matrix::Zero(static_cast<Eigen::Index>(features.size()), d);
  for (std::size_t i = 0; i < features.size(); ++i) {
    const Feature& f = features[i];
    if (f.kind == Feature::Kind::Custom) {
      for (int j = 0; j < model.state_dim; ++j)
        if (model.xi(static_cast<Eigen::Index>(i), j) != 0.0)
          throw std::invalid_argument(
              "rhs_jacobian: model uses operator features; evaluate on fields instead");
      continue;
    }
    for (Eigen::Index v = 0; v < d; ++v) {
      // Monomial part: e_v * z_v^(e_v - 1) * prod_{w != v} z_w^e_w.
      double mono = static_cast<double>(f.exponents[static_cast<std::size_t>(v)]);
      if (mono != 0.0) {
        for (Eigen::Index w = 0; w < d; ++w) {
          int e = f.exponents[static_cast<std::size_t>(w)];
          if (w == v) --e;
          for (int k = 0; k < e; ++k) mono *= z(w);
        }
      }
      double scalar = 1.0, scalar_grad = 0.0;
      if (f.kind == Feature::Kind::Sin) {
        scalar = std::sin(z(f.index));
        if (v == f.index) scalar_grad = std::cos(z(f.index));
      } else if (f.kind == Feature::Kind::Cos) {
        scalar = std::cos(z(f.index));
        if (v == f.index) scalar_grad = -std::sin(z(f.index));
      } else if (f.kind == Feature::Kind::Exp) {
        scalar = std::exp(z(f.index));
        if (v == f.index) scalar_grad = scalar;
      }
      double mono_value = 1.0;
      for (Eigen::Index w = 0; w < d; ++w)
        for (int k = 0; k < f.exponents[static_cast<std::size_t>(w)]; ++k) mono_value *= z(w);
      dtheta(static_cast<Eigen::Index>(i), v) = mono * scalar + mono_value * scalar_grad;
    }
  }
  return model.xi.transpose() * dtheta;
}

OdeRhs make_ode_rhs(const SparseModel& model) {
  return [model](const Vector& z) { return evaluate_rhs(model, z); };
}

FieldRhs make_model_field_rhs(const SparseModel& model, const GridSpec& grid) {
  const LibrarySpec spec = model.library_spec;
  const std::vector<Feature> features = enumerate_features(spec);
  const Matrix xi = model.xi;

  return [spec, features, xi, grid](const std::vector<Matrix>& channels) {
    if (channels.size() != spec.var_names.size())
      throw std::invalid_argument("model field rhs: channel count mismatch");
    const Eigen::Index R = channels[0].rows(), C = channels[0].cols();

    std::vector<Matrix> ops(spec.custom.size());
    for (std::size_t c = 0; c < spec.custom.size(); ++c)
      ops[c] = stencils::apply_named_stencil(spec.custom[c], channels, spec.var_names, grid);

    std::vector<Matrix> out(spec.var_names.size(), Matrix::Zero(R, C));
    for (std::size_t i = 0; i < features.size(); ++i) {
      bool used = false;
      for (Eigen::Index j = 0; j < xi.cols(); ++j)
        if (xi(static_cast<Eigen::Index>(i), j) != 0.0) used = true;
      if (!used) continue;

      const Feature& f = features[i];
      Eigen::ArrayXXd field = Eigen::ArrayXXd::Ones(R, C);
      for (std::size_t v = 0; v < f.exponents.size(); ++v)
        for (int e = 0; e < f.exponents[v]; ++e) field *= channels[v].array();
      switch (f.kind) {
        case Feature::Kind::Monomial:
          break;
        case Feature::Kind::Sin:
          field *= channels[static_cast<std::size_t>(f.index)].array().sin();
          break;
        case Feature::Kind::Cos:
          field *= channels[static_cast<std::size_t>(f.index)].array().cos();
          break;
        case Feature::Kind::Exp:
          field *= channels[static_cast<std::size_t>(f.index)].array().exp();
          break;
        case Feature::Kind::Custom:
          field *= ops[static_cast<std::size_t>(f.index)].array();
          break;
      }
      for (Eigen::Index j = 0; j < xi.cols(); ++j)
        if (xi(static_cast<Eigen::Index>(i), j) != 0.0)
          out[static_cast<std::size_t>(j)] += xi(static_cast<Eigen::Index>(i), j) * field.matrix();
    }
    return out;
  };
}

SparseModel truth_model(const TruthSupport& truth, const LibrarySpec& spec) {
  SparseModel model;
  model.library_spec = spec;
  model.names = feature_names(spec);
  model.state_dim = static_cast<int>(truth.size());
  model.xi = Matrix::Zero(static_cast<Eigen::Index>(model.names.size()), model.state_dim);
  for (std::size_t j = 0; j < truth.size(); ++j) {
    for (const TruthTerm& term : truth[j]) {
      const auto it = std::find(model.names.begin(), model.names.end(), term.feature);
      if (it == model.names.end())
        throw std::invalid_argument("truth_model: feature '" + term.feature +
                                    "' not in the library");
      model.xi(it - model.names.begin(), static_cast<Eigen::Index>(j)) = term.coeff;
    }
  }
  return model;
}

nlohmann::json library_spec_to_json(const LibrarySpec& spec) {
  return {{"poly_degree", spec.poly_degree},
          {"include_trig", spec.include_trig},
          {"include_exp", spec.include_exp},
          {"cross_terms", spec.cross_terms},
          {"op_product_degree", spec.op_product_degree},
          {"var_names", spec.var_names},
          {"custom", spec.custom}};
}

LibrarySpec library_spec_from_json(const nlohmann::json& j) {
  LibrarySpec spec;
  spec.poly_degree = j.at("poly_degree").get<int>();
  spec.include_trig = j.at("include_trig").get<bool>();
  spec.include_exp = j.at("include_exp").get<bool>();
  spec.cross_terms = j.at("cross_terms").get<bool>();
  spec.op_product_degree = j.at("op_product_degree").get<int>();
  spec.var_names = j.at("var_names").get<std::vector<std::string>>();
  spec.custom = j.at("custom").get<std::vector<std::string>>();
  spec.validate();
  return spec;
}

nlohmann::json model_to_json(const SparseModel& model) {
  model.validate();
  nlohmann::json xi = nlohmann::json::array();
  for (Eigen::Index f = 0; f < model.xi.rows(); ++f) {
    nlohmann::json row = nlohmann::json::array();
    for (Eigen::Index j = 0; j < model.xi.cols(); ++j) row.push_back(model.xi(f, j));
    xi.push_back(std::move(row));
  }
  return {{"names", model.names},
          {"xi", std::move(xi)},
          {"lambda_sp", model.lambda_sp},
          {"state_dim", model.state_dim},
          {"empty_support", model.empty_support},
          {"library_spec", library_spec_to_json(model.library_spec)},
          {"warnings", model.warnings}};
}

SparseModel model_from_json(const nlohmann::json& j) {
  SparseModel model;
  model.library_spec = library_spec_from_json(j.at("library_spec"));
  model.names = j.at("names").get<std::vector<std::string>>();
  if (model.names != feature_names(model.library_spec))
    throw std::invalid_argument("model JSON: names out of sync with library spec");
  model.lambda_sp = j.at("lambda_sp").get<double>();
  model.state_dim = j.at("state_dim").get<int>();
  model.empty_support = j.at("empty_support").get<bool>();
  if (j.contains("warnings")) model.warnings = j.at("warnings").get<std::vector<std::string>>();

  const auto& xi = j.at("xi");
  model.xi.resize(static_cast<Eigen::Index>(model.names.size()), model.state_dim);
  if (xi.size() != model.names.size())
    throw std::invalid_argument("model JSON: xi row count mismatch");
  for (std::size_t f = 0; f < xi.size(); ++f) {
    if (xi[f].size() != static_cast<std::size_t>(model.state_dim))
      throw std::invalid_argument("model JSON: xi column count mismatch");
    for (std::size_t col = 0; col < xi[f].size(); ++col)
      model.xi(static_cast<Eigen::Index>(f), static_cast<Eigen::Index>(col)) =
          xi[f][col].get<double>();
  }
  model.validate();
  return model;
}

Matrix central_difference(const TrajectorySeries& Z) {
  Z.validate();
  if (Z.samples() < 3)
    throw std::invalid_argument("central_difference: need at least 3 samples");
  const double dt = Z.dt();
  const Eigen::Index n = Z.samples() - 2;
  Matrix out(n, Z.dim());
  for (Eigen::Index k = 0; k < n; ++k)
    out.row(k) = (Z.states.row(k + 2) - Z.states.row(k)) / (2.0 * dt);
  return out;
}

}  // namespace pixphys
