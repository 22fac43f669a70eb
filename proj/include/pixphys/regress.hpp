#pragma once

#include "pixphys/dynamics.hpp"
#include "pixphys/types.hpp"

#include <json.hpp>

namespace pixphys {

/// Which candidate features to enumerate. `var_names` are the base state
/// variables (z1..zd for trajectories, channel names for fields); `custom`
/// are extra named columns supplied by the caller (stencil-operator channels
/// such as "Δu"), which also multiply monomials up to `op_product_degree`.
struct LibrarySpec {
  int poly_degree = 3;
  bool include_trig = false;
  bool include_exp = false;
  bool cross_terms = true;
  int op_product_degree = 1;
  std::vector<std::string> var_names;
  std::vector<std::string> custom;

  void validate() const;
  bool operator==(const LibrarySpec&) const = default;
};

/// Convenience spec for d-dimensional trajectory states named z1..zd.
LibrarySpec ode_library(int state_dim, int poly_degree = 3, bool include_trig = false,
                        bool include_exp = false);

/// One candidate feature: a monomial over the base variables, optionally
/// multiplied by sin/cos/exp of one variable or by one custom column.
struct Feature {
  enum class Kind { Monomial, Sin, Cos, Exp, Custom };
  std::vector<int> exponents;  // one per base variable
  Kind kind = Kind::Monomial;
  int index = -1;  // variable index (Sin/Cos/Exp) or custom column index

  int degree() const;
};

/// Deterministic canonical ordering: constant first, then monomials by
/// ascending total degree (within a degree, lexicographically by leading
/// variable: z1^2, z1*z2, z2^2), then sin(z1..zd), cos(..), exp(..), then for
/// each custom column in declaration order its monomial products by the same
/// monomial ordering.
std::vector<Feature> enumerate_features(const LibrarySpec& spec);
std::string feature_name(const Feature& f, const LibrarySpec& spec);
std::vector<std::string> feature_names(const LibrarySpec& spec);

/// Evaluated feature columns for M samples.
struct CandidateLibrary {
  std::vector<std::string> names;  // F labels, canonical order
  Matrix matrix;                   // M x F
  LibrarySpec spec;
  std::vector<Feature> features;
};

/// Evaluates the library on base variables Z (M x V) and, when the spec has
/// custom columns, their sampled values (M x C, declaration order). Raises
/// when a column comes out non-finite, naming the offending feature.
CandidateLibrary build_library(const Matrix& Z, const LibrarySpec& spec);
CandidateLibrary build_library(const Matrix& Z, const Matrix& custom_values,
                               const LibrarySpec& spec);

/// Sparse coefficient matrix over a candidate library.
struct SparseModel {
  Matrix xi;                       // F x d
  std::vector<std::string> names;  // F labels
  double lambda_sp = 0.0;
  LibrarySpec library_spec;
  int state_dim = 0;
  bool empty_support = false;            // some output dimension lost every term
  std::vector<std::string> warnings;     // rank drops, underdetermined fits, ...

  Eigen::Index feature_count() const { return xi.rows(); }
  /// Indices of nonzero coefficients for one output dimension, ascending.
  std::vector<int> support(int dim) const;
  void validate() const;
};

/// Sequentially thresholded least squares, independently per output
/// dimension: least squares on the active columns (standardized to unit norm
/// internally, coefficients rescaled back), zero every coefficient with
/// |xi| < lambda_sp in original units, refit, repeat until the support is
/// stable or max_iter passes. When lambda_sp > 0, a final backward pass
/// drops any active term the remaining ones explain within the oracle's
/// near-tie margin (5% + 1e-12 residual growth), so candidates that are
/// collinear on the data manifold (z2 vs z1^2*z2 + z2^3 on a circular
/// orbit) resolve to the sparsest equivalent support instead of splitting
/// one coefficient across the group.
SparseModel stlsq(const CandidateLibrary& theta, const Matrix& dZ, double lambda_sp,
                  int max_iter = 10);

/// Exhaustive least squares over all supports of size <= k_max (F <= 12,
/// k_max <= 4). Returns per-dimension ascending index sets; near-tied
/// residuals (within 5% + 1e-12) favor the smaller, then lexicographically
/// earlier, support.
std::vector<std::vector<int>> support_oracle(const CandidateLibrary& theta, const Matrix& dZ,
                                             int k_max);

/// Equation strings like "dz1/dt = -0.1*z1 + 2*z2", canonical term order,
/// coefficients rounded to `precision` significant digits.
std::vector<std::string> to_symbolic(const SparseModel& model, int precision = 4);

/// Theta(z) * Xi for a single state; only for models without custom
/// (operator) features.
Vector evaluate_rhs(const SparseModel& model, const Vector& z);

/// d x d analytic Jacobian of evaluate_rhs at z.
Matrix rhs_jacobian(const SparseModel& model, const Vector& z);

/// Adapter for dynamics::integrate_ode.
OdeRhs make_ode_rhs(const SparseModel& model);

/// Field-space right-hand side for discovered PDE models: evaluates monomial
/// x operator features on the whole grid with the shared stencils. Custom
/// names must look like "Δu", "Δ²u", "u_x", "u_y", "u_xx", "u_yy" over the
/// model's variable (channel) names.
FieldRhs make_model_field_rhs(const SparseModel& model, const GridSpec& grid);

/// Coefficient matrix of a registered ground-truth support over the given
/// library; every truth feature name must exist in the library.
SparseModel truth_model(const TruthSupport& truth, const LibrarySpec& spec);

/// Structured JSON round trip ({names, xi, lambda_sp, library_spec, ...}).
nlohmann::json model_to_json(const SparseModel& model);
SparseModel model_from_json(const nlohmann::json& j);
nlohmann::json library_spec_to_json(const LibrarySpec& spec);
LibrarySpec library_spec_from_json(const nlohmann::json& j);

/// Interior-sample central differences: row k is
/// (z_{k+2} - z_k) / (2 dt), aligned with state sample k+1; N-2 rows.
Matrix central_difference(const TrajectorySeries& Z);

}  // namespace pixphys
