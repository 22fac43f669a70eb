#pragma once

#include "pixphys/regress.hpp"
#include "pixphys/types.hpp"

#include <json.hpp>

#include <filesystem>

namespace pixphys {

/// Pooled coefficient of determination: 1 - SS_res / SS_tot, SS_tot about
/// the per-dimension means of `dz_num`, summed over all dimensions. May be
/// negative. When SS_tot = 0 ("degenerate variance"): 1 if SS_res = 0, else
/// -infinity.
double r2_score(const Matrix& dz_num, const Matrix& dz_model);

/// Number of nonzero coefficients in the model (L0).
int complexity(const SparseModel& model);

/// Long-horizon integration of the discovered law (RK4, divergence-guarded;
/// a truncated result records its divergence_step).
TrajectorySeries extrapolate(const SparseModel& model, const Vector& z0, double dt,
                             Eigen::Index horizon);

/// Root mean square over all entries. Truncated (diverged) inputs are scored
/// over the common valid prefix; otherwise sample counts must match.
double rmse(const TrajectorySeries& pred, const TrajectorySeries& truth);
double rmse(const FieldSeries& pred, const FieldSeries& truth);

/// Valid prediction steps: largest k such that for every step <= k the
/// per-step RMSE, normalized by the truth's global standard deviation, stays
/// below eps. Steps beyond a truncated prediction count as exceeding.
Eigen::Index vps(const TrajectorySeries& pred, const TrajectorySeries& truth, double eps = 0.5);
Eigen::Index vps(const FieldSeries& pred, const FieldSeries& truth, double eps = 0.5);

/// Similarity alignment (orthogonal map including reflections, uniform
/// scale, translation) of row-vector states: aligned = scale * states * map
/// + translation.
struct AlignmentTransform {
  Matrix map;  // d x d orthogonal, det +1 or -1
  double scale = 1.0;
  Vector translation;
  double residual = 0.0;  // post-alignment RMSE against the reference
};

/// Least-squares Procrustes: centers both series, solves for the orthogonal
/// map via SVD of the cross-covariance, then the optimal uniform scale and
/// translation. The reference must have nonzero variance.
std::pair<AlignmentTransform, TrajectorySeries> procrustes_align(const TrajectorySeries& latent,
                                                                 const TrajectorySeries& reference);

/// Discrete vorticity dv/dx - du/dy of a (u, v) field snapshot, using the
/// extraction stencils.
Matrix vorticity(const FieldSeries& fields, Eigen::Index step);

/// RMSE between the vorticities of two (u, v) field series.
double curl_error(const FieldSeries& pred, const FieldSeries& truth);

struct DiagnosticReport {
  int iteration = 0;
  double r2 = 0.0;
  int l0 = 0;
  double rmse = 0.0;
  Eigen::Index vps = 0;
  Eigen::Index horizon = 0;
  std::optional<double> recon_error;          // representation-level runs
  std::optional<Eigen::Index> divergence_step;
  std::vector<std::string> equations;
  std::string phase_portrait_path;
  std::string trajectory_plot_path;
  nlohmann::json tool_params = nlohmann::json::object();

  void validate() const;  // r2 <= 1, l0 >= 0, rmse >= 0, vps in [0, horizon]
};

/// Lossless (full-precision) JSON round trip; schema_version 1. A -infinity
/// r2 is serialized as the string "degenerate variance".
nlohmann::json report_to_json(const DiagnosticReport& report);
DiagnosticReport report_from_json(const nlohmann::json& j);

/// Writes report.json, phase.csv / phase.svg (predicted (z_i, z_j) curves
/// for all dimension pairs), and overlay.csv / overlay.svg (predicted vs
/// truth per dimension over time) into `directory`, recording the artifact
/// paths in the returned report.
DiagnosticReport emit_report(DiagnosticReport report, const TrajectorySeries& pred,
                             const TrajectorySeries& truth,
                             const std::filesystem::path& directory);

}  // namespace pixphys
