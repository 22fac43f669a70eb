#include "pixphys/evaluate.hpp"

#include "pixphys/stencils.hpp"

#include <Eigen/SVD>

#include <cmath>
#include <fstream>
#include <iomanip>
#include <limits>
#include <sstream>

namespace pixphys {

namespace {

Eigen::Index channel_index(const FieldSeries& f, const std::string& name, const char* what) {
  for (std::size_t c = 0; c < f.channel_names.size(); ++c)
    if (f.channel_names[c] == name) return static_cast<Eigen::Index>(c);
  throw std::invalid_argument(std::string(what) + ": missing channel '" + name + "'");
}

/// Number of leading samples both series can be scored on; lengths may
/// differ only when one of them was truncated by the divergence guard.
template <typename Series>
Eigen::Index common_prefix(const Series& pred, const Series& truth, Eigen::Index pred_len,
                           Eigen::Index truth_len, const char* what) {
  if (pred_len != truth_len && !pred.divergence_step && !truth.divergence_step)
    throw std::invalid_argument(std::string(what) +
                                ": sample count mismatch without divergence");
  return std::min(pred_len, truth_len);
}

void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw std::runtime_error("emit_report: cannot write " + path.string());
  out << text;
  if (!out) throw std::runtime_error("emit_report: write failed for " + path.string());
}

/// Minimal polyline SVG: each series is one path over a shared bounding box.
std::string polyline_svg(const std::vector<std::pair<Matrix, std::string>>& curves,
                         const std::string& title) {
  constexpr double kW = 640, kH = 480, kPad = 40;
  double x_lo = 1e300, x_hi = -1e300, y_lo = 1e300, y_hi = -1e300;
  for (const auto& [xy, color] : curves)
    for (Eigen::Index i = 0; i < xy.rows(); ++i) {
      x_lo = std::min(x_lo, xy(i, 0));
      x_hi = std::max(x_hi, xy(i, 0));
      y_lo = std::min(y_lo, xy(i, 1));
      y_hi = std::max(y_hi, xy(i, 1));
    }
  if (x_hi <= x_lo) x_hi = x_lo + 1.0;
  if (y_hi <= y_lo) y_hi = y_lo + 1.0;

  std::ostringstream svg;
  svg << "<svg xmlns='http://www.w3.org/2000/svg' width='" << kW << "' height='" << kH << "'>\n"
      << "<title>" << title << "</title>\n"
      << "<rect width='100%' height='100%' fill='white'/>\n";
  for (const auto& [xy, color] : curves) {
    svg << "<polyline fill='none' stroke='" << color << "' stroke-width='1' points='";
    for (Eigen::Index i = 0; i < xy.rows(); ++i) {
      const double px = kPad + (xy(i, 0) - x_lo) / (x_hi - x_lo) * (kW - 2 * kPad);
      const double py = kH - kPad - (xy(i, 1) - y_lo) / (y_hi - y_lo) * (kH - 2 * kPad);
      svg << px << "," << py << " ";
    }
    svg << "'/>\n";
  }
  svg << "</svg>\n";
  return svg.str();
}

const char* kCurveColors[] = {"#1f6fb2", "#d1495b", "#3e8e5a", "#8c5aa8",
                              "#c88a2d", "#4a4a4a", "#1fa0a0", "#a85a5a"};

}  // namespace

double r2_score(const Matrix& dz_num, const Matrix& dz_model) {
  if (dz_num.rows() != dz_model.rows() || dz_num.cols() != dz_model.cols())
    throw std::invalid_argument("r2_score: shape mismatch");
  if (dz_num.rows() < 2) throw std::invalid_argument("r2_score: need at least 2 rows");

  const double ss_res = (dz_num - dz_model).squaredNorm();
  const Matrix centered = dz_num.rowwise() - dz_num.colwise().mean();
  const double ss_tot = centered.squaredNorm();
  if (ss_tot == 0.0)
    return ss_res == 0.0 ? 1.0 : -std::numeric_limits<double>::infinity();
  return 1.0 - ss_res / ss_tot;
}

int complexity(const SparseModel& model) {
  int count = 0;
  for (Eigen::Index i = 0; i < model.xi.size(); ++i)
    if (model.xi.data()[i] != 0.0) ++count;
  return count;
}

TrajectorySeries extrapolate(const SparseModel& model, const Vector& z0, double dt,
                             Eigen::Index horizon) {
  return integrate_ode(make_ode_rhs(model), z0, dt, horizon);
}

double rmse(const TrajectorySeries& pred, const TrajectorySeries& truth) {
  if (pred.dim() != truth.dim()) throw std::invalid_argument("rmse: state dimension mismatch");
  const Eigen::Index n = common_prefix(pred, truth, pred.samples(), truth.samples(), "rmse");
  if (n < 1) throw std::invalid_argument("rmse: empty overlap");
  return std::sqrt((pred.states.topRows(n) - truth.states.topRows(n)).squaredNorm() /
                   static_cast<double>(n * pred.dim()));
}

double rmse(const FieldSeries& pred, const FieldSeries& truth) {
  if (pred.channel_names != truth.channel_names || !(pred.grid == truth.grid))
    throw std::invalid_argument("rmse: field layout mismatch");
  const Eigen::Index n = common_prefix(pred, truth, pred.steps(), truth.steps(), "rmse");
  if (n < 1) throw std::invalid_argument("rmse: empty overlap");
  double ss = 0.0;
  for (std::size_t c = 0; c < pred.channels.size(); ++c)
    for (Eigen::Index t = 0; t < n; ++t)
      ss += (pred.channels[c][static_cast<std::size_t>(t)] -
             truth.channels[c][static_cast<std::size_t>(t)])
                .squaredNorm();
  const double count = static_cast<double>(pred.channels.size()) * static_cast<double>(n) *
                       static_cast<double>(pred.grid.rows) * static_cast<double>(pred.grid.cols);
  return std::sqrt(ss / count);
}

Eigen::Index vps(const TrajectorySeries& pred, const TrajectorySeries& truth, double eps) {
  if (pred.dim() != truth.dim()) throw std::invalid_argument("vps: state dimension mismatch");
  if (!(eps > 0.0)) throw std::invalid_argument("vps: eps must be positive");
  const Matrix centered = truth.states.rowwise() - truth.states.colwise().mean();
  const double sigma = std::sqrt(centered.squaredNorm() / static_cast<double>(truth.states.size()));
  const double scale = sigma > 0.0 ? sigma : 1.0;

  const Eigen::Index overlap = std::min(pred.samples(), truth.samples());
  Eigen::Index valid = 0;
  for (Eigen::Index k = 0; k < overlap; ++k) {
    const double step_rmse = std::sqrt((pred.states.row(k) - truth.states.row(k)).squaredNorm() /
                                       static_cast<double>(pred.dim()));
    if (!(step_rmse / scale < eps)) break;
    valid = k;
  }
  return valid;
}

Eigen::Index vps(const FieldSeries& pred, const FieldSeries& truth, double eps) {
  if (pred.channel_names != truth.channel_names || !(pred.grid == truth.grid))
    throw std::invalid_argument("vps: field layout mismatch");
  if (!(eps > 0.0)) throw std::invalid_argument("vps: eps must be positive");

  double mean = 0.0, count = 0.0;
  for (const auto& frames : truth.channels)
    for (const Matrix& f : frames) {
      mean += f.sum();
      count += static_cast<double>(f.size());
    }
  mean /= count;
  double var = 0.0;
  for (const auto& frames : truth.channels)
    for (const Matrix& f : frames) var += (f.array() - mean).square().sum();
  const double sigma = std::sqrt(var / count);
  const double scale = sigma > 0.0 ? sigma : 1.0;

  const Eigen::Index overlap = std::min(pred.steps(), truth.steps());
  const double per_step =
      static_cast<double>(pred.channels.size()) * static_cast<double>(pred.grid.rows) *
      static_cast<double>(pred.grid.cols);
  Eigen::Index valid = 0;
  for (Eigen::Index k = 0; k < overlap; ++k) {
    double ss = 0.0;
    for (std::size_t c = 0; c < pred.channels.size(); ++c)
      ss += (pred.channels[c][static_cast<std::size_t>(k)] -
             truth.channels[c][static_cast<std::size_t>(k)])
                .squaredNorm();
    if (!(std::sqrt(ss / per_step) / scale < eps)) break;
    valid = k;
  }
  return valid;
}

std::pair<AlignmentTransform, TrajectorySeries> procrustes_align(
    const TrajectorySeries& latent, const TrajectorySeries& reference) {
  if (latent.samples() != reference.samples() || latent.dim() != reference.dim())
    throw std::invalid_argument("procrustes_align: shape mismatch");

  const Eigen::RowVectorXd x_mean = latent.states.colwise().mean();
  const Eigen::RowVectorXd y_mean = reference.states.colwise().mean();
  const Matrix xc = latent.states.rowwise() - x_mean;
  const Matrix yc = reference.states.rowwise() - y_mean;
  if (yc.squaredNorm() == 0.0)
    throw std::invalid_argument("procrustes_align: reference has zero variance");
  if (xc.squaredNorm() == 0.0)
    throw std::invalid_argument("procrustes_align: latent input has zero variance");

  Eigen::JacobiSVD<Matrix> svd(xc.transpose() * yc, Eigen::ComputeFullU | Eigen::ComputeFullV);
  AlignmentTransform t;
  t.map = svd.matrixU() * svd.matrixV().transpose();
  t.scale = svd.singularValues().sum() / xc.squaredNorm();
  t.translation = (y_mean - t.scale * x_mean * t.map).transpose();

  TrajectorySeries aligned = latent;
  aligned.states = (t.scale * latent.states * t.map).rowwise() + t.translation.transpose();
  t.residual = std::sqrt((aligned.states - reference.states).squaredNorm() /
                         static_cast<double>(reference.states.size()));
  return {t, std::move(aligned)};
}

Matrix vorticity(const FieldSeries& fields, Eigen::Index step) {
  if (step < 0 || step >= fields.steps())
    throw std::out_of_range("vorticity: step out of range");
  const Eigen::Index u = channel_index(fields, "u", "vorticity");
  const Eigen::Index v = channel_index(fields, "v", "vorticity");
  const auto s = static_cast<std::size_t>(step);
  return stencils::d_dx(fields.channels[static_cast<std::size_t>(v)][s], fields.grid.dx) -
         stencils::d_dy(fields.channels[static_cast<std::size_t>(u)][s], fields.grid.dy);
}

double curl_error(const FieldSeries& pred, const FieldSeries& truth) {
  if (!(pred.grid == truth.grid)) throw std::invalid_argument("curl_error: grid mismatch");
  const Eigen::Index n = common_prefix(pred, truth, pred.steps(), truth.steps(), "curl_error");
  if (n < 1) throw std::invalid_argument("curl_error: empty overlap");
  double ss = 0.0;
  for (Eigen::Index t = 0; t < n; ++t) ss += (vorticity(pred, t) - vorticity(truth, t)).squaredNorm();
  return std::sqrt(ss / (static_cast<double>(n) * pred.grid.rows * pred.grid.cols));
}

void DiagnosticReport::validate() const {
  if (r2 > 1.0) throw std::invalid_argument("DiagnosticReport: r2 > 1");
  if (l0 < 0) throw std::invalid_argument("DiagnosticReport: negative l0");
  if (rmse < 0.0) throw std::invalid_argument("DiagnosticReport: negative rmse");
  if (vps < 0 || vps > horizon)
    throw std::invalid_argument("DiagnosticReport: vps outside [0, horizon]");
}

nlohmann::json report_to_json(const DiagnosticReport& report) {
  nlohmann::json j{{"schema_version", 1},
                   {"iteration", report.iteration},
                   {"l0", report.l0},
                   {"rmse", report.rmse},
                   {"vps", report.vps},
                   {"horizon", report.horizon},
                   {"equations", report.equations},
                   {"phase_portrait_path", report.phase_portrait_path},
                   {"trajectory_plot_path", report.trajectory_plot_path},
                   {"tool_params", report.tool_params}};
  if (std::isinf(report.r2) && report.r2 < 0)
    j["r2"] = "degenerate variance";
  else
    j["r2"] = report.r2;
  j["recon_error"] = report.recon_error ? nlohmann::json(*report.recon_error) : nullptr;
  j["divergence_step"] =
      report.divergence_step ? nlohmann::json(*report.divergence_step) : nullptr;
  return j;
}

DiagnosticReport report_from_json(const nlohmann::json& j) {
  if (j.value("schema_version", 0) != 1)
    throw std::invalid_argument("report_from_json: unsupported schema_version");
  DiagnosticReport r;
  r.iteration = j.at("iteration").get<int>();
  if (j.at("r2").is_string())
    r.r2 = -std::numeric_limits<double>::infinity();
  else
    r.r2 = j.at("r2").get<double>();
  r.l0 = j.at("l0").get<int>();
  r.rmse = j.at("rmse").get<double>();
  r.vps = j.at("vps").get<Eigen::Index>();
  r.horizon = j.at("horizon").get<Eigen::Index>();
  if (!j.at("recon_error").is_null()) r.recon_error = j.at("recon_error").get<double>();
  if (!j.at("divergence_step").is_null())
    r.divergence_step = j.at("divergence_step").get<Eigen::Index>();
  r.equations = j.at("equations").get<std::vector<std::string>>();
  r.phase_portrait_path = j.at("phase_portrait_path").get<std::string>();
  r.trajectory_plot_path = j.at("trajectory_plot_path").get<std::string>();
  r.tool_params = j.at("tool_params");
  return r;
}

DiagnosticReport emit_report(DiagnosticReport report, const TrajectorySeries& pred,
                             const TrajectorySeries& truth,
                             const std::filesystem::path& directory) {
  std::filesystem::create_directories(directory);
  const Eigen::Index d = pred.dim();

  // Phase portrait: predicted (z_i, z_j) curves for all dimension pairs.
  {
    std::ostringstream csv;
    csv << "pair,t,zi,zj\n" << std::setprecision(17);
    std::vector<std::pair<Matrix, std::string>> curves;
    int color = 0;
    for (Eigen::Index i = 0; i < d; ++i)
      for (Eigen::Index j = i + 1; j < d; ++j) {
        Matrix xy(pred.samples(), 2);
        xy.col(0) = pred.states.col(i);
        xy.col(1) = pred.states.col(j);
        for (Eigen::Index k = 0; k < pred.samples(); ++k)
          csv << "z" << (i + 1) << "-z" << (j + 1) << "," << pred.times(k) << "," << xy(k, 0)
              << "," << xy(k, 1) << "\n";
        curves.emplace_back(std::move(xy), kCurveColors[color++ % 8]);
      }
    if (d == 1) {
      Matrix xy(pred.samples(), 2);
      xy.col(0) = pred.times.head(pred.samples());
      xy.col(1) = pred.states.col(0);
      for (Eigen::Index k = 0; k < pred.samples(); ++k)
        csv << "t-z1," << pred.times(k) << "," << xy(k, 0) << "," << xy(k, 1) << "\n";
      curves.emplace_back(std::move(xy), kCurveColors[0]);
    }
    write_text(directory / "phase.csv", csv.str());
    write_text(directory / "phase.svg", polyline_svg(curves, "phase portrait"));
  }

  // Overlay: truth vs prediction per dimension over time.
  {
    std::ostringstream csv;
    csv << "t";
    for (Eigen::Index i = 0; i < d; ++i)
      csv << ",truth_z" << (i + 1) << ",pred_z" << (i + 1);
    csv << "\n" << std::setprecision(17);
    for (Eigen::Index k = 0; k < truth.samples(); ++k) {
      csv << truth.times(k);
      for (Eigen::Index i = 0; i < d; ++i) {
        csv << "," << truth.states(k, i) << ",";
        if (k < pred.samples()) csv << pred.states(k, i);
      }
      csv << "\n";
    }
    std::vector<std::pair<Matrix, std::string>> curves;
    for (Eigen::Index i = 0; i < d; ++i) {
      Matrix t_curve(truth.samples(), 2);
      t_curve.col(0) = truth.times.head(truth.samples());
      t_curve.col(1) = truth.states.col(i);
      curves.emplace_back(std::move(t_curve), kCurveColors[(2 * i) % 8]);
      Matrix p_curve(pred.samples(), 2);
      p_curve.col(0) = pred.times.head(pred.samples());
      p_curve.col(1) = pred.states.col(i);
      curves.emplace_back(std::move(p_curve), kCurveColors[(2 * i + 1) % 8]);
    }
    write_text(directory / "overlay.csv", csv.str());
    write_text(directory / "overlay.svg", polyline_svg(curves, "trajectory overlay"));
  }

  report.phase_portrait_path = (directory / "phase.svg").string();
  report.trajectory_plot_path = (directory / "overlay.svg").string();
  report.validate();
  write_text(directory / "report.json", report_to_json(report).dump(2) + "\n");
  return report;
}

}  // namespace pixphys
