#include "pixphys/planner.hpp"

#include "pixphys/dynamics.hpp"
#include "pixphys/sequence_io.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <functional>
#include <limits>
#include <map>
#include <memory>
#include <set>
#include <sstream>
#include <stdexcept>

namespace pixphys {

namespace {

namespace fs = std::filesystem;
using nlohmann::json;

constexpr double kLadderTol = 1e-12;

std::string fmt(double v) {
  std::ostringstream os;
  os << v;
  return os.str();
}

/// Smallest ladder value strictly above `current`, if any.
std::optional<double> next_above(const std::vector<double>& ladder, double current) {
  for (double v : ladder)
    if (v > current + kLadderTol) return v;
  return std::nullopt;
}

/// Largest ladder value strictly below `current` that has not been tried yet.
std::optional<double> largest_untried_below(const std::vector<double>& ladder, double current,
                                            const std::vector<double>& tried) {
  for (auto it = ladder.rbegin(); it != ladder.rend(); ++it) {
    if (*it >= current - kLadderTol) continue;
    const double v = *it;
    const bool used = std::any_of(tried.begin(), tried.end(),
                                  [v](double u) { return std::abs(u - v) < kLadderTol; });
    if (!used) return v;
  }
  return std::nullopt;
}

/// Sparsity thresholds already consumed, from past reports plus the current one.
std::vector<double> tried_lambda_sp(const DiagnosticReport& report, const RunHistory& history) {
  std::vector<double> tried;
  for (const auto& rec : history.iterations)
    if (rec.report.tool_params.contains("lambda_sp"))
      tried.push_back(rec.report.tool_params["lambda_sp"].get<double>());
  if (report.tool_params.contains("lambda_sp"))
    tried.push_back(report.tool_params["lambda_sp"].get<double>());
  return tried;
}

int effective_l0_max(const RunConfig& cfg, int state_dim) {
  if (cfg.l0_max > 0) return cfg.l0_max;
  return cfg.mode == RunMode::Pixel ? 8 * state_dim : 2 + 3 * state_dim;
}

PlanInstruction make_instruction(PlanTarget target, PlanAction action, json params,
                                 std::string rationale) {
  PlanInstruction instr;
  instr.target = target;
  instr.action = action;
  instr.params = std::move(params);
  instr.rationale = std::move(rationale);
  instr.validate();
  return instr;
}

/// Evolving knobs of a run; `fit` closures read it, instructions mutate it.
struct LoopState {
  double lambda_sp = 0.0;
  LibrarySpec spec;
  double lambda_eq = 0.0;                // representation runs only
  std::optional<SparseModel> physics;    // model the encoder is trained against
  bool retrain_encoder = false;          // set when the variable stage must re-run
};

/// Result of one extraction+regression+evaluation pass.
struct StageOutcome {
  SparseModel model;
  DiagnosticReport report;
  TrajectorySeries prediction;  // extrapolation (field runs: channel means)
  TrajectorySeries reference;   // what it is compared against
};

void apply_instruction(const PlanInstruction& instr, const SparseModel& current_model,
                       LoopState& st) {
  st.retrain_encoder = false;
  switch (instr.action) {
    case PlanAction::ReExtractWithPhysics:
      st.lambda_eq = instr.params.at("lambda_eq").get<double>();
      st.physics = current_model;
      st.retrain_encoder = true;
      break;
    case PlanAction::AdjustLambdaEq:
      st.lambda_eq = instr.params.at("lambda_eq").get<double>();
      if (!st.physics) st.physics = current_model;
      st.retrain_encoder = true;
      break;
    case PlanAction::AdjustLambdaSp:
      st.lambda_sp = instr.params.at("lambda_sp").get<double>();
      break;
    case PlanAction::AdjustLibrary:
      if (instr.params.contains("poly_degree"))
        st.spec.poly_degree = instr.params.at("poly_degree").get<int>();
      if (instr.params.contains("include_trig"))
        st.spec.include_trig = instr.params.at("include_trig").get<bool>();
      st.spec.validate();
      break;
    case PlanAction::Accept:
      break;
  }
}

/// Fits a sparse model to a state trajectory and evaluates it by free-running
/// extrapolation against the trajectory itself.
StageOutcome fit_trajectory_model(const TrajectorySeries& Z, const LoopState& st,
                                  const RunConfig& cfg, int iteration) {
  if (Z.samples() < 4)
    throw std::invalid_argument("discovery: need at least 4 trajectory samples, got " +
                                std::to_string(Z.samples()));
  const Eigen::Index train_count = std::min<Eigen::Index>(cfg.train_steps + 1, Z.samples());
  const TrajectorySeries train = Z.head(train_count);
  const Matrix dz = central_difference(train);
  const CandidateLibrary theta = build_library(train.states.middleRows(1, train_count - 2), st.spec);
  SparseModel model = stlsq(theta, dz, st.lambda_sp);
  const double r2_fit = r2_score(dz, theta.matrix * model.xi);

  const Eigen::Index horizon = std::min<Eigen::Index>(cfg.horizon, Z.samples() - 1);
  TrajectorySeries reference = Z.head(horizon + 1);
  TrajectorySeries prediction =
      extrapolate(model, Z.states.row(0).transpose(), Z.dt(), horizon);

  DiagnosticReport rep;
  rep.iteration = iteration;
  rep.l0 = complexity(model);
  rep.horizon = horizon;
  rep.rmse = rmse(prediction, reference);
  rep.vps = vps(prediction, reference, cfg.vps_epsilon);
  rep.divergence_step = prediction.divergence_step;
  rep.equations = to_symbolic(model);
  rep.r2 = prediction.samples() >= 2
               ? r2_score(reference.states.topRows(prediction.samples()), prediction.states)
               : -std::numeric_limits<double>::infinity();
  rep.tool_params = {{"lambda_sp", st.lambda_sp},
                     {"poly_degree", st.spec.poly_degree},
                     {"include_trig", st.spec.include_trig},
                     {"r2_fit", r2_fit},
                     {"state_dim", model.state_dim},
                     {"train_steps", train_count - 1}};
  return {std::move(model), std::move(rep), std::move(prediction), std::move(reference)};
}

/// Per-channel spatial means over time; the scalar trace used for field plots.
TrajectorySeries field_means(const FieldSeries& f) {
  TrajectorySeries t;
  t.times = f.times;
  t.states.resize(f.steps(), f.channel_count());
  for (Eigen::Index c = 0; c < f.channel_count(); ++c)
    for (Eigen::Index k = 0; k < f.steps(); ++k) t.states(k, c) = f.channels[c][k].mean();
  t.divergence_step = f.divergence_step;
  return t;
}

/// Fits a sparse field model on sampled stencil features and evaluates it by
/// re-integrating the discovered PDE from the initial snapshot.
StageOutcome fit_field_model(const FieldSeries& fields, const StencilFeatures& sf,
                             const LoopState& st, const RunConfig& cfg, int iteration) {
  const auto& channels = st.spec.var_names;
  const Matrix lhs = sf.time_derivative(channels);
  const Matrix Z = sf.stacked(channels, 1, sf.steps() - 1);
  const CandidateLibrary theta =
      st.spec.custom.empty()
          ? build_library(Z, st.spec)
          : build_library(Z, sf.stacked(st.spec.custom, 1, sf.steps() - 1), st.spec);
  SparseModel model = stlsq(theta, lhs, st.lambda_sp);
  const double r2_fit = r2_score(lhs, theta.matrix * model.xi);

  const Eigen::Index horizon = std::min<Eigen::Index>(cfg.horizon, fields.steps() - 1);
  std::vector<Matrix> initial;
  initial.reserve(fields.channels.size());
  for (const auto& ch : fields.channels) initial.push_back(ch.front());
  const FieldSeries sim = integrate_pde(make_model_field_rhs(model, fields.grid), fields.grid,
                                        initial, fields.channel_names, fields.dt(), horizon,
                                        fields.times(0));
  const FieldSeries reference = fields.slice(0, horizon + 1);

  DiagnosticReport rep;
  rep.iteration = iteration;
  rep.r2 = r2_fit;
  rep.l0 = complexity(model);
  rep.horizon = horizon;
  rep.rmse = rmse(sim, reference);
  rep.vps = vps(sim, reference, cfg.vps_epsilon);
  rep.divergence_step = sim.divergence_step;
  rep.equations = to_symbolic(model);
  rep.tool_params = {{"lambda_sp", st.lambda_sp},
                     {"poly_degree", st.spec.poly_degree},
                     {"include_trig", st.spec.include_trig},
                     {"r2_fit", r2_fit},
                     {"state_dim", model.state_dim},
                     {"n_samples", sf.samples()},
                     {"train_steps", sf.steps() - 1}};
  return {std::move(model), std::move(rep), field_means(sim), field_means(reference)};
}

/// The shared refine loop: run stages, decide, apply, track the best model.
RunHistory run_loop(const RunConfig& cfg, const fs::path& run_dir,
                    const std::function<StageOutcome(const LoopState&, int)>& fit,
                    LoopState st) {
  RunHistory history;
  std::vector<std::string> advisor_lines;
  std::tuple<double, double, double> best_key;
  try {
    if (!run_dir.empty()) fs::create_directories(run_dir);
    for (int k = 0; k < cfg.max_iterations; ++k) {
      StageOutcome out = fit(st, k);

      std::map<std::string, std::string> artifacts;
      if (!run_dir.empty()) {
        const fs::path iter_dir = run_dir / ("iter_" + std::to_string(k));
        out.report = emit_report(std::move(out.report), out.prediction, out.reference, iter_dir);
        const fs::path model_path = iter_dir / "model.json";
        std::ofstream model_out(model_path);
        model_out << model_to_json(out.model).dump(2) << '\n';
        // The reference trajectory the metrics were computed against (the
        // extracted track / latents, or per-channel spatial means for field
        // runs), so evaluation can rescore the model without re-extracting.
        save_trajectory_csv(out.reference, iter_dir / "extracted.csv");
        artifacts["report"] = fs::absolute(iter_dir / "report.json").string();
        artifacts["model"] = fs::absolute(model_path).string();
        artifacts["extracted"] = fs::absolute(iter_dir / "extracted.csv").string();
        artifacts["phase_portrait"] = fs::absolute(out.report.phase_portrait_path).string();
        artifacts["trajectory_plot"] = fs::absolute(out.report.trajectory_plot_path).string();
        // Re-record the plot paths relative to the run directory (and rewrite
        // report.json to match) so replaying the same run into a different
        // directory reproduces every artifact byte for byte.
        for (std::string* p : {&out.report.phase_portrait_path, &out.report.trajectory_plot_path})
          *p = fs::path(*p).lexically_relative(run_dir).generic_string();
        std::ofstream report_out(iter_dir / "report.json");
        report_out << report_to_json(out.report).dump(2) << '\n';
      }

      const PlanInstruction fallback = diagnose(out.report, history, cfg);
      PlanInstruction instr = fallback;
      if (!cfg.advisor.empty()) {
        AdvisorExchange ex;
        const json request = advisor_request(out.report, artifacts);
        instr = advise_external(request, cfg.advisor, cfg.advisor_timeout, fallback, &ex);
        if (ex.used_advisor && instr.target == PlanTarget::Variable &&
            cfg.mode != RunMode::Representation) {
          ex.used_advisor = false;
          ex.note = "fallback: advisor targeted the encoder but this run has no encoder stage";
          instr = fallback;
        }
        advisor_lines.push_back(json{{"iteration", k},
                                     {"endpoint", cfg.advisor},
                                     {"request", request},
                                     {"response", ex.response},
                                     {"used_advisor", ex.used_advisor},
                                     {"note", ex.note}}
                                    .dump());
      }

      history.iterations.push_back({out.report, instr});
      const auto key = std::make_tuple(static_cast<double>(out.report.vps), out.report.r2,
                                       -static_cast<double>(out.report.l0));
      if (history.best_iteration < 0 || key > best_key) {
        best_key = key;
        history.best_iteration = k;
        history.final_model = out.model;
        history.final_trajectory = out.prediction;
      }

      if (instr.target == PlanTarget::Terminate) {
        const std::string reason = instr.params.value("reason", "accepted");
        history.termination_reason = reason == "ladders_exhausted" ? reason : "accepted";
        break;
      }
      apply_instruction(instr, out.model, st);
    }
    if (history.termination_reason.empty()) history.termination_reason = "budget_exhausted";
  } catch (const std::exception& e) {
    history.termination_reason = "failed";
    history.error = e.what();
  }
  if (!run_dir.empty() && !advisor_lines.empty()) {
    std::ofstream log(run_dir / "advisor.log");
    for (const auto& line : advisor_lines) log << line << '\n';
  }
  return history;
}

LoopState initial_trajectory_state(const RunConfig& cfg, int state_dim) {
  LoopState st;
  st.lambda_sp = cfg.lambda_sp_ladder[static_cast<std::size_t>(cfg.lambda_sp_start)];
  st.spec = ode_library(state_dim, cfg.poly_degree, cfg.include_trig);
  return st;
}

std::vector<std::string> default_operators(const std::vector<std::string>& channels) {
  std::vector<std::string> ops;
  for (const auto& c : channels) {
    ops.push_back("Δ" + c);
    ops.push_back("Δ²" + c);
  }
  return ops;
}

}  // namespace

std::string run_mode_name(RunMode mode) {
  switch (mode) {
    case RunMode::Object: return "object";
    case RunMode::Pixel: return "pixel";
    case RunMode::Representation: return "representation";
  }
  throw std::logic_error("run_mode_name: bad enum");
}

RunMode run_mode_from_name(const std::string& name) {
  if (name == "object") return RunMode::Object;
  if (name == "pixel") return RunMode::Pixel;
  if (name == "representation") return RunMode::Representation;
  throw std::invalid_argument("unknown run mode '" + name +
                              "' (choose object, pixel, or representation)");
}

std::string plan_target_name(PlanTarget target) {
  switch (target) {
    case PlanTarget::Variable: return "variable";
    case PlanTarget::Equation: return "equation";
    case PlanTarget::Terminate: return "terminate";
  }
  throw std::logic_error("plan_target_name: bad enum");
}

std::string plan_action_name(PlanAction action) {
  switch (action) {
    case PlanAction::ReExtractWithPhysics: return "re_extract_with_physics";
    case PlanAction::AdjustLambdaSp: return "adjust_lambda_sp";
    case PlanAction::AdjustLibrary: return "adjust_library";
    case PlanAction::AdjustLambdaEq: return "adjust_lambda_eq";
    case PlanAction::Accept: return "accept";
  }
  throw std::logic_error("plan_action_name: bad enum");
}

PlanTarget plan_target_from_name(const std::string& name) {
  if (name == "variable") return PlanTarget::Variable;
  if (name == "equation") return PlanTarget::Equation;
  if (name == "terminate") return PlanTarget::Terminate;
  throw std::invalid_argument("unknown plan target '" + name + "'");
}

PlanAction plan_action_from_name(const std::string& name) {
  if (name == "re_extract_with_physics") return PlanAction::ReExtractWithPhysics;
  if (name == "adjust_lambda_sp") return PlanAction::AdjustLambdaSp;
  if (name == "adjust_library") return PlanAction::AdjustLibrary;
  if (name == "adjust_lambda_eq") return PlanAction::AdjustLambdaEq;
  if (name == "accept") return PlanAction::Accept;
  throw std::invalid_argument("unknown plan action '" + name + "'");
}

void PlanInstruction::validate() const {
  static const std::map<PlanTarget, std::set<PlanAction>> kConsistent = {
      {PlanTarget::Variable, {PlanAction::ReExtractWithPhysics, PlanAction::AdjustLambdaEq}},
      {PlanTarget::Equation, {PlanAction::AdjustLambdaSp, PlanAction::AdjustLibrary}},
      {PlanTarget::Terminate, {PlanAction::Accept}}};
  if (!kConsistent.at(target).count(action))
    throw std::invalid_argument("plan instruction: action '" + plan_action_name(action) +
                                "' cannot target '" + plan_target_name(target) + "'");
  if (!params.is_object())
    throw std::invalid_argument("plan instruction: params must be a JSON object");

  std::set<std::string> relevant;
  switch (action) {
    case PlanAction::ReExtractWithPhysics:
    case PlanAction::AdjustLambdaEq: relevant = {"lambda_eq"}; break;
    case PlanAction::AdjustLambdaSp: relevant = {"lambda_sp"}; break;
    case PlanAction::AdjustLibrary: relevant = {"poly_degree", "include_trig"}; break;
    case PlanAction::Accept: relevant = {"reason"}; break;
  }
  for (const auto& [key, value] : params.items()) {
    (void)value;
    if (!relevant.count(key))
      throw std::invalid_argument("plan instruction: param '" + key + "' is not used by '" +
                                  plan_action_name(action) + "'");
  }
  const auto require_positive = [this](const std::string& key) {
    if (!params.contains(key) || !params[key].is_number() || params[key].get<double>() <= 0.0)
      throw std::invalid_argument("plan instruction: '" + plan_action_name(action) +
                                  "' needs a positive numeric param '" + key + "'");
  };
  switch (action) {
    case PlanAction::ReExtractWithPhysics:
    case PlanAction::AdjustLambdaEq: require_positive("lambda_eq"); break;
    case PlanAction::AdjustLambdaSp: require_positive("lambda_sp"); break;
    case PlanAction::AdjustLibrary: {
      if (params.empty())
        throw std::invalid_argument(
            "plan instruction: 'adjust_library' needs poly_degree and/or include_trig");
      if (params.contains("poly_degree") &&
          (!params["poly_degree"].is_number_integer() || params["poly_degree"].get<int>() < 1))
        throw std::invalid_argument("plan instruction: poly_degree must be an integer >= 1");
      if (params.contains("include_trig") && !params["include_trig"].is_boolean())
        throw std::invalid_argument("plan instruction: include_trig must be a boolean");
      break;
    }
    case PlanAction::Accept:
      if (params.contains("reason") && !params["reason"].is_string())
        throw std::invalid_argument("plan instruction: reason must be a string");
      break;
  }
}

nlohmann::json instruction_to_json(const PlanInstruction& instr) {
  return {{"target", plan_target_name(instr.target)},
          {"action", plan_action_name(instr.action)},
          {"params", instr.params},
          {"rationale", instr.rationale}};
}

PlanInstruction instruction_from_json(const nlohmann::json& j) {
  if (!j.is_object()) throw std::invalid_argument("plan instruction: expected a JSON object");
  static const std::set<std::string> kKeys = {"target", "action", "params", "rationale"};
  for (const auto& [key, value] : j.items()) {
    (void)value;
    if (!kKeys.count(key))
      throw std::invalid_argument("plan instruction: unknown field '" + key + "'");
  }
  if (!j.contains("target") || !j["target"].is_string() || !j.contains("action") ||
      !j["action"].is_string())
    throw std::invalid_argument("plan instruction: 'target' and 'action' must be strings");
  PlanInstruction instr;
  instr.target = plan_target_from_name(j["target"].get<std::string>());
  instr.action = plan_action_from_name(j["action"].get<std::string>());
  if (j.contains("params")) instr.params = j["params"];
  if (j.contains("rationale")) {
    if (!j["rationale"].is_string())
      throw std::invalid_argument("plan instruction: rationale must be a string");
    instr.rationale = j["rationale"].get<std::string>();
  }
  instr.validate();
  return instr;
}

void RunConfig::validate() const {
  if (max_iterations < 1) throw std::invalid_argument("run config: max_iterations must be >= 1");
  if (!(r2_min > 0.0 && r2_min <= 1.0))
    throw std::invalid_argument("run config: r2_min must be in (0, 1]");
  if (!(vps_min_fraction > 0.0 && vps_min_fraction <= 1.0))
    throw std::invalid_argument("run config: vps_min_fraction must be in (0, 1]");
  if (l0_max < 0) throw std::invalid_argument("run config: l0_max must be >= 0 (0 = automatic)");
  const auto check_ladder = [](const std::vector<double>& ladder, const std::string& name) {
    if (ladder.empty()) throw std::invalid_argument("run config: " + name + " must not be empty");
    for (std::size_t i = 0; i < ladder.size(); ++i) {
      if (ladder[i] <= 0.0)
        throw std::invalid_argument("run config: " + name + " values must be positive");
      if (i > 0 && ladder[i] <= ladder[i - 1])
        throw std::invalid_argument("run config: " + name + " must be strictly increasing");
    }
  };
  check_ladder(lambda_sp_ladder, "lambda_sp_ladder");
  check_ladder(lambda_eq_ladder, "lambda_eq_ladder");
  if (lambda_sp_start < 0 || lambda_sp_start >= static_cast<int>(lambda_sp_ladder.size()))
    throw std::invalid_argument("run config: lambda_sp_start is outside the ladder");
  if (horizon < 1) throw std::invalid_argument("run config: horizon must be >= 1");
  if (train_steps < 3) throw std::invalid_argument("run config: train_steps must be >= 3");
  if (pixel_train_steps < 3)
    throw std::invalid_argument("run config: pixel_train_steps must be >= 3");
  if (pixel_samples < 1) throw std::invalid_argument("run config: pixel_samples must be >= 1");
  if (poly_degree < 1) throw std::invalid_argument("run config: poly_degree must be >= 1");
  if (max_poly_degree < poly_degree)
    throw std::invalid_argument("run config: max_poly_degree must be >= poly_degree");
  if (recon_error_max <= 0.0)
    throw std::invalid_argument("run config: recon_error_max must be positive");
  if (vps_epsilon <= 0.0)
    throw std::invalid_argument("run config: vps_epsilon must be positive");
  if (smoothness_max <= 0.0)
    throw std::invalid_argument("run config: smoothness_max must be positive");
  if (latent_dim < 1) throw std::invalid_argument("run config: latent_dim must be >= 1");
  if (advisor_timeout <= 0.0)
    throw std::invalid_argument("run config: advisor_timeout must be positive");
  autoencoder.validate();
}

double smoothness_score(const TrajectorySeries& series) {
  const Eigen::Index n = series.samples();
  if (n < 3) return 0.0;
  const Matrix d1 = series.states.bottomRows(n - 1) - series.states.topRows(n - 1);
  const Matrix d2 = d1.bottomRows(n - 2) - d1.topRows(n - 2);
  const double first = d1.norm();
  if (first == 0.0) return 0.0;
  return d2.norm() / first;
}

PlanInstruction diagnose(const DiagnosticReport& report, const RunHistory& history,
                         const RunConfig& cfg) {
  cfg.validate();
  const json& tp = report.tool_params;
  const double lambda_sp_cur =
      tp.value("lambda_sp", cfg.lambda_sp_ladder[static_cast<std::size_t>(cfg.lambda_sp_start)]);
  const int poly = tp.value("poly_degree", cfg.poly_degree);
  const bool trig = tp.value("include_trig", cfg.include_trig);
  const double r2_fit = tp.value("r2_fit", report.r2);
  const int l0_max = effective_l0_max(cfg, tp.value("state_dim", cfg.latent_dim));
  const double vps_needed = cfg.vps_min_fraction * static_cast<double>(report.horizon);

  // 1. Everything within thresholds: accept.
  if (report.r2 >= cfg.r2_min && static_cast<double>(report.vps) >= vps_needed &&
      report.l0 <= l0_max)
    return make_instruction(PlanTarget::Terminate, PlanAction::Accept,
                            {{"reason", "accepted"}},
                            "r2 " + fmt(report.r2) + " >= " + fmt(cfg.r2_min) + ", vps " +
                                std::to_string(report.vps) + "/" + std::to_string(report.horizon) +
                                ", l0 " + std::to_string(report.l0) + " <= " +
                                std::to_string(l0_max) + ": model meets every threshold");

  // 2. Representation runs with poor reconstruction or rough latents: retrain
  //    the encoder against the current model with the next physics weight.
  if (cfg.mode == RunMode::Representation) {
    const double recon = report.recon_error.value_or(0.0);
    const double smooth = tp.value("smoothness", 0.0);
    if (recon > cfg.recon_error_max || smooth > cfg.smoothness_max) {
      const double lambda_eq_cur = tp.value("lambda_eq", 0.0);
      if (const auto next = next_above(cfg.lambda_eq_ladder, lambda_eq_cur)) {
        std::string why = recon > cfg.recon_error_max
                              ? "reconstruction error " + fmt(recon) + " exceeds " +
                                    fmt(cfg.recon_error_max)
                              : "latent smoothness score " + fmt(smooth) + " exceeds " +
                                    fmt(cfg.smoothness_max);
        return make_instruction(PlanTarget::Variable, PlanAction::ReExtractWithPhysics,
                                {{"lambda_eq", *next}},
                                why + "; retraining the encoder against the current model with "
                                      "lambda_eq " +
                                    fmt(*next));
      }
    }
  }

  // 3. Good fit but too many terms: raise the sparsity threshold.
  if (report.l0 > l0_max && report.r2 >= cfg.r2_min) {
    if (const auto next = next_above(cfg.lambda_sp_ladder, lambda_sp_cur))
      return make_instruction(PlanTarget::Equation, PlanAction::AdjustLambdaSp,
                              {{"lambda_sp", *next}},
                              "l0 " + std::to_string(report.l0) + " > " + std::to_string(l0_max) +
                                  " with r2 " + fmt(report.r2) + ": raising lambda_sp to " +
                                  fmt(*next));
  }

  // 4. Poor fit with few terms: loosen the threshold, then widen the library.
  if (report.r2 < cfg.r2_min && report.l0 <= l0_max) {
    const auto tried = tried_lambda_sp(report, history);
    if (const auto lower = largest_untried_below(cfg.lambda_sp_ladder, lambda_sp_cur, tried))
      return make_instruction(PlanTarget::Equation, PlanAction::AdjustLambdaSp,
                              {{"lambda_sp", *lower}},
                              "r2 " + fmt(report.r2) + " < " + fmt(cfg.r2_min) + " with l0 " +
                                  std::to_string(report.l0) + ": lowering lambda_sp to " +
                                  fmt(*lower));
    if (poly < cfg.max_poly_degree)
      return make_instruction(PlanTarget::Equation, PlanAction::AdjustLibrary,
                              {{"poly_degree", poly + 1}},
                              "r2 " + fmt(report.r2) + " < " + fmt(cfg.r2_min) +
                                  " and no lower lambda_sp left: raising poly_degree to " +
                                  std::to_string(poly + 1));
    if (!trig)
      return make_instruction(PlanTarget::Equation, PlanAction::AdjustLibrary,
                              {{"include_trig", true}},
                              "r2 " + fmt(report.r2) + " < " + fmt(cfg.r2_min) +
                                  " at the maximum polynomial degree: enabling trig features");
  }

  // 5. Extrapolation diverges although the derivative fit is good: the model
  //    almost certainly carries a spurious high-order term; prune harder.
  if (report.divergence_step && r2_fit >= cfg.r2_min) {
    if (const auto next = next_above(cfg.lambda_sp_ladder, lambda_sp_cur))
      return make_instruction(PlanTarget::Equation, PlanAction::AdjustLambdaSp,
                              {{"lambda_sp", *next}},
                              "extrapolation diverged at step " +
                                  std::to_string(*report.divergence_step) +
                                  " despite derivative fit r2 " + fmt(r2_fit) +
                                  ": raising lambda_sp to " + fmt(*next));
  }

  // 6. Nothing left to try.
  return make_instruction(PlanTarget::Terminate, PlanAction::Accept,
                          {{"reason", "ladders_exhausted"}},
                          "no applicable adjustment remains; keeping the best model so far");
}

nlohmann::json advisor_request(const DiagnosticReport& report,
                               const std::map<std::string, std::string>& artifact_paths) {
  return {{"schema_version", 1},
          {"iteration", report.iteration},
          {"report", report_to_json(report)},
          {"allowed_actions",
           json::array({"re_extract_with_physics", "adjust_lambda_sp", "adjust_library",
                        "adjust_lambda_eq", "accept"})},
          {"artifact_paths", json(artifact_paths)}};
}

RunHistory run_discovery(const FrameSequence& frames, const RunConfig& cfg,
                         const std::filesystem::path& run_dir) {
  cfg.validate();
  if (cfg.mode == RunMode::Pixel)
    throw std::invalid_argument(
        "run_discovery: pixel mode consumes field data, not rendered video");

  if (cfg.mode == RunMode::Object) {
    // Centroid tracks are (x, y), so the state dimension is fixed at 2.
    auto track = std::make_shared<std::optional<TrajectorySeries>>();
    auto fit = [&frames, &cfg, track](const LoopState& st, int k) {
      if (!track->has_value()) *track = track_and_filter(frames, cfg.track);
      return fit_trajectory_model(**track, st, cfg, k);
    };
    return run_loop(cfg, run_dir, fit, initial_trajectory_state(cfg, 2));
  }

  struct EncoderCache {
    std::optional<AutoencoderModel> model;
    TrajectorySeries latents;
    double recon = 0.0;
    double smooth = 0.0;
  };
  auto cache = std::make_shared<EncoderCache>();
  auto fit = [&frames, &cfg, cache](const LoopState& st, int k) {
    if (!cache->model || st.retrain_encoder) {
      AutoencoderConfig acfg = cfg.autoencoder;
      acfg.seed = cfg.seed;
      acfg.lambda_eq = st.lambda_eq;
      auto [model, latents] =
          train_autoencoder(frames, cfg.latent_dim, acfg, st.physics ? &*st.physics : nullptr);
      cache->model = std::move(model);
      cache->latents = std::move(latents);
      cache->recon = cache->model->loss_history.back().recon;
      cache->smooth = smoothness_score(cache->latents);
    }
    StageOutcome out = fit_trajectory_model(cache->latents, st, cfg, k);
    out.report.recon_error = cache->recon;
    out.report.tool_params["smoothness"] = cache->smooth;
    out.report.tool_params["lambda_eq"] = st.lambda_eq;
    return out;
  };
  return run_loop(cfg, run_dir, fit, initial_trajectory_state(cfg, cfg.latent_dim));
}

RunHistory run_discovery(const FieldSeries& fields, const RunConfig& cfg,
                         const std::filesystem::path& run_dir) {
  cfg.validate();
  if (cfg.mode != RunMode::Pixel)
    throw std::invalid_argument("run_discovery: field input requires pixel mode");
  fields.validate();

  LoopState st;
  st.lambda_sp = cfg.lambda_sp_ladder[static_cast<std::size_t>(cfg.lambda_sp_start)];
  st.spec.poly_degree = cfg.poly_degree;
  st.spec.include_trig = cfg.include_trig;
  st.spec.var_names = fields.channel_names;
  st.spec.custom = cfg.operators.empty() ? default_operators(fields.channel_names) : cfg.operators;
  st.spec.validate();

  auto sampled = std::make_shared<std::optional<StencilFeatures>>();
  auto fit = [&fields, &cfg, sampled](const LoopState& st, int k) {
    if (!sampled->has_value()) {
      const Eigen::Index train_count =
          std::min<Eigen::Index>(cfg.pixel_train_steps + 1, fields.steps());
      const FieldSeries train = fields.slice(0, train_count);
      std::vector<std::string> wanted = st.spec.var_names;
      wanted.insert(wanted.end(), st.spec.custom.begin(), st.spec.custom.end());
      const FieldFeatures features = apply_stencils(train, wanted);
      const Eigen::Index n_samples = std::min<Eigen::Index>(
          cfg.pixel_samples,
          static_cast<Eigen::Index>(fields.grid.rows) * fields.grid.cols);
      *sampled = sample_pixels(features, n_samples, cfg.seed);
    }
    return fit_field_model(fields, **sampled, st, cfg, k);
  };
  return run_loop(cfg, run_dir, fit, st);
}

}  // namespace pixphys
