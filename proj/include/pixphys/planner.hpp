#pragma once

#include "pixphys/autoencoder.hpp"
#include "pixphys/evaluate.hpp"
#include "pixphys/extract.hpp"
#include "pixphys/regress.hpp"

#include <json.hpp>

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace pixphys {

/// Which extraction front end feeds the regression.
enum class RunMode { Object, Pixel, Representation };

std::string run_mode_name(RunMode mode);
RunMode run_mode_from_name(const std::string& name);

/// What a plan step mutates: the variable stage (extraction), the equation
/// stage (regression), or nothing because the run ends.
enum class PlanTarget { Variable, Equation, Terminate };

enum class PlanAction {
  ReExtractWithPhysics,  // retrain the encoder against the current model
  AdjustLambdaSp,        // move the sparsity threshold along its ladder
  AdjustLibrary,         // widen the candidate library (degree, trig)
  AdjustLambdaEq,        // change the physics-loss weight only
  Accept                 // stop and keep the best model
};

std::string plan_target_name(PlanTarget target);
std::string plan_action_name(PlanAction action);
PlanTarget plan_target_from_name(const std::string& name);
PlanAction plan_action_from_name(const std::string& name);

/// One decision of the refinement loop. `params` carries the knob values the
/// action needs (lambda_sp, lambda_eq, poly_degree, include_trig, reason);
/// `rationale` is a human-readable justification recorded in the history.
struct PlanInstruction {
  PlanTarget target = PlanTarget::Terminate;
  PlanAction action = PlanAction::Accept;
  nlohmann::json params = nlohmann::json::object();
  std::string rationale;

  bool operator==(const PlanInstruction&) const = default;
  /// Enforces target/action consistency and known, well-typed params.
  void validate() const;
};

/// Wire format used in run histories and the advisor protocol.
nlohmann::json instruction_to_json(const PlanInstruction& instr);
/// Parses and validates; throws std::invalid_argument on any schema
/// violation (unknown names, inconsistent target/action, bad param types).
PlanInstruction instruction_from_json(const nlohmann::json& j);

/// Everything a discovery run needs: thresholds, candidate ladders, stage
/// configurations, and the optional external advisor endpoint.
struct RunConfig {
  RunMode mode = RunMode::Object;

  int max_iterations = 5;
  double r2_min = 0.95;
  double vps_min_fraction = 0.9;  // of the evaluation horizon
  /// Maximum acceptable nonzero count; 0 means automatic (2 + 3*d for
  /// trajectory states, 8 per channel for field models).
  int l0_max = 0;

  std::vector<double> lambda_sp_ladder{0.02, 0.05, 0.1, 0.2, 0.5};
  std::vector<double> lambda_eq_ladder{0.1, 1.0, 10.0};
  int lambda_sp_start = 1;  // ladder index of the first sparsity threshold

  Eigen::Index horizon = 1000;      // extrapolation length (capped by the data)
  Eigen::Index train_steps = 200;   // leading trajectory steps used for fitting
  Eigen::Index pixel_train_steps = 100;
  Eigen::Index pixel_samples = 1024;  // grid points fed to the regression

  int poly_degree = 3;
  int max_poly_degree = 5;
  bool include_trig = false;
  /// Extra stencil columns for field runs; empty means Δ and Δ² per channel.
  std::vector<std::string> operators;

  double recon_error_max = 1e-3;  // representation runs: acceptable recon loss
  double smoothness_max = 0.5;    // ratio of 2nd- to 1st-difference norms
  double vps_epsilon = 0.5;       // normalized per-step error bound for vps

  std::uint64_t seed = 0;
  TrackConfig track;
  AutoencoderConfig autoencoder;
  int latent_dim = 2;

  /// Empty: rule-based decisions only. "http(s)://host:port/path" posts the
  /// report there; anything else runs as a shell command fed on stdin.
  std::string advisor;
  double advisor_timeout = 30.0;  // seconds

  void validate() const;
};

/// Report plus the decision taken after seeing it.
struct IterationRecord {
  DiagnosticReport report;
  PlanInstruction instruction;
};

/// Complete record of one discovery run. `final_model` / `final_trajectory`
/// are the best iteration by (vps, r2, -l0), never a dominated one.
struct RunHistory {
  std::vector<IterationRecord> iterations;
  SparseModel final_model;
  TrajectorySeries final_trajectory;
  int best_iteration = -1;
  std::string termination_reason;  // accepted | budget_exhausted | ladders_exhausted | failed
  std::string error;               // what broke, when termination_reason == "failed"
};

/// Ratio of second-difference to first-difference Frobenius norms of the
/// state history; near 0 for smooth curves, ~sqrt(3) for white noise.
double smoothness_score(const TrajectorySeries& series);

/// Rule-based decision over the latest report, evaluated in fixed order:
///   1. accept when r2, vps, and l0 all meet their thresholds;
///   2. (representation) poor reconstruction or rough latents -> retrain the
///      encoder against the current model with the next physics weight;
///   3. too many terms with good fit -> raise the sparsity threshold;
///   4. poor fit with few terms -> lower the threshold to an untried value,
///      then raise the polynomial degree, then enable trig features;
///   5. diverging extrapolation despite a good derivative fit -> raise the
///      sparsity threshold;
///   6. otherwise terminate with the best model so far.
PlanInstruction diagnose(const DiagnosticReport& report, const RunHistory& history,
                         const RunConfig& cfg);

/// Request body sent to an external advisor (schema_version, iteration,
/// report, allowed_actions, artifact_paths).
nlohmann::json advisor_request(const DiagnosticReport& report,
                               const std::map<std::string, std::string>& artifact_paths);

/// What actually happened during one advisor consultation, for advisor.log.
struct AdvisorExchange {
  bool used_advisor = false;  // false: fell back to the rule-based decision
  std::string request;
  std::string response;  // raw reply, possibly invalid
  std::string note;      // "ok" or the failure description
};

/// Consults an external advisor and returns its validated instruction, or
/// `fallback` when the advisor is unreachable, times out, or replies with
/// anything that fails validation. Never throws because of the advisor.
PlanInstruction advise_external(const nlohmann::json& request, const std::string& endpoint,
                                double timeout_seconds, const PlanInstruction& fallback,
                                AdvisorExchange* exchange = nullptr);

/// End-to-end discovery on a rendered video (Object or Representation mode).
/// When `run_dir` is given, writes per-iteration artifacts (report.json,
/// phase/overlay plots, model.json) plus advisor.log when an advisor is set.
RunHistory run_discovery(const FrameSequence& frames, const RunConfig& cfg,
                         const std::filesystem::path& run_dir = {});

/// End-to-end discovery on gridded field data (Pixel mode).
RunHistory run_discovery(const FieldSeries& fields, const RunConfig& cfg,
                         const std::filesystem::path& run_dir = {});

}  // namespace pixphys
