// Command-line front end: generate synthetic data from the built-in systems,
// run the iterative discovery loop on a recording, rescore saved models, and
// aggregate multi-seed sweeps into benchmark tables.
//
// Exit codes: 0 success, 2 usage/config error, 3 discovery stopped without
// acceptance (budget or ladders exhausted), 4 pipeline failure.

#include "pixphys/config.hpp"
#include "pixphys/dynamics.hpp"
#include "pixphys/evaluate.hpp"
#include "pixphys/extract.hpp"
#include "pixphys/planner.hpp"
#include "pixphys/render.hpp"
#include "pixphys/sequence_io.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <atomic>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <limits>
#include <set>
#include <sstream>
#include <thread>

namespace {

namespace fs = std::filesystem;
using nlohmann::json;
using namespace pixphys;

constexpr int kExitOk = 0;
constexpr int kExitUsage = 2;
constexpr int kExitStopped = 3;
constexpr int kExitFailure = 4;

/// Operator-error vs. pipeline-error split for the exit-code contract.
struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

fs::path run_root() {
  if (const char* env = std::getenv("P2P_RUN_ROOT"); env && *env) return fs::path(env);
  return fs::path("runs");
}

std::string join_names(const std::vector<std::string>& names) {
  std::string out;
  for (const auto& n : names) {
    if (!out.empty()) out += ", ";
    out += n;
  }
  return out;
}

struct CommonFlags {
  std::string config_file;
  std::vector<std::string> sets;
};

void add_common(CLI::App* cmd, CommonFlags& flags) {
  cmd->add_option("--config", flags.config_file, "JSON config file with namespaced keys");
  cmd->add_option("--set", flags.sets,
                  "Override one config key (repeatable), e.g. --set planner.r2_min=0.97");
}

/// defaults -> config file -> --set flags; command-specific flags are layered
/// on top by the callers. Any config problem is a usage error.
CliConfig resolve_config(const CommonFlags& flags) {
  try {
    CliConfig cfg;
    if (!flags.config_file.empty()) cfg.load_file(flags.config_file);
    for (const auto& assignment : flags.sets) cfg.set_flag(assignment);
    return cfg;
  } catch (const std::exception& e) {
    throw UsageError(e.what());
  }
}

SystemSpec lookup_system(const CliConfig& cfg) {
  const std::string& name = cfg.text("dynamics.system");
  if (name.empty())
    throw UsageError("--system is required; choose one of: " + join_names(system_names()));
  try {
    return builtin_system(name, cfg.system_params(name));
  } catch (const std::exception& e) {
    throw UsageError(e.what());
  }
}

RunConfig discovery_config(const CliConfig& cfg) {
  try {
    return cfg.run_config();
  } catch (const std::exception& e) {
    throw UsageError(e.what());
  }
}

/// Per-channel spatial means over time, for truth CSVs and field overlays.
TrajectorySeries field_means(const FieldSeries& fields) {
  TrajectorySeries out;
  out.times = fields.times;
  out.states.resize(fields.steps(), fields.channel_count());
  for (Eigen::Index c = 0; c < fields.channel_count(); ++c)
    for (Eigen::Index t = 0; t < fields.steps(); ++t)
      out.states(t, c) = fields.channels[static_cast<std::size_t>(c)][static_cast<std::size_t>(t)]
                             .mean();
  return out;
}

/// Multi-channel field recording as one video: the channels are tiled
/// vertically in each frame, each affinely mapped from its own value range
/// (recorded in meta) to [0, 1].
FrameSequence render_fields_tiled(const FieldSeries& fields) {
  const int rows = fields.grid.rows;
  const auto nc = fields.channel_count();
  json names = json::array(), los = json::array(), his = json::array();
  std::vector<std::pair<double, double>> ranges;
  for (Eigen::Index c = 0; c < nc; ++c) {
    double lo = std::numeric_limits<double>::infinity(), hi = -lo;
    for (const Matrix& snap : fields.channels[static_cast<std::size_t>(c)]) {
      lo = std::min(lo, snap.minCoeff());
      hi = std::max(hi, snap.maxCoeff());
    }
    if (!(lo < hi))
      throw std::runtime_error("field channel '" +
                               fields.channel_names[static_cast<std::size_t>(c)] +
                               "' is constant; nothing to render");
    ranges.emplace_back(lo, hi);
    names.push_back(fields.channel_names[static_cast<std::size_t>(c)]);
    los.push_back(lo);
    his.push_back(hi);
  }

  FrameSequence seq;
  seq.width = fields.grid.cols;
  seq.height = rows * static_cast<int>(nc);
  seq.dt = fields.dt();
  seq.frames.reserve(static_cast<std::size_t>(fields.steps()));
  for (Eigen::Index t = 0; t < fields.steps(); ++t) {
    Frame frame(seq.height, seq.width);
    for (Eigen::Index c = 0; c < nc; ++c) {
      const auto& [lo, hi] = ranges[static_cast<std::size_t>(c)];
      const double scale = 1.0 / (hi - lo);
      const Matrix& snap =
          fields.channels[static_cast<std::size_t>(c)][static_cast<std::size_t>(t)];
      for (Eigen::Index r = 0; r < rows; ++r)
        for (Eigen::Index col = 0; col < seq.width; ++col)
          frame(c * rows + r, col) =
              static_cast<float>(std::clamp((snap(r, col) - lo) * scale, 0.0, 1.0));
    }
    seq.frames.push_back(std::move(frame));
  }
  seq.meta = {{"kind", "field"}, {"channels", names},        {"value_lo", los},
              {"value_hi", his}, {"dx", fields.grid.dx},     {"dy", fields.grid.dy},
              {"tile_rows", rows}};
  return seq;
}

/// Rebuilds physical fields from a rendered field video using the intensity
/// ranges and grid geometry recorded in its metadata. Accepts both the tiled
/// multi-channel layout written by `gen` and single-channel videos from
/// render_field_video.
FieldSeries fields_from_video(const FrameSequence& seq, const std::string& source) {
  const json& meta = seq.meta;
  const auto need = [&](const char* key) {
    if (!meta.contains(key))
      throw UsageError("rendered field video " + source + " lacks meta key '" + key +
                       "'; cannot invert intensities to physical values");
  };
  for (const char* key : {"dx", "dy"}) need(key);

  FieldSeries fields;
  fields.times = uniform_times(0.0, seq.dt, seq.count());

  if (meta.contains("channels")) {
    for (const char* key : {"value_lo", "value_hi", "tile_rows"}) need(key);
    const auto names = meta["channels"].get<std::vector<std::string>>();
    const auto los = meta["value_lo"].get<std::vector<double>>();
    const auto his = meta["value_hi"].get<std::vector<double>>();
    const int rows = meta["tile_rows"].get<int>();
    if (names.empty() || los.size() != names.size() || his.size() != names.size() ||
        rows <= 0 || seq.height != rows * static_cast<int>(names.size()))
      throw UsageError("rendered field video " + source + " has inconsistent tiling metadata");
    fields.grid = GridSpec{rows, seq.width, meta["dx"].get<double>(), meta["dy"].get<double>()};
    fields.channel_names = names;
    fields.channels.resize(names.size());
    for (std::size_t c = 0; c < names.size(); ++c) {
      auto& values = fields.channels[c];
      values.reserve(seq.frames.size());
      for (const Frame& frame : seq.frames) {
        const Frame block = frame.middleRows(static_cast<Eigen::Index>(c) * rows, rows);
        values.push_back(invert_field_frame(block, los[c], his[c]));
      }
    }
  } else {
    for (const char* key : {"channel", "value_lo", "value_hi"}) need(key);
    const double lo = meta["value_lo"].get<double>();
    const double hi = meta["value_hi"].get<double>();
    fields.grid = GridSpec{seq.height, seq.width, meta["dx"].get<double>(),
                           meta["dy"].get<double>()};
    fields.channel_names = {meta["channel"].get<std::string>()};
    std::vector<Matrix> values;
    values.reserve(seq.frames.size());
    for (const Frame& frame : seq.frames) values.push_back(invert_field_frame(frame, lo, hi));
    fields.channels = {std::move(values)};
  }
  fields.validate();
  return fields;
}

/// Canonical equation strings for a system's registered ground truth;
/// falls back to the hand-written forms for laws outside the library.
std::vector<std::string> truth_equation_strings(const SystemSpec& spec) {
  if (!spec.truth_equations.empty()) return spec.truth_equations;
  if (!spec.truth) return {};
  LibrarySpec lib;
  if (spec.kind == SystemKind::Ode) {
    lib = ode_library(spec.state_dim);
  } else {
    lib.var_names = spec.channel_names;
    lib.custom = spec.operator_names;
  }
  return to_symbolic(truth_model(*spec.truth, lib));
}

json r2_json(double r2) {
  if (std::isinf(r2) && r2 < 0) return "degenerate variance";
  return r2;
}

std::string fmt_sig(double v, int digits = 4) {
  std::ostringstream os;
  os << std::setprecision(digits) << v;
  return os.str();
}

// ---------------------------------------------------------------------------
// gen
// ---------------------------------------------------------------------------

struct GenArgs {
  CommonFlags common;
  std::string system;
  std::string out;
  long long steps = 0;
  double dt = 0.0;
  long long grid = 0;
  long long canvas = 0;
  double noise_sigma = -1.0;
  long long seed = 0;
};

int cmd_gen(const CLI::App* cmd, const GenArgs& a) {
  CliConfig cfg = resolve_config(a.common);
  try {
    if (cmd->count("--system")) cfg.set("dynamics.system", a.system);
    if (cmd->count("--steps")) cfg.set("dynamics.steps", a.steps);
    if (cmd->count("--dt")) cfg.set("dynamics.dt", a.dt);
    if (cmd->count("--grid")) cfg.set("dynamics.grid", a.grid);
    if (cmd->count("--canvas")) cfg.set("render.canvas", a.canvas);
    if (cmd->count("--noise-sigma")) cfg.set("render.noise_sigma", a.noise_sigma);
    if (cmd->count("--seed")) cfg.set("render.seed", a.seed);
  } catch (const std::exception& e) {
    throw UsageError(e.what());
  }

  const SystemSpec spec = lookup_system(cfg);
  const double dt = cfg.number("dynamics.dt") > 0 ? cfg.number("dynamics.dt")
                                                  : spec.recommended_dt;
  const auto steps = cfg.integer("dynamics.steps") > 0
                         ? static_cast<Eigen::Index>(cfg.integer("dynamics.steps"))
                         : static_cast<Eigen::Index>(spec.recommended_steps);
  cfg.set("dynamics.dt", dt);
  cfg.set("dynamics.steps", static_cast<long long>(steps));

  fs::path out = a.out.empty()
                     ? fs::path(spec.name + (spec.kind == SystemKind::Ode ? ".seq" : ".fld"))
                     : fs::path(a.out);
  if (out.has_parent_path()) fs::create_directories(out.parent_path());
  fs::path truth_csv = out;
  truth_csv.replace_extension(".truth.csv");
  fs::path config_echo = out;
  config_echo.replace_extension(".config.json");

  if (spec.kind == SystemKind::Ode) {
    const TrajectorySeries traj = integrate_ode(spec, spec.initial_state, dt, steps);
    if (traj.divergence_step)
      std::cerr << "warning: trajectory diverged at step " << *traj.divergence_step
                << "; wrote the valid prefix\n";

    RenderConfig rc = cfg.render_config();
    if (cfg.number_list("render.window").empty()) rc.world_window = spec.recommended_window;
    cfg.set("render.window", json::array({rc.world_window(0), rc.world_window(1),
                                          rc.world_window(2), rc.world_window(3)}));
    FrameSequence seq = render_object_video(traj, rc);
    seq.meta["system"] = spec.name;
    save_sequence(seq, out);
    save_trajectory_csv(traj, truth_csv);
    cfg.echo(config_echo);

    std::cout << "wrote " << out.string() << " (" << seq.count() << " frames, " << seq.width
              << "x" << seq.height << ", dt=" << dt << ")\n";
  } else {
    const int grid_n = cfg.integer("dynamics.grid") > 0
                           ? static_cast<int>(cfg.integer("dynamics.grid"))
                           : spec.recommended_grid;
    cfg.set("dynamics.grid", static_cast<long long>(grid_n));
    const double h = spec.domain_length / grid_n;
    const GridSpec grid{grid_n, grid_n, h, h};
    const auto seed = static_cast<std::uint64_t>(cfg.integer("render.seed"));
    const FieldSeries fields = integrate_pde(spec, grid, spec.initial_field(grid, seed), dt,
                                             steps);
    if (fields.divergence_step)
      std::cerr << "warning: field integration diverged at step " << *fields.divergence_step
                << "; wrote the valid prefix\n";

    if (out.extension() == ".seq") {
      // Video with the channels tiled vertically, each over its exact value
      // range so extraction can invert to physical units up to quantization.
      FrameSequence seq = render_fields_tiled(fields);
      seq.meta["system"] = spec.name;
      save_sequence(seq, out);
      std::cout << "wrote " << out.string() << " (" << seq.count() << " frames tiling channels "
                << join_names(fields.channel_names) << ", " << seq.width << "x" << seq.height
                << ", dt=" << dt << ")\n";
    } else {
      save_fields(fields, out);
      std::cout << "wrote " << out.string() << " (" << fields.steps() << " steps, channels "
                << join_names(fields.channel_names) << ", " << grid.rows << "x" << grid.cols
                << ", dt=" << dt << ")\n";
    }
    save_trajectory_csv(field_means(fields), truth_csv, fields.channel_names);
    cfg.echo(config_echo);
  }

  std::cout << "ground truth:\n";
  for (const auto& eq : truth_equation_strings(spec)) std::cout << "  " << eq << "\n";
  std::cout << "truth trajectory: " << truth_csv.string() << "\n"
            << "config echo: " << config_echo.string() << "\n";
  return kExitOk;
}

// ---------------------------------------------------------------------------
// discover
// ---------------------------------------------------------------------------

struct DiscoverArgs {
  CommonFlags common;
  std::string in;
  std::string mode;
  std::string advisor;
  std::string run_dir;
  long long horizon = 0;
  long long train_steps = 0;
  long long seed = 0;
};

json final_json(const RunHistory& history) {
  json out{{"schema_version", 1},
           {"termination_reason", history.termination_reason},
           {"iterations", history.iterations.size()},
           {"best_iteration", history.best_iteration}};
  if (!history.error.empty()) out["error"] = history.error;
  if (history.best_iteration >= 0) {
    const DiagnosticReport& best =
        history.iterations[static_cast<std::size_t>(history.best_iteration)].report;
    out["equations"] = best.equations;
    json metrics{{"r2", r2_json(best.r2)},
                 {"l0", best.l0},
                 {"rmse", best.rmse},
                 {"vps", static_cast<long long>(best.vps)},
                 {"horizon", static_cast<long long>(best.horizon)}};
    if (best.recon_error) metrics["recon_error"] = *best.recon_error;
    if (best.divergence_step)
      metrics["divergence_step"] = static_cast<long long>(*best.divergence_step);
    out["metrics"] = metrics;
    const std::string iter_dir = "iter_" + std::to_string(history.best_iteration);
    out["artifacts"] = {{"model", iter_dir + "/model.json"},
                        {"report", iter_dir + "/report.json"},
                        {"extracted", iter_dir + "/extracted.csv"}};
  } else {
    out["equations"] = json::array();
    out["metrics"] = json::object();
  }
  return out;
}

int cmd_discover(const CLI::App* cmd, const DiscoverArgs& a) {
  CliConfig cfg = resolve_config(a.common);
  try {
    if (cmd->count("--mode")) cfg.set("planner.mode", a.mode);
    if (cmd->count("--advisor")) cfg.set("planner.advisor", a.advisor);
    if (cmd->count("--horizon")) cfg.set("planner.horizon", a.horizon);
    if (cmd->count("--train-steps")) cfg.set("planner.train_steps", a.train_steps);
    if (cmd->count("--seed")) cfg.set("planner.seed", a.seed);
  } catch (const std::exception& e) {
    throw UsageError(e.what());
  }

  if (!fs::exists(a.in)) throw UsageError("input file not found: " + a.in);
  RunConfig rc = discovery_config(cfg);

  const fs::path in_path(a.in);
  const fs::path dir = !a.run_dir.empty()
                           ? fs::path(a.run_dir)
                           : run_root() / (in_path.stem().string() + "-" +
                                           run_mode_name(rc.mode) + "-seed" +
                                           std::to_string(rc.seed));
  fs::create_directories(dir);

  RunHistory history;
  const FileKind kind = peek_file_kind(in_path);
  if (kind == FileKind::FrameSequenceFile) {
    const FrameSequence seq = load_sequence(in_path);
    if (seq.meta.value("kind", "object") == "field") {
      if (rc.mode != RunMode::Pixel)
        throw UsageError("input " + a.in + " is a rendered field video; use --mode pixel");
      const FieldSeries fields = fields_from_video(seq, a.in);
      cfg.echo(dir / "config.json");
      history = run_discovery(fields, rc, dir);
    } else {
      if (rc.mode == RunMode::Pixel)
        throw UsageError("pixel mode consumes field data, but " + a.in +
                         " is an object video; use --mode object or --mode representation");
      if (!rc.track.world_window && seq.meta.contains("world_window")) {
        const auto w = seq.meta["world_window"].get<std::vector<double>>();
        if (w.size() == 4) rc.track.world_window = Eigen::Vector4d(w[0], w[1], w[2], w[3]);
      }
      cfg.echo(dir / "config.json");
      history = run_discovery(seq, rc, dir);
    }
  } else if (kind == FileKind::FieldSeriesFile) {
    if (rc.mode != RunMode::Pixel)
      throw UsageError("field input requires --mode pixel: " + a.in);
    const FieldSeries fields = load_fields(in_path);
    cfg.echo(dir / "config.json");
    history = run_discovery(fields, rc, dir);
  } else {
    throw UsageError("unrecognized input file (expected a frame-sequence or field file): " +
                     a.in);
  }

  const json final = final_json(history);
  {
    std::ofstream out(dir / "final.json");
    out << final.dump(2) << '\n';
  }

  std::cout << "run directory: " << dir.string() << "\n"
            << "termination: " << history.termination_reason;
  if (!history.error.empty()) std::cout << " (" << history.error << ")";
  std::cout << "\n";
  if (history.best_iteration >= 0) {
    const DiagnosticReport& best =
        history.iterations[static_cast<std::size_t>(history.best_iteration)].report;
    std::cout << "best iteration: " << history.best_iteration << " of "
              << history.iterations.size() << "\n";
    for (const auto& eq : best.equations) std::cout << "  " << eq << "\n";
    std::cout << "r2=" << fmt_sig(best.r2, 6) << " l0=" << best.l0 << " rmse="
              << fmt_sig(best.rmse, 6) << " vps=" << best.vps << "/" << best.horizon << "\n";
  }

  if (history.termination_reason == "accepted") return kExitOk;
  if (history.termination_reason == "failed") return kExitFailure;
  return kExitStopped;  // budget_exhausted / ladders_exhausted
}

// ---------------------------------------------------------------------------
// eval
// ---------------------------------------------------------------------------

struct EvalArgs {
  CommonFlags common;
  std::string model;
  std::string truth;
  std::string out;
  long long horizon = 0;
};

json load_json_file(const std::string& path, const char* what) {
  std::ifstream in(path);
  if (!in) throw UsageError(std::string(what) + " file not found: " + path);
  try {
    return json::parse(in);
  } catch (const json::parse_error& e) {
    throw UsageError(std::string(what) + " file " + path + " is not valid JSON: " + e.what());
  }
}

int cmd_eval(const EvalArgs& a) {
  CliConfig cfg = resolve_config(a.common);
  if (!fs::exists(a.model)) throw UsageError("model file not found: " + a.model);
  if (!fs::exists(a.truth)) throw UsageError("truth file not found: " + a.truth);

  SparseModel model;
  try {
    model = model_from_json(load_json_file(a.model, "model"));
  } catch (const UsageError&) {
    throw;
  } catch (const std::exception& e) {
    throw UsageError("model file " + a.model + ": " + e.what());
  }

  const double eps = cfg.number("evaluate.vps_epsilon");
  json metrics;
  TrajectorySeries plot_pred, plot_ref;
  Eigen::Index horizon = 0;

  if (peek_file_kind(a.truth) == FileKind::FieldSeriesFile) {
    const FieldSeries truth = load_fields(a.truth);
    if (static_cast<Eigen::Index>(truth.channel_names.size()) !=
        static_cast<Eigen::Index>(model.library_spec.var_names.size()))
      throw UsageError("model has " + std::to_string(model.library_spec.var_names.size()) +
                       " channels but truth has " + std::to_string(truth.channel_names.size()));
    horizon = a.horizon > 0 ? std::min<Eigen::Index>(a.horizon, truth.steps() - 1)
                            : truth.steps() - 1;

    std::vector<Matrix> initial;
    for (const auto& ch : truth.channels) initial.push_back(ch.front());
    const FieldSeries sim =
        integrate_pde(make_model_field_rhs(model, truth.grid), truth.grid, initial,
                      truth.channel_names, truth.dt(), horizon, truth.times(0));
    const FieldSeries ref = truth.slice(0, horizon + 1);

    // Derivative-fit R^2 on the same sparse pixel sampling the discovery run
    // uses (planner.pixel_train_steps / pixel_samples / seed).
    const Eigen::Index train_count =
        std::min<Eigen::Index>(cfg.integer("planner.pixel_train_steps") + 1, truth.steps());
    std::vector<std::string> wanted = model.library_spec.var_names;
    wanted.insert(wanted.end(), model.library_spec.custom.begin(),
                  model.library_spec.custom.end());
    const FieldFeatures features = apply_stencils(truth.slice(0, train_count), wanted);
    const Eigen::Index n_samples = std::min<Eigen::Index>(
        cfg.integer("planner.pixel_samples"),
        static_cast<Eigen::Index>(truth.grid.rows) * truth.grid.cols);
    const StencilFeatures sampled = sample_pixels(features, n_samples,
                                                  static_cast<std::uint64_t>(
                                                      cfg.integer("planner.seed")));
    const Matrix lhs = sampled.time_derivative(model.library_spec.var_names);
    const Matrix Z = sampled.stacked(model.library_spec.var_names, 1, sampled.steps() - 1);
    const CandidateLibrary theta =
        model.library_spec.custom.empty()
            ? build_library(Z, model.library_spec)
            : build_library(Z, sampled.stacked(model.library_spec.custom, 1,
                                               sampled.steps() - 1),
                            model.library_spec);
    const double r2 = r2_score(lhs, theta.matrix * model.xi);

    metrics = {{"r2", r2_json(r2)},
               {"l0", complexity(model)},
               {"rmse", rmse(sim, ref)},
               {"vps", static_cast<long long>(vps(sim, ref, eps))},
               {"horizon", static_cast<long long>(horizon)}};
    if (sim.divergence_step)
      metrics["divergence_step"] = static_cast<long long>(*sim.divergence_step);
    const auto& names = truth.channel_names;
    if (std::find(names.begin(), names.end(), "u") != names.end() &&
        std::find(names.begin(), names.end(), "v") != names.end())
      metrics["curl_error"] = curl_error(sim, ref);
    plot_pred = field_means(sim);
    plot_ref = field_means(ref);
  } else {
    TrajectorySeries truth;
    try {
      truth = load_trajectory_csv(a.truth);
    } catch (const std::exception& e) {
      throw UsageError(e.what());
    }
    if (model.state_dim != truth.dim())
      throw UsageError("model has " + std::to_string(model.state_dim) +
                       " state dimensions but truth has " + std::to_string(truth.dim()));
    horizon = a.horizon > 0 ? a.horizon : truth.samples() - 1;
    const TrajectorySeries ref =
        truth.head(std::min<Eigen::Index>(truth.samples(), horizon + 1));
    TrajectorySeries pred =
        extrapolate(model, ref.states.row(0).transpose(), ref.dt(), horizon);
    const auto diverged = pred.divergence_step;
    if (pred.samples() > ref.samples()) pred = pred.head(ref.samples());

    const double r2 = pred.samples() >= 2
                          ? r2_score(ref.states.topRows(pred.samples()), pred.states)
                          : -std::numeric_limits<double>::infinity();
    metrics = {{"r2", r2_json(r2)},
               {"l0", complexity(model)},
               {"rmse", rmse(pred, ref)},
               {"vps", static_cast<long long>(vps(pred, ref, eps))},
               {"horizon", static_cast<long long>(horizon)}};
    if (diverged) metrics["divergence_step"] = static_cast<long long>(*diverged);
    plot_pred = std::move(pred);
    plot_ref = ref;
  }

  json result{{"schema_version", 1},
              {"model", a.model},
              {"truth", a.truth},
              {"equations", to_symbolic(model)},
              {"metrics", metrics}};
  std::cout << result.dump(2) << "\n";

  if (!a.out.empty()) {
    fs::create_directories(a.out);
    DiagnosticReport report;
    report.r2 = metrics["r2"].is_string() ? -std::numeric_limits<double>::infinity()
                                          : metrics["r2"].get<double>();
    report.l0 = metrics["l0"].get<int>();
    report.rmse = metrics["rmse"].get<double>();
    report.vps = metrics["vps"].get<long long>();
    report.horizon = horizon;
    if (metrics.contains("divergence_step"))
      report.divergence_step = metrics["divergence_step"].get<long long>();
    report.equations = to_symbolic(model);
    report.tool_params = {{"model", a.model}, {"truth", a.truth}};
    emit_report(report, plot_pred, plot_ref, a.out);
    std::ofstream mfile(fs::path(a.out) / "metrics.json");
    mfile << result.dump(2) << '\n';
    std::cout << "plots: " << a.out << "\n";
  }
  return kExitOk;
}

// ---------------------------------------------------------------------------
// sweep
// ---------------------------------------------------------------------------

struct SweepArgs {
  CommonFlags common;
  std::string system;
  std::string mode;
  std::string out;
  long long seeds = 5;
  long long jobs = 0;
  long long steps = 0;
  double dt = 0.0;
  long long grid = 0;
};

struct SeedResult {
  long long seed = 0;
  bool ok = false;
  std::string termination;
  std::string error;
  bool terms_found = false;
  bool support_known = false;
  int false_positives = 0;
  double r2 = 0.0;
  double rmse = 0.0;
  double vps = 0.0;
};

/// Terms Found (all true terms present, every dimension) and False Positives
/// (discovered terms outside the registered true support), by feature name.
std::pair<bool, int> compare_support(const SparseModel& model, const TruthSupport& truth) {
  bool all_found = true;
  int false_positives = 0;
  const int dims = std::min<int>(model.state_dim, static_cast<int>(truth.size()));
  for (int d = 0; d < dims; ++d) {
    std::set<std::string> discovered;
    for (int f : model.support(d)) discovered.insert(model.names[static_cast<std::size_t>(f)]);
    std::set<std::string> expected;
    for (const TruthTerm& term : truth[static_cast<std::size_t>(d)])
      expected.insert(term.feature);
    for (const auto& name : expected)
      if (!discovered.count(name)) all_found = false;
    for (const auto& name : discovered)
      if (!expected.count(name)) ++false_positives;
  }
  if (static_cast<int>(truth.size()) != model.state_dim) all_found = false;
  return {all_found, false_positives};
}

struct Aggregate {
  double mean = 0.0;
  double std = 0.0;
};

Aggregate aggregate(const std::vector<double>& xs) {
  Aggregate a;
  if (xs.empty()) return a;
  for (double x : xs) a.mean += x;
  a.mean /= static_cast<double>(xs.size());
  for (double x : xs) a.std += (x - a.mean) * (x - a.mean);
  a.std = std::sqrt(a.std / static_cast<double>(xs.size()));
  return a;
}

int cmd_sweep(const CLI::App* cmd, const SweepArgs& a) {
  CliConfig cfg = resolve_config(a.common);
  try {
    if (cmd->count("--system")) cfg.set("dynamics.system", a.system);
    if (cmd->count("--mode")) cfg.set("planner.mode", a.mode);
    if (cmd->count("--steps")) cfg.set("dynamics.steps", a.steps);
    if (cmd->count("--dt")) cfg.set("dynamics.dt", a.dt);
    if (cmd->count("--grid")) cfg.set("dynamics.grid", a.grid);
  } catch (const std::exception& e) {
    throw UsageError(e.what());
  }
  if (a.seeds < 1) throw UsageError("--seeds must be at least 1");

  const SystemSpec spec = lookup_system(cfg);
  if (spec.kind == SystemKind::Pde) {
    if (cfg.text("planner.mode") == "object") cfg.set("planner.mode", std::string("pixel"));
    if (cfg.text("planner.mode") != "pixel")
      throw UsageError("field systems sweep in pixel mode, got --mode " +
                       cfg.text("planner.mode"));
  } else if (cfg.text("planner.mode") == "pixel") {
    throw UsageError("trajectory systems sweep in object or representation mode");
  }

  const double dt = cfg.number("dynamics.dt") > 0 ? cfg.number("dynamics.dt")
                                                  : spec.recommended_dt;
  const auto steps = cfg.integer("dynamics.steps") > 0
                         ? static_cast<Eigen::Index>(cfg.integer("dynamics.steps"))
                         : static_cast<Eigen::Index>(spec.recommended_steps);
  const int grid_n = cfg.integer("dynamics.grid") > 0
                         ? static_cast<int>(cfg.integer("dynamics.grid"))
                         : spec.recommended_grid;
  cfg.set("dynamics.dt", dt);
  cfg.set("dynamics.steps", static_cast<long long>(steps));
  cfg.set("dynamics.grid", static_cast<long long>(grid_n));

  const fs::path dir = !a.out.empty()
                           ? fs::path(a.out)
                           : run_root() / ("sweep-" + spec.name + "-" + cfg.text("planner.mode"));
  fs::create_directories(dir);
  cfg.echo(dir / "config.json");

  const json resolved = cfg.resolved();
  std::vector<SeedResult> results(static_cast<std::size_t>(a.seeds));
  std::atomic<long long> next{0};

  auto worker = [&] {
    for (long long s = next.fetch_add(1); s < a.seeds; s = next.fetch_add(1)) {
      SeedResult& row = results[static_cast<std::size_t>(s)];
      row.seed = s;
      try {
        CliConfig run_cfg;
        for (const auto& [key, value] : resolved.items()) run_cfg.set(key, value);
        run_cfg.set("planner.seed", s);
        run_cfg.set("render.seed", s);
        RunConfig rc = run_cfg.run_config();
        const fs::path seed_dir = dir / ("seed_" + std::to_string(s));

        RunHistory history;
        if (spec.kind == SystemKind::Ode) {
          const TrajectorySeries traj = integrate_ode(spec, spec.initial_state, dt, steps);
          RenderConfig render = run_cfg.render_config();
          if (run_cfg.number_list("render.window").empty())
            render.world_window = spec.recommended_window;
          const FrameSequence seq = render_object_video(traj, render);
          if (!rc.track.world_window) rc.track.world_window = render.world_window;
          history = run_discovery(seq, rc, seed_dir);
        } else {
          const double h = spec.domain_length / grid_n;
          const GridSpec grid{grid_n, grid_n, h, h};
          const FieldSeries fields = integrate_pde(
              spec, grid, spec.initial_field(grid, static_cast<std::uint64_t>(s)), dt, steps);
          history = run_discovery(fields, rc, seed_dir);
        }

        row.termination = history.termination_reason;
        row.error = history.error;
        if (history.best_iteration < 0) continue;
        const DiagnosticReport& best =
            history.iterations[static_cast<std::size_t>(history.best_iteration)].report;
        row.ok = true;
        row.r2 = best.r2;
        row.rmse = best.rmse;
        row.vps = static_cast<double>(best.vps);
        if (spec.truth) {
          row.support_known = true;
          const auto [found, fp] = compare_support(history.final_model, *spec.truth);
          row.terms_found = found;
          row.false_positives = fp;
        }
      } catch (const std::exception& e) {
        row.ok = false;
        row.termination = "failed";
        row.error = e.what();
      }
    }
  };

  const long long hw = std::max(1u, std::thread::hardware_concurrency());
  const long long jobs = std::clamp<long long>(a.jobs > 0 ? a.jobs : hw, 1, a.seeds);
  std::vector<std::thread> pool;
  for (long long j = 0; j < jobs; ++j) pool.emplace_back(worker);
  for (auto& t : pool) t.join();

  // Per-seed rows.
  {
    std::ofstream out(dir / "seeds.csv");
    out << "seed,termination,terms_found,false_positives,r2,rmse,vps,error\n"
        << std::setprecision(17);
    for (const SeedResult& r : results) {
      out << r.seed << "," << r.termination << ",";
      if (r.ok && r.support_known) out << (r.terms_found ? 1 : 0) << "," << r.false_positives;
      else out << ",";
      out << ",";
      if (r.ok) out << r.r2 << "," << r.rmse << "," << r.vps;
      else out << ",,";
      out << ",\"" << r.error << "\"\n";
    }
  }

  std::vector<double> found, fps, r2s, rmses, vpss;
  int failed = 0;
  for (const SeedResult& r : results) {
    if (!r.ok) {
      ++failed;
      continue;
    }
    if (r.support_known) {
      found.push_back(r.terms_found ? 1.0 : 0.0);
      fps.push_back(r.false_positives);
    }
    r2s.push_back(r.r2);
    rmses.push_back(r.rmse);
    vpss.push_back(r.vps);
  }
  const Aggregate ag_found = aggregate(found), ag_fp = aggregate(fps), ag_r2 = aggregate(r2s),
                  ag_rmse = aggregate(rmses), ag_vps = aggregate(vpss);

  {
    std::ofstream out(dir / "sweep.csv");
    out << "metric,mean,std,n\n" << std::setprecision(17);
    out << "terms_found_rate," << ag_found.mean << "," << ag_found.std << "," << found.size()
        << "\n";
    out << "false_positives," << ag_fp.mean << "," << ag_fp.std << "," << fps.size() << "\n";
    out << "r2," << ag_r2.mean << "," << ag_r2.std << "," << r2s.size() << "\n";
    out << "rmse," << ag_rmse.mean << "," << ag_rmse.std << "," << rmses.size() << "\n";
    out << "vps," << ag_vps.mean << "," << ag_vps.std << "," << vpss.size() << "\n";
  }

  std::ostringstream md;
  const auto pm = [](const Aggregate& g, int digits = 4) {
    return fmt_sig(g.mean, digits) + " ± " + fmt_sig(g.std, digits);
  };
  md << "| System | Mode | Seeds | Terms Found | False Positives | R² | RMSE | VPS |\n"
     << "|---|---|---|---|---|---|---|---|\n"
     << "| " << spec.name << " | " << cfg.text("planner.mode") << " | " << (a.seeds - failed)
     << "/" << a.seeds << " | " << (found.empty() ? "n/a" : fmt_sig(ag_found.mean)) << " | "
     << (fps.empty() ? "n/a" : pm(ag_fp, 3)) << " | " << pm(ag_r2, 5) << " | " << pm(ag_rmse, 4)
     << " | " << pm(ag_vps, 5) << " |\n";
  {
    std::ofstream out(dir / "sweep.md");
    out << md.str();
  }

  std::cout << md.str() << "sweep directory: " << dir.string() << "\n";
  if (failed > 0)
    std::cerr << "warning: " << failed << " of " << a.seeds << " seeds failed (see seeds.csv)\n";
  return failed == static_cast<int>(a.seeds) ? kExitFailure : kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{
      "Discover governing equations from synthetic videos of dynamical systems:\n"
      "generate recordings, run the iterative variable-extraction + sparse-regression\n"
      "loop, rescore saved models, and aggregate seed sweeps."};
  app.require_subcommand(1);

  GenArgs gen_args;
  CLI::App* gen = app.add_subcommand(
      "gen", "Integrate a built-in system and write a recording plus its ground truth");
  gen->add_option("--system", gen_args.system,
                  "System name (" + join_names(system_names()) + ")");
  gen->add_option("--out", gen_args.out, "Output file (.seq video or .fld field history)");
  gen->add_option("--steps", gen_args.steps, "Integration steps (default: system choice)");
  gen->add_option("--dt", gen_args.dt, "Time step (default: system choice)");
  gen->add_option("--grid", gen_args.grid, "Field grid size N for NxN (field systems)");
  gen->add_option("--canvas", gen_args.canvas, "Video canvas size in pixels");
  gen->add_option("--noise-sigma", gen_args.noise_sigma, "Gaussian pixel noise sigma");
  gen->add_option("--seed", gen_args.seed, "Data seed (noise / initial field)");
  add_common(gen, gen_args.common);

  DiscoverArgs discover_args;
  CLI::App* discover =
      app.add_subcommand("discover", "Run the iterative discovery loop on a recording");
  discover->add_option("--in", discover_args.in, "Input recording (.seq or .fld)")->required();
  discover->add_option("--mode", discover_args.mode,
                       "Extraction mode: object, pixel, or representation");
  discover->add_option("--run-dir", discover_args.run_dir,
                       "Run directory (default: $P2P_RUN_ROOT or ./runs, auto-named)");
  discover->add_option("--advisor", discover_args.advisor,
                       "External advisor: shell command or http://host:port/path");
  discover->add_option("--horizon", discover_args.horizon, "Evaluation horizon in steps");
  discover->add_option("--train-steps", discover_args.train_steps,
                       "Leading steps used for fitting");
  discover->add_option("--seed", discover_args.seed, "Sampling / training seed");
  add_common(discover, discover_args.common);

  EvalArgs eval_args;
  CLI::App* eval =
      app.add_subcommand("eval", "Rescore a saved model against a truth file");
  eval->add_option("--model", eval_args.model, "model.json from a discovery run")->required();
  eval->add_option("--truth", eval_args.truth, "Truth trajectory .csv or field .fld")
      ->required();
  eval->add_option("--horizon", eval_args.horizon, "Override the evaluation horizon");
  eval->add_option("--out", eval_args.out, "Directory for plots and metrics.json");
  add_common(eval, eval_args.common);

  SweepArgs sweep_args;
  CLI::App* sweep = app.add_subcommand(
      "sweep", "Run discovery across seeds and aggregate a benchmark table");
  sweep->add_option("--system", sweep_args.system, "System to generate and discover");
  sweep->add_option("--mode", sweep_args.mode, "Extraction mode (default by system kind)");
  sweep->add_option("--seeds", sweep_args.seeds, "Number of seeds (0..N-1), default 5");
  sweep->add_option("--jobs", sweep_args.jobs, "Parallel seed runs (default: hardware)");
  sweep->add_option("--out", sweep_args.out, "Sweep directory");
  sweep->add_option("--steps", sweep_args.steps, "Integration steps (default: system choice)");
  sweep->add_option("--dt", sweep_args.dt, "Time step (default: system choice)");
  sweep->add_option("--grid", sweep_args.grid, "Field grid size (field systems)");
  add_common(sweep, sweep_args.common);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitUsage;
  }

  try {
    if (*gen) return cmd_gen(gen, gen_args);
    if (*discover) return cmd_discover(discover, discover_args);
    if (*eval) return cmd_eval(eval_args);
    if (*sweep) return cmd_sweep(sweep, sweep_args);
  } catch (const UsageError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitFailure;
  }
  return kExitUsage;
}
