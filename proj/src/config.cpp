#include "pixphys/config.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <sstream>
#include <stdexcept>

namespace pixphys {
namespace {

using nlohmann::json;

constexpr const char* kParamPrefix = "dynamics.params.";

struct KeySpec {
  CliConfig::KeyKind kind;
  json default_value;
};

const std::map<std::string, KeySpec>& registry() {
  using K = CliConfig::KeyKind;
  static const std::map<std::string, KeySpec> reg = {
      {"dynamics.system", {K::Text, ""}},
      {"dynamics.dt", {K::Number, 0.0}},          // 0 = system recommendation
      {"dynamics.steps", {K::Integer, 0}},        // 0 = system recommendation
      {"dynamics.grid", {K::Integer, 0}},         // 0 = system recommendation
      {"render.canvas", {K::Integer, 64}},
      {"render.ball_radius", {K::Number, 3.0}},
      {"render.background", {K::Number, 0.0}},
      {"render.noise_sigma", {K::Number, 0.0}},
      {"render.seed", {K::Integer, 0}},
      {"render.window", {K::NumberList, json::array()}},  // empty = system's
      {"extract.threshold", {K::Number, 0.3}},
      {"extract.min_area", {K::Integer, 4}},
      {"extract.background", {K::Number, 0.0}},
      {"extract.static_eps", {K::Number, 2.0}},
      {"extract.match_radius", {K::Number, 6.0}},
      {"extract.autoencoder.hidden", {K::IntegerList, json::array({128, 32})}},
      {"extract.autoencoder.learning_rate", {K::Number, 1e-3}},
      {"extract.autoencoder.lr_decay", {K::Number, 0.1}},
      {"extract.autoencoder.momentum", {K::Number, 0.9}},
      {"extract.autoencoder.epochs", {K::Integer, 500}},
      {"extract.autoencoder.batch_size", {K::Integer, 32}},
      {"regress.poly_degree", {K::Integer, 3}},
      {"regress.max_poly_degree", {K::Integer, 5}},
      {"regress.include_trig", {K::Boolean, false}},
      {"regress.operators", {K::TextList, json::array()}},  // empty = Δ, Δ²
      {"evaluate.vps_epsilon", {K::Number, 0.5}},
      {"planner.mode", {K::Text, "object"}},
      {"planner.max_iterations", {K::Integer, 5}},
      {"planner.r2_min", {K::Number, 0.95}},
      {"planner.vps_min_fraction", {K::Number, 0.9}},
      {"planner.l0_max", {K::Integer, 0}},  // 0 = automatic bound
      {"planner.lambda_sp_ladder", {K::NumberList, json::array({0.02, 0.05, 0.1, 0.2, 0.5})}},
      {"planner.lambda_sp_start", {K::Integer, 1}},
      {"planner.lambda_eq_ladder", {K::NumberList, json::array({0.1, 1.0, 10.0})}},
      {"planner.horizon", {K::Integer, 1000}},
      {"planner.train_steps", {K::Integer, 200}},
      {"planner.pixel_train_steps", {K::Integer, 100}},
      {"planner.pixel_samples", {K::Integer, 1024}},
      {"planner.recon_error_max", {K::Number, 1e-3}},
      {"planner.smoothness_max", {K::Number, 0.5}},
      {"planner.latent_dim", {K::Integer, 2}},
      {"planner.seed", {K::Integer, 0}},
      {"planner.advisor", {K::Text, ""}},
      {"planner.advisor_timeout", {K::Number, 30.0}},
  };
  return reg;
}

bool integral_number(const json& v) {
  if (v.is_number_integer() || v.is_number_unsigned()) return true;
  if (!v.is_number()) return false;
  const double x = v.get<double>();
  return x == std::floor(x) && std::abs(x) < 9.0e15;
}

const char* kind_label(CliConfig::KeyKind kind) {
  using K = CliConfig::KeyKind;
  switch (kind) {
    case K::Number: return "a number";
    case K::Integer: return "an integer";
    case K::Boolean: return "a boolean";
    case K::Text: return "a string";
    case K::NumberList: return "an array of numbers";
    case K::IntegerList: return "an array of integers";
    case K::TextList: return "an array of strings";
  }
  return "a value";
}

void check_kind(const std::string& key, CliConfig::KeyKind kind, const json& value) {
  using K = CliConfig::KeyKind;
  bool ok = false;
  switch (kind) {
    case K::Number: ok = value.is_number(); break;
    case K::Integer: ok = integral_number(value); break;
    case K::Boolean: ok = value.is_boolean(); break;
    case K::Text: ok = value.is_string(); break;
    case K::NumberList:
      ok = value.is_array() && std::all_of(value.begin(), value.end(),
                                           [](const json& e) { return e.is_number(); });
      break;
    case K::IntegerList:
      ok = value.is_array() &&
           std::all_of(value.begin(), value.end(), integral_number);
      break;
    case K::TextList:
      ok = value.is_array() && std::all_of(value.begin(), value.end(),
                                           [](const json& e) { return e.is_string(); });
      break;
  }
  if (!ok)
    throw std::invalid_argument("config key '" + key + "' expects " + kind_label(kind) +
                                ", got " + value.dump());
}

std::vector<std::string> split_key(const std::string& key) {
  std::vector<std::string> parts;
  std::string part;
  std::istringstream in(key);
  while (std::getline(in, part, '.')) parts.push_back(part);
  return parts;
}

void flatten(const std::string& prefix, const json& node,
             std::vector<std::pair<std::string, json>>& out) {
  if (node.is_object()) {
    for (const auto& [k, v] : node.items())
      flatten(prefix.empty() ? k : prefix + "." + k, v, out);
  } else {
    out.emplace_back(prefix, node);
  }
}

std::size_t edit_distance(const std::string& a, const std::string& b) {
  std::vector<std::size_t> row(b.size() + 1);
  for (std::size_t j = 0; j <= b.size(); ++j) row[j] = j;
  for (std::size_t i = 1; i <= a.size(); ++i) {
    std::size_t diag = row[0];
    row[0] = i;
    for (std::size_t j = 1; j <= b.size(); ++j) {
      const std::size_t cost = a[i - 1] == b[j - 1] ? 0 : 1;
      const std::size_t next = std::min({row[j] + 1, row[j - 1] + 1, diag + cost});
      diag = row[j];
      row[j] = next;
    }
  }
  return row[b.size()];
}

}  // namespace

CliConfig::CliConfig() : values_(json::object()) {
  for (const auto& [key, spec] : registry()) values_[key] = spec.default_value;
}

void CliConfig::set(const std::string& key, json value) {
  if (key.rfind(kParamPrefix, 0) == 0) {
    if (split_key(key).size() != 4)
      throw std::invalid_argument("config key '" + key +
                                  "' must have the form dynamics.params.<system>.<param>");
    if (!value.is_number())
      throw std::invalid_argument("config key '" + key + "' expects a number, got " +
                                  value.dump());
    values_[key] = std::move(value);
    return;
  }
  const auto it = registry().find(key);
  if (it == registry().end())
    throw std::invalid_argument("unknown config key '" + key + "' (did you mean '" +
                                nearest_key(key, known_keys()) + "'?)");
  check_kind(key, it->second.kind, value);
  values_[key] = std::move(value);
}

void CliConfig::load_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::invalid_argument("config file not found: " + path.string());
  json doc;
  try {
    doc = json::parse(in);
  } catch (const json::parse_error& e) {
    throw std::invalid_argument("config file " + path.string() + ": " + e.what());
  }
  if (!doc.is_object())
    throw std::invalid_argument("config file " + path.string() + ": top level must be an object");
  std::vector<std::pair<std::string, json>> flat;
  flatten("", doc, flat);
  for (auto& [key, value] : flat) set(key, std::move(value));
}

void CliConfig::set_flag(const std::string& assignment) {
  const std::size_t eq = assignment.find('=');
  if (eq == std::string::npos || eq == 0)
    throw std::invalid_argument("--set expects key=value, got '" + assignment + "'");
  const std::string key = assignment.substr(0, eq);
  const std::string text = assignment.substr(eq + 1);
  json value = json::parse(text, nullptr, false);
  if (value.is_discarded()) value = text;  // unquoted strings pass through
  set(key, std::move(value));
}

namespace {
const nlohmann::json& fetch(const nlohmann::json& values, const std::string& key) {
  const auto it = values.find(key);
  if (it == values.end())
    throw std::invalid_argument("unknown config key '" + key + "' (did you mean '" +
                                nearest_key(key, CliConfig::known_keys()) + "'?)");
  return *it;
}
}  // namespace

double CliConfig::number(const std::string& key) const {
  return fetch(values_, key).get<double>();
}

long long CliConfig::integer(const std::string& key) const {
  const json& v = fetch(values_, key);
  return v.is_number_integer() || v.is_number_unsigned() ? v.get<long long>()
                                                         : static_cast<long long>(v.get<double>());
}

bool CliConfig::boolean(const std::string& key) const { return fetch(values_, key).get<bool>(); }

const std::string& CliConfig::text(const std::string& key) const {
  return fetch(values_, key).get_ref<const std::string&>();
}

std::vector<double> CliConfig::number_list(const std::string& key) const {
  return fetch(values_, key).get<std::vector<double>>();
}

std::vector<int> CliConfig::integer_list(const std::string& key) const {
  std::vector<int> out;
  for (const json& e : fetch(values_, key)) out.push_back(static_cast<int>(e.get<double>()));
  return out;
}

std::vector<std::string> CliConfig::text_list(const std::string& key) const {
  return fetch(values_, key).get<std::vector<std::string>>();
}

std::map<std::string, double> CliConfig::system_params(const std::string& system) const {
  const std::string prefix = kParamPrefix + system + ".";
  std::map<std::string, double> out;
  for (const auto& [key, value] : values_.items())
    if (key.rfind(prefix, 0) == 0) out[key.substr(prefix.size())] = value.get<double>();
  return out;
}

nlohmann::json CliConfig::resolved() const { return values_; }

void CliConfig::echo(const std::filesystem::path& path) const {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write config echo: " + path.string());
  out << values_.dump(2) << '\n';
}

RenderConfig CliConfig::render_config() const {
  RenderConfig rc;
  rc.canvas_width = rc.canvas_height = static_cast<int>(integer("render.canvas"));
  rc.ball_radius = number("render.ball_radius");
  rc.background = number("render.background");
  rc.noise_sigma = number("render.noise_sigma");
  rc.seed = static_cast<std::uint64_t>(integer("render.seed"));
  const auto window = number_list("render.window");
  if (!window.empty()) {
    if (window.size() != 4)
      throw std::invalid_argument(
          "config key 'render.window' expects [x_min, x_max, y_min, y_max]");
    rc.world_window = Eigen::Vector4d(window[0], window[1], window[2], window[3]);
  }
  return rc;
}

TrackConfig CliConfig::track_config() const {
  TrackConfig tc;
  tc.threshold = number("extract.threshold");
  tc.min_area = static_cast<int>(integer("extract.min_area"));
  tc.background = number("extract.background");
  tc.static_eps = number("extract.static_eps");
  tc.match_radius = number("extract.match_radius");
  return tc;
}

AutoencoderConfig CliConfig::autoencoder_config() const {
  AutoencoderConfig ac;
  ac.hidden = integer_list("extract.autoencoder.hidden");
  ac.learning_rate = number("extract.autoencoder.learning_rate");
  ac.lr_decay = number("extract.autoencoder.lr_decay");
  ac.momentum = number("extract.autoencoder.momentum");
  ac.epochs = static_cast<int>(integer("extract.autoencoder.epochs"));
  ac.batch_size = static_cast<int>(integer("extract.autoencoder.batch_size"));
  return ac;
}

RunConfig CliConfig::run_config() const {
  RunConfig rc;
  rc.mode = run_mode_from_name(text("planner.mode"));
  rc.max_iterations = static_cast<int>(integer("planner.max_iterations"));
  rc.r2_min = number("planner.r2_min");
  rc.vps_min_fraction = number("planner.vps_min_fraction");
  rc.l0_max = static_cast<int>(integer("planner.l0_max"));
  rc.lambda_sp_ladder = number_list("planner.lambda_sp_ladder");
  rc.lambda_eq_ladder = number_list("planner.lambda_eq_ladder");
  rc.lambda_sp_start = static_cast<int>(integer("planner.lambda_sp_start"));
  rc.horizon = integer("planner.horizon");
  rc.train_steps = integer("planner.train_steps");
  rc.pixel_train_steps = integer("planner.pixel_train_steps");
  rc.pixel_samples = integer("planner.pixel_samples");
  rc.poly_degree = static_cast<int>(integer("regress.poly_degree"));
  rc.max_poly_degree = static_cast<int>(integer("regress.max_poly_degree"));
  rc.include_trig = boolean("regress.include_trig");
  rc.operators = text_list("regress.operators");
  rc.recon_error_max = number("planner.recon_error_max");
  rc.smoothness_max = number("planner.smoothness_max");
  rc.vps_epsilon = number("evaluate.vps_epsilon");
  rc.seed = static_cast<std::uint64_t>(integer("planner.seed"));
  rc.track = track_config();
  rc.autoencoder = autoencoder_config();
  rc.latent_dim = static_cast<int>(integer("planner.latent_dim"));
  rc.advisor = text("planner.advisor");
  rc.advisor_timeout = number("planner.advisor_timeout");
  rc.validate();
  return rc;
}

const std::vector<std::string>& CliConfig::known_keys() {
  static const std::vector<std::string> keys = [] {
    std::vector<std::string> out;
    for (const auto& [key, spec] : registry()) out.push_back(key);
    return out;
  }();
  return keys;
}

std::string nearest_key(const std::string& key, const std::vector<std::string>& known) {
  std::string best;
  std::size_t best_distance = std::numeric_limits<std::size_t>::max();
  for (const std::string& candidate : known) {
    const std::size_t d = edit_distance(key, candidate);
    if (d < best_distance) {
      best_distance = d;
      best = candidate;
    }
  }
  return best;
}

}  // namespace pixphys
