#pragma once

#include "pixphys/extract.hpp"
#include "pixphys/planner.hpp"
#include "pixphys/render.hpp"

#include <json.hpp>

#include <filesystem>
#include <map>
#include <string>
#include <vector>

namespace pixphys {

/// Layered key-value configuration for the command-line tools: built-in
/// defaults, overlaid by a JSON config file, overlaid by `--set key=value`
/// flags (last writer wins). Keys are dotted module.option names; a config
/// file may nest objects (`{"planner": {"r2_min": 0.97}}`) or use the flat
/// dotted form directly. Unknown keys are rejected naming the nearest known
/// key; values must match the key's declared type. `dynamics.params.<system>.
/// <param>` is an open namespace of numeric system-parameter overrides.
class CliConfig {
 public:
  enum class KeyKind { Number, Integer, Boolean, Text, NumberList, IntegerList, TextList };

  CliConfig();

  /// Overlays a JSON config file (nested or flat dotted keys).
  void load_file(const std::filesystem::path& path);
  /// Overlays one `key=value` assignment. The value text is parsed as JSON
  /// when possible (numbers, booleans, arrays) and taken verbatim otherwise.
  void set_flag(const std::string& assignment);
  void set(const std::string& key, nlohmann::json value);

  double number(const std::string& key) const;
  long long integer(const std::string& key) const;
  bool boolean(const std::string& key) const;
  const std::string& text(const std::string& key) const;
  std::vector<double> number_list(const std::string& key) const;
  std::vector<int> integer_list(const std::string& key) const;
  std::vector<std::string> text_list(const std::string& key) const;

  /// Overrides registered under dynamics.params.<system>.* as a flat
  /// param-name -> value map.
  std::map<std::string, double> system_params(const std::string& system) const;

  /// The fully resolved flat key -> value map (defaults included).
  nlohmann::json resolved() const;
  /// Writes resolved() as pretty JSON, the replayable record of a run.
  void echo(const std::filesystem::path& path) const;

  /// Module configs assembled from the current values.
  RenderConfig render_config() const;
  TrackConfig track_config() const;
  AutoencoderConfig autoencoder_config() const;
  /// Full discovery config (planner.*, regress.*, evaluate.*, extract.*);
  /// validated before returning.
  RunConfig run_config() const;

  static const std::vector<std::string>& known_keys();

 private:
  nlohmann::json values_;  // flat dotted-key -> value, always fully populated
};

/// Closest known key by edit distance, for "did you mean" suggestions.
std::string nearest_key(const std::string& key, const std::vector<std::string>& known);

}  // namespace pixphys
