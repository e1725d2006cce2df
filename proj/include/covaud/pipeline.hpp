#pragma once

#include <chrono>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "covaud/analysis.hpp"
#include "covaud/corpus.hpp"
#include "covaud/error.hpp"
#include "covaud/geo.hpp"
#include "covaud/matching.hpp"

namespace covaud {

inline constexpr std::string_view kToolVersion = "1.0.0";

enum class Stage { Consolidate, Scan, Extract, Match, Analyze };

inline constexpr Stage kAllStages[] = {Stage::Consolidate, Stage::Scan, Stage::Extract, Stage::Match,
                                       Stage::Analyze};

std::string_view to_string(Stage s);
std::optional<Stage> parse_stage(std::string_view s);

/// A stage threw something other than a parse or configuration error.
class StageError : public Error {
 public:
  StageError(Stage stage, const std::string& what) : Error(what), stage_(stage) {}
  [[nodiscard]] Stage stage() const { return stage_; }

 private:
  Stage stage_;
};

enum class GeocoderKind { None, Live, Replay, Gazetteer };

struct PipelineConfig {
  std::filesystem::path data_dir;
  std::filesystem::path run_dir = "run";

  // consolidate
  std::optional<std::filesystem::path> floodlist;
  std::optional<std::filesystem::path> emdat;
  std::optional<std::filesystem::path> dfo;

  // scan
  std::optional<std::filesystem::path> corpus;
  std::optional<CorpusFormat> corpus_format;  // from the extension when unset
  double threshold = kDefaultRelevanceThreshold;
  std::string scorer = "builtin";
  bool substring = false;

  // extract
  std::optional<std::filesystem::path> gazetteer;
  std::optional<std::filesystem::path> kb;
  GeocoderKind geocoder = GeocoderKind::None;
  std::optional<std::filesystem::path> replay;
  std::optional<std::string> geocoder_url;
  unsigned max_inflight = 2;
  int min_delay_ms = 1000;
  int max_retries = 2;
  bool refresh = false;
  std::optional<std::filesystem::path> cache_dir;

  // match
  Strategy strategy = Strategy::Ymd;
  int window_days = kDefaultWindowDays;

  // analyze
  std::optional<std::filesystem::path> indicators;
  std::optional<std::filesystem::path> labels;
  std::vector<Axis> axes{std::begin(kAllAxes), std::end(kAllAxes)};
  std::size_t min_country_events = 5;
  std::size_t top_domains = 10;
  UnknownFatalities unknown_fatalities = UnknownFatalities::Zero;

  unsigned jobs = 1;
};

/// "none", "live", "gazetteer" or "replay:<path>". Throws ConfigError.
void apply_geocoder_spec(PipelineConfig& config, std::string_view spec, const std::filesystem::path& base_dir);

/// Reads an INI file with sections [paths], [scan], [extract], [match],
/// [analyze] and [run] on top of `defaults`. Relative paths are taken from
/// the file's directory. Throws ConfigError.
PipelineConfig load_config(const std::filesystem::path& ini, PipelineConfig defaults = {});

/// Settings that influence outputs, for hashing.
nlohmann::json to_json(const PipelineConfig& c);

struct StageRecord {
  Stage stage = Stage::Consolidate;
  /// "ran", "reused" or "failed".
  std::string status;
  std::string fingerprint;
  double duration_ms = 0.0;
  nlohmann::json counts = nlohmann::json::object();
  std::map<std::string, std::string> outputs;  // file name -> sha256
  std::string error;
};

struct RunManifest {
  std::string tool_version{kToolVersion};
  std::string config_hash;
  std::map<std::string, std::string> input_digests;  // role -> sha256
  std::vector<StageRecord> stages;                   // pipeline order
  nlohmann::json counts = nlohmann::json::object();

  [[nodiscard]] const StageRecord* find(Stage s) const;
};

nlohmann::json to_json(const RunManifest& m);
RunManifest manifest_from_json(const nlohmann::json& j);

struct RunOptions {
  /// Reuse outputs whose fingerprint is unchanged.
  bool resume = true;
};

class Pipeline {
 public:
  explicit Pipeline(PipelineConfig config);
  ~Pipeline();
  Pipeline(const Pipeline&) = delete;
  Pipeline& operator=(const Pipeline&) = delete;

  /// Replaces the configured geocoder client (tests, instrumentation).
  void set_geocoder(GeocoderClient* client) { injected_client_ = client; }

  /// Throws ConfigError when an input needed by `stages` is missing, either
  /// as a file or as an upstream output that will not be produced.
  void validate(std::span<const Stage> stages) const;

  /// Validates, then runs `stages` in pipeline order and writes
  /// manifest.json. Throws ParseError for unreadable inputs and StageError
  /// for other failures; the manifest marks the failed stage either way.
  RunManifest run(std::span<const Stage> stages, const RunOptions& options = {});

  [[nodiscard]] const PipelineConfig& config() const { return config_; }
  [[nodiscard]] std::filesystem::path manifest_path() const { return config_.run_dir / "manifest.json"; }

 private:
  struct Context;

  nlohmann::json run_consolidate(Context& ctx);
  nlohmann::json run_scan(Context& ctx);
  nlohmann::json run_extract(Context& ctx);
  nlohmann::json run_match(Context& ctx);
  nlohmann::json run_analyze(Context& ctx);

  [[nodiscard]] std::vector<std::string> stage_outputs(Stage s) const;
  [[nodiscard]] std::vector<std::filesystem::path> stage_upstream_files(Stage s) const;
  [[nodiscard]] std::map<std::string, std::filesystem::path> stage_inputs(Stage s) const;
  [[nodiscard]] nlohmann::json stage_settings(Stage s) const;
  [[nodiscard]] std::string fingerprint(Stage s) const;

  PipelineConfig config_;
  GeocoderClient* injected_client_ = nullptr;
};

/// Output files of a stage, relative to the run directory.
std::vector<std::string> stage_output_names(Stage s, std::span<const Axis> axes);

}  // namespace covaud
