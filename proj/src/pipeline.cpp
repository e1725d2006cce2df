#include "covaud/pipeline.hpp"

#include <algorithm>
#include <charconv>
#include <cstdlib>
#include <fstream>
#include <set>
#include <sstream>

#include <CLI11.hpp>

#include "covaud/digest.hpp"
#include "covaud/extract.hpp"
#include "covaud/ground_truth.hpp"
#include "covaud/text.hpp"

namespace covaud {

namespace fs = std::filesystem;
using nlohmann::json;

std::string_view to_string(Stage s) {
  switch (s) {
    case Stage::Consolidate: return "consolidate";
    case Stage::Scan: return "scan";
    case Stage::Extract: return "extract";
    case Stage::Match: return "match";
    case Stage::Analyze: return "analyze";
  }
  return "consolidate";
}

std::optional<Stage> parse_stage(std::string_view s) {
  for (const auto stage : kAllStages) {
    if (to_string(stage) == s) return stage;
  }
  return std::nullopt;
}

namespace {

constexpr std::string_view kEnvCacheDir = "COVAUD_CACHE_DIR";

std::string_view to_string(GeocoderKind k) {
  switch (k) {
    case GeocoderKind::None: return "none";
    case GeocoderKind::Live: return "live";
    case GeocoderKind::Replay: return "replay";
    case GeocoderKind::Gazetteer: return "gazetteer";
  }
  return "none";
}

fs::path resolve_path(const fs::path& base, const std::string& raw) {
  fs::path p(raw);
  if (p.is_relative() && !base.empty()) p = base / p;
  return p.lexically_normal();
}

long long parse_int(const std::string& raw, std::string_view key, long long lo, long long hi) {
  long long v = 0;
  const auto* end = raw.data() + raw.size();
  const auto [ptr, ec] = std::from_chars(raw.data(), end, v);
  if (ec != std::errc() || ptr != end || v < lo || v > hi) {
    throw ConfigError(std::string(key) + ": expected an integer in [" + std::to_string(lo) + ", " +
                      std::to_string(hi) + "], got '" + raw + "'");
  }
  return v;
}

double parse_double(const std::string& raw, std::string_view key, double lo, double hi) {
  try {
    std::size_t used = 0;
    const double v = std::stod(raw, &used);
    if (used == raw.size() && v >= lo && v <= hi) return v;
  } catch (const std::exception&) {
  }
  throw ConfigError(std::string(key) + ": expected a number in [" + std::to_string(lo) + ", " + std::to_string(hi) +
                    "], got '" + raw + "'");
}

bool parse_bool(const std::string& raw, std::string_view key) {
  const auto v = text::to_lower(raw);
  if (v == "true" || v == "1" || v == "yes" || v == "on") return true;
  if (v == "false" || v == "0" || v == "no" || v == "off") return false;
  throw ConfigError(std::string(key) + ": expected true or false, got '" + raw + "'");
}

std::optional<CorpusFormat> guess_format(const fs::path& corpus) {
  auto name = text::to_lower(corpus.filename().string());
  if (name.ends_with(".gz")) name.resize(name.size() - 3);
  if (name.ends_with(".xml")) return CorpusFormat::MediawikiXml;
  if (name.ends_with(".jsonl") || name.ends_with(".json") || name.ends_with(".ndjson")) return CorpusFormat::Jsonl;
  return std::nullopt;
}

std::string format_name(CorpusFormat f) { return f == CorpusFormat::MediawikiXml ? "xml" : "jsonl"; }

void write_file_atomic(const fs::path& path, const std::string& content) {
  const auto tmp = fs::path(path.string() + ".tmp");
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write " + tmp.string());
    out << content;
    if (!out) throw IoError("write failed: " + tmp.string());
  }
  fs::rename(tmp, path);
}

std::ifstream open_read(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  return in;
}

std::string opt_path(const std::optional<fs::path>& p) { return p ? p->string() : std::string(); }

}  // namespace

void apply_geocoder_spec(PipelineConfig& config, std::string_view spec, const fs::path& base_dir) {
  const auto v = text::trim(spec);
  if (v == "none") {
    config.geocoder = GeocoderKind::None;
  } else if (v == "live") {
    config.geocoder = GeocoderKind::Live;
  } else if (v == "gazetteer") {
    config.geocoder = GeocoderKind::Gazetteer;
  } else if (v.starts_with("replay:") && v.size() > 7) {
    config.geocoder = GeocoderKind::Replay;
    config.replay = resolve_path(base_dir, v.substr(7));
  } else {
    throw ConfigError("geocoder must be none, live, gazetteer or replay:<path>, got '" + v + "'");
  }
}

PipelineConfig load_config(const fs::path& ini, PipelineConfig c) {
  std::ifstream in(ini);
  if (!in) throw ConfigError("cannot open config file " + ini.string());
  const auto base = ini.has_parent_path() ? fs::absolute(ini).parent_path() : fs::current_path();

  std::vector<CLI::ConfigItem> items;
  try {
    items = CLI::ConfigINI().from_config(in);
  } catch (const CLI::Error& e) {
    throw ConfigError(ini.string() + ": " + e.what());
  }

  for (const auto& item : items) {
    if (item.name == "--" || item.name == "++") continue;
    if (item.parents.size() != 1) {
      throw ConfigError(ini.string() + ": key '" + item.name + "' must sit inside one [section]");
    }
    const auto section = text::to_lower(item.parents.front());
    const auto key = section + "." + item.name;
    const auto list = [&] {
      std::string joined;
      for (const auto& v : item.inputs) {
        if (!joined.empty()) joined += ',';
        joined += v;
      }
      return joined;
    };
    const auto value = [&] {
      if (item.inputs.size() != 1) throw ConfigError(key + ": quote values that contain spaces or commas");
      return item.inputs.front();
    };
    const auto path = [&] { return resolve_path(base, value()); };

    if (section == "paths") {
      if (item.name == "data_dir") c.data_dir = path();
      else if (item.name == "run_dir") c.run_dir = path();
      else if (item.name == "floodlist") c.floodlist = path();
      else if (item.name == "emdat") c.emdat = path();
      else if (item.name == "dfo") c.dfo = path();
      else if (item.name == "corpus") c.corpus = path();
      else if (item.name == "gazetteer") c.gazetteer = path();
      else if (item.name == "kb") c.kb = path();
      else if (item.name == "indicators") c.indicators = path();
      else if (item.name == "labels") c.labels = path();
      else if (item.name == "cache_dir") c.cache_dir = path();
      else throw ConfigError("unknown key " + key);
    } else if (section == "consolidate") {
      throw ConfigError("unknown key " + key);
    } else if (section == "scan") {
      if (item.name == "format") {
        const auto f = value();
        if (f == "auto") {
          c.corpus_format.reset();
        } else {
          c.corpus_format = parse_corpus_format(f);
          if (!c.corpus_format) throw ConfigError(key + ": expected jsonl, xml or auto");
        }
      } else if (item.name == "threshold") {
        c.threshold = parse_double(value(), key, 0.0, 1.0);
      } else if (item.name == "scorer") {
        c.scorer = value();
      } else if (item.name == "substring") {
        c.substring = parse_bool(value(), key);
      } else {
        throw ConfigError("unknown key " + key);
      }
    } else if (section == "extract") {
      if (item.name == "geocoder") apply_geocoder_spec(c, value(), base);
      else if (item.name == "geocoder_url") c.geocoder_url = value();
      else if (item.name == "max_inflight") c.max_inflight = static_cast<unsigned>(parse_int(value(), key, 1, 64));
      else if (item.name == "min_delay_ms") c.min_delay_ms = static_cast<int>(parse_int(value(), key, 0, 600000));
      else if (item.name == "max_retries") c.max_retries = static_cast<int>(parse_int(value(), key, 0, 10));
      else if (item.name == "refresh") c.refresh = parse_bool(value(), key);
      else throw ConfigError("unknown key " + key);
    } else if (section == "match") {
      if (item.name == "strategy") {
        const auto s = parse_strategy(value());
        if (!s) throw ConfigError(key + ": expected ymd or ym");
        c.strategy = *s;
      } else if (item.name == "window_days") {
        c.window_days = static_cast<int>(parse_int(value(), key, 0, 366));
      } else {
        throw ConfigError("unknown key " + key);
      }
    } else if (section == "analyze") {
      if (item.name == "axes") {
        c.axes = parse_axes(list());
      } else if (item.name == "min_country_events") {
        c.min_country_events = static_cast<std::size_t>(parse_int(value(), key, 0, 1'000'000));
      } else if (item.name == "top_domains") {
        c.top_domains = static_cast<std::size_t>(parse_int(value(), key, 1, 1'000'000));
      } else if (item.name == "fatalities_unknown") {
        const auto u = parse_unknown_fatalities(value());
        if (!u) throw ConfigError(key + ": expected zero or exclude");
        c.unknown_fatalities = *u;
      } else {
        throw ConfigError("unknown key " + key);
      }
    } else if (section == "run") {
      if (item.name == "jobs") c.jobs = static_cast<unsigned>(parse_int(value(), key, 1, 256));
      else throw ConfigError("unknown key " + key);
    } else {
      throw ConfigError("unknown section [" + item.parents.front() + "]");
    }
  }
  return c;
}

json to_json(const PipelineConfig& c) {
  json axes = json::array();
  for (const auto a : c.axes) axes.push_back(to_string(a));
  return json{{"paths",
               {{"data_dir", c.data_dir.string()},
                {"floodlist", opt_path(c.floodlist)},
                {"emdat", opt_path(c.emdat)},
                {"dfo", opt_path(c.dfo)},
                {"corpus", opt_path(c.corpus)},
                {"gazetteer", opt_path(c.gazetteer)},
                {"kb", opt_path(c.kb)},
                {"indicators", opt_path(c.indicators)},
                {"labels", opt_path(c.labels)}}},
              {"scan",
               {{"format", c.corpus_format ? format_name(*c.corpus_format) : "auto"},
                {"threshold", c.threshold},
                {"scorer", c.scorer},
                {"substring", c.substring}}},
              {"extract",
               {{"geocoder", to_string(c.geocoder)},
                {"replay", opt_path(c.replay)},
                {"geocoder_url", c.geocoder_url.value_or("")},
                {"max_retries", c.max_retries}}},
              {"match", {{"strategy", to_string(c.strategy)}, {"window_days", c.window_days}}},
              {"analyze",
               {{"axes", std::move(axes)},
                {"min_country_events", c.min_country_events},
                {"top_domains", c.top_domains},
                {"fatalities_unknown", c.unknown_fatalities == UnknownFatalities::Zero ? "zero" : "exclude"}}}};
}

// ---------------------------------------------------------------------------

const StageRecord* RunManifest::find(Stage s) const {
  for (const auto& r : stages) {
    if (r.stage == s) return &r;
  }
  return nullptr;
}

json to_json(const RunManifest& m) {
  json stages = json::array();
  for (const auto& s : m.stages) {
    json j{{"stage", to_string(s.stage)},
           {"status", s.status},
           {"fingerprint", s.fingerprint},
           {"duration_ms", s.duration_ms},
           {"counts", s.counts},
           {"outputs", s.outputs}};
    if (!s.error.empty()) j["error"] = s.error;
    stages.push_back(std::move(j));
  }
  return json{{"tool_version", m.tool_version},
              {"config_hash", m.config_hash},
              {"input_digests", m.input_digests},
              {"stages", std::move(stages)},
              {"counts", m.counts}};
}

RunManifest manifest_from_json(const json& j) {
  try {
    RunManifest m;
    m.tool_version = j.at("tool_version").get<std::string>();
    m.config_hash = j.at("config_hash").get<std::string>();
    m.input_digests = j.at("input_digests").get<std::map<std::string, std::string>>();
    for (const auto& s : j.at("stages")) {
      StageRecord r;
      const auto stage = parse_stage(s.at("stage").get<std::string>());
      if (!stage) throw ParseError("unknown stage in manifest");
      r.stage = *stage;
      r.status = s.at("status").get<std::string>();
      r.fingerprint = s.at("fingerprint").get<std::string>();
      r.duration_ms = s.value("duration_ms", 0.0);
      r.counts = s.value("counts", json::object());
      r.outputs = s.at("outputs").get<std::map<std::string, std::string>>();
      r.error = s.value("error", "");
      m.stages.push_back(std::move(r));
    }
    m.counts = j.value("counts", json::object());
    return m;
  } catch (const json::exception& e) {
    throw ParseError(std::string("malformed manifest: ") + e.what());
  }
}

std::vector<std::string> stage_output_names(Stage s, std::span<const Axis> axes) {
  switch (s) {
    case Stage::Consolidate: return {"all_events.jsonl", "events.jsonl", "venn.json", "rejects.jsonl"};
    case Stage::Scan: return {"candidates.jsonl", "scan_rejects.jsonl"};
    case Stage::Extract: return {"resolved.jsonl"};
    case Stage::Match: return {"matches.jsonl"};
    case Stage::Analyze: {
      std::vector<std::string> out{"report.json", "evaluation.json", "domains.csv"};
      for (const auto a : axes) out.push_back("report_" + std::string(to_string(a)) + ".csv");
      return out;
    }
  }
  return {};
}

// ---------------------------------------------------------------------------

namespace {

std::vector<Stage> stage_dependencies(Stage s) {
  switch (s) {
    case Stage::Consolidate:
    case Stage::Scan: return {};
    case Stage::Extract: return {Stage::Scan};
    case Stage::Match: return {Stage::Consolidate, Stage::Extract};
    case Stage::Analyze: return {Stage::Consolidate, Stage::Scan, Stage::Match};
  }
  return {};
}

Stage producer_of(const std::string& file) {
  if (file == "events.jsonl" || file == "all_events.jsonl") return Stage::Consolidate;
  if (file == "candidates.jsonl") return Stage::Scan;
  if (file == "resolved.jsonl") return Stage::Extract;
  return Stage::Match;
}

}  // namespace

struct Pipeline::Context {
  std::optional<CountryRegistry> registry;

  const CountryRegistry& countries(const fs::path& data_dir) {
    if (!registry) registry = CountryRegistry::load_dir(data_dir);
    return *registry;
  }
};

Pipeline::Pipeline(PipelineConfig config) : config_(std::move(config)) {}
Pipeline::~Pipeline() = default;

std::vector<std::string> Pipeline::stage_outputs(Stage s) const { return stage_output_names(s, config_.axes); }

std::vector<fs::path> Pipeline::stage_upstream_files(Stage s) const {
  const auto& run = config_.run_dir;
  switch (s) {
    case Stage::Consolidate:
    case Stage::Scan: return {};
    case Stage::Extract: return {run / "candidates.jsonl"};
    case Stage::Match: return {run / "events.jsonl", run / "resolved.jsonl"};
    case Stage::Analyze: return {run / "events.jsonl", run / "matches.jsonl", run / "candidates.jsonl"};
  }
  return {};
}

std::map<std::string, fs::path> Pipeline::stage_inputs(Stage s) const {
  std::map<std::string, fs::path> in;
  const auto add = [&](const std::string& role, const std::optional<fs::path>& p) {
    if (p) in.emplace(role, *p);
  };
  const auto add_registry = [&] {
    in.emplace("countries", config_.data_dir / "countries.tsv");
    in.emplace("country_aliases", config_.data_dir / "country_aliases.tsv");
  };
  switch (s) {
    case Stage::Consolidate:
      add("floodlist", config_.floodlist);
      add("emdat", config_.emdat);
      add("dfo", config_.dfo);
      add_registry();
      break;
    case Stage::Scan: add("corpus", config_.corpus); break;
    case Stage::Extract:
      add("gazetteer", config_.gazetteer);
      add("kb", config_.kb);
      if (config_.geocoder == GeocoderKind::Replay) add("replay", config_.replay);
      add_registry();
      break;
    case Stage::Match: add_registry(); break;
    case Stage::Analyze:
      add("indicators", config_.indicators);
      add("labels", config_.labels);
      add_registry();
      break;
  }
  return in;
}

json Pipeline::stage_settings(Stage s) const {
  const auto all = to_json(config_);
  switch (s) {
    case Stage::Consolidate: return json::object();
    case Stage::Scan: return all.at("scan");
    case Stage::Extract: return all.at("extract");
    case Stage::Match: return all.at("match");
    case Stage::Analyze: return all.at("analyze");
  }
  return json::object();
}

std::string Pipeline::fingerprint(Stage s) const {
  json inputs = json::object();
  for (const auto& [role, path] : stage_inputs(s)) inputs[role] = sha256_file(path);
  json upstream = json::object();
  for (const auto& path : stage_upstream_files(s)) upstream[path.filename().string()] = sha256_file(path);
  const json doc{{"stage", to_string(s)},
                 {"tool_version", kToolVersion},
                 {"settings", stage_settings(s)},
                 {"inputs", std::move(inputs)},
                 {"upstream", std::move(upstream)}};
  return sha256_hex(doc.dump());
}

void Pipeline::validate(std::span<const Stage> stages) const {
  const auto requested = [&](Stage s) { return std::find(stages.begin(), stages.end(), s) != stages.end(); };
  std::vector<std::string> problems;
  const auto need_file = [&](const std::optional<fs::path>& p, std::string_view what) {
    if (!p) {
      problems.push_back(std::string(what) + " is not configured");
    } else if (!fs::is_regular_file(*p)) {
      problems.push_back(std::string(what) + " not found: " + p->string());
    }
  };

  for (const auto s : stages) {
    switch (s) {
      case Stage::Consolidate:
        if (!config_.floodlist && !config_.emdat && !config_.dfo) {
          problems.emplace_back("consolidate needs at least one of floodlist, emdat, dfo");
        }
        if (config_.floodlist) need_file(config_.floodlist, "floodlist file");
        if (config_.emdat) need_file(config_.emdat, "emdat file");
        if (config_.dfo) need_file(config_.dfo, "dfo file");
        break;
      case Stage::Scan:
        need_file(config_.corpus, "corpus");
        if (config_.corpus && !config_.corpus_format && !guess_format(*config_.corpus)) {
          problems.push_back("cannot tell the corpus format of " + config_.corpus->string() + "; set --format");
        }
        try {
          make_scorer(config_.scorer);
        } catch (const ConfigError& e) {
          problems.emplace_back(e.what());
        }
        break;
      case Stage::Extract:
        need_file(config_.gazetteer, "gazetteer");
        need_file(config_.kb, "knowledge base");
        if (config_.geocoder == GeocoderKind::Replay && injected_client_ == nullptr) {
          need_file(config_.replay, "geocoder replay file");
        }
        break;
      case Stage::Match: break;
      case Stage::Analyze:
        need_file(config_.indicators, "indicators file");
        if (config_.labels) need_file(config_.labels, "labels file");
        break;
    }
    for (const auto& f : stage_upstream_files(s)) {
      const auto producer = producer_of(f.filename().string());
      if (!requested(producer) && !fs::is_regular_file(f)) {
        problems.push_back(std::string(to_string(s)) + " needs " + f.string() + " (run " +
                           std::string(to_string(producer)) + " first)");
      }
    }
  }
  for (const auto* name : {"countries.tsv", "country_aliases.tsv"}) {
    if (!fs::is_regular_file(config_.data_dir / name)) {
      problems.push_back("data file not found: " + (config_.data_dir / name).string());
    }
  }
  if (config_.jobs == 0) problems.emplace_back("jobs must be at least 1");
  if (config_.window_days < 0) problems.emplace_back("window-days must not be negative");

  if (!problems.empty()) {
    std::string msg = "invalid configuration:";
    for (const auto& p : problems) msg += "\n  " + p;
    throw ConfigError(msg);
  }
}

RunManifest Pipeline::run(std::span<const Stage> stages, const RunOptions& options) {
  validate(stages);
  fs::create_directories(config_.run_dir);

  RunManifest previous;
  bool have_previous = false;
  if (fs::is_regular_file(manifest_path())) {
    try {
      auto in = open_read(manifest_path());
      previous = manifest_from_json(json::parse(in));
      have_previous = true;
    } catch (const std::exception&) {
      // unreadable manifest: nothing can be reused
    }
  }

  RunManifest manifest;
  manifest.config_hash = sha256_hex(to_json(config_).dump());
  for (const auto s : kAllStages) {
    for (const auto& [role, path] : stage_inputs(s)) {
      if (fs::is_regular_file(path)) manifest.input_digests[role] = sha256_file(path);
    }
  }

  std::map<Stage, StageRecord> records;
  if (have_previous) {
    for (const auto& r : previous.stages) {
      if (r.status != "failed") records[r.stage] = r;
    }
  }

  const auto write_manifest = [&] {
    manifest.stages.clear();
    for (const auto s : kAllStages) {
      if (const auto it = records.find(s); it != records.end()) manifest.stages.push_back(it->second);
    }
    json counts = json::object();
    const auto pull = [&](Stage s, const char* from, const char* to) {
      const auto it = records.find(s);
      if (it != records.end() && it->second.counts.contains(from)) counts[to] = it->second.counts[from];
    };
    pull(Stage::Consolidate, "records_parsed", "records_parsed");
    pull(Stage::Consolidate, "events_consolidated", "events_consolidated");
    pull(Stage::Consolidate, "events_ground_truth", "events_ground_truth");
    pull(Stage::Scan, "articles", "articles");
    pull(Stage::Scan, "candidates_extracted", "candidates_extracted");
    pull(Stage::Scan, "candidates_scored", "candidates_scored");
    pull(Stage::Extract, "candidates_resolved", "candidates_resolved");
    pull(Stage::Extract, "resolved_tuples", "resolved_tuples");
    pull(Stage::Match, "matches", "matches");
    pull(Stage::Match, "matched_candidates", "matched_candidates");
    pull(Stage::Match, "matched_events", "matched_events");
    manifest.counts = std::move(counts);
    write_file_atomic(manifest_path(), to_json(manifest).dump(2) + "\n");
  };

  Context ctx;
  std::set<Stage> ran;
  for (const auto s : kAllStages) {
    if (std::find(stages.begin(), stages.end(), s) == stages.end()) continue;

    const auto deps = stage_dependencies(s);
    const bool upstream_ran = std::any_of(deps.begin(), deps.end(), [&](Stage d) { return ran.count(d) != 0; });
    std::string fp;
    try {
      fp = fingerprint(s);
    } catch (const IoError&) {
      fp.clear();  // an input vanished after validation; the stage will report it
    }

    if (options.resume && !upstream_ran && !fp.empty()) {
      const auto it = records.find(s);
      if (it != records.end() && it->second.fingerprint == fp) {
        bool intact = true;
        for (const auto& name : stage_outputs(s)) {
          const auto path = config_.run_dir / name;
          const auto recorded = it->second.outputs.find(name);
          if (recorded == it->second.outputs.end() || !fs::is_regular_file(path) ||
              sha256_file(path) != recorded->second) {
            intact = false;
            break;
          }
        }
        if (intact) {
          it->second.status = "reused";
          it->second.duration_ms = 0.0;
          continue;
        }
      }
    }

    StageRecord record;
    record.stage = s;
    record.fingerprint = fp;
    const auto started = std::chrono::steady_clock::now();
    const auto elapsed_ms = [&] {
      return std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - started).count();
    };
    const auto fail = [&](const std::string& what) {
      record.status = "failed";
      record.error = what;
      record.duration_ms = elapsed_ms();
      records[s] = record;
      write_manifest();
    };
    try {
      switch (s) {
        case Stage::Consolidate: record.counts = run_consolidate(ctx); break;
        case Stage::Scan: record.counts = run_scan(ctx); break;
        case Stage::Extract: record.counts = run_extract(ctx); break;
        case Stage::Match: record.counts = run_match(ctx); break;
        case Stage::Analyze: record.counts = run_analyze(ctx); break;
      }
    } catch (const ParseError& e) {
      fail(e.what());
      throw;
    } catch (const ConfigError& e) {
      fail(e.what());
      throw;
    } catch (const std::exception& e) {
      fail(e.what());
      throw StageError(s, std::string(to_string(s)) + " failed: " + e.what());
    }
    record.duration_ms = elapsed_ms();
    record.status = "ran";
    if (record.fingerprint.empty()) record.fingerprint = fingerprint(s);
    for (const auto& name : stage_outputs(s)) record.outputs[name] = sha256_file(config_.run_dir / name);
    records[s] = std::move(record);
    ran.insert(s);
  }

  write_manifest();
  return manifest;
}

// ---------------------------------------------------------------------------

json Pipeline::run_consolidate(Context& ctx) {
  const auto& registry = ctx.countries(config_.data_dir);
  std::vector<SourceRecord> all;
  std::vector<RejectEntry> rejects;
  std::size_t excluded = 0;
  json per_source = json::object();
  const auto ingest = [&](const std::optional<fs::path>& path, Source source) {
    if (!path) return;
    auto parsed = parse_source_file(*path, source);
    per_source[std::string(to_string(source))] = parsed.records.size();
    excluded += parsed.excluded;
    all.insert(all.end(), std::make_move_iterator(parsed.records.begin()),
               std::make_move_iterator(parsed.records.end()));
    rejects.insert(rejects.end(), parsed.rejects.begin(), parsed.rejects.end());
  };
  ingest(config_.floodlist, Source::Floodlist);
  ingest(config_.emdat, Source::Emdat);
  ingest(config_.dfo, Source::Dfo);

  auto prepared = prepare_records(all, registry);
  rejects.insert(rejects.end(), prepared.rejects.begin(), prepared.rejects.end());
  const auto events = consolidate(prepared.records);
  const auto ground_truth = filter_multi_source(events);

  std::ostringstream all_out;
  write_events_jsonl(all_out, events);
  write_file_atomic(config_.run_dir / "all_events.jsonl", all_out.str());
  std::ostringstream gt_out;
  write_events_jsonl(gt_out, ground_truth);
  write_file_atomic(config_.run_dir / "events.jsonl", gt_out.str());
  const json venn{{"all_events", venn_to_json(venn_counts(events))},
                  {"events_consolidated", events.size()},
                  {"events_ground_truth", ground_truth.size()}};
  write_file_atomic(config_.run_dir / "venn.json", venn.dump(2) + "\n");
  std::ostringstream rej_out;
  for (const auto& r : rejects) rej_out << to_json(r).dump() << '\n';
  write_file_atomic(config_.run_dir / "rejects.jsonl", rej_out.str());

  return json{{"records_parsed", all.size()},
              {"records_by_source", std::move(per_source)},
              {"records_rejected", rejects.size() - prepared.rejects.size()},
              {"records_unresolved_country", prepared.rejects.size()},
              {"records_excluded", excluded},
              {"events_consolidated", events.size()},
              {"events_ground_truth", ground_truth.size()}};
}

json Pipeline::run_scan(Context&) {
  const auto format = config_.corpus_format ? *config_.corpus_format : *guess_format(*config_.corpus);
  auto input = open_input(*config_.corpus);
  ArticleReader reader(*input, format);
  const auto scorer = make_scorer(config_.scorer);
  ScanOptions options;
  options.threshold = config_.threshold;
  options.keyword_mode = config_.substring ? KeywordMode::Substring : KeywordMode::WordBoundary;
  options.jobs = config_.jobs;
  const auto result = scan_corpus(reader, *scorer, options);

  std::ostringstream out;
  write_candidates_jsonl(out, result.retained);
  write_file_atomic(config_.run_dir / "candidates.jsonl", out.str());
  std::ostringstream rej;
  for (const auto& r : result.rejects) rej << json{{"position", r.position}, {"reason", r.reason}}.dump() << '\n';
  for (const auto& f : result.scorer_failures) rej << json{{"scorer_failure", f}}.dump() << '\n';
  write_file_atomic(config_.run_dir / "scan_rejects.jsonl", rej.str());

  return json{{"articles", result.articles},
              {"skipped_pages", result.skipped_pages},
              {"article_rejects", result.rejects.size()},
              {"candidates_extracted", result.candidates_extracted},
              {"below_threshold", result.below_threshold},
              {"scorer_failures", result.scorer_failures.size()},
              {"candidates_scored", result.retained.size()}};
}

json Pipeline::run_extract(Context& ctx) {
  const auto& registry = ctx.countries(config_.data_dir);
  auto in = open_read(config_.run_dir / "candidates.jsonl");
  const auto candidates = read_candidates_jsonl(in);
  const auto gazetteer = Gazetteer::load(*config_.gazetteer);
  const auto kb = KnowledgeBase::load(*config_.kb, registry);
  const AliasScanInferencer inferencer(registry);
  const GazetteerExtractor extractor(gazetteer);

  std::unique_ptr<GeocoderClient> owned;
  std::unique_ptr<GeocoderClient> throttled;
  GeocoderClient* client = injected_client_;
  std::string cache_name;
  if (client == nullptr) {
    switch (config_.geocoder) {
      case GeocoderKind::None: break;
      case GeocoderKind::Replay:
        owned = std::make_unique<ReplayGeocoder>(ReplayGeocoder::load(*config_.replay));
        client = owned.get();
        cache_name = "geocoder_cache_replay_" + sha256_file(*config_.replay).substr(0, 12) + ".jsonl";
        break;
      case GeocoderKind::Gazetteer:
        owned = std::make_unique<GazetteerGeocoder>(gazetteer);
        client = owned.get();
        cache_name = "geocoder_cache_gazetteer.jsonl";
        break;
      case GeocoderKind::Live: {
        const auto url = config_.geocoder_url.value_or(HttpGeocoder::endpoint_from_env());
        owned = std::make_unique<HttpGeocoder>(url, registry);
        throttled = std::make_unique<ThrottledGeocoder>(*owned, config_.max_inflight,
                                                        std::chrono::milliseconds(config_.min_delay_ms));
        client = throttled.get();
        cache_name = "geocoder_cache_live_" + sha256_hex(url).substr(0, 12) + ".jsonl";
        break;
      }
    }
  }

  std::unique_ptr<GeoCache> cache;
  if (client != nullptr) {
    if (cache_name.empty()) {
      cache = std::make_unique<GeoCache>();
    } else {
      fs::path dir = config_.run_dir / "cache";
      if (config_.cache_dir) {
        dir = *config_.cache_dir;
      } else if (const char* env = std::getenv(std::string(kEnvCacheDir).c_str()); env != nullptr && *env != '\0') {
        dir = env;
      }
      cache = std::make_unique<GeoCache>(dir / cache_name, config_.refresh);
    }
  }

  RetryPolicy retry;
  retry.max_retries = config_.max_retries;
  GeoResolver resolver(kb, registry, inferencer, client, cache.get(), retry);
  const auto result = extract_all(candidates, extractor, resolver, config_.jobs);

  std::ostringstream out;
  write_resolved_jsonl(out, result.resolved);
  write_file_atomic(config_.run_dir / "resolved.jsonl", out.str());

  auto counts = to_json(result.stats);
  counts["candidates_resolved"] = result.stats.resolved;
  counts["resolved_tuples"] = result.resolved.size();
  counts["remote_queries"] = resolver.remote_queries();
  counts["remote_failures"] = resolver.remote_failures();
  return counts;
}

json Pipeline::run_match(Context& ctx) {
  const auto& registry = ctx.countries(config_.data_dir);
  auto events_in = open_read(config_.run_dir / "events.jsonl");
  EventIndex index(read_events_jsonl(events_in, registry));
  auto resolved_in = open_read(config_.run_dir / "resolved.jsonl");
  const auto resolved = read_resolved_jsonl(resolved_in, registry);
  const auto matches = match_all(resolved, index, config_.strategy, config_.window_days, config_.jobs);

  std::ostringstream out;
  write_matches_jsonl(out, matches);
  write_file_atomic(config_.run_dir / "matches.jsonl", out.str());

  std::set<LabelKey> sentences;
  std::set<std::string> events;
  for (const auto& m : matches) {
    sentences.emplace(m.article_id, m.sentence_index);
    events.insert(m.event_id);
  }
  return json{{"matches", matches.size()},
              {"matched_candidates", sentences.size()},
              {"matched_events", events.size()},
              {"strategy", to_string(config_.strategy)}};
}

json Pipeline::run_analyze(Context& ctx) {
  const auto& registry = ctx.countries(config_.data_dir);
  auto events_in = open_read(config_.run_dir / "events.jsonl");
  const auto events = read_events_jsonl(events_in, registry);
  auto matches_in = open_read(config_.run_dir / "matches.jsonl");
  const auto matches = read_matches_jsonl(matches_in, registry);
  auto candidates_in = open_read(config_.run_dir / "candidates.jsonl");
  const auto candidates = read_candidates_jsonl(candidates_in);
  const auto indicators = IndicatorTable::load(*config_.indicators);

  StratifyOptions options;
  options.min_country_events = config_.min_country_events;
  options.unknown_fatalities = config_.unknown_fatalities;

  json axes = json::object();
  for (const auto axis : config_.axes) {
    const auto report = stratify(events, matches, indicators, axis, options);
    axes[std::string(to_string(axis))] = to_json(report);
    std::ostringstream csv_out;
    write_axis_csv(csv_out, report);
    write_file_atomic(config_.run_dir / ("report_" + std::string(to_string(axis)) + ".csv"), csv_out.str());
  }

  std::set<LabelKey> matched_keys;
  for (const auto& m : matches) matched_keys.emplace(m.article_id, m.sentence_index);
  std::vector<CandidateSentence> matched;
  for (const auto& c : candidates) {
    if (matched_keys.count({c.article_id, c.sentence_index}) != 0) matched.push_back(c);
  }
  const auto domains = extract_reference_domains(matched, config_.top_domains);
  std::ostringstream dom_out;
  write_domains_csv(dom_out, domains);
  write_file_atomic(config_.run_dir / "domains.csv", dom_out.str());

  Labels labels;
  if (config_.labels) {
    auto in = open_read(*config_.labels);
    labels = read_labels(in, config_.labels->filename().string());
  }
  const auto eval = evaluate(matches, labels, events);
  const auto rate = hit_rate(events, matches);
  auto eval_json = to_json(eval);
  eval_json["labels_supplied"] = config_.labels.has_value();
  eval_json["strategy"] = to_string(config_.strategy);
  write_file_atomic(config_.run_dir / "evaluation.json", eval_json.dump(2) + "\n");

  const json report{{"strategy", to_string(config_.strategy)},
                    {"window_days", config_.window_days},
                    {"ground_truth_events", events.size()},
                    {"matched_events", eval.hits},
                    {"hit_rate_pct", rate ? json(round_half_up(*rate)) : json(nullptr)},
                    {"axes", std::move(axes)},
                    {"domains", to_json(domains)},
                    {"evaluation", eval_json}};
  write_file_atomic(config_.run_dir / "report.json", report.dump(2) + "\n");

  return json{{"ground_truth_events", events.size()},
              {"matched_events", eval.hits},
              {"hit_rate_pct", rate ? json(round_half_up(*rate)) : json(nullptr)},
              {"matched_candidates", matched.size()},
              {"citation_urls", domains.total_urls},
              {"unparsable_urls", domains.unparsable}};
}

}  // namespace covaud
