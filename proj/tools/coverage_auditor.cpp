#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "covaud/pipeline.hpp"

#ifndef COVAUD_DEFAULT_DATA_DIR
#define COVAUD_DEFAULT_DATA_DIR "data"
#endif

namespace fs = std::filesystem;
using nlohmann::json;
using namespace covaud;

namespace {

enum Exit { kOk = 0, kConfig = 2, kParse = 3, kStage = 4 };

struct CommonFlags {
  std::optional<std::string> config;
  std::optional<std::string> run_dir;
  std::optional<std::string> data_dir;
  std::optional<unsigned> jobs;
};

struct StageFlags {
  std::optional<std::string> floodlist, emdat, dfo;
  std::optional<std::string> input, format, scorer;
  std::optional<double> threshold;
  bool substring = false;
  std::optional<std::string> gazetteer, kb, geocoder, geocoder_url, cache_dir;
  std::optional<unsigned> max_inflight;
  std::optional<int> min_delay_ms;
  bool refresh = false;
  std::optional<std::string> strategy;
  std::optional<int> window_days;
  std::optional<std::string> indicators, labels, axes, fatalities_unknown;
  std::optional<std::size_t> min_country_events, top_domains;
  bool force = false;
};

void add_common(CLI::App* cmd, CommonFlags& f) {
  cmd->add_option("-c,--config", f.config, "INI configuration file");
  cmd->add_option("--run-dir", f.run_dir, "directory for intermediates and reports");
  cmd->add_option("--data-dir", f.data_dir, "directory holding countries.tsv and country_aliases.tsv");
  cmd->add_option("-j,--jobs", f.jobs, "worker threads")->check(CLI::Range(1U, 256U));
}

void add_consolidate(CLI::App* cmd, StageFlags& f) {
  cmd->add_option("--floodlist", f.floodlist, "Floodlist CSV");
  cmd->add_option("--emdat", f.emdat, "EM-DAT CSV");
  cmd->add_option("--dfo", f.dfo, "DFO CSV");
}

void add_scan(CLI::App* cmd, StageFlags& f) {
  cmd->add_option("--input", f.input, "corpus file (.jsonl, .xml, optionally .gz)");
  cmd->add_option("--format", f.format, "jsonl, xml or auto");
  cmd->add_option("--threshold", f.threshold, "relevance threshold (strict)")->check(CLI::Range(0.0, 1.0));
  cmd->add_option("--scorer", f.scorer, "builtin or constant:<p>");
  cmd->add_flag("--substring", f.substring, "match keywords as substrings instead of whole words");
}

void add_extract(CLI::App* cmd, StageFlags& f) {
  cmd->add_option("--gazetteer", f.gazetteer, "gazetteer TSV");
  cmd->add_option("--kb", f.kb, "knowledge base TSV");
  cmd->add_option("--geocoder", f.geocoder, "live, replay:<path>, gazetteer or none");
  cmd->add_option("--geocoder-url", f.geocoder_url, "endpoint for the live geocoder");
  cmd->add_option("--max-inflight", f.max_inflight, "concurrent live requests")->check(CLI::Range(1U, 64U));
  cmd->add_option("--min-delay-ms", f.min_delay_ms, "minimum gap between live requests")
      ->check(CLI::Range(0, 600000));
  cmd->add_option("--cache-dir", f.cache_dir, "geocoder cache directory");
  cmd->add_flag("--refresh", f.refresh, "ignore cached geocoder answers");
}

void add_match(CLI::App* cmd, StageFlags& f) {
  cmd->add_option("--strategy", f.strategy, "ymd or ym");
  cmd->add_option("--window-days", f.window_days, "days added after end_date for ymd")->check(CLI::Range(0, 366));
}

void add_analyze(CLI::App* cmd, StageFlags& f) {
  cmd->add_option("--indicators", f.indicators, "country indicators CSV");
  cmd->add_option("--labels", f.labels, "relevance labels CSV");
  cmd->add_option("--axes", f.axes, "comma-separated axes");
  cmd->add_option("--min-country-events", f.min_country_events, "minimum events for the country axis");
  cmd->add_option("--top-domains", f.top_domains, "number of citation domains to report")
      ->check(CLI::Range(std::size_t{1}, std::size_t{1000000}));
  cmd->add_option("--fatalities-unknown", f.fatalities_unknown, "zero or exclude");
}

PipelineConfig build_config(const CommonFlags& c, const StageFlags& f) {
  PipelineConfig cfg;
  cfg.data_dir = COVAUD_DEFAULT_DATA_DIR;
  cfg.jobs = std::max(1U, std::thread::hardware_concurrency());
  if (c.config) cfg = load_config(*c.config, cfg);
  if (c.run_dir) cfg.run_dir = *c.run_dir;
  if (c.data_dir) cfg.data_dir = *c.data_dir;
  if (c.jobs) cfg.jobs = *c.jobs;

  if (f.floodlist) cfg.floodlist = *f.floodlist;
  if (f.emdat) cfg.emdat = *f.emdat;
  if (f.dfo) cfg.dfo = *f.dfo;

  if (f.input) cfg.corpus = *f.input;
  if (f.format) {
    if (*f.format == "auto") {
      cfg.corpus_format.reset();
    } else {
      cfg.corpus_format = parse_corpus_format(*f.format);
      if (!cfg.corpus_format) throw ConfigError("--format must be jsonl, xml or auto");
    }
  }
  if (f.threshold) cfg.threshold = *f.threshold;
  if (f.scorer) cfg.scorer = *f.scorer;
  if (f.substring) cfg.substring = true;

  if (f.gazetteer) cfg.gazetteer = *f.gazetteer;
  if (f.kb) cfg.kb = *f.kb;
  if (f.geocoder) apply_geocoder_spec(cfg, *f.geocoder, {});
  if (f.geocoder_url) cfg.geocoder_url = *f.geocoder_url;
  if (f.max_inflight) cfg.max_inflight = *f.max_inflight;
  if (f.min_delay_ms) cfg.min_delay_ms = *f.min_delay_ms;
  if (f.cache_dir) cfg.cache_dir = *f.cache_dir;
  if (f.refresh) cfg.refresh = true;

  if (f.strategy) {
    const auto s = parse_strategy(*f.strategy);
    if (!s) throw ConfigError("--strategy must be ymd or ym");
    cfg.strategy = *s;
  }
  if (f.window_days) cfg.window_days = *f.window_days;

  if (f.indicators) cfg.indicators = *f.indicators;
  if (f.labels) cfg.labels = *f.labels;
  if (f.axes) cfg.axes = parse_axes(*f.axes);
  if (f.min_country_events) cfg.min_country_events = *f.min_country_events;
  if (f.top_domains) cfg.top_domains = *f.top_domains;
  if (f.fatalities_unknown) {
    const auto u = parse_unknown_fatalities(*f.fatalities_unknown);
    if (!u) throw ConfigError("--fatalities-unknown must be zero or exclude");
    cfg.unknown_fatalities = *u;
  }
  return cfg;
}

void print_summary(const RunManifest& m, std::span<const Stage> stages) {
  for (const auto s : stages) {
    const auto* r = m.find(s);
    if (r == nullptr) continue;
    std::printf("%-12s %-7s %8.1f ms", std::string(to_string(s)).c_str(), r->status.c_str(), r->duration_ms);
    for (const auto& [k, v] : r->counts.items()) {
      if (v.is_number() || v.is_string()) std::printf("  %s=%s", k.c_str(), v.is_string() ? v.get<std::string>().c_str() : v.dump().c_str());
    }
    std::printf("\n");
  }
}

std::string pct(const json& v) {
  if (v.is_null()) return "n/a";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f%%", v.get<double>());
  return buf;
}

int print_report(const fs::path& run_dir, bool as_json) {
  const auto path = run_dir / "report.json";
  std::ifstream in(path);
  if (!in) throw ConfigError("no report at " + path.string() + "; run analyze first");
  json report;
  try {
    report = json::parse(in);
  } catch (const json::exception& e) {
    throw ParseError(path.string() + ": " + e.what());
  }
  if (as_json) {
    std::cout << report.dump(2) << '\n';
    return kOk;
  }
  std::printf("strategy %s, window %d days\n", report["strategy"].get<std::string>().c_str(),
              report["window_days"].get<int>());
  std::printf("ground truth events %zu, matched %zu, hit rate %s\n",
              report["ground_truth_events"].get<std::size_t>(), report["matched_events"].get<std::size_t>(),
              pct(report["hit_rate_pct"]).c_str());
  const auto& ev = report["evaluation"];
  if (ev.value("labels_supplied", false)) {
    std::printf("precision %s (%zu/%zu labeled, %zu unlabeled), recall %s\n", pct(ev["precision_pct"]).c_str(),
                ev["relevant_matched"].get<std::size_t>(), ev["matched_candidates"].get<std::size_t>(),
                ev["unlabeled"].get<std::size_t>(), pct(ev["recall_pct"]).c_str());
  }
  for (const auto& [axis, body] : report["axes"].items()) {
    std::printf("\n[%s]\n", axis.c_str());
    std::printf("  %-28s %8s %8s %9s\n", "bucket", "events", "matched", "hit rate");
    const auto rows = [&](const json& list, const char* mark) {
      for (const auto& s : list) {
        std::printf("  %-28s %8zu %8zu %9s%s\n", s["bucket_label"].get<std::string>().c_str(),
                    s["ground_truth_count"].get<std::size_t>(), s["matched_count"].get<std::size_t>(),
                    pct(s["hit_rate_pct"]).c_str(), mark);
      }
    };
    rows(body["strata"], "");
    rows(body["separate"], "  (separate)");
  }
  std::printf("\n[domains]\n");
  for (const auto& d : report["domains"]["top"]) {
    std::printf("  %-28s %8zu\n", d["domain"].get<std::string>().c_str(), d["count"].get<std::size_t>());
  }
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Audit how well a text corpus covers ground-truth flood events"};
  app.set_version_flag("--version", std::string(kToolVersion));
  app.require_subcommand(1);

  CommonFlags common;
  StageFlags flags;

  struct Command {
    CLI::App* app;
    std::vector<Stage> stages;
  };
  std::vector<Command> commands;

  auto* consolidate = app.add_subcommand("consolidate", "merge the source databases into ground-truth events");
  add_common(consolidate, common);
  add_consolidate(consolidate, flags);
  commands.push_back({consolidate, {Stage::Consolidate}});

  auto* scan = app.add_subcommand("scan", "extract flood-relevant candidate sentences from the corpus");
  add_common(scan, common);
  add_scan(scan, flags);
  commands.push_back({scan, {Stage::Scan}});

  auto* extract = app.add_subcommand("extract", "resolve dates and countries of candidate sentences");
  add_common(extract, common);
  add_extract(extract, flags);
  commands.push_back({extract, {Stage::Extract}});

  auto* match = app.add_subcommand("match", "pair resolved candidates with ground-truth events");
  add_common(match, common);
  add_match(match, flags);
  commands.push_back({match, {Stage::Match}});

  auto* analyze = app.add_subcommand("analyze", "stratified hit rates, citation domains and evaluation");
  add_common(analyze, common);
  add_analyze(analyze, flags);
  commands.push_back({analyze, {Stage::Analyze}});

  auto* run = app.add_subcommand("run", "run every stage, reusing unchanged outputs");
  add_common(run, common);
  add_consolidate(run, flags);
  add_scan(run, flags);
  add_extract(run, flags);
  add_match(run, flags);
  add_analyze(run, flags);
  run->add_flag("--force", flags.force, "rerun stages even when their outputs are current");
  commands.push_back({run, {std::begin(kAllStages), std::end(kAllStages)}});

  auto* report = app.add_subcommand("report", "print the analysis report of a run directory");
  add_common(report, common);
  bool report_json = false;
  report->add_flag("--json", report_json, "print report.json unchanged");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kConfig;
  }

  try {
    const auto config = build_config(common, flags);
    if (report->parsed()) return print_report(config.run_dir, report_json);

    for (const auto& cmd : commands) {
      if (!cmd.app->parsed()) continue;
      Pipeline pipeline(config);
      RunOptions options;
      options.resume = cmd.app == run && !flags.force;
      const auto manifest = pipeline.run(cmd.stages, options);
      print_summary(manifest, cmd.stages);
      return kOk;
    }
  } catch (const ConfigError& e) {
    std::fprintf(stderr, "config error: %s\n", e.what());
    return kConfig;
  } catch (const ParseError& e) {
    std::fprintf(stderr, "parse error: %s\n", e.what());
    return kParse;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kStage;
  }
  return kOk;
}
