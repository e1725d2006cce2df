#include "covaud/geo.hpp"

#include <algorithm>
#include <cstdlib>
#include <ctime>
#include <thread>

#include <httplib.h>
#include <json.hpp>

#include "covaud/text.hpp"

namespace covaud {

using nlohmann::json;

namespace {

bool parse_flag(std::string_view raw) {
  const auto v = text::to_lower(text::trim(raw));
  return v == "1" || v == "true" || v == "yes" || v == "y";
}

std::string utc_now_iso() {
  const auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

}  // namespace

// ---------------------------------------------------------------------------

KnowledgeBase KnowledgeBase::load(const std::filesystem::path& tsv, const CountryRegistry& registry) {
  std::ifstream in(tsv);
  if (!in) throw IoError("cannot open knowledge base " + tsv.string());
  return from_stream(in, registry);
}

KnowledgeBase KnowledgeBase::from_stream(std::istream& in, const CountryRegistry& registry) {
  KnowledgeBase kb;
  std::string line;
  std::size_t lineno = 0;
  bool header = true;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || line.front() == '#') continue;
    if (header) {
      header = false;
      continue;
    }
    const auto f = text::split(line, '\t');
    if (f.size() < 3) throw ParseError("knowledge base line " + std::to_string(lineno) + ": expected 3 columns");
    Row row;
    const auto iso3 = text::trim(f[1]);
    if (!iso3.empty()) {
      const auto* country = registry.by_iso3(iso3);
      if (country == nullptr) {
        throw ParseError("knowledge base line " + std::to_string(lineno) + ": unknown iso3 '" + iso3 + "'");
      }
      row.country = *country;
    }
    row.has_enwiki = parse_flag(f[2]);
    kb.rows_[text::normalize_key(f[0])].push_back(std::move(row));
  }
  return kb;
}

std::optional<CountryCode> KnowledgeBase::lookup(std::string_view placename) const {
  const auto it = rows_.find(text::normalize_key(placename));
  if (it == rows_.end()) return std::nullopt;
  for (const auto& row : it->second) {
    if (row.has_enwiki && row.country) return row.country;
  }
  return std::nullopt;
}

std::optional<CountryCode> kb_lookup(std::string_view placename, const KnowledgeBase& kb) {
  return kb.lookup(placename);
}

// ---------------------------------------------------------------------------

ReplayGeocoder ReplayGeocoder::load(const std::filesystem::path& jsonl) {
  std::ifstream in(jsonl);
  if (!in) throw IoError("cannot open replay file " + jsonl.string());
  return from_stream(in);
}

ReplayGeocoder ReplayGeocoder::from_stream(std::istream& in) {
  ReplayGeocoder replay;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (text::trim(line).empty()) continue;
    try {
      const auto j = json::parse(line);
      std::vector<GeocoderResult> results;
      for (const auto& r : j.at("results")) {
        GeocoderResult g;
        g.display_name = r.at("display_name").get<std::string>();
        if (r.contains("iso3") && r["iso3"].is_string() && !r["iso3"].get<std::string>().empty()) {
          g.iso3 = r["iso3"].get<std::string>();
        }
        g.importance = r.value("importance", 0.0);
        results.push_back(std::move(g));
      }
      replay.responses_[text::normalize_key(j.at("query").get<std::string>())] = std::move(results);
    } catch (const json::exception& e) {
      throw ParseError("replay line " + std::to_string(lineno) + ": " + e.what());
    }
  }
  return replay;
}

std::vector<GeocoderResult> ReplayGeocoder::search(std::string_view query) {
  ++calls_;
  const auto it = responses_.find(text::normalize_key(query));
  return it == responses_.end() ? std::vector<GeocoderResult>{} : it->second;
}

// ---------------------------------------------------------------------------

HttpGeocoder::HttpGeocoder(std::string endpoint, const CountryRegistry& registry, std::chrono::seconds timeout)
    : registry_(registry), timeout_(timeout) {
  const auto scheme = endpoint.find("://");
  if (scheme == std::string::npos) throw ConfigError("geocoder endpoint needs a scheme: " + endpoint);
  const auto path = endpoint.find('/', scheme + 3);
  scheme_host_ = endpoint.substr(0, path);
  path_ = path == std::string::npos ? "/" : endpoint.substr(path);
}

std::string HttpGeocoder::endpoint_from_env() {
  const char* env = std::getenv(std::string(kEndpointEnv).c_str());
  return (env != nullptr && *env != '\0') ? std::string(env) : std::string(kDefaultEndpoint);
}

std::vector<GeocoderResult> parse_geocoder_response(std::string_view body, const CountryRegistry& registry) {
  json j;
  try {
    j = json::parse(body);
  } catch (const json::exception& e) {
    throw GeocoderError(GeocoderError::Kind::Fatal, std::string("unparsable geocoder response: ") + e.what());
  }
  if (!j.is_array()) throw GeocoderError(GeocoderError::Kind::Fatal, "geocoder response is not an array");
  std::vector<GeocoderResult> out;
  for (const auto& item : j) {
    if (!item.is_object()) continue;
    GeocoderResult r;
    r.display_name = item.value("display_name", "");
    if (const auto imp = item.find("importance"); imp != item.end()) {
      if (imp->is_number()) {
        r.importance = imp->get<double>();
      } else if (imp->is_string()) {
        try {
          r.importance = std::stod(imp->get<std::string>());
        } catch (const std::exception&) {
          r.importance = 0.0;
        }
      }
    }
    if (item.contains("iso3") && item["iso3"].is_string()) {
      r.iso3 = item["iso3"].get<std::string>();
    } else if (item.contains("address") && item["address"].is_object() &&
               item["address"].contains("country_code") && item["address"]["country_code"].is_string()) {
      if (const auto* c = registry.by_iso2(item["address"]["country_code"].get<std::string>())) r.iso3 = c->iso3;
    }
    out.push_back(std::move(r));
  }
  return out;
}

std::vector<GeocoderResult> HttpGeocoder::search(std::string_view query) {
  httplib::Client client(scheme_host_);
  client.set_connection_timeout(timeout_);
  client.set_read_timeout(timeout_);
  client.set_follow_location(true);
  const httplib::Params params{{"q", std::string(query)}, {"format", "jsonv2"}, {"addressdetails", "1"},
                               {"limit", "10"}};
  const httplib::Headers headers{{"User-Agent", "coverage-auditor/1.0"}, {"Accept", "application/json"}};
  auto res = client.Get(path_, params, headers);
  if (!res) {
    throw GeocoderError(GeocoderError::Kind::Transient, "request failed: " + httplib::to_string(res.error()));
  }
  if (res->status == 429) throw GeocoderError(GeocoderError::Kind::Quota, "rate limited (HTTP 429)");
  if (res->status >= 500) {
    throw GeocoderError(GeocoderError::Kind::Transient, "server error HTTP " + std::to_string(res->status));
  }
  if (res->status != 200) {
    throw GeocoderError(GeocoderError::Kind::Fatal, "unexpected HTTP " + std::to_string(res->status));
  }
  return parse_geocoder_response(res->body, registry_);
}

std::vector<GeocoderResult> GazetteerGeocoder::search(std::string_view query) {
  std::vector<GeocoderResult> out;
  for (const auto& e : gazetteer_.lookup(query)) {
    GeocoderResult r{e.placename, std::nullopt, e.importance};
    if (!e.iso3.empty()) r.iso3 = e.iso3;
    out.push_back(std::move(r));
  }
  return out;
}

// ---------------------------------------------------------------------------

ThrottledGeocoder::ThrottledGeocoder(GeocoderClient& inner, unsigned max_inflight,
                                     std::chrono::milliseconds min_delay)
    : inner_(inner), max_inflight_(std::max(1U, max_inflight)), min_delay_(min_delay) {}

std::vector<GeocoderResult> ThrottledGeocoder::search(std::string_view query) {
  {
    std::unique_lock lock(mutex_);
    slot_free_.wait(lock, [&] { return inflight_ < max_inflight_; });
    ++inflight_;
    unsigned peak = peak_.load();
    while (inflight_ > peak && !peak_.compare_exchange_weak(peak, inflight_)) {
    }
    // reserve the next start time while holding the lock
    const auto now = std::chrono::steady_clock::now();
    const auto start = std::max(now, next_start_);
    next_start_ = start + min_delay_;
    lock.unlock();
    std::this_thread::sleep_until(start);
  }
  struct Release {
    ThrottledGeocoder& self;
    ~Release() {
      {
        std::lock_guard guard(self.mutex_);
        --self.inflight_;
      }
      self.slot_free_.notify_one();
    }
  } release{*this};
  return inner_.search(query);
}

std::optional<CountryCode> select_best_result(std::span<const GeocoderResult> results,
                                              const CountryRegistry& registry) {
  const GeocoderResult* best = nullptr;
  const CountryCode* best_country = nullptr;
  for (const auto& r : results) {
    if (!r.iso3) continue;  // results without a country are skipped
    const auto* country = registry.by_iso3(*r.iso3);
    if (country == nullptr) continue;
    if (best == nullptr || r.importance > best->importance ||
        (r.importance == best->importance && r.display_name < best->display_name)) {
      best = &r;
      best_country = country;
    }
  }
  if (best_country == nullptr) return std::nullopt;
  return *best_country;
}

RemoteOutcome remote_geocode(std::string_view placename, GeocoderClient& client, const CountryRegistry& registry,
                             const RetryPolicy& policy) {
  RemoteOutcome outcome;
  auto backoff = policy.backoff;
  const auto sleep = policy.sleep ? policy.sleep : [](std::chrono::milliseconds d) { std::this_thread::sleep_for(d); };
  for (int attempt = 0; attempt <= policy.max_retries; ++attempt) {
    ++outcome.attempts;
    try {
      const auto results = client.search(placename);
      outcome.country = select_best_result(results, registry);
      outcome.completed = true;
      outcome.error.clear();
      return outcome;
    } catch (const GeocoderError& e) {
      outcome.error = e.what();
      if (e.kind() == GeocoderError::Kind::Fatal) break;
      if (attempt == policy.max_retries) break;
      sleep(e.kind() == GeocoderError::Kind::Quota ? std::max(policy.quota_delay, backoff) : backoff);
      backoff *= 2;
    }
  }
  return outcome;
}

// ---------------------------------------------------------------------------

GeoCache::GeoCache(const std::filesystem::path& path, bool refresh) : path_(path) {
  if (!refresh && std::filesystem::exists(path)) {
    std::ifstream in(path);
    std::string line;
    while (std::getline(in, line)) {
      if (text::trim(line).empty()) continue;
      try {
        const auto j = json::parse(line);
        GeoCacheEntry e;
        e.query = j.at("query").get<std::string>();
        if (!j.at("result").is_null()) e.result = j["result"].get<std::string>();
        e.stage = parse_resolver_stage(j.at("stage").get<std::string>()).value_or(ResolverStage::Unresolved);
        e.fetched_at = j.value("fetched_at", "");
        entries_[e.query] = std::move(e);  // later lines win
      } catch (const json::exception&) {
        // a torn final line from an interrupted run; skip it
      }
    }
  }
  if (!path.empty()) {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    out_.open(path, std::ios::app);
    if (!out_) throw IoError("cannot open geocoder cache " + path.string());
  }
}

std::string GeoCache::key(std::string_view placename) { return text::normalize_key(placename); }

std::optional<GeoCacheEntry> GeoCache::get(std::string_view placename) const {
  std::shared_lock lock(mutex_);
  const auto it = entries_.find(key(placename));
  if (it == entries_.end()) return std::nullopt;
  return it->second;
}

void GeoCache::put(GeoCacheEntry entry) {
  entry.query = key(entry.query);
  if (entry.fetched_at.empty()) entry.fetched_at = utc_now_iso();
  std::unique_lock lock(mutex_);
  if (out_.is_open()) {
    const json j{{"query", entry.query},
                 {"result", entry.result ? json(*entry.result) : json(nullptr)},
                 {"stage", to_string(entry.stage)},
                 {"fetched_at", entry.fetched_at}};
    out_ << j.dump() << '\n';
    out_.flush();
  }
  entries_[entry.query] = std::move(entry);
}

std::size_t GeoCache::size() const {
  std::shared_lock lock(mutex_);
  return entries_.size();
}

// ---------------------------------------------------------------------------

std::optional<CountryCode> AliasScanInferencer::infer(std::string_view sentence, std::string_view title) const {
  for (const auto source : {sentence, title}) {
    const auto hits = registry_.mentions(source);
    if (!hits.empty()) return hits.front().country;
  }
  return std::nullopt;
}

std::optional<CountryCode> context_infer(std::string_view sentence, std::string_view title,
                                         const CountryInferencer& inferencer) {
  return inferencer.infer(sentence, title);
}

// ---------------------------------------------------------------------------

GeoResolver::GeoResolver(const KnowledgeBase& kb, const CountryRegistry& registry,
                         const CountryInferencer& inferencer, GeocoderClient* client, GeoCache* cache,
                         RetryPolicy retry)
    : kb_(kb), registry_(registry), inferencer_(inferencer), client_(client), cache_(cache), retry_(std::move(retry)) {}

std::optional<CountryCode> GeoResolver::remote_stage(std::string_view placename) {
  if (client_ == nullptr) return std::nullopt;
  const auto key = GeoCache::key(placename);
  if (cache_ != nullptr) {
    if (const auto hit = cache_->get(key)) {
      if (!hit->result) return std::nullopt;
      const auto* country = registry_.by_iso3(*hit->result);
      return country ? std::optional<CountryCode>(*country) : std::nullopt;
    }
  }

  // one query per placename even when several workers ask at once
  std::promise<std::optional<CountryCode>> promise;
  std::shared_future<std::optional<CountryCode>> future;
  bool owner = false;
  {
    std::lock_guard lock(inflight_mutex_);
    const auto it = inflight_.find(key);
    if (it != inflight_.end()) {
      future = it->second;
    } else {
      future = promise.get_future().share();
      inflight_.emplace(key, future);
      owner = true;
    }
  }
  if (!owner) return future.get();

  ++remote_queries_;
  const auto outcome = remote_geocode(placename, *client_, registry_, retry_);
  if (outcome.completed) {
    if (cache_ != nullptr) {
      GeoCacheEntry entry;
      entry.query = key;
      if (outcome.country) entry.result = outcome.country->iso3;
      entry.stage = outcome.country ? ResolverStage::RemoteGeocoder : ResolverStage::Unresolved;
      cache_->put(std::move(entry));
    }
  } else {
    ++remote_failures_;
  }
  promise.set_value(outcome.country);
  {
    // completed answers now live in the cache; failures may be retried later
    std::lock_guard lock(inflight_mutex_);
    if (cache_ != nullptr || !outcome.completed) inflight_.erase(key);
  }
  return outcome.country;
}

PlaceMention GeoResolver::resolve(std::string_view placename, std::string_view sentence, std::string_view title) {
  PlaceMention mention{std::string(placename), std::nullopt, ResolverStage::Unresolved};
  if (auto country = kb_lookup(placename, kb_)) {
    mention.resolved = std::move(country);
    mention.resolver_stage = ResolverStage::Gazetteer;
    return mention;
  }
  if (auto country = remote_stage(placename)) {
    mention.resolved = std::move(country);
    mention.resolver_stage = ResolverStage::RemoteGeocoder;
    return mention;
  }
  if (auto country = context_infer(sentence, title, inferencer_)) {
    mention.resolved = std::move(country);
    mention.resolver_stage = ResolverStage::ContextInference;
  }
  return mention;
}

}  // namespace covaud
