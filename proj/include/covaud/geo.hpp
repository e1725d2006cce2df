#pragma once

#include <atomic>
#include <chrono>
#include <condition_variable>
#include <filesystem>
#include <fstream>
#include <functional>
#include <future>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <shared_mutex>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "covaud/country.hpp"
#include "covaud/error.hpp"
#include "covaud/places.hpp"

namespace covaud {

// ---------------------------------------------------------------------------
// Local knowledge base

/// Offline placename -> country table. TSV columns: placename, iso3,
/// has_enwiki_flag (1/0 or true/false). Rows without an English Wikipedia
/// page never resolve.
class KnowledgeBase {
 public:
  KnowledgeBase() = default;
  static KnowledgeBase load(const std::filesystem::path& tsv, const CountryRegistry& registry);
  static KnowledgeBase from_stream(std::istream& tsv, const CountryRegistry& registry);

  [[nodiscard]] std::optional<CountryCode> lookup(std::string_view placename) const;
  [[nodiscard]] std::size_t size() const { return rows_.size(); }

 private:
  struct Row {
    std::optional<CountryCode> country;
    bool has_enwiki = false;
  };
  std::unordered_map<std::string, std::vector<Row>> rows_;
};

std::optional<CountryCode> kb_lookup(std::string_view placename, const KnowledgeBase& kb);

// ---------------------------------------------------------------------------
// Remote geocoding

struct GeocoderResult {
  std::string display_name;
  std::optional<std::string> iso3;
  double importance = 0.0;
};

class GeocoderError : public Error {
 public:
  enum class Kind { Transient, Quota, Fatal };
  GeocoderError(Kind kind, const std::string& what) : Error(what), kind_(kind) {}
  [[nodiscard]] Kind kind() const { return kind_; }

 private:
  Kind kind_;
};

/// One free-text place query. Throws GeocoderError on failure.
/// Implementations must be safe to call from several threads.
class GeocoderClient {
 public:
  virtual ~GeocoderClient() = default;
  virtual std::vector<GeocoderResult> search(std::string_view query) = 0;
};

/// Serves recorded responses. JSON Lines of
/// {"query": ..., "results": [{"display_name", "iso3", "importance"}]}.
/// Queries match after normalization; unknown queries return no results.
class ReplayGeocoder final : public GeocoderClient {
 public:
  static ReplayGeocoder load(const std::filesystem::path& jsonl);
  static ReplayGeocoder from_stream(std::istream& jsonl);
  ReplayGeocoder() = default;
  ReplayGeocoder(ReplayGeocoder&& other) noexcept
      : responses_(std::move(other.responses_)), calls_(other.calls_.load()) {}

  std::vector<GeocoderResult> search(std::string_view query) override;
  [[nodiscard]] std::size_t calls() const { return calls_.load(); }

 private:
  std::unordered_map<std::string, std::vector<GeocoderResult>> responses_;
  std::atomic<std::size_t> calls_{0};
};

/// Nominatim-style HTTP search: GET <endpoint>?q=<query>&format=jsonv2.
/// Each array element maps to a GeocoderResult; the country comes from an
/// "iso3" field or address.country_code (ISO2) looked up in the registry.
class HttpGeocoder final : public GeocoderClient {
 public:
  static constexpr std::string_view kDefaultEndpoint = "https://nominatim.openstreetmap.org/search";
  static constexpr std::string_view kEndpointEnv = "COVAUD_GEOCODER_URL";

  HttpGeocoder(std::string endpoint, const CountryRegistry& registry,
               std::chrono::seconds timeout = std::chrono::seconds{10});
  /// Endpoint from COVAUD_GEOCODER_URL when set, otherwise the default.
  static std::string endpoint_from_env();

  std::vector<GeocoderResult> search(std::string_view query) override;

 private:
  std::string scheme_host_;
  std::string path_;
  const CountryRegistry& registry_;
  std::chrono::seconds timeout_;
};

/// Parses a Nominatim-style JSON array response body.
std::vector<GeocoderResult> parse_geocoder_response(std::string_view body, const CountryRegistry& registry);

/// Offline geocoder over the gazetteer: rows named exactly like the query.
class GazetteerGeocoder final : public GeocoderClient {
 public:
  explicit GazetteerGeocoder(const Gazetteer& gazetteer) : gazetteer_(gazetteer) {}
  std::vector<GeocoderResult> search(std::string_view query) override;

 private:
  const Gazetteer& gazetteer_;
};

/// Bounds concurrent requests and spaces request starts by a global minimum
/// delay.
class ThrottledGeocoder final : public GeocoderClient {
 public:
  ThrottledGeocoder(GeocoderClient& inner, unsigned max_inflight, std::chrono::milliseconds min_delay);
  std::vector<GeocoderResult> search(std::string_view query) override;
  [[nodiscard]] unsigned peak_inflight() const { return peak_.load(); }

 private:
  GeocoderClient& inner_;
  unsigned max_inflight_;
  std::chrono::milliseconds min_delay_;
  std::mutex mutex_;
  std::condition_variable slot_free_;
  unsigned inflight_ = 0;
  std::atomic<unsigned> peak_{0};
  std::chrono::steady_clock::time_point next_start_{};
};

/// Highest importance among results with a known country; ties go to the
/// lexicographically smaller display_name.
std::optional<CountryCode> select_best_result(std::span<const GeocoderResult> results,
                                              const CountryRegistry& registry);

struct RetryPolicy {
  int max_retries = 2;
  std::chrono::milliseconds backoff{500};  // doubled after each failure
  std::chrono::milliseconds quota_delay{1000};
  std::function<void(std::chrono::milliseconds)> sleep;  // defaults to std::this_thread::sleep_for
};

struct RemoteOutcome {
  std::optional<CountryCode> country;
  /// False when every attempt failed and the stage was skipped.
  bool completed = false;
  int attempts = 0;
  std::string error;
};

/// One query with retries. Never throws for client failures.
RemoteOutcome remote_geocode(std::string_view placename, GeocoderClient& client, const CountryRegistry& registry,
                             const RetryPolicy& policy = {});

// ---------------------------------------------------------------------------
// Cache

struct GeoCacheEntry {
  std::string query;  // normalized placename
  std::optional<std::string> result;  // iso3
  ResolverStage stage = ResolverStage::Unresolved;
  std::string fetched_at;
};

/// Append-only JSON Lines cache of remote geocoder outcomes, keyed by
/// normalized query. Reads may run concurrently; appends are serialized.
class GeoCache {
 public:
  /// In-memory only.
  GeoCache() = default;
  /// Loads `path` if it exists (unless `refresh`) and appends new entries to it.
  explicit GeoCache(const std::filesystem::path& path, bool refresh = false);

  [[nodiscard]] std::optional<GeoCacheEntry> get(std::string_view placename) const;
  void put(GeoCacheEntry entry);
  [[nodiscard]] std::size_t size() const;

  static std::string key(std::string_view placename);

 private:
  mutable std::shared_mutex mutex_;
  std::unordered_map<std::string, GeoCacheEntry> entries_;
  std::filesystem::path path_;
  std::ofstream out_;
};

// ---------------------------------------------------------------------------
// Context inference

/// Guesses a country from whole text when placename lookup fails.
class CountryInferencer {
 public:
  virtual ~CountryInferencer() = default;
  [[nodiscard]] virtual std::optional<CountryCode> infer(std::string_view sentence,
                                                         std::string_view title) const = 0;
};

/// First country name or demonym in the sentence, else in the title.
class AliasScanInferencer final : public CountryInferencer {
 public:
  explicit AliasScanInferencer(const CountryRegistry& registry) : registry_(registry) {}
  [[nodiscard]] std::optional<CountryCode> infer(std::string_view sentence, std::string_view title) const override;

 private:
  const CountryRegistry& registry_;
};

std::optional<CountryCode> context_infer(std::string_view sentence, std::string_view title,
                                         const CountryInferencer& inferencer);

// ---------------------------------------------------------------------------
// Cascade

/// knowledge base -> remote geocoder -> context inference. Safe to share
/// between threads.
class GeoResolver {
 public:
  GeoResolver(const KnowledgeBase& kb, const CountryRegistry& registry, const CountryInferencer& inferencer,
              GeocoderClient* client, GeoCache* cache, RetryPolicy retry = {});

  PlaceMention resolve(std::string_view placename, std::string_view sentence, std::string_view title);
  /// Context inference alone, for sentences without any placename.
  [[nodiscard]] std::optional<CountryCode> infer_context(std::string_view sentence, std::string_view title) const {
    return context_infer(sentence, title, inferencer_);
  }

  /// Remote queries issued (cache hits and KB hits excluded).
  [[nodiscard]] std::size_t remote_queries() const { return remote_queries_.load(); }
  [[nodiscard]] std::size_t remote_failures() const { return remote_failures_.load(); }

 private:
  std::optional<CountryCode> remote_stage(std::string_view placename);

  const KnowledgeBase& kb_;
  const CountryRegistry& registry_;
  const CountryInferencer& inferencer_;
  GeocoderClient* client_;
  GeoCache* cache_;
  RetryPolicy retry_;
  std::mutex inflight_mutex_;
  std::map<std::string, std::shared_future<std::optional<CountryCode>>> inflight_;
  std::atomic<std::size_t> remote_queries_{0};
  std::atomic<std::size_t> remote_failures_{0};
};

}  // namespace covaud
