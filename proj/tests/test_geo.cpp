#include <doctest.h>

#include <httplib.h>

#include <atomic>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <thread>

#include "covaud/geo.hpp"
#include "support.hpp"

using namespace covaud;
using namespace std::chrono_literals;
using covaud::testing::fixture_dir;
using covaud::testing::registry;

namespace {

/// Records every query and answers from a fixed table.
class CountingClient final : public GeocoderClient {
 public:
  std::map<std::string, std::vector<GeocoderResult>> answers;
  std::atomic<int> calls{0};

  std::vector<GeocoderResult> search(std::string_view query) override {
    ++calls;
    const auto it = answers.find(std::string(query));
    return it == answers.end() ? std::vector<GeocoderResult>{} : it->second;
  }
};

/// Fails with the given kinds in order, then succeeds.
class ScriptedClient final : public GeocoderClient {
 public:
  std::vector<GeocoderError::Kind> failures;
  int calls = 0;

  std::vector<GeocoderResult> search(std::string_view) override {
    const auto i = static_cast<std::size_t>(calls++);
    if (i < failures.size()) throw GeocoderError(failures[i], "scripted");
    return {{"Karachi, Pakistan", "PAK", 0.7}};
  }
};

class SlowClient final : public GeocoderClient {
 public:
  std::atomic<int> inflight{0};
  std::atomic<int> peak{0};

  std::vector<GeocoderResult> search(std::string_view) override {
    const int now = ++inflight;
    int seen = peak.load();
    while (now > seen && !peak.compare_exchange_weak(seen, now)) {
    }
    std::this_thread::sleep_for(20ms);
    --inflight;
    return {};
  }
};

std::filesystem::path temp_path(const std::string& name) {
  auto dir = std::filesystem::temp_directory_path() / "covaud_tests";
  std::filesystem::create_directories(dir);
  auto p = dir / name;
  std::filesystem::remove_all(p);
  return p;
}

}  // namespace

TEST_CASE("knowledge base lookup") {
  const auto kb = KnowledgeBase::load(fixture_dir() / "kb.tsv", registry());
  CHECK(kb_lookup("Greenwich", kb)->iso3 == "GBR");
  CHECK(kb_lookup("antu county", kb)->iso3 == "CHN");
  CHECK_FALSE(kb_lookup("Poldokhtar", kb));   // no English Wikipedia page
  CHECK_FALSE(kb_lookup("West Africa", kb));  // no single country
  CHECK_FALSE(kb_lookup("Kyushu", kb));
  std::istringstream bad("placename\tiso3\thas_enwiki_flag\nX\tZZZ\t1\n");
  CHECK_THROWS_AS(KnowledgeBase::from_stream(bad, registry()), ParseError);
}

TEST_CASE("select_best_result") {
  std::vector<GeocoderResult> r{{"Miami, Florida", "USA", 0.8}, {"Miami, Manitoba", "CAN", 0.4},
                                {"Nowhere", std::nullopt, 0.99}, {"Bogus", "ZZZ", 0.95}};
  CHECK(select_best_result(r, registry())->iso3 == "USA");
  std::vector<GeocoderResult> tie{{"Springfield, USA", "USA", 0.5}, {"Springfield, Canada", "CAN", 0.5}};
  CHECK(select_best_result(tie, registry())->iso3 == "CAN");
  std::reverse(tie.begin(), tie.end());
  CHECK(select_best_result(tie, registry())->iso3 == "CAN");
  CHECK_FALSE(select_best_result({}, registry()));
}

TEST_CASE("replay geocoder") {
  auto replay = ReplayGeocoder::load(fixture_dir() / "replay.jsonl");
  CHECK(replay.search("miami").size() == 2);
  CHECK(replay.search("Kyushu").empty());
  CHECK(replay.search("not recorded").empty());
  CHECK(replay.calls() == 3);
  std::istringstream bad("{\"query\": 3}\n");
  CHECK_THROWS_AS(ReplayGeocoder::from_stream(bad), ParseError);
}

TEST_CASE("geocoder response parsing") {
  const auto r = parse_geocoder_response(
      R"([{"display_name":"Karachi, Pakistan","importance":"0.71","address":{"country_code":"pk"}},
          {"display_name":"Somewhere","importance":0.2},
          {"display_name":"Lahore","iso3":"PAK","importance":0.6}])",
      registry());
  REQUIRE(r.size() == 3);
  CHECK(r[0].iso3 == "PAK");
  CHECK(r[0].importance == doctest::Approx(0.71));
  CHECK_FALSE(r[1].iso3);
  CHECK(r[2].iso3 == "PAK");
  CHECK_THROWS_AS(parse_geocoder_response("{\"not\":\"an array\"}", registry()), GeocoderError);
  CHECK_THROWS_AS(parse_geocoder_response("<html>", registry()), GeocoderError);
}

TEST_CASE("remote_geocode retries and backs off") {
  std::vector<std::chrono::milliseconds> slept;
  RetryPolicy policy;
  policy.max_retries = 2;
  policy.backoff = 100ms;
  policy.quota_delay = 1000ms;
  policy.sleep = [&](std::chrono::milliseconds d) { slept.push_back(d); };

  SUBCASE("transient then success") {
    ScriptedClient c;
    c.failures = {GeocoderError::Kind::Transient, GeocoderError::Kind::Transient};
    const auto out = remote_geocode("Karachi", c, registry(), policy);
    CHECK(out.completed);
    CHECK(out.country->iso3 == "PAK");
    CHECK(out.attempts == 3);
    CHECK(slept == std::vector<std::chrono::milliseconds>{100ms, 200ms});
  }
  SUBCASE("quota waits at least the quota delay") {
    ScriptedClient c;
    c.failures = {GeocoderError::Kind::Quota};
    const auto out = remote_geocode("Karachi", c, registry(), policy);
    CHECK(out.completed);
    CHECK(slept == std::vector<std::chrono::milliseconds>{1000ms});
  }
  SUBCASE("exhausted retries skip the stage") {
    ScriptedClient c;
    c.failures = {GeocoderError::Kind::Transient, GeocoderError::Kind::Transient, GeocoderError::Kind::Transient};
    const auto out = remote_geocode("Karachi", c, registry(), policy);
    CHECK_FALSE(out.completed);
    CHECK_FALSE(out.country);
    CHECK(out.attempts == 3);
    CHECK(slept.size() == 2);
    CHECK_FALSE(out.error.empty());
  }
  SUBCASE("fatal errors are not retried") {
    ScriptedClient c;
    c.failures = {GeocoderError::Kind::Fatal};
    const auto out = remote_geocode("Karachi", c, registry(), policy);
    CHECK_FALSE(out.completed);
    CHECK(out.attempts == 1);
    CHECK(slept.empty());
  }
}

TEST_CASE("throttle bounds in-flight requests and spaces starts") {
  SlowClient slow;
  ThrottledGeocoder throttled(slow, 2, 0ms);
  std::vector<std::thread> workers;
  for (int i = 0; i < 8; ++i) workers.emplace_back([&] { throttled.search("x"); });
  for (auto& w : workers) w.join();
  CHECK(slow.peak.load() <= 2);
  CHECK(throttled.peak_inflight() <= 2);
  CHECK(throttled.peak_inflight() >= 1);

  CountingClient fast;
  ThrottledGeocoder spaced(fast, 4, 30ms);
  const auto t0 = std::chrono::steady_clock::now();
  std::vector<std::thread> more;
  for (int i = 0; i < 4; ++i) more.emplace_back([&] { spaced.search("x"); });
  for (auto& w : more) w.join();
  CHECK(std::chrono::steady_clock::now() - t0 >= 90ms);
  CHECK(fast.calls.load() == 4);
}

TEST_CASE("cascade short-circuits on knowledge base hits") {
  const auto kb = KnowledgeBase::load(fixture_dir() / "kb.tsv", registry());
  const AliasScanInferencer inferencer(registry());
  CountingClient client;
  client.answers["Kyushu"] = {{"Kyushu, Japan", "JPN", 0.6}};
  GeoCache cache;
  GeoResolver resolver(kb, registry(), inferencer, &client, &cache);

  const auto kb_hit = resolver.resolve("Greenwich", "flooding in Greenwich", "Thames");
  CHECK(kb_hit.resolver_stage == ResolverStage::Gazetteer);
  CHECK(kb_hit.resolved->iso3 == "GBR");
  CHECK(client.calls.load() == 0);

  const auto remote = resolver.resolve("Kyushu", "rain in Kyushu", "Floods");
  CHECK(remote.resolver_stage == ResolverStage::RemoteGeocoder);
  CHECK(remote.resolved->iso3 == "JPN");

  const auto inferred = resolver.resolve("Tiquicheo", "Tiquicheo, in Mexico, flooded", "Floods");
  CHECK(inferred.resolver_stage == ResolverStage::ContextInference);
  CHECK(inferred.resolved->iso3 == "MEX");

  const auto none = resolver.resolve("Atlantis", "Atlantis sank", "Myths");
  CHECK(none.resolver_stage == ResolverStage::Unresolved);
  CHECK_FALSE(none.resolved);
  CHECK(resolver.remote_queries() == 3);
}

TEST_CASE("cache determinism") {
  const KnowledgeBase kb;
  const AliasScanInferencer inferencer(registry());
  CountingClient client;
  client.answers["Townsville"] = {{"Townsville, Queensland", "AUS", 0.6}};
  const auto path = temp_path("cache.jsonl");
  {
    GeoCache cache(path);
    GeoResolver resolver(kb, registry(), inferencer, &client, &cache);
    const auto first = resolver.resolve("Townsville", "s", "t");
    const auto second = resolver.resolve("townsville", "s", "t");
    CHECK(first.resolved->iso3 == second.resolved->iso3);
    CHECK(first.resolver_stage == second.resolver_stage);
    CHECK(client.calls.load() == 1);
    resolver.resolve("Nowhere", "s", "t");
    resolver.resolve("Nowhere", "s", "t");
    CHECK(client.calls.load() == 2);  // negative results are cached too
  }
  {
    std::ofstream torn(path, std::ios::app);
    torn << "{\"query\":\"half";
  }
  {
    GeoCache cache(path);
    CHECK(cache.size() == 2);
    CHECK(cache.get("TOWNSVILLE")->result == "AUS");
    CHECK(cache.get("TOWNSVILLE")->stage == ResolverStage::RemoteGeocoder);
    CHECK_FALSE(cache.get("nowhere")->result);
    GeoResolver resolver(kb, registry(), inferencer, &client, &cache);
    CHECK(resolver.resolve("Townsville", "s", "t").resolved->iso3 == "AUS");
    CHECK(client.calls.load() == 2);
  }
  {
    GeoCache refreshed(path, true);
    CHECK(refreshed.size() == 0);
  }
}

TEST_CASE("concurrent resolution issues one query per placename") {
  const KnowledgeBase kb;
  const AliasScanInferencer inferencer(registry());
  SlowClient slow;
  GeoCache cache;
  GeoResolver resolver(kb, registry(), inferencer, &slow, &cache);
  std::vector<std::thread> workers;
  for (int i = 0; i < 6; ++i) workers.emplace_back([&] { resolver.resolve("Springfield", "s", "t"); });
  for (auto& w : workers) w.join();
  CHECK(resolver.remote_queries() == 1);
}

TEST_CASE("failed remote lookups are not cached") {
  const KnowledgeBase kb;
  const AliasScanInferencer inferencer(registry());
  ScriptedClient c;
  c.failures = {GeocoderError::Kind::Fatal};
  GeoCache cache;
  RetryPolicy policy;
  policy.sleep = [](std::chrono::milliseconds) {};
  GeoResolver resolver(kb, registry(), inferencer, &c, &cache, policy);
  CHECK_FALSE(resolver.resolve("Karachi", "s", "t").resolved);
  CHECK(resolver.remote_failures() == 1);
  CHECK(cache.size() == 0);
}

TEST_CASE("HTTP geocoder against a local server") {
  httplib::Server server;
  server.Get("/search", [](const httplib::Request& req, httplib::Response& res) {
    const auto q = req.get_param_value("q");
    if (req.get_param_value("format") != "jsonv2" || req.get_header_value("User-Agent").empty()) {
      res.status = 400;
    } else if (q == "busy") {
      res.status = 429;
    } else if (q == "broken") {
      res.status = 503;
    } else if (q == "forbidden") {
      res.status = 403;
    } else {
      res.set_content(R"([{"display_name":"Karachi","importance":0.7,"address":{"country_code":"pk"}}])",
                      "application/json");
    }
  });
  const int port = server.bind_to_any_port("127.0.0.1");
  std::thread thread([&] { server.listen_after_bind(); });
  server.wait_until_ready();

  HttpGeocoder client("http://127.0.0.1:" + std::to_string(port) + "/search", registry(), 5s);
  const auto results = client.search("Karachi Port");
  REQUIRE(results.size() == 1);
  CHECK(results[0].iso3 == "PAK");
  auto kind_of = [&](const std::string& q) {
    try {
      client.search(q);
    } catch (const GeocoderError& e) {
      return e.kind();
    }
    FAIL("expected a GeocoderError");
    return GeocoderError::Kind::Fatal;
  };
  CHECK(kind_of("busy") == GeocoderError::Kind::Quota);
  CHECK(kind_of("broken") == GeocoderError::Kind::Transient);
  CHECK(kind_of("forbidden") == GeocoderError::Kind::Fatal);
  server.stop();
  thread.join();

  HttpGeocoder dead("http://127.0.0.1:" + std::to_string(port) + "/search", registry(), 1s);
  CHECK_THROWS_AS(dead.search("x"), GeocoderError);
  CHECK_THROWS_AS(HttpGeocoder("no-scheme.example", registry()), ConfigError);
}
