#include <doctest.h>

#include <random>
#include <sstream>

#include "covaud/analysis.hpp"
#include "covaud/error.hpp"
#include "support.hpp"

using namespace covaud;
using covaud::testing::event;
using covaud::testing::fixture_dir;

namespace {

MatchResult hit(const ConsolidatedEvent& e) {
  MatchResult m;
  m.event_id = e.event_id;
  m.article_id = "a";
  m.matched_country = e.country;
  return m;
}

template <class F, class T>
void check_monotone(F bucket, const std::vector<std::string>& order, std::vector<T> inputs) {
  std::sort(inputs.begin(), inputs.end());
  std::ptrdiff_t last = -1;
  for (const auto& x : inputs) {
    const auto label = bucket(x);
    const auto it = std::find(order.begin(), order.end(), label);
    REQUIRE(it != order.end());
    const auto pos = it - order.begin();
    CHECK(pos >= last);
    last = pos;
  }
}

}  // namespace

TEST_CASE("bucket boundaries") {
  CHECK(gdp_bucket(811.99) == "Low income");
  CHECK(gdp_bucket(812) == "Lower middle income");
  CHECK(gdp_bucket(5484) == "Upper middle income");
  CHECK(gdp_bucket(44714) == "Very high income");
  CHECK(combined_vulnerability(4, 9) == doctest::Approx(6.0));
  CHECK(vulnerability_bucket(6.0) == "6-8");
  CHECK(vulnerability_bucket(10) == "8-10");
  CHECK(population_group(754'393) == "G1");
  CHECK(population_group(754'394) == "G2");
  CHECK(population_group(24'992'369) == "G4");
  CHECK(fatalities_bucket(std::nullopt) == "0");
  CHECK(fatalities_bucket(9) == "1-9");
  CHECK(fatalities_bucket(1999) == "100-1999");
  CHECK(fatalities_bucket(2000) == "2000+");
  CHECK(english_bucket(80) == "80+");
  CHECK(english_bucket(19.9) == "<20");
}

TEST_CASE("bucket functions are total and monotone") {
  std::mt19937 rng(4);
  std::uniform_real_distribution<double> gdp(0, 200000);
  std::uniform_real_distribution<double> idx(0, 10);
  std::uniform_real_distribution<double> pct(0, 100);
  std::uniform_int_distribution<std::int64_t> pop(0, 2'000'000'000);
  std::uniform_int_distribution<std::int64_t> dead(0, 10000);
  std::vector<double> g, v, e;
  std::vector<std::int64_t> p, f;
  for (int i = 0; i < 2000; ++i) {
    g.push_back(gdp(rng));
    v.push_back(combined_vulnerability(idx(rng), idx(rng)));
    e.push_back(pct(rng));
    p.push_back(pop(rng));
    f.push_back(dead(rng));
  }
  check_monotone(gdp_bucket, axis_buckets(Axis::Gdp), g);
  check_monotone(vulnerability_bucket, axis_buckets(Axis::Vulnerability), v);
  check_monotone(english_bucket, axis_buckets(Axis::English), e);
  check_monotone(population_group, axis_buckets(Axis::Population), p);
  auto fat = axis_buckets(Axis::Fatalities);
  fat.emplace_back("2000+");
  check_monotone([](std::int64_t n) { return fatalities_bucket(n); }, fat, f);
}

TEST_CASE("axis names") {
  CHECK(parse_axes("continent, gdp,vuln") == std::vector<Axis>{Axis::Continent, Axis::Gdp, Axis::Vulnerability});
  CHECK_THROWS_AS(parse_axes("continent,planet"), ConfigError);
  for (const auto a : kAllAxes) CHECK(parse_axis(to_string(a)) == a);
  CHECK(parse_gni_group("Lower middle income") == GniGroup::LowerMiddle);
  CHECK(parse_gni_group("HIC") == GniGroup::High);
  CHECK_FALSE(parse_gni_group("rich"));
}

TEST_CASE("indicator table validation") {
  const auto table = IndicatorTable::load(fixture_dir() / "indicators.csv");
  CHECK(table.size() == 19);
  CHECK_FALSE(table.find("CUB")->gdp_per_capita);
  const std::string header = "iso3,gdp_per_capita,gni_group,vulnerability,lack_of_coping,english_pct,population\n";
  for (const std::string row : {"PAK,1500,LMC,11,5,10,200000000\n", "PAK,1500,LMC,5,5,101,200000000\n",
                                "PAK,-3,LMC,5,5,10,200000000\n", "PAK,1500,LMC,5,5,10,lots\n",
                                "PAK,1500,LMC,5,5,10,1\nPAK,1500,LMC,5,5,10,1\n"}) {
    CAPTURE(row);
    std::istringstream in(header + row);
    CHECK_THROWS_AS(IndicatorTable::from_stream(in), ParseError);
  }
  std::istringstream missing("iso3,gdp_per_capita\nPAK,1\n");
  CHECK_THROWS_AS(IndicatorTable::from_stream(missing), ParseError);
}

TEST_CASE("published table arithmetic") {
  for (const auto& row : covaud::testing::published_rows()) {
    CAPTURE(row.label);
    const auto pct = round_half_up(*percentage(row.matched, row.ground_truth));
    CHECK(std::abs(pct - row.printed_pct) <= 0.01 + 1e-9);
  }
}

TEST_CASE("stratify partitions events") {
  IndicatorTable table;
  table.add({"PAK", 1500.0, GniGroup::LowerMiddle, 5.0, 6.0, 10.0, 200'000'000, std::nullopt});
  table.add({"USA", 60000.0, GniGroup::High, 1.5, 2.0, 95.0, 330'000'000, std::nullopt});
  table.add({"CUB", std::nullopt, GniGroup::UpperMiddle, 3.0, 3.0, std::nullopt, 11'000'000, Continent::NorthAmerica});

  std::mt19937 rng(9);
  std::vector<ConsolidatedEvent> events;
  std::vector<MatchResult> matches;
  const char* pool[] = {"PAK", "USA", "CUB", "IND"};
  std::uniform_int_distribution<int> pick(0, 3);
  std::uniform_int_distribution<int> day(0, 700);
  std::uniform_int_distribution<int> dead(-1, 3000);
  std::uniform_int_distribution<int> coin(0, 2);
  for (int i = 0; i < 200; ++i) {
    const auto start = Date(2017, 1, 1).plus_days(day(rng));
    const int d = dead(rng);
    auto e = event(pool[pick(rng)], start, start.plus_days(2), d < 0 ? std::nullopt : std::optional<std::int64_t>(d));
    e.event_id += "-" + std::to_string(i);
    if (coin(rng) == 0) {
      matches.push_back(hit(e));
      matches.push_back(hit(e));  // a second sentence for the same event
    }
    events.push_back(std::move(e));
  }
  std::set<std::string> matched_ids;
  for (const auto& m : matches) matched_ids.insert(m.event_id);

  for (const auto axis : kAllAxes) {
    for (const auto unknown : {UnknownFatalities::Zero, UnknownFatalities::Exclude}) {
      CAPTURE(to_string(axis));
      StratifyOptions opts;
      opts.unknown_fatalities = unknown;
      opts.min_country_events = 60;
      const auto r = stratify(events, matches, table, axis, opts);
      std::size_t gt = 0;
      std::size_t hits = 0;
      for (const auto* group : {&r.strata, &r.separate}) {
        for (const auto& s : *group) {
          gt += s.ground_truth_count;
          hits += s.matched_count;
          CHECK(s.matched_count <= s.ground_truth_count);
          if (s.ground_truth_count > 0) {
            CHECK(*s.hit_rate_pct == doctest::Approx(round_half_up(100.0 * s.matched_count / s.ground_truth_count)));
          } else {
            CHECK_FALSE(s.hit_rate_pct);
          }
        }
      }
      CHECK(gt == events.size());
      CHECK(hits == matched_ids.size());
      for (const auto& s : r.strata) CHECK(s.bucket_label != kUnknownBucket);
    }
  }

  const auto gdp = stratify(events, matches, table, Axis::Gdp);
  CHECK(gdp.strata.size() == 6);
  REQUIRE(gdp.separate.size() == 1);
  CHECK(gdp.separate[0].bucket_label == "unknown");

  const auto continent = stratify(events, matches, table, Axis::Continent);
  CHECK(continent.separate.empty());

  const auto fat = stratify(events, matches, table, Axis::Fatalities);
  CHECK(fat.strata.size() == 4);
  REQUIRE(fat.separate.size() == 1);
  CHECK(fat.separate[0].bucket_label == "2000+");

  StratifyOptions few;
  few.min_country_events = 60;
  const auto country = stratify(events, matches, table, Axis::Country, few);
  for (std::size_t i = 1; i < country.strata.size(); ++i)
    CHECK(country.strata[i - 1].ground_truth_count >= country.strata[i].ground_truth_count);
  for (const auto& s : country.strata) CHECK(s.ground_truth_count >= 60);
}

TEST_CASE("month axis uses the start month") {
  const std::vector<ConsolidatedEvent> events{event("PAK", Date(2018, 1, 30), Date(2018, 2, 3)),
                                              event("PAK", Date(2018, 2, 10), Date(2018, 2, 11))};
  const auto r = stratify(events, {}, IndicatorTable{}, Axis::Month);
  REQUIRE(r.strata.size() == 2);
  CHECK(r.strata[0].bucket_label == "2018-01");
  CHECK(r.strata[1].bucket_label == "2018-02");
  std::ostringstream csv;
  write_axis_csv(csv, r);
  CHECK(csv.str() ==
        "axis,bucket,ground_truth_count,matched_count,hit_rate_pct,separate\n"
        "month,2018-01,1,0,0.00,0\n"
        "month,2018-02,1,0,0.00,0\n");
}

TEST_CASE("registrable domains") {
  CHECK(registrable_domain("https://weather.com/storms/x") == "weather.com");
  CHECK(registrable_domain("http://www.bbc.com/news") == "bbc.com");
  CHECK(registrable_domain("https://user:pw@WWW.Example.ORG:443/a?b#c") == "example.org");
  CHECK(registrable_domain("reliefweb.int/report") == "reliefweb.int");
  CHECK_FALSE(registrable_domain("not a url"));
  CHECK_FALSE(registrable_domain("http://localhost/x"));
  CHECK_FALSE(registrable_domain("http://[::1]/x"));
  CHECK_FALSE(registrable_domain(""));
}

TEST_CASE("reference domain ranking") {
  CandidateSentence c;
  c.citations = covaud::testing::domain_fixture_urls();
  const auto d = extract_reference_domains(std::vector{c}, 10);
  CHECK(d.total_urls == 20);
  CHECK(d.unparsable == 1);
  CHECK(d.top == covaud::testing::domain_fixture_expected());
  CHECK(extract_reference_domains(std::vector{c}, 2).top.size() == 2);
  std::ostringstream csv;
  write_domains_csv(csv, extract_reference_domains(std::vector{c}, 2));
  CHECK(csv.str() == "domain,count\nbbc.com,4\nreliefweb.int,4\n");
}
