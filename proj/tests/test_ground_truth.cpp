#include <doctest.h>

#include <algorithm>
#include <random>
#include <sstream>

#include "covaud/error.hpp"
#include "covaud/ground_truth.hpp"
#include "support.hpp"

using namespace covaud;
using covaud::testing::country;
using covaud::testing::record;
using covaud::testing::registry;

TEST_CASE("country normalization") {
  CHECK(normalize_country(registry(), "United States of America")->iso3 == "USA");
  CHECK(normalize_country(registry(), "usa")->iso3 == "USA");
  CHECK_FALSE(normalize_country(registry(), "Republic of Elbonia"));
  CHECK(country("AGO").continent == Continent::Africa);
}

TEST_CASE("every registry entry has a unique iso3") {
  std::set<std::string> seen;
  for (const auto& c : registry().countries()) {
    CHECK(c.iso3.size() == 3);
    CHECK(seen.insert(c.iso3).second);
    CHECK(registry().by_iso3(c.iso3) != nullptr);
  }
}

TEST_CASE("impute_end_date") {
  SourceRecord r;
  r.start_date = Date(2016, 3, 5);
  CHECK(impute_end_date(r).end_date == Date(2016, 3, 8));
  r.end_date = Date(2016, 3, 7);
  CHECK(impute_end_date(r).end_date == Date(2016, 3, 7));
  SourceRecord roll;
  roll.start_date = Date(2016, 12, 30);
  CHECK(impute_end_date(roll).end_date == Date(2017, 1, 2));
}

TEST_CASE("Angola merge") {
  std::vector<NormalizedRecord> recs{
      record(Source::Floodlist, "FL-1", "AGO", Date(2016, 3, 5), Date(2016, 3, 7)),
      record(Source::Emdat, "2016-0001-AGO", "AGO", Date(2016, 3, 1), Date(2016, 3, 10)),
      record(Source::Dfo, "DFO-1", "AGO", Date(2016, 3, 1), Date(2016, 3, 10)),
  };
  const auto events = consolidate(recs);
  REQUIRE(events.size() == 1);
  CHECK(events[0].start_date == Date(2016, 3, 1));
  CHECK(events[0].end_date == Date(2016, 3, 10));
  CHECK(events[0].in_floodlist);
  CHECK(events[0].in_emdat);
  CHECK(events[0].in_dartmouth);
  CHECK(events[0].native_ids.size() == 3);
  CHECK(events[0].event_id == "AGO-20160301");
}

TEST_CASE("chain merge is transitive") {
  std::vector<NormalizedRecord> recs{
      record(Source::Floodlist, "A", "PAK", Date(2018, 1, 1), Date(2018, 1, 3)),
      record(Source::Emdat, "B", "PAK", Date(2018, 1, 3), Date(2018, 1, 5)),
      record(Source::Dfo, "C", "PAK", Date(2018, 1, 5), Date(2018, 1, 7)),
      record(Source::Dfo, "D", "PAK", Date(2018, 1, 8), Date(2018, 1, 9)),
  };
  const auto events = consolidate(recs);
  REQUIRE(events.size() == 2);
  CHECK(events[0].start_date == Date(2018, 1, 1));
  CHECK(events[0].end_date == Date(2018, 1, 7));
  CHECK(events[1].source_count() == 1);
}

TEST_CASE("singleton event mirrors its record") {
  auto r = record(Source::Emdat, "X", "IND", Date(2018, 7, 1), Date(2018, 7, 4));
  r.record.fatalities = 12;
  r.record.locations = {"Kerala"};
  std::vector<NormalizedRecord> recs{r};
  const auto events = consolidate(recs);
  REQUIRE(events.size() == 1);
  CHECK(events[0].fatalities == 12);
  CHECK(events[0].start_date == r.record.start_date);
  CHECK(events[0].end_date == *r.record.end_date);
  CHECK(events[0].locations_by_source.at(Source::Emdat) == std::vector<std::string>{"Kerala"});
}

TEST_CASE("fatalities take the max and keep provenance") {
  auto a = record(Source::Floodlist, "A", "IND", Date(2018, 7, 1), Date(2018, 7, 4));
  auto b = record(Source::Emdat, "B", "IND", Date(2018, 7, 2), Date(2018, 7, 6));
  auto c = record(Source::Dfo, "C", "IND", Date(2018, 7, 3), Date(2018, 7, 5));
  a.record.fatalities = 10;
  b.record.fatalities = 14;
  std::vector<NormalizedRecord> recs{a, b, c};
  const auto events = consolidate(recs);
  REQUIRE(events.size() == 1);
  CHECK(events[0].fatalities == 14);
  CHECK(events[0].fatalities_provenance.size() == 2);
}

TEST_CASE("consolidate rejects records without an end date") {
  auto r = record(Source::Dfo, "X", "IND", Date(2018, 7, 1), Date(2018, 7, 4));
  r.record.end_date.reset();
  std::vector<NormalizedRecord> recs{r};
  CHECK_THROWS_AS(consolidate(recs), std::invalid_argument);
}

TEST_CASE("consolidate matches the transitive-closure oracle") {
  std::mt19937 rng(20190520);
  for (int i = 0; i < 200; ++i) {
    const auto recs = covaud::testing::random_instance(rng);
    CHECK(covaud::testing::as_classes(consolidate(recs)) == covaud::testing::oracle_consolidate(recs));
  }
}

TEST_CASE("consolidation properties") {
  std::mt19937 rng(7);
  for (int iter = 0; iter < 100; ++iter) {
    auto recs = covaud::testing::random_instance(rng);
    const auto events = consolidate(recs);

    // order invariance
    auto shuffled = recs;
    std::shuffle(shuffled.begin(), shuffled.end(), rng);
    CHECK(consolidate(shuffled) == events);

    // coverage: every native id exactly once
    std::multiset<std::string> ids;
    for (const auto& e : events)
      for (const auto& ref : e.native_ids) ids.insert(std::string(to_string(ref.source)) + ref.id);
    CHECK(ids.size() == recs.size());
    for (const auto& r : recs) CHECK(ids.count(std::string(to_string(r.record.source)) + r.record.native_id) == 1);

    // no overlapping same-country pair survives
    for (std::size_t i = 0; i < events.size(); ++i)
      for (std::size_t j = i + 1; j < events.size(); ++j)
        if (events[i].country.iso3 == events[j].country.iso3)
          CHECK_FALSE(ranges_intersect(events[i].start_date, events[i].end_date, events[j].start_date,
                                       events[j].end_date));

    // idempotence: merged events fed back as records keep ranges and partition
    std::vector<NormalizedRecord> again;
    for (const auto& e : events) again.push_back(record(Source::Floodlist, e.event_id, e.country.iso3, e.start_date, e.end_date));
    const auto twice = consolidate(again);
    REQUIRE(twice.size() == events.size());
    for (std::size_t i = 0; i < events.size(); ++i) {
      CHECK(twice[i].country.iso3 == events[i].country.iso3);
      CHECK(twice[i].start_date == events[i].start_date);
      CHECK(twice[i].end_date == events[i].end_date);
    }

    // output order
    CHECK(std::is_sorted(events.begin(), events.end(), [](const auto& a, const auto& b) {
      return std::tie(a.country.iso3, a.start_date) < std::tie(b.country.iso3, b.start_date);
    }));
  }
}

TEST_CASE("filter_multi_source and venn counts") {
  std::vector<NormalizedRecord> recs{
      record(Source::Floodlist, "1", "AGO", Date(2016, 3, 5), Date(2016, 3, 7)),
      record(Source::Emdat, "2", "AGO", Date(2016, 3, 1), Date(2016, 3, 10)),
      record(Source::Dfo, "3", "AGO", Date(2016, 3, 1), Date(2016, 3, 10)),
      record(Source::Floodlist, "4", "PAK", Date(2018, 1, 1), Date(2018, 1, 2)),
      record(Source::Emdat, "5", "PAK", Date(2018, 1, 2), Date(2018, 1, 4)),
      record(Source::Dfo, "6", "IND", Date(2018, 1, 1), Date(2018, 1, 2)),
      record(Source::Emdat, "7", "IND", Date(2018, 5, 1), Date(2018, 5, 2)),
      record(Source::Dfo, "8", "IND", Date(2018, 5, 2), Date(2018, 5, 2)),
      record(Source::Floodlist, "9", "USA", Date(2018, 5, 1), Date(2018, 5, 2)),
      record(Source::Dfo, "10", "USA", Date(2018, 9, 1), Date(2018, 9, 2)),
  };
  const auto events = consolidate(recs);
  REQUIRE(events.size() == 6);
  // hand count: AGO F+E+D, IND D, IND E+D, PAK F+E, USA F, USA D
  const auto venn = venn_counts(events);
  CHECK(venn[0] == 0);
  CHECK(venn[0b111] == 1);
  CHECK(venn[0b110] == 1);
  CHECK(venn[0b011] == 1);
  CHECK(venn[0b100] == 2);
  CHECK(venn[0b001] == 1);
  CHECK(venn[0b010] == 0);
  CHECK(venn[0b101] == 0);
  std::size_t total = 0;
  for (auto c : venn) total += c;
  CHECK(total == events.size());
  CHECK(venn_counts({})[0b111] == 0);

  const auto multi = filter_multi_source(events);
  CHECK(multi.size() == 3);
  for (const auto& e : multi) CHECK(e.source_count() >= 2);
  CHECK(venn_label(0b011) == "floodlist+emdat");
}

TEST_CASE("source CSV parsing") {
  SUBCASE("missing columns raise ParseError") {
    std::istringstream in("country,start_date\nUSA,2018-01-01\n");
    CHECK_THROWS_AS(parse_source_records(in, Source::Floodlist), ParseError);
  }
  SUBCASE("bad rows are rejected with line numbers") {
    std::istringstream in(
        "country,began,ended,dead,displaced,id\n"
        "USA,2018-08-20,2018-08-24,1,500,D1\n"
        "USA,2018-13-01,2018-08-24,1,500,D2\n"
        ",2018-08-20,2018-08-24,1,500,D3\n"
        "USA,2018-08-20,2018-08-19,,,D4\n"
        "USA,2018-08-20,,x,,D5\n"
        "USA,2018-08-20,,,,D1\n");
    const auto r = parse_source_records(in, Source::Dfo, "dfo.csv");
    CHECK(r.records.size() == 1);
    REQUIRE(r.rejects.size() == 5);
    CHECK(r.rejects[0].line == 3);
    CHECK(r.rejects[4].reason.find("duplicate") != std::string::npos);
  }
  SUBCASE("EM-DAT multi-country rows become separate records") {
    std::istringstream in(
        "iso,country,start_date,end_date,deaths,affected,disaster_type,id\n"
        "HTI,Haiti,2017-09-07,2017-09-08,,10000,Storm,2017-0381\n"
        "CUB,Cuba,2017-09-09,2017-09-12,10,3000000,Storm,2017-0381\n"
        "MEX,Mexico,2017-09-07,2017-09-08,90,,Earthquake,2017-0390\n");
    const auto r = parse_source_records(in, Source::Emdat);
    REQUIRE(r.records.size() == 2);
    CHECK(r.records[0].native_id == "2017-0381-HTI");
    CHECK(r.records[1].native_id == "2017-0381-CUB");
    CHECK(r.excluded == 1);
    CHECK_FALSE(r.records[0].end_date == std::nullopt);
  }
  SUBCASE("Floodlist landslide-only rows are excluded") {
    std::istringstream in(
        "country,start_date,end_date,fatalities,locations,tags,id\n"
        "Guatemala,2018-06-01,,3,,landslide,FL-9\n"
        "Guatemala,2018-06-01,,3,Escuintla;Sacatepequez,landslide;flash flood,FL-10\n");
    const auto r = parse_source_records(in, Source::Floodlist);
    REQUIRE(r.records.size() == 1);
    CHECK(r.excluded == 1);
    CHECK(r.records[0].locations == std::vector<std::string>{"Escuintla", "Sacatepequez"});
    CHECK_FALSE(r.records[0].end_date);
  }
}

TEST_CASE("fixture ground truth") {
  const auto dir = covaud::testing::fixture_dir() / "gt";
  std::vector<SourceRecord> all;
  std::size_t rejects = 0;
  std::size_t excluded = 0;
  for (auto [file, src] : {std::pair{"floodlist.csv", Source::Floodlist}, std::pair{"emdat.csv", Source::Emdat},
                           std::pair{"dfo.csv", Source::Dfo}}) {
    auto r = parse_source_file(dir / file, src);
    all.insert(all.end(), r.records.begin(), r.records.end());
    rejects += r.rejects.size();
    excluded += r.excluded;
  }
  CHECK(all.size() == 51);
  CHECK(rejects == 3);
  CHECK(excluded == 2);
  const auto prepared = prepare_records(all, registry());
  CHECK(prepared.rejects.size() == 1);
  const auto events = consolidate(prepared.records);
  CHECK(events.size() == 24);
  CHECK(filter_multi_source(events).size() == 21);
  CHECK_THROWS_AS(parse_source_file(dir / "missing.csv", Source::Dfo), IoError);
}

TEST_CASE("event JSON round trip") {
  auto a = record(Source::Floodlist, "A", "IND", Date(2018, 7, 1), Date(2018, 7, 4));
  auto b = record(Source::Emdat, "B", "IND", Date(2018, 7, 2), Date(2018, 7, 6));
  a.record.fatalities = 3;
  b.record.affected = "1200";
  std::vector<NormalizedRecord> recs{a, b};
  const auto events = consolidate(recs);
  std::stringstream io;
  write_events_jsonl(io, events);
  CHECK(read_events_jsonl(io, registry()) == events);

  std::istringstream bad(R"({"event_id":"X","iso3":"ZZZ"})" "\n");
  CHECK_THROWS_AS(read_events_jsonl(bad, registry()), ParseError);
}
