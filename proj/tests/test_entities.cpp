#include <doctest.h>

#include <fstream>
#include <random>
#include <sstream>

#include "covaud/error.hpp"
#include "covaud/extract.hpp"
#include "covaud/geo.hpp"
#include "support.hpp"

using namespace covaud;
using covaud::testing::country;
using covaud::testing::fixture_dir;
using covaud::testing::registry;

namespace {

CandidateSentence candidate(std::string text, std::string title, std::string paragraph = "") {
  CandidateSentence c;
  c.article_id = "t";
  c.title = std::move(title);
  c.paragraph = paragraph.empty() ? text : std::move(paragraph);
  c.text = std::move(text);
  return c;
}

DateMention ymd(int y, unsigned m, std::optional<unsigned> d = std::nullopt) {
  DateMention dm;
  dm.year = y;
  dm.month = m;
  dm.day = d;
  dm.year_source = YearSource::Explicit;
  return dm;
}

PlaceMention place(const std::string& span, std::optional<std::string> iso3) {
  PlaceMention p;
  p.raw_span = span;
  if (iso3) {
    p.resolved = country(*iso3);
    p.resolver_stage = ResolverStage::Gazetteer;
  }
  return p;
}

struct Fixture {
  Gazetteer gazetteer = Gazetteer::load(fixture_dir() / "gazetteer.tsv");
  KnowledgeBase kb = KnowledgeBase::load(fixture_dir() / "kb.tsv", registry());
  ReplayGeocoder replay = ReplayGeocoder::load(fixture_dir() / "replay.jsonl");
  AliasScanInferencer inferencer{registry()};
  GeoCache cache;
  GazetteerExtractor extractor{gazetteer};
  GeoResolver resolver{kb, registry(), inferencer, &replay, &cache};
};

}  // namespace

TEST_CASE("find_dates forms") {
  auto one = [](std::string_view s) {
    const auto d = find_dates(s);
    REQUIRE(d.size() == 1);
    return d[0];
  };
  CHECK(one("On April 13, reportedly 12 people were killed").iso() == "--04-13");
  CHECK(one("In August 2018, the region flooded").iso() == "2018-08");
  CHECK(one("On 16 August 2018 it rained").iso() == "2018-08-16");
  CHECK(one("It began on March 3, 2019.").iso() == "2019-03-03");
  CHECK(one("Recorded 2019-03-04.").iso() == "2019-03-04");
  CHECK(one("early June 2017").day == kEarlyDay);
  CHECK(one("mid-July").day == kMidDay);
  CHECK(one("late March").day == kLateDay);
  CHECK(one("In May there were floods").iso() == "--05");
  CHECK(one("On 5 June, floods").iso() == "--06-05");
  CHECK(one("Floods of 2019").iso() == "2019");
  CHECK(find_dates("the years 1850 and 2150").empty());
  CHECK(find_dates("water may be rising").empty());
  const auto two = find_dates("in September 2017 and October");
  REQUIRE(two.size() == 2);
  CHECK(two[0].year_source == YearSource::Explicit);
  CHECK(two[1].year_source == YearSource::Unresolved);
  CHECK(year_tokens("In 2016, 2017 and again 2016; not 1850") == std::vector<int>{2016, 2017});
}

TEST_CASE("find_dates never invents a year") {
  std::mt19937 rng(3);
  const std::vector<std::string> words{"June", "5", "2018", "early", "in", "floods", "March", "31,", "1999",
                                       "mid", "-", "late", "On", "2018-02-30", "2021-07-14", "May", "and"};
  std::uniform_int_distribution<std::size_t> pick(0, words.size() - 1);
  for (int i = 0; i < 1000; ++i) {
    std::string s;
    for (int w = 0; w < 8; ++w) s += words[pick(rng)] + " ";
    std::size_t cursor = 0;
    for (const auto& d : find_dates(s)) {
      CHECK((d.year_source == YearSource::Explicit) == !year_tokens(d.raw_span).empty());
      CHECK(d.year.has_value() == (d.year_source == YearSource::Explicit));
      const auto at = s.find(d.raw_span, cursor);
      REQUIRE(at != std::string::npos);
      cursor = at + d.raw_span.size();
      if (d.day) CHECK(d.month.has_value());
    }
  }
}

TEST_CASE("year inference table") {
  for (const auto& c : covaud::testing::year_cases()) {
    CAPTURE(c.sentence);
    CAPTURE(c.paragraph);
    CAPTURE(c.title);
    const auto mentions = find_dates(c.sentence);
    std::vector<DateMention> partial;
    for (const auto& m : mentions)
      if (m.month && !m.year) partial.push_back(m);
    REQUIRE(partial.size() == 1);
    const auto out = infer_year(partial[0], c.sentence, c.paragraph, c.title);
    CHECK(out.year == c.expected);
    CHECK(out.year_source == c.expected_source);
  }
}

TEST_CASE("explicit years are never overridden") {
  const auto d = find_dates("In August 2018 it flooded")[0];
  CHECK(infer_year(d, "In August 2018 it flooded", "2016", "2015") == d);
}

TEST_CASE("infer_year is monotone in paragraph context") {
  for (const auto& c : covaud::testing::year_cases()) {
    if (c.expected_source != YearSource::Sentence) continue;
    auto m = find_dates(c.sentence)[0];
    const auto with = infer_year(m, c.sentence, c.paragraph, c.title);
    const auto without = infer_year(m, c.sentence, c.sentence, c.title);
    CHECK(with == without);
  }
}

TEST_CASE("gazetteer and placename extraction") {
  Fixture f;
  CHECK(f.gazetteer.lookup("kyushu").size() == 1);
  CHECK(f.gazetteer.lookup("Springfield").size() == 2);
  CHECK(f.gazetteer.lookup("Nowhere").empty());
  CHECK(f.extractor.extract("Floods hit Kyushu, Japan and Manila.") ==
        std::vector<std::string>{"Kyushu", "Japan", "Manila"});
  // longest match wins and lowercase text is not a placename
  CHECK(f.extractor.extract("In the Tiquicheo Municipality rain fell") ==
        std::vector<std::string>{"Tiquicheo Municipality"});
  CHECK(f.extractor.extract("floods in japan").empty());
  const auto mentions = extract_placenames("Japan and Japan again, then Kyushu", f.extractor);
  REQUIRE(mentions.size() == 2);
  CHECK_FALSE(mentions[0].resolved);
  CHECK(mentions[0].resolver_stage == ResolverStage::Unresolved);
}

TEST_CASE("expand_candidates") {
  const auto c = candidate("x", "y");
  std::vector<LocatedDate> one_date{{ymd(2018, 8, 20), DateOrigin::Sentence}};
  std::vector<LocatedDate> no_date{{DateMention{"June", std::nullopt, 6, std::nullopt, YearSource::Unresolved},
                                    DateOrigin::Sentence}};

  SUBCASE("2 countries x 1 date") {
    std::vector<PlaceMention> places{place("Kyushu", "JPN"), place("Manila", "PHL")};
    CHECK(expand_candidates(c, one_date, places).size() == 2);
  }
  SUBCASE("no resolved date is discarded") {
    std::vector<PlaceMention> places{place("Kyushu", "JPN")};
    CHECK(expand_candidates(c, no_date, places).empty());
  }
  SUBCASE("same country twice is deduplicated") {
    std::vector<PlaceMention> places{place("Kyushu", "JPN"), place("Japan", "JPN"), place("Atlantis", std::nullopt)};
    const auto out = expand_candidates(c, one_date, places);
    REQUIRE(out.size() == 1);
    CHECK(out[0].place.raw_span == "Kyushu");
  }
  SUBCASE("size is countries times dates") {
    std::vector<PlaceMention> places{place("A", "JPN"), place("B", "PHL"), place("C", "USA"), place("D", "JPN")};
    std::vector<LocatedDate> dates{{ymd(2018, 8, 20), DateOrigin::Sentence},
                                   {ymd(2018, 9), DateOrigin::Title},
                                   no_date[0]};
    const auto out = expand_candidates(c, dates, places);
    CHECK(out.size() == 3 * 2);
    for (const auto& r : out) {
      CHECK(r.date.resolved());
      CHECK(r.place.resolved->iso3 == r.country.iso3);
    }
  }
}

TEST_CASE("candidate dates include the title") {
  const auto c = candidate("Heavy rain fell on June 5.", "June 2018 floods in Kerala", "It was 2017. Heavy rain fell on June 5.");
  const auto dates = candidate_dates(c);
  REQUIRE(dates.size() >= 2);
  CHECK(dates[0].date.iso() == "2017-06-05");
  CHECK(dates[0].date.year_source == YearSource::Paragraph);
  CHECK(dates[0].origin == DateOrigin::Sentence);
  bool title_seen = false;
  for (const auto& d : dates)
    if (d.origin == DateOrigin::Title && d.date.iso() == "2018-06") title_seen = true;
  CHECK(title_seen);
}

TEST_CASE("Table 2 sentences") {
  Fixture f;
  const std::vector<std::pair<std::string, std::optional<std::string>>> rows{
      {"The 2009 West Africa floods are a natural disaster that began in June 2009 as a consequence of "
       "exceptionally heavy seasonal rainfall in large areas of West Africa",
       std::nullopt},
      {"In the Tiquicheo Municipality, 10 houses flooded after a river near the city overflowed its banks",
       std::nullopt},
      {"The town of Poldokhtar in Lorestan Province was engulfed by flood water.", std::nullopt},
      {"2015 Southeast Africa floods", std::nullopt},
      {"New Orleans Outfall Canals", std::nullopt},
      {"Serious flooding was also reported in Greenwich, Woolwich and other locations further downriver, "
       "causing major property damage.",
       "GBR"},
      {"In July 2012, heavy torrential rains caused floods in Kyushu, Japan, leaving 32 people dead or missing.",
       "JPN"},
      {"In Antu County, 70 homes in one village were destroyed by flooding, a mountain valley was submerged by "
       "floods 20 m deep, forcing 570 families to evacuate.",
       "CHN"},
  };
  for (const auto& [text, expected] : rows) {
    CAPTURE(text);
    const auto e = extract_candidate(candidate(text, text), f.extractor, f.resolver);
    std::set<std::string> countries;
    for (const auto& p : e.places) {
      CHECK(p.resolved.has_value() == (p.resolver_stage != ResolverStage::Unresolved));
      if (p.resolved) countries.insert(p.resolved->iso3);
    }
    if (expected) {
      CHECK(countries == std::set<std::string>{*expected});
    } else {
      CHECK(countries.empty());
    }
  }
}

TEST_CASE("extract_all keeps order and ignores jobs") {
  std::ifstream in(fixture_dir() / "corpus.jsonl");
  ArticleReader reader(in, CorpusFormat::Jsonl);
  std::vector<CandidateSentence> cands;
  while (auto a = reader.next())
    for (auto& c : extract_candidates(*a)) cands.push_back(std::move(c));

  std::vector<std::string> outputs;
  for (unsigned jobs : {1U, 3U, 8U}) {
    Fixture f;
    const auto r = extract_all(cands, f.extractor, f.resolver, jobs);
    CHECK(r.stats.candidates == cands.size());
    CHECK(r.stats.resolved + r.stats.discarded == cands.size());
    std::ostringstream out;
    write_resolved_jsonl(out, r.resolved);
    outputs.push_back(out.str());
    for (const auto& rc : r.resolved) {
      CHECK(rc.date.resolved());
      CHECK(rc.place.resolved->iso3 == rc.country.iso3);
    }
  }
  CHECK(outputs[0] == outputs[1]);
  CHECK(outputs[0] == outputs[2]);

  std::istringstream back(outputs[0]);
  const auto parsed = read_resolved_jsonl(back, registry());
  std::ostringstream again;
  write_resolved_jsonl(again, parsed);
  CHECK(again.str() == outputs[0]);

  std::istringstream bad("{\"iso3\":\"USA\"}\n");
  CHECK_THROWS_AS(read_resolved_jsonl(bad, registry()), ParseError);
}
