#include "covaud/corpus.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <future>
#include <iomanip>
#include <sstream>
#include <thread>

#include <expat.h>
#include <zlib.h>

#include "covaud/error.hpp"
#include "covaud/text.hpp"

namespace covaud {

using nlohmann::json;

std::optional<CorpusFormat> parse_corpus_format(std::string_view s) {
  const auto l = text::to_lower(s);
  if (l == "jsonl") return CorpusFormat::Jsonl;
  if (l == "xml" || l == "mediawiki" || l == "mediawiki_xml") return CorpusFormat::MediawikiXml;
  return std::nullopt;
}

// ---------------------------------------------------------------------------
// Input streams

namespace {

class GzipStreambuf : public std::streambuf {
 public:
  explicit GzipStreambuf(const std::filesystem::path& path) : file_(gzopen(path.c_str(), "rb")) {
    if (file_ == nullptr) throw IoError("cannot open " + path.string());
  }
  ~GzipStreambuf() override {
    if (file_ != nullptr) gzclose(file_);
  }
  GzipStreambuf(const GzipStreambuf&) = delete;
  GzipStreambuf& operator=(const GzipStreambuf&) = delete;

 protected:
  int_type underflow() override {
    if (gptr() < egptr()) return traits_type::to_int_type(*gptr());
    const int n = gzread(file_, buffer_, sizeof buffer_);
    if (n < 0) {
      int errnum = 0;
      throw IoError(std::string("gzip read error: ") + gzerror(file_, &errnum));
    }
    if (n == 0) return traits_type::eof();
    setg(buffer_, buffer_, buffer_ + n);
    return traits_type::to_int_type(*gptr());
  }

 private:
  gzFile file_;
  char buffer_[1 << 16];
};

class GzipIStream : public std::istream {
 public:
  explicit GzipIStream(const std::filesystem::path& path) : std::istream(nullptr), buf_(path) { rdbuf(&buf_); }

 private:
  GzipStreambuf buf_;
};

}  // namespace

std::unique_ptr<std::istream> open_input(const std::filesystem::path& path) {
  const auto ext = text::to_lower(path.extension().string());
  if (ext == ".gz") return std::make_unique<GzipIStream>(path);
  if (ext == ".bz2" || ext == ".xz" || ext == ".zst") {
    throw IoError(path.string() + ": " + ext + " compression is not supported; use .gz or decompress first");
  }
  auto in = std::make_unique<std::ifstream>(path, std::ios::binary);
  if (!*in) throw IoError("cannot open " + path.string());
  return in;
}

// ---------------------------------------------------------------------------
// Articles

Article article_from_json(const json& j) {
  if (!j.is_object()) throw ParseError("article is not a JSON object");
  Article a;
  const auto title = j.find("title");
  if (title == j.end() || !title->is_string() || title->get<std::string>().empty()) {
    throw ParseError("missing or empty title");
  }
  a.title = title->get<std::string>();
  const auto id = j.find("article_id");
  if (id == j.end()) throw ParseError("missing article_id");
  if (id->is_string()) {
    a.article_id = id->get<std::string>();
  } else if (id->is_number_integer()) {
    a.article_id = std::to_string(id->get<long long>());
  } else {
    throw ParseError("article_id must be a string");
  }
  if (a.article_id.empty()) throw ParseError("empty article_id");
  const auto paras = j.find("paragraphs");
  if (paras == j.end() || !paras->is_array()) throw ParseError("missing paragraphs array");
  for (const auto& p : *paras) {
    if (!p.is_string()) throw ParseError("paragraph is not a string");
    a.paragraphs.push_back(p.get<std::string>());
  }
  if (const auto cites = j.find("citations"); cites != j.end()) {
    if (!cites->is_array()) throw ParseError("citations must be an array");
    for (const auto& c : *cites) {
      Citation cite{c.at("paragraph").get<std::size_t>(), c.at("offset").get<std::size_t>(),
                    c.at("url").get<std::string>()};
      if (cite.paragraph >= a.paragraphs.size()) throw ParseError("citation paragraph out of range");
      a.citations.push_back(std::move(cite));
    }
  }
  return a;
}

json to_json(const Article& a) {
  json cites = json::array();
  for (const auto& c : a.citations) {
    cites.push_back({{"paragraph", c.paragraph}, {"offset", c.offset}, {"url", c.url}});
  }
  json j{{"article_id", a.article_id}, {"title", a.title}, {"paragraphs", a.paragraphs}};
  if (!a.citations.empty()) j["citations"] = cites;
  return j;
}

struct ArticleReader::XmlState {
  struct Page {
    std::string title;
    std::string ns;
    std::string id;
    std::string text;
    bool redirect = false;
    bool has_text = false;
  };

  XML_Parser parser = nullptr;
  std::vector<std::string> stack;
  Page current;
  std::string* sink = nullptr;
  std::deque<Page> ready;
  bool finished = false;
  std::size_t pages_seen = 0;

  XmlState() {
    parser = XML_ParserCreate("UTF-8");
    XML_SetUserData(parser, this);
    XML_SetElementHandler(parser, &XmlState::on_start, &XmlState::on_end);
    XML_SetCharacterDataHandler(parser, &XmlState::on_text);
  }
  ~XmlState() { XML_ParserFree(parser); }
  XmlState(const XmlState&) = delete;
  XmlState& operator=(const XmlState&) = delete;

  [[nodiscard]] std::string_view parent() const {
    return stack.size() >= 2 ? std::string_view(stack[stack.size() - 2]) : std::string_view();
  }

  static void on_start(void* data, const XML_Char* name, const XML_Char** /*attrs*/) {
    auto* self = static_cast<XmlState*>(data);
    self->stack.emplace_back(name);
    const std::string_view n(name);
    const auto parent = self->parent();
    if (n == "page") {
      self->current = Page{};
    } else if (parent == "page" && n == "title") {
      self->sink = &self->current.title;
    } else if (parent == "page" && n == "ns") {
      self->sink = &self->current.ns;
    } else if (parent == "page" && n == "id") {
      self->sink = &self->current.id;
    } else if (parent == "page" && n == "redirect") {
      self->current.redirect = true;
    } else if (parent == "revision" && n == "text" && !self->current.has_text) {
      self->current.has_text = true;
      self->sink = &self->current.text;
    }
  }

  static void on_end(void* data, const XML_Char* name) {
    auto* self = static_cast<XmlState*>(data);
    self->sink = nullptr;
    if (std::string_view(name) == "page") self->ready.push_back(std::move(self->current));
    if (!self->stack.empty()) self->stack.pop_back();
  }

  static void on_text(void* data, const XML_Char* s, int len) {
    auto* self = static_cast<XmlState*>(data);
    if (self->sink != nullptr) self->sink->append(s, static_cast<std::size_t>(len));
  }
};

ArticleReader::ArticleReader(std::istream& in, CorpusFormat format) : in_(in), format_(format) {
  if (format_ == CorpusFormat::MediawikiXml) xml_ = std::make_unique<XmlState>();
}

ArticleReader::~ArticleReader() = default;

std::optional<Article> ArticleReader::next() {
  return format_ == CorpusFormat::Jsonl ? next_jsonl() : next_xml();
}

std::optional<Article> ArticleReader::next_jsonl() {
  std::string line;
  while (std::getline(in_, line)) {
    ++line_;
    if (text::trim(line).empty()) continue;
    try {
      return article_from_json(json::parse(line));
    } catch (const json::exception& e) {
      rejects_.push_back({line_, std::string("invalid JSON: ") + e.what()});
    } catch (const ParseError& e) {
      rejects_.push_back({line_, e.what()});
    }
  }
  return std::nullopt;
}

std::optional<Article> ArticleReader::next_xml() {
  auto& st = *xml_;
  while (true) {
    while (st.ready.empty() && !st.finished) {
      char buffer[1 << 16];
      in_.read(buffer, sizeof buffer);
      const auto n = in_.gcount();
      const bool final = n == 0 || in_.eof();
      if (XML_Parse(st.parser, buffer, static_cast<int>(n), final ? 1 : 0) == XML_STATUS_ERROR) {
        std::ostringstream msg;
        msg << "XML error at line " << XML_GetCurrentLineNumber(st.parser) << ": "
            << XML_ErrorString(XML_GetErrorCode(st.parser));
        rejects_.push_back({st.pages_seen + 1, msg.str()});
        st.finished = true;
        break;
      }
      if (final) st.finished = true;
    }
    if (st.ready.empty()) return std::nullopt;

    auto page = std::move(st.ready.front());
    st.ready.pop_front();
    ++st.pages_seen;
    if (text::trim(page.ns) != "0" || page.redirect) {
      ++skipped_;
      continue;
    }
    if (text::trim(page.title).empty()) {
      rejects_.push_back({st.pages_seen, "page without title"});
      continue;
    }
    if (!page.has_text) {
      rejects_.push_back({st.pages_seen, "page '" + page.title + "' has no revision text"});
      continue;
    }
    auto plain = strip_wikitext(page.text);
    Article a;
    a.title = text::trim(page.title);
    a.article_id = text::trim(page.id).empty() ? a.title : text::trim(page.id);
    a.paragraphs = std::move(plain.paragraphs);
    a.citations = std::move(plain.citations);
    return a;
  }
}

// ---------------------------------------------------------------------------
// Sentences

namespace {

constexpr std::string_view kAbbreviations[] = {
    "mr",   "mrs", "ms",   "dr",  "prof", "st",  "mt",  "ft",  "jr",   "sr",  "vs",  "no",
    "gen",  "col", "lt",   "sgt", "rev",  "gov", "sen", "rep", "inc",  "ltd", "co",  "corp",
    "jan",  "feb", "mar",  "apr", "jun",  "jul", "aug", "sep", "sept", "oct", "nov", "dec",
    "u.s",  "u.k", "u.n",  "e.g", "i.e",  "approx", "est", "fig", "vol", "pp", "ca", "cf"};

bool is_abbreviation(std::string_view para, std::size_t dot) {
  std::size_t b = dot;
  while (b > 0 && !text::is_space(para[b - 1]) && para[b - 1] != '(' && para[b - 1] != '"') --b;
  const auto word = text::to_lower(para.substr(b, dot - b));
  if (word.empty()) return false;
  // single initials such as "George W. Bush"
  if (word.size() == 1 && text::is_ascii_alpha(word[0])) return true;
  return std::find(std::begin(kAbbreviations), std::end(kAbbreviations), word) != std::end(kAbbreviations);
}

// Closing quote or bracket bytes that may follow terminal punctuation.
std::size_t closer_length(std::string_view s, std::size_t i) {
  if (i >= s.size()) return 0;
  const char c = s[i];
  if (c == '"' || c == '\'' || c == ')' || c == ']') return 1;
  if (i + 2 < s.size() + 0 && static_cast<unsigned char>(c) == 0xE2 &&
      static_cast<unsigned char>(s[i + 1]) == 0x80 &&
      (static_cast<unsigned char>(s[i + 2]) == 0x9D || static_cast<unsigned char>(s[i + 2]) == 0x99)) {
    return 3;
  }
  return 0;
}

bool opens_sentence(std::string_view s, std::size_t i) {
  if (i >= s.size()) return false;
  const char c = s[i];
  if (text::is_ascii_upper(c) || text::is_ascii_digit(c) || c == '"' || c == '\'' || c == '(' || c == '[') {
    return true;
  }
  // opening curly quotes
  return i + 2 < s.size() && static_cast<unsigned char>(c) == 0xE2 &&
         static_cast<unsigned char>(s[i + 1]) == 0x80 &&
         (static_cast<unsigned char>(s[i + 2]) == 0x9C || static_cast<unsigned char>(s[i + 2]) == 0x98);
}

}  // namespace

std::vector<SentenceSpan> sentence_spans(std::string_view para) {
  std::vector<SentenceSpan> spans;
  std::size_t begin = 0;
  while (begin < para.size() && text::is_space(para[begin])) ++begin;
  std::size_t i = begin;
  while (i < para.size()) {
    const char c = para[i];
    if (c != '.' && c != '!' && c != '?') {
      ++i;
      continue;
    }
    std::size_t end = i + 1;
    while (end < para.size() && (para[end] == '.' || para[end] == '!' || para[end] == '?')) ++end;
    while (const auto n = closer_length(para, end)) end += n;
    std::size_t next = end;
    while (next < para.size() && text::is_space(para[next])) ++next;
    // "[...]" and "(...)" mark elided text inside a sentence
    const bool elision = c == '.' && i > 0 && (para[i - 1] == '[' || para[i - 1] == '(');
    const bool boundary =
        !elision && next > end && opens_sentence(para, next) && !(c == '.' && is_abbreviation(para, i));
    if (boundary) {
      spans.push_back({begin, end});
      begin = next;
    }
    i = end;
  }
  std::size_t last = para.size();
  while (last > begin && text::is_space(para[last - 1])) --last;
  if (last > begin) spans.push_back({begin, last});
  return spans;
}

std::vector<std::string> segment_sentences(std::string_view paragraph) {
  std::vector<std::string> out;
  for (const auto& s : sentence_spans(paragraph)) out.emplace_back(paragraph.substr(s.begin, s.end - s.begin));
  return out;
}

bool keyword_filter(std::string_view s, KeywordMode mode) {
  if (mode == KeywordMode::Substring) {
    const auto lower = text::to_lower(s);
    return std::any_of(std::begin(kFloodKeywords), std::end(kFloodKeywords),
                       [&](std::string_view k) { return lower.find(k) != std::string::npos; });
  }
  for (const auto& tok : text::word_tokens(s)) {
    if (tok.text.size() < 5 || tok.text.size() > 10) continue;
    const auto w = text::to_lower(tok.text);
    if (std::find(std::begin(kFloodKeywords), std::end(kFloodKeywords), w) != std::end(kFloodKeywords)) {
      return true;
    }
  }
  return false;
}

json to_json(const CandidateSentence& c) {
  return json{{"article_id", c.article_id},
              {"title", c.title},
              {"paragraph_index", c.paragraph_index},
              {"sentence_index", c.sentence_index},
              {"text", c.text},
              {"paragraph", c.paragraph},
              {"via_title_rule", c.via_title_rule},
              {"relevance", c.relevance},
              {"citations", c.citations}};
}

CandidateSentence candidate_from_json(const json& j) {
  try {
    CandidateSentence c;
    c.article_id = j.at("article_id").get<std::string>();
    c.title = j.at("title").get<std::string>();
    c.paragraph_index = j.at("paragraph_index").get<std::size_t>();
    c.sentence_index = j.at("sentence_index").get<std::size_t>();
    c.text = j.at("text").get<std::string>();
    c.paragraph = j.value("paragraph", c.text);
    c.via_title_rule = j.value("via_title_rule", false);
    c.relevance = j.value("relevance", 0.0);
    c.citations = j.value("citations", std::vector<std::string>{});
    if (c.text.empty()) throw ParseError("empty candidate text");
    return c;
  } catch (const json::exception& e) {
    throw ParseError(std::string("malformed candidate: ") + e.what());
  }
}

std::vector<CandidateSentence> extract_candidates(const Article& article, KeywordMode mode) {
  std::vector<CandidateSentence> out;
  const bool title_rule = keyword_filter(article.title, mode);
  std::size_t sentence_index = 0;
  for (std::size_t p = 0; p < article.paragraphs.size(); ++p) {
    const auto& para = article.paragraphs[p];
    const auto spans = sentence_spans(para);
    const std::size_t first_index = sentence_index;
    std::vector<std::vector<std::string>> cites(spans.size());
    for (const auto& c : article.citations) {
      if (c.paragraph != p || spans.empty()) continue;
      // nearest sentence starting strictly before the anchor
      std::size_t owner = 0;
      for (std::size_t s = 0; s < spans.size(); ++s) {
        if (spans[s].begin < c.offset) owner = s;
      }
      cites[owner].push_back(c.url);
    }
    for (std::size_t s = 0; s < spans.size(); ++s) {
      std::string sentence(para.substr(spans[s].begin, spans[s].end - spans[s].begin));
      const auto index = first_index + s;
      if (!title_rule && !keyword_filter(sentence, mode)) continue;
      CandidateSentence c;
      c.article_id = article.article_id;
      c.title = article.title;
      c.paragraph_index = p;
      c.sentence_index = index;
      c.text = std::move(sentence);
      c.paragraph = para;
      c.via_title_rule = title_rule;
      c.citations = std::move(cites[s]);
      out.push_back(std::move(c));
    }
    sentence_index += spans.size();
  }
  return out;
}

// ---------------------------------------------------------------------------
// Relevance

namespace {

bool has_prefix(std::string_view word, std::string_view prefix) {
  return word.size() >= prefix.size() && word.compare(0, prefix.size(), prefix) == 0;
}

}  // namespace

double LexicalRelevanceScorer::score(std::string_view s) const {
  constexpr double kBias = -1.0;
  constexpr double kKeywordWeight = 1.5;
  constexpr double kCueWeight = 1.0;
  constexpr double kOffTopicWeight = -2.0;
  constexpr std::string_view kCuePrefixes[] = {"rain", "overflow", "evacuat", "submerg", "inundat"};
  constexpr std::string_view kOffTopic[] = {"myth", "myths", "mythology", "film", "films", "album", "albums"};

  int keywords = 0;
  int cues = 0;
  int off_topic = 0;
  const auto tokens = text::word_tokens(s);
  std::vector<std::string> words;
  words.reserve(tokens.size());
  for (const auto& t : tokens) words.push_back(text::to_lower(t.text));
  for (std::size_t i = 0; i < words.size(); ++i) {
    const auto& w = words[i];
    if (std::find(std::begin(kFloodKeywords), std::end(kFloodKeywords), w) != std::end(kFloodKeywords)) {
      ++keywords;
      continue;
    }
    if (std::any_of(std::begin(kCuePrefixes), std::end(kCuePrefixes),
                    [&](std::string_view p) { return has_prefix(w, p); })) {
      ++cues;
    }
    if (i + 1 < words.size() && w == "storm" && has_prefix(words[i + 1], "surge")) ++cues;
    if (std::find(std::begin(kOffTopic), std::end(kOffTopic), w) != std::end(kOffTopic)) ++off_topic;
    if (i + 1 < words.size() && w == "video" && has_prefix(words[i + 1], "game")) ++off_topic;
  }
  const double z = kBias + kKeywordWeight * keywords + kCueWeight * cues + kOffTopicWeight * off_topic;
  return 1.0 / (1.0 + std::exp(-z));
}

std::string ConstantScorer::name() const {
  std::ostringstream os;
  os << "constant:" << p_;
  return os.str();
}

std::unique_ptr<RelevanceScorer> make_scorer(std::string_view spec) {
  if (spec == "builtin") return std::make_unique<LexicalRelevanceScorer>();
  if (spec.rfind("constant:", 0) == 0) {
    const std::string value(spec.substr(9));
    try {
      std::size_t used = 0;
      const double p = std::stod(value, &used);
      if (used != value.size() || !(p >= 0.0 && p <= 1.0)) throw std::invalid_argument(value);
      return std::make_unique<ConstantScorer>(p);
    } catch (const std::exception&) {
      throw ConfigError("constant scorer needs a probability in [0,1], got '" + value + "'");
    }
  }
  throw ConfigError("unknown scorer '" + std::string(spec) + "' (expected builtin or constant:<p>)");
}

double score_relevance(const CandidateSentence& candidate, const RelevanceScorer& scorer) {
  double p = 0.0;
  try {
    p = scorer.score(candidate.text);
  } catch (const std::exception& e) {
    throw ScoringError(std::string("scorer failed: ") + e.what());
  }
  if (!(p >= 0.0 && p <= 1.0)) {
    throw ScoringError("scorer returned " + std::to_string(p) + " outside [0,1]");
  }
  return p;
}

void scan_article(const Article& article, const RelevanceScorer& scorer, const ScanOptions& options,
                  ScanResult& into) {
  ++into.articles;
  auto candidates = extract_candidates(article, options.keyword_mode);
  into.candidates_extracted += candidates.size();
  for (auto& c : candidates) {
    try {
      c.relevance = score_relevance(c, scorer);
    } catch (const ScoringError& e) {
      into.scorer_failures.push_back(c.article_id + "#" + std::to_string(c.sentence_index) + ": " + e.what());
      continue;
    }
    if (passes_threshold(c.relevance, options.threshold)) {
      into.retained.push_back(std::move(c));
    } else {
      ++into.below_threshold;
    }
  }
}

ScanResult scan_corpus(ArticleReader& reader, const RelevanceScorer& scorer, const ScanOptions& options) {
  constexpr std::size_t kBatch = 512;
  const unsigned jobs = std::max(1U, options.jobs);
  ScanResult total;
  std::vector<Article> batch;

  auto process_batch = [&] {
    if (batch.empty()) return;
    const std::size_t workers = std::min<std::size_t>(jobs, batch.size());
    std::vector<std::future<ScanResult>> futures;
    for (std::size_t w = 0; w < workers; ++w) {
      futures.push_back(std::async(std::launch::async, [&, w] {
        ScanResult part;
        for (std::size_t k = w; k < batch.size(); k += workers) scan_article(batch[k], scorer, options, part);
        return part;
      }));
    }
    for (auto& f : futures) {
      auto part = f.get();
      total.articles += part.articles;
      total.candidates_extracted += part.candidates_extracted;
      total.below_threshold += part.below_threshold;
      std::move(part.retained.begin(), part.retained.end(), std::back_inserter(total.retained));
      std::move(part.scorer_failures.begin(), part.scorer_failures.end(),
                std::back_inserter(total.scorer_failures));
    }
    batch.clear();
  };

  while (auto article = reader.next()) {
    batch.push_back(std::move(*article));
    if (batch.size() >= kBatch) process_batch();
  }
  process_batch();

  std::sort(total.retained.begin(), total.retained.end(), [](const CandidateSentence& a, const CandidateSentence& b) {
    if (a.article_id != b.article_id) return a.article_id < b.article_id;
    if (a.paragraph_index != b.paragraph_index) return a.paragraph_index < b.paragraph_index;
    return a.sentence_index < b.sentence_index;
  });
  std::sort(total.scorer_failures.begin(), total.scorer_failures.end());
  total.rejects = reader.rejects();
  total.skipped_pages = reader.skipped_pages();
  return total;
}

void write_candidates_jsonl(std::ostream& out, std::span<const CandidateSentence> candidates) {
  for (const auto& c : candidates) out << to_json(c).dump() << '\n';
}

std::vector<CandidateSentence> read_candidates_jsonl(std::istream& in) {
  std::vector<CandidateSentence> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (text::trim(line).empty()) continue;
    try {
      out.push_back(candidate_from_json(json::parse(line)));
    } catch (const std::exception& e) {
      throw ParseError("candidates line " + std::to_string(lineno) + ": " + e.what());
    }
  }
  return out;
}

}  // namespace covaud
