#pragma once

#include <deque>
#include <filesystem>
#include <istream>
#include <memory>
#include <optional>
#include <ostream>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "covaud/wikitext.hpp"

namespace covaud {

struct Article {
  std::string article_id;
  std::string title;
  std::vector<std::string> paragraphs;
  std::vector<Citation> citations;
};

enum class CorpusFormat { Jsonl, MediawikiXml };

std::optional<CorpusFormat> parse_corpus_format(std::string_view s);

struct ArticleReject {
  std::size_t position = 0;  // JSONL line or XML page ordinal
  std::string reason;
};

/// Opens a file for reading, decompressing ".gz" transparently.
/// Throws IoError when the file is missing or the compression is unsupported.
std::unique_ptr<std::istream> open_input(const std::filesystem::path& path);

/// Pull-style article stream. Malformed entries are recorded in rejects()
/// and skipped; the stream continues with the next entry.
class ArticleReader {
 public:
  ArticleReader(std::istream& in, CorpusFormat format);
  ~ArticleReader();
  ArticleReader(const ArticleReader&) = delete;
  ArticleReader& operator=(const ArticleReader&) = delete;

  std::optional<Article> next();

  [[nodiscard]] const std::vector<ArticleReject>& rejects() const { return rejects_; }
  /// MediaWiki pages skipped for being outside the main namespace or redirects.
  [[nodiscard]] std::size_t skipped_pages() const { return skipped_; }

 private:
  struct XmlState;

  std::optional<Article> next_jsonl();
  std::optional<Article> next_xml();

  std::istream& in_;
  CorpusFormat format_;
  std::size_t line_ = 0;
  std::size_t skipped_ = 0;
  std::vector<ArticleReject> rejects_;
  std::unique_ptr<XmlState> xml_;
};

/// Parses one JSON Lines article; throws ParseError describing the problem.
Article article_from_json(const nlohmann::json& j);
nlohmann::json to_json(const Article& a);

/// Byte offsets of one sentence inside its paragraph.
struct SentenceSpan {
  std::size_t begin = 0;
  std::size_t end = 0;
};

std::vector<SentenceSpan> sentence_spans(std::string_view paragraph);
std::vector<std::string> segment_sentences(std::string_view paragraph);

enum class KeywordMode { WordBoundary, Substring };

/// The five flood keywords.
inline constexpr std::string_view kFloodKeywords[] = {"flood", "floods", "flooding", "flooded", "inundation"};

bool keyword_filter(std::string_view text, KeywordMode mode = KeywordMode::WordBoundary);

struct CandidateSentence {
  std::string article_id;
  std::string title;
  std::size_t paragraph_index = 0;
  /// Running index over the whole article, so (article_id, sentence_index)
  /// identifies a sentence.
  std::size_t sentence_index = 0;
  std::string text;
  /// Full paragraph, kept as context for year inference.
  std::string paragraph;
  bool via_title_rule = false;
  double relevance = 0.0;
  std::vector<std::string> citations;
};

nlohmann::json to_json(const CandidateSentence& c);
CandidateSentence candidate_from_json(const nlohmann::json& j);

std::vector<CandidateSentence> extract_candidates(const Article& article,
                                                  KeywordMode mode = KeywordMode::WordBoundary);

/// Maps sentence text to a flood-relevance probability. Implementations must
/// be safe to call concurrently.
class RelevanceScorer {
 public:
  virtual ~RelevanceScorer() = default;
  [[nodiscard]] virtual double score(std::string_view text) const = 0;
  [[nodiscard]] virtual std::string name() const = 0;
};

/// Logistic function over counts of flood cues minus off-topic cues.
class LexicalRelevanceScorer final : public RelevanceScorer {
 public:
  [[nodiscard]] double score(std::string_view text) const override;
  [[nodiscard]] std::string name() const override { return "builtin"; }
};

class ConstantScorer final : public RelevanceScorer {
 public:
  explicit ConstantScorer(double p) : p_(p) {}
  [[nodiscard]] double score(std::string_view) const override { return p_; }
  [[nodiscard]] std::string name() const override;

 private:
  double p_;
};

/// "builtin" or "constant:<p>". Throws ConfigError otherwise.
std::unique_ptr<RelevanceScorer> make_scorer(std::string_view spec);

inline constexpr double kDefaultRelevanceThreshold = 0.40;

class ScoringError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Runs the scorer; throws ScoringError when it fails or leaves [0, 1].
double score_relevance(const CandidateSentence& candidate, const RelevanceScorer& scorer);

inline bool passes_threshold(double score, double threshold = kDefaultRelevanceThreshold) {
  return score > threshold;
}

struct ScanOptions {
  double threshold = kDefaultRelevanceThreshold;
  KeywordMode keyword_mode = KeywordMode::WordBoundary;
  unsigned jobs = 1;
};

struct ScanResult {
  std::vector<CandidateSentence> retained;
  std::size_t articles = 0;
  std::size_t candidates_extracted = 0;
  std::size_t below_threshold = 0;
  /// One entry per candidate dropped because the scorer failed.
  std::vector<std::string> scorer_failures;
  std::vector<ArticleReject> rejects;
  std::size_t skipped_pages = 0;
};

/// Extracts and scores candidates from every article. Output ordered by
/// (article_id, paragraph_index, sentence_index) regardless of `jobs`.
ScanResult scan_corpus(ArticleReader& reader, const RelevanceScorer& scorer, const ScanOptions& options);

/// Per-article work shared by scan_corpus: extraction, scoring and filtering.
void scan_article(const Article& article, const RelevanceScorer& scorer, const ScanOptions& options,
                  ScanResult& into);

void write_candidates_jsonl(std::ostream& out, std::span<const CandidateSentence> candidates);
std::vector<CandidateSentence> read_candidates_jsonl(std::istream& in);

}  // namespace covaud
