#pragma once

#include <cstddef>
#include <istream>
#include <set>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

namespace tlr {

/// Which stopword set applies. Code text additionally drops Java keywords.
enum class TextMode { NaturalLanguage, Code };

struct TokenizerConfig {
  std::set<std::string> stopwords;
  TextMode mode = TextMode::NaturalLanguage;
  std::size_t min_length = 2;

  /// Shipped English list (version "en-v1"), plus Java keywords when mode is Code.
  static TokenizerConfig defaults(TextMode mode);
};

/// Identifier of the shipped stopword list.
inline constexpr std::string_view kStopwordListId = "en-v1";

/// The shipped English stopword list, sorted.
const std::vector<std::string>& builtin_stopwords();

/// Java reserved words and literals, removed from code text only.
const std::vector<std::string>& java_keywords();

/// Parses the stopword file format: one token per line, `#` starts a comment,
/// blank lines ignored, tokens lowercased.
std::set<std::string> parse_stopwords(std::istream& in);

/// Lowercase alphanumeric tokens. Runs of ASCII letters/digits are split at
/// camelCase humps (including acronym ends, "HTMLParser" -> html, parser) and
/// at letter/digit boundaries; everything else separates tokens. Stopwords and
/// tokens shorter than `min_length` are dropped.
std::vector<std::string> tokenize(std::string_view text, const TokenizerConfig& config);

/// Term universe with document frequencies. Terms are sorted.
class Vocabulary {
 public:
  Vocabulary() = default;

  const std::vector<std::string>& terms() const { return terms_; }
  const std::vector<std::size_t>& document_frequencies() const { return df_; }
  std::size_t n_docs() const { return n_docs_; }
  std::size_t size() const { return terms_.size(); }

  /// Index of `term`, or npos when unseen.
  std::size_t index_of(std::string_view term) const;
  std::size_t df(std::string_view term) const;

  /// Smoothed idf ln((1+N)/(1+df)) of the term at `index`.
  double idf(std::size_t index) const;

  static constexpr std::size_t npos = static_cast<std::size_t>(-1);

 private:
  friend Vocabulary build_vocabulary(const std::vector<std::vector<std::string>>& docs);

  std::vector<std::string> terms_;
  std::vector<std::size_t> df_;
  std::unordered_map<std::string, std::size_t> index_;
  std::size_t n_docs_ = 0;
};

/// Throws ValidationError on an empty document collection.
Vocabulary build_vocabulary(const std::vector<std::vector<std::string>>& docs);

/// Sparse vector, entries sorted by term index.
struct TfidfVector {
  std::vector<std::pair<std::size_t, double>> entries;

  double weight(std::size_t index) const;
  double norm() const;
  bool empty() const { return entries.empty(); }
};

/// weight(t) = tf(t, doc) * ln((1+N)/(1+df(t))); terms outside the vocabulary are dropped.
TfidfVector tfidf(const std::vector<std::string>& doc, const Vocabulary& vocab);

/// Cosine similarity, 0 when either vector has zero norm.
double cosine(const TfidfVector& u, const TfidfVector& v);

}  // namespace tlr
