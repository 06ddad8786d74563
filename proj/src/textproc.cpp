#include "tlr/textproc.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <map>

#include "tlr/error.hpp"

namespace tlr {

const std::vector<std::string>& builtin_stopwords() {
  // Mirrors data/stopwords-en-v1.txt; a unit test keeps the two in sync.
  static const std::vector<std::string> words = {
      "about", "above", "after", "again", "against", "all", "also", "am", "an",
      "and", "any", "are", "as", "at", "be", "because", "been", "before", "being",
      "below", "between", "both", "but", "by", "can", "could", "did", "do", "does",
      "doing", "down", "during", "each", "etc", "few", "for", "from", "further",
      "had", "has", "have", "having", "he", "her", "here", "hers", "herself", "him",
      "himself", "his", "how", "if", "in", "into", "is", "it", "its", "itself",
      "just", "may", "me", "might", "more", "most", "must", "my", "myself", "no",
      "nor", "not", "now", "of", "off", "on", "once", "only", "or", "other", "our",
      "ours", "ourselves", "out", "over", "own", "same", "shall", "she", "should",
      "so", "some", "such", "than", "that", "the", "their", "theirs", "them",
      "themselves", "then", "there", "these", "they", "this", "those", "through",
      "to", "too", "under", "until", "up", "upon", "us", "very", "via", "was", "we",
      "were", "what", "when", "where", "which", "while", "who", "whom", "why",
      "will", "with", "within", "would", "you", "your", "yours", "yourself",
      "yourselves"
  };
  return words;
}

const std::vector<std::string>& java_keywords() {
  static const std::vector<std::string> words = {
      "abstract", "assert", "boolean", "break", "byte", "case", "catch", "char", "class", "const",
      "continue", "default", "do", "double", "else", "enum", "extends", "false", "final", "finally",
      "float", "for", "goto", "if", "implements", "import", "instanceof", "int", "interface",
      "long", "native", "new", "null", "package", "private", "protected", "public", "record",
      "return", "short", "static", "strictfp", "super", "switch", "synchronized", "this", "throw",
      "throws", "transient", "true", "try", "var", "void", "volatile", "while"};
  return words;
}

TokenizerConfig TokenizerConfig::defaults(TextMode mode) {
  TokenizerConfig config;
  config.mode = mode;
  const auto& base = builtin_stopwords();
  config.stopwords.insert(base.begin(), base.end());
  if (mode == TextMode::Code) {
    const auto& kw = java_keywords();
    config.stopwords.insert(kw.begin(), kw.end());
  }
  return config;
}

std::set<std::string> parse_stopwords(std::istream& in) {
  std::set<std::string> out;
  std::string line;
  while (std::getline(in, line)) {
    if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    auto first = line.find_first_not_of(" \t\r");
    if (first == std::string::npos) continue;
    auto last = line.find_last_not_of(" \t\r");
    std::string word = line.substr(first, last - first + 1);
    std::transform(word.begin(), word.end(), word.begin(),
                   [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
    out.insert(std::move(word));
  }
  return out;
}

namespace {

bool is_alnum(char c) { return std::isalnum(static_cast<unsigned char>(c)) != 0; }
bool is_upper(char c) { return c >= 'A' && c <= 'Z'; }
bool is_lower(char c) { return c >= 'a' && c <= 'z'; }
bool is_digit(char c) { return c >= '0' && c <= '9'; }

// Splits one alphanumeric run at camelCase and letter/digit boundaries.
void split_run(std::string_view run, std::vector<std::string>& out) {
  std::size_t start = 0;
  for (std::size_t i = 1; i < run.size(); ++i) {
    const char prev = run[i - 1];
    const char cur = run[i];
    bool boundary = false;
    if (is_digit(prev) != is_digit(cur)) {
      boundary = true;
    } else if (is_lower(prev) && is_upper(cur)) {
      boundary = true;
    } else if (is_upper(prev) && is_upper(cur) && i + 1 < run.size() && is_lower(run[i + 1])) {
      boundary = true;
    }
    if (boundary) {
      out.emplace_back(run.substr(start, i - start));
      start = i;
    }
  }
  out.emplace_back(run.substr(start));
}

}  // namespace

std::vector<std::string> tokenize(std::string_view text, const TokenizerConfig& config) {
  std::vector<std::string> pieces;
  std::size_t i = 0;
  while (i < text.size()) {
    if (!is_alnum(text[i])) {
      ++i;
      continue;
    }
    std::size_t j = i;
    while (j < text.size() && is_alnum(text[j])) ++j;
    split_run(text.substr(i, j - i), pieces);
    i = j;
  }

  std::vector<std::string> tokens;
  tokens.reserve(pieces.size());
  for (auto& piece : pieces) {
    std::transform(piece.begin(), piece.end(), piece.begin(),
                   [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
    if (piece.size() < config.min_length) continue;
    if (config.stopwords.count(piece) != 0) continue;
    tokens.push_back(std::move(piece));
  }
  return tokens;
}

std::size_t Vocabulary::index_of(std::string_view term) const {
  auto it = index_.find(std::string(term));
  return it == index_.end() ? npos : it->second;
}

std::size_t Vocabulary::df(std::string_view term) const {
  auto idx = index_of(term);
  return idx == npos ? 0 : df_[idx];
}

double Vocabulary::idf(std::size_t index) const {
  return std::log((1.0 + static_cast<double>(n_docs_)) / (1.0 + static_cast<double>(df_.at(index))));
}

Vocabulary build_vocabulary(const std::vector<std::vector<std::string>>& docs) {
  if (docs.empty()) throw ValidationError("build_vocabulary: empty corpus");
  std::map<std::string, std::size_t> counts;
  for (const auto& doc : docs) {
    std::set<std::string_view> seen(doc.begin(), doc.end());
    for (auto term : seen) ++counts[std::string(term)];
  }
  Vocabulary vocab;
  vocab.n_docs_ = docs.size();
  vocab.terms_.reserve(counts.size());
  vocab.df_.reserve(counts.size());
  for (auto& [term, df] : counts) {
    vocab.index_.emplace(term, vocab.terms_.size());
    vocab.terms_.push_back(term);
    vocab.df_.push_back(df);
  }
  return vocab;
}

double TfidfVector::weight(std::size_t index) const {
  auto it = std::lower_bound(entries.begin(), entries.end(), index,
                             [](const auto& e, std::size_t i) { return e.first < i; });
  return (it != entries.end() && it->first == index) ? it->second : 0.0;
}

double TfidfVector::norm() const {
  double sum = 0.0;
  for (const auto& [_, w] : entries) sum += w * w;
  return std::sqrt(sum);
}

TfidfVector tfidf(const std::vector<std::string>& doc, const Vocabulary& vocab) {
  std::map<std::size_t, std::size_t> tf;
  for (const auto& term : doc) {
    auto idx = vocab.index_of(term);
    if (idx != Vocabulary::npos) ++tf[idx];
  }
  TfidfVector out;
  out.entries.reserve(tf.size());
  for (const auto& [idx, count] : tf) {
    out.entries.emplace_back(idx, static_cast<double>(count) * vocab.idf(idx));
  }
  return out;
}

double cosine(const TfidfVector& u, const TfidfVector& v) {
  const double nu = u.norm();
  const double nv = v.norm();
  if (nu == 0.0 || nv == 0.0) return 0.0;
  double dot = 0.0;
  auto a = u.entries.begin();
  auto b = v.entries.begin();
  while (a != u.entries.end() && b != v.entries.end()) {
    if (a->first < b->first) {
      ++a;
    } else if (b->first < a->first) {
      ++b;
    } else {
      dot += a->second * b->second;
      ++a;
      ++b;
    }
  }
  return std::clamp(dot / (nu * nv), 0.0, 1.0);
}

}  // namespace tlr
