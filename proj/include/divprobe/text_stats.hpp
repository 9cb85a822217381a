#pragma once

// Word tokenization and per-text statistics. Every lexical and structural
// metric goes through these functions, so changing a rule here changes it
// everywhere.

#include <set>
#include <string>
#include <string_view>
#include <vector>

namespace divprobe {

/// Maximal runs of letters, digits and apostrophes, lowercased. Everything
/// else (punctuation, symbols, whitespace) separates tokens.
std::vector<std::string> tokenize(std::string_view text);

/// Lowercases, trims, and collapses internal whitespace runs to one space.
/// Idempotent.
std::string normalize_label(std::string_view text);

/// Lowercase every code point (simple case mapping).
std::string fold_case(std::string_view text);

/// Segments split on '.', '!' or '?' followed by whitespace or end of text.
/// Segments without any character other than whitespace and terminators are
/// ignored; a non-empty text with no terminator is one sentence.
std::size_t sentence_count(std::string_view text);

class StopwordSet {
 public:
  /// The built-in English list (data/stopwords_en.txt).
  static const StopwordSet& english();
  /// One word per line; blank lines and lines starting with '#' are skipped.
  static StopwordSet parse(std::string_view content);

  bool contains(std::string_view token) const { return words_.contains(token); }
  std::size_t size() const noexcept { return words_.size(); }

 private:
  std::set<std::string, std::less<>> words_;
};

/// Fraction of tokens that are not stopwords. Throws ValidationError when the
/// text has no tokens.
double content_word_ratio(std::string_view text, const StopwordSet& stopwords = StopwordSet::english());

}  // namespace divprobe
