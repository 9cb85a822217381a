#include "divprobe/text_stats.hpp"

#include <locale.h>
#include <wctype.h>

#include "divprobe/error.hpp"

namespace divprobe {

namespace embedded {
extern const std::string_view kStopwordsEn;
}

namespace {

// Code point classification comes from glibc's C.UTF-8 tables. Without that
// locale we fall back to ASCII rules and treat other code points as letters.
locale_t utf8_locale() {
  static const locale_t loc = newlocale(LC_CTYPE_MASK, "C.UTF-8", static_cast<locale_t>(nullptr));
  return loc;
}

struct Decoded {
  char32_t cp;
  std::size_t len;
};

Decoded decode(std::string_view s, std::size_t i) {
  const auto b0 = static_cast<unsigned char>(s[i]);
  auto cont = [&](std::size_t k) -> int {
    if (i + k >= s.size()) return -1;
    const auto b = static_cast<unsigned char>(s[i + k]);
    return (b & 0xC0) == 0x80 ? (b & 0x3F) : -1;
  };
  if (b0 < 0x80) return {b0, 1};
  if ((b0 & 0xE0) == 0xC0) {
    int c1 = cont(1);
    if (c1 >= 0) return {static_cast<char32_t>(((b0 & 0x1F) << 6) | c1), 2};
  } else if ((b0 & 0xF0) == 0xE0) {
    int c1 = cont(1), c2 = cont(2);
    if (c1 >= 0 && c2 >= 0) return {static_cast<char32_t>(((b0 & 0x0F) << 12) | (c1 << 6) | c2), 3};
  } else if ((b0 & 0xF8) == 0xF0) {
    int c1 = cont(1), c2 = cont(2), c3 = cont(3);
    if (c1 >= 0 && c2 >= 0 && c3 >= 0)
      return {static_cast<char32_t>(((b0 & 0x07) << 18) | (c1 << 12) | (c2 << 6) | c3), 4};
  }
  return {0xFFFD, 1};  // invalid byte: consume it as a replacement character
}

void encode(char32_t cp, std::string& out) {
  if (cp < 0x80) {
    out += static_cast<char>(cp);
  } else if (cp < 0x800) {
    out += static_cast<char>(0xC0 | (cp >> 6));
    out += static_cast<char>(0x80 | (cp & 0x3F));
  } else if (cp < 0x10000) {
    out += static_cast<char>(0xE0 | (cp >> 12));
    out += static_cast<char>(0x80 | ((cp >> 6) & 0x3F));
    out += static_cast<char>(0x80 | (cp & 0x3F));
  } else {
    out += static_cast<char>(0xF0 | (cp >> 18));
    out += static_cast<char>(0x80 | ((cp >> 12) & 0x3F));
    out += static_cast<char>(0x80 | ((cp >> 6) & 0x3F));
    out += static_cast<char>(0x80 | (cp & 0x3F));
  }
}

bool is_apostrophe(char32_t cp) { return cp == U'\'' || cp == U'’'; }

bool is_word_char(char32_t cp) {
  if (cp < 0x80) return (cp >= 'a' && cp <= 'z') || (cp >= 'A' && cp <= 'Z') || (cp >= '0' && cp <= '9') || cp == '\'';
  if (is_apostrophe(cp)) return true;
  if (cp == 0xFFFD) return false;
  if (auto loc = utf8_locale()) return iswalnum_l(static_cast<wint_t>(cp), loc) != 0;
  return true;
}

bool is_space(char32_t cp) {
  if (cp < 0x80) return cp == ' ' || (cp >= '\t' && cp <= '\r');
  if (auto loc = utf8_locale()) return iswspace_l(static_cast<wint_t>(cp), loc) != 0;
  return cp == 0x00A0 || cp == 0x3000 || (cp >= 0x2000 && cp <= 0x200A);
}

char32_t lower(char32_t cp) {
  if (cp < 0x80) return (cp >= 'A' && cp <= 'Z') ? cp + 32 : cp;
  if (auto loc = utf8_locale()) return static_cast<char32_t>(towlower_l(static_cast<wint_t>(cp), loc));
  return cp;
}

}  // namespace

std::vector<std::string> tokenize(std::string_view text) {
  std::vector<std::string> tokens;
  std::string current;
  for (std::size_t i = 0; i < text.size();) {
    auto [cp, len] = decode(text, i);
    i += len;
    if (is_word_char(cp)) {
      // Curly apostrophes fold to ASCII so "don’t" and "don't" match.
      encode(is_apostrophe(cp) ? U'\'' : lower(cp), current);
    } else if (!current.empty()) {
      tokens.push_back(std::move(current));
      current.clear();
    }
  }
  if (!current.empty()) tokens.push_back(std::move(current));
  return tokens;
}

std::string fold_case(std::string_view text) {
  std::string out;
  out.reserve(text.size());
  for (std::size_t i = 0; i < text.size();) {
    auto [cp, len] = decode(text, i);
    encode(lower(cp), out);
    i += len;
  }
  return out;
}

std::string normalize_label(std::string_view text) {
  std::string out;
  bool pending_space = false;
  for (std::size_t i = 0; i < text.size();) {
    auto [cp, len] = decode(text, i);
    i += len;
    if (is_space(cp)) {
      pending_space = !out.empty();
      continue;
    }
    if (pending_space) out += ' ';
    pending_space = false;
    encode(lower(cp), out);
  }
  return out;
}

std::size_t sentence_count(std::string_view text) {
  auto is_terminator = [](char c) { return c == '.' || c == '!' || c == '?'; };
  auto is_ascii_space = [](char c) { return c == ' ' || (c >= '\t' && c <= '\r'); };

  std::size_t count = 0;
  bool has_content = false;
  for (std::size_t i = 0; i < text.size(); ++i) {
    const char c = text[i];
    if (is_terminator(c)) {
      const bool boundary = i + 1 == text.size() || is_ascii_space(text[i + 1]);
      if (boundary) {
        if (has_content) ++count;
        has_content = false;
      }
    } else if (!is_ascii_space(c)) {
      has_content = true;
    }
  }
  if (has_content) ++count;
  return count;
}

const StopwordSet& StopwordSet::english() {
  static const StopwordSet set = parse(embedded::kStopwordsEn);
  return set;
}

StopwordSet StopwordSet::parse(std::string_view content) {
  StopwordSet set;
  std::size_t start = 0;
  while (start < content.size()) {
    auto end = content.find('\n', start);
    if (end == std::string_view::npos) end = content.size();
    auto line = content.substr(start, end - start);
    start = end + 1;
    while (!line.empty() && (line.back() == '\r' || line.back() == ' ' || line.back() == '\t')) line.remove_suffix(1);
    while (!line.empty() && (line.front() == ' ' || line.front() == '\t')) line.remove_prefix(1);
    if (line.empty() || line.front() == '#') continue;
    set.words_.insert(fold_case(line));
  }
  return set;
}

double content_word_ratio(std::string_view text, const StopwordSet& stopwords) {
  const auto tokens = tokenize(text);
  if (tokens.empty()) throw ValidationError("content_word_ratio of a text with no word tokens");
  std::size_t content = 0;
  for (const auto& t : tokens)
    if (!stopwords.contains(t)) ++content;
  return static_cast<double>(content) / static_cast<double>(tokens.size());
}

}  // namespace divprobe
