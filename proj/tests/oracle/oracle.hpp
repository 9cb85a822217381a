#pragma once

// Brute-force reference formulas for the metric tests. Written from the
// metric definitions with no code shared with the library; inputs are
// restricted to ASCII text so tokenization is a plain split.

#include <algorithm>
#include <cctype>
#include <cmath>
#include <map>
#include <set>
#include <string>
#include <utility>
#include <vector>

namespace oracle {

using Tokens = std::vector<std::string>;

/// Lowercased maximal runs of [A-Za-z0-9'].
inline Tokens split_words(const std::string& text) {
  Tokens out;
  std::string cur;
  for (char c : text) {
    const auto u = static_cast<unsigned char>(c);
    if (std::isalnum(u) || c == '\'') {
      cur += static_cast<char>(std::tolower(u));
    } else if (!cur.empty()) {
      out.push_back(cur);
      cur.clear();
    }
  }
  if (!cur.empty()) out.push_back(cur);
  return out;
}

inline std::vector<Tokens> ngrams(const Tokens& t, std::size_t n) {
  std::vector<Tokens> out;
  for (std::size_t i = 0; i + n <= t.size(); ++i) out.emplace_back(t.begin() + static_cast<long>(i), t.begin() + static_cast<long>(i + n));
  return out;
}

inline std::size_t count_of(const std::vector<Tokens>& grams, const Tokens& g) {
  return static_cast<std::size_t>(std::count(grams.begin(), grams.end(), g));
}

/// |distinct n-grams| / |n-gram occurrences| over all responses.
inline double distinct_n(const std::vector<std::string>& responses, std::size_t n) {
  std::vector<Tokens> all;
  for (const auto& r : responses)
    for (auto& g : ngrams(split_words(r), n)) all.push_back(std::move(g));
  std::vector<Tokens> uniq;
  for (const auto& g : all)
    if (std::find(uniq.begin(), uniq.end(), g) == uniq.end()) uniq.push_back(g);
  return static_cast<double>(uniq.size()) / static_cast<double>(all.size());
}

/// Sentence BLEU-4, uniform weights, clipped counts against the per-gram
/// maximum over references, closest-reference brevity penalty (shorter wins
/// ties), and (m+1)/(t+1) for any order with m = 0.
inline double bleu(const Tokens& hyp, const std::vector<Tokens>& refs) {
  double product = 1.0;
  for (std::size_t n = 1; n <= 4; ++n) {
    const auto hg = ngrams(hyp, n);
    std::vector<Tokens> seen;
    double matched = 0.0;
    for (const auto& g : hg) {
      if (std::find(seen.begin(), seen.end(), g) != seen.end()) continue;
      seen.push_back(g);
      std::size_t max_ref = 0;
      for (const auto& r : refs) max_ref = std::max(max_ref, count_of(ngrams(r, n), g));
      matched += static_cast<double>(std::min(count_of(hg, g), max_ref));
    }
    double total = static_cast<double>(hg.size());
    if (matched == 0.0) {
      matched = 1.0;
      total += 1.0;
    }
    product *= matched / total;
  }
  const double c = static_cast<double>(hyp.size());
  std::vector<std::pair<double, double>> by_distance;
  for (const auto& r : refs) {
    const double len = static_cast<double>(r.size());
    by_distance.emplace_back(std::fabs(len - c), len);
  }
  std::sort(by_distance.begin(), by_distance.end());
  const double r = by_distance.front().second;
  double bp = 1.0;
  if (c < r) bp = c == 0.0 ? 0.0 : std::exp(1.0 - r / c);
  return bp * std::pow(product, 0.25);
}

inline double self_bleu(const std::vector<std::string>& responses) {
  std::vector<Tokens> toks;
  for (const auto& r : responses) toks.push_back(split_words(r));
  double sum = 0.0;
  for (std::size_t h = 0; h < toks.size(); ++h) {
    std::vector<Tokens> refs;
    for (std::size_t j = 0; j < toks.size(); ++j)
      if (j != h) refs.push_back(toks[j]);
    sum += bleu(toks[h], refs);
  }
  return sum / static_cast<double>(toks.size());
}

/// Entropy in bits over log2(#labels); 0 for a single label.
inline double topic_diversity(const std::vector<std::string>& labels) {
  std::map<std::string, double> counts;
  for (const auto& l : labels) counts[l] += 1.0;
  if (counts.size() < 2) return 0.0;
  double h = 0.0;
  for (const auto& [l, c] : counts) {
    const double p = c / static_cast<double>(labels.size());
    h += p * std::log2(1.0 / p);
  }
  return h / std::log2(static_cast<double>(counts.size()));
}

/// Entropy (nats) of the top-k probabilities plus one residual bucket.
inline double step_entropy(const std::vector<double>& logprobs) {
  std::vector<double> p;
  for (double lp : logprobs) p.push_back(std::exp(lp));
  double mass = 0.0;
  for (double x : p) mass += x;
  p.push_back(std::max(0.0, 1.0 - mass));
  double h = 0.0;
  for (double x : p)
    if (x > 0.0) h += x * std::log(1.0 / x);
  return h;
}

/// Population std via the pairwise-difference identity.
inline double population_std(const std::vector<double>& x) {
  double s = 0.0;
  for (double a : x)
    for (double b : x) s += (a - b) * (a - b);
  const double n = static_cast<double>(x.size());
  return std::sqrt(s / (2.0 * n * n));
}

/// Mean over ordered pairs i != j of 1 - cos.
inline double mean_pairwise_cosine_distance(const std::vector<std::vector<double>>& v) {
  double s = 0.0;
  std::size_t pairs = 0;
  for (std::size_t i = 0; i < v.size(); ++i)
    for (std::size_t j = 0; j < v.size(); ++j) {
      if (i == j) continue;
      double dot = 0.0, a = 0.0, b = 0.0;
      for (std::size_t d = 0; d < v[i].size(); ++d) {
        dot += v[i][d] * v[j][d];
        a += v[i][d] * v[i][d];
        b += v[j][d] * v[j][d];
      }
      s += 1.0 - dot / std::sqrt(a * b);
      ++pairs;
    }
  return s / static_cast<double>(pairs);
}

}  // namespace oracle
