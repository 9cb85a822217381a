#pragma once

// Per-item arithmetic shared by the parallel and serial metric drivers.

#include <array>
#include <cmath>
#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "divprobe/error.hpp"
#include "divprobe/metrics.hpp"

namespace divprobe::metrics::detail {

/// Tokens of one n-gram joined with a unit separator, which the tokenizer
/// never emits.
inline std::string ngram_key(std::span<const std::string> tokens, std::size_t start, std::size_t n) {
  std::string key = tokens[start];
  for (std::size_t i = 1; i < n; ++i) {
    key += '\x1f';
    key += tokens[start + i];
  }
  return key;
}

inline std::size_t ngram_total(std::size_t length, std::size_t n) { return length >= n ? length - n + 1 : 0; }

/// Closest reference length to `hyp_len`; ties go to the shorter one.
inline std::size_t closest_length(std::size_t hyp_len, std::span<const std::size_t> ref_lengths) {
  std::size_t best = ref_lengths.front();
  for (auto len : ref_lengths) {
    const auto d = len > hyp_len ? len - hyp_len : hyp_len - len;
    const auto db = best > hyp_len ? best - hyp_len : hyp_len - best;
    if (d < db || (d == db && len < best)) best = len;
  }
  return best;
}

inline double bleu_from_stats(const std::array<std::size_t, kBleuMaxOrder>& matches,
                              const std::array<std::size_t, kBleuMaxOrder>& totals, std::size_t hyp_len,
                              std::size_t ref_len) {
  double log_sum = 0.0;
  for (int n = 0; n < kBleuMaxOrder; ++n) {
    double num = static_cast<double>(matches[n]);
    double den = static_cast<double>(totals[n]);
    if (matches[n] == 0) {
      num += 1.0;
      den += 1.0;
    }
    log_sum += std::log(num / den);
  }
  double bp = 1.0;
  if (hyp_len < ref_len) {
    bp = hyp_len == 0 ? 0.0 : std::exp(1.0 - static_cast<double>(ref_len) / static_cast<double>(hyp_len));
  }
  return bp * std::exp(log_sum / kBleuMaxOrder);
}

inline void require_ngram_order(int n) {
  if (n < 2 || n > 5) throw ValidationError("distinct_n needs n in [2, 5], got " + std::to_string(n));
}

/// Per-prompt (token count, sentence count, content word ratio) stds.
StructuralDiversity prompt_structure(std::span<const std::string> texts, const StopwordSet& stopwords);

/// Validates that every record can contribute to an entropy trajectory and
/// returns the shared top-k.
int check_entropy_records(std::span<const GenerationRecord> records, int steps);

/// Entropies of the first `steps` steps of one record.
std::vector<double> record_entropies(const GenerationRecord& record, int steps);

EntropyTrajectory reduce_entropies(const std::vector<std::vector<double>>& per_record, int steps, int top_k);

SemanticDiversityScore reduce_semantic(std::span<const PromptEmbeddings> prompts, const std::vector<double>& values);

StructuralDiversity reduce_structural(const std::vector<StructuralDiversity>& per_prompt);

}  // namespace divprobe::metrics::detail
