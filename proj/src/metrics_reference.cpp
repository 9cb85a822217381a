#include "divprobe/metrics_reference.hpp"

#include <unordered_set>

#include "divprobe/error.hpp"
#include "metrics_kernels.hpp"

namespace divprobe::metrics::reference {

SemanticDiversityScore semantic_diversity(std::span<const PromptEmbeddings> prompts) {
  if (prompts.empty()) throw ValidationError("semantic diversity needs at least one prompt");
  std::vector<double> values;
  values.reserve(prompts.size());
  for (const auto& p : prompts) {
    if (p.vectors.size() < 2)
      throw ValidationError("prompt " + p.prompt_id + " has " + std::to_string(p.vectors.size()) +
                            " embedded responses; need at least 2");
    try {
      values.push_back(mean_pairwise_distance(p.vectors));
    } catch (const std::exception& e) {
      throw ValidationError("prompt " + p.prompt_id + ": " + e.what());
    }
  }
  return detail::reduce_semantic(prompts, values);
}

StructuralDiversity structural_diversity(std::span<const PromptResponses> prompts, const StopwordSet& stopwords) {
  if (prompts.empty()) throw ValidationError("structural diversity needs at least one prompt");
  std::vector<StructuralDiversity> per_prompt;
  per_prompt.reserve(prompts.size());
  for (const auto& p : prompts) {
    if (p.texts.size() < 2)
      throw ValidationError("prompt " + p.prompt_id + " has " + std::to_string(p.texts.size()) +
                            " responses; need at least 2");
    try {
      per_prompt.push_back(detail::prompt_structure(p.texts, stopwords));
    } catch (const std::exception& e) {
      throw ValidationError("prompt " + p.prompt_id + ": " + e.what());
    }
  }
  return detail::reduce_structural(per_prompt);
}

double distinct_n(std::span<const std::string> responses, int n) {
  detail::require_ngram_order(n);
  const auto order = static_cast<std::size_t>(n);
  std::unordered_set<std::string> distinct;
  std::size_t total = 0;
  for (const auto& r : responses) {
    const auto tokens = tokenize(r);
    for (std::size_t s = 0; s + order <= tokens.size(); ++s) {
      distinct.insert(detail::ngram_key(tokens, s, order));
      ++total;
    }
  }
  if (total == 0) throw ValidationError("no response is long enough to form a " + std::to_string(n) + "-gram");
  return static_cast<double>(distinct.size()) / static_cast<double>(total);
}

double self_bleu(std::span<const std::string> responses) {
  if (responses.size() < 2) throw ValidationError("self-BLEU needs at least 2 responses");
  std::vector<std::vector<std::string>> tokens;
  tokens.reserve(responses.size());
  for (const auto& r : responses) tokens.push_back(tokenize(r));
  double sum = 0.0;
  for (std::size_t h = 0; h < tokens.size(); ++h) {
    std::vector<std::vector<std::string>> refs;
    refs.reserve(tokens.size() - 1);
    for (std::size_t r = 0; r < tokens.size(); ++r)
      if (r != h) refs.push_back(tokens[r]);
    sum += sentence_bleu(tokens[h], refs);
  }
  return sum / static_cast<double>(tokens.size());
}

EntropyTrajectory entropy_trajectory(std::span<const GenerationRecord> records, int steps) {
  const int top_k = detail::check_entropy_records(records, steps);
  std::vector<std::vector<double>> per_record;
  per_record.reserve(records.size());
  for (const auto& r : records) {
    try {
      per_record.push_back(detail::record_entropies(r, steps));
    } catch (const std::exception& e) {
      throw ValidationError("record " + r.prompt_id + "#" + std::to_string(r.sample_index) + ": " + e.what());
    }
  }
  return detail::reduce_entropies(per_record, steps, top_k);
}

}  // namespace divprobe::metrics::reference
