#include "divprobe/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <unordered_map>
#include <unordered_set>

#include "divprobe/error.hpp"
#include "metrics_kernels.hpp"

namespace divprobe::metrics {

namespace detail {

StructuralDiversity prompt_structure(std::span<const std::string> texts, const StopwordSet& stopwords) {
  std::vector<double> tokens, sentences, ratios;
  tokens.reserve(texts.size());
  sentences.reserve(texts.size());
  ratios.reserve(texts.size());
  for (const auto& t : texts) {
    tokens.push_back(static_cast<double>(tokenize(t).size()));
    sentences.push_back(static_cast<double>(sentence_count(t)));
    ratios.push_back(content_word_ratio(t, stopwords));
  }
  return {population_std(tokens), population_std(sentences), population_std(ratios)};
}

int check_entropy_records(std::span<const GenerationRecord> records, int steps) {
  if (steps < 1) throw ValidationError("entropy trajectory needs steps >= 1");
  if (records.empty()) throw ValidationError("entropy trajectory of an empty record list");
  const int top_k = records.front().sampling.logprob_top_k;
  for (const auto& r : records) {
    if (!r.token_logprobs)
      throw ValidationError("record " + r.prompt_id + "#" + std::to_string(r.sample_index) + " has no logprobs");
    if (r.sampling.logprob_top_k != top_k)
      throw ValidationError("records mix logprob_top_k " + std::to_string(top_k) + " and " +
                            std::to_string(r.sampling.logprob_top_k) + "; trajectories need equal k");
  }
  return top_k;
}

std::vector<double> record_entropies(const GenerationRecord& record, int steps) {
  const auto& lps = *record.token_logprobs;
  const auto n = std::min(lps.size(), static_cast<std::size_t>(steps));
  std::vector<double> out(n);
  for (std::size_t t = 0; t < n; ++t) out[t] = step_entropy(lps[t]);
  return out;
}

EntropyTrajectory reduce_entropies(const std::vector<std::vector<double>>& per_record, int steps, int top_k) {
  EntropyTrajectory traj;
  traj.steps = steps;
  traj.num_instructions = per_record.size();
  traj.top_k_used = top_k;
  for (std::size_t t = 0; t < static_cast<std::size_t>(steps); ++t) {
    double sum = 0.0;
    std::size_t support = 0;
    for (const auto& e : per_record) {
      if (t < e.size()) {
        sum += e[t];
        ++support;
      }
    }
    if (support == 0) break;
    traj.mean_entropy.push_back(sum / static_cast<double>(support));
    traj.support.push_back(support);
  }
  return traj;
}

SemanticDiversityScore reduce_semantic(std::span<const PromptEmbeddings> prompts, const std::vector<double>& values) {
  SemanticDiversityScore score;
  score.num_prompts = prompts.size();
  score.responses_per_prompt = prompts.front().vectors.size();
  double sum = 0.0;
  for (std::size_t i = 0; i < prompts.size(); ++i) {
    score.per_prompt.emplace_back(prompts[i].prompt_id, values[i]);
    score.responses_per_prompt = std::min(score.responses_per_prompt, prompts[i].vectors.size());
    sum += values[i];
  }
  score.value = sum / static_cast<double>(prompts.size());
  return score;
}

StructuralDiversity reduce_structural(const std::vector<StructuralDiversity>& per_prompt) {
  StructuralDiversity out;
  for (const auto& s : per_prompt) {
    out.std_token_count += s.std_token_count;
    out.std_sentence_count += s.std_sentence_count;
    out.std_content_word_ratio += s.std_content_word_ratio;
  }
  const auto n = static_cast<double>(per_prompt.size());
  out.std_token_count /= n;
  out.std_sentence_count /= n;
  out.std_content_word_ratio /= n;
  return out;
}

}  // namespace detail

namespace {

void check_semantic_input(std::span<const PromptEmbeddings> prompts) {
  if (prompts.empty()) throw ValidationError("semantic diversity needs at least one prompt");
  for (const auto& p : prompts)
    if (p.vectors.size() < 2)
      throw ValidationError("prompt " + p.prompt_id + " has " + std::to_string(p.vectors.size()) +
                            " embedded responses; need at least 2");
}

void check_structural_input(std::span<const PromptResponses> prompts) {
  if (prompts.empty()) throw ValidationError("structural diversity needs at least one prompt");
  for (const auto& p : prompts)
    if (p.texts.size() < 2)
      throw ValidationError("prompt " + p.prompt_id + " has " + std::to_string(p.texts.size()) +
                            " responses; need at least 2");
}

}  // namespace

std::vector<PromptResponses> group_by_prompt(std::span<const GenerationRecord> records) {
  std::vector<PromptResponses> groups;
  std::vector<std::vector<std::pair<int, const std::string*>>> members;
  std::unordered_map<std::string, std::size_t> index;
  for (const auto& r : records) {
    auto [it, inserted] = index.emplace(r.prompt_id, groups.size());
    if (inserted) {
      groups.push_back({r.prompt_id, {}});
      members.emplace_back();
    }
    members[it->second].emplace_back(r.sample_index, &r.text);
  }
  for (std::size_t g = 0; g < groups.size(); ++g) {
    auto& m = members[g];
    std::stable_sort(m.begin(), m.end(), [](const auto& a, const auto& b) { return a.first < b.first; });
    for (const auto& [idx, text] : m) groups[g].texts.push_back(*text);
  }
  return groups;
}

double cosine_distance(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size())
    throw ValidationError("cosine distance between vectors of dimension " + std::to_string(a.size()) + " and " +
                          std::to_string(b.size()));
  double dot = 0.0, na = 0.0, nb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    dot += a[i] * b[i];
    na += a[i] * a[i];
    nb += b[i] * b[i];
  }
  if (na == 0.0 || nb == 0.0) throw ValidationError("cosine distance with a zero-norm vector");
  const double nn = na * nb;
  const double norm = std::isfinite(nn) && nn > 0.0 ? std::sqrt(nn) : std::sqrt(na) * std::sqrt(nb);
  const double d = 1.0 - dot / norm;
  return std::clamp(d, 0.0, 2.0);
}

double mean_pairwise_distance(std::span<const std::vector<double>> vectors) {
  if (vectors.size() < 2) throw ValidationError("mean pairwise distance needs at least 2 vectors");
  double sum = 0.0;
  for (std::size_t i = 0; i < vectors.size(); ++i)
    for (std::size_t j = i + 1; j < vectors.size(); ++j) sum += cosine_distance(vectors[i], vectors[j]);
  const double pairs = static_cast<double>(vectors.size()) * static_cast<double>(vectors.size() - 1) / 2.0;
  return sum / pairs;
}

SemanticDiversityScore semantic_diversity(std::span<const PromptEmbeddings> prompts) {
  check_semantic_input(prompts);
  std::vector<double> values(prompts.size());
  std::vector<std::string> errors(prompts.size());
  const auto n = static_cast<std::ptrdiff_t>(prompts.size());
#pragma omp parallel for schedule(dynamic)
  for (std::ptrdiff_t i = 0; i < n; ++i) {
    try {
      values[static_cast<std::size_t>(i)] = mean_pairwise_distance(prompts[static_cast<std::size_t>(i)].vectors);
    } catch (const std::exception& e) {
      errors[static_cast<std::size_t>(i)] = e.what();
    }
  }
  for (std::size_t i = 0; i < errors.size(); ++i)
    if (!errors[i].empty()) throw ValidationError("prompt " + prompts[i].prompt_id + ": " + errors[i]);
  return detail::reduce_semantic(prompts, values);
}

TopicDiversityScore topic_diversity(const LabelDistribution& dist) {
  if (dist.total == 0 || dist.counts.empty()) throw ValidationError("topic diversity of an empty distribution");
  std::size_t sum = 0;
  for (const auto& [label, count] : dist.counts) {
    if (count == 0) throw ValidationError("label '" + label + "' has a zero count");
    sum += count;
  }
  if (sum != dist.total) throw ValidationError("label counts do not sum to the total");

  TopicDiversityScore score;
  score.distinct_labels = dist.counts.size();
  score.total = dist.total;
  if (score.distinct_labels == 1) return score;
  double h = 0.0;
  const auto total = static_cast<double>(dist.total);
  for (const auto& [label, count] : dist.counts) {
    const double p = static_cast<double>(count) / total;
    h -= p * std::log(p);
  }
  score.value = std::clamp(h / std::log(static_cast<double>(score.distinct_labels)), 0.0, 1.0);
  return score;
}

double population_std(std::span<const double> values) {
  if (values.empty()) throw ValidationError("standard deviation of an empty sample");
  const double mean = std::accumulate(values.begin(), values.end(), 0.0) / static_cast<double>(values.size());
  double ss = 0.0;
  for (double v : values) ss += (v - mean) * (v - mean);
  return std::sqrt(ss / static_cast<double>(values.size()));
}

StructuralDiversity structural_diversity(std::span<const PromptResponses> prompts, const StopwordSet& stopwords) {
  check_structural_input(prompts);
  std::vector<StructuralDiversity> per_prompt(prompts.size());
  std::vector<std::string> errors(prompts.size());
  const auto n = static_cast<std::ptrdiff_t>(prompts.size());
#pragma omp parallel for schedule(dynamic)
  for (std::ptrdiff_t i = 0; i < n; ++i) {
    const auto u = static_cast<std::size_t>(i);
    try {
      per_prompt[u] = detail::prompt_structure(prompts[u].texts, stopwords);
    } catch (const std::exception& e) {
      errors[u] = e.what();
    }
  }
  for (std::size_t i = 0; i < errors.size(); ++i)
    if (!errors[i].empty()) throw ValidationError("prompt " + prompts[i].prompt_id + ": " + errors[i]);
  return detail::reduce_structural(per_prompt);
}

double distinct_n(std::span<const std::string> responses, int n) {
  detail::require_ngram_order(n);
  const auto order = static_cast<std::size_t>(n);
  std::vector<std::vector<std::string>> grams(responses.size());
  const auto count = static_cast<std::ptrdiff_t>(responses.size());
#pragma omp parallel for schedule(dynamic)
  for (std::ptrdiff_t i = 0; i < count; ++i) {
    const auto u = static_cast<std::size_t>(i);
    const auto tokens = tokenize(responses[u]);
    for (std::size_t s = 0; s + order <= tokens.size(); ++s) grams[u].push_back(detail::ngram_key(tokens, s, order));
  }
  std::unordered_set<std::string> distinct;
  std::size_t total = 0;
  for (auto& g : grams) {
    total += g.size();
    for (auto& key : g) distinct.insert(std::move(key));
  }
  if (total == 0) throw ValidationError("no response is long enough to form a " + std::to_string(n) + "-gram");
  return static_cast<double>(distinct.size()) / static_cast<double>(total);
}

double sentence_bleu(std::span<const std::string> hypothesis, std::span<const std::vector<std::string>> references) {
  if (references.empty()) throw ValidationError("BLEU needs at least one reference");
  std::array<std::size_t, kBleuMaxOrder> matches{}, totals{};
  for (std::size_t n = 1; n <= kBleuMaxOrder; ++n) {
    std::unordered_map<std::string, std::size_t> hyp_counts, max_ref;
    for (std::size_t s = 0; s + n <= hypothesis.size(); ++s) ++hyp_counts[detail::ngram_key(hypothesis, s, n)];
    for (const auto& ref : references) {
      std::unordered_map<std::string, std::size_t> ref_counts;
      for (std::size_t s = 0; s + n <= ref.size(); ++s) ++ref_counts[detail::ngram_key(ref, s, n)];
      for (const auto& [g, c] : ref_counts) max_ref[g] = std::max(max_ref[g], c);
    }
    for (const auto& [g, c] : hyp_counts) {
      auto it = max_ref.find(g);
      if (it != max_ref.end()) matches[n - 1] += std::min(c, it->second);
    }
    totals[n - 1] = detail::ngram_total(hypothesis.size(), n);
  }
  std::vector<std::size_t> lengths;
  lengths.reserve(references.size());
  for (const auto& r : references) lengths.push_back(r.size());
  return detail::bleu_from_stats(matches, totals, hypothesis.size(), detail::closest_length(hypothesis.size(), lengths));
}

double self_bleu(std::span<const std::string> responses) {
  if (responses.size() < 2) throw ValidationError("self-BLEU needs at least 2 responses");
  const auto k = responses.size();
  const auto sk = static_cast<std::ptrdiff_t>(k);

  using Counts = std::unordered_map<std::string, std::size_t>;
  std::vector<std::size_t> lengths(k);
  std::vector<std::array<Counts, kBleuMaxOrder>> counts(k);
#pragma omp parallel for schedule(dynamic)
  for (std::ptrdiff_t i = 0; i < sk; ++i) {
    const auto u = static_cast<std::size_t>(i);
    const auto tokens = tokenize(responses[u]);
    lengths[u] = tokens.size();
    for (std::size_t n = 1; n <= kBleuMaxOrder; ++n)
      for (std::size_t s = 0; s + n <= tokens.size(); ++s) ++counts[u][n - 1][detail::ngram_key(tokens, s, n)];
  }

  // For each n-gram, the largest count in any response and the largest count
  // in any other response. The clip limit for hypothesis h is the second when
  // h owns the first.
  struct TopTwo {
    std::size_t best = 0;
    std::size_t owner = 0;
    std::size_t second = 0;
  };
  std::array<std::unordered_map<std::string, TopTwo>, kBleuMaxOrder> top;
  for (std::size_t i = 0; i < k; ++i) {
    for (std::size_t n = 0; n < kBleuMaxOrder; ++n) {
      for (const auto& [g, c] : counts[i][n]) {
        auto& t = top[n][g];
        if (c > t.best) {
          t.second = t.best;
          t.best = c;
          t.owner = i;
        } else if (c > t.second) {
          t.second = c;
        }
      }
    }
  }

  std::vector<double> scores(k);
#pragma omp parallel for schedule(dynamic)
  for (std::ptrdiff_t i = 0; i < sk; ++i) {
    const auto h = static_cast<std::size_t>(i);
    std::array<std::size_t, kBleuMaxOrder> matches{}, totals{};
    for (std::size_t n = 0; n < kBleuMaxOrder; ++n) {
      for (const auto& [g, c] : counts[h][n]) {
        const auto& t = top[n].at(g);
        const auto limit = t.owner == h ? t.second : t.best;
        matches[n] += std::min(c, limit);
      }
      totals[n] = detail::ngram_total(lengths[h], n + 1);
    }
    std::size_t ref_len = h == 0 ? lengths[1] : lengths[0];
    for (std::size_t r = 0; r < k; ++r) {
      if (r == h) continue;
      const auto d = lengths[r] > lengths[h] ? lengths[r] - lengths[h] : lengths[h] - lengths[r];
      const auto db = ref_len > lengths[h] ? ref_len - lengths[h] : lengths[h] - ref_len;
      if (d < db || (d == db && lengths[r] < ref_len)) ref_len = lengths[r];
    }
    scores[h] = detail::bleu_from_stats(matches, totals, lengths[h], ref_len);
  }
  double sum = 0.0;
  for (double s : scores) sum += s;
  return sum / static_cast<double>(k);
}

double step_entropy(const StepLogprobs& step) {
  if (step.top_alternatives.empty())
    throw ValidationError("step for token '" + step.token + "' has no top alternatives (need logprob_top_k > 0)");
  double mass = 0.0;
  double h = 0.0;
  for (const auto& [tok, lp] : step.top_alternatives) {
    if (std::isnan(lp) || lp > kProbabilitySlack) throw ValidationError("alternative '" + tok + "' has logprob > 0");
    const double p = std::exp(std::min(lp, 0.0));
    mass += p;
    if (p > 0.0) h -= p * std::log(p);
  }
  if (mass > 1.0 + kProbabilitySlack)
    throw ValidationError("top alternatives sum to probability " + std::to_string(mass) + " > 1");
  const double residual = std::max(0.0, 1.0 - mass);
  if (residual > 0.0) h -= residual * std::log(residual);
  return std::max(0.0, h);
}

EntropyTrajectory entropy_trajectory(std::span<const GenerationRecord> records, int steps) {
  const int top_k = detail::check_entropy_records(records, steps);
  std::vector<std::vector<double>> per_record(records.size());
  std::vector<std::string> errors(records.size());
  const auto n = static_cast<std::ptrdiff_t>(records.size());
#pragma omp parallel for schedule(dynamic)
  for (std::ptrdiff_t i = 0; i < n; ++i) {
    const auto u = static_cast<std::size_t>(i);
    try {
      per_record[u] = detail::record_entropies(records[u], steps);
    } catch (const std::exception& e) {
      errors[u] = e.what();
    }
  }
  for (std::size_t i = 0; i < errors.size(); ++i)
    if (!errors[i].empty())
      throw ValidationError("record " + records[i].prompt_id + "#" + std::to_string(records[i].sample_index) + ": " +
                            errors[i]);
  return detail::reduce_entropies(per_record, steps, top_k);
}

CollapseVerdict collapse_verdict(double d_simple, double d_template, double tau) {
  if (!(d_simple > 0.0)) throw ValidationError("collapse verdict needs d_simple > 0");
  if (!(d_template >= 0.0)) throw ValidationError("collapse verdict needs d_template >= 0");
  if (!(tau > 0.0 && tau < 1.0)) throw ValidationError("tau must be in (0, 1)");
  CollapseVerdict v;
  v.d_simple = d_simple;
  v.d_template = d_template;
  v.tau = tau;
  v.relative_gap = (d_simple - d_template) / d_simple;
  v.collapsed = v.relative_gap > tau;
  return v;
}

json metric_json(std::string_view metric, double value, json params, json per_prompt) {
  return json{{"metric", metric}, {"value", value}, {"params", std::move(params)}, {"per_prompt", std::move(per_prompt)}};
}

json to_json(const EntropyTrajectory& t) {
  return json{{"steps", t.steps},
              {"mean_entropy", t.mean_entropy},
              {"support", t.support},
              {"num_instructions", t.num_instructions},
              {"top_k_used", t.top_k_used}};
}

json to_json(const CollapseVerdict& v) {
  return json{{"d_simple", v.d_simple},
              {"d_template", v.d_template},
              {"relative_gap", v.relative_gap},
              {"collapsed", v.collapsed},
              {"tau", v.tau}};
}

}  // namespace divprobe::metrics
