#pragma once

// Diversity metric kernels.
//
// Corpus-level kernels here run their outer loop (over prompts, responses or
// hypotheses) with OpenMP. Per-item partial results are reduced in a fixed
// order afterwards, so results are bitwise identical to the serial versions
// in metrics_reference.hpp regardless of thread count.

#include <cstddef>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "divprobe/corpus.hpp"
#include "divprobe/labeling.hpp"
#include "divprobe/text_stats.hpp"

namespace divprobe::metrics {

inline constexpr double kDefaultTau = 0.2;
inline constexpr int kDefaultEntropySteps = 50;
inline constexpr int kDefaultEntropyInstructions = 128;
/// Allowed excess of summed top-k probability over 1 before a step is
/// rejected as malformed.
inline constexpr double kProbabilitySlack = 1e-6;

// -- grouping ---------------------------------------------------------------

struct PromptResponses {
  std::string prompt_id;
  std::vector<std::string> texts;
};

struct PromptEmbeddings {
  std::string prompt_id;
  std::vector<std::vector<double>> vectors;
};

/// Groups records by prompt_id in first-appearance order, each group sorted
/// by sample_index.
std::vector<PromptResponses> group_by_prompt(std::span<const GenerationRecord> records);

// -- semantic diversity -----------------------------------------------------

struct SemanticDiversityScore {
  double value = 0.0;
  std::vector<std::pair<std::string, double>> per_prompt;
  std::size_t num_prompts = 0;
  /// Responses per prompt when uniform, otherwise the minimum.
  std::size_t responses_per_prompt = 0;
};

/// 1 - cos(a, b), clamped to [0, 2].
double cosine_distance(std::span<const double> a, std::span<const double> b);

/// Mean pairwise cosine distance over the k(k-1)/2 unordered pairs.
double mean_pairwise_distance(std::span<const std::vector<double>> vectors);

/// Unweighted mean over prompts of mean_pairwise_distance. Every prompt
/// needs at least two vectors.
SemanticDiversityScore semantic_diversity(std::span<const PromptEmbeddings> prompts);

// -- topic diversity --------------------------------------------------------

struct TopicDiversityScore {
  double value = 0.0;
  std::size_t distinct_labels = 0;
  std::size_t total = 0;
};

/// Shannon entropy of the label distribution divided by log(#distinct
/// labels); 0 when only one label occurs.
TopicDiversityScore topic_diversity(const LabelDistribution& dist);

// -- structural diversity ---------------------------------------------------

struct StructuralDiversity {
  double std_token_count = 0.0;
  double std_sentence_count = 0.0;
  double std_content_word_ratio = 0.0;
};

/// Population standard deviation.
double population_std(std::span<const double> values);

/// Per prompt population std of token count, sentence count and content word
/// ratio over its responses, averaged over prompts.
StructuralDiversity structural_diversity(std::span<const PromptResponses> prompts,
                                         const StopwordSet& stopwords = StopwordSet::english());

// -- lexical diversity ------------------------------------------------------

/// Distinct word n-grams over total n-gram occurrences, pooled across
/// responses; n-grams never span two responses.
double distinct_n(std::span<const std::string> responses, int n);

inline constexpr int kBleuMaxOrder = 4;

/// Sentence BLEU of `hypothesis` against several references: uniform 1..4
/// gram weights, clipped counts (max over references), brevity penalty with
/// the closest reference length, and +1 smoothing of numerator and
/// denominator for orders with zero matches.
double sentence_bleu(std::span<const std::string> hypothesis, std::span<const std::vector<std::string>> references);

/// Mean over responses of sentence_bleu against all other responses.
double self_bleu(std::span<const std::string> responses);

// -- decoding entropy -------------------------------------------------------

/// Truncated entropy (nats) from the top-k alternatives, with unobserved
/// mass as one residual bucket.
double step_entropy(const StepLogprobs& step);

struct EntropyTrajectory {
  int steps = kDefaultEntropySteps;
  std::vector<double> mean_entropy;
  /// Number of records contributing to each entry of mean_entropy.
  std::vector<std::size_t> support;
  std::size_t num_instructions = 0;
  int top_k_used = 0;
};

/// Mean step entropy at each step over records that reached it. Stops at the
/// first step no record reached.
EntropyTrajectory entropy_trajectory(std::span<const GenerationRecord> records, int steps = kDefaultEntropySteps);

// -- collapse verdict -------------------------------------------------------

struct CollapseVerdict {
  double d_simple = 0.0;
  double d_template = 0.0;
  double relative_gap = 0.0;
  bool collapsed = false;
  double tau = kDefaultTau;
};

CollapseVerdict collapse_verdict(double d_simple, double d_template, double tau = kDefaultTau);

// -- serialization ----------------------------------------------------------

/// {"metric", "value", "params", "per_prompt"} as used in score files.
json metric_json(std::string_view metric, double value, json params = json::object(), json per_prompt = nullptr);
json to_json(const EntropyTrajectory& trajectory);
json to_json(const CollapseVerdict& verdict);

}  // namespace divprobe::metrics
