#pragma once

// Serial versions of the corpus-level kernels in metrics.hpp. They share the
// per-item arithmetic with the parallel kernels, differ only in the loop
// drivers, and are kept for equivalence tests and the benchmark.

#include <span>
#include <string>

#include "divprobe/metrics.hpp"

namespace divprobe::metrics::reference {

SemanticDiversityScore semantic_diversity(std::span<const PromptEmbeddings> prompts);

StructuralDiversity structural_diversity(std::span<const PromptResponses> prompts,
                                         const StopwordSet& stopwords = StopwordSet::english());

double distinct_n(std::span<const std::string> responses, int n);

/// Scores each hypothesis with sentence_bleu against an explicit reference
/// list, O(k^2) in the number of responses.
double self_bleu(std::span<const std::string> responses);

EntropyTrajectory entropy_trajectory(std::span<const GenerationRecord> records, int steps = kDefaultEntropySteps);

}  // namespace divprobe::metrics::reference
