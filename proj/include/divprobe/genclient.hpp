#pragma once

// Sampling client for OpenAI-compatible /v1/completions servers.

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "divprobe/cache.hpp"
#include "divprobe/corpus.hpp"
#include "divprobe/http.hpp"
#include "divprobe/templates.hpp"

namespace divprobe {

struct GenClientConfig {
  Endpoint endpoint;
  std::string model_name;
  RetryPolicy retry;
  /// Ask for all samples of a prompt in one request via `n`. When false,
  /// one request per sample.
  bool use_n_parameter = true;
};

/// Identifies what a set of samples belongs to, for the record snapshots.
struct GenerationContext {
  std::string prompt_id;
  PromptMode mode;
};

class CompletionClient {
 public:
  explicit CompletionClient(GenClientConfig config);

  /// Exactly `k` records with sample_index 0..k-1.
  std::vector<GenerationRecord> generate(const RenderedPrompt& prompt, const SamplingParams& sampling, int k,
                                         const GenerationContext& context) const;

  /// `indices.size()` records carrying those sample indices, in that order.
  std::vector<GenerationRecord> generate_indices(const RenderedPrompt& prompt, const SamplingParams& sampling,
                                                 std::span<const int> indices,
                                                 const GenerationContext& context) const;

  const GenClientConfig& config() const noexcept { return config_; }
  Telemetry& telemetry() const noexcept { return telemetry_; }

 private:
  nlohmann::json request_body(const RenderedPrompt& prompt, const SamplingParams& sampling, int n) const;

  GenClientConfig config_;
  HttpClient http_;
  mutable Telemetry telemetry_;
};

/// Parses one `choices[i]` object of a completion response into a record
/// (prompt id, index, snapshots filled from the arguments).
GenerationRecord parse_completion_choice(const nlohmann::json& choice, const SamplingParams& sampling,
                                         const GenerationContext& context, ModelFamily family, int sample_index);

struct PromptFailure {
  std::string prompt_id;
  std::string message;
};

struct BatchResult {
  /// Completed prompts only, in input order then sample_index.
  std::vector<GenerationRecord> records;
  std::vector<PromptFailure> failures;
  std::size_t cache_hits = 0;
  std::size_t samples_requested = 0;
  std::size_t prompts_total = 0;

  bool ok() const noexcept { return failures.empty(); }
  bool total_failure() const noexcept { return prompts_total > 0 && failures.size() == prompts_total; }
};

struct BatchOptions {
  int k = 10;
  int parallelism = 4;
  std::string run_id;
  /// Optional; when set, (run_id, prompt_id, sample_index) results are
  /// reused and new ones stored.
  const DiskCache* cache = nullptr;
};

/// Samples k responses for every prompt with at most `parallelism` requests
/// in flight. A failing prompt does not abort the others. Output order is
/// deterministic regardless of completion order.
BatchResult generate_batch(const CompletionClient& client, std::span<const RenderedPromptRecord> prompts,
                           const SamplingParams& sampling, const BatchOptions& options);

}  // namespace divprobe
