#pragma once

// Data model and JSONL I/O for prompts, generations and run manifests.

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "json.hpp"

namespace divprobe {

using json = nlohmann::json;

inline constexpr std::string_view kToolVersion = "0.3.0";

enum class ModelFamily { llama, qwen, tulu, mistral, phi };

enum class PromptModeKind { full_template, fake_template, minimum_dialog, simple_steer, mixed_template };

inline constexpr ModelFamily kAllFamilies[] = {ModelFamily::llama, ModelFamily::qwen, ModelFamily::tulu,
                                               ModelFamily::mistral, ModelFamily::phi};

/// The four structured modes of the template ablation, most to least structured.
inline constexpr PromptModeKind kAblationModes[] = {PromptModeKind::full_template, PromptModeKind::fake_template,
                                                    PromptModeKind::minimum_dialog, PromptModeKind::simple_steer};

struct PromptMode {
  PromptModeKind kind = PromptModeKind::simple_steer;
  bool diversity_suffix = false;

  friend bool operator==(const PromptMode&, const PromptMode&) = default;
};

std::string_view to_string(ModelFamily family);
std::string_view to_string(PromptModeKind kind);
/// "simple_steer", or "simple_steer+diversity" when the suffix flag is set.
std::string to_string(const PromptMode& mode);

std::optional<ModelFamily> parse_model_family(std::string_view name);
std::optional<PromptModeKind> parse_mode_kind(std::string_view name);
std::optional<PromptMode> parse_prompt_mode(std::string_view name);

enum class FinishReason { stop, length, error };

std::string_view to_string(FinishReason reason);
std::optional<FinishReason> parse_finish_reason(std::string_view name);

struct PromptRecord {
  std::string id;
  std::string instruction;
  std::string task;
  std::map<std::string, std::string> metadata;

  friend bool operator==(const PromptRecord&, const PromptRecord&) = default;
};

using PromptSet = std::vector<PromptRecord>;

struct StepLogprobs {
  std::string token;
  double logprob = 0.0;
  /// Sorted by logprob, highest first.
  std::vector<std::pair<std::string, double>> top_alternatives;

  friend bool operator==(const StepLogprobs&, const StepLogprobs&) = default;
};

struct SamplingParams {
  double temperature = 1.0;
  double top_p = 0.9;
  int max_tokens = 512;
  std::optional<std::int64_t> seed;
  int logprob_top_k = 0;

  void validate() const;
  friend bool operator==(const SamplingParams&, const SamplingParams&) = default;
};

struct GenerationRecord {
  std::string prompt_id;
  int sample_index = 0;
  std::string text;
  FinishReason finish_reason = FinishReason::stop;
  std::optional<std::vector<StepLogprobs>> token_logprobs;
  SamplingParams sampling;
  PromptMode mode;
  ModelFamily model_family = ModelFamily::llama;

  friend bool operator==(const GenerationRecord&, const GenerationRecord&) = default;
};

struct RunManifest {
  std::string run_id;
  std::string created_at;
  ModelFamily model_family = ModelFamily::llama;
  std::string model_name;
  PromptMode mode;
  SamplingParams sampling;
  std::string prompt_file_hash;
  std::string template_revision;
  std::string tool_version{kToolVersion};
  std::string endpoint_url;
  /// Free-form settings recorded for reruns (diversity suffix wording, k, ...).
  std::map<std::string, std::string> settings;
};

/// Stable over (model_name, mode, sampling, prompt_file_hash, template_revision).
std::string compute_run_id(std::string_view model_name, const PromptMode& mode, const SamplingParams& sampling,
                           std::string_view prompt_file_hash, std::string_view template_revision);

/// Drops userinfo and query strings so credentials never land in a manifest.
std::string redact_url(std::string_view url);

/// Current time as ISO-8601 UTC, second precision.
std::string utc_timestamp();

void to_json(json& j, const PromptRecord& r);
void from_json(const json& j, PromptRecord& r);
void to_json(json& j, const StepLogprobs& s);
void from_json(const json& j, StepLogprobs& s);
void to_json(json& j, const SamplingParams& s);
void from_json(const json& j, SamplingParams& s);
void to_json(json& j, const GenerationRecord& r);
void from_json(const json& j, GenerationRecord& r);
void to_json(json& j, const RunManifest& m);
void from_json(const json& j, RunManifest& m);

/// Serializes with shortest round-trip floats and no insignificant whitespace.
std::string dump_compact(const json& j);

/// Calls `on_line(value, line_number)` for each non-blank line. Parse failures
/// become ParseError with the line number; exceptions thrown by the callback
/// that are not already ParseErrors are rewrapped with the line number.
void read_jsonl(const std::filesystem::path& path, const std::function<void(const json&, std::size_t)>& on_line);

void write_text_file(const std::filesystem::path& path, std::string_view contents);
std::string read_text_file(const std::filesystem::path& path);

PromptSet load_prompts(const std::filesystem::path& path);
void write_prompts(std::span<const PromptRecord> prompts, const std::filesystem::path& path);

std::vector<GenerationRecord> load_generations(const std::filesystem::path& path);
void write_generations(std::span<const GenerationRecord> records, const std::filesystem::path& path);
std::string serialize_generations(std::span<const GenerationRecord> records);

void write_manifest(const RunManifest& manifest, const std::filesystem::path& path);
RunManifest load_manifest(const std::filesystem::path& path);

}  // namespace divprobe
