#pragma once

// Experiment configuration: one JSON file per run directory. Secrets never
// live in the file; API keys come from the environment.

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "divprobe/corpus.hpp"
#include "divprobe/embedclient.hpp"
#include "divprobe/genclient.hpp"
#include "divprobe/labeling.hpp"
#include "divprobe/templates.hpp"

namespace divprobe {

inline constexpr const char* kApiKeyEnv = "DIVPROBE_API_KEY";
inline constexpr const char* kEmbeddingApiKeyEnv = "DIVPROBE_EMBEDDING_API_KEY";
inline constexpr const char* kLabelApiKeyEnv = "DIVPROBE_LABEL_API_KEY";

struct Config {
  // generation
  std::string endpoint_url;
  std::string model_name;
  std::optional<ModelFamily> model_family;
  SamplingParams sampling;
  bool use_n_parameter = true;

  // embeddings
  std::string embedding_endpoint_url;
  std::string embedding_model{kDefaultEmbeddingModel};
  std::size_t embed_batch_size = 32;

  // labeling
  std::string label_method = "keyword";
  std::string label_endpoint_url;
  std::string label_model;
  std::string extraction_instruction{kDefaultExtractionInstruction};
  std::filesystem::path taxonomy_path;

  // transport
  int parallelism = 4;
  int retry_budget = 3;
  int retry_base_delay_ms = 500;
  int retry_max_delay_ms = 8000;
  double timeout_seconds = 120.0;

  // prompts and templates
  std::filesystem::path prompts_path;
  std::string task;
  std::string template_revision = "v1";
  std::filesystem::path template_path;
  std::string diversity_clause{kDefaultDiversityClause};
  /// Modes mixed_template draws from; mixed_template is unavailable while empty.
  std::vector<PromptModeKind> mixed_pool;
  std::uint64_t sample_seed = 0;

  // reporting and storage
  double tau = 0.2;
  std::filesystem::path cache_dir = ".divprobe_cache";
  std::filesystem::path output_dir = "runs";

  // API keys, from the environment only
  std::string api_key;
  std::string embedding_api_key;
  std::string label_api_key;

  /// Directory of the config file; relative paths above are resolved against it.
  std::filesystem::path base_dir = ".";

  /// Throws ConfigError naming the offending key.
  void validate() const;

  RetryPolicy retry_policy() const;
  GenClientConfig gen_client() const;
  EmbedClientConfig embed_client() const;
  LlmLabelerConfig labeler() const;
  /// Built-in table or the file at template_path; its revision must equal
  /// template_revision.
  TemplateTable template_table() const;
  Taxonomy taxonomy() const;
};

/// Parses a config object. Unknown keys are rejected so typos surface early.
Config parse_config(const json& j, const std::filesystem::path& base_dir = ".");

/// Loads a config file and reads API keys from the environment.
Config load_config(const std::filesystem::path& path);

/// Defaults plus environment keys, for commands run without a config file.
Config default_config();

/// The config as JSON, without API keys.
json to_json(const Config& config);

}  // namespace divprobe
