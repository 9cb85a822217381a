#pragma once

// Library versions of the CLI subcommands. Each returns a process exit code
// (kExitOk, kExitPartial or kExitInvalid) and writes diagnostics to `log`.

#include <cstdint>
#include <filesystem>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "divprobe/config.hpp"
#include "divprobe/report.hpp"

namespace divprobe {

inline constexpr int kExitOk = 0;
inline constexpr int kExitPartial = 1;
inline constexpr int kExitInvalid = 2;

/// Sidecar paths written next to an output file.
std::filesystem::path manifest_path_for(const std::filesystem::path& out);
std::filesystem::path gaps_path_for(const std::filesystem::path& out);

struct RenderOptions {
  /// Family name; empty means config model_family.
  std::string family;
  /// A mode name, "all" for the four ablation modes, or "mixed_template".
  std::string mode = "all";
  bool diversity_suffix = false;
  /// Empty means config prompts_path.
  std::filesystem::path prompts;
  std::filesystem::path out;
};

struct GenerateOptions {
  std::filesystem::path rendered;
  std::filesystem::path out;
  int k = 10;
  std::optional<double> temperature;
  std::optional<double> top_p;
  std::optional<int> max_tokens;
  std::optional<int> logprobs;
  std::optional<std::int64_t> seed;
};

struct EmbedOptions {
  std::filesystem::path generations;
  std::filesystem::path out;
};

struct LabelOptions {
  std::filesystem::path generations;
  /// Empty means config label_method.
  std::string method;
  /// Empty means config taxonomy_path, then the built-in taxonomy.
  std::filesystem::path taxonomy;
  std::filesystem::path out;
};

/// Metric groups accepted by cmd_score.
inline constexpr const char* kScoreMetricNames[] = {"semantic_diversity", "topic_diversity", "structural",
                                                   "distinct", "self_bleu", "entropy"};

struct ScoreOptions {
  std::filesystem::path generations;
  std::optional<std::filesystem::path> embeddings;
  std::optional<std::filesystem::path> labels;
  /// Empty means every group the inputs allow (entropy only when records
  /// carry logprobs).
  std::vector<std::string> metrics;
  /// Empty means config task, then "default".
  std::string task;
  int entropy_steps = 50;
  /// One report cell per mode, JSONL, each with a "details" array.
  std::filesystem::path out;
};

struct ReportOptions {
  std::vector<std::filesystem::path> cells;
  std::optional<double> tau;
  std::string format = "markdown";
  report::Pairing pairing;
  std::filesystem::path out;
  /// Optional temperature series output (JSON).
  std::optional<std::filesystem::path> series_out;
};

enum class Preset { commonsense, openended, entropy };

std::optional<Preset> parse_preset(std::string_view name);
std::string_view to_string(Preset preset);

struct PresetDefaults {
  int n;
  int k;
  int steps;
};

/// commonsense: 512 prompts x 10; openended: 1 prompt x 1024; entropy: 128
/// prompts x 1 with 50 logprob steps.
PresetDefaults preset_defaults(Preset preset);

struct ProtocolOptions {
  std::string preset;
  std::optional<int> n;
  std::optional<int> k;
  std::optional<int> steps;
  std::optional<double> temperature;
  /// Empty means config output_dir/<preset>.
  std::filesystem::path out_dir;
};

/// Rows of the prompt file chosen for a protocol run: file order when n
/// covers the file, otherwise the first n after a seeded shuffle.
PromptSet sample_prompts(const PromptSet& prompts, std::size_t n, std::uint64_t seed);

int cmd_render(const Config& config, const RenderOptions& options, std::ostream& log);
int cmd_generate(const Config& config, const GenerateOptions& options, std::ostream& log);
int cmd_embed(const Config& config, const EmbedOptions& options, std::ostream& log);
int cmd_label(const Config& config, const LabelOptions& options, std::ostream& log);
int cmd_score(const Config& config, const ScoreOptions& options, std::ostream& log);
int cmd_report(const Config& config, const ReportOptions& options, std::ostream& log);
int cmd_protocol(const Config& config, const ProtocolOptions& options, std::ostream& log);

}  // namespace divprobe
