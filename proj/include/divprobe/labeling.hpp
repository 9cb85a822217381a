#pragma once

// One topic label per open-ended generation, and the empirical label
// distribution built from them.

#include <cstddef>
#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "divprobe/cache.hpp"
#include "divprobe/corpus.hpp"
#include "divprobe/http.hpp"
#include "divprobe/text_stats.hpp"

namespace divprobe {

inline constexpr std::string_view kOtherLabel = "other";
inline constexpr std::string_view kTextMarker = "{text}";
inline constexpr std::string_view kDefaultExtractionInstruction =
    "Read the following text and reply with a single word naming its main topic category. Text: {text}";

enum class LabelMethod { llm, keyword };

std::string_view to_string(LabelMethod method);

struct LabelRecord {
  std::string prompt_id;
  int sample_index = 0;
  std::string label;
  LabelMethod method = LabelMethod::keyword;

  friend bool operator==(const LabelRecord&, const LabelRecord&) = default;
};

void to_json(json& j, const LabelRecord& r);
void from_json(const json& j, LabelRecord& r);
std::vector<LabelRecord> load_labels(const std::filesystem::path& path);
std::string serialize_labels(std::span<const LabelRecord> labels);

struct TaxonomyEntry {
  std::string label;
  std::vector<std::string> keywords;
};

/// Order matters: the first entry with a matching keyword wins.
using Taxonomy = std::vector<TaxonomyEntry>;

/// JSONL of {"label": str, "keywords": [str, ...]}.
Taxonomy load_taxonomy(const std::filesystem::path& path);
Taxonomy parse_taxonomy(std::string_view jsonl, std::string_view source_name);
/// Built-in news-topic taxonomy (data/taxonomy_news.jsonl).
const Taxonomy& default_news_taxonomy();
void validate_taxonomy(const Taxonomy& taxonomy);

/// First taxonomy label with a keyword occurring in `text` as a whole-word,
/// case-insensitive match (multi-word keywords match as a token sequence);
/// "other" when nothing matches.
std::string classify_keyword(std::string_view text, const Taxonomy& taxonomy);

std::vector<LabelRecord> label_keyword(std::span<const GenerationRecord> generations, const Taxonomy& taxonomy);

/// Post-processes a raw extractor reply: first non-blank line, normalized.
/// Empty result means the extraction failed.
std::string clean_extracted_label(std::string_view reply);

struct LabelFailure {
  std::string prompt_id;
  int sample_index = 0;
  std::string message;
};

struct LabelBatchResult {
  std::vector<LabelRecord> labels;
  std::vector<LabelFailure> failures;
};

struct LlmLabelerConfig {
  Endpoint endpoint;
  std::string model;
  std::string instruction{kDefaultExtractionInstruction};
  int parallelism = 4;
  int max_tokens = 16;
  RetryPolicy retry;
};

/// Asks a chat endpoint (/v1/chat/completions) for one label per text.
class LlmLabeler {
 public:
  explicit LlmLabeler(LlmLabelerConfig config, const DiskCache* cache = nullptr);

  /// Labels come back in input order; failed items are listed separately and
  /// never replaced by a default label.
  LabelBatchResult extract(std::span<const GenerationRecord> generations) const;

  Telemetry& telemetry() const noexcept { return telemetry_; }

 private:
  std::string extract_one(std::string_view text) const;

  LlmLabelerConfig config_;
  HttpClient http_;
  const DiskCache* cache_;
  mutable Telemetry telemetry_;
};

struct LabelDistribution {
  std::map<std::string, std::size_t> counts;
  std::size_t total = 0;
};

/// Counts by normalized label. Throws ValidationError on empty input.
LabelDistribution label_distribution(std::span<const LabelRecord> labels);

}  // namespace divprobe
