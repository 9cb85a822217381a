#pragma once

// Renders an instruction into each structural prompt mode for each model
// family. Template strings come from a versioned JSONL table; the built-in
// table (revision "v1") is compiled in from data/templates_v1.jsonl.

#include <cstddef>
#include <filesystem>
#include <map>
#include <random>
#include <span>
#include <string>
#include <string_view>
#include <utility>

#include "divprobe/corpus.hpp"

namespace divprobe {

inline constexpr std::string_view kInstructionMarker = "{instruction}";
inline constexpr std::string_view kDefaultDiversityClause = "Be creative and avoid repeating common choices.";

enum class EndpointFlavor { raw_completion, chat_messages };

std::string_view to_string(EndpointFlavor flavor);

struct RenderedPrompt {
  std::string text;
  EndpointFlavor endpoint_flavor = EndpointFlavor::raw_completion;
  PromptModeKind resolved_mode = PromptModeKind::simple_steer;
  ModelFamily family = ModelFamily::llama;

  friend bool operator==(const RenderedPrompt&, const RenderedPrompt&) = default;
};

/// Appends `clause` after a single space. An empty clause leaves the
/// instruction unchanged.
std::string apply_diversity_suffix(std::string_view instruction, std::string_view clause = kDefaultDiversityClause);

/// Uniform index in [0, n) by rejection sampling on the raw generator output,
/// so the sequence is identical across standard library implementations.
std::size_t uniform_index(std::mt19937_64& rng, std::size_t n);

class TemplateTable {
 public:
  /// The compiled-in revision "v1" table.
  static const TemplateTable& builtin();
  static TemplateTable load(const std::filesystem::path& path);
  /// Parses JSONL content. Every family needs exactly one template per
  /// structured mode, each with exactly one `{instruction}` marker, and all
  /// rows must share one revision.
  static TemplateTable parse(std::string_view jsonl, std::string_view source_name);

  const std::string& revision() const noexcept { return revision_; }
  const std::string& template_for(ModelFamily family, PromptModeKind mode) const;

  void set_diversity_clause(std::string clause) { diversity_clause_ = std::move(clause); }
  const std::string& diversity_clause() const noexcept { return diversity_clause_; }

  /// `mode.kind` must not be mixed_template; use render_mixed for that.
  RenderedPrompt render(std::string_view instruction, ModelFamily family, const PromptMode& mode) const;

  /// Draws one mode uniformly from `pool` with `rng` and renders with it.
  RenderedPrompt render_mixed(std::string_view instruction, ModelFamily family, std::span<const PromptModeKind> pool,
                              bool diversity_suffix, std::mt19937_64& rng) const;

 private:
  std::map<std::pair<ModelFamily, PromptModeKind>, std::string> templates_;
  std::string revision_;
  std::string diversity_clause_{kDefaultDiversityClause};
};

/// One line of a rendered-prompt JSONL file.
struct RenderedPromptRecord {
  std::string prompt_id;
  std::string task;
  PromptMode requested_mode;
  RenderedPrompt prompt;

  friend bool operator==(const RenderedPromptRecord&, const RenderedPromptRecord&) = default;
};

void to_json(json& j, const RenderedPromptRecord& r);
void from_json(const json& j, RenderedPromptRecord& r);

std::vector<RenderedPromptRecord> load_rendered(const std::filesystem::path& path);
std::string serialize_rendered(std::span<const RenderedPromptRecord> records);

}  // namespace divprobe
