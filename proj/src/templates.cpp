#include "divprobe/templates.hpp"

#include <limits>
#include <set>

#include "divprobe/error.hpp"

namespace divprobe {

namespace embedded {
extern const std::string_view kTemplatesV1;
}

namespace {

std::size_t count_markers(std::string_view s) {
  std::size_t n = 0;
  for (auto pos = s.find(kInstructionMarker); pos != std::string_view::npos;
       pos = s.find(kInstructionMarker, pos + kInstructionMarker.size()))
    ++n;
  return n;
}

}  // namespace

std::string_view to_string(EndpointFlavor flavor) {
  return flavor == EndpointFlavor::raw_completion ? "raw_completion" : "chat_messages";
}

std::string apply_diversity_suffix(std::string_view instruction, std::string_view clause) {
  std::string out{instruction};
  if (clause.empty()) return out;
  out += ' ';
  out += clause;
  return out;
}

std::size_t uniform_index(std::mt19937_64& rng, std::size_t n) {
  if (n == 0) throw ValidationError("uniform_index over an empty range");
  using U = std::mt19937_64::result_type;
  const U range = static_cast<U>(n);
  const U limit = std::numeric_limits<U>::max() - std::numeric_limits<U>::max() % range;
  U draw;
  do {
    draw = rng();
  } while (draw >= limit);
  return static_cast<std::size_t>(draw % range);
}

const TemplateTable& TemplateTable::builtin() {
  static const TemplateTable table = parse(embedded::kTemplatesV1, "builtin:templates_v1.jsonl");
  return table;
}

TemplateTable TemplateTable::load(const std::filesystem::path& path) {
  return parse(read_text_file(path), path.string());
}

TemplateTable TemplateTable::parse(std::string_view jsonl, std::string_view source_name) {
  TemplateTable table;
  const std::string source{source_name};
  std::size_t line_no = 0;
  std::size_t start = 0;
  while (start <= jsonl.size()) {
    auto end = jsonl.find('\n', start);
    if (end == std::string_view::npos) end = jsonl.size();
    auto line = jsonl.substr(start, end - start);
    start = end + 1;
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string_view::npos) {
      if (end == jsonl.size()) break;
      continue;
    }

    json row;
    try {
      row = json::parse(line);
    } catch (const json::parse_error& e) {
      throw ParseError(source, line_no, std::string("invalid JSON: ") + e.what());
    }
    auto field = [&](const char* name) {
      if (!row.contains(name) || !row[name].is_string())
        throw ParseError(source, line_no, std::string("missing string field '") + name + "'");
      return row[name].get<std::string>();
    };
    auto family_name = field("family");
    auto mode_name = field("mode");
    auto text = field("template");
    auto revision = field("revision");

    auto family = parse_model_family(family_name);
    if (!family) throw ParseError(source, line_no, "unknown family '" + family_name + "'");
    auto mode = parse_mode_kind(mode_name);
    if (!mode || *mode == PromptModeKind::mixed_template)
      throw ParseError(source, line_no, "unknown or non-structured mode '" + mode_name + "'");
    if (auto markers = count_markers(text); markers != 1)
      throw ParseError(source, line_no,
                       "template must contain exactly one {instruction} marker, found " + std::to_string(markers));
    if (table.revision_.empty()) {
      table.revision_ = revision;
    } else if (revision != table.revision_) {
      throw ParseError(source, line_no, "revision '" + revision + "' differs from '" + table.revision_ + "'");
    }
    if (!table.templates_.emplace(std::pair{*family, *mode}, std::move(text)).second)
      throw ParseError(source, line_no, "duplicate template for " + family_name + "/" + mode_name);
    if (end == jsonl.size()) break;
  }

  for (auto family : kAllFamilies)
    for (auto mode : kAblationModes)
      if (!table.templates_.contains({family, mode}))
        throw ParseError(source, 0,
                         "missing template for " + std::string(to_string(family)) + "/" + std::string(to_string(mode)));
  return table;
}

const std::string& TemplateTable::template_for(ModelFamily family, PromptModeKind mode) const {
  auto it = templates_.find({family, mode});
  if (it == templates_.end())
    throw ValidationError("no template for " + std::string(to_string(family)) + "/" + std::string(to_string(mode)));
  return it->second;
}

RenderedPrompt TemplateTable::render(std::string_view instruction, ModelFamily family, const PromptMode& mode) const {
  if (instruction.empty()) throw ValidationError("instruction must be non-empty");
  if (mode.kind == PromptModeKind::mixed_template)
    throw ValidationError("mixed_template needs a mode pool; use render_mixed");

  const std::string& tmpl = template_for(family, mode.kind);
  const std::string body = mode.diversity_suffix ? apply_diversity_suffix(instruction, diversity_clause_)
                                                 : std::string(instruction);
  const auto at = tmpl.find(kInstructionMarker);
  RenderedPrompt out;
  out.text.reserve(tmpl.size() + body.size());
  out.text.append(tmpl, 0, at).append(body).append(tmpl, at + kInstructionMarker.size());
  out.endpoint_flavor = EndpointFlavor::raw_completion;
  out.resolved_mode = mode.kind;
  out.family = family;
  return out;
}

RenderedPrompt TemplateTable::render_mixed(std::string_view instruction, ModelFamily family,
                                           std::span<const PromptModeKind> pool, bool diversity_suffix,
                                           std::mt19937_64& rng) const {
  if (pool.empty()) throw ValidationError("mixed_template requires a non-empty mode pool");
  for (auto m : pool)
    if (m == PromptModeKind::mixed_template) throw ValidationError("mode pool cannot contain mixed_template");
  const auto pick = pool[uniform_index(rng, pool.size())];
  return render(instruction, family, PromptMode{pick, diversity_suffix});
}

void to_json(json& j, const RenderedPromptRecord& r) {
  j = json{{"prompt_id", r.prompt_id},
           {"task", r.task},
           {"mode", to_string(r.requested_mode)},
           {"resolved_mode", to_string(r.prompt.resolved_mode)},
           {"family", to_string(r.prompt.family)},
           {"endpoint_flavor", to_string(r.prompt.endpoint_flavor)},
           {"text", r.prompt.text}};
}

void from_json(const json& j, RenderedPromptRecord& r) {
  auto str = [&](const char* name) {
    if (!j.contains(name) || !j[name].is_string()) throw SchemaError(name, "missing or not a string");
    return j[name].get<std::string>();
  };
  r.prompt_id = str("prompt_id");
  r.task = j.contains("task") && j["task"].is_string() ? j["task"].get<std::string>() : "";
  auto mode = parse_prompt_mode(str("mode"));
  if (!mode) throw SchemaError("mode", "unknown mode");
  r.requested_mode = *mode;
  auto resolved = parse_mode_kind(str("resolved_mode"));
  if (!resolved || *resolved == PromptModeKind::mixed_template) throw SchemaError("resolved_mode", "unknown mode");
  r.prompt.resolved_mode = *resolved;
  auto family = parse_model_family(str("family"));
  if (!family) throw SchemaError("family", "unknown family");
  r.prompt.family = *family;
  auto flavor = str("endpoint_flavor");
  if (flavor == "raw_completion")
    r.prompt.endpoint_flavor = EndpointFlavor::raw_completion;
  else if (flavor == "chat_messages")
    r.prompt.endpoint_flavor = EndpointFlavor::chat_messages;
  else
    throw SchemaError("endpoint_flavor", "unknown value '" + flavor + "'");
  r.prompt.text = str("text");
}

std::vector<RenderedPromptRecord> load_rendered(const std::filesystem::path& path) {
  std::vector<RenderedPromptRecord> out;
  read_jsonl(path, [&](const json& v, std::size_t) { out.push_back(v.get<RenderedPromptRecord>()); });
  return out;
}

std::string serialize_rendered(std::span<const RenderedPromptRecord> records) {
  std::string out;
  for (const auto& r : records) out += dump_compact(json(r)) + "\n";
  return out;
}

}  // namespace divprobe
