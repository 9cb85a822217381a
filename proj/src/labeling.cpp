#include "divprobe/labeling.hpp"

#include <atomic>
#include <set>
#include <thread>

#include "divprobe/error.hpp"
#include "divprobe/hashing.hpp"

namespace divprobe {

namespace embedded {
extern const std::string_view kTaxonomyNews;
}

std::string_view to_string(LabelMethod method) { return method == LabelMethod::llm ? "llm" : "keyword"; }

void to_json(json& j, const LabelRecord& r) {
  j = json{{"prompt_id", r.prompt_id}, {"sample_index", r.sample_index}, {"label", r.label},
           {"method", to_string(r.method)}};
}

void from_json(const json& j, LabelRecord& r) {
  auto need = [&](const char* field) -> const json& {
    if (!j.is_object() || !j.contains(field)) throw SchemaError(field, "missing required field");
    return j.at(field);
  };
  if (!need("prompt_id").is_string()) throw SchemaError("prompt_id", "expected a string");
  if (!need("sample_index").is_number_integer()) throw SchemaError("sample_index", "expected an integer");
  if (!need("label").is_string()) throw SchemaError("label", "expected a string");
  if (!need("method").is_string()) throw SchemaError("method", "expected a string");
  r.prompt_id = j["prompt_id"].get<std::string>();
  r.sample_index = j["sample_index"].get<int>();
  r.label = normalize_label(j["label"].get<std::string>());
  if (r.label.empty()) throw SchemaError("label", "must be non-empty");
  const auto method = j["method"].get<std::string>();
  if (method == "llm")
    r.method = LabelMethod::llm;
  else if (method == "keyword")
    r.method = LabelMethod::keyword;
  else
    throw SchemaError("method", "unknown value '" + method + "'");
}

std::vector<LabelRecord> load_labels(const std::filesystem::path& path) {
  std::vector<LabelRecord> out;
  read_jsonl(path, [&](const json& v, std::size_t) { out.push_back(v.get<LabelRecord>()); });
  return out;
}

std::string serialize_labels(std::span<const LabelRecord> labels) {
  std::string out;
  for (const auto& l : labels) out += dump_compact(json(l)) + "\n";
  return out;
}

void validate_taxonomy(const Taxonomy& taxonomy) {
  if (taxonomy.empty()) throw ValidationError("taxonomy is empty");
  for (const auto& e : taxonomy) {
    if (normalize_label(e.label).empty()) throw ValidationError("taxonomy entry with an empty label");
    if (e.keywords.empty()) throw ValidationError("taxonomy label '" + e.label + "' has no keywords");
    for (const auto& k : e.keywords)
      if (tokenize(k).empty()) throw ValidationError("taxonomy label '" + e.label + "' has a keyword with no words");
  }
}

Taxonomy parse_taxonomy(std::string_view jsonl, std::string_view source_name) {
  Taxonomy taxonomy;
  std::size_t line_no = 0;
  std::size_t start = 0;
  while (start < jsonl.size()) {
    auto end = jsonl.find('\n', start);
    if (end == std::string_view::npos) end = jsonl.size();
    auto line = jsonl.substr(start, end - start);
    start = end + 1;
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string_view::npos) continue;
    try {
      auto v = json::parse(line);
      if (!v.contains("label") || !v["label"].is_string()) throw SchemaError("label", "missing string");
      if (!v.contains("keywords") || !v["keywords"].is_array()) throw SchemaError("keywords", "missing array");
      taxonomy.push_back({v["label"].get<std::string>(), v["keywords"].get<std::vector<std::string>>()});
    } catch (const json::exception& e) {
      throw ParseError(std::string(source_name), line_no, e.what());
    } catch (const SchemaError& e) {
      throw ParseError(std::string(source_name), line_no, e.what());
    }
  }
  try {
    validate_taxonomy(taxonomy);
  } catch (const ValidationError& e) {
    throw ParseError(std::string(source_name), 0, e.what());
  }
  return taxonomy;
}

Taxonomy load_taxonomy(const std::filesystem::path& path) { return parse_taxonomy(read_text_file(path), path.string()); }

const Taxonomy& default_news_taxonomy() {
  static const Taxonomy taxonomy = parse_taxonomy(embedded::kTaxonomyNews, "builtin:taxonomy_news.jsonl");
  return taxonomy;
}

std::string classify_keyword(std::string_view text, const Taxonomy& taxonomy) {
  validate_taxonomy(taxonomy);
  const auto tokens = tokenize(text);
  auto occurs = [&](const std::vector<std::string>& needle) {
    if (needle.size() > tokens.size()) return false;
    for (std::size_t i = 0; i + needle.size() <= tokens.size(); ++i) {
      std::size_t j = 0;
      while (j < needle.size() && tokens[i + j] == needle[j]) ++j;
      if (j == needle.size()) return true;
    }
    return false;
  };
  for (const auto& entry : taxonomy)
    for (const auto& keyword : entry.keywords)
      if (occurs(tokenize(keyword))) return normalize_label(entry.label);
  return std::string(kOtherLabel);
}

std::vector<LabelRecord> label_keyword(std::span<const GenerationRecord> generations, const Taxonomy& taxonomy) {
  validate_taxonomy(taxonomy);
  std::vector<LabelRecord> out;
  out.reserve(generations.size());
  for (const auto& g : generations)
    out.push_back({g.prompt_id, g.sample_index, classify_keyword(g.text, taxonomy), LabelMethod::keyword});
  return out;
}

std::string clean_extracted_label(std::string_view reply) {
  std::size_t start = 0;
  while (start <= reply.size()) {
    auto end = reply.find('\n', start);
    if (end == std::string_view::npos) end = reply.size();
    auto label = normalize_label(reply.substr(start, end - start));
    if (!label.empty()) return label;
    start = end + 1;
  }
  return {};
}

LlmLabeler::LlmLabeler(LlmLabelerConfig config, const DiskCache* cache)
    : config_(std::move(config)), http_(config_.endpoint), cache_(cache) {
  if (config_.model.empty()) throw ConfigError("label model is not configured");
  if (config_.instruction.find(kTextMarker) == std::string::npos)
    throw ConfigError("extraction instruction must contain a {text} marker");
  if (config_.parallelism < 1) throw ConfigError("parallelism must be >= 1");
}

std::string LlmLabeler::extract_one(std::string_view text) const {
  std::string prompt = config_.instruction;
  prompt.replace(prompt.find(kTextMarker), kTextMarker.size(), text);

  const auto key = hash_json(json::array({"label", config_.model, config_.instruction, content_hash(text)}));
  if (cache_)
    if (auto hit = cache_->get(key)) return *hit;

  json body = {{"model", config_.model},
               {"messages", json::array({json{{"role", "user"}, {"content", prompt}}})},
               {"temperature", 0.0},
               {"max_tokens", config_.max_tokens}};
  auto response = http_.post_json_with_retry("/v1/chat/completions", body, config_.retry, telemetry_);
  const auto& choices = response.value("choices", json::array());
  if (!choices.is_array() || choices.empty()) throw SchemaError("choices", "missing in chat response");
  const auto& message = choices[0].value("message", json::object());
  if (!message.contains("content") || !message["content"].is_string())
    throw SchemaError("choices[0].message.content", "missing string");
  auto label = clean_extracted_label(message["content"].get<std::string>());
  if (label.empty()) throw ValidationError("extractor returned an empty label");
  if (cache_) cache_->put(key, label);
  return label;
}

LabelBatchResult LlmLabeler::extract(std::span<const GenerationRecord> generations) const {
  std::vector<std::string> labels(generations.size());
  std::vector<std::string> errors(generations.size());
  std::atomic<std::size_t> next{0};
  auto work = [&] {
    for (std::size_t i = next.fetch_add(1); i < generations.size(); i = next.fetch_add(1)) {
      try {
        labels[i] = extract_one(generations[i].text);
      } catch (const std::exception& e) {
        errors[i] = e.what();
      }
    }
  };
  std::vector<std::thread> pool;
  const auto workers = std::min<std::size_t>(static_cast<std::size_t>(config_.parallelism), generations.size());
  for (std::size_t w = 0; w < workers; ++w) pool.emplace_back(work);
  for (auto& t : pool) t.join();

  LabelBatchResult result;
  for (std::size_t i = 0; i < generations.size(); ++i) {
    const auto& g = generations[i];
    if (errors[i].empty())
      result.labels.push_back({g.prompt_id, g.sample_index, labels[i], LabelMethod::llm});
    else
      result.failures.push_back({g.prompt_id, g.sample_index, errors[i]});
  }
  return result;
}

LabelDistribution label_distribution(std::span<const LabelRecord> labels) {
  if (labels.empty()) throw ValidationError("label_distribution of an empty label list");
  LabelDistribution dist;
  for (const auto& l : labels) {
    auto label = normalize_label(l.label);
    if (label.empty()) throw ValidationError("empty label for " + l.prompt_id + "#" + std::to_string(l.sample_index));
    ++dist.counts[label];
  }
  dist.total = labels.size();
  return dist;
}

}  // namespace divprobe
