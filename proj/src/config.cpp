#include "divprobe/config.hpp"

#include <cmath>
#include <cstdlib>
#include <set>

#include "divprobe/error.hpp"

namespace divprobe {

namespace {

std::string env_or_empty(const char* name) {
  const char* v = std::getenv(name);
  return v ? std::string(v) : std::string();
}

void read_env_keys(Config& c) {
  c.api_key = env_or_empty(kApiKeyEnv);
  c.embedding_api_key = env_or_empty(kEmbeddingApiKeyEnv);
  if (c.embedding_api_key.empty()) c.embedding_api_key = c.api_key;
  c.label_api_key = env_or_empty(kLabelApiKeyEnv);
  if (c.label_api_key.empty()) c.label_api_key = c.api_key;
}

std::string get_string(const json& v, const std::string& key) {
  if (!v.is_string()) throw ConfigError("config key '" + key + "' must be a string");
  return v.get<std::string>();
}

double get_number(const json& v, const std::string& key) {
  if (!v.is_number()) throw ConfigError("config key '" + key + "' must be a number");
  return v.get<double>();
}

std::int64_t get_integer(const json& v, const std::string& key) {
  if (!v.is_number_integer()) throw ConfigError("config key '" + key + "' must be an integer");
  return v.get<std::int64_t>();
}

bool get_bool(const json& v, const std::string& key) {
  if (!v.is_boolean()) throw ConfigError("config key '" + key + "' must be true or false");
  return v.get<bool>();
}

int get_int(const json& v, const std::string& key) {
  const auto n = get_integer(v, key);
  if (n < INT32_MIN || n > INT32_MAX) throw ConfigError("config key '" + key + "' is out of range");
  return static_cast<int>(n);
}

std::filesystem::path resolve(const std::filesystem::path& base, const std::filesystem::path& p) {
  if (p.empty() || p.is_absolute()) return p;
  return base / p;
}

void parse_sampling(const json& j, SamplingParams& s) {
  if (!j.is_object()) throw ConfigError("config key 'sampling' must be an object");
  for (const auto& [key, v] : j.items()) {
    const auto name = "sampling." + key;
    if (key == "temperature")
      s.temperature = get_number(v, name);
    else if (key == "top_p")
      s.top_p = get_number(v, name);
    else if (key == "max_tokens")
      s.max_tokens = get_int(v, name);
    else if (key == "seed")
      s.seed = v.is_null() ? std::nullopt : std::optional<std::int64_t>(get_integer(v, name));
    else if (key == "logprob_top_k")
      s.logprob_top_k = get_int(v, name);
    else
      throw ConfigError("unknown config key '" + name +
                        "' (known: temperature, top_p, max_tokens, seed, logprob_top_k)");
  }
}

json mixed_pool_names(const std::vector<PromptModeKind>& pool) {
  json out = json::array();
  for (auto m : pool) out.push_back(to_string(m));
  return out;
}

}  // namespace

Config parse_config(const json& j, const std::filesystem::path& base_dir) {
  if (!j.is_object()) throw ConfigError("config must be a JSON object");
  Config c;
  c.base_dir = base_dir;
  for (const auto& [key, v] : j.items()) {
    if (key == "endpoint_url") c.endpoint_url = get_string(v, key);
    else if (key == "model_name") c.model_name = get_string(v, key);
    else if (key == "model_family") {
      const auto name = get_string(v, key);
      c.model_family = parse_model_family(name);
      if (!c.model_family)
        throw ConfigError("config key 'model_family' has unknown value '" + name +
                          "' (valid: llama, qwen, tulu, mistral, phi)");
    }
    else if (key == "sampling") parse_sampling(v, c.sampling);
    else if (key == "use_n_parameter") c.use_n_parameter = get_bool(v, key);
    else if (key == "embedding_endpoint_url") c.embedding_endpoint_url = get_string(v, key);
    else if (key == "embedding_model") c.embedding_model = get_string(v, key);
    else if (key == "embed_batch_size") {
      const auto n = get_integer(v, key);
      if (n < 1) throw ConfigError("config key 'embed_batch_size' must be >= 1");
      c.embed_batch_size = static_cast<std::size_t>(n);
    }
    else if (key == "label_method") c.label_method = get_string(v, key);
    else if (key == "label_endpoint_url") c.label_endpoint_url = get_string(v, key);
    else if (key == "label_model") c.label_model = get_string(v, key);
    else if (key == "extraction_instruction") c.extraction_instruction = get_string(v, key);
    else if (key == "taxonomy_path") c.taxonomy_path = resolve(base_dir, get_string(v, key));
    else if (key == "parallelism") c.parallelism = get_int(v, key);
    else if (key == "retry_budget") c.retry_budget = get_int(v, key);
    else if (key == "retry_base_delay_ms") c.retry_base_delay_ms = get_int(v, key);
    else if (key == "retry_max_delay_ms") c.retry_max_delay_ms = get_int(v, key);
    else if (key == "timeout_seconds") c.timeout_seconds = get_number(v, key);
    else if (key == "prompts_path") c.prompts_path = resolve(base_dir, get_string(v, key));
    else if (key == "task") c.task = get_string(v, key);
    else if (key == "template_revision") c.template_revision = get_string(v, key);
    else if (key == "template_path") c.template_path = resolve(base_dir, get_string(v, key));
    else if (key == "diversity_clause") c.diversity_clause = get_string(v, key);
    else if (key == "mixed_pool") {
      if (!v.is_array()) throw ConfigError("config key 'mixed_pool' must be an array of mode names");
      c.mixed_pool.clear();
      for (const auto& m : v) {
        const auto name = get_string(m, key);
        const auto kind = parse_mode_kind(name);
        if (!kind || *kind == PromptModeKind::mixed_template)
          throw ConfigError("config key 'mixed_pool' has invalid mode '" + name +
                            "' (valid: full_template, fake_template, minimum_dialog, simple_steer)");
        c.mixed_pool.push_back(*kind);
      }
    }
    else if (key == "sample_seed") {
      const auto n = get_integer(v, key);
      if (n < 0) throw ConfigError("config key 'sample_seed' must be non-negative");
      c.sample_seed = static_cast<std::uint64_t>(n);
    }
    else if (key == "tau") c.tau = get_number(v, key);
    else if (key == "cache_dir") c.cache_dir = get_string(v, key);
    else if (key == "output_dir") c.output_dir = get_string(v, key);
    else if (key.find("api_key") != std::string::npos)
      throw ConfigError("config key '" + key + "' is not allowed; set " + kApiKeyEnv + ", " + kEmbeddingApiKeyEnv +
                        " or " + kLabelApiKeyEnv + " in the environment instead");
    else
      throw ConfigError("unknown config key '" + key + "'");
  }
  c.cache_dir = resolve(base_dir, c.cache_dir);
  c.output_dir = resolve(base_dir, c.output_dir);
  read_env_keys(c);
  c.validate();
  return c;
}

Config load_config(const std::filesystem::path& path) {
  std::string text;
  try {
    text = read_text_file(path);
  } catch (const IoError& e) {
    throw ConfigError(std::string("cannot read config: ") + e.what());
  }
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ConfigError(path.string() + ": invalid JSON: " + e.what());
  }
  auto base = path.parent_path();
  if (base.empty()) base = ".";
  try {
    return parse_config(j, base);
  } catch (const ConfigError& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
}

Config default_config() {
  Config c;
  c.cache_dir = c.base_dir / c.cache_dir;
  c.output_dir = c.base_dir / c.output_dir;
  read_env_keys(c);
  return c;
}

void Config::validate() const {
  try {
    sampling.validate();
  } catch (const ValidationError& e) {
    throw ConfigError(std::string("sampling: ") + e.what());
  }
  if (parallelism < 1) throw ConfigError("parallelism must be >= 1");
  if (retry_budget < 0) throw ConfigError("retry_budget must be >= 0");
  if (retry_base_delay_ms < 0 || retry_max_delay_ms < 0) throw ConfigError("retry delays must be >= 0");
  if (!(timeout_seconds > 0.0)) throw ConfigError("timeout_seconds must be > 0");
  if (!(tau > 0.0 && tau < 1.0)) throw ConfigError("tau must be in (0, 1)");
  if (label_method != "keyword" && label_method != "llm")
    throw ConfigError("label_method must be 'keyword' or 'llm', got '" + label_method + "'");
  if (extraction_instruction.find(kTextMarker) == std::string::npos)
    throw ConfigError("extraction_instruction must contain a {text} marker");
  if (template_revision.empty()) throw ConfigError("template_revision must be non-empty");
}

RetryPolicy Config::retry_policy() const {
  RetryPolicy p;
  p.budget = retry_budget;
  p.base_delay = std::chrono::milliseconds(retry_base_delay_ms);
  p.max_delay = std::chrono::milliseconds(retry_max_delay_ms);
  return p;
}

GenClientConfig Config::gen_client() const {
  if (endpoint_url.empty()) throw ConfigError("endpoint_url is not configured");
  if (model_name.empty()) throw ConfigError("model_name is not configured");
  GenClientConfig g;
  g.endpoint = {endpoint_url, api_key, timeout_seconds};
  g.model_name = model_name;
  g.retry = retry_policy();
  g.use_n_parameter = use_n_parameter;
  return g;
}

EmbedClientConfig Config::embed_client() const {
  if (embedding_endpoint_url.empty()) throw ConfigError("embedding_endpoint_url is not configured");
  EmbedClientConfig e;
  e.endpoint = {embedding_endpoint_url, embedding_api_key, timeout_seconds};
  e.model = embedding_model;
  e.batch_size = embed_batch_size;
  e.parallelism = parallelism;
  e.retry = retry_policy();
  return e;
}

LlmLabelerConfig Config::labeler() const {
  const auto& url = label_endpoint_url.empty() ? endpoint_url : label_endpoint_url;
  if (url.empty()) throw ConfigError("label_endpoint_url (or endpoint_url) is not configured");
  if (label_model.empty()) throw ConfigError("label_model is not configured");
  LlmLabelerConfig l;
  l.endpoint = {url, label_api_key, timeout_seconds};
  l.model = label_model;
  l.instruction = extraction_instruction;
  l.parallelism = parallelism;
  l.retry = retry_policy();
  return l;
}

TemplateTable Config::template_table() const {
  TemplateTable table = template_path.empty() ? TemplateTable::builtin() : TemplateTable::load(template_path);
  if (table.revision() != template_revision)
    throw ConfigError("template_revision is '" + template_revision + "' but the template table has revision '" +
                      table.revision() + "'");
  table.set_diversity_clause(diversity_clause);
  return table;
}

Taxonomy Config::taxonomy() const {
  return taxonomy_path.empty() ? default_news_taxonomy() : load_taxonomy(taxonomy_path);
}

json to_json(const Config& c) {
  json sampling = {{"temperature", c.sampling.temperature},
                   {"top_p", c.sampling.top_p},
                   {"max_tokens", c.sampling.max_tokens},
                   {"seed", c.sampling.seed ? json(*c.sampling.seed) : json(nullptr)},
                   {"logprob_top_k", c.sampling.logprob_top_k}};
  json j = {{"endpoint_url", redact_url(c.endpoint_url)},
            {"model_name", c.model_name},
            {"sampling", sampling},
            {"use_n_parameter", c.use_n_parameter},
            {"embedding_endpoint_url", redact_url(c.embedding_endpoint_url)},
            {"embedding_model", c.embedding_model},
            {"embed_batch_size", c.embed_batch_size},
            {"label_method", c.label_method},
            {"label_endpoint_url", redact_url(c.label_endpoint_url)},
            {"label_model", c.label_model},
            {"extraction_instruction", c.extraction_instruction},
            {"taxonomy_path", c.taxonomy_path.string()},
            {"parallelism", c.parallelism},
            {"retry_budget", c.retry_budget},
            {"retry_base_delay_ms", c.retry_base_delay_ms},
            {"retry_max_delay_ms", c.retry_max_delay_ms},
            {"timeout_seconds", c.timeout_seconds},
            {"prompts_path", c.prompts_path.string()},
            {"task", c.task},
            {"template_revision", c.template_revision},
            {"template_path", c.template_path.string()},
            {"diversity_clause", c.diversity_clause},
            {"mixed_pool", mixed_pool_names(c.mixed_pool)},
            {"sample_seed", c.sample_seed},
            {"tau", c.tau},
            {"cache_dir", c.cache_dir.string()},
            {"output_dir", c.output_dir.string()}};
  if (c.model_family) j["model_family"] = to_string(*c.model_family);
  return j;
}

}  // namespace divprobe
