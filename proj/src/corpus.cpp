#include "divprobe/corpus.hpp"

#include <chrono>
#include <cmath>
#include <ctime>
#include <fstream>
#include <set>
#include <sstream>

#include "divprobe/error.hpp"
#include "divprobe/hashing.hpp"

namespace divprobe {

namespace {

constexpr std::string_view kDiversityTag = "+diversity";

template <typename T>
T require(const json& j, const char* field) {
  if (!j.is_object()) throw SchemaError(field, "expected a JSON object");
  auto it = j.find(field);
  if (it == j.end()) throw SchemaError(field, "missing required field");
  try {
    return it->get<T>();
  } catch (const json::exception& e) {
    throw SchemaError(field, std::string("wrong type: ") + e.what());
  }
}

template <typename T>
std::optional<T> optional_field(const json& j, const char* field) {
  auto it = j.find(field);
  if (it == j.end() || it->is_null()) return std::nullopt;
  try {
    return it->get<T>();
  } catch (const json::exception& e) {
    throw SchemaError(field, std::string("wrong type: ") + e.what());
  }
}

std::string_view trim(std::string_view s) {
  const auto* ws = " \t\r\n\v\f";
  auto b = s.find_first_not_of(ws);
  if (b == std::string_view::npos) return {};
  auto e = s.find_last_not_of(ws);
  return s.substr(b, e - b + 1);
}

}  // namespace

std::string_view to_string(ModelFamily family) {
  switch (family) {
    case ModelFamily::llama: return "llama";
    case ModelFamily::qwen: return "qwen";
    case ModelFamily::tulu: return "tulu";
    case ModelFamily::mistral: return "mistral";
    case ModelFamily::phi: return "phi";
  }
  return "unknown";
}

std::string_view to_string(PromptModeKind kind) {
  switch (kind) {
    case PromptModeKind::full_template: return "full_template";
    case PromptModeKind::fake_template: return "fake_template";
    case PromptModeKind::minimum_dialog: return "minimum_dialog";
    case PromptModeKind::simple_steer: return "simple_steer";
    case PromptModeKind::mixed_template: return "mixed_template";
  }
  return "unknown";
}

std::string to_string(const PromptMode& mode) {
  std::string s{to_string(mode.kind)};
  if (mode.diversity_suffix) s += kDiversityTag;
  return s;
}

std::optional<ModelFamily> parse_model_family(std::string_view name) {
  for (auto f : kAllFamilies)
    if (to_string(f) == name) return f;
  return std::nullopt;
}

std::optional<PromptModeKind> parse_mode_kind(std::string_view name) {
  for (auto k : {PromptModeKind::full_template, PromptModeKind::fake_template, PromptModeKind::minimum_dialog,
                 PromptModeKind::simple_steer, PromptModeKind::mixed_template})
    if (to_string(k) == name) return k;
  return std::nullopt;
}

std::optional<PromptMode> parse_prompt_mode(std::string_view name) {
  PromptMode mode;
  if (name.size() > kDiversityTag.size() && name.substr(name.size() - kDiversityTag.size()) == kDiversityTag) {
    mode.diversity_suffix = true;
    name.remove_suffix(kDiversityTag.size());
  }
  auto kind = parse_mode_kind(name);
  if (!kind) return std::nullopt;
  mode.kind = *kind;
  return mode;
}

std::string_view to_string(FinishReason reason) {
  switch (reason) {
    case FinishReason::stop: return "stop";
    case FinishReason::length: return "length";
    case FinishReason::error: return "error";
  }
  return "unknown";
}

std::optional<FinishReason> parse_finish_reason(std::string_view name) {
  for (auto r : {FinishReason::stop, FinishReason::length, FinishReason::error})
    if (to_string(r) == name) return r;
  return std::nullopt;
}

void SamplingParams::validate() const {
  if (!(temperature > 0.0) || !std::isfinite(temperature))
    throw ValidationError("temperature must be > 0, got " + std::to_string(temperature));
  if (!(top_p > 0.0 && top_p <= 1.0)) throw ValidationError("top_p must be in (0, 1], got " + std::to_string(top_p));
  if (max_tokens <= 0) throw ValidationError("max_tokens must be positive");
  if (logprob_top_k < 0) throw ValidationError("logprob_top_k must be non-negative");
}

std::string compute_run_id(std::string_view model_name, const PromptMode& mode, const SamplingParams& sampling,
                           std::string_view prompt_file_hash, std::string_view template_revision) {
  json key = {{"model_name", model_name},
              {"mode", to_string(mode)},
              {"sampling", sampling},
              {"prompt_file_hash", prompt_file_hash},
              {"template_revision", template_revision}};
  return hash_json(key);
}

std::string redact_url(std::string_view url) {
  std::string out{url};
  if (auto q = out.find_first_of("?#"); q != std::string::npos) out.erase(q);
  auto scheme = out.find("://");
  auto host_start = scheme == std::string::npos ? 0 : scheme + 3;
  auto path_start = out.find('/', host_start);
  auto at = out.rfind('@', path_start == std::string::npos ? std::string::npos : path_start);
  if (at != std::string::npos && at >= host_start) out.erase(host_start, at - host_start + 1);
  return out;
}

std::string utc_timestamp() {
  auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

// JSON mapping ---------------------------------------------------------------

void to_json(json& j, const PromptRecord& r) {
  j = json{{"id", r.id}, {"instruction", r.instruction}, {"task", r.task}, {"metadata", r.metadata}};
}

void from_json(const json& j, PromptRecord& r) {
  r.id = require<std::string>(j, "id");
  r.instruction = require<std::string>(j, "instruction");
  r.task = optional_field<std::string>(j, "task").value_or("");
  r.metadata = optional_field<std::map<std::string, std::string>>(j, "metadata").value_or(std::map<std::string, std::string>{});
}

void to_json(json& j, const StepLogprobs& s) {
  json alts = json::array();
  for (const auto& [tok, lp] : s.top_alternatives) alts.push_back(json::array({tok, lp}));
  j = json{{"token", s.token}, {"logprob", s.logprob}, {"top_alternatives", std::move(alts)}};
}

void from_json(const json& j, StepLogprobs& s) {
  s.token = require<std::string>(j, "token");
  s.logprob = require<double>(j, "logprob");
  s.top_alternatives.clear();
  auto alts = optional_field<json>(j, "top_alternatives").value_or(json::array());
  if (!alts.is_array()) throw SchemaError("top_alternatives", "expected an array");
  for (const auto& pair : alts) {
    if (!pair.is_array() || pair.size() != 2 || !pair[0].is_string() || !pair[1].is_number())
      throw SchemaError("top_alternatives", "expected [token, logprob] pairs");
    s.top_alternatives.emplace_back(pair[0].get<std::string>(), pair[1].get<double>());
  }
}

void to_json(json& j, const SamplingParams& s) {
  j = json{{"temperature", s.temperature},
           {"top_p", s.top_p},
           {"max_tokens", s.max_tokens},
           {"seed", s.seed ? json(*s.seed) : json(nullptr)},
           {"logprob_top_k", s.logprob_top_k}};
}

void from_json(const json& j, SamplingParams& s) {
  s.temperature = require<double>(j, "temperature");
  s.top_p = require<double>(j, "top_p");
  s.max_tokens = require<int>(j, "max_tokens");
  s.seed = optional_field<std::int64_t>(j, "seed");
  s.logprob_top_k = optional_field<int>(j, "logprob_top_k").value_or(0);
}

void to_json(json& j, const GenerationRecord& r) {
  j = json{{"prompt_id", r.prompt_id},
           {"sample_index", r.sample_index},
           {"text", r.text},
           {"finish_reason", to_string(r.finish_reason)},
           {"sampling", r.sampling},
           {"mode", to_string(r.mode)},
           {"model_family", to_string(r.model_family)},
           {"token_logprobs", r.token_logprobs ? json(*r.token_logprobs) : json(nullptr)}};
}

void from_json(const json& j, GenerationRecord& r) {
  r.prompt_id = require<std::string>(j, "prompt_id");
  r.sample_index = require<int>(j, "sample_index");
  if (r.sample_index < 0) throw SchemaError("sample_index", "must be non-negative");
  r.text = require<std::string>(j, "text");
  auto reason = require<std::string>(j, "finish_reason");
  auto parsed_reason = parse_finish_reason(reason);
  if (!parsed_reason) throw SchemaError("finish_reason", "unknown value '" + reason + "'");
  r.finish_reason = *parsed_reason;
  r.sampling = require<SamplingParams>(j, "sampling");
  auto mode = require<std::string>(j, "mode");
  auto parsed_mode = parse_prompt_mode(mode);
  if (!parsed_mode) throw SchemaError("mode", "unknown value '" + mode + "'");
  r.mode = *parsed_mode;
  auto family = require<std::string>(j, "model_family");
  auto parsed_family = parse_model_family(family);
  if (!parsed_family) throw SchemaError("model_family", "unknown value '" + family + "'");
  r.model_family = *parsed_family;
  r.token_logprobs = optional_field<std::vector<StepLogprobs>>(j, "token_logprobs");
}

void to_json(json& j, const RunManifest& m) {
  j = json{{"run_id", m.run_id},
           {"created_at", m.created_at},
           {"model_family", to_string(m.model_family)},
           {"model_name", m.model_name},
           {"mode", to_string(m.mode)},
           {"sampling", m.sampling},
           {"prompt_file_hash", m.prompt_file_hash},
           {"template_revision", m.template_revision},
           {"tool_version", m.tool_version},
           {"endpoint_url", m.endpoint_url},
           {"settings", m.settings}};
}

void from_json(const json& j, RunManifest& m) {
  m.run_id = require<std::string>(j, "run_id");
  m.created_at = require<std::string>(j, "created_at");
  auto family = require<std::string>(j, "model_family");
  auto parsed_family = parse_model_family(family);
  if (!parsed_family) throw SchemaError("model_family", "unknown value '" + family + "'");
  m.model_family = *parsed_family;
  m.model_name = require<std::string>(j, "model_name");
  auto mode = require<std::string>(j, "mode");
  auto parsed_mode = parse_prompt_mode(mode);
  if (!parsed_mode) throw SchemaError("mode", "unknown value '" + mode + "'");
  m.mode = *parsed_mode;
  m.sampling = require<SamplingParams>(j, "sampling");
  m.prompt_file_hash = require<std::string>(j, "prompt_file_hash");
  m.template_revision = require<std::string>(j, "template_revision");
  m.tool_version = optional_field<std::string>(j, "tool_version").value_or("");
  m.endpoint_url = optional_field<std::string>(j, "endpoint_url").value_or("");
  m.settings = optional_field<std::map<std::string, std::string>>(j, "settings").value_or(std::map<std::string, std::string>{});
}

std::string dump_compact(const json& j) { return j.dump(-1, ' ', false, json::error_handler_t::replace); }

// File I/O -------------------------------------------------------------------

void read_jsonl(const std::filesystem::path& path, const std::function<void(const json&, std::size_t)>& on_line) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    json value;
    try {
      value = json::parse(line);
    } catch (const json::parse_error& e) {
      throw ParseError(path.string(), line_no, std::string("invalid JSON: ") + e.what());
    }
    try {
      on_line(value, line_no);
    } catch (const ParseError&) {
      throw;
    } catch (const SchemaError& e) {
      throw e.at(path.string(), line_no);
    } catch (const Error& e) {
      throw ParseError(path.string(), line_no, e.what());
    }
  }
  if (in.bad()) throw IoError("read failed for " + path.string());
}

void write_text_file(const std::filesystem::path& path, std::string_view contents) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  out.write(contents.data(), static_cast<std::streamsize>(contents.size()));
  if (!out) throw IoError("write failed for " + path.string());
}

std::string read_text_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

PromptSet load_prompts(const std::filesystem::path& path) {
  PromptSet prompts;
  std::map<std::string, std::size_t, std::less<>> seen;
  read_jsonl(path, [&](const json& value, std::size_t line_no) {
    auto record = value.get<PromptRecord>();
    if (record.id.empty()) throw SchemaError("id", "must be non-empty");
    if (trim(record.instruction).empty()) throw SchemaError("instruction", "must be non-empty");
    auto [it, inserted] = seen.emplace(record.id, line_no);
    if (!inserted)
      throw ParseError(path.string(), line_no,
                       "duplicate prompt id '" + record.id + "' (first seen on line " + std::to_string(it->second) +
                           ")");
    prompts.push_back(std::move(record));
  });
  if (prompts.empty()) throw ParseError(path.string(), 0, "prompt file is empty");
  return prompts;
}

void write_prompts(std::span<const PromptRecord> prompts, const std::filesystem::path& path) {
  std::string out;
  for (const auto& p : prompts) out += dump_compact(json(p)) + "\n";
  write_text_file(path, out);
}

std::vector<GenerationRecord> load_generations(const std::filesystem::path& path) {
  std::vector<GenerationRecord> records;
  read_jsonl(path, [&](const json& value, std::size_t) { records.push_back(value.get<GenerationRecord>()); });
  return records;
}

std::string serialize_generations(std::span<const GenerationRecord> records) {
  std::string out;
  for (const auto& r : records) out += dump_compact(json(r)) + "\n";
  return out;
}

void write_generations(std::span<const GenerationRecord> records, const std::filesystem::path& path) {
  write_text_file(path, serialize_generations(records));
}

void write_manifest(const RunManifest& manifest, const std::filesystem::path& path) {
  write_text_file(path, json(manifest).dump(2) + "\n");
}

RunManifest load_manifest(const std::filesystem::path& path) {
  try {
    return json::parse(read_text_file(path)).get<RunManifest>();
  } catch (const json::parse_error& e) {
    throw ParseError(path.string(), 0, e.what());
  }
}

}  // namespace divprobe
