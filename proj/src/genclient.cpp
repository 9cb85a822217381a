#include "divprobe/genclient.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <mutex>
#include <thread>

#include "divprobe/error.hpp"

namespace divprobe {

namespace {

// Tolerated positive rounding on provider logprobs before clamping to 0.
constexpr double kLogprobSlack = 1e-6;

double checked_logprob(const nlohmann::json& v, const char* field) {
  if (!v.is_number()) throw SchemaError(field, "expected a number");
  double lp = v.get<double>();
  if (std::isnan(lp) || lp > kLogprobSlack) throw SchemaError(field, "logprob must be <= 0, got " + v.dump());
  return std::min(lp, 0.0);
}

std::vector<StepLogprobs> parse_logprobs(const nlohmann::json& lp, int top_k) {
  if (!lp.is_object()) throw SchemaError("logprobs", "expected an object");
  if (!lp.contains("tokens") || !lp["tokens"].is_array()) throw SchemaError("logprobs.tokens", "missing array");
  if (!lp.contains("token_logprobs") || !lp["token_logprobs"].is_array())
    throw SchemaError("logprobs.token_logprobs", "missing array");
  const auto& tokens = lp["tokens"];
  const auto& token_lps = lp["token_logprobs"];
  if (tokens.size() != token_lps.size()) throw SchemaError("logprobs", "tokens and token_logprobs differ in length");
  const nlohmann::json* tops = nullptr;
  if (lp.contains("top_logprobs") && lp["top_logprobs"].is_array()) {
    tops = &lp["top_logprobs"];
    if (tops->size() != tokens.size()) throw SchemaError("logprobs.top_logprobs", "length differs from tokens");
  }

  std::vector<StepLogprobs> steps;
  steps.reserve(tokens.size());
  for (std::size_t t = 0; t < tokens.size(); ++t) {
    StepLogprobs step;
    if (!tokens[t].is_string()) throw SchemaError("logprobs.tokens", "expected strings");
    step.token = tokens[t].get<std::string>();
    step.logprob = checked_logprob(token_lps[t], "logprobs.token_logprobs");
    if (tops && (*tops)[t].is_object()) {
      for (const auto& [tok, v] : (*tops)[t].items())
        step.top_alternatives.emplace_back(tok, checked_logprob(v, "logprobs.top_logprobs"));
      std::sort(step.top_alternatives.begin(), step.top_alternatives.end(),
                [](const auto& a, const auto& b) { return a.second != b.second ? a.second > b.second : a.first < b.first; });
      if (step.top_alternatives.size() > static_cast<std::size_t>(top_k)) step.top_alternatives.resize(top_k);
    }
    steps.push_back(std::move(step));
  }
  return steps;
}

}  // namespace

GenerationRecord parse_completion_choice(const nlohmann::json& choice, const SamplingParams& sampling,
                                         const GenerationContext& context, ModelFamily family, int sample_index) {
  if (!choice.is_object()) throw SchemaError("choices[]", "expected an object");
  if (!choice.contains("text") || !choice["text"].is_string()) throw SchemaError("choices[].text", "missing string");

  GenerationRecord rec;
  rec.prompt_id = context.prompt_id;
  rec.sample_index = sample_index;
  rec.text = choice["text"].get<std::string>();
  rec.finish_reason = FinishReason::stop;
  if (auto it = choice.find("finish_reason"); it != choice.end() && it->is_string() && *it == "length")
    rec.finish_reason = FinishReason::length;
  rec.sampling = sampling;
  rec.mode = context.mode;
  rec.model_family = family;

  if (sampling.logprob_top_k > 0) {
    auto it = choice.find("logprobs");
    if (it == choice.end() || it->is_null())
      throw SchemaError("choices[].logprobs", "requested logprobs but the response has none");
    auto steps = parse_logprobs(*it, sampling.logprob_top_k);
    if (steps.size() > static_cast<std::size_t>(sampling.max_tokens))
      throw SchemaError("choices[].logprobs", "more steps (" + std::to_string(steps.size()) + ") than max_tokens");
    rec.token_logprobs = std::move(steps);
  }
  return rec;
}

CompletionClient::CompletionClient(GenClientConfig config) : config_(std::move(config)), http_(config_.endpoint) {
  if (config_.model_name.empty()) throw ConfigError("model_name is not configured");
}

nlohmann::json CompletionClient::request_body(const RenderedPrompt& prompt, const SamplingParams& sampling,
                                              int n) const {
  nlohmann::json body = {{"model", config_.model_name},
                         {"prompt", prompt.text},
                         {"temperature", sampling.temperature},
                         {"top_p", sampling.top_p},
                         {"max_tokens", sampling.max_tokens},
                         {"n", n}};
  if (sampling.logprob_top_k > 0) body["logprobs"] = sampling.logprob_top_k;
  if (sampling.seed) body["seed"] = *sampling.seed;
  return body;
}

std::vector<GenerationRecord> CompletionClient::generate(const RenderedPrompt& prompt, const SamplingParams& sampling,
                                                         int k, const GenerationContext& context) const {
  if (k < 1) throw ValidationError("k must be >= 1");
  std::vector<int> indices(static_cast<std::size_t>(k));
  for (int i = 0; i < k; ++i) indices[static_cast<std::size_t>(i)] = i;
  return generate_indices(prompt, sampling, indices, context);
}

std::vector<GenerationRecord> CompletionClient::generate_indices(const RenderedPrompt& prompt,
                                                                 const SamplingParams& sampling,
                                                                 std::span<const int> indices,
                                                                 const GenerationContext& context) const {
  sampling.validate();
  if (prompt.endpoint_flavor != EndpointFlavor::raw_completion)
    throw ConfigError("only raw_completion prompts can be sent to /v1/completions");

  std::vector<GenerationRecord> out;
  out.reserve(indices.size());
  auto take_choices = [&](const nlohmann::json& response, std::size_t expected) {
    if (!response.contains("choices") || !response["choices"].is_array())
      throw SchemaError("choices", "missing array in completion response");
    auto choices = response["choices"];
    if (choices.size() != expected)
      throw SchemaError("choices", "expected " + std::to_string(expected) + " choices, got " +
                                       std::to_string(choices.size()));
    // Servers tag each choice with its index; order by it when present.
    if (std::all_of(choices.begin(), choices.end(), [](const auto& c) { return c.contains("index"); }))
      std::stable_sort(choices.begin(), choices.end(),
                       [](const auto& a, const auto& b) { return a["index"].template get<long long>() < b["index"].template get<long long>(); });
    for (const auto& c : choices) {
      const int idx = indices[out.size()];
      out.push_back(parse_completion_choice(c, sampling, context, prompt.family, idx));
    }
  };

  if (indices.empty()) return out;
  if (config_.use_n_parameter) {
    auto response = http_.post_json_with_retry("/v1/completions",
                                               request_body(prompt, sampling, static_cast<int>(indices.size())),
                                               config_.retry, telemetry_);
    take_choices(response, indices.size());
  } else {
    for (std::size_t i = 0; i < indices.size(); ++i) {
      auto response =
          http_.post_json_with_retry("/v1/completions", request_body(prompt, sampling, 1), config_.retry, telemetry_);
      take_choices(response, 1);
    }
  }
  return out;
}

BatchResult generate_batch(const CompletionClient& client, std::span<const RenderedPromptRecord> prompts,
                           const SamplingParams& sampling, const BatchOptions& options) {
  if (options.parallelism < 1) throw ValidationError("parallelism must be >= 1");
  if (options.k < 1) throw ValidationError("k must be >= 1");
  sampling.validate();
  if (options.cache && options.run_id.empty()) throw ValidationError("a cache requires a run_id");

  struct Slot {
    std::vector<GenerationRecord> records;
    std::string error;
    bool done = false;
  };
  std::vector<Slot> slots(prompts.size());
  std::atomic<std::size_t> next{0};
  std::atomic<std::size_t> cache_hits{0};
  std::atomic<std::size_t> requested{0};
  std::mutex cache_mutex;

  auto work = [&] {
    for (std::size_t i = next.fetch_add(1); i < prompts.size(); i = next.fetch_add(1)) {
      const auto& p = prompts[i];
      const GenerationContext ctx{p.prompt_id, p.requested_mode};
      auto& slot = slots[i];
      slot.records.assign(static_cast<std::size_t>(options.k), GenerationRecord{});
      std::vector<int> missing;
      for (int s = 0; s < options.k; ++s) {
        std::optional<std::string> hit;
        if (options.cache) hit = options.cache->get(cache_key(options.run_id, p.prompt_id, static_cast<std::size_t>(s)));
        if (hit) {
          try {
            slot.records[static_cast<std::size_t>(s)] = nlohmann::json::parse(*hit).get<GenerationRecord>();
            ++cache_hits;
            continue;
          } catch (const std::exception&) {
            // unreadable entry; regenerate it
          }
        }
        missing.push_back(s);
      }
      try {
        if (!missing.empty()) {
          requested += missing.size();
          auto fresh = client.generate_indices(p.prompt, sampling, missing, ctx);
          std::lock_guard lock(cache_mutex);
          for (auto& rec : fresh) {
            if (options.cache)
              options.cache->put(cache_key(options.run_id, p.prompt_id, static_cast<std::size_t>(rec.sample_index)),
                                 dump_compact(nlohmann::json(rec)));
            slot.records[static_cast<std::size_t>(rec.sample_index)] = std::move(rec);
          }
        }
        slot.done = true;
      } catch (const std::exception& e) {
        slot.error = e.what();
      }
    }
  };

  const auto workers = std::min<std::size_t>(static_cast<std::size_t>(options.parallelism), prompts.size());
  std::vector<std::thread> pool;
  pool.reserve(workers);
  for (std::size_t w = 0; w < workers; ++w) pool.emplace_back(work);
  for (auto& t : pool) t.join();

  BatchResult result;
  result.prompts_total = prompts.size();
  result.cache_hits = cache_hits.load();
  result.samples_requested = requested.load();
  for (std::size_t i = 0; i < prompts.size(); ++i) {
    if (slots[i].done) {
      for (auto& r : slots[i].records) result.records.push_back(std::move(r));
    } else {
      result.failures.push_back({prompts[i].prompt_id, slots[i].error});
    }
  }
  return result;
}

}  // namespace divprobe
