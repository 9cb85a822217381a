#include "divprobe/embedclient.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <thread>

#include "divprobe/corpus.hpp"
#include "divprobe/error.hpp"
#include "divprobe/hashing.hpp"

namespace divprobe {

namespace {

bool zero_norm(const std::vector<double>& v) {
  return std::all_of(v.begin(), v.end(), [](double x) { return x == 0.0; });
}

std::string embed_cache_key(std::string_view model, std::string_view hash) {
  return hash_json(nlohmann::json::array({"embedding", model, hash}));
}

}  // namespace

std::string text_hash(std::string_view text) { return content_hash(text); }

void EmbeddingSet::add(EmbeddingVector vec) {
  if (vec.values.empty()) throw ValidationError("embedding for " + vec.source_text_hash + " is empty");
  if (dim_ != 0 && vec.dim() != dim_)
    throw ValidationError("embedding dimension " + std::to_string(vec.dim()) + " for " + vec.source_text_hash +
                          " does not match set dimension " + std::to_string(dim_));
  for (double x : vec.values)
    if (!std::isfinite(x)) throw ValidationError("embedding for " + vec.source_text_hash + " has a non-finite value");
  if (zero_norm(vec.values)) throw ValidationError("zero-norm embedding for text hash " + vec.source_text_hash);
  if (by_hash_.contains(vec.source_text_hash))
    throw ValidationError("duplicate embedding for text hash " + vec.source_text_hash);
  dim_ = vec.dim();
  by_hash_.emplace(vec.source_text_hash, vectors_.size());
  vectors_.push_back(std::move(vec));
}

const EmbeddingVector* EmbeddingSet::find(std::string_view hash) const {
  auto it = by_hash_.find(hash);
  return it == by_hash_.end() ? nullptr : &vectors_[it->second];
}

const EmbeddingVector& EmbeddingSet::at(std::string_view hash) const {
  if (const auto* v = find(hash)) return *v;
  throw ValidationError("no embedding for text hash " + std::string(hash));
}

EmbeddingSet load_embeddings(const std::filesystem::path& path) {
  EmbeddingSet set;
  read_jsonl(path, [&](const json& value, std::size_t) {
    if (!value.is_object()) throw SchemaError("<line>", "expected a JSON object");
    if (!value.contains("text_hash") || !value["text_hash"].is_string())
      throw SchemaError("text_hash", "missing or not a string");
    if (!value.contains("values") || !value["values"].is_array()) throw SchemaError("values", "missing array");
    EmbeddingVector vec;
    vec.source_text_hash = value["text_hash"].get<std::string>();
    try {
      vec.values = value["values"].get<std::vector<double>>();
    } catch (const json::exception&) {
      throw SchemaError("values", "expected an array of numbers");
    }
    set.add(std::move(vec));
  });
  return set;
}

std::string serialize_embeddings(std::span<const EmbeddingVector> vectors) {
  std::string out;
  for (const auto& v : vectors) out += dump_compact(json{{"text_hash", v.source_text_hash}, {"values", v.values}}) + "\n";
  return out;
}

void write_embeddings(std::span<const EmbeddingVector> vectors, const std::filesystem::path& path) {
  write_text_file(path, serialize_embeddings(vectors));
}

EmbeddingClient::EmbeddingClient(EmbedClientConfig config, const DiskCache* cache)
    : config_(std::move(config)), http_(config_.endpoint), cache_(cache) {
  if (config_.batch_size == 0) throw ConfigError("embed_batch_size must be positive");
  if (config_.parallelism < 1) throw ConfigError("parallelism must be >= 1");
}

std::vector<std::vector<double>> EmbeddingClient::request_batch(std::span<const std::string> texts) const {
  nlohmann::json body = {{"model", config_.model}, {"input", std::vector<std::string>(texts.begin(), texts.end())}};
  auto response = http_.post_json_with_retry("/v1/embeddings", body, config_.retry, telemetry_);
  if (!response.contains("data") || !response["data"].is_array())
    throw SchemaError("data", "missing array in embedding response");
  const auto& data = response["data"];
  if (data.size() != texts.size())
    throw SchemaError("data", "expected " + std::to_string(texts.size()) + " embeddings, got " +
                                  std::to_string(data.size()));
  std::vector<std::vector<double>> out(texts.size());
  for (std::size_t i = 0; i < data.size(); ++i) {
    const auto& item = data[i];
    std::size_t slot = i;
    if (item.contains("index")) {
      slot = item["index"].get<std::size_t>();
      if (slot >= texts.size()) throw SchemaError("data[].index", "out of range");
    }
    if (!item.contains("embedding") || !item["embedding"].is_array())
      throw SchemaError("data[].embedding", "missing array");
    out[slot] = item["embedding"].get<std::vector<double>>();
  }
  return out;
}

std::vector<EmbeddingVector> EmbeddingClient::embed(std::span<const std::string> texts) const {
  if (texts.empty()) throw ValidationError("embed needs at least one text");

  std::vector<std::string> hashes(texts.size());
  for (std::size_t i = 0; i < texts.size(); ++i) hashes[i] = text_hash(texts[i]);

  // Unique texts that are neither memoized nor on disk.
  std::vector<std::size_t> todo;
  {
    std::map<std::string, bool, std::less<>> queued;
    std::lock_guard lock(memo_mutex_);
    for (std::size_t i = 0; i < texts.size(); ++i) {
      if (memo_.contains(hashes[i]) || queued.contains(hashes[i])) continue;
      if (cache_) {
        if (auto hit = cache_->get(embed_cache_key(config_.model, hashes[i]))) {
          try {
            memo_.emplace(hashes[i], nlohmann::json::parse(*hit).get<std::vector<double>>());
            continue;
          } catch (const std::exception&) {
          }
        }
      }
      queued.emplace(hashes[i], true);
      todo.push_back(i);
    }
  }

  const std::size_t n_batches = (todo.size() + config_.batch_size - 1) / config_.batch_size;
  std::vector<std::vector<std::vector<double>>> results(n_batches);
  std::vector<std::string> errors(n_batches);
  std::atomic<std::size_t> next{0};
  auto work = [&] {
    for (std::size_t b = next.fetch_add(1); b < n_batches; b = next.fetch_add(1)) {
      const std::size_t lo = b * config_.batch_size;
      const std::size_t hi = std::min(todo.size(), lo + config_.batch_size);
      std::vector<std::string> batch;
      for (std::size_t i = lo; i < hi; ++i) batch.push_back(texts[todo[i]]);
      try {
        results[b] = request_batch(batch);
      } catch (const std::exception& e) {
        errors[b] = e.what();
      }
    }
  };
  std::vector<std::thread> pool;
  const auto workers = std::min<std::size_t>(static_cast<std::size_t>(config_.parallelism), n_batches);
  for (std::size_t w = 0; w < workers; ++w) pool.emplace_back(work);
  for (auto& t : pool) t.join();
  for (const auto& e : errors)
    if (!e.empty()) throw Error("embedding request failed: " + e);

  std::size_t expected_dim = 0;
  {
    std::lock_guard lock(memo_mutex_);
    if (!memo_.empty()) expected_dim = memo_.begin()->second.size();
    for (std::size_t b = 0; b < n_batches; ++b) {
      for (std::size_t j = 0; j < results[b].size(); ++j) {
        const auto& h = hashes[todo[b * config_.batch_size + j]];
        auto& values = results[b][j];
        if (expected_dim == 0) expected_dim = values.size();
        if (values.size() != expected_dim)
          throw ValidationError("embedding dimension mismatch: got " + std::to_string(values.size()) + ", expected " +
                                std::to_string(expected_dim) + " (text hash " + h + ")");
        if (values.empty() || zero_norm(values)) throw ValidationError("zero-norm embedding for text hash " + h);
        if (cache_) cache_->put(embed_cache_key(config_.model, h), dump_compact(json(values)));
        memo_.emplace(h, std::move(values));
      }
    }
  }

  std::vector<EmbeddingVector> out;
  out.reserve(texts.size());
  std::lock_guard lock(memo_mutex_);
  for (std::size_t i = 0; i < texts.size(); ++i) {
    const auto& values = memo_.at(hashes[i]);
    if (!out.empty() && values.size() != out.front().dim())
      throw ValidationError("embedding dimension mismatch for text hash " + hashes[i]);
    out.push_back(EmbeddingVector{values, hashes[i]});
  }
  return out;
}

}  // namespace divprobe
