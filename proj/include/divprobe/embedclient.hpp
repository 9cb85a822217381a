#pragma once

// Sentence embeddings from an OpenAI-compatible /v1/embeddings endpoint or a
// precomputed JSONL file.

#include <cstddef>
#include <filesystem>
#include <map>
#include <mutex>
#include <span>
#include <string>
#include <vector>

#include "divprobe/cache.hpp"
#include "divprobe/http.hpp"

namespace divprobe {

inline constexpr std::string_view kDefaultEmbeddingModel = "all-MiniLM-L6-v2";

struct EmbeddingVector {
  std::vector<double> values;
  std::string source_text_hash;

  std::size_t dim() const noexcept { return values.size(); }
  friend bool operator==(const EmbeddingVector&, const EmbeddingVector&) = default;
};

/// Hash used to join generation texts to embeddings.
std::string text_hash(std::string_view text);

/// Dimension-checked, hash-keyed collection. Immutable once built.
class EmbeddingSet {
 public:
  /// Throws ValidationError on dimension mismatch, zero norm, or duplicate hash.
  void add(EmbeddingVector vec);

  const EmbeddingVector* find(std::string_view hash) const;
  const EmbeddingVector& at(std::string_view hash) const;
  std::size_t size() const noexcept { return by_hash_.size(); }
  std::size_t dim() const noexcept { return dim_; }
  /// Vectors in insertion order.
  const std::vector<EmbeddingVector>& vectors() const noexcept { return vectors_; }

 private:
  std::vector<EmbeddingVector> vectors_;
  std::map<std::string, std::size_t, std::less<>> by_hash_;
  std::size_t dim_ = 0;
};

/// JSONL of {"text_hash": str, "values": [float, ...]}.
EmbeddingSet load_embeddings(const std::filesystem::path& path);
std::string serialize_embeddings(std::span<const EmbeddingVector> vectors);
void write_embeddings(std::span<const EmbeddingVector> vectors, const std::filesystem::path& path);

struct EmbedClientConfig {
  Endpoint endpoint;
  std::string model{kDefaultEmbeddingModel};
  std::size_t batch_size = 32;
  int parallelism = 4;
  RetryPolicy retry;
};

class EmbeddingClient {
 public:
  /// `cache` is optional; entries are keyed by (model, text hash).
  explicit EmbeddingClient(EmbedClientConfig config, const DiskCache* cache = nullptr);

  /// One vector per input, in input order. Repeated texts are requested once.
  std::vector<EmbeddingVector> embed(std::span<const std::string> texts) const;

  const EmbedClientConfig& config() const noexcept { return config_; }
  Telemetry& telemetry() const noexcept { return telemetry_; }

 private:
  std::vector<std::vector<double>> request_batch(std::span<const std::string> texts) const;

  EmbedClientConfig config_;
  HttpClient http_;
  const DiskCache* cache_;
  mutable Telemetry telemetry_;
  mutable std::mutex memo_mutex_;
  mutable std::map<std::string, std::vector<double>, std::less<>> memo_;
};

}  // namespace divprobe
