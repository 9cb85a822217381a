#pragma once

#include <cstddef>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>

namespace divprobe {

/// Key for one cached generation. Distinct inputs give distinct keys.
std::string cache_key(std::string_view run_id, std::string_view prompt_id, std::size_t sample_index);

/// Content-addressed value store: one file per key under `root/<2 hex>/`.
/// Writes go through a temp file and rename, so concurrent readers never
/// observe a partial value. Safe to share across threads.
class DiskCache {
 public:
  explicit DiskCache(std::filesystem::path root);

  std::optional<std::string> get(std::string_view key) const;
  void put(std::string_view key, std::string_view value) const;

  const std::filesystem::path& root() const noexcept { return root_; }

 private:
  std::filesystem::path path_for(std::string_view key) const;

  std::filesystem::path root_;
};

}  // namespace divprobe
