#include "divprobe/cache.hpp"

#include <atomic>
#include <fstream>
#include <sstream>
#include <system_error>
#include <thread>

#include "divprobe/error.hpp"
#include "divprobe/hashing.hpp"

namespace divprobe {

std::string cache_key(std::string_view run_id, std::string_view prompt_id, std::size_t sample_index) {
  return hash_json(nlohmann::json::array({run_id, prompt_id, sample_index}));
}

DiskCache::DiskCache(std::filesystem::path root) : root_(std::move(root)) {
  std::error_code ec;
  std::filesystem::create_directories(root_, ec);
  if (ec) throw IoError("cannot create cache directory " + root_.string() + ": " + ec.message());
}

std::filesystem::path DiskCache::path_for(std::string_view key) const {
  if (key.size() < 3) throw ValidationError("cache key too short");
  return root_ / std::string(key.substr(0, 2)) / std::string(key);
}

std::optional<std::string> DiskCache::get(std::string_view key) const {
  std::ifstream in(path_for(key), std::ios::binary);
  if (!in) return std::nullopt;
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

void DiskCache::put(std::string_view key, std::string_view value) const {
  static std::atomic<unsigned long> counter{0};
  auto target = path_for(key);
  std::error_code ec;
  std::filesystem::create_directories(target.parent_path(), ec);
  if (ec) throw IoError("cannot create " + target.parent_path().string() + ": " + ec.message());

  std::ostringstream tmp_name;
  tmp_name << target.filename().string() << ".tmp." << std::hash<std::thread::id>{}(std::this_thread::get_id())
           << "." << counter.fetch_add(1);
  auto tmp = target.parent_path() / tmp_name.str();
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write cache entry " + tmp.string());
    out.write(value.data(), static_cast<std::streamsize>(value.size()));
    if (!out) throw IoError("cannot write cache entry " + tmp.string());
  }
  std::filesystem::rename(tmp, target, ec);
  if (ec) throw IoError("cannot commit cache entry " + target.string() + ": " + ec.message());
}

}  // namespace divprobe
