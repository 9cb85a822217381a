#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "divprobe/config.hpp"
#include "divprobe/corpus.hpp"

namespace divprobe::testing {

/// Config for a run against a MockServer at `url`, with cache and outputs
/// under `dir`.
inline json mock_config_json(const std::string& url, const std::filesystem::path& dir,
                             const std::filesystem::path& prompts) {
  return {{"endpoint_url", url},
          {"embedding_endpoint_url", url},
          {"model_name", "mock-model"},
          {"model_family", "llama"},
          {"prompts_path", prompts.string()},
          {"cache_dir", (dir / "cache").string()},
          {"output_dir", (dir / "runs").string()},
          {"parallelism", 8},
          {"retry_budget", 2},
          {"retry_base_delay_ms", 1},
          {"retry_max_delay_ms", 4},
          {"task", "news"}};
}

inline std::filesystem::path write_prompt_file(const std::filesystem::path& path,
                                               const std::vector<std::string>& instructions) {
  PromptSet set;
  for (std::size_t i = 0; i < instructions.size(); ++i) set.push_back({"p" + std::to_string(i), instructions[i], "", {}});
  write_prompts(set, path);
  return path;
}

}  // namespace divprobe::testing
