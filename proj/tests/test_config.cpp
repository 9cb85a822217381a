#include <gtest/gtest.h>

#include <cstdlib>

#include "divprobe/config.hpp"
#include "divprobe/error.hpp"
#include "temp_dir.hpp"

using namespace divprobe;

namespace {

class EnvGuard {
 public:
  EnvGuard(const char* name, const char* value) : name_(name) {
    if (const char* old = std::getenv(name)) old_ = old;
    if (value)
      setenv(name, value, 1);
    else
      unsetenv(name);
  }
  ~EnvGuard() {
    if (old_)
      setenv(name_, old_->c_str(), 1);
    else
      unsetenv(name_);
  }

 private:
  const char* name_;
  std::optional<std::string> old_;
};

}  // namespace

TEST(Config, Defaults) {
  auto c = parse_config(json::object());
  EXPECT_EQ(c.sampling.temperature, 1.0);
  EXPECT_EQ(c.template_revision, "v1");
  EXPECT_EQ(c.label_method, "keyword");
  EXPECT_EQ(c.tau, 0.2);
  EXPECT_TRUE(c.mixed_pool.empty());
}

TEST(Config, ParsesKeys) {
  auto c = parse_config(json::parse(R"({
    "endpoint_url": "http://localhost:9", "model_name": "m", "model_family": "tulu",
    "sampling": {"temperature": 0.7, "top_p": 0.95, "max_tokens": 128, "seed": 3, "logprob_top_k": 5},
    "parallelism": 8, "mixed_pool": ["full_template", "simple_steer"], "tau": 0.3, "task": "news"})"));
  EXPECT_EQ(c.model_family, ModelFamily::tulu);
  EXPECT_EQ(c.sampling.temperature, 0.7);
  EXPECT_EQ(c.sampling.seed, 3);
  EXPECT_EQ(c.sampling.logprob_top_k, 5);
  EXPECT_EQ(c.parallelism, 8);
  EXPECT_EQ(c.mixed_pool, (std::vector{PromptModeKind::full_template, PromptModeKind::simple_steer}));
  EXPECT_EQ(c.gen_client().model_name, "m");
}

TEST(Config, RejectsUnknownAndSecrets) {
  EXPECT_THROW(parse_config(json{{"temprature", 1.0}}), ConfigError);
  EXPECT_THROW(parse_config(json{{"api_key", "sk-123"}}), ConfigError);
  EXPECT_THROW(parse_config(json{{"embedding_api_key", "sk-123"}}), ConfigError);
  EXPECT_THROW(parse_config(json{{"model_family", "gpt"}}), ConfigError);
  EXPECT_THROW(parse_config(json{{"tau", 1.0}}), ConfigError);
  EXPECT_THROW(parse_config(json{{"parallelism", 0}}), ConfigError);
  EXPECT_THROW(parse_config(json{{"label_method", "magic"}}), ConfigError);
  EXPECT_THROW(parse_config(json{{"mixed_pool", {"mixed_template"}}}), ConfigError);
  EXPECT_THROW(parse_config(json{{"sampling", {{"temperature", 0.0}}}}), ConfigError);
}

TEST(Config, KeysFromEnvironment) {
  EnvGuard a(kApiKeyEnv, "main-key"), b(kEmbeddingApiKeyEnv, nullptr), l(kLabelApiKeyEnv, "label-key");
  auto c = parse_config(json{{"endpoint_url", "http://x"}, {"model_name", "m"}});
  EXPECT_EQ(c.api_key, "main-key");
  EXPECT_EQ(c.embedding_api_key, "main-key");
  EXPECT_EQ(c.label_api_key, "label-key");
  EXPECT_EQ(c.gen_client().endpoint.api_key, "main-key");
  EXPECT_EQ(to_json(c).dump().find("main-key"), std::string::npos);
}

TEST(Config, RelativePathsResolveAgainstFile) {
  divprobe::testing::TempDir dir;
  std::filesystem::create_directories(dir / "sub");
  auto p = dir.write("sub/cfg.json", R"({"prompts_path": "prompts.jsonl", "cache_dir": "cache"})");
  auto c = load_config(p);
  EXPECT_EQ(c.prompts_path, dir / "sub" / "prompts.jsonl");
  EXPECT_EQ(c.cache_dir, dir / "sub" / "cache");
}

TEST(Config, MissingOrInvalidFile) {
  divprobe::testing::TempDir dir;
  EXPECT_THROW(load_config(dir / "none.json"), ConfigError);
  EXPECT_THROW(load_config(dir.write("bad.json", "{")), ConfigError);
}

TEST(Config, ClientAccessorsRequireEndpoints) {
  auto c = parse_config(json::object());
  EXPECT_THROW(c.gen_client(), ConfigError);
  EXPECT_THROW(c.embed_client(), ConfigError);
}

TEST(Config, TemplateRevisionMustMatch) {
  EXPECT_EQ(parse_config(json::object()).template_table().revision(), "v1");
  EXPECT_THROW(parse_config(json{{"template_revision", "v2"}}).template_table(), ConfigError);
}

TEST(Config, ToJsonRedactsUrls) {
  auto c = parse_config(json{{"endpoint_url", "https://user:pw@host/v1?token=abc"}, {"model_name", "m"}});
  auto j = to_json(c).dump();
  EXPECT_EQ(j.find("pw@"), std::string::npos);
  EXPECT_EQ(j.find("token=abc"), std::string::npos);
}
