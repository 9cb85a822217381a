#include <gtest/gtest.h>

#include <set>

#include "divprobe/cache.hpp"
#include "divprobe/error.hpp"
#include "divprobe/genclient.hpp"
#include "mock_server.hpp"
#include "temp_dir.hpp"

using namespace divprobe;
using divprobe::testing::MockOptions;
using divprobe::testing::MockServer;

namespace {

GenClientConfig client_config(const MockServer& server, bool use_n = true) {
  GenClientConfig c;
  c.endpoint = {server.url(), "", 30.0};
  c.model_name = "mock-model";
  c.retry = {3, std::chrono::milliseconds(1), std::chrono::milliseconds(4)};
  c.use_n_parameter = use_n;
  return c;
}

RenderedPrompt plain(const std::string& text) { return {text, EndpointFlavor::raw_completion, PromptModeKind::simple_steer, ModelFamily::llama}; }

std::vector<RenderedPromptRecord> four_prompts() {
  std::vector<RenderedPromptRecord> out;
  for (int i = 0; i < 4; ++i)
    out.push_back({"p" + std::to_string(i), "t", {PromptModeKind::simple_steer}, plain("Instruction " + std::to_string(i))});
  return out;
}

}  // namespace

TEST(Generate, KSamplesIndexedInOrder) {
  MockServer server;
  CompletionClient client(client_config(server));
  auto recs = client.generate(plain("Write news."), SamplingParams{}, 10, {"p1", {PromptModeKind::simple_steer}});
  ASSERT_EQ(recs.size(), 10u);
  for (int i = 0; i < 10; ++i) {
    EXPECT_EQ(recs[static_cast<std::size_t>(i)].sample_index, i);
    EXPECT_EQ(recs[static_cast<std::size_t>(i)].finish_reason, FinishReason::stop);
    EXPECT_EQ(recs[static_cast<std::size_t>(i)].text, divprobe::testing::mock_text(false, i));
    EXPECT_EQ(recs[static_cast<std::size_t>(i)].prompt_id, "p1");
  }
  EXPECT_EQ(server.completion_requests(), 1u);
}

TEST(Generate, OneRequestPerSampleWithoutN) {
  MockServer server;
  CompletionClient client(client_config(server, false));
  auto recs = client.generate(plain("Write news."), SamplingParams{}, 3, {"p1", {}});
  EXPECT_EQ(recs.size(), 3u);
  EXPECT_EQ(server.completion_requests(), 3u);
}

TEST(Generate, RequestBodyCarriesSampling) {
  MockServer server;
  CompletionClient client(client_config(server));
  SamplingParams s;
  s.temperature = 0.7;
  s.top_p = 0.8;
  s.max_tokens = 33;
  s.seed = 9;
  client.generate(plain("x"), s, 2, {"p", {}});
  auto body = server.completion_bodies().at(0);
  EXPECT_EQ(body["model"], "mock-model");
  EXPECT_EQ(body["prompt"], "x");
  EXPECT_DOUBLE_EQ(body["temperature"].get<double>(), 0.7);
  EXPECT_DOUBLE_EQ(body["top_p"].get<double>(), 0.8);
  EXPECT_EQ(body["max_tokens"], 33);
  EXPECT_EQ(body["seed"], 9);
  EXPECT_EQ(body["n"], 2);
  EXPECT_FALSE(body.contains("logprobs"));
}

TEST(Generate, RetriesCounted) {
  MockServer server(MockOptions{.fail_first = 2, .fail_status = 500});
  CompletionClient client(client_config(server));
  auto recs = client.generate(plain("x"), SamplingParams{}, 1, {"p", {}});
  EXPECT_EQ(recs.size(), 1u);
  EXPECT_EQ(client.telemetry().retries.load(), 2u);
}

TEST(Generate, LogprobsSortedAndBounded) {
  MockServer server;
  CompletionClient client(client_config(server));
  SamplingParams s;
  s.logprob_top_k = 5;
  s.max_tokens = 20;
  auto recs = client.generate(plain("x"), s, 2, {"p", {}});
  for (const auto& r : recs) {
    ASSERT_TRUE(r.token_logprobs);
    EXPECT_EQ(r.token_logprobs->size(), 20u);
    EXPECT_EQ(r.finish_reason, FinishReason::length);
    for (const auto& step : *r.token_logprobs) {
      EXPECT_LE(step.top_alternatives.size(), 5u);
      for (std::size_t i = 1; i < step.top_alternatives.size(); ++i)
        EXPECT_GE(step.top_alternatives[i - 1].second, step.top_alternatives[i].second);
    }
  }
}

TEST(Generate, ParseChoiceRejectsMissingText) {
  EXPECT_THROW(parse_completion_choice(json{{"index", 0}}, SamplingParams{}, {"p", {}}, ModelFamily::llama, 0), Error);
}

TEST(Batch, FourPromptsTimesThree) {
  MockServer server(MockOptions{.max_delay_ms = 20});
  CompletionClient client(client_config(server));
  auto prompts = four_prompts();
  auto res = generate_batch(client, prompts, SamplingParams{}, {.k = 3, .parallelism = 8, .run_id = "r"});
  ASSERT_TRUE(res.ok());
  ASSERT_EQ(res.records.size(), 12u);
  for (std::size_t i = 0; i < 12; ++i) {
    EXPECT_EQ(res.records[i].prompt_id, "p" + std::to_string(i / 3));
    EXPECT_EQ(res.records[i].sample_index, static_cast<int>(i % 3));
  }
  EXPECT_LE(server.max_in_flight(), 8);
}

TEST(Batch, ParallelismBoundsInFlight) {
  MockServer server(MockOptions{.max_delay_ms = 30});
  CompletionClient client(client_config(server, false));
  auto prompts = four_prompts();
  auto res = generate_batch(client, prompts, SamplingParams{}, {.k = 4, .parallelism = 2, .run_id = "r"});
  EXPECT_EQ(res.records.size(), 16u);
  EXPECT_LE(server.max_in_flight(), 2);
}

TEST(Batch, RerunHitsCache) {
  divprobe::testing::TempDir dir;
  DiskCache cache(dir / "cache");
  MockServer server;
  CompletionClient client(client_config(server));
  auto prompts = four_prompts();
  BatchOptions opts{.k = 3, .parallelism = 4, .run_id = "run-1", .cache = &cache};
  auto first = generate_batch(client, prompts, SamplingParams{}, opts);
  ASSERT_TRUE(first.ok());
  server.reset_counters();
  auto second = generate_batch(client, prompts, SamplingParams{}, opts);
  EXPECT_EQ(server.completion_requests(), 0u);
  EXPECT_EQ(second.cache_hits, 12u);
  EXPECT_EQ(second.records, first.records);
}

TEST(Batch, PartialCacheRequestsOnlyMissing) {
  divprobe::testing::TempDir dir;
  DiskCache cache(dir / "cache");
  MockServer server;
  CompletionClient client(client_config(server));
  auto prompts = four_prompts();
  generate_batch(client, std::span(prompts).first(2), SamplingParams{}, {.k = 3, .run_id = "r", .cache = &cache});
  server.reset_counters();
  auto res = generate_batch(client, prompts, SamplingParams{}, {.k = 3, .run_id = "r", .cache = &cache});
  EXPECT_EQ(res.records.size(), 12u);
  EXPECT_EQ(res.cache_hits, 6u);
  EXPECT_EQ(server.completion_requests(), 2u);
}

TEST(Batch, FailingPromptDoesNotAbortOthers) {
  MockServer server(MockOptions{.fail_prompt_substring = "Instruction 2"});
  auto cfg = client_config(server);
  cfg.retry.budget = 1;
  CompletionClient client(cfg);
  auto prompts = four_prompts();
  auto res = generate_batch(client, prompts, SamplingParams{}, {.k = 2, .parallelism = 4, .run_id = "r"});
  ASSERT_EQ(res.failures.size(), 1u);
  EXPECT_EQ(res.failures[0].prompt_id, "p2");
  EXPECT_EQ(res.records.size(), 6u);
  EXPECT_FALSE(res.total_failure());
}

TEST(Batch, OpenEndedScale) {
  MockServer server;
  CompletionClient client(client_config(server));
  std::vector<RenderedPromptRecord> one = {{"news", "t", {PromptModeKind::simple_steer}, plain("Write news.")}};
  auto res = generate_batch(client, one, SamplingParams{}, {.k = 1024, .run_id = "r"});
  ASSERT_EQ(res.records.size(), 1024u);
  for (int i = 0; i < 1024; ++i) EXPECT_EQ(res.records[static_cast<std::size_t>(i)].sample_index, i);
}

TEST(CacheKey, Properties) {
  EXPECT_EQ(cache_key("r", "p", 0), cache_key("r", "p", 0));
  EXPECT_NE(cache_key("r", "p", 0), cache_key("r", "p", 1));
  EXPECT_NE(cache_key("r1", "p", 0), cache_key("r2", "p", 0));
  EXPECT_NE(cache_key("ab", "c", 0), cache_key("a", "bc", 0));
}

TEST(DiskCache, PutGet) {
  divprobe::testing::TempDir dir;
  DiskCache cache(dir / "c");
  const auto key = cache_key("run", "p", 0);
  EXPECT_FALSE(cache.get(key));
  cache.put(key, "value");
  EXPECT_EQ(cache.get(key), "value");
  cache.put(key, "other");
  EXPECT_EQ(cache.get(key), "other");
  EXPECT_FALSE(cache.get(cache_key("run", "p", 1)));
}
