#include <gtest/gtest.h>

#include <array>
#include <cmath>
#include <fstream>
#include <map>

#include "divprobe/error.hpp"
#include "divprobe/templates.hpp"
#include "temp_dir.hpp"

using namespace divprobe;

namespace {

const std::string kNews = "Please write a news about a random topic.";

struct GoldenRow {
  ModelFamily family;
  PromptModeKind mode;
  std::string instruction;
  std::string expected;
};

std::vector<GoldenRow> golden_rows() {
  std::ifstream in(std::string(DIVPROBE_TEST_DIR) + "/golden/templates_v1_rendered.jsonl");
  std::vector<GoldenRow> rows;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    auto j = json::parse(line);
    rows.push_back({*parse_model_family(j["family"].get<std::string>()),
                    *parse_mode_kind(j["mode"].get<std::string>()), j["instruction"], j["expected"]});
  }
  return rows;
}

}  // namespace

TEST(Templates, GoldenTableByteExact) {
  const auto rows = golden_rows();
  ASSERT_EQ(rows.size(), 20u);
  for (const auto& row : rows) {
    auto r = TemplateTable::builtin().render(row.instruction, row.family, {row.mode, false});
    EXPECT_EQ(r.text, row.expected) << to_string(row.family) << " " << to_string(row.mode);
    EXPECT_EQ(r.resolved_mode, row.mode);
    EXPECT_EQ(r.family, row.family);
  }
}

TEST(Templates, TuluFullTemplate) {
  EXPECT_EQ(TemplateTable::builtin().render(kNews, ModelFamily::tulu, {PromptModeKind::full_template}).text,
            "<|user|> Please write a news about a random topic. <|assistant|>");
}

TEST(Templates, MistralFullTemplate) {
  EXPECT_EQ(TemplateTable::builtin().render(kNews, ModelFamily::mistral, {PromptModeKind::full_template}).text,
            "<s> [INST] Please write a news about a random topic. [/INST]");
}

TEST(Templates, SimpleSteerIsIdentity) {
  for (auto f : kAllFamilies)
    EXPECT_EQ(TemplateTable::builtin().render(kNews, f, {PromptModeKind::simple_steer}).text, kNews);
}

TEST(Templates, RevisionAndCoverage) {
  EXPECT_EQ(TemplateTable::builtin().revision(), "v1");
  for (auto f : kAllFamilies)
    for (auto m : kAblationModes)
      EXPECT_EQ(TemplateTable::builtin().template_for(f, m).find(kInstructionMarker) != std::string::npos, true);
}

TEST(Templates, MixedModeNeedsRenderMixed) {
  EXPECT_THROW(TemplateTable::builtin().render(kNews, ModelFamily::llama, {PromptModeKind::mixed_template}),
               ValidationError);
}

TEST(Templates, ParseRejectsBadTables) {
  std::string full;
  for (auto f : kAllFamilies)
    for (auto m : kAblationModes)
      full += json{{"family", to_string(f)}, {"mode", to_string(m)}, {"template", "x {instruction} y"}, {"revision", "r"}}
                  .dump() +
              "\n";
  EXPECT_EQ(TemplateTable::parse(full, "t").revision(), "r");
  // Missing one row.
  EXPECT_THROW(TemplateTable::parse(full.substr(full.find('\n') + 1), "t"), Error);
  // Two markers.
  auto two = full;
  two.replace(two.find("x {instruction} y"), 17, "{instruction}{instruction}");
  EXPECT_THROW(TemplateTable::parse(two, "t"), Error);
  // Mixed revisions.
  auto mixed = full;
  mixed.replace(mixed.rfind("\"r\""), 3, "\"s\"");
  EXPECT_THROW(TemplateTable::parse(mixed, "t"), Error);
}

TEST(RenderMixed, SingletonPool) {
  const std::array pool = {PromptModeKind::full_template};
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    std::mt19937_64 rng(seed);
    auto r = TemplateTable::builtin().render_mixed(kNews, ModelFamily::phi, pool, false, rng);
    EXPECT_EQ(r.resolved_mode, PromptModeKind::full_template);
  }
}

TEST(RenderMixed, DeterministicForSeed) {
  const std::array pool = {PromptModeKind::full_template, PromptModeKind::simple_steer};
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    std::mt19937_64 a(seed), b(seed);
    for (int i = 0; i < 10; ++i)
      EXPECT_EQ(TemplateTable::builtin().render_mixed(kNews, ModelFamily::llama, pool, false, a),
                TemplateTable::builtin().render_mixed(kNews, ModelFamily::llama, pool, false, b));
  }
}

TEST(RenderMixed, FrequenciesNearUniform) {
  const std::array pool = {PromptModeKind::full_template, PromptModeKind::fake_template,
                           PromptModeKind::minimum_dialog, PromptModeKind::simple_steer};
  std::mt19937_64 rng(2024);
  std::map<PromptModeKind, int> counts;
  const int draws = 10000;
  for (int i = 0; i < draws; ++i)
    ++counts[TemplateTable::builtin().render_mixed(kNews, ModelFamily::qwen, pool, false, rng).resolved_mode];
  const double sigma = std::sqrt(draws * 0.25 * 0.75);
  for (auto m : pool) EXPECT_LT(std::fabs(counts[m] - draws * 0.25), 4 * sigma) << to_string(m);
}

TEST(RenderMixed, EmptyPoolRejected) {
  std::mt19937_64 rng(1);
  EXPECT_THROW(TemplateTable::builtin().render_mixed(kNews, ModelFamily::qwen, {}, false, rng), ValidationError);
}

TEST(UniformIndex, InRangeAndStable) {
  std::mt19937_64 a(5), b(5);
  for (int i = 0; i < 1000; ++i) {
    const auto x = uniform_index(a, 7);
    EXPECT_LT(x, 7u);
    EXPECT_EQ(x, uniform_index(b, 7));
  }
}

TEST(DiversitySuffix, DefaultClause) {
  EXPECT_EQ(apply_diversity_suffix("Write a story."),
            "Write a story. Be creative and avoid repeating common choices.");
}

TEST(DiversitySuffix, EmptyClauseIsIdentity) { EXPECT_EQ(apply_diversity_suffix("Write a story.", ""), "Write a story."); }

TEST(DiversitySuffix, InsideTuluUserTurn) {
  auto r = TemplateTable::builtin().render("Write a story.", ModelFamily::tulu, {PromptModeKind::full_template, true});
  EXPECT_EQ(r.text, "<|user|> Write a story. Be creative and avoid repeating common choices. <|assistant|>");
}

TEST(DiversitySuffix, ConfiguredClause) {
  auto table = TemplateTable::builtin();
  table.set_diversity_clause("");
  EXPECT_EQ(table.render("Write.", ModelFamily::llama, {PromptModeKind::simple_steer, true}).text, "Write.");
}

TEST(RenderedRecords, RoundTrip) {
  divprobe::testing::TempDir dir;
  RenderedPromptRecord r{"p1", "news", {PromptModeKind::full_template, true},
                         TemplateTable::builtin().render(kNews, ModelFamily::phi, {PromptModeKind::full_template, true})};
  write_text_file(dir / "r.jsonl", serialize_rendered(std::vector{r}));
  auto back = load_rendered(dir / "r.jsonl");
  ASSERT_EQ(back.size(), 1u);
  EXPECT_EQ(back[0], r);
}
