#include <gtest/gtest.h>

#include <fstream>
#include <sstream>

#include "divprobe/error.hpp"
#include "divprobe/report.hpp"
#include "temp_dir.hpp"

using namespace divprobe;
using namespace divprobe::report;

namespace {

std::string golden(const std::string& name) {
  std::ifstream in(std::string(DIVPROBE_TEST_DIR) + "/golden/" + name, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::vector<ReportCell> news_cells() { return load_cells(std::string(DIVPROBE_TEST_DIR) + "/golden/news_traditional_cells.jsonl"); }

std::vector<ReportCell> small_cells() {
  return {
      {"llama", "Llama-3-8B-Instruct", "news", "full_template", 1.0,
       {{"distinct_2", 0.1556}, {"self_bleu", 0.9319}, {"topic_diversity", 0.5}, {"semantic_diversity", 0.3}},
       "llama-full"},
      {"llama", "Llama-3-8B-Instruct", "news", "simple_steer", 1.0,
       {{"distinct_2", 0.2107}, {"self_bleu", 0.8884}, {"topic_diversity", 0.9}}, "llama-simple"},
      {"tulu", "Tulu-3-8B-SFT", "news", "simple_steer", 1.0, {{"distinct_2", 0.3987}}, "tulu-simple"},
  };
}

const ComparisonRow* find_row(const Report& r, const std::string& model, const std::string& metric) {
  for (const auto& row : r.rows)
    if (row.model_name == model && row.metric == metric) return &row;
  return nullptr;
}

ReportCell cell(std::string mode, double t, double v) {
  return {"llama", "m", "news", std::move(mode), t, {{"distinct_2", v}}, ""};
}

}  // namespace

TEST(Report, NewsTableSimpleWinsEverywhere) {
  auto cells = news_cells();
  ASSERT_EQ(cells.size(), 10u);
  auto r = build_report(cells);
  ASSERT_EQ(r.rows.size(), 25u);
  for (const auto& row : r.rows) EXPECT_EQ(row.winner, Winner::simple) << row.model_name << " " << row.metric;
  EXPECT_TRUE(r.gaps.empty());
}

TEST(Report, LlamaDistinct2AndSelfBleu) {
  auto r = build_report(news_cells());
  auto d2 = find_row(r, "Llama-3-8B-Instruct", "distinct_2");
  ASSERT_NE(d2, nullptr);
  EXPECT_EQ(d2->baseline.value, 0.2107);
  EXPECT_EQ(d2->comparison.value, 0.1556);
  EXPECT_EQ(d2->winner, Winner::simple);
  EXPECT_FALSE(d2->verdict);
  auto sb = find_row(r, "Llama-3-8B-Instruct", "self_bleu");
  ASSERT_NE(sb, nullptr);
  EXPECT_EQ(sb->winner, Winner::simple);
}

TEST(Report, TieRule) {
  EXPECT_EQ(decide_winner(Direction::higher_is_diverse, 0.4, 0.4), Winner::tie);
  EXPECT_EQ(decide_winner(Direction::lower_is_diverse, 0.4, 0.4), Winner::tie);
  EXPECT_EQ(decide_winner(Direction::lower_is_diverse, 0.3, 0.4), Winner::simple);
  EXPECT_EQ(decide_winner(Direction::higher_is_diverse, 0.3, 0.4), Winner::template_);
  std::vector<ReportCell> cells = {cell("simple_steer", 1.0, 0.5), cell("full_template", 1.0, 0.5)};
  EXPECT_EQ(build_report(cells).rows.at(0).winner, Winner::tie);
}

TEST(Report, GoldenMarkdown) {
  auto cells = small_cells();
  EXPECT_EQ(emit(build_report(cells), Format::markdown), golden("report_small.md"));
}

TEST(Report, Deterministic) {
  auto cells = news_cells();
  for (auto f : {Format::json, Format::csv, Format::markdown})
    EXPECT_EQ(emit(build_report(cells), f), emit(build_report(cells), f));
  auto reversed = cells;
  std::reverse(reversed.begin(), reversed.end());
  EXPECT_EQ(emit(build_report(cells), Format::markdown), emit(build_report(reversed), Format::markdown));
}

TEST(Report, CsvHeaderAndRows) {
  auto out = emit(build_report(small_cells()), Format::csv);
  EXPECT_EQ(out.substr(0, out.find('\n')), "model,task,mode,temperature,metric,value,run_id");
  EXPECT_NE(out.find("Llama-3-8B-Instruct,news,simple_steer,1,distinct_2,0.2107,llama-simple\n"), std::string::npos);
  EXPECT_EQ(std::count(out.begin(), out.end(), '\n'), 1 + 4 + 3 + 1);
}

TEST(Report, JsonShape) {
  auto j = json::parse(emit(build_report(small_cells()), Format::json));
  EXPECT_EQ(j["rows"].size(), 3u);
  EXPECT_EQ(j["gaps"].size(), 2u);
  EXPECT_EQ(j["tau"], 0.2);
  const auto& topic = j["rows"][2];
  EXPECT_EQ(topic["metric"], "topic_diversity");
  EXPECT_EQ(topic["winner"], "simple");
  EXPECT_EQ(topic["verdict"]["collapsed"], true);
}

TEST(Report, VerdictUsesTau) {
  std::vector<ReportCell> cells = {{"l", "m", "t", "simple_steer", 1.0, {{"semantic_diversity", 0.5}}, ""},
                                   {"l", "m", "t", "full_template", 1.0, {{"semantic_diversity", 0.45}}, ""}};
  EXPECT_FALSE(build_report(cells, {}, 0.2).rows[0].verdict->collapsed);
  EXPECT_TRUE(build_report(cells, {}, 0.05).rows[0].verdict->collapsed);
}

TEST(Report, InvalidInputs) {
  std::vector<ReportCell> dup = {cell("simple_steer", 1.0, 0.5), cell("simple_steer", 1.0, 0.6)};
  EXPECT_THROW(build_report(dup), ValidationError);
  std::vector<ReportCell> nan = {cell("simple_steer", 1.0, std::nan(""))};
  EXPECT_THROW(build_report(nan), ValidationError);
  EXPECT_THROW(build_report(small_cells(), {}, 1.5), ValidationError);
  EXPECT_THROW(build_report(small_cells(), {"a", "a"}), ValidationError);
}

TEST(Report, UnknownModeAndMetricBecomeGaps) {
  std::vector<ReportCell> cells = {cell("simple_steer", 1.0, 0.5), cell("full_template", 1.0, 0.4),
                                   cell("fake_template", 1.0, 0.3)};
  cells[0].metrics["mystery"] = 1.0;
  auto r = build_report(cells);
  EXPECT_EQ(r.rows.size(), 1u);
  EXPECT_EQ(r.gaps.size(), 2u);
}

TEST(Report, LoadCellsFormats) {
  divprobe::testing::TempDir dir;
  json c = small_cells()[0];
  EXPECT_EQ(load_cells(dir.write("one.json", c.dump(2))).size(), 1u);
  EXPECT_EQ(load_cells(dir.write("arr.json", json::array({c, c}).dump())).size(), 2u);
  EXPECT_EQ(load_cells(dir.write("lines.jsonl", c.dump() + "\n" + c.dump() + "\n")).size(), 2u);
  json bad = c;
  bad.erase("metrics");
  EXPECT_THROW(load_cells(dir.write("bad.json", bad.dump())), SchemaError);
}

TEST(Series, SortedAscending) {
  std::vector<ReportCell> cells = {cell("simple_steer", 1.3, 0.3), cell("simple_steer", 0.7, 0.1),
                                   cell("simple_steer", 1.0, 0.2)};
  auto s = temperature_series(cells);
  ASSERT_EQ(s.series.size(), 1u);
  ASSERT_EQ(s.series[0].points.size(), 3u);
  EXPECT_EQ(s.series[0].points[0], (std::pair{0.7, 0.1}));
  EXPECT_EQ(s.series[0].points[2], (std::pair{1.3, 0.3}));
  EXPECT_FALSE(s.series[0].singleton);
}

TEST(Series, MissingModeAtOneTemperature) {
  std::vector<ReportCell> cells = {cell("simple_steer", 0.7, 0.1), cell("simple_steer", 1.0, 0.2),
                                   cell("full_template", 0.7, 0.05)};
  auto s = temperature_series(cells);
  ASSERT_EQ(s.series.size(), 2u);
  const auto& full = s.series[0].mode == "full_template" ? s.series[0] : s.series[1];
  EXPECT_EQ(full.points.size(), 1u);
  EXPECT_TRUE(full.singleton);
  ASSERT_EQ(s.gaps.size(), 1u);
  EXPECT_EQ(s.gaps[0].mode, "full_template");
  EXPECT_EQ(s.gaps[0].temperature, 1.0);
}

TEST(Series, TwoModesTwoSeries) {
  std::vector<ReportCell> cells = {cell("simple_steer", 0.7, 0.1), cell("full_template", 0.7, 0.05),
                                   cell("simple_steer", 1.0, 0.2), cell("full_template", 1.0, 0.07)};
  auto s = temperature_series(cells);
  EXPECT_EQ(s.series.size(), 2u);
  EXPECT_TRUE(s.gaps.empty());
  auto csv = series_csv(s);
  EXPECT_EQ(csv.substr(0, csv.find('\n')), "model,task,mode,metric,temperature,value");
  EXPECT_EQ(to_json(s)["series"].size(), 2u);
}

TEST(Format, NumbersAndNames) {
  EXPECT_EQ(format_number(1.0), "1");
  EXPECT_EQ(format_number(0.1556), "0.1556");
  EXPECT_EQ(parse_format("csv"), Format::csv);
  EXPECT_FALSE(parse_format("xml"));
  EXPECT_EQ(metric_direction("self_bleu"), Direction::lower_is_diverse);
  EXPECT_EQ(metric_direction("distinct_3"), Direction::higher_is_diverse);
  EXPECT_FALSE(metric_direction("nope"));
  EXPECT_TRUE(has_verdict("topic_diversity"));
  EXPECT_FALSE(has_verdict("distinct_2"));
}
