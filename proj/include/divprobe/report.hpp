#pragma once

// Pairs metric values across prompt modes into comparison rows with winners
// and collapse verdicts, and emits them as JSON, CSV or Markdown.

#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "divprobe/corpus.hpp"
#include "divprobe/metrics.hpp"

namespace divprobe::report {

/// Canonical metric names used in score cells.
inline constexpr std::string_view kSemanticDiversity = "semantic_diversity";
inline constexpr std::string_view kTopicDiversity = "topic_diversity";
inline constexpr std::string_view kStdTokenCount = "std_token_count";
inline constexpr std::string_view kStdSentenceCount = "std_sentence_count";
inline constexpr std::string_view kStdContentWordRatio = "std_content_word_ratio";
inline constexpr std::string_view kSelfBleu = "self_bleu";

/// "distinct_2" .. "distinct_5".
std::string distinct_metric_name(int n);

enum class Direction { higher_is_diverse, lower_is_diverse };

/// Static direction table; nullopt for metrics it does not know.
std::optional<Direction> metric_direction(std::string_view metric);

/// True for the metrics that get a collapse verdict.
bool has_verdict(std::string_view metric);

struct ReportCell {
  std::string model_family;
  std::string model_name;
  std::string task;
  std::string mode;
  double temperature = 1.0;
  std::map<std::string, double> metrics;
  std::string run_id;
};

void to_json(json& j, const ReportCell& c);
void from_json(const json& j, ReportCell& c);

/// A file holds one cell as a JSON object, or one cell per line as JSONL.
std::vector<ReportCell> load_cells(const std::filesystem::path& path);

struct Pairing {
  std::string baseline_mode = "simple_steer";
  std::string comparison_mode = "full_template";
};

enum class Winner { simple, template_, tie };

std::string_view to_string(Winner winner);

struct CellValue {
  std::string mode;
  double value = 0.0;
  std::string run_id;
};

struct ComparisonRow {
  std::string model_family;
  std::string model_name;
  std::string task;
  double temperature = 1.0;
  std::string metric;
  /// baseline is the simple-steer side.
  CellValue baseline;
  CellValue comparison;
  Winner winner = Winner::tie;
  std::optional<metrics::CollapseVerdict> verdict;
};

struct ReportGap {
  std::string model_name;
  std::string task;
  std::string mode;
  double temperature = 1.0;
  std::string metric;  // empty when the whole cell is affected
  std::string reason;
};

struct Report {
  Pairing pairing;
  double tau = metrics::kDefaultTau;
  std::vector<ComparisonRow> rows;
  std::vector<ReportGap> gaps;
  std::vector<std::string> generated_from;
  /// All input cells, kept for the long-format CSV.
  std::vector<ReportCell> cells;
};

Winner decide_winner(Direction direction, double baseline, double comparison);

/// Throws ValidationError on a duplicate (model_name, task, mode, temperature)
/// key, a non-finite metric value or an invalid tau.
Report build_report(std::span<const ReportCell> cells, const Pairing& pairing = {}, double tau = metrics::kDefaultTau);

enum class Format { json, csv, markdown };

std::optional<Format> parse_format(std::string_view name);

inline constexpr std::string_view kCsvHeader = "model,task,mode,temperature,metric,value,run_id";

std::string emit(const Report& report, Format format);

json to_json(const Report& report);

struct Series {
  std::string model_name;
  std::string task;
  std::string mode;
  std::string metric;
  /// (temperature, value), ascending temperature.
  std::vector<std::pair<double, double>> points;
  /// Fewer than two distinct temperatures.
  bool singleton = false;
};

struct TemperatureSeries {
  std::vector<Series> series;
  /// One note per (series, temperature) present for some other mode but
  /// missing for this one.
  std::vector<ReportGap> gaps;
};

TemperatureSeries temperature_series(std::span<const ReportCell> cells);

json to_json(const TemperatureSeries& series);
/// Columns: model,task,mode,metric,temperature,value.
std::string series_csv(const TemperatureSeries& series);

/// Shortest round-trip decimal form.
std::string format_number(double value);

}  // namespace divprobe::report
