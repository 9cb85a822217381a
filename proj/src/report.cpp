#include "divprobe/report.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <set>
#include <tuple>

#include "divprobe/error.hpp"

namespace divprobe::report {

std::string distinct_metric_name(int n) { return "distinct_" + std::to_string(n); }

std::optional<Direction> metric_direction(std::string_view metric) {
  static const std::map<std::string, Direction, std::less<>> table = {
      {std::string(kSemanticDiversity), Direction::higher_is_diverse},
      {std::string(kTopicDiversity), Direction::higher_is_diverse},
      {std::string(kStdTokenCount), Direction::higher_is_diverse},
      {std::string(kStdSentenceCount), Direction::higher_is_diverse},
      {std::string(kStdContentWordRatio), Direction::higher_is_diverse},
      {"distinct_2", Direction::higher_is_diverse},
      {"distinct_3", Direction::higher_is_diverse},
      {"distinct_4", Direction::higher_is_diverse},
      {"distinct_5", Direction::higher_is_diverse},
      {std::string(kSelfBleu), Direction::lower_is_diverse},
  };
  auto it = table.find(metric);
  if (it == table.end()) return std::nullopt;
  return it->second;
}

bool has_verdict(std::string_view metric) { return metric == kSemanticDiversity || metric == kTopicDiversity; }

std::string format_number(double value) {
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof buf, value);
  return std::string(buf, res.ptr);
}

namespace {

std::string fixed4(double value) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.4f", value);
  return buf;
}

const json& need(const json& j, const char* field) {
  if (!j.is_object() || !j.contains(field)) throw SchemaError(field, "missing required field");
  return j.at(field);
}

std::string need_string(const json& j, const char* field) {
  const auto& v = need(j, field);
  if (!v.is_string()) throw SchemaError(field, "expected a string");
  return v.get<std::string>();
}

using CellKey = std::tuple<std::string, std::string, std::string, double>;

CellKey key_of(const ReportCell& c) { return {c.model_name, c.task, c.mode, c.temperature}; }

std::string describe(const ReportCell& c) {
  return "model=" + c.model_name + " task=" + c.task + " mode=" + c.mode + " temperature=" +
         format_number(c.temperature);
}

ReportGap cell_gap(const ReportCell& c, std::string metric, std::string reason) {
  return {c.model_name, c.task, c.mode, c.temperature, std::move(metric), std::move(reason)};
}

bool gap_less(const ReportGap& a, const ReportGap& b) {
  return std::tie(a.model_name, a.task, a.metric, a.mode, a.temperature, a.reason) <
         std::tie(b.model_name, b.task, b.metric, b.mode, b.temperature, b.reason);
}

std::string csv_field(std::string_view s) {
  if (s.find_first_of(",\"\n\r") == std::string_view::npos) return std::string(s);
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  out += '"';
  return out;
}

std::string md_cell(std::string_view s) {
  std::string out;
  for (char c : s) {
    if (c == '|') out += '\\';
    out += (c == '\n' || c == '\r') ? ' ' : c;
  }
  return out;
}

json cell_value_json(const CellValue& v) { return json{{"mode", v.mode}, {"value", v.value}, {"run_id", v.run_id}}; }

json gap_json(const ReportGap& g) {
  return json{{"model", g.model_name}, {"task", g.task},     {"mode", g.mode}, {"temperature", g.temperature},
              {"metric", g.metric},    {"reason", g.reason}};
}

std::string emit_csv(const Report& report) {
  struct Line {
    const ReportCell* cell;
    const std::string* metric;
    double value;
  };
  std::vector<Line> lines;
  for (const auto& c : report.cells)
    for (const auto& [metric, value] : c.metrics) lines.push_back({&c, &metric, value});
  std::sort(lines.begin(), lines.end(), [](const Line& a, const Line& b) {
    return std::tie(a.cell->model_name, a.cell->task, a.cell->mode, a.cell->temperature, *a.metric) <
           std::tie(b.cell->model_name, b.cell->task, b.cell->mode, b.cell->temperature, *b.metric);
  });
  std::string out(kCsvHeader);
  out += '\n';
  for (const auto& l : lines) {
    out += csv_field(l.cell->model_name) + ',' + csv_field(l.cell->task) + ',' + csv_field(l.cell->mode) + ',' +
           format_number(l.cell->temperature) + ',' + csv_field(*l.metric) + ',' + format_number(l.value) + ',' +
           csv_field(l.cell->run_id) + '\n';
  }
  return out;
}

std::string emit_markdown(const Report& report) {
  const auto& base = report.pairing.baseline_mode;
  const auto& cmp = report.pairing.comparison_mode;
  std::string out = "# Diversity report\n\n";
  out += "Baseline mode: " + base + ". Comparison mode: " + cmp + ". Collapse threshold tau = " +
         format_number(report.tau) + ".\n\n";
  out += "| model | task | temperature | metric | " + md_cell(base) + " | " + md_cell(cmp) +
         " | winner | relative gap | collapsed |\n";
  out += "|---|---|---|---|---|---|---|---|---|\n";
  for (const auto& r : report.rows) {
    auto b = fixed4(r.baseline.value);
    auto c = fixed4(r.comparison.value);
    if (r.winner == Winner::simple) b = "**" + b + "**";
    if (r.winner == Winner::template_) c = "**" + c + "**";
    std::string gap, collapsed;
    if (r.verdict) {
      gap = fixed4(r.verdict->relative_gap);
      collapsed = r.verdict->collapsed ? "yes" : "no";
    }
    out += "| " + md_cell(r.model_name) + " | " + md_cell(r.task) + " | " + format_number(r.temperature) + " | " +
           md_cell(r.metric) + " | " + b + " | " + c + " | " + std::string(to_string(r.winner)) + " | " + gap + " | " +
           collapsed + " |\n";
  }
  if (!report.gaps.empty()) {
    out += "\n## Gaps\n\n";
    for (const auto& g : report.gaps) {
      out += "- model=" + md_cell(g.model_name) + " task=" + md_cell(g.task) + " mode=" + md_cell(g.mode) +
             " temperature=" + format_number(g.temperature);
      if (!g.metric.empty()) out += " metric=" + md_cell(g.metric);
      out += ": " + md_cell(g.reason) + "\n";
    }
  }
  if (!report.generated_from.empty()) {
    out += "\nGenerated from runs:";
    for (const auto& id : report.generated_from) out += " " + id;
    out += "\n";
  }
  return out;
}

}  // namespace

void to_json(json& j, const ReportCell& c) {
  j = json{{"model_family", c.model_family}, {"model_name", c.model_name}, {"task", c.task},  {"mode", c.mode},
           {"temperature", c.temperature},   {"metrics", c.metrics},        {"run_id", c.run_id}};
}

void from_json(const json& j, ReportCell& c) {
  c.model_family = j.contains("model_family") && j["model_family"].is_string() ? j["model_family"].get<std::string>()
                                                                              : std::string();
  c.model_name = need_string(j, "model_name");
  c.task = j.contains("task") && j["task"].is_string() ? j["task"].get<std::string>() : std::string();
  c.mode = need_string(j, "mode");
  const auto& t = need(j, "temperature");
  if (!t.is_number()) throw SchemaError("temperature", "expected a number");
  c.temperature = t.get<double>();
  const auto& m = need(j, "metrics");
  if (!m.is_object()) throw SchemaError("metrics", "expected an object of metric -> number");
  c.metrics.clear();
  for (const auto& [name, value] : m.items()) {
    if (!value.is_number()) throw SchemaError("metrics." + name, "expected a number");
    c.metrics[name] = value.get<double>();
  }
  c.run_id = j.contains("run_id") && j["run_id"].is_string() ? j["run_id"].get<std::string>() : std::string();
}

std::vector<ReportCell> load_cells(const std::filesystem::path& path) {
  const auto text = read_text_file(path);
  std::vector<ReportCell> cells;
  json whole = json::parse(text, nullptr, false);
  if (!whole.is_discarded()) {
    try {
      if (whole.is_array()) {
        for (const auto& v : whole) cells.push_back(v.get<ReportCell>());
        return cells;
      }
      if (whole.is_object()) {
        cells.push_back(whole.get<ReportCell>());
        return cells;
      }
    } catch (const SchemaError& e) {
      throw e.at(path.string(), 0);
    }
  }
  read_jsonl(path, [&](const json& v, std::size_t) { cells.push_back(v.get<ReportCell>()); });
  if (cells.empty()) throw ParseError(path.string(), 0, "no report cells");
  return cells;
}

std::string_view to_string(Winner winner) {
  switch (winner) {
    case Winner::simple:
      return "simple";
    case Winner::template_:
      return "template";
    case Winner::tie:
      break;
  }
  return "tie";
}

Winner decide_winner(Direction direction, double baseline, double comparison) {
  if (baseline == comparison) return Winner::tie;
  const bool baseline_higher = baseline > comparison;
  if (direction == Direction::higher_is_diverse) return baseline_higher ? Winner::simple : Winner::template_;
  return baseline_higher ? Winner::template_ : Winner::simple;
}

Report build_report(std::span<const ReportCell> cells, const Pairing& pairing, double tau) {
  if (!(tau > 0.0 && tau < 1.0)) throw ValidationError("tau must be in (0, 1), got " + format_number(tau));
  if (pairing.baseline_mode == pairing.comparison_mode)
    throw ValidationError("pairing needs two different modes, got '" + pairing.baseline_mode + "' twice");

  Report report;
  report.pairing = pairing;
  report.tau = tau;
  report.cells.assign(cells.begin(), cells.end());

  std::map<CellKey, const ReportCell*> by_key;
  std::set<std::string> run_ids;
  for (const auto& c : cells) {
    if (!std::isfinite(c.temperature)) throw ValidationError("non-finite temperature in cell " + describe(c));
    for (const auto& [metric, value] : c.metrics)
      if (!std::isfinite(value)) throw ValidationError("non-finite value for " + metric + " in cell " + describe(c));
    if (!by_key.emplace(key_of(c), &c).second) throw ValidationError("duplicate report cell " + describe(c));
    if (!c.run_id.empty()) run_ids.insert(c.run_id);
  }
  report.generated_from.assign(run_ids.begin(), run_ids.end());

  for (const auto& c : cells) {
    const bool is_base = c.mode == pairing.baseline_mode;
    const bool is_cmp = c.mode == pairing.comparison_mode;
    if (!is_base && !is_cmp) {
      report.gaps.push_back(cell_gap(c, "", "mode is not part of the " + pairing.baseline_mode + " vs " +
                                                pairing.comparison_mode + " pairing"));
      continue;
    }
    const auto& other_mode = is_base ? pairing.comparison_mode : pairing.baseline_mode;
    auto it = by_key.find({c.model_name, c.task, other_mode, c.temperature});
    if (it == by_key.end()) {
      report.gaps.push_back(cell_gap(c, "", "no " + other_mode + " cell to pair with"));
      continue;
    }
    const ReportCell& other = *it->second;
    for (const auto& [metric, value] : c.metrics) {
      const auto direction = metric_direction(metric);
      if (!direction) {
        report.gaps.push_back(cell_gap(c, metric, "metric has no known direction"));
        continue;
      }
      auto om = other.metrics.find(metric);
      if (om == other.metrics.end()) {
        report.gaps.push_back(cell_gap(c, metric, "metric missing from the " + other_mode + " cell"));
        continue;
      }
      if (!is_base) continue;  // the pair is emitted once, from the baseline side

      ComparisonRow row;
      row.model_family = c.model_family.empty() ? other.model_family : c.model_family;
      row.model_name = c.model_name;
      row.task = c.task;
      row.temperature = c.temperature;
      row.metric = metric;
      row.baseline = {c.mode, value, c.run_id};
      row.comparison = {other.mode, om->second, other.run_id};
      row.winner = decide_winner(*direction, value, om->second);
      if (has_verdict(metric)) {
        if (value > 0.0 && om->second >= 0.0)
          row.verdict = metrics::collapse_verdict(value, om->second, tau);
        else
          report.gaps.push_back(cell_gap(c, metric, "no collapse verdict: baseline value is not positive"));
      }
      report.rows.push_back(std::move(row));
    }
  }

  std::sort(report.rows.begin(), report.rows.end(), [](const ComparisonRow& a, const ComparisonRow& b) {
    return std::tie(a.model_name, a.task, a.metric, a.temperature) <
           std::tie(b.model_name, b.task, b.metric, b.temperature);
  });
  std::sort(report.gaps.begin(), report.gaps.end(), gap_less);
  return report;
}

std::optional<Format> parse_format(std::string_view name) {
  if (name == "json") return Format::json;
  if (name == "csv") return Format::csv;
  if (name == "markdown" || name == "md") return Format::markdown;
  return std::nullopt;
}

json to_json(const Report& report) {
  json rows = json::array();
  for (const auto& r : report.rows) {
    rows.push_back(json{{"model_family", r.model_family},
                        {"model", r.model_name},
                        {"task", r.task},
                        {"temperature", r.temperature},
                        {"metric", r.metric},
                        {"simple", cell_value_json(r.baseline)},
                        {"template", cell_value_json(r.comparison)},
                        {"winner", to_string(r.winner)},
                        {"verdict", r.verdict ? metrics::to_json(*r.verdict) : json(nullptr)}});
  }
  json gaps = json::array();
  for (const auto& g : report.gaps) gaps.push_back(gap_json(g));
  return json{{"rows", std::move(rows)},
              {"gaps", std::move(gaps)},
              {"tau", report.tau},
              {"generated_from", report.generated_from}};
}

std::string emit(const Report& report, Format format) {
  switch (format) {
    case Format::json:
      return to_json(report).dump(2, ' ', false, json::error_handler_t::replace) + "\n";
    case Format::csv:
      return emit_csv(report);
    case Format::markdown:
      break;
  }
  return emit_markdown(report);
}

TemperatureSeries temperature_series(std::span<const ReportCell> cells) {
  using Group = std::tuple<std::string, std::string, std::string>;        // model, task, metric
  std::map<Group, std::set<double>> temps;                                 // all temperatures seen per group
  std::map<std::tuple<std::string, std::string, std::string, std::string>, // model, task, metric, mode
           std::map<double, double>>
      points;
  for (const auto& c : cells) {
    for (const auto& [metric, value] : c.metrics) {
      temps[{c.model_name, c.task, metric}].insert(c.temperature);
      auto& p = points[{c.model_name, c.task, metric, c.mode}];
      if (!p.emplace(c.temperature, value).second) throw ValidationError("duplicate report cell " + describe(c));
    }
  }
  TemperatureSeries out;
  for (const auto& [key, pts] : points) {
    const auto& [model, task, metric, mode] = key;
    Series s{model, task, mode, metric, {pts.begin(), pts.end()}, pts.size() < 2};
    for (double t : temps[{model, task, metric}])
      if (!pts.contains(t)) out.gaps.push_back({model, task, mode, t, metric, "no value at this temperature"});
    out.series.push_back(std::move(s));
  }
  std::sort(out.gaps.begin(), out.gaps.end(), gap_less);
  return out;
}

json to_json(const TemperatureSeries& ts) {
  json series = json::array();
  for (const auto& s : ts.series) {
    json pts = json::array();
    for (const auto& [t, v] : s.points) pts.push_back(json::array({t, v}));
    series.push_back(json{{"model", s.model_name},
                          {"task", s.task},
                          {"mode", s.mode},
                          {"metric", s.metric},
                          {"points", std::move(pts)},
                          {"singleton", s.singleton}});
  }
  json gaps = json::array();
  for (const auto& g : ts.gaps) gaps.push_back(gap_json(g));
  return json{{"series", std::move(series)}, {"gaps", std::move(gaps)}};
}

std::string series_csv(const TemperatureSeries& ts) {
  std::string out = "model,task,mode,metric,temperature,value\n";
  for (const auto& s : ts.series)
    for (const auto& [t, v] : s.points)
      out += csv_field(s.model_name) + ',' + csv_field(s.task) + ',' + csv_field(s.mode) + ',' + csv_field(s.metric) +
             ',' + format_number(t) + ',' + format_number(v) + '\n';
  return out;
}

}  // namespace divprobe::report
