#include "divprobe/pipeline.hpp"

#include <algorithm>
#include <iostream>
#include <map>
#include <random>
#include <set>

#include "divprobe/error.hpp"
#include "divprobe/hashing.hpp"
#include "divprobe/metrics.hpp"

namespace divprobe {

namespace fs = std::filesystem;

std::filesystem::path manifest_path_for(const std::filesystem::path& out) {
  return fs::path(out.string() + ".manifest.jsonl");
}

std::filesystem::path gaps_path_for(const std::filesystem::path& out) { return fs::path(out.string() + ".gaps.jsonl"); }

namespace {

struct Gap {
  std::string stage;
  std::string subject;
  std::string message;
};

void write_gaps(const fs::path& out, const std::vector<Gap>& gaps) {
  const auto path = gaps_path_for(out);
  if (gaps.empty()) {
    std::error_code ec;
    fs::remove(path, ec);
    return;
  }
  std::string text;
  for (const auto& g : gaps)
    text += dump_compact(json{{"stage", g.stage}, {"subject", g.subject}, {"message", g.message}}) + "\n";
  write_text_file(path, text);
}

template <class F>
int guarded(std::ostream& log, std::string_view stage, F&& body) {
  try {
    return body();
  } catch (const ConfigError& e) {
    log << stage << ": configuration error: " << e.what() << "\n";
  } catch (const ParseError& e) {
    log << stage << ": invalid input: " << e.what() << "\n";
  } catch (const SchemaError& e) {
    log << stage << ": invalid input: " << e.what() << "\n";
  } catch (const ValidationError& e) {
    log << stage << ": validation error: " << e.what() << "\n";
  } catch (const IoError& e) {
    log << stage << ": " << e.what() << "\n";
  } catch (const json::exception& e) {
    log << stage << ": invalid JSON value: " << e.what() << "\n";
  } catch (const std::exception& e) {
    log << stage << ": failed: " << e.what() << "\n";
    return kExitPartial;
  }
  return kExitInvalid;
}

void require_path(const fs::path& p, std::string_view flag) {
  if (p.empty()) throw ConfigError(std::string(flag) + " is required");
}

void write_output(const fs::path& out, std::string_view text) {
  if (out == "-") {
    std::cout << text;
    std::cout.flush();
  } else {
    write_text_file(out, text);
  }
}

std::string valid_families() {
  std::string s;
  for (auto f : kAllFamilies) s += (s.empty() ? "" : ", ") + std::string(to_string(f));
  return s;
}

ModelFamily resolve_family(const Config& config, const std::string& name) {
  if (name.empty()) {
    if (!config.model_family) throw ConfigError("no model family: pass --family or set model_family (valid: " +
                                                valid_families() + ")");
    return *config.model_family;
  }
  auto f = parse_model_family(name);
  if (!f) throw ConfigError("unknown family '" + name + "' (valid: " + valid_families() + ")");
  return *f;
}

std::map<std::string, RunManifest> load_manifests(const fs::path& path) {
  std::map<std::string, RunManifest> out;
  if (!fs::exists(path)) return out;
  try {
    read_jsonl(path, [&](const json& v, std::size_t) {
      auto m = v.get<RunManifest>();
      out.emplace(m.run_id, std::move(m));
    });
  } catch (const Error&) {
    out.clear();  // unreadable sidecar: treat as absent
  }
  return out;
}

std::string mode_label(const GenerationRecord& r) { return to_string(r.mode); }

}  // namespace

std::optional<Preset> parse_preset(std::string_view name) {
  if (name == "paper-commonsense") return Preset::commonsense;
  if (name == "paper-openended") return Preset::openended;
  if (name == "paper-entropy") return Preset::entropy;
  return std::nullopt;
}

std::string_view to_string(Preset preset) {
  switch (preset) {
    case Preset::commonsense:
      return "paper-commonsense";
    case Preset::openended:
      return "paper-openended";
    case Preset::entropy:
      break;
  }
  return "paper-entropy";
}

PresetDefaults preset_defaults(Preset preset) {
  switch (preset) {
    case Preset::commonsense:
      return {512, 10, metrics::kDefaultEntropySteps};
    case Preset::openended:
      return {1, 1024, metrics::kDefaultEntropySteps};
    case Preset::entropy:
      break;
  }
  return {metrics::kDefaultEntropyInstructions, 1, metrics::kDefaultEntropySteps};
}

PromptSet sample_prompts(const PromptSet& prompts, std::size_t n, std::uint64_t seed) {
  if (n >= prompts.size()) return prompts;
  std::vector<std::size_t> order(prompts.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::mt19937_64 rng(seed);
  for (std::size_t i = order.size() - 1; i > 0; --i) std::swap(order[i], order[uniform_index(rng, i + 1)]);
  PromptSet out;
  out.reserve(n);
  for (std::size_t i = 0; i < n; ++i) out.push_back(prompts[order[i]]);
  return out;
}

// -- render -------------------------------------------------------------------

int cmd_render(const Config& config, const RenderOptions& options, std::ostream& log) {
  return guarded(log, "render", [&] {
    require_path(options.out, "--out");
    const auto family = resolve_family(config, options.family);
    const auto prompts_path = options.prompts.empty() ? config.prompts_path : options.prompts;
    if (prompts_path.empty()) throw ConfigError("no prompt file: pass --prompts or set prompts_path");
    const auto prompts = load_prompts(prompts_path);
    const auto table = config.template_table();

    std::vector<PromptModeKind> modes;
    if (options.mode == "all") {
      modes.assign(std::begin(kAblationModes), std::end(kAblationModes));
    } else {
      auto kind = parse_mode_kind(options.mode);
      if (!kind)
        throw ConfigError("unknown mode '" + options.mode +
                          "' (valid: all, full_template, fake_template, minimum_dialog, simple_steer, mixed_template)");
      if (*kind == PromptModeKind::mixed_template && config.mixed_pool.empty())
        throw ConfigError("mixed_template needs a non-empty mixed_pool in the config");
      modes.push_back(*kind);
    }

    std::mt19937_64 rng(config.sample_seed);
    std::vector<RenderedPromptRecord> out;
    for (const auto& p : prompts) {
      for (auto kind : modes) {
        RenderedPromptRecord r;
        r.prompt_id = p.id;
        r.task = p.task.empty() ? config.task : p.task;
        r.requested_mode = PromptMode{kind, options.diversity_suffix};
        r.prompt = kind == PromptModeKind::mixed_template
                       ? table.render_mixed(p.instruction, family, config.mixed_pool, options.diversity_suffix, rng)
                       : table.render(p.instruction, family, r.requested_mode);
        out.push_back(std::move(r));
      }
    }
    write_output(options.out, serialize_rendered(out));
    log << "render: " << out.size() << " prompts written\n";
    return kExitOk;
  });
}

// -- generate -----------------------------------------------------------------

int cmd_generate(const Config& config, const GenerateOptions& options, std::ostream& log) {
  return guarded(log, "generate", [&] {
    require_path(options.rendered, "--rendered");
    require_path(options.out, "--out");
    if (options.k < 1) throw ConfigError("--k must be >= 1");
    SamplingParams sampling = config.sampling;
    if (options.temperature) sampling.temperature = *options.temperature;
    if (options.top_p) sampling.top_p = *options.top_p;
    if (options.max_tokens) sampling.max_tokens = *options.max_tokens;
    if (options.logprobs) sampling.logprob_top_k = *options.logprobs;
    if (options.seed) sampling.seed = *options.seed;
    try {
      sampling.validate();
    } catch (const ValidationError& e) {
      throw ConfigError(e.what());
    }

    const auto rendered = load_rendered(options.rendered);
    if (rendered.empty()) throw ConfigError(options.rendered.string() + " has no rendered prompts");
    const auto file_hash = content_hash(read_text_file(options.rendered));
    const CompletionClient client(config.gen_client());
    const DiskCache cache(config.cache_dir / "generations");

    // One run per requested mode, in first-appearance order.
    std::vector<std::string> mode_order;
    std::map<std::string, std::vector<RenderedPromptRecord>> groups;
    for (const auto& r : rendered) {
      const auto key = to_string(r.requested_mode);
      auto [it, inserted] = groups.try_emplace(key);
      if (inserted) mode_order.push_back(key);
      it->second.push_back(r);
    }

    const auto manifest_path = manifest_path_for(options.out);
    const auto previous = load_manifests(manifest_path);
    std::vector<GenerationRecord> records;
    std::vector<RunManifest> manifests;
    std::vector<Gap> gaps;
    std::size_t hits = 0, requested = 0;
    for (const auto& key : mode_order) {
      const auto& group = groups.at(key);
      const auto mode = group.front().requested_mode;
      RunManifest m;
      m.run_id = compute_run_id(config.model_name, mode, sampling, file_hash, config.template_revision);
      auto prev = previous.find(m.run_id);
      m.created_at = prev != previous.end() ? prev->second.created_at : utc_timestamp();
      m.model_family = group.front().prompt.family;
      m.model_name = config.model_name;
      m.mode = mode;
      m.sampling = sampling;
      m.prompt_file_hash = file_hash;
      m.template_revision = config.template_revision;
      m.endpoint_url = redact_url(config.endpoint_url);
      m.settings = {{"k", std::to_string(options.k)},
                    {"diversity_clause", config.diversity_clause},
                    {"use_n_parameter", config.use_n_parameter ? "true" : "false"},
                    {"rendered_file", options.rendered.filename().string()}};

      BatchOptions batch;
      batch.k = options.k;
      batch.parallelism = config.parallelism;
      batch.run_id = m.run_id;
      batch.cache = &cache;
      auto result = generate_batch(client, group, sampling, batch);
      hits += result.cache_hits;
      requested += result.samples_requested;
      for (auto& f : result.failures) gaps.push_back({"generate", key + "/" + f.prompt_id, f.message});
      for (auto& r : result.records) records.push_back(std::move(r));
      manifests.push_back(std::move(m));
    }

    write_generations(records, options.out);
    std::string manifest_text;
    for (const auto& m : manifests) manifest_text += dump_compact(json(m)) + "\n";
    write_text_file(manifest_path, manifest_text);
    write_gaps(options.out, gaps);
    log << "generate: " << records.size() << " records (" << hits << " cached, " << requested << " requested, "
        << client.telemetry().requests.load() << " HTTP requests)\n";
    if (!gaps.empty()) {
      log << "generate: " << gaps.size() << " prompts failed; see " << gaps_path_for(options.out).string() << "\n";
      return kExitPartial;
    }
    return kExitOk;
  });
}

// -- embed --------------------------------------------------------------------

int cmd_embed(const Config& config, const EmbedOptions& options, std::ostream& log) {
  return guarded(log, "embed", [&] {
    require_path(options.generations, "--generations");
    require_path(options.out, "--out");
    const auto records = load_generations(options.generations);
    if (records.empty()) throw ConfigError(options.generations.string() + " has no generations");
    const DiskCache cache(config.cache_dir / "embeddings");
    const EmbeddingClient client(config.embed_client(), &cache);

    std::vector<std::string> texts;
    std::set<std::string> seen;
    for (const auto& r : records)
      if (seen.insert(text_hash(r.text)).second) texts.push_back(r.text);

    std::vector<EmbeddingVector> vectors;
    try {
      vectors = client.embed(texts);
    } catch (const ValidationError&) {
      throw;
    } catch (const SchemaError&) {
      throw;
    } catch (const std::exception& e) {
      write_gaps(options.out, {{"embed", options.generations.string(), e.what()}});
      log << "embed: endpoint failure: " << e.what() << "\n";
      return kExitPartial;
    }
    write_embeddings(vectors, options.out);
    write_gaps(options.out, {});
    log << "embed: " << vectors.size() << " vectors (" << client.telemetry().requests.load() << " HTTP requests)\n";
    return kExitOk;
  });
}

// -- label --------------------------------------------------------------------

int cmd_label(const Config& config, const LabelOptions& options, std::ostream& log) {
  return guarded(log, "label", [&] {
    require_path(options.generations, "--generations");
    require_path(options.out, "--out");
    const auto method = options.method.empty() ? config.label_method : options.method;
    if (method != "keyword" && method != "llm")
      throw ConfigError("unknown label method '" + method + "' (valid: llm, keyword)");
    const auto records = load_generations(options.generations);
    if (records.empty()) throw ConfigError(options.generations.string() + " has no generations");

    std::vector<Gap> gaps;
    std::vector<LabelRecord> labels;
    if (method == "keyword") {
      const auto taxonomy = options.taxonomy.empty() ? config.taxonomy() : load_taxonomy(options.taxonomy);
      labels = label_keyword(records, taxonomy);
    } else {
      const DiskCache cache(config.cache_dir / "labels");
      const LlmLabeler labeler(config.labeler(), &cache);
      auto result = labeler.extract(records);
      labels = std::move(result.labels);
      for (const auto& f : result.failures)
        gaps.push_back({"label", f.prompt_id + "#" + std::to_string(f.sample_index), f.message});
      log << "label: " << labeler.telemetry().requests.load() << " HTTP requests\n";
    }
    write_output(options.out, serialize_labels(labels));
    write_gaps(options.out, gaps);
    log << "label: " << labels.size() << " labels (" << method << ")\n";
    if (!gaps.empty()) {
      log << "label: " << gaps.size() << " items failed; see " << gaps_path_for(options.out).string() << "\n";
      return kExitPartial;
    }
    return kExitOk;
  });
}

// -- score --------------------------------------------------------------------

namespace {

struct ScoreRequest {
  bool semantic = false, topic = false, structural = false, distinct = false, self_bleu = false, entropy = false;
};

ScoreRequest parse_metric_list(const ScoreOptions& options, const std::vector<GenerationRecord>& records) {
  ScoreRequest req;
  if (options.metrics.empty()) {
    std::map<std::pair<std::string, std::string>, std::size_t> per_prompt;
    for (const auto& r : records) ++per_prompt[{mode_label(r), r.prompt_id}];
    const bool multi = std::all_of(per_prompt.begin(), per_prompt.end(), [](const auto& kv) { return kv.second >= 2; });
    req.semantic = options.embeddings.has_value() && multi;
    req.topic = options.labels.has_value();
    req.structural = req.self_bleu = multi;
    req.distinct = true;
    req.entropy = std::all_of(records.begin(), records.end(), [](const GenerationRecord& r) {
      return r.token_logprobs && r.sampling.logprob_top_k > 0;
    });
    return req;
  }
  for (const auto& m : options.metrics) {
    if (m == "semantic_diversity") req.semantic = true;
    else if (m == "topic_diversity") req.topic = true;
    else if (m == "structural") req.structural = true;
    else if (m == "distinct") req.distinct = true;
    else if (m == "self_bleu") req.self_bleu = true;
    else if (m == "entropy") req.entropy = true;
    else {
      std::string valid;
      for (auto n : kScoreMetricNames) valid += (valid.empty() ? "" : ", ") + std::string(n);
      throw ConfigError("unknown metric '" + m + "' (valid: " + valid + ")");
    }
  }
  if (req.semantic && !options.embeddings)
    throw ConfigError("semantic_diversity needs embeddings; pass --embeddings (see the embed command)");
  if (req.topic && !options.labels)
    throw ConfigError("topic_diversity needs labels; pass --labels (see the label command)");
  return req;
}

json per_prompt_json(const std::vector<std::pair<std::string, double>>& values) {
  json out = json::array();
  for (const auto& [id, v] : values) out.push_back(json{{"prompt_id", id}, {"value", v}});
  return out;
}

/// Unweighted mean over prompts of `f(texts)`.
template <class F>
std::pair<double, std::vector<std::pair<std::string, double>>> per_prompt_mean(
    const std::vector<metrics::PromptResponses>& prompts, F&& f) {
  std::vector<std::pair<std::string, double>> values;
  double sum = 0.0;
  for (const auto& p : prompts) {
    double v = 0.0;
    try {
      v = f(p.texts);
    } catch (const ValidationError& e) {
      throw ValidationError("prompt " + p.prompt_id + ": " + e.what());
    }
    values.emplace_back(p.prompt_id, v);
    sum += v;
  }
  return {sum / static_cast<double>(prompts.size()), std::move(values)};
}

}  // namespace

int cmd_score(const Config& config, const ScoreOptions& options, std::ostream& log) {
  return guarded(log, "score", [&] {
    require_path(options.generations, "--generations");
    require_path(options.out, "--out");
    if (options.entropy_steps < 1) throw ConfigError("--steps must be >= 1");
    const auto records = load_generations(options.generations);
    if (records.empty()) throw ConfigError(options.generations.string() + " has no generations");
    const auto req = parse_metric_list(options, records);

    std::optional<EmbeddingSet> embeddings;
    if (req.semantic) embeddings = load_embeddings(*options.embeddings);

    std::map<std::pair<std::string, int>, std::string> label_of;
    if (req.topic) {
      std::set<std::pair<std::string, int>> keys;
      for (const auto& r : records)
        if (!keys.insert({r.prompt_id, r.sample_index}).second)
          throw ConfigError("labels are joined on (prompt_id, sample_index), which repeats in " +
                            options.generations.string() + " (" + r.prompt_id + "#" +
                            std::to_string(r.sample_index) + "); label and score each mode's generations separately");
      for (const auto& l : load_labels(*options.labels)) label_of[{l.prompt_id, l.sample_index}] = l.label;
    }

    const auto manifests = load_manifests(manifest_path_for(options.generations));
    std::vector<std::string> mode_order;
    std::map<std::string, std::vector<GenerationRecord>> by_mode;
    for (const auto& r : records) {
      auto [it, inserted] = by_mode.try_emplace(mode_label(r));
      if (inserted) mode_order.push_back(it->first);
      it->second.push_back(r);
    }

    std::vector<Gap> gaps;
    std::string out_text;
    for (const auto& mode : mode_order) {
      const auto& group = by_mode.at(mode);
      report::ReportCell cell;
      cell.model_family = std::string(to_string(group.front().model_family));
      cell.model_name = config.model_name;
      cell.task = options.task.empty() ? (config.task.empty() ? "default" : config.task) : options.task;
      cell.mode = mode;
      cell.temperature = group.front().sampling.temperature;
      for (const auto& r : group)
        if (r.sampling.temperature != cell.temperature)
          throw ValidationError("mode " + mode + " mixes temperatures; score each temperature separately");
      for (const auto& [id, m] : manifests) {
        if (to_string(m.mode) == mode && m.sampling == group.front().sampling) {
          cell.run_id = id;
          if (cell.model_name.empty()) cell.model_name = m.model_name;
        }
      }
      if (cell.model_name.empty()) cell.model_name = "unknown";

      const auto prompts = metrics::group_by_prompt(group);
      json details = json::array();
      auto attempt = [&](std::string_view name, auto&& fn) {
        try {
          fn();
        } catch (const ValidationError& e) {
          gaps.push_back({"score", mode + "/" + std::string(name), e.what()});
          log << "score: " << mode << ": " << name << " skipped: " << e.what() << "\n";
        }
      };

      if (req.semantic) {
        attempt(report::kSemanticDiversity, [&] {
          std::vector<metrics::PromptEmbeddings> pe;
          for (const auto& p : prompts) {
            metrics::PromptEmbeddings e{p.prompt_id, {}};
            for (const auto& t : p.texts) {
              const auto* v = embeddings->find(text_hash(t));
              if (!v) throw ValidationError("no embedding for a response of prompt " + p.prompt_id);
              e.vectors.push_back(v->values);
            }
            pe.push_back(std::move(e));
          }
          const auto s = metrics::semantic_diversity(pe);
          cell.metrics[std::string(report::kSemanticDiversity)] = s.value;
          details.push_back(metrics::metric_json(
              report::kSemanticDiversity, s.value,
              {{"num_prompts", s.num_prompts}, {"responses_per_prompt", s.responses_per_prompt}},
              per_prompt_json(s.per_prompt)));
        });
      }
      if (req.topic) {
        attempt(report::kTopicDiversity, [&] {
          std::vector<LabelRecord> labels;
          for (const auto& r : group) {
            auto it = label_of.find({r.prompt_id, r.sample_index});
            if (it == label_of.end())
              throw ValidationError("no label for " + r.prompt_id + "#" + std::to_string(r.sample_index));
            labels.push_back({r.prompt_id, r.sample_index, it->second, LabelMethod::keyword});
          }
          const auto dist = label_distribution(labels);
          const auto t = metrics::topic_diversity(dist);
          cell.metrics[std::string(report::kTopicDiversity)] = t.value;
          details.push_back(metrics::metric_json(
              report::kTopicDiversity, t.value,
              {{"distinct_labels", t.distinct_labels}, {"total", t.total}, {"counts", dist.counts}}));
        });
      }
      if (req.structural) {
        attempt("structural", [&] {
          const auto s = metrics::structural_diversity(prompts);
          const std::pair<std::string_view, double> parts[] = {{report::kStdTokenCount, s.std_token_count},
                                                               {report::kStdSentenceCount, s.std_sentence_count},
                                                               {report::kStdContentWordRatio, s.std_content_word_ratio}};
          for (const auto& [name, value] : parts) {
            cell.metrics[std::string(name)] = value;
            details.push_back(metrics::metric_json(name, value, {{"num_prompts", prompts.size()}}));
          }
        });
      }
      if (req.distinct) {
        for (int n = 2; n <= 5; ++n) {
          const auto name = report::distinct_metric_name(n);
          attempt(name, [&] {
            auto [value, per] = per_prompt_mean(prompts, [n](const auto& texts) { return metrics::distinct_n(texts, n); });
            cell.metrics[name] = value;
            details.push_back(metrics::metric_json(name, value, {{"n", n}}, per_prompt_json(per)));
          });
        }
      }
      if (req.self_bleu) {
        attempt(report::kSelfBleu, [&] {
          auto [value, per] = per_prompt_mean(prompts, [](const auto& texts) { return metrics::self_bleu(texts); });
          cell.metrics[std::string(report::kSelfBleu)] = value;
          details.push_back(metrics::metric_json(report::kSelfBleu, value, {{"max_order", metrics::kBleuMaxOrder}},
                                                 per_prompt_json(per)));
        });
      }
      if (req.entropy) {
        attempt("entropy_trajectory", [&] {
          const auto traj = metrics::entropy_trajectory(group, options.entropy_steps);
          auto j = metrics::to_json(traj);
          j["metric"] = "entropy_trajectory";
          details.push_back(std::move(j));
        });
      }

      json line = cell;
      line["details"] = std::move(details);
      out_text += dump_compact(line) + "\n";
    }
    write_output(options.out, out_text);
    if (options.out != "-") write_gaps(options.out, gaps);
    log << "score: " << mode_order.size() << " cells written\n";
    return gaps.empty() ? kExitOk : kExitPartial;
  });
}

// -- report -------------------------------------------------------------------

int cmd_report(const Config& config, const ReportOptions& options, std::ostream& log) {
  return guarded(log, "report", [&] {
    if (options.cells.empty()) throw ConfigError("--cells needs at least one file");
    require_path(options.out, "--out");
    const auto format = report::parse_format(options.format);
    if (!format) throw ConfigError("unknown format '" + options.format + "' (valid: json, csv, markdown)");
    const double tau = options.tau.value_or(config.tau);
    if (!(tau > 0.0 && tau < 1.0)) throw ConfigError("--tau must be in (0, 1)");
    std::vector<report::ReportCell> cells;
    for (const auto& path : options.cells)
      for (auto& c : report::load_cells(path)) cells.push_back(std::move(c));
    const auto rep = report::build_report(cells, options.pairing, tau);
    write_output(options.out, report::emit(rep, *format));
    if (options.series_out) {
      const auto series = report::temperature_series(cells);
      write_text_file(*options.series_out, report::to_json(series).dump(2) + "\n");
    }
    log << "report: " << rep.rows.size() << " comparison rows, " << rep.gaps.size() << " gaps\n";
    return kExitOk;
  });
}

// -- protocol -----------------------------------------------------------------

int cmd_protocol(const Config& config, const ProtocolOptions& options, std::ostream& log) {
  std::optional<Preset> preset;
  int n = 0, k = 0, steps = 0;
  fs::path dir;
  PromptSet sampled;
  const int setup = guarded(log, "protocol", [&] {
    preset = parse_preset(options.preset);
    if (!preset)
      throw ConfigError("unknown preset '" + options.preset +
                        "' (valid: paper-commonsense, paper-openended, paper-entropy)");
    const auto d = preset_defaults(*preset);
    n = options.n.value_or(d.n);
    k = options.k.value_or(d.k);
    steps = options.steps.value_or(d.steps);
    if (n < 1 || k < 1 || steps < 1) throw ConfigError("--n, --k and --steps must be >= 1");
    if (config.prompts_path.empty()) throw ConfigError("prompts_path is not configured");
    if (!config.model_family) throw ConfigError("model_family is not configured");
    config.gen_client();
    if (*preset == Preset::commonsense) config.embed_client();
    if (*preset == Preset::openended && config.label_method == "llm") config.labeler();
    dir = options.out_dir.empty() ? config.output_dir / std::string(to_string(*preset)) : options.out_dir;
    sampled = sample_prompts(load_prompts(config.prompts_path), static_cast<std::size_t>(n), config.sample_seed);
    fs::create_directories(dir);
    write_prompts(sampled, dir / "prompts.jsonl");
    write_text_file(dir / "config.json", to_json(config).dump(2) + "\n");
    return kExitOk;
  });
  if (setup != kExitOk) return setup;

  Config run = config;
  run.prompts_path = dir / "prompts.jsonl";
  if (options.temperature) run.sampling.temperature = *options.temperature;
  if (*preset == Preset::entropy) {
    if (run.sampling.logprob_top_k == 0) run.sampling.logprob_top_k = 5;
    run.sampling.max_tokens = steps;
  }

  int worst = kExitOk;
  auto stage = [&](std::string_view name, const std::string& mode, int code) {
    if (code != kExitOk) log << "protocol: stage '" << name << "' (" << mode << ") exited with " << code << "\n";
    worst = std::max(worst, code);
    return code != kExitInvalid;
  };

  std::vector<fs::path> cell_files;
  const std::string modes[] = {"simple_steer", "full_template"};
  for (const auto& mode : modes) {
    const auto rendered = dir / ("rendered_" + mode + ".jsonl");
    const auto gens = dir / ("generations_" + mode + ".jsonl");
    const auto cells = dir / ("cells_" + mode + ".jsonl");

    if (!stage("render", mode, cmd_render(run, {"", mode, false, run.prompts_path, rendered}, log)))
      return kExitInvalid;

    GenerateOptions g;
    g.rendered = rendered;
    g.out = gens;
    g.k = k;
    if (!stage("generate", mode, cmd_generate(run, g, log))) return kExitInvalid;
    if (!fs::exists(gens)) continue;

    ScoreOptions s;
    s.generations = gens;
    s.out = cells;
    s.entropy_steps = steps;
    if (*preset == Preset::commonsense) {
      const auto emb = dir / ("embeddings_" + mode + ".jsonl");
      const int code = cmd_embed(run, {gens, emb}, log);
      if (!stage("embed", mode, code)) return kExitInvalid;
      if (code == kExitOk) {
        s.embeddings = emb;
        s.metrics = {"semantic_diversity"};
      }
      s.metrics.insert(s.metrics.end(), {"structural", "distinct", "self_bleu"});
    } else if (*preset == Preset::openended) {
      const auto labels = dir / ("labels_" + mode + ".jsonl");
      const int code = cmd_label(run, {gens, "", {}, labels}, log);
      if (!stage("label", mode, code)) return kExitInvalid;
      if (code == kExitOk) {
        s.labels = labels;
        s.metrics = {"topic_diversity"};
      }
      s.metrics.insert(s.metrics.end(), {"distinct", "self_bleu", "structural"});
    } else {
      s.metrics = {"entropy"};
    }
    if (!stage("score", mode, cmd_score(run, s, log))) return kExitInvalid;
    if (!fs::exists(cells)) continue;
    cell_files.push_back(cells);

    if (*preset == Preset::entropy) {
      const int code = guarded(log, "protocol", [&] {
        read_jsonl(cells, [&](const json& v, std::size_t) {
          for (const auto& d : v.at("details"))
            if (d.value("metric", "") == "entropy_trajectory") {
              json t = d;
              t.erase("metric");
              write_text_file(dir / ("entropy_" + mode + ".json"), t.dump(2) + "\n");
            }
        });
        return kExitOk;
      });
      stage("entropy", mode, code);
    }
  }

  if (cell_files.empty()) {
    log << "protocol: no cells to report\n";
    return std::max(worst, kExitPartial);
  }
  for (const auto& [format, file] : {std::pair{"markdown", "report.md"}, {"json", "report.json"}, {"csv", "report.csv"}}) {
    ReportOptions r;
    r.cells = cell_files;
    r.format = format;
    r.out = dir / file;
    if (!stage("report", format, cmd_report(run, r, log))) return kExitInvalid;
  }
  log << "protocol: " << to_string(*preset) << " finished in " << dir.string() << " (exit " << worst << ")\n";
  return worst;
}

}  // namespace divprobe
