// divprobe: measure output diversity of instruction-tuned models across
// prompt templates.

#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "divprobe/error.hpp"
#include "divprobe/pipeline.hpp"

namespace {

using namespace divprobe;

template <class T>
void optional_flag(CLI::App* app, const std::string& name, std::optional<T>& target, const std::string& help) {
  app->add_option_function<T>(name, [&target](const T& v) { target = v; }, help);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"divprobe: diversity-collapse measurement for instruction-tuned language models"};
  app.require_subcommand(1);
  std::string config_path;
  app.add_option("-c,--config", config_path, "Experiment config (JSON). API keys come from DIVPROBE_API_KEY, "
                                             "DIVPROBE_EMBEDDING_API_KEY and DIVPROBE_LABEL_API_KEY");

  RenderOptions render;
  auto* r = app.add_subcommand("render", "Render prompts under one or all prompt modes");
  r->add_option("--family", render.family, "Model family: llama, qwen, tulu, mistral, phi (default: config)");
  r->add_option("--mode", render.mode,
                "Prompt mode: all, full_template, fake_template, minimum_dialog, simple_steer, mixed_template")
      ->capture_default_str();
  r->add_flag("--diversity", render.diversity_suffix, "Append the configured creativity clause");
  r->add_option("--prompts", render.prompts, "Prompt JSONL (default: config prompts_path)");
  r->add_option("--out", render.out, "Output rendered JSONL, or - for stdout")->required();

  GenerateOptions gen;
  auto* g = app.add_subcommand("generate", "Sample k completions per rendered prompt");
  g->add_option("--rendered", gen.rendered, "Rendered prompt JSONL")->required();
  g->add_option("--k", gen.k, "Samples per prompt")->capture_default_str();
  optional_flag(g, "--temperature", gen.temperature, "Sampling temperature (default: config, 1.0)");
  optional_flag(g, "--top-p", gen.top_p, "Nucleus mass (default: config, 0.9)");
  optional_flag(g, "--max-tokens", gen.max_tokens, "Generation length cap (default: config, 512)");
  optional_flag(g, "--logprobs", gen.logprobs, "Request top-k logprobs per step");
  optional_flag(g, "--seed", gen.seed, "Sampling seed sent to the server");
  g->add_option("--out", gen.out, "Output generations JSONL")->required();

  EmbedOptions emb;
  auto* e = app.add_subcommand("embed", "Embed generation texts (cached)");
  e->add_option("--generations", emb.generations, "Generations JSONL")->required();
  e->add_option("--out", emb.out, "Output embeddings JSONL")->required();

  LabelOptions lab;
  auto* l = app.add_subcommand("label", "Assign one topic label per generation");
  l->add_option("--generations", lab.generations, "Generations JSONL")->required();
  l->add_option("--method", lab.method, "llm or keyword (default: config label_method)")
      ->check(CLI::IsMember({"llm", "keyword"}));
  l->add_option("--taxonomy", lab.taxonomy, "Keyword taxonomy JSONL (default: built-in news taxonomy)");
  l->add_option("--out", lab.out, "Output labels JSONL, or - for stdout")->required();

  ScoreOptions score;
  std::string embeddings_path, labels_path;
  auto* s = app.add_subcommand("score", "Compute diversity metrics, one report cell per mode");
  s->add_option("--generations", score.generations, "Generations JSONL")->required();
  s->add_option("--embeddings", embeddings_path, "Embeddings JSONL (needed for semantic_diversity)");
  s->add_option("--labels", labels_path, "Labels JSONL (needed for topic_diversity)");
  s->add_option("--metrics", score.metrics,
                "Metric groups: semantic_diversity topic_diversity structural distinct self_bleu entropy "
                "(default: all the inputs allow)");
  s->add_option("--task", score.task, "Task name recorded in the cells (default: config task)");
  s->add_option("--steps", score.entropy_steps, "Steps for the entropy trajectory")->capture_default_str();
  s->add_option("--out", score.out, "Output cells JSONL, or - for stdout")->required();

  ReportOptions rep;
  std::optional<std::string> series_path;
  auto* p = app.add_subcommand("report", "Compare modes and emit a report");
  p->add_option("--cells", rep.cells, "Cell files from score (JSON or JSONL)")->required();
  optional_flag(p, "--tau", rep.tau, "Collapse threshold (default: config tau, 0.2)");
  p->add_option("--format", rep.format, "json, csv or markdown")
      ->check(CLI::IsMember({"json", "csv", "markdown", "md"}))
      ->capture_default_str();
  p->add_option("--baseline-mode", rep.pairing.baseline_mode, "Baseline (simple) side of each pair")
      ->capture_default_str();
  p->add_option("--comparison-mode", rep.pairing.comparison_mode, "Templated side of each pair")
      ->capture_default_str();
  optional_flag(p, "--series-out", series_path, "Also write temperature series JSON here");
  p->add_option("--out", rep.out, "Output file, or - for stdout")->required();

  ProtocolOptions proto;
  auto* q = app.add_subcommand("protocol", "Run a full preset pipeline: render, generate, embed/label, score, report");
  q->add_option("--preset", proto.preset, "paper-commonsense, paper-openended or paper-entropy")
      ->required()
      ->check(CLI::IsMember({"paper-commonsense", "paper-openended", "paper-entropy"}));
  optional_flag(q, "--n", proto.n, "Number of prompts");
  optional_flag(q, "--k", proto.k, "Samples per prompt");
  optional_flag(q, "--steps", proto.steps, "Entropy steps");
  optional_flag(q, "--temperature", proto.temperature, "Sampling temperature");
  q->add_option("--out-dir", proto.out_dir, "Run directory (default: config output_dir/<preset>)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& err) {
    const int code = app.exit(err);
    return code == 0 ? 0 : kExitInvalid;
  }

  Config config;
  try {
    config = config_path.empty() ? default_config() : load_config(config_path);
  } catch (const Error& err) {
    std::cerr << "config: " << err.what() << "\n";
    return kExitInvalid;
  }

  if (!embeddings_path.empty()) score.embeddings = embeddings_path;
  if (!labels_path.empty()) score.labels = labels_path;
  if (series_path) rep.series_out = *series_path;

  if (r->parsed()) return cmd_render(config, render, std::cerr);
  if (g->parsed()) return cmd_generate(config, gen, std::cerr);
  if (e->parsed()) return cmd_embed(config, emb, std::cerr);
  if (l->parsed()) return cmd_label(config, lab, std::cerr);
  if (s->parsed()) return cmd_score(config, score, std::cerr);
  if (p->parsed()) return cmd_report(config, rep, std::cerr);
  return cmd_protocol(config, proto, std::cerr);
}
