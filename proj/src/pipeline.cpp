#include "unirobust/pipeline.hpp"

#include <chrono>
#include <ctime>
#include <fstream>

#include <nlohmann/json.hpp>

#include "unirobust/checkpoint.hpp"
#include "unirobust/error.hpp"
#include "unirobust/synthetic.hpp"

namespace unirobust {

namespace fs = std::filesystem;

const std::vector<Trim>& ablation_trims() {
  static const std::vector<Trim> trims{{"baseline", LossKind::cross_entropy, false},
                                       {"unitary", LossKind::cross_entropy, true},
                                       {"multi_margin", LossKind::multi_margin, false},
                                       {"unitary_multi_margin", LossKind::multi_margin, true}};
  return trims;
}

const std::vector<std::string>& pipeline_commands() {
  static const std::vector<std::string> commands{"pretrain", "finetune", "attack", "analyze",
                                                 "sweep",    "ablation", "synth"};
  return commands;
}

std::vector<LabeledExample> to_examples(const Corpus& corpus, const Tokenizer& tokenizer) {
  std::vector<LabeledExample> out;
  out.reserve(corpus.samples.size());
  for (const auto& s : corpus.samples) {
    if (!s.label) fail(ErrorCode::label, "unlabeled sample in a classification corpus");
    out.push_back({tokenizer.encode(s.text), *s.label});
  }
  return out;
}

std::vector<LabeledText> to_texts(const Corpus& corpus, std::size_t limit) {
  std::vector<LabeledText> out;
  for (const auto& s : corpus.samples) {
    if (out.size() >= limit) break;
    if (!s.label) fail(ErrorCode::label, "unlabeled sample in a classification corpus");
    out.push_back({s.text, *s.label});
  }
  return out;
}

namespace {

std::ofstream open_out(const fs::path& path) {
  fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::trunc);
  if (!out) fail(ErrorCode::io, "cannot write " + path.string());
  return out;
}

void require(const fs::path& path, const char* stage) {
  if (!fs::exists(path)) {
    fail(ErrorCode::stage_dependency, "missing " + path.string() + " (run `" + stage + "` first)");
  }
}

Corpus labeled(const fs::path& path, const RunConfig& c) {
  if (path.empty()) fail(ErrorCode::config, "data.train and data.test must be set");
  return ingest(path, Schema::classification, c.data.num_classes);
}

Tokenizer load_vocab(const Layout& layout, const RunConfig& c) {
  require(layout.vocab(), "pretrain");
  return Tokenizer::load(layout.vocab(), c.model.max_seq_len);
}

Model load_model(const fs::path& path, const char* stage, const RunConfig& c) {
  require(path, stage);
  Model model = load_checkpoint(path);
  if (model.config().num_classes != c.data.num_classes) {
    fail(ErrorCode::config, "checkpoint has " + std::to_string(model.config().num_classes) +
                                " classes but data.num_classes is " + std::to_string(c.data.num_classes));
  }
  return model;
}

std::optional<SynonymTable> load_synonyms(const RunConfig& c) {
  bool needed = false;
  for (auto k : c.recipes) needed = needed || k == AttackKind::thesaurus_synonym;
  if (!needed) return std::nullopt;
  if (c.data.synonyms.empty()) fail(ErrorCode::config, "data.synonyms must be set for thesaurus_synonym attacks");
  return SynonymTable::load(c.data.synonyms);
}

std::string fmt(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.6f", v);
  return buf;
}

void stage_synth(const RunConfig& c) {
  if (c.data.train.empty() || c.data.test.empty() || c.data.synonyms.empty()) {
    fail(ErrorCode::config, "synth needs data.train, data.test and data.synonyms");
  }
  SyntheticSpec spec;
  spec.classes = c.data.num_classes;
  spec.seed = c.seed;
  const auto data = generate_synthetic(spec);
  write_corpus(data.train, c.data.train);
  write_corpus(data.test, c.data.test);
  data.synonyms.save(c.data.synonyms);
}

void stage_pretrain(const RunConfig& c, const Layout& layout) {
  const Corpus texts = c.data.pretrain.empty() ? labeled(c.data.train, c)
                                               : ingest(c.data.pretrain, Schema::unlabeled);
  const Tokenizer tokenizer = build_vocab(texts, c.data.max_vocab, c.model.max_seq_len);
  ModelConfig mc = c.model;
  mc.vocab_size = tokenizer.size();
  mc.num_classes = c.data.num_classes;
  Model model(mc, c.seed);
  std::vector<std::vector<int>> corpus;
  for (const auto& s : texts.samples) corpus.push_back(tokenizer.encode(s.text));
  const auto log = pretrain(model, corpus, c.pretrain);
  tokenizer.save(layout.vocab());
  save_checkpoint(model, layout.pretrained());
  auto out = open_out(layout.logs() / "pretrain.ndjson");
  log.write_ndjson(out);
}

void stage_finetune(const RunConfig& c, const Layout& layout) {
  const Tokenizer tokenizer = load_vocab(layout, c);
  Model model = load_model(layout.pretrained(), "pretrain", c);
  const auto train = to_examples(labeled(c.data.train, c), tokenizer);
  const auto log = finetune(model, train, c.finetune);
  save_checkpoint(model, layout.finetuned());
  auto out = open_out(layout.logs() / "finetune.ndjson");
  log.write_ndjson(out);
}

void stage_attack(const RunConfig& c, const Layout& layout) {
  const Tokenizer tokenizer = load_vocab(layout, c);
  const Model model = load_model(layout.finetuned(), "finetune", c);
  const Model reference = load_model(layout.pretrained(), "pretrain", c);
  const auto samples = to_texts(labeled(c.data.test, c), c.data.attack_samples);
  const auto synonyms = load_synonyms(c);
  const ModelVictim victim(model, tokenizer);
  const EmbeddingNeighbors neighbors(reference.word_embeddings(), tokenizer);
  const AttackResources resources{&neighbors, synonyms ? &*synonyms : nullptr};
  auto summary = open_out(layout.reports() / "attack_summary.csv");
  summary << "recipe,pre_acc,post_acc,skipped,successes,mean_queries\n";
  for (const auto& recipe : c.recipe_list()) {
    const auto report = evaluate_robustness(victim, samples, recipe, resources, c.seed, c.workers);
    auto records = open_out(layout.reports() / (std::string("attack_") + to_string(recipe.kind) + ".ndjson"));
    write_outcomes_ndjson(report.outcomes, recipe, records);
    std::size_t skipped = 0, successes = 0, queries = 0;
    for (const auto& o : report.outcomes) {
      skipped += o.skipped;
      successes += o.success;
      queries += o.queries_used;
    }
    summary << to_string(recipe.kind) << ',' << fmt(report.pre_acc) << ',' << fmt(report.post_acc) << ',' << skipped
            << ',' << successes << ',' << fmt(static_cast<double>(queries) / static_cast<double>(samples.size()))
            << '\n';
  }
}

void stage_analyze(const RunConfig& c, const Layout& layout) {
  const Tokenizer tokenizer = load_vocab(layout, c);
  const Model model = load_model(layout.finetuned(), "finetune", c);
  const Corpus test = labeled(c.data.test, c);
  const auto stats = boundary_stats(model, to_examples(test, tokenizer));
  auto b = open_out(layout.reports() / "boundary_stats.csv");
  write_boundary_csv(stats, b);

  // Per-layer drift on the texts an embedding-synonym attack actually edited.
  const auto samples = to_texts(test, c.data.attack_samples);
  const Model reference = load_model(layout.pretrained(), "pretrain", c);
  const ModelVictim victim(model, tokenizer);
  const EmbeddingNeighbors neighbors(reference.word_embeddings(), tokenizer);
  AttackRecipe recipe = c.attack;
  recipe.kind = AttackKind::embed_synonym;
  const auto report = evaluate_robustness(victim, samples, recipe, {&neighbors, nullptr}, c.seed, c.workers);
  std::vector<std::string> clean, attacked;
  for (const auto& o : report.outcomes) {
    if (o.skipped || o.edit_positions.empty()) continue;
    clean.push_back(o.original_text);
    attacked.push_back(o.final_text);
  }
  const auto curve = propagation_curve(model, tokenizer, clean, attacked);
  auto p = open_out(layout.reports() / "propagation.csv");
  write_propagation_csv(curve, p);
}

struct Loaded {
  Tokenizer tokenizer;
  Model pretrained;
  std::vector<LabeledExample> train;
  std::vector<LabeledText> samples;
  std::optional<SynonymTable> synonyms;
};

Loaded load_for_evaluation(const RunConfig& c, const Layout& layout) {
  Tokenizer tokenizer = load_vocab(layout, c);
  Model pretrained = load_model(layout.pretrained(), "pretrain", c);
  auto train = to_examples(labeled(c.data.train, c), tokenizer);
  auto samples = to_texts(labeled(c.data.test, c), c.data.attack_samples);
  return {std::move(tokenizer), std::move(pretrained), std::move(train), std::move(samples), load_synonyms(c)};
}

EvaluationSetup setup_for(const Loaded& d, const RunConfig& c) {
  EvaluationSetup s;
  s.pretrained = &d.pretrained;
  s.tokenizer = &d.tokenizer;
  s.train = &d.train;
  s.attack_samples = &d.samples;
  s.synonyms = d.synonyms ? &*d.synonyms : nullptr;
  s.recipes = c.recipe_list();
  s.attack_seed = c.seed;
  s.workers = c.workers;
  return s;
}

void stage_sweep(const RunConfig& c, const Layout& layout) {
  const auto d = load_for_evaluation(c, layout);
  const auto rows = margin_sweep(setup_for(d, c), c.finetune, c.epsilons);
  auto out = open_out(layout.reports() / "sweep.csv");
  write_sweep_csv(rows, out);
}

void stage_ablation(const RunConfig& c, const Layout& layout) {
  const auto d = load_for_evaluation(c, layout);
  const auto setup = setup_for(d, c);
  auto out = open_out(layout.reports() / "ablation.csv");
  out << "model,pre_acc,post_acc_typo,post_acc_embed,post_acc_thesaurus\n";
  for (const auto& trim : ablation_trims()) {
    TrainPlan plan = c.finetune;
    plan.loss = trim.loss;
    plan.unitary_enabled = trim.unitary;
    const auto r = evaluate_trim(setup, plan);
    auto post = [&r](AttackKind k) {
      const auto it = r.post_acc.find(k);
      return it == r.post_acc.end() ? std::string("nan") : fmt(it->second);
    };
    out << trim.name << ',' << fmt(r.pre_acc) << ',' << post(AttackKind::typo) << ',' << post(AttackKind::embed_synonym)
        << ',' << post(AttackKind::thesaurus_synonym) << '\n';
  }
}

void write_meta(const std::string& command, const RunConfig& c, const Layout& layout) {
  const auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  char stamp[32];
  std::strftime(stamp, sizeof stamp, "%Y-%m-%dT%H:%M:%SZ", std::gmtime(&now));
  nlohmann::json meta = {{"command", command}, {"seed", c.seed}, {"finished_at", stamp}};
  auto out = open_out(layout.root / "run_meta.json");
  out << meta.dump(2) << '\n';
}

}  // namespace

void run_stage(const std::string& command, const RunConfig& config) {
  const Layout layout{config.out};
  if (command == "synth") {
    stage_synth(config);
    return;
  }
  if (command == "pretrain") {
    stage_pretrain(config, layout);
  } else if (command == "finetune") {
    stage_finetune(config, layout);
  } else if (command == "attack") {
    stage_attack(config, layout);
  } else if (command == "analyze") {
    stage_analyze(config, layout);
  } else if (command == "sweep") {
    stage_sweep(config, layout);
  } else if (command == "ablation") {
    stage_ablation(config, layout);
  } else {
    fail(ErrorCode::usage, "unknown command '" + command + "'");
  }
  write_meta(command, config, layout);
}

void run(const std::string& command, const fs::path& config_path, const RunOptions& options) {
  if (std::find(pipeline_commands().begin(), pipeline_commands().end(), command) == pipeline_commands().end()) {
    fail(ErrorCode::usage, "unknown command '" + command + "'");
  }
  RunConfig config = load_config(config_path, options.overrides);
  if (options.seed) config.set_seed(*options.seed);
  if (options.out) config.out = *options.out;
  run_stage(command, config);
}

}  // namespace unirobust
