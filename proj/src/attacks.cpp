#include "unirobust/attacks.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <numeric>
#include <sstream>
#include <thread>

#include <nlohmann/json.hpp>

#include "unirobust/error.hpp"

namespace unirobust {

const char* to_string(AttackKind kind) noexcept {
  switch (kind) {
    case AttackKind::typo: return "typo";
    case AttackKind::embed_synonym: return "embed_synonym";
    case AttackKind::thesaurus_synonym: return "thesaurus_synonym";
  }
  return "unknown";
}

std::optional<AttackKind> attack_kind_from_string(std::string_view text) noexcept {
  if (text == "typo") return AttackKind::typo;
  if (text == "embed_synonym" || text == "embed") return AttackKind::embed_synonym;
  if (text == "thesaurus_synonym" || text == "thesaurus") return AttackKind::thesaurus_synonym;
  return std::nullopt;
}

void AttackRecipe::validate() const {
  if (!(similarity_threshold >= -1.0 && similarity_threshold <= 1.0)) {
    fail(ErrorCode::config, "attack.similarity_threshold must lie in [-1, 1]");
  }
  if (!(max_perturb_fraction > 0.0 && max_perturb_fraction <= 1.0)) {
    fail(ErrorCode::config, "attack.max_perturb_fraction must lie in (0, 1]");
  }
  if (query_budget && *query_budget == 0) fail(ErrorCode::config, "attack.query_budget must be positive");
}

VictimOutput ModelVictim::query(const std::vector<std::string>& words) const {
  const auto ids = tokenizer_.encode_words(words);
  const auto trace = model_.forward(ids, false);
  return {std::vector<double>(trace.logits.data().begin(), trace.logits.data().end()),
          std::vector<double>(trace.sentence.data().begin(), trace.sentence.data().end())};
}

int argmax(const std::vector<double>& logits) {
  return static_cast<int>(std::max_element(logits.begin(), logits.end()) - logits.begin());
}

double correct_margin(const std::vector<double>& logits, int label) {
  double other = -std::numeric_limits<double>::infinity();
  for (std::size_t j = 0; j < logits.size(); ++j) {
    if (static_cast<int>(j) != label) other = std::max(other, logits[j]);
  }
  return logits[static_cast<std::size_t>(label)] - other;
}

double cosine_similarity(const std::vector<double>& a, const std::vector<double>& b) {
  if (a.size() != b.size()) fail(ErrorCode::dimension, "cosine similarity of vectors with different lengths");
  double dot = 0.0, na = 0.0, nb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    dot += a[i] * b[i];
    na += a[i] * a[i];
    nb += b[i] * b[i];
  }
  if (na == 0.0 || nb == 0.0) fail(ErrorCode::domain, "cosine similarity of a zero vector");
  return std::clamp(dot / (std::sqrt(na) * std::sqrt(nb)), -1.0, 1.0);
}

// ---------------------------------------------------------------------------
// Typos

std::string typo_edit(const std::string& word, TypoOp op, std::size_t char_index, char letter) {
  if (word.empty()) fail(ErrorCode::position, "typo on an empty word");
  std::string out = word;
  switch (op) {
    case TypoOp::insert:
      if (char_index > word.size()) fail(ErrorCode::position, "insert position outside word");
      out.insert(out.begin() + static_cast<std::ptrdiff_t>(char_index), letter);
      break;
    case TypoOp::remove:
      if (word.size() < 2) fail(ErrorCode::position, "cannot delete from a one-character word");
      if (char_index >= word.size()) fail(ErrorCode::position, "delete position outside word");
      out.erase(char_index, 1);
      break;
    case TypoOp::swap:
      if (word.size() < 2) fail(ErrorCode::position, "cannot swap inside a one-character word");
      if (char_index + 1 >= word.size()) fail(ErrorCode::position, "swap position outside word");
      std::swap(out[char_index], out[char_index + 1]);
      break;
    case TypoOp::substitute:
      if (char_index >= word.size()) fail(ErrorCode::position, "substitute position outside word");
      out[char_index] = letter;
      break;
  }
  return out;
}

namespace {

std::string random_typo(const std::string& word, TypoOp op, std::mt19937_64& rng) {
  auto pick = [&rng](std::size_t n) { return std::uniform_int_distribution<std::size_t>(0, n - 1)(rng); };
  auto letter = [&rng](char avoid) {
    char c;
    do {
      c = static_cast<char>('a' + std::uniform_int_distribution<int>(0, 25)(rng));
    } while (c == avoid);
    return c;
  };
  switch (op) {
    case TypoOp::insert: return typo_edit(word, op, pick(word.size() + 1), letter('\0'));
    case TypoOp::remove: return typo_edit(word, op, word.size() < 2 ? 0 : pick(word.size()));
    case TypoOp::swap: return typo_edit(word, op, word.size() < 2 ? 0 : pick(word.size() - 1));
    case TypoOp::substitute: {
      const std::size_t at = pick(word.size());
      return typo_edit(word, op, at, letter(word[at]));
    }
  }
  return word;
}

std::vector<std::string> words_of(const std::string& text, std::size_t position) {
  auto words = split_words(text);
  if (position >= words.size()) {
    fail(ErrorCode::position, "word position " + std::to_string(position) + " outside text of " +
                                  std::to_string(words.size()) + " words");
  }
  return words;
}

std::vector<std::string> substitute_all(std::vector<std::string> words, std::size_t position,
                                        const std::vector<std::string>& replacements) {
  std::vector<std::string> texts;
  for (const auto& r : replacements) {
    words[position] = r;
    texts.push_back(join_words(words));
  }
  return texts;
}

}  // namespace

std::string perturb_typo(const std::string& text, std::size_t position, TypoOp op, std::mt19937_64& rng) {
  auto words = words_of(text, position);
  words[position] = random_typo(words[position], op, rng);
  return join_words(words);
}

std::vector<std::string> typo_candidates(const std::string& word, std::size_t per_op, std::mt19937_64& rng) {
  std::vector<std::string> out;
  for (TypoOp op : {TypoOp::insert, TypoOp::remove, TypoOp::swap, TypoOp::substitute}) {
    if ((op == TypoOp::remove || op == TypoOp::swap) && word.size() < 2) continue;
    for (std::size_t v = 0; v < per_op; ++v) {
      auto cand = random_typo(word, op, rng);
      if (cand != word && std::find(out.begin(), out.end(), cand) == out.end()) out.push_back(std::move(cand));
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Embedding neighbours

EmbeddingNeighbors::EmbeddingNeighbors(const Tensor& word_embeddings, const Tokenizer& tokenizer)
    : tokenizer_(tokenizer) {
  const std::size_t rows = std::min(word_embeddings.rows(), tokenizer.size());
  const std::size_t n = word_embeddings.cols();
  unit_rows_.resize(rows);
  for (std::size_t r = 0; r < rows; ++r) {
    auto& u = unit_rows_[r];
    u.assign(word_embeddings.data().begin() + static_cast<std::ptrdiff_t>(r * n),
             word_embeddings.data().begin() + static_cast<std::ptrdiff_t>((r + 1) * n));
    double norm = 0.0;
    for (double v : u) norm += v * v;
    norm = std::sqrt(norm);
    if (norm > 0.0)
      for (auto& v : u) v /= norm;
  }
}

std::vector<std::string> EmbeddingNeighbors::nearest(const std::string& word, std::size_t k) const {
  if (k == 0 || !tokenizer_.contains(word)) return {};
  const int self = tokenizer_.id(word);
  if (self < special::count || static_cast<std::size_t>(self) >= unit_rows_.size()) return {};
  const auto& q = unit_rows_[static_cast<std::size_t>(self)];
  std::vector<std::pair<double, int>> scored;
  for (std::size_t r = special::count; r < unit_rows_.size(); ++r) {
    if (static_cast<int>(r) == self) continue;
    double dot = 0.0;
    for (std::size_t j = 0; j < q.size(); ++j) dot += q[j] * unit_rows_[r][j];
    scored.emplace_back(dot, static_cast<int>(r));
  }
  const std::size_t take = std::min(k, scored.size());
  std::partial_sort(scored.begin(), scored.begin() + static_cast<std::ptrdiff_t>(take), scored.end(),
                    [](const auto& a, const auto& b) { return a.first != b.first ? a.first > b.first : a.second < b.second; });
  std::vector<std::string> out;
  for (std::size_t i = 0; i < take; ++i) out.push_back(tokenizer_.word(scored[i].second));
  return out;
}

std::vector<std::string> perturb_embed_synonym(const std::string& text, std::size_t position,
                                               const EmbeddingNeighbors& neighbors, std::size_t k) {
  auto words = words_of(text, position);
  return substitute_all(words, position, neighbors.nearest(words[position], k));
}

// ---------------------------------------------------------------------------
// Thesaurus

void SynonymTable::add(const std::string& word, std::vector<std::string> synonyms) {
  if (word.empty()) fail(ErrorCode::config, "synonym table entry with an empty word");
  auto& list = entries_[word];
  for (auto& s : synonyms) {
    if (s == word) fail(ErrorCode::config, "synonym table maps '" + word + "' to itself");
    if (s.empty() || std::find(list.begin(), list.end(), s) != list.end()) continue;
    list.push_back(std::move(s));
  }
}

std::size_t SynonymTable::longest_entry() const noexcept {
  std::size_t most = 0;
  for (const auto& [_, list] : entries_) most = std::max(most, list.size());
  return most;
}

const std::vector<std::string>* SynonymTable::find(const std::string& word) const {
  const auto it = entries_.find(word);
  return it == entries_.end() ? nullptr : &it->second;
}

SynonymTable SynonymTable::parse(std::istream& in) {
  SynonymTable table;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || line[0] == '#') continue;
    const auto tab = line.find('\t');
    if (tab == std::string::npos) fail(ErrorCode::io, "synonym line " + std::to_string(line_no) + " has no tab");
    std::vector<std::string> syns;
    std::stringstream list(line.substr(tab + 1));
    std::string item;
    while (std::getline(list, item, ',')) {
      item = to_lower(item);
      item.erase(0, item.find_first_not_of(' '));
      item.erase(item.find_last_not_of(' ') + 1);
      if (!item.empty()) syns.push_back(item);
    }
    try {
      table.add(to_lower(line.substr(0, tab)), std::move(syns));
    } catch (const Error& e) {
      fail(e.code(), std::string(e.what()) + " (line " + std::to_string(line_no) + ")");
    }
  }
  return table;
}

SynonymTable SynonymTable::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorCode::io, "cannot open synonym table " + path.string());
  return parse(in);
}

void SynonymTable::save(const std::filesystem::path& path) const {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::trunc);
  if (!out) fail(ErrorCode::io, "cannot write " + path.string());
  for (const auto& [word, list] : entries_) {
    out << word << '\t';
    for (std::size_t i = 0; i < list.size(); ++i) out << (i ? "," : "") << list[i];
    out << '\n';
  }
}

std::vector<std::string> perturb_thesaurus(const std::string& text, std::size_t position, const SynonymTable& table) {
  auto words = words_of(text, position);
  const auto* syns = table.find(words[position]);
  if (!syns) return {};
  return substitute_all(words, position, *syns);
}

bool semantic_filter(const std::string& original_text, const std::string& candidate_text, const Victim& victim,
                     double threshold) {
  if (!(threshold >= -1.0 && threshold <= 1.0)) fail(ErrorCode::config, "similarity threshold outside [-1, 1]");
  const auto a = victim.query(split_words(original_text));
  const auto b = victim.query(split_words(candidate_text));
  return cosine_similarity(a.sentence, b.sentence) >= threshold;
}

// ---------------------------------------------------------------------------
// Driver

namespace {

std::vector<std::string> replacement_words(const std::string& word, const AttackRecipe& recipe,
                                           const AttackResources& res, std::mt19937_64& rng) {
  switch (recipe.kind) {
    case AttackKind::typo: return typo_candidates(word, recipe.typo_variants, rng);
    case AttackKind::embed_synonym:
      return res.neighbors->nearest(word, recipe.neighbors);
    case AttackKind::thesaurus_synonym: {
      const auto* s = res.synonyms->find(word);
      return s ? *s : std::vector<std::string>{};
    }
  }
  return {};
}

std::size_t candidates_per_position(const AttackRecipe& recipe, const AttackResources& res) {
  switch (recipe.kind) {
    case AttackKind::typo: return 4 * recipe.typo_variants;
    case AttackKind::embed_synonym: return recipe.neighbors;
    case AttackKind::thesaurus_synonym: return res.synonyms ? res.synonyms->longest_entry() : 0;
  }
  return 0;
}

}  // namespace

AttackOutcome targeted_attack(const Victim& victim, const LabeledText& sample, const AttackRecipe& recipe,
                              const AttackResources& resources, std::mt19937_64& rng) {
  recipe.validate();
  if (recipe.kind == AttackKind::embed_synonym && !resources.neighbors)
    fail(ErrorCode::config, "embed_synonym attack needs an embedding index");
  if (recipe.kind == AttackKind::thesaurus_synonym && !resources.synonyms)
    fail(ErrorCode::config, "thesaurus attack needs a synonym table");
  AttackOutcome out;
  out.original_text = sample.text;
  out.final_text = sample.text;
  out.original_label = sample.label;

  const auto words = split_words(sample.text);
  const auto clean = victim.query(words);
  out.final_prediction = argmax(clean.logits);
  if (sample.label < 0 || static_cast<std::size_t>(sample.label) >= clean.logits.size()) {
    fail(ErrorCode::label, "sample label " + std::to_string(sample.label) + " outside the victim's classes");
  }
  if (out.final_prediction != sample.label) {
    out.skipped = true;
    return out;
  }

  const std::size_t n = words.size();
  const std::size_t budget =
      recipe.query_budget ? *recipe.query_budget : n + n * candidates_per_position(recipe, resources);
  if (budget < n) {
    out.queries_used = budget;
    return out;
  }
  const auto max_edits = static_cast<std::size_t>(std::floor(recipe.max_perturb_fraction * static_cast<double>(n)));

  // Importance: margin drop when the word is deleted, one query per position.
  std::vector<double> drop(n);
  const double clean_margin = correct_margin(clean.logits, sample.label);
  for (std::size_t i = 0; i < n; ++i) {
    auto without = words;
    without.erase(without.begin() + static_cast<std::ptrdiff_t>(i));
    drop[i] = clean_margin - correct_margin(victim.query(without).logits, sample.label);
    ++out.queries_used;
  }
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&drop](std::size_t a, std::size_t b) { return drop[a] > drop[b]; });

  auto current = words;
  double current_margin = clean_margin;
  bool exhausted = false;
  for (std::size_t pos : order) {
    if (exhausted || out.edit_positions.size() >= max_edits) break;
    const auto replacements = replacement_words(words[pos], recipe, resources, rng);
    std::optional<std::string> best;
    double best_margin = current_margin;
    int best_prediction = sample.label;
    for (const auto& r : replacements) {
      if (out.queries_used >= budget) {
        exhausted = true;
        break;
      }
      auto candidate = current;
      candidate[pos] = r;
      const auto result = victim.query(candidate);
      ++out.queries_used;
      if (recipe.uses_similarity_filter() &&
          cosine_similarity(clean.sentence, result.sentence) < recipe.similarity_threshold) {
        continue;
      }
      const double m = correct_margin(result.logits, sample.label);
      if (m < best_margin) {
        best_margin = m;
        best = r;
        best_prediction = argmax(result.logits);
      }
    }
    if (!best) continue;
    current[pos] = *best;
    current_margin = best_margin;
    out.edit_positions.push_back(pos);
    out.final_text = join_words(current);
    out.final_prediction = best_prediction;
    if (best_prediction != sample.label) {
      out.success = true;
      break;
    }
  }
  return out;
}

RobustnessReport evaluate_robustness(const Victim& victim, const std::vector<LabeledText>& samples,
                                     const AttackRecipe& recipe, const AttackResources& resources, std::uint64_t seed,
                                     std::size_t workers) {
  recipe.validate();
  if (samples.empty()) fail(ErrorCode::empty, "no samples to attack");
  RobustnessReport report;
  report.outcomes.resize(samples.size());
  auto run = [&](std::size_t i) {
    std::mt19937_64 rng(seed * 0x9E3779B97F4A7C15ULL + i + 1);
    report.outcomes[i] = targeted_attack(victim, samples[i], recipe, resources, rng);
    report.outcomes[i].sample_index = i;
  };
  workers = std::max<std::size_t>(1, std::min(workers, samples.size()));
  if (workers == 1) {
    for (std::size_t i = 0; i < samples.size(); ++i) run(i);
  } else {
    std::vector<std::jthread> pool;
    std::vector<std::exception_ptr> errors(workers);
    for (std::size_t w = 0; w < workers; ++w) {
      pool.emplace_back([&, w] {
        try {
          for (std::size_t i = w; i < samples.size(); i += workers) run(i);
        } catch (...) {
          errors[w] = std::current_exception();
        }
      });
    }
    pool.clear();
    for (auto& e : errors)
      if (e) std::rethrow_exception(e);
  }
  std::size_t correct = 0, survived = 0;
  for (const auto& o : report.outcomes) {
    if (!o.skipped) ++correct;
    if (!o.skipped && !o.success) ++survived;
  }
  report.pre_acc = static_cast<double>(correct) / static_cast<double>(samples.size());
  report.post_acc = static_cast<double>(survived) / static_cast<double>(samples.size());
  return report;
}

void write_outcomes_ndjson(const std::vector<AttackOutcome>& outcomes, const AttackRecipe& recipe, std::ostream& out) {
  for (const auto& o : outcomes) {
    nlohmann::json j = {{"sample_index", o.sample_index},
                        {"recipe", to_string(recipe.kind)},
                        {"success", o.success},
                        {"skipped", o.skipped},
                        {"queries", o.queries_used},
                        {"edit_positions", o.edit_positions},
                        {"original_label", o.original_label},
                        {"final_prediction", o.final_prediction},
                        {"original_text", o.original_text},
                        {"final_text", o.final_text}};
    out << j.dump() << '\n';
  }
}

}  // namespace unirobust
