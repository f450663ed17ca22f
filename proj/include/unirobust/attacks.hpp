#pragma once

// Black-box targeted word-level attacks against a frozen classifier.
//
// Three candidate generators (character typos, nearest neighbours in the
// a word-embedding table, thesaurus synonyms) share one greedy driver:
// rank words by how much deleting them lowers the correct-class margin, then
// substitute in that order, keeping the candidate that lowers the margin most,
// until the prediction flips or the query/edit budget runs out.

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "unirobust/corpus.hpp"
#include "unirobust/model.hpp"

namespace unirobust {

enum class AttackKind { typo, embed_synonym, thesaurus_synonym };

const char* to_string(AttackKind kind) noexcept;
std::optional<AttackKind> attack_kind_from_string(std::string_view text) noexcept;

struct AttackRecipe {
  AttackKind kind = AttackKind::embed_synonym;
  std::optional<std::size_t> query_budget;  // nullopt: unlimited
  double similarity_threshold = 0.8;        // ignored for thesaurus substitutions
  double max_perturb_fraction = 0.4;
  std::size_t neighbors = 8;      // embed_synonym candidates per word
  std::size_t typo_variants = 2;  // candidates per edit operation

  void validate() const;
  bool uses_similarity_filter() const noexcept { return kind != AttackKind::thesaurus_synonym; }
};

struct AttackOutcome {
  std::size_t sample_index = 0;
  std::string original_text;
  std::string final_text;
  int original_label = 0;
  int final_prediction = 0;
  bool success = false;
  std::size_t queries_used = 0;
  bool skipped = false;
  std::vector<std::size_t> edit_positions;
};

struct LabeledText {
  std::string text;
  int label = 0;
};

// ---------------------------------------------------------------------------
// Victims

struct VictimOutput {
  std::vector<double> logits;
  std::vector<double> sentence;  // representation compared by the semantic filter
};

class Victim {
 public:
  virtual ~Victim() = default;
  virtual VictimOutput query(const std::vector<std::string>& words) const = 0;
};

class ModelVictim : public Victim {
 public:
  ModelVictim(const Model& model, const Tokenizer& tokenizer) : model_(model), tokenizer_(tokenizer) {}
  VictimOutput query(const std::vector<std::string>& words) const override;

 private:
  const Model& model_;
  const Tokenizer& tokenizer_;
};

int argmax(const std::vector<double>& logits);
// logits[label] - max_{j != label} logits[j]
double correct_margin(const std::vector<double>& logits, int label);
double cosine_similarity(const std::vector<double>& a, const std::vector<double>& b);

// ---------------------------------------------------------------------------
// Candidate generators

enum class TypoOp { insert, remove, swap, substitute };

// Single deterministic character edit of `word` at `char_index`. `letter` is
// used by insert and substitute. Throws position error when the edit is invalid.
std::string typo_edit(const std::string& word, TypoOp op, std::size_t char_index, char letter = 'a');
// One random edit of the word at `position`; returns the whole edited text.
std::string perturb_typo(const std::string& text, std::size_t position, TypoOp op, std::mt19937_64& rng);
// Up to `per_op` random variants for each applicable op, deduplicated.
std::vector<std::string> typo_candidates(const std::string& word, std::size_t per_op, std::mt19937_64& rng);

class EmbeddingNeighbors {
 public:
  EmbeddingNeighbors(const Tensor& word_embeddings, const Tokenizer& tokenizer);
  // The k vocabulary words of highest cosine similarity, most similar first;
  // ties resolve to the lower id. Out-of-vocabulary words have no neighbours.
  std::vector<std::string> nearest(const std::string& word, std::size_t k) const;

 private:
  std::vector<std::vector<double>> unit_rows_;
  const Tokenizer& tokenizer_;
};

std::vector<std::string> perturb_embed_synonym(const std::string& text, std::size_t position,
                                               const EmbeddingNeighbors& neighbors, std::size_t k);

class SynonymTable {
 public:
  SynonymTable() = default;
  void add(const std::string& word, std::vector<std::string> synonyms);
  const std::vector<std::string>* find(const std::string& word) const;
  std::size_t size() const noexcept { return entries_.size(); }
  std::size_t longest_entry() const noexcept;
  const std::map<std::string, std::vector<std::string>>& entries() const noexcept { return entries_; }

  // Lines of `word<TAB>syn1,syn2,...`; blank lines and lines starting with '#' are ignored.
  static SynonymTable parse(std::istream& in);
  static SynonymTable load(const std::filesystem::path& path);
  void save(const std::filesystem::path& path) const;

 private:
  std::map<std::string, std::vector<std::string>> entries_;
};

std::vector<std::string> perturb_thesaurus(const std::string& text, std::size_t position, const SynonymTable& table);

// Cosine similarity of the victim's sentence representations >= threshold.
bool semantic_filter(const std::string& original_text, const std::string& candidate_text, const Victim& victim,
                     double threshold);

// ---------------------------------------------------------------------------
// Driver

struct AttackResources {
  const EmbeddingNeighbors* neighbors = nullptr;
  const SynonymTable* synonyms = nullptr;
};

AttackOutcome targeted_attack(const Victim& victim, const LabeledText& sample, const AttackRecipe& recipe,
                              const AttackResources& resources, std::mt19937_64& rng);

struct RobustnessReport {
  double pre_acc = 0.0;
  double post_acc = 0.0;
  std::vector<AttackOutcome> outcomes;  // sorted by sample index
};

// Attacks every sample with its own generator seeded from (seed, index), so the
// result does not depend on `workers`.
RobustnessReport evaluate_robustness(const Victim& victim, const std::vector<LabeledText>& samples,
                                     const AttackRecipe& recipe, const AttackResources& resources,
                                     std::uint64_t seed, std::size_t workers = 1);

// One JSON object per outcome and line.
void write_outcomes_ndjson(const std::vector<AttackOutcome>& outcomes, const AttackRecipe& recipe, std::ostream& out);

}  // namespace unirobust
