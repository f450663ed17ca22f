#pragma once

// Diagnostics: Mahalanobis separation of class means, logit-space distance to
// the decision boundary and its normalized form d_s = Mean(d) / Var(d),
// per-layer clean-vs-attacked cosine similarity, and the margin sweep.

#include <cstdint>
#include <iosfwd>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "unirobust/attacks.hpp"
#include "unirobust/corpus.hpp"
#include "unirobust/model.hpp"
#include "unirobust/training.hpp"

namespace unirobust {

// (mu_i - mu_j)^T S^-1 (mu_i - mu_j) by Cholesky solve. Throws conditioning
// error when S is not symmetric positive definite.
double mahalanobis(const std::vector<double>& mu_i, const std::vector<double>& mu_j,
                   const std::vector<std::vector<double>>& s);

// Euclidean distance in logit space to the nearest pairwise argmax boundary:
// min_{j != label} (y_label - y_j) / sqrt(2). Contract error if misclassified.
double boundary_distance(const std::vector<double>& logits, int label);

struct BoundaryStats {
  double mean_d = 0.0;
  double var_d = 0.0;  // population variance
  double d_s = 0.0;
  bool d_s_infinite = false;  // var_d == 0; d_s holds +inf
  std::size_t sample_count = 0;
};

BoundaryStats boundary_stats_from_distances(const std::vector<double>& distances);
// Distances over the correctly classified examples only.
BoundaryStats boundary_stats(const Model& model, const std::vector<LabeledExample>& dataset);

// One decimal, truncated toward zero.
double report_one_decimal(double value);

struct LayerCosine {
  double mean = 0.0;
  double std = 0.0;
};

struct PropagationCurve {
  std::vector<LayerCosine> layers;
  std::size_t pairs_used = 0;
  std::size_t excluded = 0;  // pairs with a zero-norm activation at some layer
};

PropagationCurve propagation_curve(const Model& model, const Tokenizer& tokenizer,
                                   const std::vector<std::string>& clean_texts,
                                   const std::vector<std::string>& attacked_texts);

double accuracy(const Model& model, const std::vector<LabeledExample>& dataset);

// ---------------------------------------------------------------------------
// Finetune-then-attack evaluation shared by the sweep and the ablation.

struct EvaluationSetup {
  const Model* pretrained = nullptr;
  const Tokenizer* tokenizer = nullptr;
  const std::vector<LabeledExample>* train = nullptr;
  const std::vector<LabeledText>* attack_samples = nullptr;
  const SynonymTable* synonyms = nullptr;  // required only for thesaurus recipes
  // Word table for embedding-synonym candidates; defaults to `pretrained`.
  const Model* neighbor_source = nullptr;
  std::vector<AttackRecipe> recipes;
  std::uint64_t attack_seed = 0;
  std::size_t workers = 1;
};

struct TrimResult {
  double pre_acc = 0.0;
  std::map<AttackKind, double> post_acc;
  std::map<AttackKind, RobustnessReport> reports;
  BoundaryStats boundary;
  std::optional<Model> model;
};

// Finetunes a copy of the pretrained model under `plan`, then attacks it with every recipe.
TrimResult evaluate_trim(const EvaluationSetup& setup, const TrainPlan& plan);

struct SweepRow {
  double epsilon = 0.0;
  double pre_acc = 0.0;
  std::map<AttackKind, double> post_acc;
  bool failed = false;
  std::string error;
};

const std::vector<double>& default_epsilon_grid();

// One fresh multi-margin finetune per epsilon (same seed for every row); a row
// whose training or attack throws is marked failed and the sweep continues.
std::vector<SweepRow> margin_sweep(const EvaluationSetup& setup, const TrainPlan& base_plan,
                                   const std::vector<double>& epsilons);

// CSV exports.
void write_propagation_csv(const PropagationCurve& curve, std::ostream& out);
void write_sweep_csv(const std::vector<SweepRow>& rows, std::ostream& out);
void write_boundary_csv(const BoundaryStats& stats, std::ostream& out);

}  // namespace unirobust
