#include "unirobust/analysis.hpp"

#include <cmath>
#include <cstdio>
#include <limits>
#include <ostream>

#include <Eigen/Cholesky>
#include <Eigen/Dense>

#include "unirobust/error.hpp"

namespace unirobust {

namespace {

std::string fmt(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.6f", v);
  return buf;
}

std::vector<double> to_vector(const Tensor& t) { return {t.data().begin(), t.data().end()}; }

}  // namespace

double mahalanobis(const std::vector<double>& mu_i, const std::vector<double>& mu_j,
                   const std::vector<std::vector<double>>& s) {
  const std::size_t n = mu_i.size();
  if (mu_j.size() != n || s.size() != n) fail(ErrorCode::dimension, "mahalanobis: means and covariance disagree in size");
  Eigen::MatrixXd cov(n, n);
  for (std::size_t r = 0; r < n; ++r) {
    if (s[r].size() != n) fail(ErrorCode::dimension, "mahalanobis: covariance is not square");
    for (std::size_t c = 0; c < n; ++c) cov(r, c) = s[r][c];
  }
  if (!cov.allFinite()) fail(ErrorCode::conditioning, "mahalanobis: covariance has non-finite entries");
  if ((cov - cov.transpose()).cwiseAbs().maxCoeff() > 1e-12 * (1.0 + cov.cwiseAbs().maxCoeff())) {
    fail(ErrorCode::conditioning, "mahalanobis: covariance is not symmetric");
  }
  const Eigen::LLT<Eigen::MatrixXd> llt(cov);
  if (llt.info() != Eigen::Success) fail(ErrorCode::conditioning, "mahalanobis: covariance is not positive definite");
  Eigen::VectorXd delta(n);
  for (std::size_t k = 0; k < n; ++k) delta(k) = mu_i[k] - mu_j[k];
  const Eigen::VectorXd solved = llt.solve(delta);
  return delta.dot(solved);
}

double boundary_distance(const std::vector<double>& logits, int label) {
  if (logits.size() < 2) fail(ErrorCode::dimension, "boundary distance needs at least two classes");
  if (label < 0 || static_cast<std::size_t>(label) >= logits.size()) fail(ErrorCode::label, "label outside logits");
  if (argmax(logits) != label) fail(ErrorCode::contract, "boundary distance of a misclassified sample");
  return correct_margin(logits, label) / std::sqrt(2.0);
}

BoundaryStats boundary_stats_from_distances(const std::vector<double>& distances) {
  if (distances.empty()) fail(ErrorCode::empty, "no correctly classified samples for boundary statistics");
  BoundaryStats s;
  s.sample_count = distances.size();
  double total = 0.0;
  for (double d : distances) total += d;
  s.mean_d = total / static_cast<double>(distances.size());
  double sq = 0.0;
  for (double d : distances) sq += (d - s.mean_d) * (d - s.mean_d);
  s.var_d = sq / static_cast<double>(distances.size());
  if (s.var_d == 0.0) {
    s.d_s_infinite = true;
    s.d_s = std::numeric_limits<double>::infinity();
  } else {
    s.d_s = s.mean_d / s.var_d;
  }
  return s;
}

BoundaryStats boundary_stats(const Model& model, const std::vector<LabeledExample>& dataset) {
  std::vector<double> distances;
  for (const auto& ex : dataset) {
    const auto logits = to_vector(model.forward(ex.tokens).logits);
    if (argmax(logits) == ex.label) distances.push_back(boundary_distance(logits, ex.label));
  }
  return boundary_stats_from_distances(distances);
}

double report_one_decimal(double value) { return std::trunc(value * 10.0) / 10.0; }

PropagationCurve propagation_curve(const Model& model, const Tokenizer& tokenizer,
                                   const std::vector<std::string>& clean_texts,
                                   const std::vector<std::string>& attacked_texts) {
  if (clean_texts.size() != attacked_texts.size()) fail(ErrorCode::dimension, "clean and attacked texts are not paired");
  const std::size_t layers = model.config().layers;
  std::vector<std::vector<double>> cos(layers);
  PropagationCurve curve;
  for (std::size_t p = 0; p < clean_texts.size(); ++p) {
    const auto a = model.forward(tokenizer.encode(clean_texts[p]), true);
    const auto b = model.forward(tokenizer.encode(attacked_texts[p]), true);
    std::vector<double> row(layers);
    bool zero = false;
    for (std::size_t l = 0; l < layers && !zero; ++l) {
      const auto u = to_vector(a.block_outputs[l]);
      const auto v = to_vector(b.block_outputs[l]);
      double nu = 0.0, nv = 0.0;
      for (std::size_t k = 0; k < u.size(); ++k) {
        nu += u[k] * u[k];
        nv += v[k] * v[k];
      }
      if (nu == 0.0 || nv == 0.0) {
        zero = true;
      } else {
        row[l] = cosine_similarity(u, v);
      }
    }
    if (zero) {
      ++curve.excluded;
      continue;
    }
    for (std::size_t l = 0; l < layers; ++l) cos[l].push_back(row[l]);
    ++curve.pairs_used;
  }
  curve.layers.resize(layers);
  if (curve.pairs_used == 0) return curve;
  const double n = static_cast<double>(curve.pairs_used);
  for (std::size_t l = 0; l < layers; ++l) {
    double m = 0.0;
    for (double c : cos[l]) m += c;
    m /= n;
    double var = 0.0;
    for (double c : cos[l]) var += (c - m) * (c - m);
    curve.layers[l] = {m, std::sqrt(var / n)};
  }
  return curve;
}

double accuracy(const Model& model, const std::vector<LabeledExample>& dataset) {
  if (dataset.empty()) fail(ErrorCode::empty, "accuracy of an empty dataset");
  std::size_t correct = 0;
  for (const auto& ex : dataset) {
    if (argmax(to_vector(model.forward(ex.tokens).logits)) == ex.label) ++correct;
  }
  return static_cast<double>(correct) / static_cast<double>(dataset.size());
}

TrimResult evaluate_trim(const EvaluationSetup& setup, const TrainPlan& plan) {
  if (!setup.pretrained || !setup.tokenizer || !setup.train || !setup.attack_samples) {
    fail(ErrorCode::contract, "evaluation setup is incomplete");
  }
  TrimResult result;
  result.model.emplace(setup.pretrained->clone());
  Model& model = *result.model;
  finetune(model, *setup.train, plan);

  std::vector<LabeledExample> held_out;
  for (const auto& s : *setup.attack_samples) held_out.push_back({setup.tokenizer->encode(s.text), s.label});
  result.pre_acc = accuracy(model, held_out);
  try {
    result.boundary = boundary_stats(model, held_out);
  } catch (const Error& e) {
    if (e.code() != ErrorCode::empty) throw;
  }

  const ModelVictim victim(model, *setup.tokenizer);
  // Candidate words come from the shared pretrained table, identical for every trim.
  const Model& source = setup.neighbor_source ? *setup.neighbor_source : *setup.pretrained;
  const EmbeddingNeighbors neighbors(source.word_embeddings(), *setup.tokenizer);
  const AttackResources resources{&neighbors, setup.synonyms};
  for (const auto& recipe : setup.recipes) {
    auto report = evaluate_robustness(victim, *setup.attack_samples, recipe, resources, setup.attack_seed, setup.workers);
    result.post_acc[recipe.kind] = report.post_acc;
    result.reports.emplace(recipe.kind, std::move(report));
  }
  return result;
}

const std::vector<double>& default_epsilon_grid() {
  static const std::vector<double> grid{0.01, 0.1, 1.0, 10.0, 100.0, 1000.0};
  return grid;
}

std::vector<SweepRow> margin_sweep(const EvaluationSetup& setup, const TrainPlan& base_plan,
                                   const std::vector<double>& epsilons) {
  if (epsilons.empty()) fail(ErrorCode::config, "sweep.epsilons must not be empty");
  for (double e : epsilons) {
    if (!(e > 0.0) || !std::isfinite(e)) fail(ErrorCode::config, "sweep.epsilons must be positive");
  }
  std::vector<SweepRow> rows;
  for (double eps : epsilons) {
    SweepRow row;
    row.epsilon = eps;
    TrainPlan plan = base_plan;
    plan.loss = LossKind::multi_margin;
    plan.epsilon = eps;
    try {
      const auto trim = evaluate_trim(setup, plan);
      row.pre_acc = trim.pre_acc;
      row.post_acc = trim.post_acc;
    } catch (const std::exception& e) {
      row.failed = true;
      row.error = e.what();
    }
    rows.push_back(std::move(row));
  }
  return rows;
}

void write_propagation_csv(const PropagationCurve& curve, std::ostream& out) {
  out << "layer,mean_cos,std_cos\n";
  for (std::size_t l = 0; l < curve.layers.size(); ++l) {
    out << (l + 1) << ',' << fmt(curve.layers[l].mean) << ',' << fmt(curve.layers[l].std) << '\n';
  }
}

void write_sweep_csv(const std::vector<SweepRow>& rows, std::ostream& out) {
  out << "epsilon,pre_acc,post_acc_typo,post_acc_embed,post_acc_thesaurus\n";
  const double nan = std::numeric_limits<double>::quiet_NaN();
  for (const auto& r : rows) {
    auto post = [&](AttackKind k) {
      const auto it = r.post_acc.find(k);
      return r.failed || it == r.post_acc.end() ? nan : it->second;
    };
    out << fmt(r.epsilon) << ',' << fmt(r.failed ? nan : r.pre_acc) << ',' << fmt(post(AttackKind::typo)) << ','
        << fmt(post(AttackKind::embed_synonym)) << ',' << fmt(post(AttackKind::thesaurus_synonym)) << '\n';
  }
}

void write_boundary_csv(const BoundaryStats& stats, std::ostream& out) {
  out << "mean_d,var_d,d_s,d_s_infinite,sample_count\n";
  out << fmt(stats.mean_d) << ',' << fmt(stats.var_d) << ',' << fmt(stats.d_s) << ','
      << (stats.d_s_infinite ? "true" : "false") << ',' << stats.sample_count << '\n';
}

}  // namespace unirobust
