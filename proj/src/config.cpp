#include "unirobust/config.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>

#include "unirobust/analysis.hpp"
#include "unirobust/error.hpp"

namespace unirobust {

namespace {

[[noreturn]] void bad_value(const std::string& key, const std::string& value, const char* expected) {
  fail(ErrorCode::config, key + ": '" + value + "' is not " + expected);
}

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return {};
  return s.substr(b, s.find_last_not_of(" \t\r\n") - b + 1);
}

std::size_t as_size(const std::string& key, const std::string& v) {
  std::size_t out = 0;
  const auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc{} || p != v.data() + v.size()) bad_value(key, v, "a non-negative integer");
  return out;
}

double as_double(const std::string& key, const std::string& v) {
  try {
    std::size_t used = 0;
    const double d = std::stod(v, &used);
    if (used != v.size() || !std::isfinite(d)) bad_value(key, v, "a finite number");
    return d;
  } catch (const std::logic_error&) {
    bad_value(key, v, "a finite number");
  }
}

bool as_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1" || v == "yes" || v == "on") return true;
  if (v == "false" || v == "0" || v == "no" || v == "off") return false;
  bad_value(key, v, "a boolean");
}

std::vector<std::string> as_list(const std::string& v) {
  std::vector<std::string> out;
  std::stringstream in(v);
  std::string item;
  while (std::getline(in, item, ',')) {
    item = trim(item);
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

using Setter = std::function<void(RunConfig&, const std::string& key, const std::string& value,
                                  const std::filesystem::path& base)>;

std::filesystem::path as_path(const std::string& v, const std::filesystem::path& base) {
  std::filesystem::path p(v);
  if (p.is_relative() && !base.empty()) p = base / p;
  return p.lexically_normal();
}

template <class F>
Setter plain(F f) {
  return [f](RunConfig& c, const std::string& k, const std::string& v, const std::filesystem::path&) { f(c, k, v); };
}

// Keys shared by both training plans.
void add_plan_keys(std::map<std::string, Setter>& t, const std::string& section, TrainPlan RunConfig::*plan) {
  t[section + ".lr"] = plain([plan](RunConfig& c, auto& k, auto& v) { (c.*plan).lr_peak = as_double(k, v); });
  t[section + ".warmup"] = plain([plan](RunConfig& c, auto& k, auto& v) { (c.*plan).warmup_steps = as_size(k, v); });
  t[section + ".steps"] = plain([plan](RunConfig& c, auto& k, auto& v) { (c.*plan).total_steps = as_size(k, v); });
  t[section + ".batch_size"] = plain([plan](RunConfig& c, auto& k, auto& v) { (c.*plan).batch_size = as_size(k, v); });
  t[section + ".weight_decay"] =
      plain([plan](RunConfig& c, auto& k, auto& v) { (c.*plan).weight_decay = as_double(k, v); });
  t[section + ".unitary"] = plain([plan](RunConfig& c, auto& k, auto& v) { (c.*plan).unitary_enabled = as_bool(k, v); });
  t[section + ".beta1"] = plain([plan](RunConfig& c, auto& k, auto& v) { (c.*plan).beta1 = as_double(k, v); });
  t[section + ".beta2"] = plain([plan](RunConfig& c, auto& k, auto& v) { (c.*plan).beta2 = as_double(k, v); });
  t[section + ".adam_eps"] = plain([plan](RunConfig& c, auto& k, auto& v) { (c.*plan).adam_eps = as_double(k, v); });
}

const std::map<std::string, Setter>& setters() {
  static const std::map<std::string, Setter> table = [] {
    std::map<std::string, Setter> t;
    t["run.seed"] = plain([](RunConfig& c, auto& k, auto& v) { c.set_seed(as_size(k, v)); });
    t["run.out"] = [](RunConfig& c, auto&, auto& v, auto& base) { c.out = as_path(v, base); };

    t["data.train"] = [](RunConfig& c, auto&, auto& v, auto& base) { c.data.train = as_path(v, base); };
    t["data.test"] = [](RunConfig& c, auto&, auto& v, auto& base) { c.data.test = as_path(v, base); };
    t["data.pretrain"] = [](RunConfig& c, auto&, auto& v, auto& base) { c.data.pretrain = as_path(v, base); };
    t["data.synonyms"] = [](RunConfig& c, auto&, auto& v, auto& base) { c.data.synonyms = as_path(v, base); };
    t["data.num_classes"] = plain([](RunConfig& c, auto& k, auto& v) {
      c.data.num_classes = as_size(k, v);
      c.model.num_classes = c.data.num_classes;
    });
    t["data.max_vocab"] = plain([](RunConfig& c, auto& k, auto& v) { c.data.max_vocab = as_size(k, v); });
    t["data.attack_samples"] = plain([](RunConfig& c, auto& k, auto& v) { c.data.attack_samples = as_size(k, v); });

    t["model.max_seq_len"] = plain([](RunConfig& c, auto& k, auto& v) { c.model.max_seq_len = as_size(k, v); });
    t["model.hidden"] = plain([](RunConfig& c, auto& k, auto& v) { c.model.hidden = as_size(k, v); });
    t["model.expand"] = plain([](RunConfig& c, auto& k, auto& v) { c.model.expand = as_size(k, v); });
    t["model.layers"] = plain([](RunConfig& c, auto& k, auto& v) { c.model.layers = as_size(k, v); });
    t["model.heads"] = plain([](RunConfig& c, auto& k, auto& v) { c.model.heads = as_size(k, v); });
    t["model.token_types"] = plain([](RunConfig& c, auto& k, auto& v) { c.model.token_types = as_size(k, v); });

    add_plan_keys(t, "pretrain", &RunConfig::pretrain);
    t["pretrain.mask_prob"] = plain([](RunConfig& c, auto& k, auto& v) { c.pretrain.mask_prob = as_double(k, v); });

    add_plan_keys(t, "finetune", &RunConfig::finetune);
    t["finetune.epochs"] = plain([](RunConfig& c, auto& k, auto& v) { c.finetune.epochs = as_size(k, v); });
    t["finetune.epsilon"] = plain([](RunConfig& c, auto& k, auto& v) { c.finetune.epsilon = as_double(k, v); });
    t["finetune.loss"] = plain([](RunConfig& c, auto& k, auto& v) {
      if (v == "multi_margin") {
        c.finetune.loss = LossKind::multi_margin;
      } else if (v == "cross_entropy") {
        c.finetune.loss = LossKind::cross_entropy;
      } else {
        bad_value(k, v, "multi_margin or cross_entropy");
      }
    });

    t["attack.recipes"] = plain([](RunConfig& c, auto& k, auto& v) {
      c.recipes.clear();
      for (const auto& item : as_list(v)) {
        const auto kind = attack_kind_from_string(item);
        if (!kind) bad_value(k, item, "one of typo, embed_synonym, thesaurus_synonym");
        c.recipes.push_back(*kind);
      }
    });
    t["attack.query_budget"] = plain([](RunConfig& c, auto& k, auto& v) {
      if (v == "unlimited") {
        c.attack.query_budget.reset();
      } else {
        c.attack.query_budget = as_size(k, v);
      }
    });
    t["attack.similarity_threshold"] =
        plain([](RunConfig& c, auto& k, auto& v) { c.attack.similarity_threshold = as_double(k, v); });
    t["attack.max_perturb_fraction"] =
        plain([](RunConfig& c, auto& k, auto& v) { c.attack.max_perturb_fraction = as_double(k, v); });
    t["attack.neighbors"] = plain([](RunConfig& c, auto& k, auto& v) { c.attack.neighbors = as_size(k, v); });
    t["attack.typo_variants"] = plain([](RunConfig& c, auto& k, auto& v) { c.attack.typo_variants = as_size(k, v); });
    t["attack.workers"] = plain([](RunConfig& c, auto& k, auto& v) { c.workers = as_size(k, v); });

    t["sweep.epsilons"] = plain([](RunConfig& c, auto& k, auto& v) {
      c.epsilons.clear();
      for (const auto& item : as_list(v)) c.epsilons.push_back(as_double(k, item));
    });
    return t;
  }();
  return table;
}

void rethrow_with_prefix(const std::string& prefix, const std::function<void()>& check) {
  try {
    check();
  } catch (const Error& e) {
    fail(e.code(), prefix + e.what());
  }
}

}  // namespace

RunConfig::RunConfig() {
  pretrain = TrainPlan::pretraining();
  pretrain.lr_peak = 1e-3;
  pretrain.warmup_steps = 100;
  pretrain.total_steps = 2000;
  pretrain.batch_size = 16;
  finetune = TrainPlan::finetuning();
  finetune.lr_peak = 1e-3;
  finetune.warmup_steps = 100;
  finetune.epochs = 5;
  finetune.batch_size = 16;
  epsilons = default_epsilon_grid();
}

void RunConfig::set_seed(std::uint64_t value) {
  seed = value;
  pretrain.seed = value;
  finetune.seed = value;
}

void RunConfig::validate() const {
  rethrow_with_prefix("model.", [this] { model.validate(); });
  rethrow_with_prefix("pretrain.", [this] { pretrain.validate(); });
  rethrow_with_prefix("finetune.", [this] { finetune.validate(); });
  attack.validate();
  if (data.num_classes < 2) fail(ErrorCode::config, "data.num_classes must be at least 2");
  if (data.max_vocab <= static_cast<std::size_t>(special::count)) fail(ErrorCode::config, "data.max_vocab must exceed 4");
  if (data.attack_samples == 0) fail(ErrorCode::config, "data.attack_samples must be positive");
  if (recipes.empty()) fail(ErrorCode::config, "attack.recipes must not be empty");
  if (workers == 0) fail(ErrorCode::config, "attack.workers must be positive");
  if (epsilons.empty()) fail(ErrorCode::config, "sweep.epsilons must not be empty");
  for (double e : epsilons) {
    if (!(e > 0.0)) fail(ErrorCode::config, "sweep.epsilons must all be positive");
  }
}

std::vector<AttackRecipe> RunConfig::recipe_list() const {
  std::vector<AttackRecipe> out;
  for (auto kind : recipes) {
    AttackRecipe r = attack;
    r.kind = kind;
    out.push_back(r);
  }
  return out;
}

void set_config_value(RunConfig& config, const std::string& key, const std::string& value,
                      const std::filesystem::path& base_dir) {
  const auto it = setters().find(key);
  if (it == setters().end()) fail(ErrorCode::config, "unknown config key '" + key + "'");
  it->second(config, key, trim(value), base_dir);
}

RunConfig parse_config(std::istream& in, const std::filesystem::path& base_dir, const std::vector<std::string>& overrides) {
  boost::property_tree::ptree tree;
  try {
    boost::property_tree::ini_parser::read_ini(in, tree);
  } catch (const boost::property_tree::ini_parser_error& e) {
    fail(ErrorCode::config, std::string("config parse error: ") + e.what());
  }
  RunConfig config;
  for (const auto& [section, body] : tree) {
    if (body.empty() && !body.data().empty()) fail(ErrorCode::config, "config key '" + section + "' outside a section");
    for (const auto& [key, value] : body) set_config_value(config, section + "." + key, value.data(), base_dir);
  }
  for (const auto& o : overrides) {
    const auto eq = o.find('=');
    if (eq == std::string::npos) fail(ErrorCode::config, "override '" + o + "' is not key=value");
    set_config_value(config, trim(o.substr(0, eq)), o.substr(eq + 1));
  }
  config.validate();
  return config;
}

RunConfig load_config(const std::filesystem::path& path, const std::vector<std::string>& overrides) {
  std::ifstream in(path);
  if (!in) fail(ErrorCode::io, "cannot open config " + path.string());
  return parse_config(in, path.parent_path(), overrides);
}

}  // namespace unirobust
