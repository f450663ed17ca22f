#include "unirobust/corpus.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <sstream>

#include <nlohmann/json.hpp>

#include "unirobust/error.hpp"
#include "unirobust/model.hpp"

namespace unirobust {

std::vector<std::string> split_words(std::string_view text) {
  std::vector<std::string> words;
  std::size_t i = 0;
  while (i < text.size()) {
    while (i < text.size() && std::isspace(static_cast<unsigned char>(text[i]))) ++i;
    const std::size_t start = i;
    while (i < text.size() && !std::isspace(static_cast<unsigned char>(text[i]))) ++i;
    if (i > start) words.emplace_back(text.substr(start, i - start));
  }
  return words;
}

std::string join_words(const std::vector<std::string>& words) {
  std::string out;
  for (std::size_t i = 0; i < words.size(); ++i) {
    if (i) out += ' ';
    out += words[i];
  }
  return out;
}

std::string to_lower(std::string_view text) {
  std::string out(text);
  std::transform(out.begin(), out.end(), out.begin(), [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return out;
}

CorpusStats Corpus::stats() const {
  CorpusStats s;
  if (schema == Schema::classification) s.class_counts.assign(label_names.size(), 0);
  std::size_t words = 0;
  for (const auto& sample : samples) {
    words += split_words(sample.text).size();
    if (sample.label && static_cast<std::size_t>(*sample.label) < s.class_counts.size()) ++s.class_counts[*sample.label];
  }
  if (!samples.empty()) s.mean_words = static_cast<double>(words) / static_cast<double>(samples.size());
  return s;
}

Corpus parse_corpus(std::string_view ndjson, Schema schema, std::size_t num_classes) {
  Corpus corpus;
  corpus.schema = schema;
  if (schema == Schema::classification) {
    if (num_classes == 0) fail(ErrorCode::config, "classification corpus needs num_classes > 0");
    for (std::size_t c = 0; c < num_classes; ++c) corpus.label_names.push_back(std::to_string(c));
  }
  std::istringstream in{std::string(ndjson)};
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    const auto where = "line " + std::to_string(line_no);
    nlohmann::json record;
    try {
      record = nlohmann::json::parse(line);
    } catch (const nlohmann::json::parse_error& e) {
      fail(ErrorCode::io, "malformed record on " + where + ": " + e.what());
    }
    if (!record.is_object() || !record.contains("text") || !record["text"].is_string()) {
      fail(ErrorCode::io, "malformed record on " + where + ": expected an object with a string \"text\"");
    }
    Sample sample{to_lower(record["text"].get<std::string>()), std::nullopt};
    if (record.contains("label") && !record["label"].is_null()) {
      if (!record["label"].is_number_integer()) fail(ErrorCode::io, "malformed record on " + where + ": non-integer label");
      sample.label = record["label"].get<int>();
    }
    if (schema == Schema::classification) {
      if (!sample.label) fail(ErrorCode::label, "unlabeled record on " + where);
      if (*sample.label < 0 || static_cast<std::size_t>(*sample.label) >= num_classes) {
        fail(ErrorCode::label, "label " + std::to_string(*sample.label) + " on " + where + " outside [0, " +
                                   std::to_string(num_classes) + ")");
      }
    }
    corpus.samples.push_back(std::move(sample));
  }
  if (corpus.samples.empty()) fail(ErrorCode::empty, "corpus has no records");
  return corpus;
}

Corpus ingest(const std::filesystem::path& path, Schema schema, std::size_t num_classes) {
  std::ifstream in(path);
  if (!in) fail(ErrorCode::io, "cannot open corpus " + path.string());
  std::ostringstream buffer;
  buffer << in.rdbuf();
  return parse_corpus(buffer.str(), schema, num_classes);
}

void write_corpus(const Corpus& corpus, const std::filesystem::path& path) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::trunc);
  if (!out) fail(ErrorCode::io, "cannot write " + path.string());
  for (const auto& s : corpus.samples) {
    nlohmann::json j = {{"text", s.text}};
    if (s.label) j["label"] = *s.label;
    out << j.dump() << '\n';
  }
}

// ---------------------------------------------------------------------------
// Tokenizer

Tokenizer::Tokenizer() : Tokenizer(std::vector<std::string>{}) {}

Tokenizer::Tokenizer(std::vector<std::string> vocabulary, std::size_t max_seq_len) : max_seq_len_(max_seq_len) {
  words_ = {std::string(kPad), std::string(kMask), std::string(kCls), std::string(kUnk)};
  for (auto& w : vocabulary) {
    if (w == kPad || w == kMask || w == kCls || w == kUnk) continue;
    words_.push_back(std::move(w));
  }
  for (std::size_t i = 0; i < words_.size(); ++i) {
    if (!ids_.emplace(words_[i], static_cast<int>(i)).second) fail(ErrorCode::config, "duplicate vocabulary word '" + words_[i] + "'");
  }
}

int Tokenizer::id(std::string_view word) const {
  const auto it = ids_.find(std::string(word));
  return it == ids_.end() ? special::unk : it->second;
}

bool Tokenizer::contains(std::string_view word) const { return ids_.count(std::string(word)) != 0; }

const std::string& Tokenizer::word(int id) const {
  if (id < 0 || static_cast<std::size_t>(id) >= words_.size()) {
    fail(ErrorCode::vocabulary, "token id " + std::to_string(id) + " outside vocabulary");
  }
  return words_[static_cast<std::size_t>(id)];
}

std::vector<int> Tokenizer::encode_words(const std::vector<std::string>& words) const {
  std::vector<int> ids;
  ids.reserve(words.size() + 1);
  ids.push_back(special::cls);
  for (const auto& w : words) ids.push_back(id(w));
  if (max_seq_len_ != 0 && ids.size() > max_seq_len_) {
    fail(ErrorCode::length, "text of " + std::to_string(words.size()) + " words exceeds max_seq_len " +
                                std::to_string(max_seq_len_));
  }
  return ids;
}

std::vector<int> Tokenizer::encode(std::string_view text) const { return encode_words(split_words(text)); }

std::vector<std::string> Tokenizer::decode(const std::vector<int>& ids) const {
  std::vector<std::string> out;
  for (int i : ids) {
    if (i == special::cls) continue;
    out.push_back(word(i));
  }
  return out;
}

void Tokenizer::save(const std::filesystem::path& path) const {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::trunc);
  if (!out) fail(ErrorCode::io, "cannot write " + path.string());
  for (const auto& w : words_) out << w << '\n';
}

Tokenizer Tokenizer::load(const std::filesystem::path& path, std::size_t max_seq_len) {
  std::ifstream in(path);
  if (!in) fail(ErrorCode::stage_dependency, "missing vocabulary " + path.string());
  std::vector<std::string> words;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty()) words.push_back(line);
  }
  return Tokenizer(std::move(words), max_seq_len);
}

Tokenizer build_vocab(const Corpus& corpus, std::size_t max_vocab, std::size_t max_seq_len) {
  if (corpus.samples.empty()) fail(ErrorCode::empty, "cannot build a vocabulary from an empty corpus");
  if (max_vocab <= static_cast<std::size_t>(special::count)) fail(ErrorCode::config, "max_vocab must exceed 4");
  std::map<std::string, std::size_t> counts;  // ordered, so ties resolve lexicographically
  for (const auto& s : corpus.samples)
    for (auto& w : split_words(s.text)) ++counts[w];
  std::vector<std::pair<std::string, std::size_t>> ranked(counts.begin(), counts.end());
  std::stable_sort(ranked.begin(), ranked.end(), [](const auto& a, const auto& b) { return a.second > b.second; });
  std::vector<std::string> words;
  for (const auto& [w, _] : ranked) {
    if (words.size() + special::count >= max_vocab) break;
    if (w == Tokenizer::kPad || w == Tokenizer::kMask || w == Tokenizer::kCls || w == Tokenizer::kUnk) continue;
    words.push_back(w);
  }
  return Tokenizer(std::move(words), max_seq_len);
}

}  // namespace unirobust
