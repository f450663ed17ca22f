#pragma once

// Corpus ingestion (newline-delimited JSON) and the whitespace word tokenizer.

#include <cstddef>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace unirobust {

enum class Schema { unlabeled, classification };

struct Sample {
  std::string text;  // lowercased
  std::optional<int> label;
};

struct CorpusStats {
  std::vector<std::size_t> class_counts;  // empty for unlabeled corpora
  double mean_words = 0.0;
};

struct Corpus {
  std::vector<Sample> samples;
  std::vector<std::string> label_names;
  Schema schema = Schema::unlabeled;

  CorpusStats stats() const;
};

std::vector<std::string> split_words(std::string_view text);
std::string join_words(const std::vector<std::string>& words);
std::string to_lower(std::string_view text);

// Each line: {"text": "...", "label": <int, optional>}. Blank lines are skipped.
// For the classification schema every record needs a label in [0, num_classes).
Corpus ingest(const std::filesystem::path& path, Schema schema, std::size_t num_classes = 0);
Corpus parse_corpus(std::string_view ndjson, Schema schema, std::size_t num_classes = 0);
void write_corpus(const Corpus& corpus, const std::filesystem::path& path);

class Tokenizer {
 public:
  static constexpr std::string_view kPad = "[PAD]";
  static constexpr std::string_view kMask = "[MASK]";
  static constexpr std::string_view kCls = "[CLS]";
  static constexpr std::string_view kUnk = "[UNK]";

  Tokenizer();  // specials only
  explicit Tokenizer(std::vector<std::string> vocabulary, std::size_t max_seq_len = 0);

  std::size_t size() const noexcept { return words_.size(); }
  std::size_t max_seq_len() const noexcept { return max_seq_len_; }
  int id(std::string_view word) const;  // [UNK] id for unseen words
  bool contains(std::string_view word) const;
  const std::string& word(int id) const;
  const std::vector<std::string>& vocabulary() const noexcept { return words_; }

  // [CLS] followed by one id per whitespace word.
  std::vector<int> encode(std::string_view text) const;
  std::vector<int> encode_words(const std::vector<std::string>& words) const;
  std::vector<std::string> decode(const std::vector<int>& ids) const;

  void save(const std::filesystem::path& path) const;
  static Tokenizer load(const std::filesystem::path& path, std::size_t max_seq_len = 0);

  bool operator==(const Tokenizer& other) const { return words_ == other.words_; }

 private:
  std::vector<std::string> words_;
  std::unordered_map<std::string, int> ids_;
  std::size_t max_seq_len_ = 0;
};

// The max_vocab - 4 most frequent words (ties broken lexicographically) after the specials.
Tokenizer build_vocab(const Corpus& corpus, std::size_t max_vocab, std::size_t max_seq_len = 0);

}  // namespace unirobust
