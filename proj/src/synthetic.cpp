#include "unirobust/synthetic.hpp"

#include <random>
#include <string>
#include <vector>

#include "unirobust/error.hpp"

namespace unirobust {

namespace {

using Words = std::vector<std::string>;

const Words kDet{"the", "this", "that", "our", "my"};
const Words kNoun{"movie", "film", "show", "book", "story", "plot", "cast", "actor", "script", "scene",
                  "song", "album", "meal", "dinner", "service", "staff", "room", "hotel", "trip", "game",
                  "phone", "camera", "screen", "car", "product", "price", "team", "class", "lecture", "course"};
const Words kVerb{"was", "is", "seemed", "felt", "looked", "sounded"};
const Words kIntens{"very", "really", "quite", "truly", "so", "rather", "fairly", "extremely", "pretty", "somewhat"};
const Words kPositive{"good", "great", "excellent", "wonderful", "amazing", "lovely", "brilliant",
                      "pleasant", "enjoyable", "fantastic", "superb", "delightful", "charming", "solid",
                      "fun", "beautiful", "impressive", "perfect", "nice", "fresh"};
const Words kNegative{"bad", "awful", "terrible", "poor", "boring", "dull", "horrible",
                      "weak", "annoying", "disappointing", "mediocre", "bland", "messy", "ugly",
                      "stale", "clumsy", "painful", "lousy", "sloppy", "tedious"};
const Words kRarePositive{"splendid", "marvelous", "terrific", "stellar", "admirable",
                          "fine", "neat", "grand", "sweet", "cool"};
const Words kRareNegative{"dreadful", "atrocious", "dismal", "shoddy", "lame",
                          "crummy", "drab", "inferior", "subpar", "grim"};
const Words kNeutral{"big", "small", "long", "short", "new", "old", "early", "late",
                     "loud", "quiet", "simple", "busy", "modern", "local", "typical"};
const Words kConnector{"and", "while", "also", "although", "whereas"};
const std::vector<Words> kOpener{{"honestly"}, {"frankly"}, {"overall"}, {"i", "think"}, {"we", "felt"},
                                 {"in", "my", "opinion"}, {"everyone", "said"}, {"to", "be", "fair"}};
const std::vector<Words> kCloser{{"today"}, {"yesterday"}, {"again"}, {"for", "the", "price"},
                                 {"at", "the", "end"}, {"from", "the", "start"}, {"most", "of", "the", "time"},
                                 {"with", "friends"}, {"on", "the", "weekend"}};

// Topic keywords: 15 common then 5 rare per class.
const std::vector<Words> kTopic{
    {"match", "goal", "coach", "league", "season", "player", "stadium", "score", "tournament", "striker",
     "referee", "championship", "playoff", "trophy", "athlete", "midfielder", "umpire", "sprinter", "relay", "derby"},
    {"market", "stock", "profit", "company", "bank", "investor", "merger", "revenue", "shares", "economy",
     "earnings", "startup", "tax", "trade", "budget", "dividend", "bondholder", "audit", "tariff", "ledger"},
    {"research", "study", "lab", "scientist", "experiment", "physics", "genome", "telescope", "vaccine", "climate",
     "robot", "data", "theory", "species", "chemistry", "neutrino", "enzyme", "fossil", "quasar", "protein"},
    {"election", "minister", "government", "treaty", "border", "summit", "embassy", "parliament", "protest", "refugee",
     "diplomat", "president", "war", "ceasefire", "sanctions", "envoy", "referendum", "coalition", "junta", "exile"}};
const Words kReport{"report", "article", "story", "headline", "update", "bulletin", "column", "piece"};
const Words kReportVerb{"was", "is", "came", "ran", "appeared"};

template <class T>
const T& pick(const std::vector<T>& items, std::mt19937_64& rng) {
  return items[std::uniform_int_distribution<std::size_t>(0, items.size() - 1)(rng)];
}

bool chance(double p, std::mt19937_64& rng) { return std::uniform_real_distribution<double>(0.0, 1.0)(rng) < p; }

void append(Words& out, const Words& more) { out.insert(out.end(), more.begin(), more.end()); }

std::string class_adjective(int label, std::mt19937_64& rng) {
  const bool rare = chance(0.1, rng);
  if (label == 0) return pick(rare ? kRareNegative : kNegative, rng);
  return pick(rare ? kRarePositive : kPositive, rng);
}

void sentiment_clause(Words& out, const std::string& adjective, std::mt19937_64& rng) {
  out.push_back(pick(kDet, rng));
  out.push_back(pick(kNoun, rng));
  out.push_back(pick(kVerb, rng));
  if (chance(0.5, rng)) out.push_back(pick(kIntens, rng));
  out.push_back(adjective);
}

// label 0 = negative, 1 = positive
std::string sentiment_sentence(int label, std::mt19937_64& rng) {
  Words w;
  if (chance(0.5, rng)) append(w, pick(kOpener, rng));
  sentiment_clause(w, class_adjective(label, rng), rng);
  if (chance(0.7, rng)) {
    w.push_back(pick(kConnector, rng));
    sentiment_clause(w, chance(0.7, rng) ? class_adjective(label, rng) : pick(kNeutral, rng), rng);
  }
  if (chance(0.5, rng)) append(w, pick(kCloser, rng));
  return join_words(w);
}

std::string topic_keyword(int label, std::mt19937_64& rng) {
  const auto& words = kTopic[static_cast<std::size_t>(label)];
  const std::size_t i = chance(0.1, rng) ? 15 + std::uniform_int_distribution<std::size_t>(0, 4)(rng)
                                          : std::uniform_int_distribution<std::size_t>(0, 14)(rng);
  return words[i];
}

std::string topic_sentence(int label, std::mt19937_64& rng) {
  Words w;
  if (chance(0.5, rng)) append(w, pick(kOpener, rng));
  w.push_back(pick(kDet, rng));
  w.push_back(pick(kReport, rng));
  w.push_back(pick(kReportVerb, rng));
  w.push_back("about");
  w.push_back(pick(kDet, rng));
  w.push_back(topic_keyword(label, rng));
  if (chance(0.7, rng)) {
    w.push_back("and");
    w.push_back(pick(kDet, rng));
    w.push_back(topic_keyword(label, rng));
  }
  if (chance(0.5, rng)) append(w, pick(kCloser, rng));
  return join_words(w);
}

Corpus make_corpus(std::size_t count, std::size_t classes, std::mt19937_64& rng) {
  Corpus c;
  c.schema = Schema::classification;
  for (std::size_t k = 0; k < classes; ++k) c.label_names.push_back(std::to_string(k));
  if (classes == 2) c.label_names = {"negative", "positive"};
  if (classes == 4) c.label_names = {"sports", "business", "science", "world"};
  for (std::size_t i = 0; i < count; ++i) {
    const int label = static_cast<int>(i % classes);
    c.samples.push_back({classes == 2 ? sentiment_sentence(label, rng) : topic_sentence(label, rng), label});
  }
  return c;
}

SynonymTable sentiment_synonyms() {
  SynonymTable t;
  for (std::size_t i = 0; i < kPositive.size(); ++i) {
    t.add(kPositive[i], {kRarePositive[i % 10], kRarePositive[(i + 3) % 10]});
    t.add(kNegative[i], {kRareNegative[i % 10], kRareNegative[(i + 3) % 10]});
  }
  t.add("movie", {"film"});
  t.add("film", {"movie"});
  t.add("meal", {"dinner"});
  t.add("dinner", {"meal"});
  t.add("room", {"hotel"});
  t.add("song", {"album"});
  t.add("book", {"story"});
  t.add("course", {"class", "lecture"});
  t.add("lecture", {"class"});
  t.add("phone", {"camera"});
  return t;
}

SynonymTable topic_synonyms() {
  SynonymTable t;
  for (std::size_t k = 0; k < kTopic.size(); ++k) {
    for (std::size_t i = 0; i < 12; ++i) {
      t.add(kTopic[k][i], {kTopic[k][15 + i % 5]});
    }
  }
  t.add("report", {"article"});
  t.add("story", {"piece"});
  return t;
}

}  // namespace

SyntheticData generate_synthetic(const SyntheticSpec& spec) {
  if (spec.classes != 2 && spec.classes != 4) fail(ErrorCode::config, "synthetic.classes must be 2 or 4");
  if (spec.train == 0 || spec.test == 0) fail(ErrorCode::config, "synthetic train and test sizes must be positive");
  std::mt19937_64 rng(spec.seed);
  SyntheticData data;
  data.train = make_corpus(spec.train, spec.classes, rng);
  data.test = make_corpus(spec.test, spec.classes, rng);
  data.synonyms = spec.classes == 2 ? sentiment_synonyms() : topic_synonyms();
  return data;
}

}  // namespace unirobust
