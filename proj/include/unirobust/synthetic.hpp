#pragma once

// Keyword-driven synthetic classification corpora and a matching synonym table.
//
// Two-class grammar (sentiment):
//   sentence := [opener] clause [connector clause] [closer]
//   clause   := det noun verb [intensifier] adjective
// The first clause always carries an adjective of the sentence's class. The
// second clause carries another class adjective with probability 0.7 and a
// neutral adjective otherwise. One class adjective in ten is drawn from a rarer
// list of the same polarity.
//
// Four-class grammar (news topic):
//   sentence := [opener] det report verb about det keyword [and det keyword] [closer]
// with 15 common and 5 rare keywords per topic (sports, business, science, world).
//
// The synonym table maps 50 words to same-meaning alternatives: common
// adjectives or keywords to their rarer counterparts, plus a few nouns.

#include <cstddef>
#include <cstdint>

#include "unirobust/attacks.hpp"
#include "unirobust/corpus.hpp"

namespace unirobust {

struct SyntheticSpec {
  std::size_t classes = 2;  // 2 or 4
  std::size_t train = 2000;
  std::size_t test = 500;
  std::uint64_t seed = 7;
};

struct SyntheticData {
  Corpus train;
  Corpus test;
  SynonymTable synonyms;
};

SyntheticData generate_synthetic(const SyntheticSpec& spec);

}  // namespace unirobust
