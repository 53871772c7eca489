#pragma once

// Synthetic dialogue data with planted structure: topic words shared between
// context and response, an elliptical last utterance, and template tasks
// whose correct rewrite is known.

#include <cstdint>
#include <vector>

#include "ctxrw/corpus.hpp"

namespace ctxrw::synth {

struct DialogueConfig {
  std::size_t sessions = 200;
  std::size_t topics = 8;
  std::size_t words_per_topic = 10;
  std::size_t filler_words = 20;
  std::size_t context_turns = 2;
  std::size_t min_len = 3;
  std::size_t max_len = 7;
  std::uint64_t seed = 1;
};

/// Sessions on one topic each: context utterances mix filler and topic words,
/// the last utterance is filler plus a pronoun, and the response repeats
/// topic words.
std::vector<DialogueSession> dialogues(const DialogueConfig& config);

/// q* = q over random short utterances drawn from a vocabulary of `vocab` words.
std::vector<PseudoQuadruplet> identity_task(std::size_t n, std::size_t vocab, std::uint64_t seed);

/// The context carries one keyword; q* is q with that keyword inserted right
/// after q's first token.
std::vector<PseudoQuadruplet> insertion_task(std::size_t n, std::uint64_t seed);

}  // namespace ctxrw::synth
