#pragma once

#include <string>
#include <vector>

#include "fashionfb/corpus.hpp"
#include "fashionfb/vocab.hpp"

namespace fashionfb {

// Rule-based noun-phrase chunking over the POS lexicon, and the repetition
// rules used to filter decoded sentences.
//
// A noun phrase is a maximal contiguous run matching
//   DET? (ADJ|NOUN|NUM)* NOUN+
// with the last NOUN as head. Possessive pronouns act as determiners here
// ("your black leggings" is one phrase), so PRON fills the DET slot too.
// Tokens missing from the lexicon are treated as OTHER and never chunk.

struct NounPhrase {
  int start = 0;  // half-open token span [start, end)
  int end = 0;
  int head = 0;  // index of the head noun (the last NOUN in the span)
};

std::vector<NounPhrase> chunk_noun_phrases(const std::vector<std::string>& tokens,
                                           const Lexicon& lexicon);

enum class FilterRule { None, WordRepeatInNp, NounRepeatGlobal, FullNpRepeat };

const char* filter_rule_name(FilterRule rule);

struct FilterVerdict {
  bool valid = true;
  FilterRule rule = FilterRule::None;
  std::vector<NounPhrase> evidence;  // offending phrase(s), empty when valid
};

// Rule A (both types): no token twice within one phrase.
// Rule B (GOOD): no noun token in two different phrases.
// Rule C (TIP): no two phrases identical once determiners/pronouns are
//   stripped ("swap your black leggings for black leggings" repeats the
//   phrase even though the surface forms differ by "your").
// The first violated rule in the order A, B, C is reported.
FilterVerdict validate_sentence(const std::vector<std::string>& tokens, FeedbackType type,
                                const Lexicon& lexicon);

}  // namespace fashionfb
