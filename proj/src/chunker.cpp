#include "fashionfb/chunker.hpp"

#include <map>

namespace fashionfb {

namespace {

Pos tag_of(const std::string& token, const Lexicon& lexicon) {
  auto it = lexicon.find(token);
  return it == lexicon.end() ? Pos::Other : it->second;
}

bool is_det_class(Pos p) { return p == Pos::Det || p == Pos::Pron; }

bool is_run_class(Pos p) { return p == Pos::Adj || p == Pos::Noun || p == Pos::Num; }

// Phrase tokens with determiners/pronouns stripped, for whole-phrase
// comparison under rule C.
std::vector<std::string> content_tokens(const NounPhrase& np,
                                        const std::vector<std::string>& tokens,
                                        const Lexicon& lexicon) {
  std::vector<std::string> out;
  for (int i = np.start; i < np.end; ++i)
    if (!is_det_class(tag_of(tokens[i], lexicon))) out.push_back(tokens[i]);
  return out;
}

}  // namespace

std::vector<NounPhrase> chunk_noun_phrases(const std::vector<std::string>& tokens,
                                           const Lexicon& lexicon) {
  const int n = static_cast<int>(tokens.size());
  std::vector<NounPhrase> phrases;
  int i = 0;
  while (i < n) {
    int j = i;
    if (is_det_class(tag_of(tokens[j], lexicon))) ++j;
    int last_noun = -1;
    while (j < n && is_run_class(tag_of(tokens[j], lexicon))) {
      if (tag_of(tokens[j], lexicon) == Pos::Noun) last_noun = j;
      ++j;
    }
    if (last_noun >= 0) {
      phrases.push_back({i, last_noun + 1, last_noun});
      i = last_noun + 1;
    } else {
      ++i;
    }
  }
  return phrases;
}

const char* filter_rule_name(FilterRule rule) {
  switch (rule) {
    case FilterRule::None: return "none";
    case FilterRule::WordRepeatInNp: return "word-repeat-in-NP";
    case FilterRule::NounRepeatGlobal: return "noun-repeat-global";
    case FilterRule::FullNpRepeat: return "full-NP-repeat";
  }
  return "none";
}

FilterVerdict validate_sentence(const std::vector<std::string>& tokens, FeedbackType type,
                                const Lexicon& lexicon) {
  const std::vector<NounPhrase> phrases = chunk_noun_phrases(tokens, lexicon);

  // Rule A: a word cannot repeat within one noun phrase.
  for (const NounPhrase& np : phrases) {
    std::map<std::string, int> counts;
    for (int i = np.start; i < np.end; ++i)
      if (++counts[tokens[i]] > 1) return {false, FilterRule::WordRepeatInNp, {np}};
  }

  if (type == FeedbackType::Good) {
    // Rule B: a noun cannot appear in two different phrases.
    std::map<std::string, std::size_t> first_seen;
    for (std::size_t k = 0; k < phrases.size(); ++k)
      for (int i = phrases[k].start; i < phrases[k].end; ++i) {
        if (tag_of(tokens[i], lexicon) != Pos::Noun) continue;
        auto [it, fresh] = first_seen.emplace(tokens[i], k);
        if (!fresh && it->second != k)
          return {false, FilterRule::NounRepeatGlobal, {phrases[it->second], phrases[k]}};
      }
  } else {
    // Rule C: no two phrases may repeat wholesale once determiners are
    // stripped; mentioning the same garment twice is fine if it is
    // qualified differently ("black leggings" vs "white leggings").
    std::vector<std::vector<std::string>> contents;
    contents.reserve(phrases.size());
    for (const NounPhrase& np : phrases)
      contents.push_back(content_tokens(np, tokens, lexicon));
    for (std::size_t a = 0; a < phrases.size(); ++a)
      for (std::size_t b = a + 1; b < phrases.size(); ++b)
        if (contents[a] == contents[b])
          return {false, FilterRule::FullNpRepeat, {phrases[a], phrases[b]}};
  }

  return {};
}

}  // namespace fashionfb
