#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <set>

#include "fashionfb/chunker.hpp"
#include "fashionfb/rng.hpp"

using namespace fashionfb;

namespace {

Lexicon test_lexicon() {
  Lexicon lex = synth_lexicon();
  lex["leggings"] = Pos::Noun;
  lex["complement"] = Pos::Verb;
  return lex;
}

std::vector<std::string> words(const std::string& sentence) {
  return preprocess_sentence(sentence);
}

std::string phrase_text(const NounPhrase& np, const std::vector<std::string>& tokens) {
  std::string out;
  for (int i = np.start; i < np.end; ++i) {
    if (!out.empty()) out += ' ';
    out += tokens[i];
  }
  return out;
}

}  // namespace

TEST_CASE("chunking finds the maximal determiner-adjective-noun runs") {
  const Lexicon lex = test_lexicon();

  SUBCASE("single phrase with stacked adjectives") {
    auto toks = words("add a black striped jacket");
    auto nps = chunk_noun_phrases(toks, lex);
    REQUIRE(nps.size() == 1);
    CHECK(phrase_text(nps[0], toks) == "a black striped jacket");
    CHECK(toks[nps[0].head] == "jacket");
  }

  SUBCASE("possessive pronoun opens a phrase") {
    auto toks = words("swap your black leggings for white leggings");
    auto nps = chunk_noun_phrases(toks, lex);
    REQUIRE(nps.size() == 2);
    CHECK(phrase_text(nps[0], toks) == "your black leggings");
    CHECK(phrase_text(nps[1], toks) == "white leggings");
    CHECK(toks[nps[0].head] == "leggings");
    CHECK(toks[nps[1].head] == "leggings");
  }

  SUBCASE("no nouns means no phrases") {
    CHECK(chunk_noun_phrases(words("very nice on you"), lex).empty());
    CHECK(chunk_noun_phrases({}, lex).empty());
  }

  SUBCASE("head is the last noun even with trailing modifiers in the run") {
    auto toks = words("the coat dress looks great");
    auto nps = chunk_noun_phrases(toks, lex);
    REQUIRE(nps.size() == 1);
    CHECK(phrase_text(nps[0], toks) == "the coat dress");
    CHECK(toks[nps[0].head] == "dress");
  }

  SUBCASE("adjectives after the last noun stay outside the phrase") {
    // "beautiful" extends the run but no noun follows it
    auto toks = words("the jacket beautiful");
    auto nps = chunk_noun_phrases(toks, lex);
    REQUIRE(nps.size() == 1);
    CHECK(phrase_text(nps[0], toks) == "the jacket");
  }

  SUBCASE("unknown tokens act as plain words and break runs") {
    auto toks = words("the zorp jacket");
    auto nps = chunk_noun_phrases(toks, lex);
    REQUIRE(nps.size() == 1);
    CHECK(phrase_text(nps[0], toks) == "jacket");
  }

  SUBCASE("adjacent nouns merge into one phrase") {
    auto toks = words("jacket jacket");
    auto nps = chunk_noun_phrases(toks, lex);
    REQUIRE(nps.size() == 1);
    CHECK(nps[0].start == 0);
    CHECK(nps[0].end == 2);
  }
}

TEST_CASE("chunk spans are disjoint, ordered, and cover every noun") {
  const Lexicon lex = test_lexicon();
  DetRng rng(21);
  std::vector<std::string> pool;
  for (const auto& [token, pos] : lex) pool.push_back(token);

  for (int trial = 0; trial < 300; ++trial) {
    std::vector<std::string> toks;
    const int len = 1 + static_cast<int>(rng.below(12));
    for (int i = 0; i < len; ++i) toks.push_back(pool[rng.below(pool.size())]);
    auto nps = chunk_noun_phrases(toks, lex);

    int prev_end = 0;
    std::set<int> covered;
    for (const NounPhrase& np : nps) {
      CHECK(np.start >= prev_end);
      CHECK(np.start < np.end);
      CHECK(np.head >= np.start);
      CHECK(np.head < np.end);
      CHECK(lex.at(toks[np.head]) == Pos::Noun);
      prev_end = np.end;
      for (int i = np.start; i < np.end; ++i) covered.insert(i);
    }
    for (int i = 0; i < len; ++i) {
      auto it = lex.find(toks[i]);
      if (it != lex.end() && it->second == Pos::Noun) CHECK(covered.count(i) == 1);
    }
  }
}

TEST_CASE("the four reference sentences classify as published") {
  const Lexicon lex = test_lexicon();

  auto v1 = validate_sentence(words("add a black striped black jacket"), FeedbackType::Tip, lex);
  CHECK_FALSE(v1.valid);
  CHECK(v1.rule == FilterRule::WordRepeatInNp);

  auto v2 = validate_sentence(words("your leggings complement your black leggings"),
                              FeedbackType::Good, lex);
  CHECK_FALSE(v2.valid);
  CHECK(v2.rule == FilterRule::NounRepeatGlobal);
  REQUIRE(v2.evidence.size() == 2);

  auto v3 = validate_sentence(words("swap your black leggings for white leggings"),
                              FeedbackType::Tip, lex);
  CHECK(v3.valid);
  CHECK(v3.rule == FilterRule::None);
  CHECK(v3.evidence.empty());

  auto v4 = validate_sentence(words("swap your black leggings for black leggings"),
                              FeedbackType::Tip, lex);
  CHECK_FALSE(v4.valid);
  CHECK(v4.rule == FilterRule::FullNpRepeat);
  REQUIRE(v4.evidence.size() == 2);
  CHECK(v4.evidence[0].start == 1);
  CHECK(v4.evidence[1].start == 5);
}

TEST_CASE("rule A fires inside one phrase for both feedback types") {
  const Lexicon lex = test_lexicon();
  auto toks = words("add a black striped black jacket");
  CHECK_FALSE(validate_sentence(toks, FeedbackType::Good, lex).valid);
  CHECK_FALSE(validate_sentence(toks, FeedbackType::Tip, lex).valid);
  CHECK(validate_sentence(toks, FeedbackType::Good, lex).rule == FilterRule::WordRepeatInNp);
}

TEST_CASE("rule B is GOOD-only and rule C is TIP-only") {
  const Lexicon lex = test_lexicon();

  // same noun, differently qualified: invalid for GOOD (rule B), valid TIP
  auto repeat_noun = words("swap your black leggings for white leggings");
  CHECK_FALSE(validate_sentence(repeat_noun, FeedbackType::Good, lex).valid);
  CHECK(validate_sentence(repeat_noun, FeedbackType::Good, lex).rule ==
        FilterRule::NounRepeatGlobal);
  CHECK(validate_sentence(repeat_noun, FeedbackType::Tip, lex).valid);

  // distinct nouns everywhere: valid for both
  auto clean = words("the black jacket pairs well with the white skirt");
  CHECK(validate_sentence(clean, FeedbackType::Good, lex).valid);
  CHECK(validate_sentence(clean, FeedbackType::Tip, lex).valid);
}

TEST_CASE("whole-phrase repetition is judged on content words") {
  const Lexicon lex = test_lexicon();

  // determiner differences do not make phrases distinct
  CHECK_FALSE(
      validate_sentence(words("swap the black jacket for a black jacket"), FeedbackType::Tip, lex)
          .valid);
  // a changed adjective does
  CHECK(
      validate_sentence(words("swap the black jacket for a white jacket"), FeedbackType::Tip, lex)
          .valid);
  // bare noun matches its determiner-led twin
  CHECK_FALSE(
      validate_sentence(words("swap your jacket for jacket"), FeedbackType::Tip, lex).valid);
}

TEST_CASE("sentences with fewer than two phrases pass rules B and C") {
  const Lexicon lex = test_lexicon();
  for (FeedbackType type : {FeedbackType::Good, FeedbackType::Tip}) {
    CHECK(validate_sentence(words("this look suits you"), type, lex).valid);
    CHECK(validate_sentence(words("very nice on you"), type, lex).valid);
    CHECK(validate_sentence({}, type, lex).valid);
  }
}

TEST_CASE("a GOOD sentence with two identical phrases is always caught") {
  // rule C catching a TIP implies rule B catches the GOOD reading of the
  // same sentence: identical phrases share their head noun
  const Lexicon lex = test_lexicon();
  DetRng rng(22);
  std::vector<std::string> pool;
  for (const auto& [token, pos] : lex) pool.push_back(token);

  int checked = 0;
  for (int trial = 0; trial < 2000 && checked < 50; ++trial) {
    std::vector<std::string> toks;
    const int len = 2 + static_cast<int>(rng.below(10));
    for (int i = 0; i < len; ++i) toks.push_back(pool[rng.below(pool.size())]);
    auto tip = validate_sentence(toks, FeedbackType::Tip, lex);
    if (tip.rule != FilterRule::FullNpRepeat) continue;
    ++checked;
    CHECK_FALSE(validate_sentence(toks, FeedbackType::Good, lex).valid);
  }
  CHECK(checked > 0);
}

TEST_CASE("validation is deterministic") {
  const Lexicon lex = test_lexicon();
  auto toks = words("swap your black leggings for black leggings");
  auto a = validate_sentence(toks, FeedbackType::Tip, lex);
  auto b = validate_sentence(toks, FeedbackType::Tip, lex);
  CHECK(a.valid == b.valid);
  CHECK(a.rule == b.rule);
  REQUIRE(a.evidence.size() == b.evidence.size());
  for (std::size_t i = 0; i < a.evidence.size(); ++i) {
    CHECK(a.evidence[i].start == b.evidence[i].start);
    CHECK(a.evidence[i].end == b.evidence[i].end);
  }
}
