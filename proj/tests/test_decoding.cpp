#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <functional>
#include <map>

#include "fashionfb/decoding.hpp"
#include "fashionfb/models.hpp"
#include "fashionfb/rng.hpp"

using namespace fashionfb;

namespace {

FeatureGrid random_grid(DetRng& rng, int h, int w, int d) {
  FeatureGrid g(h, w, d);
  for (float& v : g.values) v = static_cast<float>(rng.uniform(-1.0, 1.0));
  return g;
}

ModelDims tiny_dims(int vocab) {
  ModelDims d;
  d.vocab = vocab;
  d.embed = 8;
  d.hidden = 8;
  d.attn = 8;
  d.feat_in = 6;
  d.feat = 8;
  return d;
}

// Exhaustively scores every finished word sequence of at most max_length
// generation steps under the stepwise MMI objective.
struct Enumerated {
  std::vector<int> ids;
  double score = 0.0;
};

Enumerated enumerate_best(Stepper& captioner, Stepper* lm, const DecodingConfig& config) {
  const int vocab = captioner.vocab_size();
  Enumerated best;
  bool have_best = false;

  std::vector<int> words;
  auto score_sequence = [&](const std::vector<int>& seq) {
    std::vector<double> s(captioner.state_size()), ns(captioner.state_size()),
        logp(vocab);
    std::vector<double> ls, lns, llogp;
    captioner.init_state(s.data());
    if (lm) {
      ls.resize(lm->state_size());
      lns.resize(lm->state_size());
      llogp.resize(vocab);
      lm->init_state(ls.data());
    }
    std::vector<int> ids = {0};
    for (int w : seq) ids.push_back(w);
    ids.push_back(1);
    double total = 0.0;
    for (std::size_t t = 1; t < ids.size(); ++t) {
      captioner.step(s.data(), ids[t - 1], ns.data(), logp.data());
      std::swap(s, ns);
      double prior = 0.0;
      if (lm) {
        lm->step(ls.data(), ids[t - 1], lns.data(), llogp.data());
        std::swap(ls, lns);
        prior = llogp[ids[t]];
      }
      total += logp[ids[t]] - mmi_step_weight(static_cast<int>(t), config) * prior;
    }
    std::vector<int> framed = ids;
    if (!have_best || total > best.score || (total == best.score && framed < best.ids)) {
      best = {framed, total};
      have_best = true;
    }
  };

  // sequences with n words need n+1 generation steps (the end token)
  std::function<void(int)> recurse = [&](int remaining) {
    score_sequence(words);
    if (remaining == 0) return;
    for (int w = 2; w < vocab; ++w) {  // skip begin and end ids
      words.push_back(w);
      recurse(remaining - 1);
      words.pop_back();
    }
  };
  recurse(config.max_length - 1);
  return best;
}

// Scripted stepper: log-probabilities looked up by prefix, uniform when a
// prefix is missing. State carries the prefix itself (ids as doubles).
class PuppetStepper : public Stepper {
 public:
  PuppetStepper(int vocab, int max_len) : vocab_(vocab), max_len_(max_len) {}

  void set(const std::vector<int>& prefix, std::map<int, double> probs) {
    table_[prefix] = std::move(probs);
  }

  int vocab_size() const override { return vocab_; }
  int state_size() const override { return max_len_ + 1; }  // [len, ids...]

  void init_state(double* state) const override {
    for (int i = 0; i <= max_len_; ++i) state[i] = 0.0;
  }

  void step(const double* state, int prev_id, double* next_state, double* logp) const override {
    std::vector<int> prefix;
    const int len = static_cast<int>(state[0]);
    for (int i = 0; i < len; ++i) prefix.push_back(static_cast<int>(state[i + 1]));
    prefix.push_back(prev_id);

    for (int i = 0; i <= max_len_; ++i) next_state[i] = state[i];
    next_state[0] = len + 1;
    next_state[len + 1] = prev_id;

    auto it = table_.find(prefix);
    if (it == table_.end()) {
      const double uniform = -std::log(static_cast<double>(vocab_));
      for (int w = 0; w < vocab_; ++w) logp[w] = uniform;
      return;
    }
    double rest_mass = 1.0;
    int rest_count = vocab_;
    for (const auto& kv : it->second) {
      rest_mass -= kv.second;
      --rest_count;
    }
    const double rest = std::log(std::max(rest_mass, 1e-12) / std::max(rest_count, 1));
    for (int w = 0; w < vocab_; ++w) logp[w] = rest;
    for (const auto& [w, p] : it->second) logp[w] = std::log(p);
  }

 private:
  int vocab_;
  int max_len_;
  std::map<std::vector<int>, std::map<int, double>> table_;
};

}  // namespace

TEST_CASE("mmi step weight follows the schedule") {
  DecodingConfig c;
  c.beta = 0.4;
  c.beta_zero_after_step = 11;
  CHECK(mmi_step_weight(1, c) == 0.4);
  CHECK(mmi_step_weight(11, c) == 0.4);
  CHECK(mmi_step_weight(12, c) == 0.0);
  c.beta = 0.0;
  for (int t = 1; t < 30; ++t) CHECK(mmi_step_weight(t, c) == 0.0);
  CHECK_THROWS(mmi_step_weight(0, c));
}

TEST_CASE("beam search with exhaustive width equals full enumeration") {
  DetRng rng(41);
  ModelDims d = tiny_dims(5);  // begin, end, three words
  TopDownParams params;
  params.init(d, rng);
  LMParams lm_params;
  lm_params.init(d, rng);
  // spread the parameters so sequences have distinct scores
  for (Tensor* t : params.all())
    for (double& v : t->data) v = rng.uniform(-0.9, 0.9);
  for (Tensor* t : lm_params.all())
    for (double& v : t->data) v = rng.uniform(-0.9, 0.9);

  FeatureGrid g = random_grid(rng, 2, 3, d.feat_in);
  ImageContext ctx = make_image_context(g, params);
  TopDownStepper captioner(params, ctx);
  LMStepper lm(lm_params);

  for (double beta : {0.0, 0.4, 1.0}) {
    DecodingConfig config;
    config.beam_width = 200;  // the finished pool holds at most 13 sequences
    config.beta = beta;
    config.beta_zero_after_step = 2;  // schedule changes inside the horizon
    config.max_length = 3;
    config.filter_enabled = false;

    Enumerated want = enumerate_best(captioner, &lm, config);
    BeamResult got = beam_search(captioner, &lm, config);
    REQUIRE_FALSE(got.ran_out);
    CHECK(got.pool.front().ids == want.ids);
    CHECK(got.pool.front().score == doctest::Approx(want.score).epsilon(1e-12));
  }
}

TEST_CASE("beta zero reduces to standard decoding") {
  DetRng rng(42);
  ModelDims d = tiny_dims(9);
  TopDownParams params;
  params.init(d, rng);
  LMParams lm_params;
  lm_params.init(d, rng);

  DecodingConfig standard;
  standard.beam_width = 4;
  standard.beta = 0.0;
  standard.max_length = 10;
  standard.filter_enabled = false;

  for (int img = 0; img < 5; ++img) {
    FeatureGrid g = random_grid(rng, 2, 3, d.feat_in);
    ImageContext ctx = make_image_context(g, params);
    TopDownStepper captioner(params, ctx);
    LMStepper lm(lm_params);

    BeamResult with_lm = beam_search(captioner, &lm, standard);
    BeamResult plain = beam_search(captioner, nullptr, standard);
    REQUIRE(with_lm.pool.size() == plain.pool.size());
    for (std::size_t i = 0; i < with_lm.pool.size(); ++i) {
      CHECK(with_lm.pool[i].ids == plain.pool[i].ids);
      CHECK(with_lm.pool[i].score == plain.pool[i].score);
      CHECK(with_lm.pool[i].score == with_lm.pool[i].logp_cond);
    }
  }
}

TEST_CASE("width-1 beam equals greedy decoding at beta zero") {
  DetRng rng(43);
  ModelDims d = tiny_dims(9);
  TopDownParams params;
  params.init(d, rng);
  FeatureGrid g = random_grid(rng, 2, 3, d.feat_in);
  ImageContext ctx = make_image_context(g, params);
  TopDownStepper captioner(params, ctx);

  DecodingConfig config;
  config.beam_width = 1;
  config.beta = 0.0;
  config.max_length = 12;
  config.filter_enabled = false;
  BeamResult beam = beam_search(captioner, nullptr, config);

  // hand greedy loop: argmax token each step, lowest id on ties
  std::vector<int> ids = {0};
  std::vector<double> s(captioner.state_size()), ns(captioner.state_size()), logp(d.vocab);
  captioner.init_state(s.data());
  for (int t = 0; t < config.max_length; ++t) {
    captioner.step(s.data(), ids.back(), ns.data(), logp.data());
    std::swap(s, ns);
    int arg = 1;
    for (int w = 1; w < d.vocab; ++w)
      if (logp[w] > logp[arg]) arg = w;
    ids.push_back(arg);
    if (arg == 1) break;
  }
  CHECK(beam.pool.front().ids == ids);
}

TEST_CASE("decoding is deterministic") {
  DetRng rng(44);
  ModelDims d = tiny_dims(9);
  TopDownParams params;
  params.init(d, rng);
  LMParams lm_params;
  lm_params.init(d, rng);
  FeatureGrid g = random_grid(rng, 2, 3, d.feat_in);
  ImageContext ctx = make_image_context(g, params);
  TopDownStepper captioner(params, ctx);
  LMStepper lm(lm_params);

  DecodingConfig config;
  config.beam_width = 5;
  config.max_length = 10;
  config.filter_enabled = false;
  BeamResult a = beam_search(captioner, &lm, config);
  BeamResult b = beam_search(captioner, &lm, config);
  REQUIRE(a.pool.size() == b.pool.size());
  for (std::size_t i = 0; i < a.pool.size(); ++i) {
    CHECK(a.pool[i].ids == b.pool[i].ids);
    CHECK(a.pool[i].score == b.pool[i].score);
  }
}

TEST_CASE("ties break lexicographically on a uniform model") {
  PuppetStepper uniform(6, 12);  // every prefix missing -> uniform rows
  DecodingConfig config;
  config.beam_width = 4;
  config.beta = 0.0;
  config.max_length = 12;
  BeamResult beam = beam_search(uniform, nullptr, config);

  // All children tie each step, so the kept slots go to the smallest word ids
  // of the lexicographically first parent. One sentence retires per step.
  REQUIRE(beam.pool.size() == 4);
  CHECK(beam.pool[0].ids == std::vector<int>{0, 1});
  CHECK(beam.pool[0].score == doctest::Approx(std::log(1.0 / 6.0)).epsilon(1e-12));
  CHECK(beam.pool[1].ids == std::vector<int>{0, 2, 1});
  CHECK(beam.pool[1].score == doctest::Approx(2 * std::log(1.0 / 6.0)).epsilon(1e-12));
  CHECK(beam.pool[2].ids == std::vector<int>{0, 2, 2, 1});
  CHECK(beam.pool[3].ids == std::vector<int>{0, 2, 2, 2, 1});
}

TEST_CASE("hypothesis bookkeeping matches the schedule") {
  DetRng rng(45);
  ModelDims d = tiny_dims(7);
  TopDownParams params;
  params.init(d, rng);
  LMParams lm_params;
  lm_params.init(d, rng);
  FeatureGrid g = random_grid(rng, 2, 2, d.feat_in);
  ImageContext ctx = make_image_context(g, params);
  TopDownStepper captioner(params, ctx);
  LMStepper lm(lm_params);

  DecodingConfig config;
  config.beam_width = 6;
  config.beta = 0.4;
  config.beta_zero_after_step = 100;  // constant beta inside the horizon
  config.max_length = 8;
  config.filter_enabled = false;
  BeamResult beam = beam_search(captioner, &lm, config);

  for (const Hypothesis& h : beam.pool) {
    CHECK(h.finished);
    CHECK(h.ids.back() == 1);
    CHECK(h.logp_cond <= 0.0);
    CHECK(h.logp_prior <= 0.0);
    // constant beta: score folds to cond - beta * prior
    CHECK(h.score ==
          doctest::Approx(h.logp_cond - config.beta * h.logp_prior).epsilon(1e-12));
  }
}

TEST_CASE("larger beams never score worse on the same objective") {
  DetRng rng(46);
  ModelDims d = tiny_dims(8);
  for (int trial = 0; trial < 10; ++trial) {
    TopDownParams params;
    params.init(d, rng);
    for (Tensor* t : params.all())
      for (double& v : t->data) v = rng.uniform(-0.8, 0.8);
    FeatureGrid g = random_grid(rng, 2, 2, d.feat_in);
    ImageContext ctx = make_image_context(g, params);
    TopDownStepper captioner(params, ctx);

    DecodingConfig config;
    config.beta = 0.0;
    config.max_length = 10;
    config.filter_enabled = false;
    double prev = -1e300;
    for (int k : {1, 3, 10}) {
      config.beam_width = k;
      BeamResult beam = beam_search(captioner, nullptr, config);
      CHECK(beam.pool.front().score >= prev - 1e-12);
      prev = beam.pool.front().score;
    }
  }
}

TEST_CASE("decode_image applies the repetition filter in rank order") {
  // vocabulary: specials + swap your black jacket for white
  Lexicon lex;
  lex["swap"] = Pos::Verb;
  lex["your"] = Pos::Pron;
  lex["black"] = Pos::Adj;
  lex["jacket"] = Pos::Noun;
  lex["for"] = Pos::Prep;
  lex["white"] = Pos::Adj;
  std::vector<std::vector<std::string>> sentences(
      6, {"swap", "your", "black", "jacket", "for", "white"});
  Vocabulary vocab = Vocabulary::build(sentences, lex, 0);
  REQUIRE(vocab.size() == 9);  // 3 specials + 6 words

  auto id = [&](const std::string& t) { return vocab.token_id(t); };
  const int kSwap = id("swap"), kYour = id("your"), kBlack = id("black"),
            kJacket = id("jacket"), kFor = id("for"), kWhite = id("white");

  // Script two finished sentences; the higher-scoring one repeats the phrase.
  // Mid-sentence prefixes pin the end id to ~zero so no stray early finisher
  // can fill the pool before the scripted endings retire.
  PuppetStepper puppet(vocab.size(), 16);
  auto line = [&](std::initializer_list<int> prefix, int next, double p) {
    std::map<int, double> probs = {{next, p}};
    if (next != 1) probs[1] = 1e-9;
    puppet.set(std::vector<int>(prefix), std::move(probs));
  };
  // "swap your black jacket for black jacket" (score ~ log .9^8)
  // "swap your black jacket for white jacket" (via the .08 branch at "for")
  line({0}, kSwap, 0.9);
  line({0, kSwap}, kYour, 0.9);
  line({0, kSwap, kYour}, kBlack, 0.9);
  line({0, kSwap, kYour, kBlack}, kJacket, 0.9);
  line({0, kSwap, kYour, kBlack, kJacket}, kFor, 0.9);
  puppet.set({0, kSwap, kYour, kBlack, kJacket, kFor},
             {{kBlack, 0.9}, {kWhite, 0.08}, {1, 1e-9}});
  line({0, kSwap, kYour, kBlack, kJacket, kFor, kBlack}, kJacket, 0.9);
  line({0, kSwap, kYour, kBlack, kJacket, kFor, kBlack, kJacket}, 1, 0.9);
  line({0, kSwap, kYour, kBlack, kJacket, kFor, kWhite}, kJacket, 0.9);
  line({0, kSwap, kYour, kBlack, kJacket, kFor, kWhite, kJacket}, 1, 0.9);

  DecodingConfig config;
  config.beam_width = 4;
  config.beta = 0.0;
  config.max_length = 12;
  config.feedback_type = FeedbackType::Tip;

  SUBCASE("clean runner-up wins when the filter is on") {
    config.filter_enabled = true;
    DecodeResult r = decode_image(puppet, nullptr, vocab, lex, config);
    CHECK(r.tokens == std::vector<std::string>{"swap", "your", "black", "jacket", "for",
                                               "white", "jacket"});
    CHECK_FALSE(r.filtered_fallback);
    CHECK(r.filtered_count == 1);
  }

  SUBCASE("filter off returns the raw top hypothesis") {
    config.filter_enabled = false;
    DecodeResult r = decode_image(puppet, nullptr, vocab, lex, config);
    CHECK(r.tokens == std::vector<std::string>{"swap", "your", "black", "jacket", "for",
                                               "black", "jacket"});
    CHECK(r.filtered_count == 0);
  }

  SUBCASE("fully invalid pools fall back with the flag set") {
    config.filter_enabled = true;
    config.beam_width = 1;  // only the repeating sentence survives
    DecodeResult r = decode_image(puppet, nullptr, vocab, lex, config);
    CHECK(r.filtered_fallback);
    CHECK(r.tokens == std::vector<std::string>{"swap", "your", "black", "jacket", "for",
                                               "black", "jacket"});
  }
}

TEST_CASE("running out of length returns the best unfinished hypothesis") {
  // Two words soak up both beam slots every step, so the end token never
  // survives into the kept set and nothing retires.
  PuppetStepper puppet(5, 8);
  puppet.set({0}, {{3, 0.6}, {4, 0.39}});
  puppet.set({0, 3}, {{3, 0.6}, {4, 0.39}});
  puppet.set({0, 3, 3}, {{3, 0.6}, {4, 0.39}});

  Lexicon lex;
  lex["w"] = Pos::Other;
  lex["x"] = Pos::Other;
  Vocabulary vocab = Vocabulary::build({{"w", "x"}, {"w", "x"}}, lex, 0);
  REQUIRE(vocab.size() == 5);

  DecodingConfig config;
  config.beam_width = 2;
  config.beta = 0.0;
  config.max_length = 3;
  config.filter_enabled = true;

  DecodeResult r = decode_image(puppet, nullptr, vocab, lex, config);
  CHECK(r.ran_out);
  CHECK_FALSE(r.filtered_fallback);
  CHECK(r.tokens.size() == 3);
}
