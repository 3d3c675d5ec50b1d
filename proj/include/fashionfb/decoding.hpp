#pragma once

#include <string>
#include <vector>

#include "fashionfb/chunker.hpp"
#include "fashionfb/models.hpp"
#include "fashionfb/vocab.hpp"

namespace fashionfb {

struct DecodingConfig {
  int beam_width = 10;
  double beta = 0.4;
  int beta_zero_after_step = 11;  // GOOD default; TIP runs use 16
  int max_length = 24;            // generation steps, end token included
  bool filter_enabled = true;
  FeedbackType feedback_type = FeedbackType::Good;
};

// Anti-prior weight for generation step t (1-based): beta through step
// beta_zero_after_step, zero afterwards.
double mmi_step_weight(int t, const DecodingConfig& config);

struct Hypothesis {
  std::vector<int> ids;  // begin-framed; ends with the end id once finished
  double score = 0.0;    // running sum of cond_t - beta_t * prior_t
  double logp_cond = 0.0;
  double logp_prior = 0.0;
  bool finished = false;
  std::vector<double> state;     // captioner recurrent state
  std::vector<double> lm_state;  // language-model recurrent state
};

struct BeamResult {
  std::vector<Hypothesis> pool;  // finished, score-descending, at most k
  bool ran_out = false;  // nothing finished within max_length; pool holds the
                         // best unfinished hypothesis instead
};

// Standard beam search over the captioner, with the language model running
// in lockstep per hypothesis to supply the prior term. Expansion covers
// every vocabulary id except the begin token. Each step keeps the k best
// children by score; children emitting the end token retire into the pool;
// search stops once k hypotheses finished or max_length steps have run.
// Ties in score order lexicographically by token-id sequence, so results
// are fully deterministic. lm may be null only when beta is 0.
BeamResult beam_search(Stepper& captioner, Stepper* lm, const DecodingConfig& config);

struct DecodeResult {
  std::vector<std::string> tokens;
  double score = 0.0;
  double logp_cond = 0.0;
  double logp_prior = 0.0;
  bool filtered_fallback = false;
  int filtered_count = 0;  // pool entries rejected before the winner
  bool ran_out = false;
};

// Beam search plus the repetition filter: the best-scoring pool entry that
// passes validate_sentence wins; when every entry fails, the top entry is
// returned with filtered_fallback set.
DecodeResult decode_image(Stepper& captioner, Stepper* lm, const Vocabulary& vocab,
                          const Lexicon& lexicon, const DecodingConfig& config);

}  // namespace fashionfb
