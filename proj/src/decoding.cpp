#include "fashionfb/decoding.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace fashionfb {

namespace {

// score descending, then token-id sequence ascending
bool better(double score_a, const std::vector<int>& ids_a, double score_b,
            const std::vector<int>& ids_b) {
  if (score_a != score_b) return score_a > score_b;
  return ids_a < ids_b;
}

bool hyp_better(const Hypothesis& a, const Hypothesis& b) {
  return better(a.score, a.ids, b.score, b.ids);
}

}  // namespace

double mmi_step_weight(int t, const DecodingConfig& config) {
  if (t < 1) throw std::runtime_error("step index starts at 1");
  return t <= config.beta_zero_after_step ? config.beta : 0.0;
}

BeamResult beam_search(Stepper& captioner, Stepper* lm, const DecodingConfig& config) {
  if (config.beam_width < 1) throw std::runtime_error("beam width must be at least 1");
  if (config.max_length < 1) throw std::runtime_error("max_length must be at least 1");
  if (!lm && config.beta != 0.0)
    throw std::runtime_error("the MMI objective needs a language model");
  const int vocab = captioner.vocab_size();
  if (lm && lm->vocab_size() != vocab)
    throw std::runtime_error("captioner and language model vocabularies differ");
  const int begin = 0, end = 1;
  const std::size_t k = static_cast<std::size_t>(config.beam_width);

  Hypothesis root;
  root.ids = {begin};
  root.state.resize(captioner.state_size());
  captioner.init_state(root.state.data());
  if (lm) {
    root.lm_state.resize(lm->state_size());
    lm->init_state(root.lm_state.data());
  }

  std::vector<Hypothesis> live = {std::move(root)};
  std::vector<Hypothesis> pool;

  // per-parent buffers for one expansion round
  struct Expanded {
    std::vector<double> state, lm_state, logp, lm_logp;
  };
  std::vector<Expanded> parents;
  struct Child {
    double score, logp_cond, logp_prior;
    std::size_t parent;
    int word;
  };
  std::vector<Child> children;

  for (int step = 1; step <= config.max_length && !live.empty() && pool.size() < k; ++step) {
    const double beta_t = mmi_step_weight(step, config);

    parents.assign(live.size(), {});
    children.clear();
    for (std::size_t i = 0; i < live.size(); ++i) {
      Expanded& ex = parents[i];
      const int prev = live[i].ids.back();
      ex.state.resize(captioner.state_size());
      ex.logp.resize(vocab);
      captioner.step(live[i].state.data(), prev, ex.state.data(), ex.logp.data());
      if (lm) {
        ex.lm_state.resize(lm->state_size());
        ex.lm_logp.resize(vocab);
        lm->step(live[i].lm_state.data(), prev, ex.lm_state.data(), ex.lm_logp.data());
      }
      for (int w = 0; w < vocab; ++w) {
        if (w == begin) continue;
        const double cond = ex.logp[w];
        const double prior = lm ? ex.lm_logp[w] : 0.0;
        children.push_back({live[i].score + cond - beta_t * prior,
                            live[i].logp_cond + cond, live[i].logp_prior + prior, i, w});
      }
    }

    std::sort(children.begin(), children.end(), [&](const Child& a, const Child& b) {
      if (a.score != b.score) return a.score > b.score;
      if (live[a.parent].ids != live[b.parent].ids)
        return live[a.parent].ids < live[b.parent].ids;
      return a.word < b.word;
    });
    if (children.size() > k) children.resize(k);

    std::vector<Hypothesis> next_live;
    for (const Child& child : children) {
      Hypothesis h;
      h.ids = live[child.parent].ids;
      h.ids.push_back(child.word);
      h.score = child.score;
      h.logp_cond = child.logp_cond;
      h.logp_prior = child.logp_prior;
      h.state = parents[child.parent].state;
      h.lm_state = parents[child.parent].lm_state;
      if (child.word == end) {
        h.finished = true;
        pool.push_back(std::move(h));
      } else {
        next_live.push_back(std::move(h));
      }
    }
    live = std::move(next_live);
  }

  BeamResult result;
  if (pool.empty()) {
    if (live.empty()) throw std::runtime_error("beam search emptied without candidates");
    std::sort(live.begin(), live.end(), hyp_better);
    live.resize(1);
    result.pool = std::move(live);
    result.ran_out = true;
    return result;
  }
  std::sort(pool.begin(), pool.end(), hyp_better);
  if (pool.size() > k) pool.resize(k);
  result.pool = std::move(pool);
  return result;
}

DecodeResult decode_image(Stepper& captioner, Stepper* lm, const Vocabulary& vocab,
                          const Lexicon& lexicon, const DecodingConfig& config) {
  BeamResult beam = beam_search(captioner, lm, config);

  const Hypothesis* winner = nullptr;
  int rejected = 0;
  if (config.filter_enabled && !beam.ran_out) {
    for (const Hypothesis& h : beam.pool) {
      if (validate_sentence(vocab.decode(h.ids), config.feedback_type, lexicon).valid) {
        winner = &h;
        break;
      }
      ++rejected;
    }
  }

  DecodeResult out;
  if (!winner) {
    out.filtered_fallback = config.filter_enabled && !beam.ran_out;
    winner = &beam.pool.front();
  }
  out.tokens = vocab.decode(winner->ids);
  out.score = winner->score;
  out.logp_cond = winner->logp_cond;
  out.logp_prior = winner->logp_prior;
  out.filtered_count = rejected;
  out.ran_out = beam.ran_out;
  return out;
}

}  // namespace fashionfb
