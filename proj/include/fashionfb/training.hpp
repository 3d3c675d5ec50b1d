#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "fashionfb/corpus.hpp"
#include "fashionfb/models.hpp"
#include "fashionfb/tensor.hpp"
#include "fashionfb/vocab.hpp"

namespace fashionfb {

struct AdamConfig {
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double clip_norm = 5.0;  // global pre-update gradient norm cap; <= 0 disables
};

// Adam with bias correction over a fixed set of named parameter tensors.
// Every registered tensor must appear in the gradient list handed to step;
// a non-finite gradient aborts with the offending parameter's name.
class Adam {
 public:
  Adam(const std::vector<std::pair<std::string, Tensor*>>& params, const AdamConfig& config);

  // One update in registration order. Returns the gradient norm before clipping.
  double step(const std::vector<std::pair<Tensor*, const Tensor*>>& grads);

  int steps_taken() const { return t_; }

 private:
  struct Slot {
    std::string name;
    Tensor* param;
    Tensor m, v;
    const Tensor* grad = nullptr;
  };
  std::vector<Slot> slots_;
  AdamConfig config_;
  int t_ = 0;
};

// Batches are images_per_batch images with sentences_per_image sentences
// each; images short on sentences sample theirs with replacement. The
// encoder projection stays frozen for the first freeze_encoder_epochs
// epochs, after which the optimizer restarts with the encoder included.
struct TrainConfig {
  AdamConfig adam;
  int epochs = 30;
  int images_per_batch = 32;
  int sentences_per_image = 3;
  double dropout_rate = 0.5;
  int freeze_encoder_epochs = 10;
  int eval_every = 5;
  int eval_beam_width = 10;
  int eval_max_length = 24;
  std::uint64_t seed = 1;
};

struct EpochRow {
  int epoch = 0;
  double train_loss = 0.0;
  bool evaluated = false;
  double eval_score = 0.0;  // captioner: eval-set CIDEr-D; LM: held-out perplexity
  double wall_seconds = 0.0;
};

struct TrainResult {
  std::vector<EpochRow> log;
  double initial_score = 0.0;  // the untrained model on the same yardstick
  int best_epoch = 0;
  double best_score = 0.0;
};

// Teacher-forcing training with dropout and the freeze schedule. Every
// eval_every epochs (and on the last one) the eval set is decoded with the
// standard objective at eval_beam_width and scored with CIDEr-D; params are
// left at the best-scoring epoch's values. Deterministic given (seed,
// config, corpus).
TrainResult train_captioner(TopDownParams& params, const Corpus& train, const Corpus& eval_set,
                            const Vocabulary& vocab, const TrainConfig& config);

// Same loop for the no-attention baseline (nothing to freeze).
TrainResult train_fc_baseline(FCParams& params, const Corpus& train, const Corpus& eval_set,
                              const Vocabulary& vocab, const TrainConfig& config);

// The language model trains on sentences alone; the last 5% (at least one)
// are held out and perplexity on them picks the winning epoch.
TrainResult train_lm(LMParams& params, const std::vector<std::vector<std::string>>& sentences,
                     const Vocabulary& vocab, const TrainConfig& config);

// exp(mean per-token negative log-likelihood) over framed id rows.
double perplexity(const Stepper& stepper, const std::vector<std::vector<int>>& framed_rows);

// Copies the trained encoder projection into a fresh model; everything else
// keeps its fresh initialization. Throws on shape mismatch.
void transfer_encoder_weights(const TopDownParams& source, TopDownParams& target);

// Epoch log as CSV: epoch, train_loss, <score_column>, wall_seconds. The
// score cell is empty for epochs that were not evaluated.
void write_epoch_csv(const std::string& path, const std::string& score_column,
                     const std::vector<EpochRow>& log);

}  // namespace fashionfb
