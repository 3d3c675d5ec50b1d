#pragma once

#include <vector>

#include "fashionfb/models.hpp"
#include "fashionfb/tape.hpp"

namespace fashionfb {

// Graph builders for teacher-forced batch losses. Each builder records the
// whole forward pass for one batch on a fresh tape; the loss node is the
// per-token mean negative log-likelihood. Rows are sentences; several rows
// may share one image. Sequences are the framed id lists; rows shorter than
// the longest sequence are padded and masked out of the loss.
//
// Dropout masks are supplied per step (empty vectors disable dropout):
// embed_masks[t] is B x E applied to the word embeddings, out_masks[t] is
// B x H applied to the pre-output hidden state. Mask values are 0 or
// 1/(1-rate) (inverted dropout).
//
// When encoder_frozen is set, the encoder projection enters the graph as
// constants, so no gradient flows to it at all.

struct CaptionBatch {
  std::vector<const FeatureGrid*> grids;  // one per distinct image in the batch
  std::vector<int> image_of_row;          // size B, index into grids
  std::vector<std::vector<int>> rows;     // size B, framed token ids
};

struct LossGraph {
  Node loss;
  int token_count = 0;
};

LossGraph build_topdown_loss(Tape& tape, TopDownParams& params, const CaptionBatch& batch,
                             const std::vector<Tensor>& embed_masks,
                             const std::vector<Tensor>& out_masks, bool encoder_frozen);

LossGraph build_fc_loss(Tape& tape, FCParams& params, const CaptionBatch& batch,
                        const std::vector<Tensor>& embed_masks,
                        const std::vector<Tensor>& out_masks);

// LM batches carry no images.
LossGraph build_lm_loss(Tape& tape, LMParams& params, const std::vector<std::vector<int>>& rows,
                        const std::vector<Tensor>& embed_masks,
                        const std::vector<Tensor>& out_masks);

// Single-step probe losses for gradient checking. Each records exactly one
// scored step starting from the given hidden/cell state (entered as
// constants, 1 x hidden each); loss is -log p(target | prev, state).
LossGraph build_topdown_step_loss(Tape& tape, TopDownParams& params, const FeatureGrid& grid,
                                  const Tensor& h1, const Tensor& c1, const Tensor& h2,
                                  const Tensor& c2, int prev_id, int target);

// When grid is non-null the step consumes the projected mean-pooled image
// instead of a word embedding (the baseline's first step).
LossGraph build_fc_step_loss(Tape& tape, FCParams& params, const FeatureGrid* grid,
                             const Tensor& h, const Tensor& c, int prev_id, int target);

LossGraph build_lm_step_loss(Tape& tape, LMParams& params, const Tensor& h, const Tensor& c,
                             int prev_id, int target);

// One encoder + attention pass scalarized against a fixed probe direction:
// loss = mean(v_hat * probe). Touches enc.w, enc.b, w_att_v, w_att_h, u_att.
LossGraph build_attention_step_loss(Tape& tape, TopDownParams& params, const FeatureGrid& grid,
                                    const Tensor& h1, const Tensor& probe);

}  // namespace fashionfb
