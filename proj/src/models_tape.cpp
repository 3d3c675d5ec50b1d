#include "fashionfb/models_tape.hpp"

#include <algorithm>
#include <stdexcept>

#include "fashionfb/kernels.hpp"

namespace fashionfb {

namespace {

struct LstmNodes {
  Node w_i, w_f, w_o, w_g, b_i, b_f, b_o, b_g;
};

LstmNodes leaf_lstm(Tape& tape, LstmParams& p) {
  return {tape.leaf(&p.w_i), tape.leaf(&p.w_f), tape.leaf(&p.w_o), tape.leaf(&p.w_g),
          tape.leaf(&p.b_i), tape.leaf(&p.b_f), tape.leaf(&p.b_o), tape.leaf(&p.b_g)};
}

// b tiled to batch rows via ones * b, so the bias stays a 1 x n leaf.
Node tile_rows(Tape& tape, Node ones_col, Node b) { return tape.matmul(ones_col, b); }

Node affine(Tape& tape, Node x, Node w, Node b_tiled) {
  return tape.add(tape.matmul(x, w), b_tiled);
}

struct LstmState {
  Node h, c;
};

LstmState lstm_step(Tape& tape, const LstmNodes& p, Node ones_col, Node x, LstmState prev) {
  Node xh = tape.concat_cols(x, prev.h);
  Node gi = tape.sigmoid(affine(tape, xh, p.w_i, tile_rows(tape, ones_col, p.b_i)));
  Node gf = tape.sigmoid(affine(tape, xh, p.w_f, tile_rows(tape, ones_col, p.b_f)));
  Node go = tape.sigmoid(affine(tape, xh, p.w_o, tile_rows(tape, ones_col, p.b_o)));
  Node gg = tape.tanh(affine(tape, xh, p.w_g, tile_rows(tape, ones_col, p.b_g)));
  Node c = tape.add(tape.mul(gf, prev.c), tape.mul(gi, gg));
  Node h = tape.mul(go, tape.tanh(c));
  return {h, c};
}

Tensor grid_matrix(const FeatureGrid& grid) {
  Tensor m(grid.cells(), grid.d);
  for (std::size_t i = 0; i < grid.values.size(); ++i)
    m.data[i] = static_cast<double>(grid.values[i]);
  return m;
}

struct BatchLayout {
  int b = 0;            // rows
  int steps = 0;        // scored steps (max framed length - 1)
  int tokens = 0;       // unpadded scored tokens
  std::vector<std::vector<int>> prev;    // per step, B previous ids
  std::vector<std::vector<int>> target;  // per step, B target ids (padded with 0)
  std::vector<Tensor> mask;              // per step, B x 1 validity
};

BatchLayout layout_rows(const std::vector<std::vector<int>>& rows) {
  BatchLayout lay;
  lay.b = static_cast<int>(rows.size());
  if (lay.b == 0) throw std::runtime_error("empty batch");
  std::size_t max_len = 0;
  for (const auto& r : rows) {
    if (r.size() < 2) throw std::runtime_error("framed sentence shorter than 2 ids");
    max_len = std::max(max_len, r.size());
  }
  lay.steps = static_cast<int>(max_len) - 1;
  for (int t = 1; t <= lay.steps; ++t) {
    std::vector<int> prev(lay.b), target(lay.b, 0);
    Tensor mask(lay.b, 1);
    for (int r = 0; r < lay.b; ++r) {
      const auto& ids = rows[r];
      if (t < static_cast<int>(ids.size())) {
        prev[r] = ids[t - 1];
        target[r] = ids[t];
        mask.data[r] = 1.0;
        ++lay.tokens;
      } else {
        prev[r] = ids.back();
      }
    }
    lay.prev.push_back(std::move(prev));
    lay.target.push_back(std::move(target));
    lay.mask.push_back(std::move(mask));
  }
  return lay;
}

// Masked per-token mean NLL over the collected per-step picks.
Node finish_loss(Tape& tape, const BatchLayout& lay, const std::vector<Node>& picked) {
  Node all = picked[0];
  for (std::size_t i = 1; i < picked.size(); ++i) all = tape.concat_cols(all, picked[i]);
  Node mean = tape.mean_all(all);
  const double n = static_cast<double>(lay.b) * static_cast<double>(lay.steps);
  return tape.scale(mean, -n / static_cast<double>(lay.tokens));
}

void check_masks(const std::vector<Tensor>& masks, int steps, int rows, int cols,
                 const char* what) {
  if (masks.empty()) return;
  if (static_cast<int>(masks.size()) < steps)
    throw std::runtime_error(std::string(what) + ": fewer masks than steps");
  for (int t = 0; t < steps; ++t)
    if (masks[t].rows != rows || masks[t].cols != cols)
      throw std::runtime_error(std::string(what) + ": mask shape mismatch");
}

}  // namespace

LossGraph build_topdown_loss(Tape& tape, TopDownParams& params, const CaptionBatch& batch,
                             const std::vector<Tensor>& embed_masks,
                             const std::vector<Tensor>& out_masks, bool encoder_frozen) {
  const ModelDims& d = params.dims;
  BatchLayout lay = layout_rows(batch.rows);
  check_masks(embed_masks, lay.steps, lay.b, d.embed, "embed dropout");
  check_masks(out_masks, lay.steps, lay.b, d.hidden, "output dropout");

  Node enc_w = encoder_frozen ? tape.constant(params.enc.w, "enc.w")
                              : tape.leaf(&params.enc.w, "enc.w");
  Node enc_b = encoder_frozen ? tape.constant(params.enc.b, "enc.b")
                              : tape.leaf(&params.enc.b, "enc.b");
  Node w_embed = tape.leaf(&params.w_embed, "w_embed");
  LstmNodes lstm1 = leaf_lstm(tape, params.lstm1);
  LstmNodes lstm2 = leaf_lstm(tape, params.lstm2);
  Node w_att_v = tape.leaf(&params.w_att_v, "w_att_v");
  Node w_att_h = tape.leaf(&params.w_att_h, "w_att_h");
  Node u_att = tape.leaf(&params.u_att, "u_att");
  Node w_out = tape.leaf(&params.w_out, "w_out");
  Node b_out = tape.leaf(&params.b_out, "b_out");

  Node ones_b = tape.constant(Tensor(lay.b, 1, 1.0), "ones_b");

  // Per-image encodings, shared by every row of that image.
  struct ImageNodes {
    Node v, v_bar, p_att;
  };
  std::vector<ImageNodes> images;
  images.reserve(batch.grids.size());
  for (const FeatureGrid* grid : batch.grids) {
    Node cells = tape.constant(grid_matrix(*grid));
    Node ones_n = tape.constant(Tensor(grid->cells(), 1, 1.0));
    Node v = tape.relu(tape.add(tape.matmul(cells, enc_w), tape.matmul(ones_n, enc_b)));
    Node v_bar = tape.mean_rows(v);
    Node p_att = tape.matmul(v, w_att_v);
    images.push_back({v, v_bar, p_att});
  }

  std::vector<Node> vbar_rows(lay.b);
  for (int r = 0; r < lay.b; ++r) vbar_rows[r] = images[batch.image_of_row[r]].v_bar;
  Node v_bar_batch = tape.stack_rows(vbar_rows);

  Node zeros = tape.constant(Tensor(lay.b, d.hidden), "h0");
  LstmState s1{zeros, zeros}, s2{zeros, zeros};

  std::vector<Node> picked;
  picked.reserve(lay.steps);
  for (int t = 0; t < lay.steps; ++t) {
    Node emb = tape.lookup_rows(w_embed, lay.prev[t]);
    if (!embed_masks.empty()) emb = tape.dropout(emb, embed_masks[t]);
    Node x1 = tape.concat_cols(tape.concat_cols(s2.h, v_bar_batch), emb);
    s1 = lstm_step(tape, lstm1, ones_b, x1, s1);

    Node q_all = tape.matmul(s1.h, w_att_h);
    std::vector<Node> vhat_rows(lay.b);
    for (int r = 0; r < lay.b; ++r) {
      const ImageNodes& img = images[batch.image_of_row[r]];
      Node q = tape.lookup_rows(q_all, {r});
      Node alpha = tape.softmax_rows(tape.attn_scores(img.p_att, q, u_att));
      vhat_rows[r] = tape.matmul(alpha, img.v);
    }
    Node v_hat = tape.stack_rows(vhat_rows);

    Node x2 = tape.concat_cols(v_hat, s1.h);
    s2 = lstm_step(tape, lstm2, ones_b, x2, s2);

    Node h_out = s2.h;
    if (!out_masks.empty()) h_out = tape.dropout(h_out, out_masks[t]);
    Node logp = tape.log_softmax_rows(affine(tape, h_out, w_out, tile_rows(tape, ones_b, b_out)));
    picked.push_back(tape.mul(tape.pick_cols(logp, lay.target[t]), tape.constant(lay.mask[t])));
  }

  return {finish_loss(tape, lay, picked), lay.tokens};
}

LossGraph build_fc_loss(Tape& tape, FCParams& params, const CaptionBatch& batch,
                        const std::vector<Tensor>& embed_masks,
                        const std::vector<Tensor>& out_masks) {
  const ModelDims& d = params.dims;
  BatchLayout lay = layout_rows(batch.rows);
  check_masks(embed_masks, lay.steps, lay.b, d.embed, "embed dropout");
  check_masks(out_masks, lay.steps, lay.b, d.hidden, "output dropout");

  Node w_embed = tape.leaf(&params.w_embed, "w_embed");
  Node w_img = tape.leaf(&params.w_img, "w_img");
  Node b_img = tape.leaf(&params.b_img, "b_img");
  LstmNodes lstm = leaf_lstm(tape, params.lstm);
  Node w_out = tape.leaf(&params.w_out, "w_out");
  Node b_out = tape.leaf(&params.b_out, "b_out");

  Node ones_b = tape.constant(Tensor(lay.b, 1, 1.0), "ones_b");

  // Step 0: mean-pooled grids through the image projection, one row each.
  Tensor pooled(lay.b, d.feat_in);
  for (int r = 0; r < lay.b; ++r) {
    const Tensor m = grid_matrix(*batch.grids[batch.image_of_row[r]]);
    Tensor row(1, d.feat_in);
    kernels::mean_rows(m.ptr(), row.ptr(), m.rows, d.feat_in);
    std::copy(row.data.begin(), row.data.end(), pooled.row(r));
  }
  Node x_img = affine(tape, tape.constant(pooled), w_img, tile_rows(tape, ones_b, b_img));

  Node zeros = tape.constant(Tensor(lay.b, d.hidden), "h0");
  LstmState s = lstm_step(tape, lstm, ones_b, x_img, {zeros, zeros});

  std::vector<Node> picked;
  picked.reserve(lay.steps);
  for (int t = 0; t < lay.steps; ++t) {
    Node emb = tape.lookup_rows(w_embed, lay.prev[t]);
    if (!embed_masks.empty()) emb = tape.dropout(emb, embed_masks[t]);
    s = lstm_step(tape, lstm, ones_b, emb, s);
    Node h_out = s.h;
    if (!out_masks.empty()) h_out = tape.dropout(h_out, out_masks[t]);
    Node logp = tape.log_softmax_rows(affine(tape, h_out, w_out, tile_rows(tape, ones_b, b_out)));
    picked.push_back(tape.mul(tape.pick_cols(logp, lay.target[t]), tape.constant(lay.mask[t])));
  }

  return {finish_loss(tape, lay, picked), lay.tokens};
}

LossGraph build_topdown_step_loss(Tape& tape, TopDownParams& params, const FeatureGrid& grid,
                                  const Tensor& h1, const Tensor& c1, const Tensor& h2,
                                  const Tensor& c2, int prev_id, int target) {
  Node enc_w = tape.leaf(&params.enc.w, "enc.w");
  Node enc_b = tape.leaf(&params.enc.b, "enc.b");
  Node w_embed = tape.leaf(&params.w_embed, "w_embed");
  LstmNodes lstm1 = leaf_lstm(tape, params.lstm1);
  LstmNodes lstm2 = leaf_lstm(tape, params.lstm2);
  Node w_att_v = tape.leaf(&params.w_att_v, "w_att_v");
  Node w_att_h = tape.leaf(&params.w_att_h, "w_att_h");
  Node u_att = tape.leaf(&params.u_att, "u_att");
  Node w_out = tape.leaf(&params.w_out, "w_out");
  Node b_out = tape.leaf(&params.b_out, "b_out");

  Node ones = tape.constant(Tensor(1, 1, 1.0));
  Node cells = tape.constant(grid_matrix(grid));
  Node ones_n = tape.constant(Tensor(grid.cells(), 1, 1.0));
  Node v = tape.relu(tape.add(tape.matmul(cells, enc_w), tape.matmul(ones_n, enc_b)));
  Node v_bar = tape.mean_rows(v);
  Node p_att = tape.matmul(v, w_att_v);

  LstmState s1{tape.constant(h1), tape.constant(c1)};
  LstmState s2{tape.constant(h2), tape.constant(c2)};

  Node emb = tape.lookup_rows(w_embed, {prev_id});
  Node x1 = tape.concat_cols(tape.concat_cols(s2.h, v_bar), emb);
  s1 = lstm_step(tape, lstm1, ones, x1, s1);

  Node q = tape.matmul(s1.h, w_att_h);
  Node alpha = tape.softmax_rows(tape.attn_scores(p_att, q, u_att));
  Node v_hat = tape.matmul(alpha, v);

  Node x2 = tape.concat_cols(v_hat, s1.h);
  s2 = lstm_step(tape, lstm2, ones, x2, s2);

  Node logp = tape.log_softmax_rows(affine(tape, s2.h, w_out, tile_rows(tape, ones, b_out)));
  return {tape.scale(tape.pick(logp, 0, target), -1.0), 1};
}

LossGraph build_fc_step_loss(Tape& tape, FCParams& params, const FeatureGrid* grid,
                             const Tensor& h, const Tensor& c, int prev_id, int target) {
  const ModelDims& d = params.dims;
  Node w_embed = tape.leaf(&params.w_embed, "w_embed");
  Node w_img = tape.leaf(&params.w_img, "w_img");
  Node b_img = tape.leaf(&params.b_img, "b_img");
  LstmNodes lstm = leaf_lstm(tape, params.lstm);
  Node w_out = tape.leaf(&params.w_out, "w_out");
  Node b_out = tape.leaf(&params.b_out, "b_out");

  Node ones = tape.constant(Tensor(1, 1, 1.0));
  Node x;
  if (grid) {
    const Tensor m = grid_matrix(*grid);
    Tensor pooled(1, d.feat_in);
    kernels::mean_rows(m.ptr(), pooled.ptr(), m.rows, d.feat_in);
    x = affine(tape, tape.constant(pooled), w_img, tile_rows(tape, ones, b_img));
  } else {
    x = tape.lookup_rows(w_embed, {prev_id});
  }
  LstmState s = lstm_step(tape, lstm, ones, x, {tape.constant(h), tape.constant(c)});
  Node logp = tape.log_softmax_rows(affine(tape, s.h, w_out, tile_rows(tape, ones, b_out)));
  return {tape.scale(tape.pick(logp, 0, target), -1.0), 1};
}

LossGraph build_lm_step_loss(Tape& tape, LMParams& params, const Tensor& h, const Tensor& c,
                             int prev_id, int target) {
  Node w_embed = tape.leaf(&params.w_embed, "w_embed");
  LstmNodes lstm = leaf_lstm(tape, params.lstm);
  Node w_out = tape.leaf(&params.w_out, "w_out");
  Node b_out = tape.leaf(&params.b_out, "b_out");

  Node ones = tape.constant(Tensor(1, 1, 1.0));
  Node emb = tape.lookup_rows(w_embed, {prev_id});
  LstmState s = lstm_step(tape, lstm, ones, emb, {tape.constant(h), tape.constant(c)});
  Node logp = tape.log_softmax_rows(affine(tape, s.h, w_out, tile_rows(tape, ones, b_out)));
  return {tape.scale(tape.pick(logp, 0, target), -1.0), 1};
}

LossGraph build_attention_step_loss(Tape& tape, TopDownParams& params, const FeatureGrid& grid,
                                    const Tensor& h1, const Tensor& probe) {
  Node enc_w = tape.leaf(&params.enc.w, "enc.w");
  Node enc_b = tape.leaf(&params.enc.b, "enc.b");
  Node w_att_v = tape.leaf(&params.w_att_v, "w_att_v");
  Node w_att_h = tape.leaf(&params.w_att_h, "w_att_h");
  Node u_att = tape.leaf(&params.u_att, "u_att");

  Node cells = tape.constant(grid_matrix(grid));
  Node ones_n = tape.constant(Tensor(grid.cells(), 1, 1.0));
  Node v = tape.relu(tape.add(tape.matmul(cells, enc_w), tape.matmul(ones_n, enc_b)));
  Node p_att = tape.matmul(v, w_att_v);

  Node q = tape.matmul(tape.constant(h1), w_att_h);
  Node alpha = tape.softmax_rows(tape.attn_scores(p_att, q, u_att));
  Node v_hat = tape.matmul(alpha, v);
  return {tape.mean_all(tape.mul(v_hat, tape.constant(probe))), 1};
}

LossGraph build_lm_loss(Tape& tape, LMParams& params, const std::vector<std::vector<int>>& rows,
                        const std::vector<Tensor>& embed_masks,
                        const std::vector<Tensor>& out_masks) {
  const ModelDims& d = params.dims;
  BatchLayout lay = layout_rows(rows);
  check_masks(embed_masks, lay.steps, lay.b, d.embed, "embed dropout");
  check_masks(out_masks, lay.steps, lay.b, d.hidden, "output dropout");

  Node w_embed = tape.leaf(&params.w_embed, "w_embed");
  LstmNodes lstm = leaf_lstm(tape, params.lstm);
  Node w_out = tape.leaf(&params.w_out, "w_out");
  Node b_out = tape.leaf(&params.b_out, "b_out");

  Node ones_b = tape.constant(Tensor(lay.b, 1, 1.0), "ones_b");
  Node zeros = tape.constant(Tensor(lay.b, d.hidden), "h0");
  LstmState s{zeros, zeros};

  std::vector<Node> picked;
  picked.reserve(lay.steps);
  for (int t = 0; t < lay.steps; ++t) {
    Node emb = tape.lookup_rows(w_embed, lay.prev[t]);
    if (!embed_masks.empty()) emb = tape.dropout(emb, embed_masks[t]);
    s = lstm_step(tape, lstm, ones_b, emb, s);
    Node h_out = s.h;
    if (!out_masks.empty()) h_out = tape.dropout(h_out, out_masks[t]);
    Node logp = tape.log_softmax_rows(affine(tape, h_out, w_out, tile_rows(tape, ones_b, b_out)));
    picked.push_back(tape.mul(tape.pick_cols(logp, lay.target[t]), tape.constant(lay.mask[t])));
  }

  return {finish_loss(tape, lay, picked), lay.tokens};
}

}  // namespace fashionfb
