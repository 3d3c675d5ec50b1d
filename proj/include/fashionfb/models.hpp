#pragma once

#include <memory>
#include <string>
#include <utility>
#include <vector>

#include "fashionfb/corpus.hpp"
#include "fashionfb/rng.hpp"
#include "fashionfb/tensor.hpp"

namespace fashionfb {

// Width configuration shared by all networks. The attention width defaults
// to the hidden width; every knob is independent.
struct ModelDims {
  int vocab = 0;     // V
  int embed = 64;    // E
  int hidden = 64;   // H
  int attn = 64;     // A
  int feat_in = 32;  // D_in, raw grid depth
  int feat = 64;     // D_h, projected feature width
};

// One LSTM layer, separate matrices per gate, each (input+H) x H acting on
// the concatenated [x, h] row.
struct LstmParams {
  Tensor w_i, w_f, w_o, w_g;
  Tensor b_i, b_f, b_o, b_g;
  int input = 0, hidden = 0;

  void init(int input_width, int hidden_width, DetRng& rng);
  void named(const std::string& prefix, std::vector<std::pair<std::string, Tensor*>>& out);
};

struct EncoderProjection {
  Tensor w, b;  // D_in x D_h, 1 x D_h

  void init(const ModelDims& dims, DetRng& rng);
  void named(std::vector<std::pair<std::string, Tensor*>>& out);
};

// Two-layer decoder: layer 1 consumes [h2_prev, v_bar, embedding] and drives
// attention; layer 2 consumes [v_hat, h1] and drives the word distribution.
struct TopDownParams {
  ModelDims dims;
  EncoderProjection enc;
  Tensor w_embed;          // V x E
  LstmParams lstm1, lstm2;
  Tensor w_att_v, w_att_h; // D_h x A, H x A
  Tensor u_att;            // 1 x A
  Tensor w_out, b_out;     // H x V, 1 x V

  void init(const ModelDims& d, DetRng& rng);
  std::vector<std::pair<std::string, Tensor*>> named();
  std::vector<Tensor*> all();
  std::vector<Tensor*> encoder_tensors() { return {&enc.w, &enc.b}; }
};

struct LMParams {
  ModelDims dims;
  Tensor w_embed;
  LstmParams lstm;
  Tensor w_out, b_out;

  void init(const ModelDims& d, DetRng& rng);
  std::vector<std::pair<std::string, Tensor*>> named();
  std::vector<Tensor*> all();
};

// Single-LSTM captioner without attention: the mean-pooled raw grid is
// projected into the embedding space and fed as the step-0 input.
struct FCParams {
  ModelDims dims;
  Tensor w_embed;
  Tensor w_img, b_img;  // D_in x E, 1 x E
  LstmParams lstm;
  Tensor w_out, b_out;

  void init(const ModelDims& d, DetRng& rng);
  std::vector<std::pair<std::string, Tensor*>> named();
  std::vector<Tensor*> all();
};

// Per-image inference context for the top-down decoder: projected cells,
// their mean, and the attention-key matrix, computed once per image.
struct ImageContext {
  int cells = 0;
  Tensor v;      // N x D_h, ReLU(grid * W + b)
  Tensor v_bar;  // 1 x D_h
  Tensor p_att;  // N x A, v * W_att_v
};

// v_i = ReLU(grid_i * W + b) per cell; v_bar = mean over cells.
void encode_features(const FeatureGrid& grid, const EncoderProjection& enc, Tensor& v,
                     Tensor& v_bar);
ImageContext make_image_context(const FeatureGrid& grid, const TopDownParams& params);

// alpha_hat = softmax(u^T tanh(P + 1 q^T)), v_hat = alpha_hat * V.
void attention_step(const ImageContext& ctx, const TopDownParams& params, const double* h1,
                    double* alpha_hat, double* v_hat);

// Uniform recurrent-stepper view used by beam search: a flat state vector,
// an image-bound initializer, and a step emitting log-probabilities.
class Stepper {
 public:
  virtual ~Stepper() = default;
  virtual int vocab_size() const = 0;
  virtual int state_size() const = 0;
  virtual void init_state(double* state) const = 0;
  virtual void step(const double* state, int prev_id, double* next_state,
                    double* logp) const = 0;
};

// State layout h1|c1|h2|c2. Also reports the last step's attention weights
// for inspection via alpha_out (optional).
class TopDownStepper : public Stepper {
 public:
  TopDownStepper(const TopDownParams& params, const ImageContext& ctx)
      : params_(params), ctx_(ctx) {}
  int vocab_size() const override { return params_.dims.vocab; }
  int state_size() const override { return 4 * params_.dims.hidden; }
  void init_state(double* state) const override;
  void step(const double* state, int prev_id, double* next_state, double* logp) const override;
  void step_with_attention(const double* state, int prev_id, double* next_state, double* logp,
                           double* alpha_out) const;

 private:
  const TopDownParams& params_;
  const ImageContext& ctx_;
};

// State layout h|c.
class LMStepper : public Stepper {
 public:
  explicit LMStepper(const LMParams& params) : params_(params) {}
  int vocab_size() const override { return params_.dims.vocab; }
  int state_size() const override { return 2 * params_.dims.hidden; }
  void init_state(double* state) const override;
  void step(const double* state, int prev_id, double* next_state, double* logp) const override;

 private:
  const LMParams& params_;
};

// State layout h|c; init_state runs the image step so the first step()
// call is the begin token, matching the other steppers.
class FCStepper : public Stepper {
 public:
  FCStepper(const FCParams& params, const FeatureGrid& grid);
  int vocab_size() const override { return params_.dims.vocab; }
  int state_size() const override { return 2 * params_.dims.hidden; }
  void init_state(double* state) const override;
  void step(const double* state, int prev_id, double* next_state, double* logp) const override;

 private:
  const FCParams& params_;
  Tensor image_embed_;  // 1 x E
};

// Teacher-forced log p(s | image) (sum over steps 1..T; begin unscored).
// Throws if the framed sequence has fewer than 2 ids.
double sentence_log_prob(const Stepper& stepper, const std::vector<int>& framed_ids);

}  // namespace fashionfb
