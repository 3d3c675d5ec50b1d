#include "fashionfb/models.hpp"

#include <cstring>
#include <stdexcept>

#include "fashionfb/kernels.hpp"

namespace fashionfb {

namespace k = kernels;

namespace {

constexpr double kInitRange = 0.08;

void init_uniform(Tensor& t, int rows, int cols, DetRng& rng) {
  t = Tensor(rows, cols);
  for (double& v : t.data) v = rng.uniform(-kInitRange, kInitRange);
}

}  // namespace

void LstmParams::init(int input_width, int hidden_width, DetRng& rng) {
  input = input_width;
  hidden = hidden_width;
  const int rows = input + hidden;
  init_uniform(w_i, rows, hidden, rng);
  init_uniform(w_f, rows, hidden, rng);
  init_uniform(w_o, rows, hidden, rng);
  init_uniform(w_g, rows, hidden, rng);
  init_uniform(b_i, 1, hidden, rng);
  b_f = Tensor(1, hidden, 1.0);  // forget gate starts open
  init_uniform(b_o, 1, hidden, rng);
  init_uniform(b_g, 1, hidden, rng);
}

void LstmParams::named(const std::string& prefix,
                       std::vector<std::pair<std::string, Tensor*>>& out) {
  out.emplace_back(prefix + ".w_i", &w_i);
  out.emplace_back(prefix + ".w_f", &w_f);
  out.emplace_back(prefix + ".w_o", &w_o);
  out.emplace_back(prefix + ".w_g", &w_g);
  out.emplace_back(prefix + ".b_i", &b_i);
  out.emplace_back(prefix + ".b_f", &b_f);
  out.emplace_back(prefix + ".b_o", &b_o);
  out.emplace_back(prefix + ".b_g", &b_g);
}

void EncoderProjection::init(const ModelDims& dims, DetRng& rng) {
  init_uniform(w, dims.feat_in, dims.feat, rng);
  init_uniform(b, 1, dims.feat, rng);
}

void EncoderProjection::named(std::vector<std::pair<std::string, Tensor*>>& out) {
  out.emplace_back("enc.w", &w);
  out.emplace_back("enc.b", &b);
}

void TopDownParams::init(const ModelDims& d, DetRng& rng) {
  dims = d;
  enc.init(d, rng);
  init_uniform(w_embed, d.vocab, d.embed, rng);
  lstm1.init(d.hidden + d.feat + d.embed, d.hidden, rng);
  lstm2.init(d.feat + d.hidden, d.hidden, rng);
  init_uniform(w_att_v, d.feat, d.attn, rng);
  init_uniform(w_att_h, d.hidden, d.attn, rng);
  init_uniform(u_att, 1, d.attn, rng);
  init_uniform(w_out, d.hidden, d.vocab, rng);
  init_uniform(b_out, 1, d.vocab, rng);
}

std::vector<std::pair<std::string, Tensor*>> TopDownParams::named() {
  std::vector<std::pair<std::string, Tensor*>> out;
  enc.named(out);
  out.emplace_back("w_embed", &w_embed);
  lstm1.named("lstm1", out);
  lstm2.named("lstm2", out);
  out.emplace_back("w_att_v", &w_att_v);
  out.emplace_back("w_att_h", &w_att_h);
  out.emplace_back("u_att", &u_att);
  out.emplace_back("w_out", &w_out);
  out.emplace_back("b_out", &b_out);
  return out;
}

std::vector<Tensor*> TopDownParams::all() {
  std::vector<Tensor*> out;
  for (auto& [name, t] : named()) out.push_back(t);
  return out;
}

void LMParams::init(const ModelDims& d, DetRng& rng) {
  dims = d;
  init_uniform(w_embed, d.vocab, d.embed, rng);
  lstm.init(d.embed, d.hidden, rng);
  init_uniform(w_out, d.hidden, d.vocab, rng);
  init_uniform(b_out, 1, d.vocab, rng);
}

std::vector<std::pair<std::string, Tensor*>> LMParams::named() {
  std::vector<std::pair<std::string, Tensor*>> out;
  out.emplace_back("w_embed", &w_embed);
  lstm.named("lstm", out);
  out.emplace_back("w_out", &w_out);
  out.emplace_back("b_out", &b_out);
  return out;
}

std::vector<Tensor*> LMParams::all() {
  std::vector<Tensor*> out;
  for (auto& [name, t] : named()) out.push_back(t);
  return out;
}

void FCParams::init(const ModelDims& d, DetRng& rng) {
  dims = d;
  init_uniform(w_embed, d.vocab, d.embed, rng);
  init_uniform(w_img, d.feat_in, d.embed, rng);
  init_uniform(b_img, 1, d.embed, rng);
  lstm.init(d.embed, d.hidden, rng);
  init_uniform(w_out, d.hidden, d.vocab, rng);
  init_uniform(b_out, 1, d.vocab, rng);
}

std::vector<std::pair<std::string, Tensor*>> FCParams::named() {
  std::vector<std::pair<std::string, Tensor*>> out;
  out.emplace_back("w_embed", &w_embed);
  out.emplace_back("w_img", &w_img);
  out.emplace_back("b_img", &b_img);
  lstm.named("lstm", out);
  out.emplace_back("w_out", &w_out);
  out.emplace_back("b_out", &b_out);
  return out;
}

std::vector<Tensor*> FCParams::all() {
  std::vector<Tensor*> out;
  for (auto& [name, t] : named()) out.push_back(t);
  return out;
}

// ---------------------------------------------------------------------------
// Inference path. These compose the same kernels in the same order as the
// tape builders so both paths agree bit for bit.

namespace {

Tensor grid_as_matrix(const FeatureGrid& grid) {
  Tensor m(grid.cells(), grid.d);
  for (std::size_t i = 0; i < grid.values.size(); ++i)
    m.data[i] = static_cast<double>(grid.values[i]);
  return m;
}

// y = [x, h] * w + b, one row.
void affine_cat(const double* x, int xn, const double* h, int hn, const Tensor& w,
                const Tensor& b, std::vector<double>& cat, double* y) {
  std::memcpy(cat.data(), x, sizeof(double) * xn);
  std::memcpy(cat.data() + xn, h, sizeof(double) * hn);
  k::matmul_nn(cat.data(), w.ptr(), y, 1, xn + hn, w.cols);
  k::add(y, b.ptr(), y, w.cols);
}

// One LSTM row step; gate order and arithmetic mirror the tape builder.
void lstm_row_step(const LstmParams& p, const double* x, const double* h, const double* c,
                   double* h_next, double* c_next, std::vector<double>& cat,
                   std::vector<double>& scratch) {
  const int hn = p.hidden;
  double* gi = scratch.data();
  double* gf = gi + hn;
  double* go = gf + hn;
  double* gg = go + hn;
  double* tc = gg + hn;
  affine_cat(x, p.input, h, hn, p.w_i, p.b_i, cat, gi);
  k::sigmoid(gi, gi, hn);
  affine_cat(x, p.input, h, hn, p.w_f, p.b_f, cat, gf);
  k::sigmoid(gf, gf, hn);
  affine_cat(x, p.input, h, hn, p.w_o, p.b_o, cat, go);
  k::sigmoid(go, go, hn);
  affine_cat(x, p.input, h, hn, p.w_g, p.b_g, cat, gg);
  k::tanh(gg, gg, hn);
  for (int j = 0; j < hn; ++j) c_next[j] = gf[j] * c[j] + gi[j] * gg[j];
  k::tanh(c_next, tc, hn);
  for (int j = 0; j < hn; ++j) h_next[j] = go[j] * tc[j];
}

}  // namespace

void encode_features(const FeatureGrid& grid, const EncoderProjection& enc, Tensor& v,
                     Tensor& v_bar) {
  if (grid.d != enc.w.rows)
    throw std::runtime_error("grid depth does not match the encoder projection input");
  const Tensor m = grid_as_matrix(grid);
  const int n = grid.cells();
  v = Tensor(n, enc.w.cols);
  k::matmul_nn(m.ptr(), enc.w.ptr(), v.ptr(), n, grid.d, enc.w.cols);
  Tensor tiled(n, enc.w.cols);
  for (int r = 0; r < n; ++r) std::memcpy(tiled.row(r), enc.b.ptr(), sizeof(double) * enc.w.cols);
  k::add(v.ptr(), tiled.ptr(), v.ptr(), v.size());
  k::relu(v.ptr(), v.ptr(), v.size());
  v_bar = Tensor(1, enc.w.cols);
  k::mean_rows(v.ptr(), v_bar.ptr(), n, enc.w.cols);
}

ImageContext make_image_context(const FeatureGrid& grid, const TopDownParams& params) {
  ImageContext ctx;
  ctx.cells = grid.cells();
  encode_features(grid, params.enc, ctx.v, ctx.v_bar);
  ctx.p_att = Tensor(ctx.cells, params.dims.attn);
  k::matmul_nn(ctx.v.ptr(), params.w_att_v.ptr(), ctx.p_att.ptr(), ctx.cells, params.dims.feat,
               params.dims.attn);
  return ctx;
}

void attention_step(const ImageContext& ctx, const TopDownParams& params, const double* h1,
                    double* alpha_hat, double* v_hat) {
  const int a = params.dims.attn;
  std::vector<double> q(a), scores(ctx.cells);
  k::matmul_nn(h1, params.w_att_h.ptr(), q.data(), 1, params.dims.hidden, a);
  k::attn_scores(ctx.p_att.ptr(), q.data(), params.u_att.ptr(), scores.data(), ctx.cells, a);
  k::softmax_rows(scores.data(), alpha_hat, 1, ctx.cells);
  k::matmul_nn(alpha_hat, ctx.v.ptr(), v_hat, 1, ctx.cells, params.dims.feat);
}

void TopDownStepper::init_state(double* state) const {
  std::memset(state, 0, sizeof(double) * state_size());
}

void TopDownStepper::step(const double* state, int prev_id, double* next_state,
                          double* logp) const {
  step_with_attention(state, prev_id, next_state, logp, nullptr);
}

void TopDownStepper::step_with_attention(const double* state, int prev_id, double* next_state,
                                         double* logp, double* alpha_out) const {
  const ModelDims& d = params_.dims;
  if (prev_id < 0 || prev_id >= d.vocab)
    throw std::runtime_error("word id out of range: " + std::to_string(prev_id));
  const double* h1 = state;
  const double* c1 = state + d.hidden;
  const double* h2 = state + 2 * d.hidden;
  const double* c2 = state + 3 * d.hidden;
  double* h1n = next_state;
  double* c1n = next_state + d.hidden;
  double* h2n = next_state + 2 * d.hidden;
  double* c2n = next_state + 3 * d.hidden;

  // x1 = [h2_prev, v_bar, embedding(prev)]
  std::vector<double> x1(static_cast<std::size_t>(d.hidden) + d.feat + d.embed);
  std::memcpy(x1.data(), h2, sizeof(double) * d.hidden);
  std::memcpy(x1.data() + d.hidden, ctx_.v_bar.ptr(), sizeof(double) * d.feat);
  std::memcpy(x1.data() + d.hidden + d.feat, params_.w_embed.row(prev_id),
              sizeof(double) * d.embed);

  std::vector<double> cat(x1.size() + d.hidden), scratch(5 * static_cast<std::size_t>(d.hidden));
  lstm_row_step(params_.lstm1, x1.data(), h1, c1, h1n, c1n, cat, scratch);

  std::vector<double> alpha(ctx_.cells), v_hat(d.feat);
  attention_step(ctx_, params_, h1n, alpha.data(), v_hat.data());
  if (alpha_out) std::memcpy(alpha_out, alpha.data(), sizeof(double) * ctx_.cells);

  // x2 = [v_hat, h1]
  std::vector<double> x2(static_cast<std::size_t>(d.feat) + d.hidden);
  std::memcpy(x2.data(), v_hat.data(), sizeof(double) * d.feat);
  std::memcpy(x2.data() + d.feat, h1n, sizeof(double) * d.hidden);
  std::vector<double> cat2(x2.size() + d.hidden);
  lstm_row_step(params_.lstm2, x2.data(), h2, c2, h2n, c2n, cat2, scratch);

  std::vector<double> logits(d.vocab);
  k::matmul_nn(h2n, params_.w_out.ptr(), logits.data(), 1, d.hidden, d.vocab);
  k::add(logits.data(), params_.b_out.ptr(), logits.data(), d.vocab);
  k::log_softmax_rows(logits.data(), logp, 1, d.vocab);
}

void LMStepper::init_state(double* state) const {
  std::memset(state, 0, sizeof(double) * state_size());
}

void LMStepper::step(const double* state, int prev_id, double* next_state, double* logp) const {
  const ModelDims& d = params_.dims;
  if (prev_id < 0 || prev_id >= d.vocab)
    throw std::runtime_error("word id out of range: " + std::to_string(prev_id));
  const double* h = state;
  const double* c = state + d.hidden;
  std::vector<double> cat(static_cast<std::size_t>(d.embed) + d.hidden),
      scratch(5 * static_cast<std::size_t>(d.hidden));
  lstm_row_step(params_.lstm, params_.w_embed.row(prev_id), h, c, next_state,
                next_state + d.hidden, cat, scratch);
  std::vector<double> logits(d.vocab);
  k::matmul_nn(next_state, params_.w_out.ptr(), logits.data(), 1, d.hidden, d.vocab);
  k::add(logits.data(), params_.b_out.ptr(), logits.data(), d.vocab);
  k::log_softmax_rows(logits.data(), logp, 1, d.vocab);
}

FCStepper::FCStepper(const FCParams& params, const FeatureGrid& grid) : params_(params) {
  if (grid.d != params.w_img.rows)
    throw std::runtime_error("grid depth does not match the image projection input");
  const Tensor m = grid_as_matrix(grid);
  Tensor pooled(1, grid.d);
  k::mean_rows(m.ptr(), pooled.ptr(), grid.cells(), grid.d);
  image_embed_ = Tensor(1, params.dims.embed);
  k::matmul_nn(pooled.ptr(), params.w_img.ptr(), image_embed_.ptr(), 1, grid.d,
               params.dims.embed);
  k::add(image_embed_.ptr(), params.b_img.ptr(), image_embed_.ptr(), params.dims.embed);
}

void FCStepper::init_state(double* state) const {
  const ModelDims& d = params_.dims;
  std::vector<double> zero(2 * static_cast<std::size_t>(d.hidden), 0.0);
  std::vector<double> cat(static_cast<std::size_t>(d.embed) + d.hidden),
      scratch(5 * static_cast<std::size_t>(d.hidden));
  lstm_row_step(params_.lstm, image_embed_.ptr(), zero.data(), zero.data() + d.hidden, state,
                state + d.hidden, cat, scratch);
}

void FCStepper::step(const double* state, int prev_id, double* next_state, double* logp) const {
  const ModelDims& d = params_.dims;
  if (prev_id < 0 || prev_id >= d.vocab)
    throw std::runtime_error("word id out of range: " + std::to_string(prev_id));
  std::vector<double> cat(static_cast<std::size_t>(d.embed) + d.hidden),
      scratch(5 * static_cast<std::size_t>(d.hidden));
  lstm_row_step(params_.lstm, params_.w_embed.row(prev_id), state, state + d.hidden, next_state,
                next_state + d.hidden, cat, scratch);
  std::vector<double> logits(d.vocab);
  k::matmul_nn(next_state, params_.w_out.ptr(), logits.data(), 1, d.hidden, d.vocab);
  k::add(logits.data(), params_.b_out.ptr(), logits.data(), d.vocab);
  k::log_softmax_rows(logits.data(), logp, 1, d.vocab);
}

double sentence_log_prob(const Stepper& stepper, const std::vector<int>& framed_ids) {
  if (framed_ids.size() < 2)
    throw std::runtime_error("framed sentence needs at least begin and end tokens");
  std::vector<double> state(stepper.state_size()), next(stepper.state_size());
  std::vector<double> logp(stepper.vocab_size());
  stepper.init_state(state.data());
  double total = 0.0;
  for (std::size_t t = 1; t < framed_ids.size(); ++t) {
    stepper.step(state.data(), framed_ids[t - 1], next.data(), logp.data());
    total += logp[framed_ids[t]];
    std::swap(state, next);
  }
  return total;
}

}  // namespace fashionfb
