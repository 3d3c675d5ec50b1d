#include "fashionfb/training.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <functional>
#include <memory>
#include <numeric>
#include <stdexcept>
#include <unordered_map>

#include "fashionfb/decoding.hpp"
#include "fashionfb/kernels.hpp"
#include "fashionfb/metrics.hpp"
#include "fashionfb/models_tape.hpp"
#include "fashionfb/tape.hpp"

namespace fashionfb {

Adam::Adam(const std::vector<std::pair<std::string, Tensor*>>& params, const AdamConfig& config)
    : config_(config) {
  if (params.empty()) throw std::runtime_error("optimizer needs parameters");
  slots_.reserve(params.size());
  for (const auto& [name, tensor] : params) {
    Slot s;
    s.name = name;
    s.param = tensor;
    s.m = Tensor(tensor->rows, tensor->cols);
    s.v = Tensor(tensor->rows, tensor->cols);
    slots_.push_back(std::move(s));
  }
}

double Adam::step(const std::vector<std::pair<Tensor*, const Tensor*>>& grads) {
  std::unordered_map<Tensor*, const Tensor*> by_param;
  by_param.reserve(grads.size());
  for (const auto& [param, grad] : grads) by_param[param] = grad;

  double sq = 0.0;
  for (Slot& s : slots_) {
    auto it = by_param.find(s.param);
    if (it == by_param.end())
      throw std::runtime_error("no gradient for parameter " + s.name);
    s.grad = it->second;
    if (!s.param->same_shape(*s.grad))
      throw std::runtime_error("gradient shape mismatch for " + s.name);
    if (!kernels::all_finite(s.grad->ptr(), s.grad->size()))
      throw std::runtime_error("non-finite gradient for " + s.name);
    for (double g : s.grad->data) sq += g * g;
  }
  const double norm = std::sqrt(sq);
  double scale = 1.0;
  if (config_.clip_norm > 0.0 && norm > config_.clip_norm) scale = config_.clip_norm / norm;

  ++t_;
  const double bc1 = 1.0 - std::pow(config_.beta1, t_);
  const double bc2 = 1.0 - std::pow(config_.beta2, t_);
  for (Slot& s : slots_) {
    for (std::size_t i = 0; i < s.param->size(); ++i) {
      const double g = s.grad->data[i] * scale;
      s.m.data[i] = config_.beta1 * s.m.data[i] + (1.0 - config_.beta1) * g;
      s.v.data[i] = config_.beta2 * s.v.data[i] + (1.0 - config_.beta2) * g * g;
      const double m_hat = s.m.data[i] / bc1;
      const double v_hat = s.v.data[i] / bc2;
      s.param->data[i] -= config_.learning_rate * m_hat / (std::sqrt(v_hat) + config_.eps);
    }
    s.grad = nullptr;
  }
  return norm;
}

namespace {

void check_config(const TrainConfig& c) {
  if (c.epochs < 1) throw std::runtime_error("epochs must be positive");
  if (c.images_per_batch < 1 || c.sentences_per_image < 1)
    throw std::runtime_error("batch composition must be positive");
  if (c.dropout_rate < 0.0 || c.dropout_rate >= 1.0)
    throw std::runtime_error("dropout rate must lie in [0, 1)");
  if (c.eval_every < 1) throw std::runtime_error("eval cadence must be positive");
}

struct EncodedExample {
  const FeatureGrid* grid = nullptr;
  std::vector<std::vector<int>> rows;  // framed sentence ids
};

std::vector<EncodedExample> encode_corpus(const Corpus& corpus, const Vocabulary& vocab) {
  if (corpus.examples.empty()) throw std::runtime_error("training corpus is empty");
  std::vector<EncodedExample> out;
  out.reserve(corpus.examples.size());
  for (const CorpusExample& ex : corpus.examples) {
    if (ex.grid_index < 0 || ex.grid_index >= static_cast<int>(corpus.grids.size()))
      throw std::runtime_error("example without image grid: " + ex.image_id);
    if (ex.sentences.empty())
      throw std::runtime_error("example without sentences: " + ex.image_id);
    EncodedExample e;
    e.grid = &corpus.grids[ex.grid_index];
    for (const auto& s : ex.sentences) e.rows.push_back(vocab.encode(s));
    out.push_back(std::move(e));
  }
  return out;
}

std::vector<int> pick_sentences(int count, int want, DetRng& rng) {
  std::vector<int> idx;
  idx.reserve(want);
  if (count >= want) {
    std::vector<int> all(count);
    std::iota(all.begin(), all.end(), 0);
    rng.shuffle(all);
    idx.assign(all.begin(), all.begin() + want);
  } else {
    for (int i = 0; i < want; ++i) idx.push_back(static_cast<int>(rng.below(count)));
  }
  return idx;
}

CaptionBatch make_batch(const std::vector<EncodedExample>& data, const std::vector<int>& images,
                        int sentences_per_image, DetRng& rng) {
  CaptionBatch batch;
  batch.grids.reserve(images.size());
  for (int gi : images) batch.grids.push_back(data[gi].grid);
  for (std::size_t k = 0; k < images.size(); ++k) {
    const auto& rows = data[images[k]].rows;
    for (int s : pick_sentences(static_cast<int>(rows.size()), sentences_per_image, rng)) {
      batch.image_of_row.push_back(static_cast<int>(k));
      batch.rows.push_back(rows[s]);
    }
  }
  return batch;
}

int scored_steps(const std::vector<std::vector<int>>& rows) {
  std::size_t longest = 0;
  for (const auto& r : rows) longest = std::max(longest, r.size());
  return static_cast<int>(longest) - 1;
}

void fill_masks(std::vector<Tensor>& masks, int steps, int b, int width, double rate,
                DetRng& rng) {
  masks.assign(steps, Tensor(b, width));
  const double keep = 1.0 / (1.0 - rate);
  for (Tensor& m : masks)
    for (double& v : m.data) v = rng.uniform01() < rate ? 0.0 : keep;
}

std::vector<Tensor> snapshot(const std::vector<Tensor*>& tensors) {
  std::vector<Tensor> out;
  out.reserve(tensors.size());
  for (Tensor* t : tensors) out.push_back(*t);
  return out;
}

void restore(const std::vector<Tensor>& saved, const std::vector<Tensor*>& tensors) {
  for (std::size_t i = 0; i < tensors.size(); ++i) *tensors[i] = saved[i];
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

// The two captioners differ only in how a batch loss is built, what is
// trainable while the encoder is frozen, and how one image is decoded.
struct CaptionDriver {
  std::function<LossGraph(Tape&, const CaptionBatch&, const std::vector<Tensor>&,
                          const std::vector<Tensor>&, bool)>
      build_loss;
  std::function<std::vector<std::pair<std::string, Tensor*>>(bool)> trainable;
  std::function<std::vector<std::string>(const FeatureGrid&)> decode_one;
  std::vector<Tensor*> all_tensors;
  int embed = 0;
  int hidden = 0;
  bool has_freeze_phase = false;
};

double eval_cider(const CaptionDriver& driver, const Corpus& eval_set) {
  const int n = static_cast<int>(eval_set.examples.size());
  std::vector<TokenSentence> cands(n);
  std::vector<ReferenceSet> refs(n);
#pragma omp parallel for schedule(dynamic)
  for (int i = 0; i < n; ++i)
    cands[i] = driver.decode_one(eval_set.grids[eval_set.examples[i].grid_index]);
  for (int i = 0; i < n; ++i) refs[i] = eval_set.examples[i].sentences;
  return cider_d(cands, refs);
}

TrainResult run_caption_training(const CaptionDriver& driver, const Corpus& train,
                                 const Corpus& eval_set, const Vocabulary& vocab,
                                 const TrainConfig& config) {
  check_config(config);
  const std::vector<EncodedExample> data = encode_corpus(train, vocab);
  DetRng rng(config.seed);

  TrainResult result;
  result.initial_score = eval_cider(driver, eval_set);

  const int freeze_epochs = driver.has_freeze_phase ? config.freeze_encoder_epochs : 0;
  auto adam = std::make_unique<Adam>(driver.trainable(freeze_epochs >= 1), config.adam);

  std::vector<Tensor> best;
  double best_score = 0.0;
  int best_epoch = 0;

  std::vector<int> order(data.size());
  std::iota(order.begin(), order.end(), 0);
  for (int epoch = 1; epoch <= config.epochs; ++epoch) {
    const auto t0 = std::chrono::steady_clock::now();
    const bool frozen = epoch <= freeze_epochs;
    if (freeze_epochs >= 1 && epoch == freeze_epochs + 1)
      adam = std::make_unique<Adam>(driver.trainable(false), config.adam);

    rng.shuffle(order);
    double loss_sum = 0.0;
    long long tokens = 0;
    for (std::size_t at = 0; at < order.size(); at += config.images_per_batch) {
      const std::size_t stop = std::min(order.size(), at + config.images_per_batch);
      const std::vector<int> chunk(order.begin() + at, order.begin() + stop);
      CaptionBatch batch = make_batch(data, chunk, config.sentences_per_image, rng);

      std::vector<Tensor> embed_masks, out_masks;
      if (config.dropout_rate > 0.0) {
        const int b = static_cast<int>(batch.rows.size());
        const int steps = scored_steps(batch.rows);
        fill_masks(embed_masks, steps, b, driver.embed, config.dropout_rate, rng);
        fill_masks(out_masks, steps, b, driver.hidden, config.dropout_rate, rng);
      }

      Tape tape;
      LossGraph lg = driver.build_loss(tape, batch, embed_masks, out_masks, frozen);
      tape.backward(lg.loss);
      std::vector<std::pair<Tensor*, const Tensor*>> grads;
      tape.collect_grads(grads);
      adam->step(grads);
      loss_sum += tape.value(lg.loss).data[0] * lg.token_count;
      tokens += lg.token_count;
    }

    EpochRow row;
    row.epoch = epoch;
    row.train_loss = loss_sum / static_cast<double>(tokens);
    if (epoch % config.eval_every == 0 || epoch == config.epochs) {
      row.evaluated = true;
      row.eval_score = eval_cider(driver, eval_set);
      if (best_epoch == 0 || row.eval_score > best_score) {
        best_score = row.eval_score;
        best_epoch = epoch;
        best = snapshot(driver.all_tensors);
      }
    }
    row.wall_seconds = seconds_since(t0);
    result.log.push_back(row);
  }

  restore(best, driver.all_tensors);
  result.best_epoch = best_epoch;
  result.best_score = best_score;
  return result;
}

}  // namespace

TrainResult train_captioner(TopDownParams& params, const Corpus& train, const Corpus& eval_set,
                            const Vocabulary& vocab, const TrainConfig& config) {
  DecodingConfig decode;
  decode.beam_width = config.eval_beam_width;
  decode.beta = 0.0;
  decode.max_length = config.eval_max_length;
  decode.filter_enabled = false;

  CaptionDriver driver;
  driver.embed = params.dims.embed;
  driver.hidden = params.dims.hidden;
  driver.has_freeze_phase = true;
  driver.all_tensors = params.all();
  driver.build_loss = [&params](Tape& tape, const CaptionBatch& batch,
                                const std::vector<Tensor>& em, const std::vector<Tensor>& om,
                                bool frozen) {
    return build_topdown_loss(tape, params, batch, em, om, frozen);
  };
  driver.trainable = [&params](bool frozen) {
    auto named = params.named();
    if (frozen) {
      const auto enc = params.encoder_tensors();
      named.erase(std::remove_if(named.begin(), named.end(),
                                 [&enc](const std::pair<std::string, Tensor*>& p) {
                                   return std::find(enc.begin(), enc.end(), p.second) != enc.end();
                                 }),
                  named.end());
    }
    return named;
  };
  driver.decode_one = [&params, &vocab, decode](const FeatureGrid& grid) {
    ImageContext ctx = make_image_context(grid, params);
    TopDownStepper stepper(params, ctx);
    BeamResult beam = beam_search(stepper, nullptr, decode);
    return vocab.decode(beam.pool.front().ids);
  };
  return run_caption_training(driver, train, eval_set, vocab, config);
}

TrainResult train_fc_baseline(FCParams& params, const Corpus& train, const Corpus& eval_set,
                              const Vocabulary& vocab, const TrainConfig& config) {
  DecodingConfig decode;
  decode.beam_width = config.eval_beam_width;
  decode.beta = 0.0;
  decode.max_length = config.eval_max_length;
  decode.filter_enabled = false;

  CaptionDriver driver;
  driver.embed = params.dims.embed;
  driver.hidden = params.dims.hidden;
  driver.has_freeze_phase = false;
  driver.all_tensors = params.all();
  driver.build_loss = [&params](Tape& tape, const CaptionBatch& batch,
                                const std::vector<Tensor>& em, const std::vector<Tensor>& om,
                                bool) { return build_fc_loss(tape, params, batch, em, om); };
  driver.trainable = [&params](bool) { return params.named(); };
  driver.decode_one = [&params, &vocab, decode](const FeatureGrid& grid) {
    FCStepper stepper(params, grid);
    BeamResult beam = beam_search(stepper, nullptr, decode);
    return vocab.decode(beam.pool.front().ids);
  };
  return run_caption_training(driver, train, eval_set, vocab, config);
}

TrainResult train_lm(LMParams& params, const std::vector<std::vector<std::string>>& sentences,
                     const Vocabulary& vocab, const TrainConfig& config) {
  check_config(config);
  if (sentences.empty()) throw std::runtime_error("language model corpus is empty");

  std::vector<std::vector<int>> rows;
  rows.reserve(sentences.size());
  for (const auto& s : sentences) rows.push_back(vocab.encode(s));

  // Last 5% (at least one sentence) are held out for model selection. A
  // corpus too small to split trains on the held-out sentences as well.
  const std::size_t held = std::max<std::size_t>(1, rows.size() / 20);
  const std::vector<std::vector<int>> heldout(rows.end() - held, rows.end());
  if (rows.size() > held) rows.resize(rows.size() - held);

  DetRng rng(config.seed);
  TrainResult result;
  {
    LMStepper stepper(params);
    result.initial_score = perplexity(stepper, heldout);
  }
  Adam adam(params.named(), config.adam);
  const std::size_t batch_rows =
      static_cast<std::size_t>(config.images_per_batch) * config.sentences_per_image;

  std::vector<Tensor> best;
  double best_score = 0.0;
  int best_epoch = 0;

  std::vector<int> order(rows.size());
  std::iota(order.begin(), order.end(), 0);
  for (int epoch = 1; epoch <= config.epochs; ++epoch) {
    const auto t0 = std::chrono::steady_clock::now();
    rng.shuffle(order);
    double loss_sum = 0.0;
    long long tokens = 0;
    for (std::size_t at = 0; at < order.size(); at += batch_rows) {
      const std::size_t stop = std::min(order.size(), at + batch_rows);
      std::vector<std::vector<int>> batch;
      batch.reserve(stop - at);
      for (std::size_t i = at; i < stop; ++i) batch.push_back(rows[order[i]]);

      std::vector<Tensor> embed_masks, out_masks;
      if (config.dropout_rate > 0.0) {
        const int b = static_cast<int>(batch.size());
        const int steps = scored_steps(batch);
        fill_masks(embed_masks, steps, b, params.dims.embed, config.dropout_rate, rng);
        fill_masks(out_masks, steps, b, params.dims.hidden, config.dropout_rate, rng);
      }

      Tape tape;
      LossGraph lg = build_lm_loss(tape, params, batch, embed_masks, out_masks);
      tape.backward(lg.loss);
      std::vector<std::pair<Tensor*, const Tensor*>> grads;
      tape.collect_grads(grads);
      adam.step(grads);
      loss_sum += tape.value(lg.loss).data[0] * lg.token_count;
      tokens += lg.token_count;
    }

    EpochRow row;
    row.epoch = epoch;
    row.train_loss = loss_sum / static_cast<double>(tokens);
    row.evaluated = true;
    {
      LMStepper stepper(params);
      row.eval_score = perplexity(stepper, heldout);
    }
    if (best_epoch == 0 || row.eval_score < best_score) {
      best_score = row.eval_score;
      best_epoch = epoch;
      best = snapshot(params.all());
    }
    row.wall_seconds = seconds_since(t0);
    result.log.push_back(row);
  }

  restore(best, params.all());
  result.best_epoch = best_epoch;
  result.best_score = best_score;
  return result;
}

double perplexity(const Stepper& stepper, const std::vector<std::vector<int>>& framed_rows) {
  if (framed_rows.empty()) throw std::runtime_error("perplexity needs sentences");
  double nll = 0.0;
  long long tokens = 0;
  for (const auto& row : framed_rows) {
    nll -= sentence_log_prob(stepper, row);
    tokens += static_cast<long long>(row.size()) - 1;
  }
  if (tokens <= 0) throw std::runtime_error("perplexity needs scored tokens");
  return std::exp(nll / static_cast<double>(tokens));
}

void transfer_encoder_weights(const TopDownParams& source, TopDownParams& target) {
  const Tensor* src[] = {&source.enc.w, &source.enc.b};
  Tensor* dst[] = {&target.enc.w, &target.enc.b};
  for (int i = 0; i < 2; ++i) {
    if (!src[i]->same_shape(*dst[i]))
      throw std::runtime_error("encoder projection shapes differ");
    dst[i]->data = src[i]->data;
  }
}

void write_epoch_csv(const std::string& path, const std::string& score_column,
                     const std::vector<EpochRow>& log) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path);
  auto num = [](double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return std::string(buf);
  };
  out << "epoch,train_loss," << score_column << ",wall_seconds\n";
  for (const EpochRow& row : log) {
    out << row.epoch << ',' << num(row.train_loss) << ','
        << (row.evaluated ? num(row.eval_score) : std::string()) << ','
        << num(row.wall_seconds) << '\n';
  }
  if (!out.flush()) throw std::runtime_error("cannot write " + path);
}

}  // namespace fashionfb
