#include "fashionfb/cli.hpp"

#include <algorithm>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <sstream>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <utility>
#include <vector>

#ifdef _OPENMP
#include <omp.h>
#endif

#include <CLI11.hpp>
#include <json.hpp>

#include "fashionfb/checkpoint.hpp"
#include "fashionfb/chunker.hpp"
#include "fashionfb/corpus.hpp"
#include "fashionfb/decoding.hpp"
#include "fashionfb/metrics.hpp"
#include "fashionfb/models.hpp"
#include "fashionfb/rng.hpp"
#include "fashionfb/training.hpp"
#include "fashionfb/vocab.hpp"

namespace fashionfb {
namespace {

using nlohmann::json;
namespace fs = std::filesystem;

// Stream ids for fanning the top-level seed out per subsystem.
constexpr std::uint64_t kStreamSynth = 1;
constexpr std::uint64_t kStreamModelInit = 2;
constexpr std::uint64_t kStreamTrain = 3;
constexpr std::uint64_t kStreamLmInit = 4;
constexpr std::uint64_t kStreamLmTrain = 5;
constexpr std::uint64_t kStreamFsBaseline = 6;

struct RunConfig {
  std::string config_path;
  bool print_config = false;
  std::uint64_t seed = 1;
  int threads = 1;

  // paths
  std::string out;
  std::string corpus;
  std::string eval_corpus;
  std::string vocab;
  std::string checkpoint;
  std::string lm_checkpoint;
  std::string candidates;
  std::string input;
  std::string transfer_encoder_from;
  std::string epoch_log;

  // synthetic data
  int grid_h = 7;
  int grid_w = 14;
  int grid_d = 32;
  int train_images = 2000;
  int eval_images = 100;
  int sentences_per_image = 3;
  int refs_per_eval_image = 15;
  double generic_rate = 0.3;
  std::string feedback_type = "good";

  // model dims (feature depth comes from the grids themselves)
  int embed = 64;
  int hidden = 64;
  int attn = 64;
  int feat = 64;

  // vocabulary
  int min_count = 5;

  // training
  std::string model = "topdown";
  int epochs = 30;
  double learning_rate = 1e-3;
  double clip_norm = 5.0;
  int batch_images = 32;
  int batch_sentences = 3;
  double dropout = 0.5;
  int freeze_epochs = 10;
  int eval_every = 5;
  int eval_beam = 10;
  int eval_max_length = 24;

  // decoding
  int beam = 10;
  double beta = 0.4;
  int beta_zero_after_step = -1;  // -1: 11 for good, 16 for tip
  int max_length = 24;
  bool filter = true;

  // evaluation / sweep
  bool fs = false;
  std::string betas = "0,0.4";
  std::string beams = "3,10";
};

std::string fmt_double(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

void parse_into(const std::string& v, std::string& out) { out = v; }

void parse_into(const std::string& v, bool& out) {
  if (v == "true" || v == "1") {
    out = true;
  } else if (v == "false" || v == "0") {
    out = false;
  } else {
    throw std::runtime_error("expected true or false, got '" + v + "'");
  }
}

template <typename T>
void parse_into(const std::string& v, T& out) {
  std::istringstream in(v);
  in >> out;
  if (in.fail() || !(in >> std::ws).eof())
    throw std::runtime_error("cannot parse '" + v + "'");
}

std::string format_value(const std::string& v) { return v; }
std::string format_value(bool v) { return v ? "true" : "false"; }
std::string format_value(double v) { return fmt_double(v); }
std::string format_value(int v) { return std::to_string(v); }
std::string format_value(std::uint64_t v) { return std::to_string(v); }

// One entry per knob: the same key names a --flag and a config-file line,
// so the schema is documented once (in --help).
struct SchemaEntry {
  std::string key;
  std::function<void(const std::string&)> parse;
  std::function<std::string()> dump;
};

class Schema {
 public:
  template <typename T>
  void add(CLI::App& app, const std::string& key, T& field, const std::string& help) {
    app.add_option("--" + key, field, help)->capture_default_str();
    entries_.push_back({key,
                        [&field](const std::string& v) { parse_into(v, field); },
                        [&field] { return format_value(field); }});
  }

  void add_flag(CLI::App& app, const std::string& key, bool& field, const std::string& help) {
    app.add_flag("--" + key + ",!--no-" + key, field, help);
    entries_.push_back({key,
                        [&field](const std::string& v) { parse_into(v, field); },
                        [&field] { return format_value(field); }});
  }

  void apply_file(const std::string& path) const {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot read config file: " + path);
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
      ++lineno;
      std::string body = trim(line);
      if (body.empty() || body[0] == '#') continue;
      auto eq = body.find('=');
      if (eq == std::string::npos)
        throw std::runtime_error("config line " + std::to_string(lineno) +
                                 " is not key=value: " + body);
      std::string key = trim(body.substr(0, eq));
      std::string value = trim(body.substr(eq + 1));
      const SchemaEntry* entry = find(key);
      if (!entry) throw std::runtime_error("unknown config key: " + key);
      try {
        entry->parse(value);
      } catch (const std::exception& e) {
        throw std::runtime_error("bad value for config key " + key + ": " + e.what());
      }
    }
  }

  void print_resolved(std::ostream& out) const {
    for (const auto& e : entries_) out << e.key << "=" << e.dump() << "\n";
  }

 private:
  std::vector<SchemaEntry> entries_;

  static std::string trim(const std::string& s) {
    auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return "";
    auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
  }

  const SchemaEntry* find(const std::string& key) const {
    for (const auto& e : entries_)
      if (e.key == key) return &e;
    return nullptr;
  }
};

void require_path(const std::string& value, const std::string& key, const std::string& sub) {
  if (value.empty())
    throw std::runtime_error(sub + " needs --" + key);
}

FeedbackType corpus_feedback_type(const Corpus& corpus, const std::string& path) {
  if (corpus.examples.empty())
    throw std::runtime_error("corpus has no examples: " + path);
  FeedbackType t = corpus.examples.front().type;
  for (const auto& ex : corpus.examples)
    if (ex.type != t)
      throw std::runtime_error("corpus mixes feedback types: " + path);
  return t;
}

int effective_beta_cutoff(int configured, FeedbackType type) {
  if (configured >= 0) return configured;
  return type == FeedbackType::Good ? 11 : 16;
}

// Decoded words all live in the vocabulary, so its POS tags are the
// filter's lexicon; no separate word list needed at decode time.
Lexicon lexicon_from_vocab(const Vocabulary& vocab) {
  Lexicon lex;
  for (int id = 3; id < vocab.size(); ++id) lex[vocab.token(id)] = vocab.pos(id);
  return lex;
}

std::vector<std::vector<std::string>> corpus_sentences(const Corpus& corpus) {
  std::vector<std::vector<std::string>> out;
  for (const auto& ex : corpus.examples)
    for (const auto& s : ex.sentences) out.push_back(s);
  return out;
}

ModelDims dims_from_meta(const CheckpointMeta& meta, const std::string& path) {
  auto get = [&](const char* key) {
    auto it = meta.config.find(key);
    if (it == meta.config.end())
      throw std::runtime_error("checkpoint header lacks " + std::string(key) + ": " + path);
    int v = 0;
    parse_into(it->second, v);
    return v;
  };
  ModelDims d;
  d.vocab = get("vocab-size");
  d.embed = get("embed");
  d.hidden = get("hidden");
  d.attn = get("attn");
  d.feat = get("feat");
  d.feat_in = get("feat-in");
  return d;
}

std::map<std::string, std::string> snapshot_config(const RunConfig& cfg, const ModelDims& d) {
  return {
      {"vocab-size", std::to_string(d.vocab)},
      {"embed", std::to_string(d.embed)},
      {"hidden", std::to_string(d.hidden)},
      {"attn", std::to_string(d.attn)},
      {"feat", std::to_string(d.feat)},
      {"feat-in", std::to_string(d.feat_in)},
      {"model", cfg.model},
      {"epochs", std::to_string(cfg.epochs)},
      {"learning-rate", fmt_double(cfg.learning_rate)},
      {"clip-norm", fmt_double(cfg.clip_norm)},
      {"batch-images", std::to_string(cfg.batch_images)},
      {"batch-sentences", std::to_string(cfg.batch_sentences)},
      {"dropout", fmt_double(cfg.dropout)},
      {"freeze-epochs", std::to_string(cfg.freeze_epochs)},
      {"eval-every", std::to_string(cfg.eval_every)},
      {"eval-beam", std::to_string(cfg.eval_beam)},
      {"eval-max-length", std::to_string(cfg.eval_max_length)},
      {"seed", std::to_string(cfg.seed)},
  };
}

TrainConfig train_config_from(const RunConfig& cfg, std::uint64_t stream) {
  TrainConfig tc;
  tc.adam.learning_rate = cfg.learning_rate;
  tc.adam.clip_norm = cfg.clip_norm;
  tc.epochs = cfg.epochs;
  tc.images_per_batch = cfg.batch_images;
  tc.sentences_per_image = cfg.batch_sentences;
  tc.dropout_rate = cfg.dropout;
  tc.freeze_encoder_epochs = cfg.freeze_epochs;
  tc.eval_every = cfg.eval_every;
  tc.eval_beam_width = cfg.eval_beam;
  tc.eval_max_length = cfg.eval_max_length;
  tc.seed = split_seed(cfg.seed, stream);
  return tc;
}

void print_epoch_log(const TrainResult& result, const char* score_name) {
  std::cout << "initial " << score_name << " " << result.initial_score << "\n";
  for (const auto& row : result.log) {
    std::cout << "epoch " << row.epoch << " loss " << row.train_loss;
    if (row.evaluated) std::cout << " " << score_name << " " << row.eval_score;
    std::cout << "\n";
  }
}

struct LoadedCaptioner {
  std::string kind;
  TopDownParams topdown;
  FCParams fc;
};

LoadedCaptioner load_captioner(const std::string& path, const Vocabulary& vocab) {
  CheckpointMeta meta = read_checkpoint_meta(path);
  LoadedCaptioner model;
  model.kind = meta.model_kind;
  ModelDims d = dims_from_meta(meta, path);
  if (d.vocab != vocab.size())
    throw std::runtime_error("checkpoint vocabulary size " + std::to_string(d.vocab) +
                             " does not match the loaded vocabulary (" +
                             std::to_string(vocab.size()) + "): " + path);
  DetRng scratch(0);
  if (meta.model_kind == "topdown") {
    model.topdown.init(d, scratch);
    load_checkpoint(path, vocab.hash(), model.topdown.named());
  } else if (meta.model_kind == "fc") {
    model.fc.init(d, scratch);
    load_checkpoint(path, vocab.hash(), model.fc.named());
  } else {
    throw std::runtime_error("checkpoint is not a captioner (model kind '" + meta.model_kind +
                             "'): " + path);
  }
  return model;
}

LMParams load_lm(const std::string& path, const Vocabulary& vocab) {
  CheckpointMeta meta = read_checkpoint_meta(path);
  if (meta.model_kind != "lm")
    throw std::runtime_error("checkpoint is not a language model (model kind '" +
                             meta.model_kind + "'): " + path);
  ModelDims d = dims_from_meta(meta, path);
  if (d.vocab != vocab.size())
    throw std::runtime_error("checkpoint vocabulary size " + std::to_string(d.vocab) +
                             " does not match the loaded vocabulary (" +
                             std::to_string(vocab.size()) + "): " + path);
  LMParams params;
  DetRng scratch(0);
  params.init(d, scratch);
  load_checkpoint(path, vocab.hash(), params.named());
  return params;
}

int grid_depth(const Corpus& corpus, const std::string& path) {
  if (corpus.grids.empty())
    throw std::runtime_error("corpus has no image grids: " + path);
  return corpus.grids.front().d;
}

// Decodes every example of the corpus under one configuration. Images are
// independent, so the loop parallelizes; any exception is carried out.
std::vector<DecodeResult> decode_corpus(const LoadedCaptioner& model, const LMParams* lm,
                                        const Corpus& corpus, const Vocabulary& vocab,
                                        const Lexicon& lexicon, const DecodingConfig& dc) {
  std::vector<DecodeResult> results(corpus.examples.size());
  static const LMParams kNoLm;
  LMStepper lm_stepper(lm ? *lm : kNoLm);
  std::string error;
  const auto n = static_cast<std::int64_t>(corpus.examples.size());
#pragma omp parallel for schedule(dynamic)
  for (std::int64_t i = 0; i < n; ++i) {
    try {
      const auto& ex = corpus.examples[static_cast<std::size_t>(i)];
      const FeatureGrid& grid = corpus.grids[static_cast<std::size_t>(ex.grid_index)];
      Stepper* prior = lm ? &lm_stepper : nullptr;
      if (model.kind == "topdown") {
        ImageContext ctx = make_image_context(grid, model.topdown);
        TopDownStepper stepper(model.topdown, ctx);
        results[static_cast<std::size_t>(i)] = decode_image(stepper, prior, vocab, lexicon, dc);
      } else {
        FCStepper stepper(model.fc, grid);
        results[static_cast<std::size_t>(i)] = decode_image(stepper, prior, vocab, lexicon, dc);
      }
    } catch (const std::exception& e) {
#pragma omp critical
      if (error.empty()) error = e.what();
    }
  }
  if (!error.empty()) throw std::runtime_error(error);
  return results;
}

std::string join_tokens(const std::vector<std::string>& tokens) {
  std::string out;
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    if (i) out += ' ';
    out += tokens[i];
  }
  return out;
}

std::vector<std::string> split_whitespace(const std::string& s) {
  std::istringstream in(s);
  std::vector<std::string> out;
  std::string w;
  while (in >> w) out.push_back(w);
  return out;
}

std::ofstream open_output(const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path);
  return out;
}

// ---- subcommands ----

void run_gen_data(const RunConfig& cfg) {
  require_path(cfg.out, "out", "gen-data");
  SynthConfig sc;
  sc.grid_h = cfg.grid_h;
  sc.grid_w = cfg.grid_w;
  sc.grid_d = cfg.grid_d;
  sc.train_images = cfg.train_images;
  sc.eval_images = cfg.eval_images;
  sc.sentences_per_image = cfg.sentences_per_image;
  sc.refs_per_eval_image = cfg.refs_per_eval_image;
  sc.generic_rate = cfg.generic_rate;
  sc.type = feedback_type_from_name(cfg.feedback_type);
  SynthOutput data = generate_synthetic_corpus(sc, split_seed(cfg.seed, kStreamSynth));
  fs::create_directories(cfg.out);
  fs::path dir(cfg.out);
  save_corpus(data.train, (dir / "train.jsonl").string(), "train.fgrd");
  save_corpus(data.eval, (dir / "eval.jsonl").string(), "eval.fgrd");
  std::cout << "wrote " << data.train.examples.size() << " train and " << data.eval.examples.size()
            << " eval images to " << cfg.out << "\n";
}

void run_build_vocab(const RunConfig& cfg) {
  require_path(cfg.corpus, "corpus", "build-vocab");
  require_path(cfg.out, "out", "build-vocab");
  Corpus corpus = load_corpus(cfg.corpus);
  Vocabulary vocab = Vocabulary::build(corpus_sentences(corpus), synth_lexicon(), cfg.min_count);
  vocab.save(cfg.out);
  std::cout << "vocabulary of " << vocab.size() << " tokens -> " << cfg.out << "\n";
}

void run_train(const RunConfig& cfg) {
  require_path(cfg.corpus, "corpus", "train");
  require_path(cfg.eval_corpus, "eval-corpus", "train");
  require_path(cfg.vocab, "vocab", "train");
  require_path(cfg.out, "out", "train");
  Corpus train = load_corpus(cfg.corpus);
  Corpus eval_set = load_corpus(cfg.eval_corpus);
  Vocabulary vocab = Vocabulary::load(cfg.vocab);
  int depth = grid_depth(train, cfg.corpus);
  if (grid_depth(eval_set, cfg.eval_corpus) != depth)
    throw std::runtime_error("eval grid depth does not match training grid depth: " +
                             cfg.eval_corpus);

  ModelDims dims;
  dims.vocab = vocab.size();
  dims.embed = cfg.embed;
  dims.hidden = cfg.hidden;
  dims.attn = cfg.attn;
  dims.feat = cfg.feat;
  dims.feat_in = depth;
  TrainConfig tc = train_config_from(cfg, kStreamTrain);
  DetRng init_rng(split_seed(cfg.seed, kStreamModelInit));

  CheckpointMeta meta;
  meta.vocab_hash = vocab.hash();
  meta.config = snapshot_config(cfg, dims);
  TrainResult result;
  if (cfg.model == "topdown") {
    TopDownParams params;
    params.init(dims, init_rng);
    if (!cfg.transfer_encoder_from.empty()) {
      LoadedCaptioner source = load_captioner(cfg.transfer_encoder_from, vocab);
      if (source.kind != "topdown")
        throw std::runtime_error("encoder transfer needs an attention-model checkpoint: " +
                                 cfg.transfer_encoder_from);
      transfer_encoder_weights(source.topdown, params);
    }
    result = train_captioner(params, train, eval_set, vocab, tc);
    meta.model_kind = "topdown";
    meta.epoch = result.best_epoch;
    meta.best_score = result.best_score;
    save_checkpoint(cfg.out, meta, params.named());
  } else if (cfg.model == "fc") {
    if (!cfg.transfer_encoder_from.empty())
      throw std::runtime_error("encoder transfer applies to the attention model only");
    FCParams params;
    params.init(dims, init_rng);
    result = train_fc_baseline(params, train, eval_set, vocab, tc);
    meta.model_kind = "fc";
    meta.epoch = result.best_epoch;
    meta.best_score = result.best_score;
    save_checkpoint(cfg.out, meta, params.named());
  } else {
    throw std::runtime_error("unknown model kind: " + cfg.model);
  }
  if (!cfg.epoch_log.empty()) write_epoch_csv(cfg.epoch_log, "eval_cider_d", result.log);
  print_epoch_log(result, "cider-d");
  std::cout << "best epoch " << result.best_epoch << " cider-d " << result.best_score << " -> "
            << cfg.out << "\n";
}

void run_train_lm(const RunConfig& cfg) {
  require_path(cfg.corpus, "corpus", "train-lm");
  require_path(cfg.vocab, "vocab", "train-lm");
  require_path(cfg.out, "out", "train-lm");
  Corpus corpus = load_corpus(cfg.corpus);
  Vocabulary vocab = Vocabulary::load(cfg.vocab);

  ModelDims dims;
  dims.vocab = vocab.size();
  dims.embed = cfg.embed;
  dims.hidden = cfg.hidden;
  dims.attn = cfg.attn;
  dims.feat = cfg.feat;
  dims.feat_in = cfg.grid_d;
  LMParams params;
  DetRng init_rng(split_seed(cfg.seed, kStreamLmInit));
  params.init(dims, init_rng);

  TrainConfig tc = train_config_from(cfg, kStreamLmTrain);
  TrainResult result = train_lm(params, corpus_sentences(corpus), vocab, tc);

  CheckpointMeta meta;
  meta.vocab_hash = vocab.hash();
  meta.model_kind = "lm";
  meta.epoch = result.best_epoch;
  meta.best_score = result.best_score;
  meta.config = snapshot_config(cfg, dims);
  save_checkpoint(cfg.out, meta, params.named());
  if (!cfg.epoch_log.empty()) write_epoch_csv(cfg.epoch_log, "heldout_perplexity", result.log);
  print_epoch_log(result, "perplexity");
  std::cout << "best epoch " << result.best_epoch << " perplexity " << result.best_score << " -> "
            << cfg.out << "\n";
}

void run_decode(const RunConfig& cfg) {
  require_path(cfg.eval_corpus, "eval-corpus", "decode");
  require_path(cfg.vocab, "vocab", "decode");
  require_path(cfg.checkpoint, "checkpoint", "decode");
  require_path(cfg.out, "out", "decode");
  if (cfg.beta > 0.0 && cfg.lm_checkpoint.empty())
    throw std::runtime_error("the anti-prior objective needs --lm-checkpoint when beta > 0");
  Corpus corpus = load_corpus(cfg.eval_corpus);
  Vocabulary vocab = Vocabulary::load(cfg.vocab);
  LoadedCaptioner model = load_captioner(cfg.checkpoint, vocab);

  LMParams lm;
  bool have_lm = !cfg.lm_checkpoint.empty();
  if (have_lm) lm = load_lm(cfg.lm_checkpoint, vocab);

  FeedbackType type = corpus_feedback_type(corpus, cfg.eval_corpus);
  DecodingConfig dc;
  dc.beam_width = cfg.beam;
  dc.beta = cfg.beta;
  dc.beta_zero_after_step = effective_beta_cutoff(cfg.beta_zero_after_step, type);
  dc.max_length = cfg.max_length;
  dc.filter_enabled = cfg.filter;
  dc.feedback_type = type;

  Lexicon lexicon = lexicon_from_vocab(vocab);
  std::vector<DecodeResult> results =
      decode_corpus(model, have_lm ? &lm : nullptr, corpus, vocab, lexicon, dc);

  std::ofstream out = open_output(cfg.out);
  int fallbacks = 0;
  for (std::size_t i = 0; i < results.size(); ++i) {
    const DecodeResult& r = results[i];
    json line = {
        {"image_id", corpus.examples[i].image_id},
        {"sentence", join_tokens(r.tokens)},
        {"score", r.score},
        {"logp_cond", r.logp_cond},
        {"logp_prior", r.logp_prior},
        {"beta", cfg.beta},
        {"beam_width", cfg.beam},
        {"filtered_fallback", r.filtered_fallback},
    };
    out << line.dump() << "\n";
    fallbacks += r.filtered_fallback ? 1 : 0;
  }
  if (!out) throw std::runtime_error("cannot write " + cfg.out);
  std::cout << "decoded " << results.size() << " images (" << fallbacks
            << " filter fallbacks) -> " << cfg.out << "\n";
}

std::vector<ReferenceSet> corpus_references(const Corpus& corpus) {
  std::vector<ReferenceSet> refs;
  refs.reserve(corpus.examples.size());
  for (const auto& ex : corpus.examples) refs.push_back(ex.sentences);
  return refs;
}

std::vector<TokenSentence> load_candidates(const std::string& path, const Corpus& corpus) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot read candidates: " + path);
  std::unordered_map<std::string, TokenSentence> by_id;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    json rec;
    try {
      rec = json::parse(line);
    } catch (const std::exception&) {
      throw std::runtime_error("bad JSON in " + path + " line " + std::to_string(lineno));
    }
    std::string id = rec.at("image_id").get<std::string>();
    if (!by_id.emplace(id, split_whitespace(rec.at("sentence").get<std::string>())).second)
      throw std::runtime_error("duplicate candidate for image " + id + ": " + path);
  }
  std::vector<TokenSentence> ordered;
  ordered.reserve(corpus.examples.size());
  std::unordered_set<std::string> known;
  for (const auto& ex : corpus.examples) {
    auto it = by_id.find(ex.image_id);
    if (it == by_id.end())
      throw std::runtime_error("no candidate for image " + ex.image_id + ": " + path);
    ordered.push_back(it->second);
    known.insert(ex.image_id);
  }
  for (const auto& [id, tokens] : by_id)
    if (!known.count(id))
      throw std::runtime_error("candidate for unknown image " + id + ": " + path);
  return ordered;
}

json report_to_json(const MetricsReport& r) {
  return {
      {"bleu4", r.bleu4},         {"rouge_l", r.rouge_l},
      {"cider_d", r.cider_d},     {"diversity", r.diversity},
      {"vocab_usage", r.vocab_usage},
  };
}

void run_evaluate(const RunConfig& cfg) {
  require_path(cfg.candidates, "candidates", "evaluate");
  require_path(cfg.eval_corpus, "eval-corpus", "evaluate");
  require_path(cfg.vocab, "vocab", "evaluate");
  Corpus corpus = load_corpus(cfg.eval_corpus);
  Vocabulary vocab = Vocabulary::load(cfg.vocab);
  std::vector<TokenSentence> candidates = load_candidates(cfg.candidates, corpus);
  std::vector<ReferenceSet> references = corpus_references(corpus);
  json report = report_to_json(evaluate_generated(candidates, references, vocab));
  if (cfg.fs)
    report["fs_baseline"] =
        report_to_json(fs_baseline(references, vocab, split_seed(cfg.seed, kStreamFsBaseline)));
  std::string text = report.dump(2);
  std::cout << text << "\n";
  if (!cfg.out.empty()) {
    std::ofstream out = open_output(cfg.out);
    out << text << "\n";
    if (!out) throw std::runtime_error("cannot write " + cfg.out);
  }
}

template <typename T>
std::vector<T> parse_list(const std::string& csv, const std::string& key) {
  std::vector<T> out;
  std::string item;
  std::istringstream in(csv);
  while (std::getline(in, item, ',')) {
    T v{};
    try {
      parse_into(item, v);
    } catch (const std::exception&) {
      throw std::runtime_error("bad value in --" + key + ": '" + item + "'");
    }
    out.push_back(v);
  }
  if (out.empty()) throw std::runtime_error("--" + key + " needs at least one value");
  return out;
}

void run_sweep(const RunConfig& cfg) {
  require_path(cfg.eval_corpus, "eval-corpus", "sweep");
  require_path(cfg.vocab, "vocab", "sweep");
  require_path(cfg.checkpoint, "checkpoint", "sweep");
  require_path(cfg.out, "out", "sweep");
  std::vector<double> betas = parse_list<double>(cfg.betas, "betas");
  std::vector<int> beams = parse_list<int>(cfg.beams, "beams");
  bool needs_lm = std::any_of(betas.begin(), betas.end(), [](double b) { return b > 0.0; });
  if (needs_lm && cfg.lm_checkpoint.empty())
    throw std::runtime_error("the anti-prior objective needs --lm-checkpoint when a beta > 0");

  Corpus corpus = load_corpus(cfg.eval_corpus);
  Vocabulary vocab = Vocabulary::load(cfg.vocab);
  LoadedCaptioner model = load_captioner(cfg.checkpoint, vocab);
  LMParams lm;
  bool have_lm = !cfg.lm_checkpoint.empty();
  if (have_lm) lm = load_lm(cfg.lm_checkpoint, vocab);
  FeedbackType type = corpus_feedback_type(corpus, cfg.eval_corpus);
  Lexicon lexicon = lexicon_from_vocab(vocab);
  std::vector<ReferenceSet> references = corpus_references(corpus);

  std::ofstream out = open_output(cfg.out);
  out << "beta,beam,bleu4,rouge_l,cider_d,diversity,vocab_usage,filtered_fallback_rate\n";
  for (double beta : betas) {
    for (int beam : beams) {
      DecodingConfig dc;
      dc.beam_width = beam;
      dc.beta = beta;
      dc.beta_zero_after_step = effective_beta_cutoff(cfg.beta_zero_after_step, type);
      dc.max_length = cfg.max_length;
      dc.filter_enabled = cfg.filter;
      dc.feedback_type = type;
      const LMParams* prior = (have_lm && beta > 0.0) ? &lm : nullptr;
      std::vector<DecodeResult> results =
          decode_corpus(model, prior, corpus, vocab, lexicon, dc);
      std::vector<TokenSentence> candidates;
      candidates.reserve(results.size());
      int fallbacks = 0;
      for (const auto& r : results) {
        candidates.push_back(r.tokens);
        fallbacks += r.filtered_fallback ? 1 : 0;
      }
      MetricsReport report = evaluate_generated(candidates, references, vocab);
      double rate = results.empty() ? 0.0 : static_cast<double>(fallbacks) / results.size();
      out << fmt_double(beta) << "," << beam << "," << fmt_double(report.bleu4) << ","
          << fmt_double(report.rouge_l) << "," << fmt_double(report.cider_d) << ","
          << fmt_double(report.diversity) << "," << fmt_double(report.vocab_usage) << ","
          << fmt_double(rate) << "\n";
      std::cout << "beta " << beta << " beam " << beam << " done\n";
    }
  }
  if (!out) throw std::runtime_error("cannot write " + cfg.out);
}

void run_filter_check(const RunConfig& cfg) {
  require_path(cfg.input, "input", "filter-check");
  std::ifstream in(cfg.input);
  if (!in) throw std::runtime_error("cannot read sentences: " + cfg.input);
  FeedbackType type = feedback_type_from_name(cfg.feedback_type);
  Lexicon lexicon =
      cfg.vocab.empty() ? synth_lexicon() : lexicon_from_vocab(Vocabulary::load(cfg.vocab));

  std::ostringstream rows;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    bool blank = line.find_first_not_of(" \t\r") == std::string::npos;
    if (blank) continue;
    std::vector<std::string> tokens;
    try {
      tokens = preprocess_sentence(line);
    } catch (const std::exception&) {
      throw std::runtime_error("no tokens survive preprocessing at " + cfg.input + " line " +
                               std::to_string(lineno));
    }
    FilterVerdict verdict = validate_sentence(tokens, type, lexicon);
    rows << join_tokens(tokens) << "\t" << feedback_type_name(type) << "\t"
         << (verdict.valid ? "valid" : "invalid") << "\t" << filter_rule_name(verdict.rule)
         << "\n";
  }
  if (cfg.out.empty()) {
    std::cout << rows.str();
  } else {
    std::ofstream out = open_output(cfg.out);
    out << rows.str();
    if (!out) throw std::runtime_error("cannot write " + cfg.out);
  }
}

std::string find_config_argument(int argc, const char* const* argv) {
  for (int i = 1; i < argc; ++i) {
    std::string arg = argv[i];
    if (arg == "--config") {
      if (i + 1 >= argc) throw std::runtime_error("--config needs a path");
      return argv[i + 1];
    }
    if (arg.rfind("--config=", 0) == 0) return arg.substr(9);
  }
  return "";
}

}  // namespace

int run_cli(int argc, const char* const* argv) {
  RunConfig cfg;
  CLI::App app{"fashion feedback captioning lab"};
  app.require_subcommand(0, 1);

  Schema schema;
  app.add_option("--config", cfg.config_path,
                 "flat key=value config file; flags override its values");
  app.add_flag("--print-config", cfg.print_config,
               "print the fully resolved configuration and exit");
  schema.add(app, "seed", cfg.seed, "top-level seed; every subsystem derives from it");
  schema.add(app, "threads", cfg.threads, "worker threads for decoding and sweeps");

  schema.add(app, "out", cfg.out, "output file, or directory for gen-data");
  schema.add(app, "corpus", cfg.corpus, "training corpus JSONL");
  schema.add(app, "eval-corpus", cfg.eval_corpus, "evaluation corpus JSONL");
  schema.add(app, "vocab", cfg.vocab, "vocabulary JSON file");
  schema.add(app, "checkpoint", cfg.checkpoint, "captioner checkpoint");
  schema.add(app, "lm-checkpoint", cfg.lm_checkpoint, "language-model checkpoint");
  schema.add(app, "candidates", cfg.candidates, "decoded-sentence JSONL to evaluate");
  schema.add(app, "input", cfg.input, "sentence file for filter-check, one per line");
  schema.add(app, "transfer-encoder-from", cfg.transfer_encoder_from,
             "checkpoint whose encoder projection warm-starts training");
  schema.add(app, "epoch-log", cfg.epoch_log, "write the per-epoch training log CSV here");

  schema.add(app, "grid-h", cfg.grid_h, "synthetic grid height");
  schema.add(app, "grid-w", cfg.grid_w, "synthetic grid width");
  schema.add(app, "grid-d", cfg.grid_d, "synthetic grid feature depth");
  schema.add(app, "train-images", cfg.train_images, "synthetic training images");
  schema.add(app, "eval-images", cfg.eval_images, "synthetic evaluation images");
  schema.add(app, "sentences-per-image", cfg.sentences_per_image,
             "sentences generated per training image");
  schema.add(app, "refs-per-eval-image", cfg.refs_per_eval_image,
             "reference sentences per evaluation image");
  schema.add(app, "generic-rate", cfg.generic_rate,
             "fraction of attribute-free stock sentences");
  schema.add(app, "feedback-type", cfg.feedback_type,
             "good or tip; gen-data and filter-check only, decode reads it off the corpus");

  schema.add(app, "embed", cfg.embed, "word embedding width");
  schema.add(app, "hidden", cfg.hidden, "recurrent state width");
  schema.add(app, "attn", cfg.attn, "attention projection width");
  schema.add(app, "feat", cfg.feat, "projected image-feature width");

  schema.add(app, "min-count", cfg.min_count,
             "keep vocabulary tokens seen strictly more often than this");

  schema.add(app, "model", cfg.model, "captioner to train: topdown or fc");
  schema.add(app, "epochs", cfg.epochs, "training epochs");
  schema.add(app, "learning-rate", cfg.learning_rate, "optimizer step size");
  schema.add(app, "clip-norm", cfg.clip_norm, "global gradient-norm clip; 0 disables");
  schema.add(app, "batch-images", cfg.batch_images, "images per batch");
  schema.add(app, "batch-sentences", cfg.batch_sentences, "sentences sampled per batch image");
  schema.add(app, "dropout", cfg.dropout, "dropout rate on embeddings and pre-output state");
  schema.add(app, "freeze-epochs", cfg.freeze_epochs,
             "epochs with the encoder projection frozen");
  schema.add(app, "eval-every", cfg.eval_every, "evaluate every this many epochs");
  schema.add(app, "eval-beam", cfg.eval_beam, "beam width for in-training evaluation");
  schema.add(app, "eval-max-length", cfg.eval_max_length,
             "generation step cap for in-training evaluation");

  schema.add(app, "beam", cfg.beam, "beam width for decode");
  schema.add(app, "beta", cfg.beta, "anti-prior weight");
  schema.add(app, "beta-zero-after-step", cfg.beta_zero_after_step,
             "last step the anti-prior applies to; -1 picks 11 for good, 16 for tip");
  schema.add(app, "max-length", cfg.max_length, "generation step cap, end token included");
  schema.add_flag(app, "filter", cfg.filter, "apply the repetition filter to decoded pools");

  schema.add_flag(app, "fs", cfg.fs,
                  "evaluate only: also report the leave-one-out specialist baseline");
  schema.add(app, "betas", cfg.betas, "sweep: comma-separated anti-prior weights");
  schema.add(app, "beams", cfg.beams, "sweep: comma-separated beam widths");

  struct Sub {
    const char* name;
    const char* help;
    void (*run)(const RunConfig&);
    CLI::App* app = nullptr;
  };
  Sub subs[] = {
      {"gen-data", "generate the synthetic corpus", run_gen_data},
      {"build-vocab", "build the vocabulary from a corpus", run_build_vocab},
      {"train", "train a captioner", run_train},
      {"train-lm", "train the sentence prior", run_train_lm},
      {"decode", "decode an evaluation corpus to JSONL", run_decode},
      {"evaluate", "score decoded sentences against references", run_evaluate},
      {"sweep", "decode and score a beta/beam grid to CSV", run_sweep},
      {"filter-check", "classify sentences with the repetition filter", run_filter_check},
  };
  for (auto& sub : subs) {
    sub.app = app.add_subcommand(sub.name, sub.help);
    sub.app->fallthrough();
  }

  try {
    std::string config_file = find_config_argument(argc, argv);
    if (!config_file.empty()) schema.apply_file(config_file);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  }

  if (cfg.threads < 1) {
    std::cerr << "error: threads must be positive\n";
    return 1;
  }
#ifdef _OPENMP
  omp_set_num_threads(cfg.threads);
#endif

  if (cfg.print_config) {
    try {
      cfg.beta_zero_after_step = effective_beta_cutoff(
          cfg.beta_zero_after_step, feedback_type_from_name(cfg.feedback_type));
    } catch (const std::exception& e) {
      std::cerr << "error: " << e.what() << "\n";
      return 1;
    }
    schema.print_resolved(std::cout);
    return 0;
  }

  for (const auto& sub : subs) {
    if (!sub.app->parsed()) continue;
    try {
      sub.run(cfg);
    } catch (const std::exception& e) {
      std::cerr << "error: " << e.what() << "\n";
      return 1;
    }
    return 0;
  }
  std::cerr << "error: no subcommand given (see --help)\n";
  return 1;
}

}  // namespace fashionfb
