#include "fashionfb/corpus.hpp"

#include <algorithm>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <stdexcept>

#include <json.hpp>

#include "fashionfb/rng.hpp"

namespace fashionfb {

namespace fs = std::filesystem;
using nlohmann::json;

const char* feedback_type_name(FeedbackType t) {
  return t == FeedbackType::Good ? "GOOD" : "TIP";
}

FeedbackType feedback_type_from_name(const std::string& name) {
  if (name == "GOOD" || name == "good") return FeedbackType::Good;
  if (name == "TIP" || name == "tip") return FeedbackType::Tip;
  throw std::runtime_error("unknown feedback type: " + name);
}

bool operator==(const FeatureGrid& a, const FeatureGrid& b) {
  return a.h == b.h && a.w == b.w && a.d == b.d && a.values == b.values;
}

bool operator==(const CorpusExample& a, const CorpusExample& b) {
  return a.image_id == b.image_id && a.type == b.type && a.sentences == b.sentences &&
         a.grid_index == b.grid_index;
}

bool operator==(const Corpus& a, const Corpus& b) {
  return a.examples == b.examples && a.grids == b.grids;
}

namespace {

void put_u32(std::string& buf, std::uint32_t v) {
  buf.push_back(static_cast<char>(v & 0xff));
  buf.push_back(static_cast<char>((v >> 8) & 0xff));
  buf.push_back(static_cast<char>((v >> 16) & 0xff));
  buf.push_back(static_cast<char>((v >> 24) & 0xff));
}

std::uint32_t get_u32(const unsigned char* p) {
  return static_cast<std::uint32_t>(p[0]) | (static_cast<std::uint32_t>(p[1]) << 8) |
         (static_cast<std::uint32_t>(p[2]) << 16) | (static_cast<std::uint32_t>(p[3]) << 24);
}

void put_f32(std::string& buf, float v) {
  std::uint32_t bits;
  std::memcpy(&bits, &v, 4);
  put_u32(buf, bits);
}

float get_f32(const unsigned char* p) {
  const std::uint32_t bits = get_u32(p);
  float v;
  std::memcpy(&v, &bits, 4);
  return v;
}

std::string join_tokens(const std::vector<std::string>& tokens) {
  std::string s;
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    if (i) s += ' ';
    s += tokens[i];
  }
  return s;
}

std::vector<std::string> split_tokens(const std::string& s) {
  std::vector<std::string> tokens;
  std::istringstream in(s);
  std::string t;
  while (in >> t) tokens.push_back(t);
  return tokens;
}

}  // namespace

void save_grids(const std::vector<FeatureGrid>& grids, const std::string& path) {
  int h = 0, w = 0, d = 0;
  if (!grids.empty()) {
    h = grids[0].h;
    w = grids[0].w;
    d = grids[0].d;
    for (const auto& g : grids)
      if (g.h != h || g.w != w || g.d != d)
        throw std::runtime_error("grid container requires uniform dimensions: " + path);
  }
  std::string buf;
  buf.reserve(20 + grids.size() * static_cast<std::size_t>(h) * w * d * 4);
  buf += "FGRD";
  put_u32(buf, static_cast<std::uint32_t>(grids.size()));
  put_u32(buf, static_cast<std::uint32_t>(h));
  put_u32(buf, static_cast<std::uint32_t>(w));
  put_u32(buf, static_cast<std::uint32_t>(d));
  for (const auto& g : grids)
    for (float v : g.values) put_f32(buf, v);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write grid file: " + path);
  out.write(buf.data(), static_cast<std::streamsize>(buf.size()));
}

std::vector<FeatureGrid> load_grids(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot read grid file: " + path);
  std::string buf((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  if (buf.size() < 20 || buf.compare(0, 4, "FGRD") != 0)
    throw std::runtime_error("bad grid file header: " + path);
  const auto* p = reinterpret_cast<const unsigned char*>(buf.data());
  const std::uint32_t count = get_u32(p + 4);
  const std::uint32_t h = get_u32(p + 8);
  const std::uint32_t w = get_u32(p + 12);
  const std::uint32_t d = get_u32(p + 16);
  const std::size_t expect = 20 + static_cast<std::size_t>(count) * h * w * d * 4;
  if (buf.size() != expect) {
    char msg[160];
    std::snprintf(msg, sizeof(msg), "grid file %s: expected %zu bytes, found %zu",
                  path.c_str(), expect, buf.size());
    throw std::runtime_error(msg);
  }
  std::vector<FeatureGrid> grids;
  grids.reserve(count);
  std::size_t off = 20;
  for (std::uint32_t i = 0; i < count; ++i) {
    FeatureGrid g(static_cast<int>(h), static_cast<int>(w), static_cast<int>(d));
    for (float& v : g.values) {
      v = get_f32(p + off);
      off += 4;
    }
    grids.push_back(std::move(g));
  }
  return grids;
}

void save_corpus(const Corpus& corpus, const std::string& jsonl_path,
                 const std::string& grid_filename) {
  const fs::path dir = fs::path(jsonl_path).parent_path();
  save_grids(corpus.grids, (dir / grid_filename).string());
  std::ofstream out(jsonl_path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write corpus file: " + jsonl_path);
  for (const auto& ex : corpus.examples) {
    json rec;
    rec["image_id"] = ex.image_id;
    rec["feedback_type"] = feedback_type_name(ex.type);
    json sentences = json::array();
    for (const auto& s : ex.sentences) sentences.push_back(join_tokens(s));
    rec["sentences"] = sentences;
    rec["grid_file"] = grid_filename;
    rec["grid_offset"] = ex.grid_index;
    out << rec.dump() << "\n";
  }
}

Corpus load_corpus(const std::string& jsonl_path) {
  std::ifstream in(jsonl_path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot read corpus file: " + jsonl_path);
  const fs::path dir = fs::path(jsonl_path).parent_path();

  Corpus corpus;
  std::map<std::string, int> grid_file_base;  // grid file -> first index in corpus.grids
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    json rec;
    try {
      rec = json::parse(line);
      CorpusExample ex;
      ex.image_id = rec.at("image_id").get<std::string>();
      ex.type = feedback_type_from_name(rec.at("feedback_type").get<std::string>());
      for (const auto& s : rec.at("sentences"))
        ex.sentences.push_back(split_tokens(s.get<std::string>()));
      const std::string grid_file = rec.at("grid_file").get<std::string>();
      const int offset = rec.at("grid_offset").get<int>();
      auto it = grid_file_base.find(grid_file);
      if (it == grid_file_base.end()) {
        const int base = static_cast<int>(corpus.grids.size());
        auto grids = load_grids((dir / grid_file).string());
        for (auto& g : grids) corpus.grids.push_back(std::move(g));
        it = grid_file_base.emplace(grid_file, base).first;
      }
      ex.grid_index = it->second + offset;
      if (ex.grid_index < 0 || ex.grid_index >= static_cast<int>(corpus.grids.size()))
        throw std::runtime_error("grid_offset out of range");
      corpus.examples.push_back(std::move(ex));
    } catch (const std::exception& e) {
      throw std::runtime_error(jsonl_path + ":" + std::to_string(lineno) +
                               ": malformed corpus record: " + e.what());
    }
  }
  return corpus;
}

// ---------------------------------------------------------------------------
// Synthetic generator

namespace {

const std::vector<std::string> kGarments = {"jacket", "dress",  "skirt", "sweater", "blouse",
                                            "coat",   "shirt",  "scarf", "jeans",   "blazer"};
const std::vector<std::string> kColors = {"black", "white", "red",   "blue",
                                          "green", "navy",  "beige", "gray"};
const std::vector<std::string> kPatterns = {"striped", "floral",  "plaid",
                                            "dotted",  "checked", "woven"};

// Template tokens; {g}/{c}/{p} are the image's attributes, {c2}/{p2} are
// freshly drawn alternatives distinct from the image's own.
using Template = std::vector<std::string>;

const std::vector<Template> kGoodSpecific = {
    {"the", "{c}", "{g}", "looks", "great", "on", "you"},
    {"your", "{p}", "{g}", "fits", "you", "very", "well"},
    {"i", "love", "the", "{c}", "{p}", "{g}"},
    {"that", "{c}", "{g}", "suits", "your", "style", "perfectly"},
    {"the", "{p}", "{g}", "gives", "you", "a", "stylish", "look"},
    {"your", "{c}", "{g}", "pairs", "well", "with", "the", "{p}", "top"},
    {"lovely", "{g}", ",", "the", "{c}", "tone", "flatters", "you"},
    {"the", "{c}", "shade", "of", "your", "{g}", "is", "beautiful"},
    {"your", "{g}", "looks", "elegant", "with", "that", "{p}", "print"},
    {"the", "{c}", "{g}", "matches", "your", "shoes", "nicely"},
};

const std::vector<Template> kGoodGeneric = {
    {"your", "outfit", "fits", "you", "well"},
    {"this", "look", "suits", "you"},
    {"very", "nice", "on", "you"},
    {"that", "is", "a", "great", "look"},
    {"nice", "outfit", "for", "you"},
    {"this", "outfit", "looks", "good"},
};

const std::vector<Template> kTipSpecific = {
    {"swap", "your", "{c}", "{g}", "for", "a", "{c2}", "one"},
    {"try", "a", "{c2}", "{g}", "instead", "of", "the", "{c}", "one"},
    {"replace", "the", "{p}", "{g}", "with", "a", "{p2}", "piece"},
    {"add", "a", "{c2}", "belt", "to", "your", "{g}"},
    {"the", "{g}", "would", "look", "better", "in", "{c2}"},
    {"try", "pairing", "your", "{g}", "with", "{c2}", "shoes"},
    {"a", "{p2}", "{g}", "would", "flatter", "you", "more"},
    {"tuck", "the", "{g}", "in", ",", "it", "looks", "neater"},
    {"choose", "a", "{c2}", "tone", "for", "the", "{g}"},
    {"wear", "the", "{g}", "with", "a", "{c2}", "hat"},
};

const std::vector<Template> kTipGeneric = {
    {"try", "a", "different", "style"},
    {"change", "this", "outfit", "a", "bit"},
    {"this", "look", "needs", "work"},
    {"maybe", "try", "another", "outfit"},
    {"adjust", "the", "fit", "slightly"},
    {"this", "could", "look", "better"},
};

Lexicon build_synth_lexicon() {
  Lexicon lex;
  for (const auto& g : kGarments) lex[g] = Pos::Noun;
  for (const auto& c : kColors) lex[c] = Pos::Adj;
  for (const auto& p : kPatterns) lex[p] = Pos::Adj;
  const std::pair<const char*, Pos> fixed[] = {
      {"the", Pos::Det},      {"a", Pos::Det},        {"this", Pos::Det},
      {"that", Pos::Det},     {"another", Pos::Det},  {"you", Pos::Pron},
      {"your", Pos::Pron},    {"i", Pos::Pron},       {"it", Pos::Pron},
      {"looks", Pos::Verb},   {"fits", Pos::Verb},    {"suits", Pos::Verb},
      {"gives", Pos::Verb},   {"pairs", Pos::Verb},   {"flatters", Pos::Verb},
      {"matches", Pos::Verb}, {"love", Pos::Verb},    {"is", Pos::Verb},
      {"swap", Pos::Verb},    {"try", Pos::Verb},     {"replace", Pos::Verb},
      {"add", Pos::Verb},     {"would", Pos::Verb},   {"pairing", Pos::Verb},
      {"flatter", Pos::Verb}, {"tuck", Pos::Verb},    {"choose", Pos::Verb},
      {"wear", Pos::Verb},    {"change", Pos::Verb},  {"needs", Pos::Verb},
      {"adjust", Pos::Verb},  {"could", Pos::Verb},   {"look", Pos::Noun},
      {"style", Pos::Noun},   {"top", Pos::Noun},     {"tone", Pos::Noun},
      {"shade", Pos::Noun},   {"print", Pos::Noun},   {"shoes", Pos::Noun},
      {"outfit", Pos::Noun},  {"one", Pos::Noun},     {"piece", Pos::Noun},
      {"belt", Pos::Noun},    {"hat", Pos::Noun},     {"bit", Pos::Noun},
      {"work", Pos::Noun},    {"fit", Pos::Noun},     {"great", Pos::Adj},
      {"stylish", Pos::Adj},  {"lovely", Pos::Adj},   {"beautiful", Pos::Adj},
      {"elegant", Pos::Adj},  {"nice", Pos::Adj},     {"good", Pos::Adj},
      {"better", Pos::Adj},   {"neater", Pos::Adj},   {"different", Pos::Adj},
      {"on", Pos::Prep},      {"with", Pos::Prep},    {"of", Pos::Prep},
      {"for", Pos::Prep},     {"in", Pos::Prep},      {"to", Pos::Prep},
      {"very", Pos::Other},   {"well", Pos::Other},   {"perfectly", Pos::Other},
      {"nicely", Pos::Other}, {"more", Pos::Other},   {"instead", Pos::Other},
      {"maybe", Pos::Other},  {"slightly", Pos::Other}, {",", Pos::Other},
  };
  for (const auto& [token, pos] : fixed) lex[token] = pos;
  return lex;
}

struct ImageAttrs {
  int garment, color, pattern;
};

std::vector<std::string> realize(const Template& tpl, const ImageAttrs& attrs, DetRng& rng) {
  std::vector<std::string> out;
  out.reserve(tpl.size());
  for (const auto& tok : tpl) {
    if (tok == "{g}") {
      out.push_back(kGarments[attrs.garment]);
    } else if (tok == "{c}") {
      out.push_back(kColors[attrs.color]);
    } else if (tok == "{p}") {
      out.push_back(kPatterns[attrs.pattern]);
    } else if (tok == "{c2}") {
      int alt = static_cast<int>(rng.below(kColors.size() - 1));
      if (alt >= attrs.color) ++alt;
      out.push_back(kColors[alt]);
    } else if (tok == "{p2}") {
      int alt = static_cast<int>(rng.below(kPatterns.size() - 1));
      if (alt >= attrs.pattern) ++alt;
      out.push_back(kPatterns[alt]);
    } else {
      out.push_back(tok);
    }
  }
  if (out.size() > 20) throw std::runtime_error("template exceeds the 20-token sentence cap");
  return out;
}

// Attribute bands: each slot owns two grid rows; the last row carries noise
// only. Equal band sizes make the mean-pooled view of colliding attribute
// indices genuinely ambiguous, which spatial attention resolves.
FeatureGrid make_grid(const SynthConfig& cfg, const ImageAttrs& attrs, DetRng& rng) {
  FeatureGrid g(cfg.grid_h, cfg.grid_w, cfg.grid_d);
  for (float& v : g.values) v = static_cast<float>(rng.gauss(0.0, 0.1));
  const int band = 2;
  const auto plant = [&](int band_index, int channel) {
    const int r0 = band_index * band;
    for (int r = r0; r < r0 + band && r < cfg.grid_h; ++r)
      for (int c = 0; c < cfg.grid_w; ++c) g.at(r, c, channel % cfg.grid_d) += 2.0f;
  };
  plant(0, attrs.garment);
  plant(1, attrs.color);
  plant(2, attrs.pattern);
  return g;
}

Corpus make_split(const SynthConfig& cfg, const char* prefix, int images, int n_sentences,
                  DetRng& rng) {
  Corpus corpus;
  corpus.grids.reserve(images);
  corpus.examples.reserve(images);
  for (int i = 0; i < images; ++i) {
    char id[32];
    std::snprintf(id, sizeof(id), "%s_%06d", prefix, i);
    const ImageAttrs attrs{static_cast<int>(rng.below(kGarments.size())),
                           static_cast<int>(rng.below(kColors.size())),
                           static_cast<int>(rng.below(kPatterns.size()))};
    corpus.grids.push_back(make_grid(cfg, attrs, rng));

    CorpusExample ex;
    ex.image_id = id;
    ex.type = cfg.type;
    ex.grid_index = i;
    const bool good = cfg.type == FeedbackType::Good;
    const auto& specific = good ? kGoodSpecific : kTipSpecific;
    const auto& generic = good ? kGoodGeneric : kTipGeneric;
    for (int s = 0; s < n_sentences; ++s) {
      const bool use_generic = rng.uniform01() < cfg.generic_rate;
      const auto& pool = use_generic ? generic : specific;
      const auto& tpl = pool[rng.below(pool.size())];
      ex.sentences.push_back(realize(tpl, attrs, rng));
    }
    corpus.examples.push_back(std::move(ex));
  }
  return corpus;
}

}  // namespace

const Lexicon& synth_lexicon() {
  static const Lexicon lex = build_synth_lexicon();
  return lex;
}

const std::vector<std::string>& synth_garments() { return kGarments; }
const std::vector<std::string>& synth_colors() { return kColors; }
const std::vector<std::string>& synth_patterns() { return kPatterns; }

SynthOutput generate_synthetic_corpus(const SynthConfig& config, std::uint64_t seed) {
  const std::size_t max_inventory =
      std::max({kGarments.size(), kColors.size(), kPatterns.size()});
  if (config.grid_d < static_cast<int>(max_inventory))
    throw std::runtime_error("grid depth smaller than the attribute inventory");
  if (config.grid_h < 6)
    throw std::runtime_error("grid height below the three 2-row attribute bands");
  SynthOutput out;
  DetRng train_rng(split_seed(seed, 1));
  out.train = make_split(config, "train", config.train_images, config.sentences_per_image,
                         train_rng);
  DetRng eval_rng(split_seed(seed, 2));
  out.eval = make_split(config, "eval", config.eval_images, config.refs_per_eval_image,
                        eval_rng);
  return out;
}

}  // namespace fashionfb
