#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "fashionfb/vocab.hpp"

namespace fashionfb {

enum class FeedbackType : std::uint8_t { Good, Tip };

const char* feedback_type_name(FeedbackType t);
FeedbackType feedback_type_from_name(const std::string& name);

// Spatial image features, row-major [h][w][d]. Stored as f32 to match the
// on-disk format; converted to doubles at the encoder boundary.
struct FeatureGrid {
  int h = 0, w = 0, d = 0;
  std::vector<float> values;

  FeatureGrid() = default;
  FeatureGrid(int h_, int w_, int d_)
      : h(h_), w(w_), d(d_),
        values(static_cast<std::size_t>(h_) * w_ * d_, 0.0f) {}

  int cells() const { return h * w; }
  float& at(int r, int c, int ch) {
    return values[(static_cast<std::size_t>(r) * w + c) * d + ch];
  }
  float at(int r, int c, int ch) const {
    return values[(static_cast<std::size_t>(r) * w + c) * d + ch];
  }
};

struct CorpusExample {
  std::string image_id;
  FeedbackType type = FeedbackType::Good;
  std::vector<std::vector<std::string>> sentences;  // preprocessed token lists
  int grid_index = -1;
};

struct Corpus {
  std::vector<CorpusExample> examples;
  std::vector<FeatureGrid> grids;
};

bool operator==(const FeatureGrid& a, const FeatureGrid& b);
bool operator==(const CorpusExample& a, const CorpusExample& b);
bool operator==(const Corpus& a, const Corpus& b);

// Grid container file: magic "FGRD", u32 count/h/w/d little-endian, then
// count * h * w * d little-endian f32 values.
void save_grids(const std::vector<FeatureGrid>& grids, const std::string& path);
std::vector<FeatureGrid> load_grids(const std::string& path);

// Corpus file: JSON-lines, one record per example with image_id,
// feedback_type, sentences (space-joined tokens), grid_file and grid_offset
// (record index within that grid file). grid_file is stored relative to the
// JSONL's directory.
void save_corpus(const Corpus& corpus, const std::string& jsonl_path,
                 const std::string& grid_filename);
Corpus load_corpus(const std::string& jsonl_path);

struct SynthConfig {
  int grid_h = 7;
  int grid_w = 14;
  int grid_d = 32;
  int train_images = 2000;
  int eval_images = 100;
  int sentences_per_image = 3;
  int refs_per_eval_image = 15;
  double generic_rate = 0.3;
  FeedbackType type = FeedbackType::Good;
};

struct SynthOutput {
  Corpus train;
  Corpus eval;
};

// Attribute inventory and POS assignments used by the synthetic generator.
// The lexicon covers every token any template can emit.
const Lexicon& synth_lexicon();
const std::vector<std::string>& synth_garments();
const std::vector<std::string>& synth_colors();
const std::vector<std::string>& synth_patterns();

// Deterministic synthetic corpus. Each image draws one garment, color and
// pattern; each attribute activates its own channel inside its own spatial
// band of the grid, so spatially-resolved readers can separate attributes
// that mean-pooled readers confuse. Sentences are template realizations;
// a generic_rate fraction are attribute-free stock phrases.
SynthOutput generate_synthetic_corpus(const SynthConfig& config, std::uint64_t seed);

}  // namespace fashionfb
