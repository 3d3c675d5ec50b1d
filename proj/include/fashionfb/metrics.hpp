#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "fashionfb/vocab.hpp"

namespace fashionfb {

using TokenSentence = std::vector<std::string>;
using ReferenceSet = std::vector<TokenSentence>;

struct MetricsReport {
  double bleu4 = 0.0;
  double rouge_l = 0.0;
  double cider_d = 0.0;
  double diversity = 0.0;
  double vocab_usage = 0.0;
};

// Candidates and references run parallel by image: candidates[i] is scored
// against references[i]. All scorers throw on an empty candidate list or a
// candidates/references size mismatch.

// Corpus-level BLEU with uniform 1..4-gram weights, per-image clipping, and
// a brevity penalty against the closest reference length (ties go to the
// shorter reference). Zero n-gram precisions are replaced by 1e-9.
double bleu4(const std::vector<TokenSentence>& candidates,
             const std::vector<ReferenceSet>& references);

// Longest-common-subsequence F-measure (beta = 1.2, recall-weighted), max
// over each image's references, mean over images.
double rouge_l(const std::vector<TokenSentence>& candidates,
               const std::vector<ReferenceSet>& references);

// Tf-idf-weighted cosine over 1..4-grams with a gaussian length penalty
// (sigma = 6) and the x10 scale, idf taken from the given reference sets.
// Needs at least two images for the idf to be meaningful.
double cider_d(const std::vector<TokenSentence>& candidates,
               const std::vector<ReferenceSet>& references);

// Distinct sentences / images.
double diversity(const std::vector<TokenSentence>& generated);

// Non-special vocabulary words used at least once / non-special vocabulary
// size.
double vocab_usage(const std::vector<TokenSentence>& generated, const Vocabulary& vocab);

MetricsReport evaluate_generated(const std::vector<TokenSentence>& candidates,
                                 const std::vector<ReferenceSet>& references,
                                 const Vocabulary& vocab);

// Leave-one-out human baseline: per image, draw one reference uniformly as
// the candidate and score it against the remaining references. Every image
// needs at least two references.
MetricsReport fs_baseline(const std::vector<ReferenceSet>& references, const Vocabulary& vocab,
                          std::uint64_t seed);

}  // namespace fashionfb
