#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "fashionfb/tensor.hpp"

namespace fashionfb {

// Checkpoint container: magic "MMIC", u32 format version, u32 JSON header
// length, the header, then each tensor's values as little-endian f64 in
// header order. The header records tensor names/shapes, a config snapshot,
// the vocabulary hash, the epoch and the best validation score.
struct CheckpointMeta {
  std::uint64_t vocab_hash = 0;
  int epoch = 0;
  double best_score = 0.0;
  std::string model_kind;                       // "topdown" | "fc" | "lm"
  std::map<std::string, std::string> config;    // resolved config snapshot
};

void save_checkpoint(const std::string& path, const CheckpointMeta& meta,
                     const std::vector<std::pair<std::string, Tensor*>>& tensors);

// Loads into pre-shaped tensors; name order, shapes and the vocabulary hash
// must all match.
CheckpointMeta load_checkpoint(const std::string& path, std::uint64_t expect_vocab_hash,
                               const std::vector<std::pair<std::string, Tensor*>>& tensors);

// Header-only peek (kind, meta) without loading tensor data.
CheckpointMeta read_checkpoint_meta(const std::string& path);

}  // namespace fashionfb
