#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <unordered_map>
#include <vector>

namespace fashionfb {

enum class Pos : std::uint8_t { Noun, Adj, Det, Verb, Prep, Pron, Conj, Num, Other };

const char* pos_name(Pos p);
Pos pos_from_name(const std::string& name);

// token -> part-of-speech assignments; closed over the corpus vocabulary.
using Lexicon = std::map<std::string, Pos>;

// Lowercases, strips punctuation except commas (kept as standalone tokens),
// splits on whitespace. Throws if nothing survives.
std::vector<std::string> preprocess_sentence(const std::string& raw);

class Vocabulary {
 public:
  static constexpr const char* kBegin = "<s>";
  static constexpr const char* kEnd = "</s>";
  static constexpr const char* kUnknown = "<unk>";

  // Keeps tokens with count > min_count_exclusive, adds the three specials,
  // attaches POS tags from the lexicon. Kept tokens without a lexicon entry
  // are an error. Ids: specials 0..2, then kept tokens in lexicographic order.
  static Vocabulary build(const std::vector<std::vector<std::string>>& sentences,
                          const Lexicon& lexicon, int min_count_exclusive = 5);

  int size() const { return static_cast<int>(tokens_.size()); }
  int begin_id() const { return 0; }
  int end_id() const { return 1; }
  int unknown_id() const { return 2; }
  bool is_special(int id) const { return id < 3; }

  // Unknown tokens map to the unknown id; never fails.
  int token_id(const std::string& token) const;
  const std::string& token(int id) const;
  Pos pos(int id) const { return pos_[id]; }

  // Frames with begin/end ids.
  std::vector<int> encode(const std::vector<std::string>& tokens) const;
  // Strips framing; throws on out-of-range ids.
  std::vector<std::string> decode(const std::vector<int>& ids) const;

  // FNV-1a over the id-ordered token list; checkpoints verify this at load.
  std::uint64_t hash() const;

  void save(const std::string& path) const;
  static Vocabulary load(const std::string& path);

 private:
  std::vector<std::string> tokens_;
  std::vector<Pos> pos_;
  std::unordered_map<std::string, int> ids_;

  void index();
};

}  // namespace fashionfb
