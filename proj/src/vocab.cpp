#include "fashionfb/vocab.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <stdexcept>

#include <json.hpp>

namespace fashionfb {

using nlohmann::json;

const char* pos_name(Pos p) {
  switch (p) {
    case Pos::Noun: return "NOUN";
    case Pos::Adj: return "ADJ";
    case Pos::Det: return "DET";
    case Pos::Verb: return "VERB";
    case Pos::Prep: return "PREP";
    case Pos::Pron: return "PRON";
    case Pos::Conj: return "CONJ";
    case Pos::Num: return "NUM";
    case Pos::Other: return "OTHER";
  }
  return "OTHER";
}

Pos pos_from_name(const std::string& name) {
  if (name == "NOUN") return Pos::Noun;
  if (name == "ADJ") return Pos::Adj;
  if (name == "DET") return Pos::Det;
  if (name == "VERB") return Pos::Verb;
  if (name == "PREP") return Pos::Prep;
  if (name == "PRON") return Pos::Pron;
  if (name == "CONJ") return Pos::Conj;
  if (name == "NUM") return Pos::Num;
  if (name == "OTHER") return Pos::Other;
  throw std::runtime_error("unknown POS tag: " + name);
}

std::vector<std::string> preprocess_sentence(const std::string& raw) {
  std::string cleaned;
  cleaned.reserve(raw.size() + 8);
  for (unsigned char ch : raw) {
    if (ch == ',') {
      cleaned += " , ";
    } else if (std::isspace(ch)) {
      cleaned += ' ';
    } else if (std::ispunct(ch)) {
      // dropped, per the comma-only punctuation rule
    } else {
      cleaned += static_cast<char>(std::tolower(ch));
    }
  }
  std::vector<std::string> tokens;
  std::size_t i = 0;
  while (i < cleaned.size()) {
    while (i < cleaned.size() && cleaned[i] == ' ') ++i;
    std::size_t j = i;
    while (j < cleaned.size() && cleaned[j] != ' ') ++j;
    if (j > i) tokens.push_back(cleaned.substr(i, j - i));
    i = j;
  }
  if (tokens.empty()) throw std::runtime_error("sentence empty after preprocessing: \"" + raw + "\"");
  return tokens;
}

Vocabulary Vocabulary::build(const std::vector<std::vector<std::string>>& sentences,
                             const Lexicon& lexicon, int min_count_exclusive) {
  std::map<std::string, int> counts;
  for (const auto& s : sentences)
    for (const auto& t : s) ++counts[t];

  Vocabulary v;
  v.tokens_ = {kBegin, kEnd, kUnknown};
  v.pos_ = {Pos::Other, Pos::Other, Pos::Other};
  for (const auto& [token, count] : counts) {
    if (count <= min_count_exclusive) continue;
    auto it = lexicon.find(token);
    if (it == lexicon.end())
      throw std::runtime_error("lexicon missing POS for kept token: " + token);
    v.tokens_.push_back(token);
    v.pos_.push_back(it->second);
  }
  v.index();
  return v;
}

void Vocabulary::index() {
  ids_.clear();
  for (int i = 0; i < static_cast<int>(tokens_.size()); ++i) ids_[tokens_[i]] = i;
}

int Vocabulary::token_id(const std::string& token) const {
  auto it = ids_.find(token);
  return it == ids_.end() ? unknown_id() : it->second;
}

const std::string& Vocabulary::token(int id) const {
  if (id < 0 || id >= size()) throw std::runtime_error("token id out of range: " + std::to_string(id));
  return tokens_[id];
}

std::vector<int> Vocabulary::encode(const std::vector<std::string>& tokens) const {
  std::vector<int> ids;
  ids.reserve(tokens.size() + 2);
  ids.push_back(begin_id());
  for (const auto& t : tokens) ids.push_back(token_id(t));
  ids.push_back(end_id());
  return ids;
}

std::vector<std::string> Vocabulary::decode(const std::vector<int>& ids) const {
  std::vector<std::string> tokens;
  for (int id : ids) {
    if (id < 0 || id >= size())
      throw std::runtime_error("token id out of range: " + std::to_string(id));
    if (id == begin_id() || id == end_id()) continue;
    tokens.push_back(tokens_[id]);
  }
  return tokens;
}

std::uint64_t Vocabulary::hash() const {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  auto mix = [&h](unsigned char b) {
    h ^= b;
    h *= 0x100000001b3ULL;
  };
  for (const auto& t : tokens_) {
    for (unsigned char c : t) mix(c);
    mix(0);
  }
  return h;
}

void Vocabulary::save(const std::string& path) const {
  json specials;
  specials["begin"] = kBegin;
  specials["end"] = kEnd;
  specials["unknown"] = kUnknown;
  json pos;
  for (int i = 3; i < size(); ++i) pos[tokens_[i]] = pos_name(pos_[i]);
  json doc;
  doc["tokens"] = tokens_;
  doc["pos"] = pos;
  doc["specials"] = specials;
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write vocabulary: " + path);
  out << doc.dump(2) << "\n";
}

Vocabulary Vocabulary::load(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot read vocabulary: " + path);
  json doc = json::parse(in);
  Vocabulary v;
  v.tokens_ = doc.at("tokens").get<std::vector<std::string>>();
  if (v.tokens_.size() < 3 || v.tokens_[0] != kBegin || v.tokens_[1] != kEnd ||
      v.tokens_[2] != kUnknown)
    throw std::runtime_error("vocabulary file missing special tokens: " + path);
  v.pos_.assign(v.tokens_.size(), Pos::Other);
  const json& pos = doc.at("pos");
  for (std::size_t i = 3; i < v.tokens_.size(); ++i) {
    auto it = pos.find(v.tokens_[i]);
    if (it == pos.end())
      throw std::runtime_error("vocabulary file missing POS for token: " + v.tokens_[i]);
    v.pos_[i] = pos_from_name(it->get<std::string>());
  }
  v.index();
  return v;
}

}  // namespace fashionfb
