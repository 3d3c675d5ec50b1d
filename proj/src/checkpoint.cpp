#include "fashionfb/checkpoint.hpp"

#include <cstring>
#include <fstream>
#include <stdexcept>

#include <json.hpp>

namespace fashionfb {

using nlohmann::json;

namespace {

constexpr std::uint32_t kVersion = 1;

void put_u32(std::string& buf, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) buf.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

void put_f64(std::string& buf, double v) {
  std::uint64_t bits;
  std::memcpy(&bits, &v, 8);
  for (int i = 0; i < 8; ++i) buf.push_back(static_cast<char>((bits >> (8 * i)) & 0xff));
}

std::uint32_t get_u32(const unsigned char* p) {
  std::uint32_t v = 0;
  for (int i = 3; i >= 0; --i) v = (v << 8) | p[i];
  return v;
}

double get_f64(const unsigned char* p) {
  std::uint64_t bits = 0;
  for (int i = 7; i >= 0; --i) bits = (bits << 8) | p[i];
  double v;
  std::memcpy(&v, &bits, 8);
  return v;
}

json meta_to_json(const CheckpointMeta& meta,
                  const std::vector<std::pair<std::string, Tensor*>>& tensors) {
  json header;
  header["model_kind"] = meta.model_kind;
  header["vocab_hash"] = meta.vocab_hash;
  header["epoch"] = meta.epoch;
  header["best_score"] = meta.best_score;
  header["config"] = meta.config;
  json shapes = json::array();
  for (const auto& [name, t] : tensors) {
    json entry;
    entry["name"] = name;
    entry["rows"] = t->rows;
    entry["cols"] = t->cols;
    shapes.push_back(entry);
  }
  header["tensors"] = shapes;
  return header;
}

}  // namespace

void save_checkpoint(const std::string& path, const CheckpointMeta& meta,
                     const std::vector<std::pair<std::string, Tensor*>>& tensors) {
  const std::string header = meta_to_json(meta, tensors).dump();
  std::string buf;
  buf += "MMIC";
  put_u32(buf, kVersion);
  put_u32(buf, static_cast<std::uint32_t>(header.size()));
  buf += header;
  for (const auto& [name, t] : tensors)
    for (double v : t->data) put_f64(buf, v);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write checkpoint: " + path);
  out.write(buf.data(), static_cast<std::streamsize>(buf.size()));
}

namespace {

json parse_header(const std::string& path, std::string& buf, std::size_t& data_offset) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot read checkpoint: " + path);
  buf.assign((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  if (buf.size() < 12 || buf.compare(0, 4, "MMIC") != 0)
    throw std::runtime_error("bad checkpoint header: " + path);
  const auto* p = reinterpret_cast<const unsigned char*>(buf.data());
  const std::uint32_t version = get_u32(p + 4);
  if (version != kVersion)
    throw std::runtime_error("unsupported checkpoint version " + std::to_string(version) +
                             ": " + path);
  const std::uint32_t header_len = get_u32(p + 8);
  if (buf.size() < 12 + static_cast<std::size_t>(header_len))
    throw std::runtime_error("truncated checkpoint header: " + path);
  data_offset = 12 + header_len;
  return json::parse(buf.substr(12, header_len));
}

CheckpointMeta meta_from_json(const json& header) {
  CheckpointMeta meta;
  meta.model_kind = header.at("model_kind").get<std::string>();
  meta.vocab_hash = header.at("vocab_hash").get<std::uint64_t>();
  meta.epoch = header.at("epoch").get<int>();
  meta.best_score = header.at("best_score").get<double>();
  meta.config = header.at("config").get<std::map<std::string, std::string>>();
  return meta;
}

}  // namespace

CheckpointMeta load_checkpoint(const std::string& path, std::uint64_t expect_vocab_hash,
                               const std::vector<std::pair<std::string, Tensor*>>& tensors) {
  std::string buf;
  std::size_t offset = 0;
  const json header = parse_header(path, buf, offset);
  CheckpointMeta meta = meta_from_json(header);
  if (meta.vocab_hash != expect_vocab_hash)
    throw std::runtime_error("vocabulary hash mismatch loading " + path);

  const json& shapes = header.at("tensors");
  if (shapes.size() != tensors.size())
    throw std::runtime_error("checkpoint tensor count mismatch: " + path);
  const auto* p = reinterpret_cast<const unsigned char*>(buf.data());
  for (std::size_t i = 0; i < tensors.size(); ++i) {
    const auto& [name, t] = tensors[i];
    const json& entry = shapes[i];
    if (entry.at("name").get<std::string>() != name ||
        entry.at("rows").get<int>() != t->rows || entry.at("cols").get<int>() != t->cols)
      throw std::runtime_error("checkpoint tensor mismatch at \"" + name + "\": " + path);
    const std::size_t bytes = t->size() * 8;
    if (offset + bytes > buf.size())
      throw std::runtime_error("truncated checkpoint data: " + path);
    for (std::size_t j = 0; j < t->size(); ++j) t->data[j] = get_f64(p + offset + j * 8);
    offset += bytes;
  }
  if (offset != buf.size())
    throw std::runtime_error("trailing bytes in checkpoint: " + path);
  return meta;
}

CheckpointMeta read_checkpoint_meta(const std::string& path) {
  std::string buf;
  std::size_t offset = 0;
  return meta_from_json(parse_header(path, buf, offset));
}

}  // namespace fashionfb
