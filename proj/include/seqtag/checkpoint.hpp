#pragma once

#include <algorithm>
#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "seqtag/model.hpp"

namespace seqtag {

// Container layout:
//   8 bytes   magic "STAGCKPT"
//   4 bytes   format version, little-endian u32
//   8 bytes   metadata length, little-endian u64
//   N bytes   metadata JSON (config, vocab, tensor manifest, epoch, metric)
//   payload   per manifest entry, the tensor values as little-endian f64
struct CheckpointError : std::runtime_error {
  explicit CheckpointError(const std::string& what) : std::runtime_error(what) {}
};

namespace detail {

constexpr char kMagic[8] = {'S', 'T', 'A', 'G', 'C', 'K', 'P', 'T'};
constexpr std::uint32_t kVersion = 1;

inline void put_u32(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

inline void put_u64(std::string& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

inline void put_f64(std::string& out, double d) {
  put_u64(out, std::bit_cast<std::uint64_t>(d));
}

struct ByteReader {
  const std::string& buf;
  std::size_t pos = 0;

  void need(std::size_t n, const char* what) {
    if (pos + n > buf.size())
      throw CheckpointError(std::string("checkpoint truncated reading ") + what);
  }
  std::uint32_t u32(const char* what) {
    need(4, what);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i)
      v |= static_cast<std::uint32_t>(static_cast<unsigned char>(buf[pos++])) << (8 * i);
    return v;
  }
  std::uint64_t u64(const char* what) {
    need(8, what);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i)
      v |= static_cast<std::uint64_t>(static_cast<unsigned char>(buf[pos++])) << (8 * i);
    return v;
  }
  double f64(const char* what) { return std::bit_cast<double>(u64(what)); }
};

inline nlohmann::json vocab_json(const Vocab& v) {
  std::vector<std::pair<int, std::size_t>> chars;
  for (const auto& [c, id] : v.char_ids)
    chars.emplace_back(static_cast<int>(static_cast<unsigned char>(c)), id);
  std::sort(chars.begin(), chars.end());
  nlohmann::json jchars = nlohmann::json::array();
  for (const auto& [code, id] : chars) jchars.push_back({code, id});
  return nlohmann::json{{"words", v.words}, {"tags", v.tags}, {"chars", jchars}};
}

inline Vocab vocab_from_json(const nlohmann::json& j) {
  Vocab v;
  v.words = j.at("words").get<std::vector<std::string>>();
  v.tags = j.at("tags").get<std::vector<std::string>>();
  for (std::size_t i = 0; i < v.words.size(); ++i) v.word_ids[v.words[i]] = i;
  for (std::size_t i = 0; i < v.tags.size(); ++i) v.tag_ids[v.tags[i]] = i;
  for (const auto& pair : j.at("chars")) {
    const int code = pair.at(0).get<int>();
    v.char_ids[static_cast<char>(static_cast<unsigned char>(code))] =
        pair.at(1).get<std::size_t>();
  }
  if (v.words.size() < 2 || v.words[0] != "<pad>" || v.words[1] != "<unk>")
    throw CheckpointError("checkpoint vocab missing reserved word slots");
  return v;
}

}  // namespace detail

struct CheckpointMeta {
  double best_metric = 0.0;
  std::size_t epoch = 0;
};

inline std::string serialize_checkpoint(ModelParams& m, const CheckpointMeta& meta) {
  nlohmann::json manifest = nlohmann::json::array();
  auto named = m.named_tensors();
  for (const auto& [name, t] : named)
    manifest.push_back({{"name", name}, {"shape", t->shape}});
  nlohmann::json j{{"config", config_json(m.config)},
                   {"vocab", detail::vocab_json(m.vocab)},
                   {"best_metric", meta.best_metric},
                   {"epoch", meta.epoch},
                   {"tensors", manifest}};
  const std::string meta_text = j.dump();

  std::string out;
  out.append(detail::kMagic, sizeof(detail::kMagic));
  detail::put_u32(out, detail::kVersion);
  detail::put_u64(out, meta_text.size());
  out += meta_text;
  for (const auto& [name, t] : named)
    for (double d : t->data) detail::put_f64(out, d);
  return out;
}

inline void save_checkpoint(const std::string& path, ModelParams& m,
                            const CheckpointMeta& meta) {
  const std::string bytes = serialize_checkpoint(m, meta);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw CheckpointError("cannot open checkpoint for writing: " + path);
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  out.flush();
  if (!out) throw CheckpointError("write failed for checkpoint: " + path);
}

struct LoadedCheckpoint {
  ModelParams model;
  CheckpointMeta meta;
};

// Parses into a fresh ModelParams; nothing is exposed until every byte checks
// out, so a bad file can never leave a half-loaded model behind.
inline LoadedCheckpoint deserialize_checkpoint(const std::string& bytes) {
  detail::ByteReader r{bytes};
  r.need(sizeof(detail::kMagic), "magic");
  if (std::memcmp(bytes.data(), detail::kMagic, sizeof(detail::kMagic)) != 0)
    throw CheckpointError("not a checkpoint file (bad magic)");
  r.pos = sizeof(detail::kMagic);
  const std::uint32_t version = r.u32("version");
  if (version != detail::kVersion)
    throw CheckpointError("unsupported checkpoint version " + std::to_string(version));
  const std::uint64_t meta_len = r.u64("metadata length");
  r.need(meta_len, "metadata");
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(bytes.begin() + static_cast<std::ptrdiff_t>(r.pos),
                              bytes.begin() + static_cast<std::ptrdiff_t>(r.pos + meta_len));
  } catch (const nlohmann::json::exception& e) {
    throw CheckpointError(std::string("checkpoint metadata is not valid JSON: ") + e.what());
  }
  r.pos += meta_len;

  LoadedCheckpoint out;
  try {
    out.model.config = config_from_json(j.at("config"));
    out.model.vocab = detail::vocab_from_json(j.at("vocab"));
    out.meta.best_metric = j.at("best_metric").get<double>();
    out.meta.epoch = j.at("epoch").get<std::size_t>();
  } catch (const nlohmann::json::exception& e) {
    throw CheckpointError(std::string("checkpoint metadata incomplete: ") + e.what());
  }
  out.model.config.validate();

  // Materialize every tensor at its recorded shape, then verify the set of
  // names matches what this config is supposed to carry.
  {
    Rng scratch(0);
    out.model = ModelParams::init(out.model.config, out.model.vocab, std::nullopt, scratch);
  }
  auto named = out.model.named_tensors();
  const auto& manifest = j.at("tensors");
  if (manifest.size() != named.size())
    throw CheckpointError("checkpoint tensor manifest does not match configuration");
  for (std::size_t i = 0; i < named.size(); ++i) {
    const auto& entry = manifest.at(i);
    const std::string name = entry.at("name").get<std::string>();
    const auto shape = entry.at("shape").get<std::vector<std::size_t>>();
    if (name != named[i].first)
      throw CheckpointError("checkpoint tensor order mismatch at " + name);
    if (shape != named[i].second->shape)
      throw CheckpointError("checkpoint shape mismatch for " + name);
    for (double& d : named[i].second->data) d = r.f64(name.c_str());
  }
  if (r.pos != bytes.size())
    throw CheckpointError("checkpoint has trailing bytes after payload");
  return out;
}

inline LoadedCheckpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw CheckpointError("cannot open checkpoint: " + path);
  std::stringstream buf;
  buf << in.rdbuf();
  return deserialize_checkpoint(buf.str());
}

}  // namespace seqtag
