#pragma once

// Checkpoint layout: 8-byte magic "SLUCKPT1", little-endian u64 manifest
// length, manifest JSON (UTF-8), then raw tensor data. Tensors are stored
// in manifest order as row-major little-endian float64.

#include <cstring>
#include <fstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "slukit/lajoint.hpp"

namespace slukit {

inline constexpr char kCheckpointMagic[9] = "SLUCKPT1";

inline std::uint64_t fnv1a(const std::string& s) {
  std::uint64_t h = 1469598103934665603ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  return h;
}

inline nlohmann::json encoder_config_json(const EncoderConfig& c) {
  return {{"layers", c.layers},   {"dim", c.dim},
          {"heads", c.heads},     {"ff_dim", c.ff_dim},
          {"max_len", c.max_len}, {"vocab_size", c.vocab_size},
          {"dropout", c.dropout}, {"seed", c.seed}};
}

inline EncoderConfig encoder_config_from_json(const nlohmann::json& j) {
  EncoderConfig c;
  c.layers = j.at("layers");
  c.dim = j.at("dim");
  c.heads = j.at("heads");
  c.ff_dim = j.at("ff_dim");
  c.max_len = j.at("max_len");
  c.vocab_size = j.at("vocab_size");
  c.dropout = j.at("dropout");
  c.seed = j.at("seed");
  return c;
}

inline void save_checkpoint(ModelParams& M, const std::string& path,
                            const std::string& config_echo = "") {
  nlohmann::json manifest;
  manifest["version"] = 1;
  manifest["dtype"] = "f64le";
  manifest["config_hash"] = fnv1a(config_echo);
  manifest["encoder"] = encoder_config_json(M.enc.cfg);
  manifest["schema"] = {{"slots", M.schema.slots},
                        {"intents", M.schema.intents},
                        {"abstract", M.schema.abstract_labels}};
  manifest["vocab"] = M.vocab.to_json();
  manifest["laj"] = {{"identity_compressor", M.laj.identity_compressor},
                     {"identity_projector", M.laj.identity_projector}};
  nlohmann::json tensors = nlohmann::json::array();
  std::uint64_t offset = 0;
  auto params = M.all();
  for (auto* p : params) {
    tensors.push_back({{"name", p->name},
                       {"rows", p->value.rows()},
                       {"cols", p->value.cols()},
                       {"offset", offset}});
    offset += static_cast<std::uint64_t>(p->value.size()) * sizeof(double);
  }
  manifest["tensors"] = tensors;

  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write checkpoint: " + path);
  out.write(kCheckpointMagic, 8);
  const std::string mjson = manifest.dump();
  const std::uint64_t mlen = mjson.size();
  out.write(reinterpret_cast<const char*>(&mlen), 8);
  out.write(mjson.data(), static_cast<std::streamsize>(mjson.size()));
  std::vector<double> row;
  for (auto* p : params) {
    for (Eigen::Index i = 0; i < p->value.rows(); ++i) {
      row.assign(p->value.row(i).begin(), p->value.row(i).end());
      out.write(reinterpret_cast<const char*>(row.data()),
                static_cast<std::streamsize>(row.size() * sizeof(double)));
    }
  }
  if (!out) throw DataError("checkpoint write failed: " + path);
}

inline ModelParams load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open checkpoint: " + path);
  char magic[8];
  in.read(magic, 8);
  if (!in || std::memcmp(magic, kCheckpointMagic, 8) != 0)
    throw DataError("not a checkpoint file: " + path);
  std::uint64_t mlen = 0;
  in.read(reinterpret_cast<char*>(&mlen), 8);
  std::string mjson(mlen, '\0');
  in.read(mjson.data(), static_cast<std::streamsize>(mlen));
  if (!in) throw DataError("truncated checkpoint manifest: " + path);
  nlohmann::json manifest = nlohmann::json::parse(mjson);

  ModelParams M;
  SlotSchema schema;
  schema.slots = manifest.at("schema").at("slots").get<std::vector<std::string>>();
  schema.intents = manifest.at("schema").at("intents").get<std::vector<std::string>>();
  auto abs = manifest.at("schema").at("abstract").get<std::vector<std::string>>();
  for (std::size_t i = 0; i < 3; ++i) schema.abstract_labels[i] = abs.at(i);
  Vocabulary vocab = Vocabulary::from_json(manifest.at("vocab"));
  LajointConfig laj;
  laj.identity_compressor = manifest.at("laj").at("identity_compressor");
  laj.identity_projector = manifest.at("laj").at("identity_projector");
  M.init(encoder_config_from_json(manifest.at("encoder")), schema, vocab, laj);

  std::map<std::string, ad::Parameter*> by_name;
  for (auto* p : M.all()) by_name[p->name] = p;
  for (const auto& t : manifest.at("tensors")) {
    const std::string name = t.at("name");
    auto it = by_name.find(name);
    if (it == by_name.end()) throw DataError("checkpoint has unknown tensor: " + name);
    ad::Parameter* p = it->second;
    const Eigen::Index rows = t.at("rows"), cols = t.at("cols");
    if (rows != p->value.rows() || cols != p->value.cols())
      throw DataError("checkpoint tensor shape mismatch for " + name);
    std::vector<double> buf(static_cast<std::size_t>(rows * cols));
    in.read(reinterpret_cast<char*>(buf.data()),
            static_cast<std::streamsize>(buf.size() * sizeof(double)));
    if (!in) throw DataError("truncated checkpoint data at tensor " + name);
    for (Eigen::Index i = 0; i < rows; ++i)
      for (Eigen::Index j = 0; j < cols; ++j)
        p->value(i, j) = buf[static_cast<std::size_t>(i * cols + j)];
  }
  return M;
}

}  // namespace slukit
