#pragma once

// Flat key = value run configuration. Unknown keys are rejected; the
// effective configuration is echoed into the run directory so every run
// is reproducible from the snapshot plus the seed.

#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "slukit/codeswitch.hpp"
#include "slukit/encoder.hpp"
#include "slukit/lajoint.hpp"
#include "slukit/mcl.hpp"
#include "slukit/negpool.hpp"
#include "slukit/trainer.hpp"

namespace slukit {

struct RunConfig {
  std::uint64_t seed = 42;

  double cs_sentence_ratio = 1.0;
  double cs_word_ratio = 0.9;

  int pool_p_v = 20;
  int pool_p_s = 5;
  int pool_n_s = 2;

  double cl_r_u = 0.3, cl_r_s = 0.3, cl_r_w = 0.3;
  double cl_lambda_u = 0.5, cl_lambda_s = 0.5, cl_lambda_w = 0.5;
  int cl_n_w = 2;

  int enc_layers = 2;
  int enc_dim = 32;
  int enc_heads = 2;
  int enc_ff_dim = 64;
  int enc_max_len = 128;
  double enc_dropout = 0.1;

  int train_batch_size = 32;
  int train_epochs = 20;
  double train_lr_encoder = 1e-3;
  double train_lr_heads = 1e-3;
  double train_weight_decay = 0.0;
  double train_warmup = 0.10;
  double train_grad_clip = 1.0;
  double train_fraction = 1.0;

  bool ablate_compressor = false;
  bool ablate_projector = false;

  void set(const std::string& key, const std::string& value);
  std::string echo() const;

  static RunConfig load_file(const std::string& path) {
    RunConfig cfg;
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config file: " + path);
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
      ++lineno;
      const auto hash = line.find('#');
      if (hash != std::string::npos) line.erase(hash);
      std::string trimmed;
      for (char c : line)
        if (!std::isspace(static_cast<unsigned char>(c)) || !trimmed.empty()) trimmed += c;
      while (!trimmed.empty() && std::isspace(static_cast<unsigned char>(trimmed.back())))
        trimmed.pop_back();
      if (trimmed.empty()) continue;
      const auto eq = trimmed.find('=');
      if (eq == std::string::npos)
        throw ConfigError(path + ":" + std::to_string(lineno) + ": expected key = value");
      auto strip = [](std::string s) {
        while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) s.erase(0, 1);
        while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.pop_back();
        return s;
      };
      try {
        cfg.set(strip(trimmed.substr(0, eq)), strip(trimmed.substr(eq + 1)));
      } catch (const ConfigError& e) {
        throw ConfigError(path + ":" + std::to_string(lineno) + ": " + e.what());
      }
    }
    return cfg;
  }

  // "key=value" strings, e.g. from repeated --set flags
  void apply_overrides(const std::vector<std::string>& kvs) {
    for (const auto& kv : kvs) {
      const auto eq = kv.find('=');
      if (eq == std::string::npos) throw ConfigError("override must be key=value: " + kv);
      set(kv.substr(0, eq), kv.substr(eq + 1));
    }
  }

  EncoderConfig encoder_config() const {
    EncoderConfig c;
    c.layers = enc_layers;
    c.dim = enc_dim;
    c.heads = enc_heads;
    c.ff_dim = enc_ff_dim;
    c.max_len = enc_max_len;
    c.dropout = enc_dropout;
    c.seed = seed;
    return c;
  }

  CodeSwitchConfig cs_config() const {
    CodeSwitchConfig c;
    c.sentence_ratio = cs_sentence_ratio;
    c.word_ratio = cs_word_ratio;
    c.seed = seed;
    return c;
  }

  NegPoolConfig pool_config() const {
    NegPoolConfig c;
    c.p_v = pool_p_v;
    c.p_s = pool_p_s;
    c.n_s = pool_n_s;
    return c;
  }

  CLConfig cl_config() const {
    CLConfig c;
    c.r_u = cl_r_u;
    c.r_s = cl_r_s;
    c.r_w = cl_r_w;
    c.lambda_u = cl_lambda_u;
    c.lambda_s = cl_lambda_s;
    c.lambda_w = cl_lambda_w;
    c.n_w = cl_n_w;
    return c;
  }

  LajointConfig laj_config() const {
    LajointConfig c;
    c.identity_compressor = ablate_compressor;
    c.identity_projector = ablate_projector;
    return c;
  }

  TrainConfig train_config() const {
    TrainConfig c;
    c.batch_size = train_batch_size;
    c.epochs = train_epochs;
    c.lr_encoder = train_lr_encoder;
    c.lr_heads = train_lr_heads;
    c.weight_decay = train_weight_decay;
    c.warmup_fraction = train_warmup;
    c.grad_clip = train_grad_clip;
    c.train_fraction = train_fraction;
    c.seed = seed;
    c.cl = cl_config();
    c.pool = pool_config();
    c.cs = cs_config();
    return c;
  }
};

namespace detail {

struct ConfigBinding {
  enum Kind { Int, Double, Bool, U64 } kind;
  void* ptr;
};

inline std::map<std::string, ConfigBinding> config_bindings(RunConfig& c) {
  using B = ConfigBinding;
  return {
      {"seed", {B::U64, &c.seed}},
      {"cs.sentence_ratio", {B::Double, &c.cs_sentence_ratio}},
      {"cs.word_ratio", {B::Double, &c.cs_word_ratio}},
      {"pool.p_v", {B::Int, &c.pool_p_v}},
      {"pool.p_s", {B::Int, &c.pool_p_s}},
      {"pool.n_s", {B::Int, &c.pool_n_s}},
      {"cl.r_u", {B::Double, &c.cl_r_u}},
      {"cl.r_s", {B::Double, &c.cl_r_s}},
      {"cl.r_w", {B::Double, &c.cl_r_w}},
      {"cl.lambda_u", {B::Double, &c.cl_lambda_u}},
      {"cl.lambda_s", {B::Double, &c.cl_lambda_s}},
      {"cl.lambda_w", {B::Double, &c.cl_lambda_w}},
      {"cl.n_w", {B::Int, &c.cl_n_w}},
      {"enc.layers", {B::Int, &c.enc_layers}},
      {"enc.dim", {B::Int, &c.enc_dim}},
      {"enc.heads", {B::Int, &c.enc_heads}},
      {"enc.ff_dim", {B::Int, &c.enc_ff_dim}},
      {"enc.max_len", {B::Int, &c.enc_max_len}},
      {"enc.dropout", {B::Double, &c.enc_dropout}},
      {"train.batch_size", {B::Int, &c.train_batch_size}},
      {"train.epochs", {B::Int, &c.train_epochs}},
      {"train.lr_encoder", {B::Double, &c.train_lr_encoder}},
      {"train.lr_heads", {B::Double, &c.train_lr_heads}},
      {"train.weight_decay", {B::Double, &c.train_weight_decay}},
      {"train.warmup", {B::Double, &c.train_warmup}},
      {"train.grad_clip", {B::Double, &c.train_grad_clip}},
      {"train.fraction", {B::Double, &c.train_fraction}},
      {"ablate.compressor", {B::Bool, &c.ablate_compressor}},
      {"ablate.projector", {B::Bool, &c.ablate_projector}},
  };
}

inline const std::vector<std::string>& config_key_order() {
  static const std::vector<std::string> keys = {
      "seed",
      "cs.sentence_ratio", "cs.word_ratio",
      "pool.p_v", "pool.p_s", "pool.n_s",
      "cl.r_u", "cl.r_s", "cl.r_w",
      "cl.lambda_u", "cl.lambda_s", "cl.lambda_w", "cl.n_w",
      "enc.layers", "enc.dim", "enc.heads", "enc.ff_dim", "enc.max_len", "enc.dropout",
      "train.batch_size", "train.epochs", "train.lr_encoder", "train.lr_heads",
      "train.weight_decay", "train.warmup", "train.grad_clip", "train.fraction",
      "ablate.compressor", "ablate.projector"};
  return keys;
}

}  // namespace detail

inline void RunConfig::set(const std::string& key, const std::string& value) {
  auto bindings = detail::config_bindings(*this);
  auto it = bindings.find(key);
  if (it == bindings.end()) throw ConfigError("unknown config key: " + key);
  const auto& b = it->second;
  try {
    switch (b.kind) {
      case detail::ConfigBinding::Int:
        *static_cast<int*>(b.ptr) = std::stoi(value);
        break;
      case detail::ConfigBinding::Double:
        *static_cast<double*>(b.ptr) = std::stod(value);
        break;
      case detail::ConfigBinding::U64:
        *static_cast<std::uint64_t*>(b.ptr) = std::stoull(value);
        break;
      case detail::ConfigBinding::Bool:
        if (value == "true" || value == "1")
          *static_cast<bool*>(b.ptr) = true;
        else if (value == "false" || value == "0")
          *static_cast<bool*>(b.ptr) = false;
        else
          throw ConfigError("expected true/false");
        break;
    }
  } catch (const std::exception&) {
    throw ConfigError("bad value for " + key + ": '" + value + "'");
  }
}

inline std::string RunConfig::echo() const {
  auto bindings = detail::config_bindings(const_cast<RunConfig&>(*this));
  std::ostringstream out;
  for (const auto& key : detail::config_key_order()) {
    const auto& b = bindings.at(key);
    out << key << " = ";
    switch (b.kind) {
      case detail::ConfigBinding::Int:
        out << *static_cast<const int*>(b.ptr);
        break;
      case detail::ConfigBinding::Double:
        out << nlohmann::json(*static_cast<const double*>(b.ptr)).dump();
        break;
      case detail::ConfigBinding::U64:
        out << *static_cast<const std::uint64_t*>(b.ptr);
        break;
      case detail::ConfigBinding::Bool:
        out << (*static_cast<const bool*>(b.ptr) ? "true" : "false");
        break;
    }
    out << "\n";
  }
  return out.str();
}

}  // namespace slukit
