#pragma once

// Hard-negative machinery for slot-level contrastive learning: slot
// descriptors from label text and frequent values, cosine neighborhoods
// over descriptor embeddings, per-slot negative value pools, and negative
// utterance generation by span substitution.

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

#include "slukit/codeswitch.hpp"
#include "slukit/common.hpp"
#include "slukit/corpus.hpp"
#include "slukit/encoder.hpp"

namespace slukit {

// Splits a slot name on '.', '_', '-', and lower-to-upper case boundaries,
// lowercased: "depart_time.period_of_day" -> [depart time period of day].
inline std::vector<std::string> tokenize_slot_name(const std::string& name) {
  std::vector<std::string> out;
  std::string cur;
  auto push = [&]() {
    if (!cur.empty()) {
      out.push_back(lowercase(cur));
      cur.clear();
    }
  };
  for (std::size_t i = 0; i < name.size(); ++i) {
    const char c = name[i];
    if (c == '.' || c == '_' || c == '-') {
      push();
      continue;
    }
    if (c >= 'A' && c <= 'Z' && i > 0 && name[i - 1] >= 'a' && name[i - 1] <= 'z') push();
    cur += c;
  }
  push();
  return out;
}

struct SlotDescriptor {
  std::string slot;
  std::vector<std::string> name_tokens;        // A_k
  std::vector<std::string> top_values;         // B_k, at most p_v entries
  bool missing_from_training = false;

  // Embedder input: name tokens followed by the value tokens, in order.
  std::vector<std::string> embed_tokens() const {
    std::vector<std::string> toks = name_tokens;
    for (const auto& v : top_values)
      for (const auto& t : split_ws(v)) toks.push_back(t);
    return toks;
  }
};

struct NegPoolConfig {
  int p_v = 20;
  int p_s = 5;
  int n_s = 2;

  void validate(std::size_t n_slots) const {
    if (p_v < 0) throw ConfigError("negpool: p_v must be >= 0");
    if (p_s < 1) throw ConfigError("negpool: p_s must be >= 1");
    if (n_s < 1) throw ConfigError("negpool: n_s must be >= 1");
    if (static_cast<std::size_t>(p_s) >= n_slots)
      throw ConfigError("negpool: p_s must be < number of slots (" +
                        std::to_string(n_slots) + ")");
  }
};

struct Embedder {
  virtual ~Embedder() = default;
  virtual Eigen::VectorXd embed(const std::vector<std::string>& tokens) const = 0;
  virtual std::string id() const = 0;
};

// Desk-scale default: mean of the reference encoder's token-embedding rows
// over the descriptor token sequence, L2-normalized.
struct EncoderMeanEmbedder : Embedder {
  const EncoderParams* enc;
  const Vocabulary* vocab;

  EncoderMeanEmbedder(const EncoderParams& e, const Vocabulary& v) : enc(&e), vocab(&v) {}

  Eigen::VectorXd embed(const std::vector<std::string>& tokens) const override {
    if (tokens.empty()) throw DataError("embedder: empty token list");
    Eigen::VectorXd acc = Eigen::VectorXd::Zero(enc->cfg.dim);
    for (const auto& t : tokens) acc += enc->tok_emb.value.row(vocab->get(t)).transpose();
    acc /= static_cast<double>(tokens.size());
    const double n = acc.norm();
    if (n < 1e-300) throw DataError("degenerate descriptor embedding");
    return acc / n;
  }

  std::string id() const override { return "encoder-token-mean"; }
};

struct NegativePool {
  // V_k: concatenation of neighbor B lists, duplicates kept.
  std::map<std::string, std::vector<std::string>> pools;
  // Source slot of each pool entry, parallel to pools (for provenance).
  std::map<std::string, std::vector<std::string>> pool_sources;
  std::map<std::string, std::vector<std::string>> neighbors;  // p_s names per slot

  nlohmann::json to_json() const {
    nlohmann::json j;
    j["neighbors"] = neighbors;
    j["pools"] = pools;
    return j;
  }

  void save_json(const std::string& path) const {
    std::ofstream out(path);
    if (!out) throw DataError("cannot write pool file: " + path);
    out << to_json().dump(2) << "\n";
  }
};

inline std::vector<SlotDescriptor> build_descriptors(const Dataset& train,
                                                     const SlotSchema& schema, int p_v) {
  ValueFrequencyTable freq = value_frequency_table(train);
  std::vector<SlotDescriptor> out;
  out.reserve(schema.slots.size());
  for (const auto& slot : schema.slots) {
    SlotDescriptor d;
    d.slot = slot;
    d.name_tokens = tokenize_slot_name(slot);
    auto it = freq.find(slot);
    if (it == freq.end()) {
      d.missing_from_training = true;
    } else {
      for (const auto& [value, count] : it->second) {
        if (static_cast<int>(d.top_values.size()) >= p_v) break;
        d.top_values.push_back(value);
        (void)count;
      }
    }
    out.push_back(std::move(d));
  }
  return out;
}

// Top-p_s most cosine-similar other slots per slot; ties broken by schema
// order. Descriptors must follow schema order.
inline std::map<std::string, std::vector<std::string>> similar_slots(
    const std::vector<SlotDescriptor>& descriptors, const Embedder& embedder, int p_s) {
  const std::size_t K = descriptors.size();
  if (K < static_cast<std::size_t>(p_s) + 1)
    throw ConfigError("similar_slots: need at least p_s+1 slots");
  std::vector<Eigen::VectorXd> emb(K);
  for (std::size_t k = 0; k < K; ++k) {
    emb[k] = embedder.embed(descriptors[k].embed_tokens());
    if (emb[k].norm() < 1e-300) throw DataError("degenerate descriptor embedding");
  }
  std::map<std::string, std::vector<std::string>> out;
  for (std::size_t k = 0; k < K; ++k) {
    std::vector<std::pair<double, std::size_t>> scored;
    for (std::size_t j = 0; j < K; ++j) {
      if (j == k) continue;
      const double cos = emb[k].dot(emb[j]) / (emb[k].norm() * emb[j].norm());
      scored.emplace_back(cos, j);
    }
    std::stable_sort(scored.begin(), scored.end(), [](const auto& a, const auto& b) {
      if (a.first != b.first) return a.first > b.first;
      return a.second < b.second;
    });
    std::vector<std::string> names;
    for (int i = 0; i < p_s; ++i) names.push_back(descriptors[scored[i].second].slot);
    out[descriptors[k].slot] = std::move(names);
  }
  return out;
}

inline NegativePool build_pools(
    const std::vector<SlotDescriptor>& descriptors,
    const std::map<std::string, std::vector<std::string>>& neighbors) {
  std::map<std::string, const SlotDescriptor*> by_name;
  for (const auto& d : descriptors) by_name[d.slot] = &d;
  NegativePool pool;
  pool.neighbors = neighbors;
  for (const auto& [slot, neighs] : neighbors) {
    auto& values = pool.pools[slot];
    auto& sources = pool.pool_sources[slot];
    for (const auto& n : neighs) {
      auto it = by_name.find(n);
      if (it == by_name.end()) throw DataError("build_pools: unknown neighbor slot " + n);
      for (const auto& v : it->second->top_values) {
        values.push_back(v);
        sources.push_back(n);
      }
    }
  }
  return pool;
}

inline NegativePool build_negative_pool(const Dataset& train, const SlotSchema& schema,
                                        const NegPoolConfig& cfg, const Embedder& embedder) {
  cfg.validate(schema.slots.size());
  auto descriptors = build_descriptors(train, schema, cfg.p_v);
  auto neighbors = similar_slots(descriptors, embedder, cfg.p_s);
  return build_pools(descriptors, neighbors);
}

struct SpanProvenance {
  std::string slot;
  std::string original_value;   // space-joined tokens being replaced
  std::string negative_value;   // sampled pool value, before code-switching
  std::string source_slot;      // neighbor slot the value came from
  bool pool_empty = false;      // span left unchanged
};

struct NegativeUtterance {
  Utterance utterance;  // strict-valid BIO, same span count and types as source
  std::vector<SpanProvenance> spans;
};

// Algorithm: for each of the n_s outputs, walk the spans of the switched
// utterance left to right, sample a replacement value uniformly from V_k
// (with replacement across outputs), code-switch it, splice it in and
// re-expand the tags to the new length.
inline std::vector<NegativeUtterance> generate_negatives(
    const SwitchedUtterance& switched, const NegativePool& pool, int n_s,
    const std::vector<BilingualDictionary>& dicts, const CodeSwitchConfig& cs_cfg,
    Rng& rng) {
  const Utterance base = switched.as_utterance();
  const auto spans = extract_spans(base);
  if (spans.empty()) throw DataError("generate_negatives: no spans in utterance " + base.id);

  std::vector<NegativeUtterance> out;
  out.reserve(n_s);
  for (int n = 0; n < n_s; ++n) {
    NegativeUtterance neg;
    neg.utterance.id = base.id + "#neg" + std::to_string(n);
    neg.utterance.locale = base.locale;
    neg.utterance.intent = base.intent;
    std::size_t cursor = 0;
    for (const auto& sp : spans) {
      // copy the O-tagged stretch before this span
      for (std::size_t i = cursor; i < sp.start; ++i) {
        neg.utterance.tokens.push_back(base.tokens[i]);
        neg.utterance.slots.push_back(base.slots[i]);
      }
      SpanProvenance prov;
      prov.slot = sp.slot;
      {
        std::vector<std::string> orig(base.tokens.begin() + sp.start,
                                      base.tokens.begin() + sp.end + 1);
        prov.original_value = join(orig);
      }
      auto pit = pool.pools.find(sp.slot);
      if (pit == pool.pools.end() || pit->second.empty()) {
        prov.pool_empty = true;
        for (std::size_t i = sp.start; i <= sp.end; ++i) {
          neg.utterance.tokens.push_back(base.tokens[i]);
          neg.utterance.slots.push_back(base.slots[i]);
        }
      } else {
        const std::size_t pick = uniform_index(rng, pit->second.size());
        prov.negative_value = pit->second[pick];
        auto sit = pool.pool_sources.find(sp.slot);
        if (sit != pool.pool_sources.end() && pick < sit->second.size())
          prov.source_slot = sit->second[pick];
        std::vector<std::string> value_tokens = split_ws(prov.negative_value);
        value_tokens = code_switch_value(value_tokens, dicts, cs_cfg, rng);
        for (std::size_t i = 0; i < value_tokens.size(); ++i) {
          neg.utterance.tokens.push_back(value_tokens[i]);
          neg.utterance.slots.push_back((i == 0 ? "B-" : "I-") + sp.slot);
        }
      }
      neg.spans.push_back(std::move(prov));
      cursor = sp.end + 1;
    }
    for (std::size_t i = cursor; i < base.tokens.size(); ++i) {
      neg.utterance.tokens.push_back(base.tokens[i]);
      neg.utterance.slots.push_back(base.slots[i]);
    }
    out.push_back(std::move(neg));
  }
  return out;
}

}  // namespace slukit
