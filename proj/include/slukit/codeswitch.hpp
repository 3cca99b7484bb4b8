#pragma once

// Multilingual token-level replacement: each covered token of a selected
// utterance is independently swapped for a dictionary translation. Labels
// are never touched, so BIO alignment is preserved by construction.

#include <fstream>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "slukit/common.hpp"
#include "slukit/corpus.hpp"

namespace slukit {

struct BilingualDictionary {
  std::string source_locale;
  std::string target_locale;
  // case-folded source word -> translation candidates
  std::map<std::string, std::vector<std::string>> entries;

  const std::vector<std::string>* lookup(const std::string& word) const {
    auto it = entries.find(lowercase(word));
    return it == entries.end() ? nullptr : &it->second;
  }
};

struct CodeSwitchConfig {
  double sentence_ratio = 1.0;
  double word_ratio = 0.9;
  std::vector<std::string> target_locales;  // subset filter; empty = all dicts
  std::uint64_t seed = 42;
};

struct TokenProvenance {
  std::size_t original_index = 0;
  bool replaced = false;
  std::string target_locale;  // empty if not replaced
};

struct SwitchedUtterance {
  Utterance base;                // labels live here, unchanged
  std::vector<std::string> tokens;
  std::vector<TokenProvenance> provenance;

  Utterance as_utterance() const {
    Utterance u = base;
    u.tokens = tokens;
    return u;
  }
};

// MUSE format: one "source target" pair per line, whitespace separated.
// Repeated keys accumulate translation lists.
inline BilingualDictionary load_dictionary(const std::string& path,
                                           const std::string& source_locale,
                                           const std::string& target_locale) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open dictionary file: " + path);
  BilingualDictionary dict;
  dict.source_locale = source_locale;
  dict.target_locale = target_locale;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    auto fields = split_ws(line);
    if (fields.size() != 2)
      throw DataError(path + ": expected 2 fields at line " + std::to_string(lineno));
    dict.entries[lowercase(fields[0])].push_back(fields[1]);
  }
  if (dict.entries.empty()) throw DataError(path + ": empty dictionary");
  return dict;
}

namespace detail {

inline std::vector<const BilingualDictionary*> active_dicts(
    const std::vector<BilingualDictionary>& dicts, const CodeSwitchConfig& cfg) {
  std::vector<const BilingualDictionary*> out;
  for (const auto& d : dicts) {
    if (cfg.target_locales.empty() ||
        std::find(cfg.target_locales.begin(), cfg.target_locales.end(),
                  d.target_locale) != cfg.target_locales.end())
      out.push_back(&d);
  }
  return out;
}

// Replacement trace for one token list. RNG draw order is part of the
// contract (reproduced by the seeded re-execution oracle in tests):
// one sentence gate, then per covered token a word gate, then a locale
// pick among covering dictionaries, then a translation pick.
inline void switch_tokens(std::vector<std::string>& tokens,
                          std::vector<TokenProvenance>* provenance,
                          const std::vector<const BilingualDictionary*>& dicts,
                          const CodeSwitchConfig& cfg, Rng& rng) {
  if (provenance) {
    provenance->resize(tokens.size());
    for (std::size_t i = 0; i < tokens.size(); ++i) (*provenance)[i] = {i, false, ""};
  }
  bool selected = uniform01(rng) < cfg.sentence_ratio;
  if (!selected) return;
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    std::vector<const BilingualDictionary*> covering;
    for (const auto* d : dicts)
      if (d->lookup(tokens[i])) covering.push_back(d);
    if (covering.empty()) continue;
    if (uniform01(rng) >= cfg.word_ratio) continue;
    const auto* dict = covering[uniform_index(rng, covering.size())];
    const auto& candidates = *dict->lookup(tokens[i]);
    tokens[i] = candidates[uniform_index(rng, candidates.size())];
    if (provenance) {
      (*provenance)[i].replaced = true;
      (*provenance)[i].target_locale = dict->target_locale;
    }
  }
}

}  // namespace detail

inline SwitchedUtterance code_switch(const Utterance& u,
                                     const std::vector<BilingualDictionary>& dicts,
                                     const CodeSwitchConfig& cfg, Rng& rng) {
  SwitchedUtterance out;
  out.base = u;
  out.tokens = u.tokens;
  detail::switch_tokens(out.tokens, &out.provenance, detail::active_dicts(dicts, cfg),
                        cfg, rng);
  return out;
}

inline std::vector<std::string> code_switch_value(
    const std::vector<std::string>& value_tokens,
    const std::vector<BilingualDictionary>& dicts, const CodeSwitchConfig& cfg,
    Rng& rng) {
  std::vector<std::string> tokens = value_tokens;
  detail::switch_tokens(tokens, nullptr, detail::active_dicts(dicts, cfg), cfg, rng);
  return tokens;
}

// Maps code_switch over the dataset, each utterance on an independently
// derived RNG stream so the result is order-stable and parallelizable.
inline std::vector<SwitchedUtterance> code_switch_dataset(
    const Dataset& d, const std::vector<BilingualDictionary>& dicts,
    const CodeSwitchConfig& cfg, std::uint64_t seed) {
  std::vector<SwitchedUtterance> out;
  out.reserve(d.size());
  for (std::size_t i = 0; i < d.size(); ++i) {
    Rng rng = make_rng(seed, i);
    out.push_back(code_switch(d.utterances[i], dicts, cfg, rng));
  }
  return out;
}

}  // namespace slukit
