#pragma once

// Data model for SLU corpora: utterances with BIO slot tags and an
// intent, schema handling, span extraction, and slot-value statistics.

#include <algorithm>
#include <fstream>
#include <map>
#include <set>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "slukit/common.hpp"

namespace slukit {

struct Utterance {
  std::string id;
  std::string locale;
  std::vector<std::string> tokens;
  std::vector<std::string> slots;  // BIO tags, same length as tokens
  std::string intent;

  std::size_t size() const { return tokens.size(); }
};

struct SlotSpan {
  std::size_t start = 0;  // inclusive
  std::size_t end = 0;    // inclusive
  std::string slot;

  bool operator==(const SlotSpan& o) const {
    return start == o.start && end == o.end && slot == o.slot;
  }
};

struct SlotSchema {
  std::vector<std::string> slots;    // K slot names, fixed order
  std::vector<std::string> intents;
  // Text forms of the abstract labels s_O, s_B, s_I.
  std::array<std::string, 3> abstract_labels{"outside", "begin", "inside"};

  std::size_t num_slots() const { return slots.size(); }

  // [O, B-s1, I-s1, ..., B-sK, I-sK], size 2K+1
  std::vector<std::string> bio_labels() const {
    std::vector<std::string> out;
    out.reserve(2 * slots.size() + 1);
    out.push_back("O");
    for (const auto& s : slots) {
      out.push_back("B-" + s);
      out.push_back("I-" + s);
    }
    return out;
  }

  int slot_index(const std::string& name) const {
    for (std::size_t i = 0; i < slots.size(); ++i)
      if (slots[i] == name) return static_cast<int>(i);
    return -1;
  }

  int intent_index(const std::string& name) const {
    for (std::size_t i = 0; i < intents.size(); ++i)
      if (intents[i] == name) return static_cast<int>(i);
    return -1;
  }

  // Index into bio_labels() for a tag string, -1 if unknown.
  int bio_index(const std::string& tag) const {
    if (tag == "O") return 0;
    if (tag.size() < 3 || (tag[0] != 'B' && tag[0] != 'I') || tag[1] != '-') return -1;
    int k = slot_index(tag.substr(2));
    if (k < 0) return -1;
    return 1 + 2 * k + (tag[0] == 'I' ? 1 : 0);
  }

  static SlotSchema load_json(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open schema file: " + path);
    nlohmann::json j;
    try {
      in >> j;
    } catch (const nlohmann::json::exception& e) {
      throw DataError("malformed schema JSON in " + path + ": " + e.what());
    }
    SlotSchema s;
    s.slots = j.at("slots").get<std::vector<std::string>>();
    s.intents = j.at("intents").get<std::vector<std::string>>();
    std::set<std::string> uniq(s.slots.begin(), s.slots.end());
    if (uniq.size() != s.slots.size()) throw DataError("duplicate slot names in schema");
    return s;
  }

  void save_json(const std::string& path) const {
    nlohmann::json j;
    j["slots"] = slots;
    j["intents"] = intents;
    std::ofstream out(path);
    if (!out) throw DataError("cannot write schema file: " + path);
    out << j.dump(2) << "\n";
  }
};

enum class ValidationMode { Strict, Lenient };

// --- BIO tag helpers -------------------------------------------------------

inline bool is_bio_shape(const std::string& tag) {
  if (tag == "O") return true;
  return tag.size() > 2 && (tag[0] == 'B' || tag[0] == 'I') && tag[1] == '-';
}

inline std::string tag_slot(const std::string& tag) {
  return tag == "O" ? std::string() : tag.substr(2);
}

// Rewrites orphan I-x tags (not preceded by B-x or I-x) to B-x.
// Returns the number of repairs.
inline std::size_t repair_bio(std::vector<std::string>& tags) {
  std::size_t repairs = 0;
  for (std::size_t i = 0; i < tags.size(); ++i) {
    if (tags[i].empty() || tags[i][0] != 'I') continue;
    bool orphan = i == 0 || tag_slot(tags[i - 1]) != tag_slot(tags[i]) ||
                  tags[i - 1][0] == 'O';
    if (orphan) {
      tags[i][0] = 'B';
      ++repairs;
    }
  }
  return repairs;
}

inline bool is_strict_bio(const std::vector<std::string>& tags) {
  for (std::size_t i = 0; i < tags.size(); ++i) {
    if (!is_bio_shape(tags[i])) return false;
    if (tags[i][0] == 'I') {
      if (i == 0) return false;
      const std::string& prev = tags[i - 1];
      if (prev == "O" || tag_slot(prev) != tag_slot(tags[i])) return false;
    }
  }
  return true;
}

// Validates one utterance against the schema. In lenient mode orphan I- tags
// are repaired in place and counted; in strict mode they raise DataError.
inline std::size_t validate_utterance(Utterance& u, const SlotSchema& schema,
                                      ValidationMode mode) {
  if (u.tokens.empty()) throw DataError("utterance " + u.id + ": empty token list");
  if (u.tokens.size() != u.slots.size())
    throw DataError("utterance " + u.id + ": " + std::to_string(u.tokens.size()) +
                    " tokens vs " + std::to_string(u.slots.size()) + " tags");
  for (std::size_t i = 0; i < u.slots.size(); ++i) {
    const std::string& tag = u.slots[i];
    if (!is_bio_shape(tag))
      throw DataError("utterance " + u.id + ": malformed tag '" + tag + "' at index " +
                      std::to_string(i));
    if (tag != "O" && schema.slot_index(tag_slot(tag)) < 0)
      throw DataError("utterance " + u.id + ": unknown slot '" + tag_slot(tag) +
                      "' at index " + std::to_string(i));
  }
  if (schema.intent_index(u.intent) < 0)
    throw DataError("utterance " + u.id + ": unknown intent '" + u.intent + "'");
  if (mode == ValidationMode::Strict) {
    for (std::size_t i = 0; i < u.slots.size(); ++i) {
      if (u.slots[i][0] != 'I') continue;
      bool orphan = i == 0 || u.slots[i - 1] == "O" ||
                    tag_slot(u.slots[i - 1]) != tag_slot(u.slots[i]);
      if (orphan)
        throw DataError("utterance " + u.id + ": orphan I- tag at index " +
                        std::to_string(i));
    }
    return 0;
  }
  return repair_bio(u.slots);
}

struct Dataset {
  std::vector<Utterance> utterances;
  SlotSchema schema;
  std::string split;  // train | valid | test
  std::size_t warnings = 0;

  std::size_t size() const { return utterances.size(); }
};

inline Utterance parse_utterance_json(const nlohmann::json& j) {
  Utterance u;
  u.id = j.at("id").get<std::string>();
  u.locale = j.at("locale").get<std::string>();
  u.intent = j.at("intent").get<std::string>();
  u.tokens = j.at("tokens").get<std::vector<std::string>>();
  u.slots = j.at("slots").get<std::vector<std::string>>();
  return u;
}

inline nlohmann::json utterance_to_json(const Utterance& u) {
  nlohmann::json j;
  j["id"] = u.id;
  j["locale"] = u.locale;
  j["intent"] = u.intent;
  j["tokens"] = u.tokens;
  j["slots"] = u.slots;
  return j;
}

// Reads a JSONL corpus ({"id","locale","intent","tokens","slots"} per line)
// and validates every utterance against the schema.
inline Dataset load_dataset(const std::string& path, const SlotSchema& schema,
                            ValidationMode mode, const std::string& split = "train") {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open dataset file: " + path);
  Dataset d;
  d.schema = schema;
  d.split = split;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
      d.utterances.push_back(parse_utterance_json(j));
    } catch (const nlohmann::json::exception& e) {
      throw DataError(path + ":" + std::to_string(lineno) + ": malformed JSON: " + e.what());
    }
    try {
      d.warnings += validate_utterance(d.utterances.back(), schema, mode);
    } catch (const DataError& e) {
      throw DataError(path + ":" + std::to_string(lineno) + ": " + e.what());
    }
  }
  return d;
}

inline void save_dataset_jsonl(const std::vector<Utterance>& utts, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write dataset file: " + path);
  for (const auto& u : utts) out << utterance_to_json(u).dump() << "\n";
}

// Derives a schema (sorted slot and intent names) from a JSONL file without
// validating tags; convenient when no schema file is given.
inline SlotSchema derive_schema(const std::vector<std::string>& paths) {
  std::set<std::string> slots, intents;
  for (const auto& path : paths) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open dataset file: " + path);
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
      ++lineno;
      if (line.empty()) continue;
      try {
        Utterance u = parse_utterance_json(nlohmann::json::parse(line));
        intents.insert(u.intent);
        for (const auto& tag : u.slots)
          if (tag != "O" && is_bio_shape(tag)) slots.insert(tag_slot(tag));
      } catch (const nlohmann::json::exception& e) {
        throw DataError(path + ":" + std::to_string(lineno) + ": malformed JSON: " + e.what());
      }
    }
  }
  SlotSchema s;
  s.slots.assign(slots.begin(), slots.end());
  s.intents.assign(intents.begin(), intents.end());
  return s;
}

// Maximal B-...I-... runs, left to right. Input must be strict-valid.
inline std::vector<SlotSpan> extract_spans(const std::vector<std::string>& tags) {
  std::vector<SlotSpan> spans;
  for (std::size_t i = 0; i < tags.size(); ++i) {
    if (tags[i].empty() || tags[i][0] != 'B') continue;
    SlotSpan sp;
    sp.start = i;
    sp.slot = tag_slot(tags[i]);
    std::size_t j = i;
    while (j + 1 < tags.size() && tags[j + 1].size() > 2 && tags[j + 1][0] == 'I' &&
           tag_slot(tags[j + 1]) == sp.slot)
      ++j;
    sp.end = j;
    spans.push_back(sp);
    i = j;
  }
  return spans;
}

inline std::vector<SlotSpan> extract_spans(const Utterance& u) {
  return extract_spans(u.slots);
}

// Inverse of extract_spans. Spans must be disjoint and inside [0, length).
inline std::vector<std::string> spans_to_bio(const std::vector<SlotSpan>& spans,
                                             std::size_t length) {
  std::vector<std::string> tags(length, "O");
  for (const auto& sp : spans) {
    if (sp.start > sp.end || sp.end >= length)
      throw DataError("span out of range: [" + std::to_string(sp.start) + "," +
                      std::to_string(sp.end) + ") for length " + std::to_string(length));
    for (std::size_t i = sp.start; i <= sp.end; ++i) {
      if (tags[i] != "O")
        throw DataError("overlapping spans at index " + std::to_string(i));
      tags[i] = (i == sp.start ? "B-" : "I-") + sp.slot;
    }
  }
  return tags;
}

// Per slot: (value, count) pairs ordered by count descending, ties broken
// lexicographically. Values are case-folded, space-joined token sequences.
using ValueFrequencyTable = std::map<std::string, std::vector<std::pair<std::string, int>>>;

inline std::string span_value(const Utterance& u, const SlotSpan& sp) {
  std::vector<std::string> toks;
  for (std::size_t i = sp.start; i <= sp.end; ++i) toks.push_back(lowercase(u.tokens[i]));
  return join(toks);
}

inline ValueFrequencyTable value_frequency_table(const Dataset& d) {
  std::map<std::string, std::map<std::string, int>> counts;
  for (const auto& u : d.utterances)
    for (const auto& sp : extract_spans(u)) counts[sp.slot][span_value(u, sp)]++;
  ValueFrequencyTable table;
  for (auto& [slot, values] : counts) {
    std::vector<std::pair<std::string, int>> row(values.begin(), values.end());
    std::stable_sort(row.begin(), row.end(), [](const auto& a, const auto& b) {
      if (a.second != b.second) return a.second > b.second;
      return a.first < b.first;
    });
    table[slot] = std::move(row);
  }
  return table;
}

}  // namespace slukit
