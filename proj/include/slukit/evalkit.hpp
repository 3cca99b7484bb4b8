#pragma once

// Metrics (intent accuracy, span-level slot F1, semantic exact match),
// slot-error decomposition, and utterance-representation export.

#include <fstream>
#include <iomanip>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

#include "slukit/corpus.hpp"

namespace slukit {

struct PredictionRecord {
  std::string id;
  std::string gold_intent, pred_intent;
  std::vector<std::string> gold_tags, pred_tags;  // equal length, repaired
};

struct MetricsReport {
  std::size_t n = 0;
  double intent_accuracy = 0.0;
  double slot_f1 = 0.0;
  double slot_precision = 0.0;
  double slot_recall = 0.0;
  double semantic_em = 0.0;
  std::size_t intent_correct = 0;
  std::size_t em_correct = 0;
  std::size_t span_matches = 0, spans_pred = 0, spans_gold = 0;

  nlohmann::json to_json() const {
    return {{"n", n},
            {"intent_accuracy", intent_accuracy},
            {"slot_f1", slot_f1},
            {"slot_precision", slot_precision},
            {"slot_recall", slot_recall},
            {"semantic_em", semantic_em},
            {"counts",
             {{"intent_correct", intent_correct},
              {"em_correct", em_correct},
              {"span_matches", span_matches},
              {"spans_pred", spans_pred},
              {"spans_gold", spans_gold}}}};
  }
};

inline double intent_accuracy(const std::vector<PredictionRecord>& records) {
  if (records.empty()) return 0.0;
  std::size_t correct = 0;
  for (const auto& r : records) correct += r.gold_intent == r.pred_intent;
  return static_cast<double>(correct) / static_cast<double>(records.size());
}

// Span-level micro F1: a predicted span counts iff (start, end, slot) all
// match a gold span. A corpus with no spans on either side scores 1.0.
inline double slot_f1(const std::vector<PredictionRecord>& records,
                      MetricsReport* detail = nullptr) {
  std::size_t matches = 0, n_pred = 0, n_gold = 0;
  for (const auto& r : records) {
    auto gold = extract_spans(r.gold_tags);
    auto pred = extract_spans(r.pred_tags);
    n_gold += gold.size();
    n_pred += pred.size();
    for (const auto& p : pred) {
      for (auto it = gold.begin(); it != gold.end(); ++it) {
        if (*it == p) {
          ++matches;
          gold.erase(it);
          break;
        }
      }
    }
  }
  if (detail) {
    detail->span_matches = matches;
    detail->spans_pred = n_pred;
    detail->spans_gold = n_gold;
  }
  if (n_pred == 0 && n_gold == 0) {
    if (detail) {
      detail->slot_precision = 1.0;
      detail->slot_recall = 1.0;
    }
    return 1.0;
  }
  const double p = n_pred ? static_cast<double>(matches) / n_pred : 0.0;
  const double r = n_gold ? static_cast<double>(matches) / n_gold : 0.0;
  if (detail) {
    detail->slot_precision = p;
    detail->slot_recall = r;
  }
  return p + r > 0 ? 2 * p * r / (p + r) : 0.0;
}

inline double semantic_em(const std::vector<PredictionRecord>& records) {
  if (records.empty()) return 0.0;
  std::size_t correct = 0;
  for (const auto& r : records)
    correct += r.gold_intent == r.pred_intent && r.gold_tags == r.pred_tags;
  return static_cast<double>(correct) / static_cast<double>(records.size());
}

inline MetricsReport compute_metrics(const std::vector<PredictionRecord>& records) {
  MetricsReport m;
  m.n = records.size();
  for (const auto& r : records) {
    m.intent_correct += r.gold_intent == r.pred_intent;
    m.em_correct += r.gold_intent == r.pred_intent && r.gold_tags == r.pred_tags;
  }
  m.intent_accuracy = intent_accuracy(records);
  m.semantic_em = semantic_em(records);
  m.slot_f1 = slot_f1(records, &m);
  return m;
}

// Slot-filling error decomposition. slot_type / slot_bound / slot_both are
// counted only among utterances whose predicted span count matches gold;
// spans are paired left to right; an utterance mixing error kinds (or with
// a pair wrong in both ways) lands in slot_both.
struct ErrorStats {
  std::string convention = "pairs:left-to-right;mixed:slot_both;v1";
  std::size_t n_utterance_err = 0;
  std::size_t n_slot_num = 0;
  std::size_t n_slot_type = 0;
  std::size_t n_slot_bound = 0;
  std::size_t n_slot_both = 0;

  nlohmann::json to_json() const {
    return {{"convention", convention},
            {"utterance", n_utterance_err},
            {"slot_num", n_slot_num},
            {"slot_type", n_slot_type},
            {"slot_bound", n_slot_bound},
            {"slot_both", n_slot_both}};
  }
};

inline ErrorStats error_statistics(const std::vector<PredictionRecord>& records) {
  ErrorStats stats;
  for (const auto& r : records) {
    if (r.gold_tags == r.pred_tags) continue;
    ++stats.n_utterance_err;
    const auto gold = extract_spans(r.gold_tags);
    const auto pred = extract_spans(r.pred_tags);
    if (gold.size() != pred.size()) {
      ++stats.n_slot_num;
      continue;
    }
    bool has_type = false, has_bound = false, has_both = false;
    for (std::size_t j = 0; j < gold.size(); ++j) {
      const bool bounds_match =
          gold[j].start == pred[j].start && gold[j].end == pred[j].end;
      const bool slots_match = gold[j].slot == pred[j].slot;
      if (bounds_match && !slots_match) has_type = true;
      if (!bounds_match && slots_match) has_bound = true;
      if (!bounds_match && !slots_match) has_both = true;
    }
    if (has_both || (has_type && has_bound))
      ++stats.n_slot_both;
    else if (has_type)
      ++stats.n_slot_type;
    else if (has_bound)
      ++stats.n_slot_bound;
  }
  return stats;
}

// One TSV row per utterance: id, locale, intent, then the d vector
// components at full precision.
inline void export_representations_tsv(
    const std::vector<std::tuple<std::string, std::string, std::string, Eigen::RowVectorXd>>&
        rows,
    const std::string& path) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write representation file: " + path);
  out << std::setprecision(17);
  const Eigen::Index d = rows.empty() ? 0 : std::get<3>(rows.front()).size();
  out << "id\tlocale\tintent";
  for (Eigen::Index i = 0; i < d; ++i) out << "\tv" << i;
  out << "\n";
  for (const auto& [id, locale, intent, vec] : rows) {
    out << id << "\t" << locale << "\t" << intent;
    for (Eigen::Index i = 0; i < vec.size(); ++i) out << "\t" << vec(i);
    out << "\n";
  }
}

inline void save_predictions_jsonl(const std::vector<PredictionRecord>& records,
                                   const std::string& path) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write predictions file: " + path);
  for (const auto& r : records) {
    nlohmann::json j{{"id", r.id}, {"intent", r.pred_intent}, {"slots", r.pred_tags}};
    out << j.dump() << "\n";
  }
}

}  // namespace slukit
