#pragma once

// Label-aware joint model. The input concatenates [CLS], the three
// abstract labels, the K slot names, [SEP] and the utterance; label
// positions enter as injected text embeddings so the labels and the words
// attend to each other. Slot scoring matches words against a compressed,
// projected bank of 2K+1 BIO label vectors.

#include <string>
#include <vector>

#include "slukit/autodiff.hpp"
#include "slukit/common.hpp"
#include "slukit/corpus.hpp"
#include "slukit/encoder.hpp"
#include "slukit/negpool.hpp"

namespace slukit {

struct LajointConfig {
  // Ablation switches. Without the compressor, BIO label vectors fall back
  // to the mean of the abstract-label and slot vectors; without the
  // projector, H = E. Both off together give the plain zero-shot joint path.
  bool identity_compressor = false;
  bool identity_projector = false;
};

struct ModelParams {
  EncoderParams enc;
  ad::Parameter w_cb, b_cb, w_ci, b_ci;    // label compressor, 2d -> d
  ad::Parameter w_p, b_p;                  // projector, d -> d
  ad::Parameter w_int, b_int;              // intent head, d -> |intents|
  ad::Parameter gu_w1, gu_w2;              // contrastive projection heads, d -> d
  ad::Parameter gs_w1, gs_w2;
  ad::Parameter gw_w1, gw_w2;
  LajointConfig laj;
  SlotSchema schema;
  Vocabulary vocab;

  void init(const EncoderConfig& ec, const SlotSchema& sc, const Vocabulary& vc,
            const LajointConfig& lc = {}) {
    schema = sc;
    vocab = vc;
    laj = lc;
    EncoderConfig cfg = ec;
    cfg.vocab_size = static_cast<int>(vc.size());
    enc.init(cfg);
    const int d = cfg.dim;
    Rng rng = make_rng(cfg.seed, 0x4eadULL);
    auto weight = [&](ad::Parameter& p, const std::string& name, int r, int c) {
      p.name = name;
      p.value = detail::randn(rng, r, c, 0.02);
      p.init_state();
    };
    auto zeros = [&](ad::Parameter& p, const std::string& name, int c) {
      p.name = name;
      p.value = ad::Matrix::Zero(1, c);
      p.init_state();
    };
    weight(w_cb, "laj.w_cb", 2 * d, d);  zeros(b_cb, "laj.b_cb", d);
    weight(w_ci, "laj.w_ci", 2 * d, d);  zeros(b_ci, "laj.b_ci", d);
    weight(w_p, "laj.w_p", d, d);        zeros(b_p, "laj.b_p", d);
    weight(w_int, "laj.w_int", d, static_cast<int>(sc.intents.size()));
    zeros(b_int, "laj.b_int", static_cast<int>(sc.intents.size()));
    weight(gu_w1, "mcl.gu.w1", d, d);
    weight(gu_w2, "mcl.gu.w2", d, d);
    weight(gs_w1, "mcl.gs.w1", d, d);
    weight(gs_w2, "mcl.gs.w2", d, d);
    weight(gw_w1, "mcl.gw.w1", d, d);
    weight(gw_w2, "mcl.gw.w2", d, d);
  }

  std::vector<ad::Parameter*> encoder_params() { return enc.all(); }

  std::vector<ad::Parameter*> head_params() {
    return {&w_cb, &b_cb, &w_ci, &b_ci, &w_p, &b_p, &w_int, &b_int,
            &gu_w1, &gu_w2, &gs_w1, &gs_w2, &gw_w1, &gw_w2};
  }

  std::vector<ad::Parameter*> all() {
    auto out = encoder_params();
    for (auto* p : head_params()) out.push_back(p);
    return out;
  }
};

// Text embeddings for the 3 abstract labels and the K slot names, built
// once per graph and shared by every forward in the step. They depend on
// the current encoder weights, so gradient flows through them.
struct LabelEmbeddings {
  ad::NodeRef s_o, s_b, s_i;
  std::vector<ad::NodeRef> slot_vecs;  // K entries in schema order
};

inline LabelEmbeddings embed_labels(ad::Graph& g, ModelParams& M) {
  LabelEmbeddings L;
  auto embed_text = [&](const std::string& text) {
    return embed_label_text(g, M.enc, M.vocab.encode(split_ws(text)));
  };
  L.s_o = embed_text(M.schema.abstract_labels[0]);
  L.s_b = embed_text(M.schema.abstract_labels[1]);
  L.s_i = embed_text(M.schema.abstract_labels[2]);
  for (const auto& slot : M.schema.slots)
    L.slot_vecs.push_back(embed_label_text(g, M.enc, M.vocab.encode(tokenize_slot_name(slot))));
  return L;
}

// Assembled sequence of length 5+K+T with its region offsets:
// [CLS] s_O s_B s_I s_1..s_K [SEP] x_1..x_T
struct ModelInput {
  std::vector<InputPosition> positions;
  std::size_t n_slots = 0;  // K
  std::size_t n_words = 0;  // T

  std::size_t cls_at() const { return 0; }
  std::size_t abstract_at() const { return 1; }
  std::size_t slots_at() const { return 4; }
  std::size_t sep_at() const { return 4 + n_slots; }
  std::size_t words_at() const { return 5 + n_slots; }
  std::size_t length() const { return 5 + n_slots + n_words; }
};

inline ModelInput assemble_input(const std::vector<std::string>& word_tokens,
                                 const ModelParams& M, const LabelEmbeddings& L) {
  if (word_tokens.empty()) throw DataError("assemble_input: empty utterance");
  ModelInput in;
  in.n_slots = M.schema.slots.size();
  in.n_words = word_tokens.size();
  if (in.length() > static_cast<std::size_t>(M.enc.cfg.max_len))
    throw DataError("assemble_input: sequence length " + std::to_string(in.length()) +
                    " exceeds encoder max " + std::to_string(M.enc.cfg.max_len));
  in.positions.reserve(in.length());
  in.positions.emplace_back(Vocabulary::kCls);
  in.positions.emplace_back(L.s_o);
  in.positions.emplace_back(L.s_b);
  in.positions.emplace_back(L.s_i);
  for (const auto& v : L.slot_vecs) in.positions.emplace_back(v);
  in.positions.emplace_back(Vocabulary::kSep);
  for (const auto& w : word_tokens) in.positions.emplace_back(M.vocab.get(w));
  return in;
}

// Region slices of the top-layer encoder output.
struct ForwardOut {
  ad::NodeRef e_cls;    // 1 x d
  ad::NodeRef e_o, e_b, e_i;
  ad::NodeRef e_slots;  // K x d
  ad::NodeRef e_words;  // T x d
};

inline ForwardOut laj_forward(ad::Graph& g, ModelParams& M, const ModelInput& in,
                              bool train = false, Rng* dropout_rng = nullptr) {
  EncoderOutput enc_out = encode(g, M.enc, in.positions, train, dropout_rng);
  const ad::NodeRef& top = enc_out.top();
  ForwardOut out;
  out.e_cls = ad::row(g, top, 0);
  out.e_o = ad::row(g, top, 1);
  out.e_b = ad::row(g, top, 2);
  out.e_i = ad::row(g, top, 3);
  out.e_slots = ad::slice_rows(g, top, static_cast<Eigen::Index>(in.slots_at()),
                               static_cast<Eigen::Index>(in.n_slots));
  out.e_words = ad::slice_rows(g, top, static_cast<Eigen::Index>(in.words_at()),
                               static_cast<Eigen::Index>(in.n_words));
  return out;
}

// E^B_k = (E_B || E_k) W_cb + b_cb and likewise for I, batched over the K
// slots. Identity ablation: mean of the two inputs.
struct CompressedLabels {
  ad::NodeRef b_rows;  // K x d
  ad::NodeRef i_rows;  // K x d
};

inline CompressedLabels compress_labels(ad::Graph& g, ModelParams& M, ad::NodeRef e_b,
                                        ad::NodeRef e_i, ad::NodeRef e_slots) {
  const Eigen::Index K = e_slots->value.rows();
  CompressedLabels out;
  if (M.laj.identity_compressor) {
    out.b_rows = ad::scale(g, ad::add(g, ad::repeat_row(g, e_b, K), e_slots), 0.5);
    out.i_rows = ad::scale(g, ad::add(g, ad::repeat_row(g, e_i, K), e_slots), 0.5);
    return out;
  }
  ad::NodeRef in_b = ad::hstack(g, {ad::repeat_row(g, e_b, K), e_slots});
  ad::NodeRef in_i = ad::hstack(g, {ad::repeat_row(g, e_i, K), e_slots});
  out.b_rows = ad::linear(g, in_b, g.param(M.w_cb), g.param(M.b_cb));
  out.i_rows = ad::linear(g, in_i, g.param(M.w_ci), g.param(M.b_ci));
  return out;
}

inline ad::NodeRef project(ad::Graph& g, ModelParams& M, ad::NodeRef e) {
  if (M.laj.identity_projector) return e;
  return ad::linear(g, e, g.param(M.w_p), g.param(M.b_p));
}

// Projected label bank in bio_labels() order: [O, B-s1, I-s1, ...],
// (2K+1) x d.
inline ad::NodeRef label_bank(ad::Graph& g, ModelParams& M, const ForwardOut& fw) {
  CompressedLabels c = compress_labels(g, M, fw.e_b, fw.e_i, fw.e_slots);
  const Eigen::Index K = fw.e_slots->value.rows();
  std::vector<ad::NodeRef> rows;
  rows.reserve(2 * K + 1);
  rows.push_back(fw.e_o);
  for (Eigen::Index k = 0; k < K; ++k) {
    rows.push_back(ad::row(g, c.b_rows, k));
    rows.push_back(ad::row(g, c.i_rows, k));
  }
  return project(g, M, ad::vstack(g, rows));
}

// p^S_t = softmax(H_t {||H_k||_2}^T): label rows are L2-normalized, word
// rows are not.
inline ad::NodeRef slot_logits(ad::Graph& g, ad::NodeRef h_words, ad::NodeRef h_bank) {
  return ad::matmul_nt(g, h_words, ad::l2_normalize_rows(g, h_bank));
}

inline ad::NodeRef intent_logits(ad::Graph& g, ModelParams& M, ad::NodeRef e_cls) {
  return ad::linear(g, e_cls, g.param(M.w_int), g.param(M.b_int));
}

// Intent and slot cross entropies for one utterance (not yet batch-reduced).
struct JointLossParts {
  ad::NodeRef intent_loss;  // scalar
  ad::NodeRef slot_loss;    // scalar, summed over tokens
};

struct UtteranceGraph {
  ForwardOut fw;
  ad::NodeRef h_words;      // T x d
  ad::NodeRef h_bank;       // (2K+1) x d
  ad::NodeRef slot_lg;      // T x (2K+1)
  ad::NodeRef intent_lg;    // 1 x |intents|
};

inline UtteranceGraph build_utterance_graph(ad::Graph& g, ModelParams& M,
                                            const std::vector<std::string>& tokens,
                                            const LabelEmbeddings& L, bool train = false,
                                            Rng* dropout_rng = nullptr) {
  UtteranceGraph u;
  ModelInput in = assemble_input(tokens, M, L);
  u.fw = laj_forward(g, M, in, train, dropout_rng);
  u.h_words = project(g, M, u.fw.e_words);
  u.h_bank = label_bank(g, M, u.fw);
  u.slot_lg = slot_logits(g, u.h_words, u.h_bank);
  u.intent_lg = intent_logits(g, M, u.fw.e_cls);
  return u;
}

inline JointLossParts joint_loss_parts(ad::Graph& g, const UtteranceGraph& u,
                                       const SlotSchema& schema, const std::string& intent,
                                       const std::vector<std::string>& tags) {
  JointLossParts parts;
  const int gold_intent = schema.intent_index(intent);
  if (gold_intent < 0) throw DataError("joint_loss: unknown intent " + intent);
  parts.intent_loss = ad::cross_entropy_rows(g, u.intent_lg, {gold_intent});
  std::vector<int> golds;
  golds.reserve(tags.size());
  for (const auto& t : tags) {
    const int idx = schema.bio_index(t);
    if (idx < 0) throw DataError("joint_loss: unknown tag " + t);
    golds.push_back(idx);
  }
  parts.slot_loss = ad::cross_entropy_rows(g, u.slot_lg, std::move(golds));
  return parts;
}

struct Prediction {
  std::string intent;
  std::vector<std::string> tags;       // lenient-repaired
  std::size_t repairs = 0;
};

// Greedy decode: argmax intent, per-token argmax tag, orphan I- repair.
inline Prediction predict(ModelParams& M, const std::vector<std::string>& tokens) {
  ad::Graph g;
  LabelEmbeddings L = embed_labels(g, M);
  UtteranceGraph u = build_utterance_graph(g, M, tokens, L, false, nullptr);
  Prediction out;
  Eigen::Index best_intent = 0;
  u.intent_lg->value.row(0).maxCoeff(&best_intent);
  out.intent = M.schema.intents[static_cast<std::size_t>(best_intent)];
  const auto bio = M.schema.bio_labels();
  for (Eigen::Index t = 0; t < u.slot_lg->value.rows(); ++t) {
    Eigen::Index best = 0;
    u.slot_lg->value.row(t).maxCoeff(&best);
    out.tags.push_back(bio[static_cast<std::size_t>(best)]);
  }
  out.repairs = repair_bio(out.tags);
  return out;
}

// Evaluation-mode distributions for one utterance (softmax of the logits).
struct Distributions {
  Eigen::RowVectorXd intent;            // |intents|
  ad::Matrix slots;                     // T x (2K+1)
  ad::Matrix cls;                       // 1 x d encoder output of [CLS]
};

inline Distributions predict_distributions(ModelParams& M,
                                           const std::vector<std::string>& tokens) {
  ad::Graph g;
  LabelEmbeddings L = embed_labels(g, M);
  UtteranceGraph u = build_utterance_graph(g, M, tokens, L, false, nullptr);
  Distributions out;
  out.intent = ad::softmax_rows(g, u.intent_lg)->value.row(0);
  out.slots = ad::softmax_rows(g, u.slot_lg)->value;
  out.cls = u.fw.e_cls->value;
  return out;
}

}  // namespace slukit
