#pragma once

// Multi-level contrastive learning: utterance-level (L2 distance over
// projected [CLS] pairs, in-batch negatives), slot-level (KL between
// slot-affinity distributions, hard negatives from the pool), and
// word-level (cosine distance between projected label and word vectors,
// distance-weighted in-utterance negatives).

#include <array>
#include <optional>
#include <vector>

#include "slukit/autodiff.hpp"
#include "slukit/codeswitch.hpp"
#include "slukit/corpus.hpp"
#include "slukit/lajoint.hpp"
#include "slukit/negpool.hpp"

namespace slukit {

struct CLConfig {
  double r_u = 0.3, r_s = 0.3, r_w = 0.3;
  double lambda_u = 0.5, lambda_s = 0.5, lambda_w = 0.5;
  int n_w = 2;

  bool any_enabled() const { return lambda_u > 0 || lambda_s > 0 || lambda_w > 0; }

  void validate() const {
    if (r_u < 0 || r_s < 0 || r_w < 0) throw ConfigError("cl: margins must be >= 0");
    if (lambda_u < 0 || lambda_s < 0 || lambda_w < 0)
      throw ConfigError("cl: lambdas must be >= 0");
    if (n_w < 1) throw ConfigError("cl: n_w must be >= 1");
  }
};

// max(0, f_ap - f_an + r) where f is a distance (smaller = closer)
inline double triplet(double f_ap, double f_an, double r) {
  return std::max(0.0, f_ap - f_an + r);
}

inline ad::NodeRef triplet_node(ad::Graph& g, ad::NodeRef f_ap, ad::NodeRef f_an, double r) {
  return ad::relu(g, ad::add_const(g, ad::sub(g, f_ap, f_an), r));
}

// g(x) = relu(x W1) W2, no biases
inline ad::NodeRef projection_head(ad::Graph& g, ad::Parameter& w1, ad::Parameter& w2,
                                   ad::NodeRef x) {
  return ad::matmul(g, ad::relu(g, ad::matmul(g, x, g.param(w1))), g.param(w2));
}

inline ad::NodeRef euclidean(ad::Graph& g, ad::NodeRef a, ad::NodeRef b) {
  return ad::norm(g, ad::sub(g, a, b));
}

inline ad::NodeRef cosine_distance(ad::Graph& g, ad::NodeRef a, ad::NodeRef b) {
  if (a->value.norm() == 0.0 || b->value.norm() == 0.0)
    throw NumericError("cosine_distance: zero-norm projected vector");
  ad::NodeRef cos = ad::ew_div(g, ad::dot(g, a, b),
                               ad::ew_mul(g, ad::norm(g, a), ad::norm(g, b)));
  return ad::add_const(g, ad::scale(g, cos, -1.0), 1.0);
}

// KL(softmax(u) || softmax(v)) for 1 x K logit rows
inline ad::NodeRef kl_softmax(ad::Graph& g, ad::NodeRef u, ad::NodeRef v) {
  ad::NodeRef p = ad::softmax_rows(g, u);
  ad::NodeRef diff = ad::sub(g, ad::log_softmax_rows(g, u), ad::log_softmax_rows(g, v));
  return ad::sum_all(g, ad::ew_mul(g, p, diff));
}

// aff(z) = z Z_K^T, softmax-normalized to a K-dim distribution
inline ad::NodeRef affinity_distribution(ad::Graph& g, ad::NodeRef z, ad::NodeRef z_k) {
  return ad::softmax_rows(g, ad::matmul_nt(g, z, z_k));
}

// Mean-pooled encoder outputs over a span's token rows.
inline ad::NodeRef span_mean(ad::Graph& g, ad::NodeRef e_words, const SlotSpan& sp) {
  return ad::mean_rows(g, ad::slice_rows(g, e_words, static_cast<Eigen::Index>(sp.start),
                                         static_cast<Eigen::Index>(sp.end - sp.start + 1)));
}

// Utterance-level CL over a batch: every [CLS] (source and code-switched)
// anchors against its pair; all other 2(N-1) in-batch representations are
// negatives; mean of triplets over all (anchor, negative) pairs.
inline ad::NodeRef ucl_loss(ad::Graph& g, ad::Parameter& gu_w1, ad::Parameter& gu_w2,
                            const std::vector<ad::NodeRef>& src_cls,
                            const std::vector<ad::NodeRef>& cs_cls, double r_u,
                            std::size_t* warnings = nullptr) {
  const std::size_t N = src_cls.size();
  if (N != cs_cls.size()) throw NumericError("ucl_loss: batch size mismatch");
  if (N < 2) {
    if (warnings) ++*warnings;
    return g.scalar(0.0);
  }
  std::vector<ad::NodeRef> z_src(N), z_cs(N);
  for (std::size_t i = 0; i < N; ++i) {
    z_src[i] = projection_head(g, gu_w1, gu_w2, src_cls[i]);
    z_cs[i] = projection_head(g, gu_w1, gu_w2, cs_cls[i]);
  }
  std::vector<ad::NodeRef> terms;
  terms.reserve(2 * N * 2 * (N - 1));
  auto anchor_terms = [&](ad::NodeRef anchor, ad::NodeRef positive, std::size_t self) {
    ad::NodeRef f_ap = euclidean(g, anchor, positive);
    for (std::size_t j = 0; j < N; ++j) {
      if (j == self) continue;
      terms.push_back(triplet_node(g, f_ap, euclidean(g, anchor, z_src[j]), r_u));
      terms.push_back(triplet_node(g, f_ap, euclidean(g, anchor, z_cs[j]), r_u));
    }
  };
  for (std::size_t i = 0; i < N; ++i) {
    anchor_terms(z_src[i], z_cs[i], i);
    anchor_terms(z_cs[i], z_src[i], i);
  }
  return ad::mean_list(g, terms);
}

// Word-level negative sampling: tokens sharing the anchor's full BIO tag
// are masked; the rest are weighted by q_r = sin(1/|r-t|).
inline std::vector<std::pair<std::size_t, double>> wcl_candidate_probs(
    const std::vector<std::string>& tags, std::size_t t) {
  std::vector<std::pair<std::size_t, double>> out;
  double total = 0.0;
  for (std::size_t r = 0; r < tags.size(); ++r) {
    if (tags[r] == tags[t]) continue;
    const double q = std::sin(1.0 / std::abs(static_cast<double>(r) - static_cast<double>(t)));
    out.emplace_back(r, q);
    total += q;
  }
  for (auto& [idx, p] : out) p /= total;
  return out;
}

// Up to n_w indices without replacement (sequential renormalization).
inline std::vector<std::size_t> wcl_sample_negatives(const std::vector<std::string>& tags,
                                                     std::size_t t, int n_w, Rng& rng) {
  auto candidates = wcl_candidate_probs(tags, t);
  std::vector<std::size_t> picked;
  while (static_cast<int>(picked.size()) < n_w && !candidates.empty()) {
    double total = 0.0;
    for (const auto& [idx, p] : candidates) total += p;
    double x = uniform01(rng) * total;
    std::size_t chosen = candidates.size() - 1;
    for (std::size_t i = 0; i < candidates.size(); ++i) {
      x -= candidates[i].second;
      if (x <= 0.0) {
        chosen = i;
        break;
      }
    }
    picked.push_back(candidates[chosen].first);
    candidates.erase(candidates.begin() + static_cast<std::ptrdiff_t>(chosen));
  }
  return picked;
}

// Triplet around one anchor label vector: positive word vs sampled negative
// words, cosine distance, mean over negatives.
inline ad::NodeRef wcl_anchor_loss(ad::Graph& g, ad::NodeRef z_label, ad::NodeRef z_pos,
                                   const std::vector<ad::NodeRef>& z_negs, double r_w) {
  ad::NodeRef f_ap = cosine_distance(g, z_label, z_pos);
  std::vector<ad::NodeRef> terms;
  terms.reserve(z_negs.size());
  for (const auto& zn : z_negs)
    terms.push_back(triplet_node(g, f_ap, cosine_distance(g, z_label, zn), r_w));
  return ad::mean_list(g, terms);
}

// L = L_J + lambda1 L_u + lambda2 L_s + lambda3 L_w
inline ad::NodeRef total_loss(ad::Graph& g, ad::NodeRef l_j, ad::NodeRef l_u,
                              ad::NodeRef l_s, ad::NodeRef l_w, const CLConfig& cfg) {
  ad::NodeRef out = l_j;
  if (cfg.lambda_u > 0) out = ad::add(g, out, ad::scale(g, l_u, cfg.lambda_u));
  if (cfg.lambda_s > 0) out = ad::add(g, out, ad::scale(g, l_s, cfg.lambda_s));
  if (cfg.lambda_w > 0) out = ad::add(g, out, ad::scale(g, l_w, cfg.lambda_w));
  return out;
}

// --- batched step loss -------------------------------------------------------

struct WclAnchor {
  std::size_t token = 0;
  std::vector<std::size_t> negatives;
};

// Everything discrete a training step depends on, fixed up front so the
// loss is a deterministic function of the parameters (required by the
// finite-difference checks).
struct StepData {
  std::vector<Utterance> src;
  std::vector<SwitchedUtterance> cs;                     // aligned with src
  bool use_cs = true;
  std::vector<std::vector<NegativeUtterance>> negatives; // [i][n], may be empty
  std::vector<std::array<std::vector<WclAnchor>, 2>> wcl; // [i][pass]
};

// Samples negatives and word-level anchors for one batch. cs must already
// hold the epoch's switched counterparts of batch.
inline StepData prepare_step(const std::vector<Utterance>& batch,
                             const std::vector<SwitchedUtterance>& cs, bool use_cs,
                             const NegativePool* pool,
                             const std::vector<BilingualDictionary>& dicts,
                             const CodeSwitchConfig& cs_cfg, const CLConfig& cl,
                             int n_s, std::uint64_t step_seed) {
  StepData step;
  step.src = batch;
  step.cs = cs;
  step.use_cs = use_cs;
  step.negatives.resize(batch.size());
  step.wcl.resize(batch.size());
  for (std::size_t i = 0; i < batch.size(); ++i) {
    if (cl.lambda_s > 0 && use_cs && pool) {
      const auto spans = extract_spans(step.cs[i].as_utterance());
      if (!spans.empty()) {
        Rng rng = make_rng(step_seed, 0x10000 + i);
        step.negatives[i] = generate_negatives(step.cs[i], *pool, n_s, dicts, cs_cfg, rng);
      }
    }
    if (cl.lambda_w > 0) {
      Rng rng = make_rng(step_seed, 0x20000 + i);
      const int passes = use_cs ? 2 : 1;
      for (int pass = 0; pass < passes; ++pass) {
        for (std::size_t t = 0; t < batch[i].slots.size(); ++t) {
          if (batch[i].slots[t] == "O") continue;
          WclAnchor a;
          a.token = t;
          a.negatives = wcl_sample_negatives(batch[i].slots, t, cl.n_w, rng);
          if (!a.negatives.empty()) step.wcl[i][pass].push_back(std::move(a));
        }
      }
    }
  }
  return step;
}

struct StepLoss {
  ad::NodeRef total;
  ad::NodeRef l_intent, l_slot, l_j;  // joint pieces (batch-reduced)
  ad::NodeRef l_u, l_s, l_w;
  std::size_t warnings = 0;
};

inline StepLoss build_step_loss(ad::Graph& g, ModelParams& M, const StepData& step,
                                const CLConfig& cl, bool train = false,
                                Rng* dropout_rng = nullptr) {
  const std::size_t N = step.src.size();
  if (N == 0) throw DataError("build_step_loss: empty batch");
  StepLoss out;
  LabelEmbeddings L = embed_labels(g, M);

  std::vector<UtteranceGraph> src_graphs(N), cs_graphs;
  std::vector<ad::NodeRef> li_terms, ls_terms;
  for (std::size_t i = 0; i < N; ++i) {
    src_graphs[i] = build_utterance_graph(g, M, step.src[i].tokens, L, train, dropout_rng);
    JointLossParts p = joint_loss_parts(g, src_graphs[i], M.schema, step.src[i].intent,
                                        step.src[i].slots);
    li_terms.push_back(p.intent_loss);
    ls_terms.push_back(p.slot_loss);
  }
  if (step.use_cs) {
    cs_graphs.resize(N);
    for (std::size_t i = 0; i < N; ++i) {
      cs_graphs[i] = build_utterance_graph(g, M, step.cs[i].tokens, L, train, dropout_rng);
      JointLossParts p = joint_loss_parts(g, cs_graphs[i], M.schema,
                                          step.cs[i].base.intent, step.cs[i].base.slots);
      li_terms.push_back(p.intent_loss);
      ls_terms.push_back(p.slot_loss);
    }
  }
  // mean over utterances within a pass, then mean of the two passes; with
  // both passes present this is a flat mean over the 2N terms
  out.l_intent = ad::mean_list(g, li_terms);
  out.l_slot = ad::mean_list(g, ls_terms);
  out.l_j = ad::add(g, out.l_intent, out.l_slot);

  // utterance level
  if (cl.lambda_u > 0 && step.use_cs) {
    std::vector<ad::NodeRef> src_cls(N), cs_cls(N);
    for (std::size_t i = 0; i < N; ++i) {
      src_cls[i] = src_graphs[i].fw.e_cls;
      cs_cls[i] = cs_graphs[i].fw.e_cls;
    }
    out.l_u = ucl_loss(g, M.gu_w1, M.gu_w2, src_cls, cs_cls, cl.r_u, &out.warnings);
  } else {
    out.l_u = g.scalar(0.0);
  }

  // slot level
  if (cl.lambda_s > 0 && step.use_cs) {
    std::vector<ad::NodeRef> utt_terms;
    for (std::size_t i = 0; i < N; ++i) {
      if (step.negatives[i].empty()) {
        utt_terms.push_back(g.scalar(0.0));
        continue;
      }
      const auto src_spans = extract_spans(step.src[i]);
      const auto cs_spans = extract_spans(step.cs[i].as_utterance());
      ad::NodeRef z_k = projection_head(g, M.gs_w1, M.gs_w2, src_graphs[i].fw.e_slots);
      std::vector<ad::NodeRef> neg_words;
      std::vector<std::vector<SlotSpan>> neg_spans;
      for (const auto& neg : step.negatives[i]) {
        ModelInput in = assemble_input(neg.utterance.tokens, M, L);
        neg_words.push_back(laj_forward(g, M, in, train, dropout_rng).e_words);
        neg_spans.push_back(extract_spans(neg.utterance));
      }
      std::vector<ad::NodeRef> span_terms;
      for (std::size_t j = 0; j < src_spans.size(); ++j) {
        ad::NodeRef za = projection_head(g, M.gs_w1, M.gs_w2,
                                         span_mean(g, src_graphs[i].fw.e_words, src_spans[j]));
        ad::NodeRef zp = projection_head(g, M.gs_w1, M.gs_w2,
                                         span_mean(g, cs_graphs[i].fw.e_words, cs_spans[j]));
        ad::NodeRef aff_a = ad::matmul_nt(g, za, z_k);
        ad::NodeRef f_ap = kl_softmax(g, aff_a, ad::matmul_nt(g, zp, z_k));
        std::vector<ad::NodeRef> neg_terms;
        for (std::size_t n = 0; n < neg_words.size(); ++n) {
          ad::NodeRef zn = projection_head(g, M.gs_w1, M.gs_w2,
                                           span_mean(g, neg_words[n], neg_spans[n][j]));
          ad::NodeRef f_an = kl_softmax(g, aff_a, ad::matmul_nt(g, zn, z_k));
          neg_terms.push_back(triplet_node(g, f_ap, f_an, cl.r_s));
        }
        span_terms.push_back(ad::mean_list(g, neg_terms));
      }
      utt_terms.push_back(ad::mean_list(g, span_terms));
    }
    out.l_s = ad::mean_list(g, utt_terms);
  } else {
    out.l_s = g.scalar(0.0);
  }

  // word level
  if (cl.lambda_w > 0) {
    std::vector<ad::NodeRef> utt_terms;
    for (std::size_t i = 0; i < N; ++i) {
      std::vector<ad::NodeRef> pass_terms;
      const int passes = step.use_cs ? 2 : 1;
      for (int pass = 0; pass < passes; ++pass) {
        const UtteranceGraph& ug = pass == 0 ? src_graphs[i] : cs_graphs[i];
        std::vector<ad::NodeRef> anchor_terms;
        for (const auto& anchor : step.wcl[i][pass]) {
          const int bank_idx = M.schema.bio_index(step.src[i].slots[anchor.token]);
          if (bank_idx < 0) continue;
          ad::NodeRef z_label = projection_head(g, M.gw_w1, M.gw_w2,
                                                ad::row(g, ug.h_bank, bank_idx));
          ad::NodeRef z_pos = projection_head(
              g, M.gw_w1, M.gw_w2,
              ad::row(g, ug.h_words, static_cast<Eigen::Index>(anchor.token)));
          std::vector<ad::NodeRef> z_negs;
          for (std::size_t r : anchor.negatives)
            z_negs.push_back(projection_head(
                g, M.gw_w1, M.gw_w2,
                ad::row(g, ug.h_words, static_cast<Eigen::Index>(r))));
          anchor_terms.push_back(wcl_anchor_loss(g, z_label, z_pos, z_negs, cl.r_w));
        }
        pass_terms.push_back(ad::mean_list(g, anchor_terms));
      }
      utt_terms.push_back(ad::mean_list(g, pass_terms));
    }
    out.l_w = ad::mean_list(g, utt_terms);
  } else {
    out.l_w = g.scalar(0.0);
  }

  out.total = total_loss(g, out.l_j, out.l_u, out.l_s, out.l_w, cl);
  return out;
}

}  // namespace slukit
