#pragma once

// From-scratch transformer encoder (post-LN, learned absolute positions,
// GELU feed-forward) exposing every layer's hidden states, plus the
// label-text embedding used to seed label positions in the joint model.

#include <map>
#include <string>
#include <variant>
#include <vector>

#include <nlohmann/json.hpp>

#include "slukit/autodiff.hpp"
#include "slukit/common.hpp"

namespace slukit {

struct Vocabulary {
  // reserved ids
  static constexpr int kPad = 0;
  static constexpr int kUnk = 1;
  static constexpr int kCls = 2;
  static constexpr int kSep = 3;

  std::vector<std::string> id_to_token{"[PAD]", "[UNK]", "[CLS]", "[SEP]"};
  std::map<std::string, int> token_to_id{
      {"[PAD]", kPad}, {"[UNK]", kUnk}, {"[CLS]", kCls}, {"[SEP]", kSep}};

  int add(const std::string& token) {
    auto it = token_to_id.find(token);
    if (it != token_to_id.end()) return it->second;
    int id = static_cast<int>(id_to_token.size());
    id_to_token.push_back(token);
    token_to_id.emplace(token, id);
    return id;
  }

  int get(const std::string& token) const {
    auto it = token_to_id.find(token);
    return it == token_to_id.end() ? kUnk : it->second;
  }

  std::vector<int> encode(const std::vector<std::string>& tokens) const {
    std::vector<int> ids;
    ids.reserve(tokens.size());
    for (const auto& t : tokens) ids.push_back(get(t));
    return ids;
  }

  std::size_t size() const { return id_to_token.size(); }

  nlohmann::json to_json() const { return nlohmann::json(id_to_token); }

  static Vocabulary from_json(const nlohmann::json& j) {
    Vocabulary v;
    v.id_to_token = j.get<std::vector<std::string>>();
    v.token_to_id.clear();
    for (std::size_t i = 0; i < v.id_to_token.size(); ++i)
      v.token_to_id.emplace(v.id_to_token[i], static_cast<int>(i));
    return v;
  }
};

struct EncoderConfig {
  int layers = 2;
  int dim = 32;
  int heads = 2;
  int ff_dim = 64;
  int max_len = 128;
  int vocab_size = 0;
  double dropout = 0.1;
  std::uint64_t seed = 42;

  void validate() const {
    if (layers < 1) throw ConfigError("encoder: layers must be >= 1");
    if (dim < 1 || heads < 1 || dim % heads != 0)
      throw ConfigError("encoder: heads must divide dim");
    if (ff_dim < 1 || max_len < 1 || vocab_size < 5)
      throw ConfigError("encoder: bad dimensions");
    if (dropout < 0.0 || dropout >= 1.0) throw ConfigError("encoder: dropout out of range");
  }
};

namespace detail {
inline ad::Matrix randn(Rng& rng, Eigen::Index r, Eigen::Index c, double stddev) {
  std::normal_distribution<double> dist(0.0, stddev);
  ad::Matrix m(r, c);
  for (Eigen::Index i = 0; i < r; ++i)
    for (Eigen::Index j = 0; j < c; ++j) m(i, j) = dist(rng);
  return m;
}
}  // namespace detail

struct EncoderParams {
  EncoderConfig cfg;

  ad::Parameter tok_emb, pos_emb, emb_ln_g, emb_ln_b;
  struct Layer {
    ad::Parameter wq, bq, wk, bk, wv, bv, wo, bo;
    ad::Parameter ln1_g, ln1_b;
    ad::Parameter wf1, bf1, wf2, bf2;
    ad::Parameter ln2_g, ln2_b;
  };
  std::vector<Layer> layers;

  void init(const EncoderConfig& c) {
    c.validate();
    cfg = c;
    Rng rng = make_rng(cfg.seed, 0x5eed);
    const int d = cfg.dim;
    auto weight = [&](ad::Parameter& p, const std::string& name, int r, int cc) {
      p.name = name;
      p.value = detail::randn(rng, r, cc, 0.02);
      p.init_state();
    };
    auto fill = [&](ad::Parameter& p, const std::string& name, int cc, double v) {
      p.name = name;
      p.value = ad::Matrix::Constant(1, cc, v);
      p.init_state();
    };
    weight(tok_emb, "enc.tok_emb", cfg.vocab_size, d);
    weight(pos_emb, "enc.pos_emb", cfg.max_len, d);
    fill(emb_ln_g, "enc.emb_ln.g", d, 1.0);
    fill(emb_ln_b, "enc.emb_ln.b", d, 0.0);
    layers.resize(cfg.layers);
    for (int l = 0; l < cfg.layers; ++l) {
      const std::string pre = "enc.layer" + std::to_string(l) + ".";
      Layer& L = layers[l];
      weight(L.wq, pre + "wq", d, d);  fill(L.bq, pre + "bq", d, 0.0);
      weight(L.wk, pre + "wk", d, d);  fill(L.bk, pre + "bk", d, 0.0);
      weight(L.wv, pre + "wv", d, d);  fill(L.bv, pre + "bv", d, 0.0);
      weight(L.wo, pre + "wo", d, d);  fill(L.bo, pre + "bo", d, 0.0);
      fill(L.ln1_g, pre + "ln1.g", d, 1.0);
      fill(L.ln1_b, pre + "ln1.b", d, 0.0);
      weight(L.wf1, pre + "wf1", d, cfg.ff_dim);
      fill(L.bf1, pre + "bf1", cfg.ff_dim, 0.0);
      weight(L.wf2, pre + "wf2", cfg.ff_dim, d);
      fill(L.bf2, pre + "bf2", d, 0.0);
      fill(L.ln2_g, pre + "ln2.g", d, 1.0);
      fill(L.ln2_b, pre + "ln2.b", d, 0.0);
    }
  }

  std::vector<ad::Parameter*> all() {
    std::vector<ad::Parameter*> out{&tok_emb, &pos_emb, &emb_ln_g, &emb_ln_b};
    for (auto& L : layers) {
      for (ad::Parameter* p : {&L.wq, &L.bq, &L.wk, &L.bk, &L.wv, &L.bv, &L.wo, &L.bo,
                               &L.ln1_g, &L.ln1_b, &L.wf1, &L.bf1, &L.wf2, &L.bf2,
                               &L.ln2_g, &L.ln2_b})
        out.push_back(p);
    }
    return out;
  }
};

// A position carries either a vocabulary id or an externally supplied
// d-dim embedding node (used for label positions).
using InputPosition = std::variant<int, ad::NodeRef>;

struct EncoderOutput {
  // L+1 entries; hidden[0] is the embedding-layer output.
  std::vector<ad::NodeRef> hidden;

  const ad::NodeRef& top() const { return hidden.back(); }
};

// Full-sequence self-attention encoder forward. Deterministic whenever
// train == false or dropout == 0.
inline EncoderOutput encode(ad::Graph& g, EncoderParams& P,
                            const std::vector<InputPosition>& input, bool train = false,
                            Rng* dropout_rng = nullptr) {
  const int T = static_cast<int>(input.size());
  if (T == 0) throw DataError("encode: empty input");
  if (T > P.cfg.max_len)
    throw DataError("encode: input length " + std::to_string(T) + " exceeds max " +
                    std::to_string(P.cfg.max_len));
  const int d = P.cfg.dim;
  const int h = P.cfg.heads;
  const int dh = d / h;
  const double drop = train ? P.cfg.dropout : 0.0;
  if (drop > 0.0 && !dropout_rng) throw NumericError("encode: dropout needs an rng");

  ad::NodeRef tok_table = g.param(P.tok_emb);

  // Assemble the input matrix from id runs and injected rows.
  std::vector<ad::NodeRef> pieces;
  std::vector<int> run;
  auto flush = [&]() {
    if (!run.empty()) {
      pieces.push_back(ad::gather_rows(g, tok_table, run));
      run.clear();
    }
  };
  for (const auto& pos : input) {
    if (std::holds_alternative<int>(pos)) {
      run.push_back(std::get<int>(pos));
    } else {
      flush();
      const auto& n = std::get<ad::NodeRef>(pos);
      if (n->value.rows() != 1 || n->value.cols() != d)
        throw NumericError("encode: injected embedding must be 1 x dim");
      pieces.push_back(n);
    }
  }
  flush();
  ad::NodeRef x = pieces.size() == 1 ? pieces[0] : ad::vstack(g, pieces);
  x = ad::add(g, x, ad::slice_rows(g, g.param(P.pos_emb), 0, T));
  x = ad::layernorm_rows(g, x, g.param(P.emb_ln_g), g.param(P.emb_ln_b));
  if (drop > 0.0) x = ad::dropout(g, x, drop, *dropout_rng);

  EncoderOutput out;
  out.hidden.push_back(x);
  const double scale = 1.0 / std::sqrt(static_cast<double>(dh));
  for (auto& L : P.layers) {
    ad::NodeRef q = ad::linear(g, x, g.param(L.wq), g.param(L.bq));
    ad::NodeRef k = ad::linear(g, x, g.param(L.wk), g.param(L.bk));
    ad::NodeRef v = ad::linear(g, x, g.param(L.wv), g.param(L.bv));
    std::vector<ad::NodeRef> ctx;
    for (int i = 0; i < h; ++i) {
      ad::NodeRef qi = ad::slice_cols(g, q, i * dh, dh);
      ad::NodeRef ki = ad::slice_cols(g, k, i * dh, dh);
      ad::NodeRef vi = ad::slice_cols(g, v, i * dh, dh);
      ad::NodeRef scores = ad::scale(g, ad::matmul_nt(g, qi, ki), scale);
      ad::NodeRef probs = ad::softmax_rows(g, scores);
      if (drop > 0.0) probs = ad::dropout(g, probs, drop, *dropout_rng);
      ctx.push_back(ad::matmul(g, probs, vi));
    }
    ad::NodeRef attn = ctx.size() == 1 ? ctx[0] : ad::hstack(g, ctx);
    attn = ad::linear(g, attn, g.param(L.wo), g.param(L.bo));
    if (drop > 0.0) attn = ad::dropout(g, attn, drop, *dropout_rng);
    ad::NodeRef x1 = ad::layernorm_rows(g, ad::add(g, x, attn), g.param(L.ln1_g),
                                        g.param(L.ln1_b));
    ad::NodeRef f = ad::gelu(g, ad::linear(g, x1, g.param(L.wf1), g.param(L.bf1)));
    f = ad::linear(g, f, g.param(L.wf2), g.param(L.bf2));
    if (drop > 0.0) f = ad::dropout(g, f, drop, *dropout_rng);
    x = ad::layernorm_rows(g, ad::add(g, x1, f), g.param(L.ln2_g), g.param(L.ln2_b));
    out.hidden.push_back(x);
  }
  return out;
}

inline EncoderOutput encode_ids(ad::Graph& g, EncoderParams& P, const std::vector<int>& ids,
                                bool train = false, Rng* dropout_rng = nullptr) {
  std::vector<InputPosition> input(ids.begin(), ids.end());
  return encode(g, P, input, train, dropout_rng);
}

// Label text -> one unit-norm d-dim vector: encode the tokens alone, mean
// the hidden states of the bottom min(3, L+1) layers per token, mean over
// tokens, L2-normalize. Runs without dropout (it seeds input embeddings).
inline ad::NodeRef embed_label_text(ad::Graph& g, EncoderParams& P,
                                    const std::vector<int>& token_ids) {
  if (token_ids.empty()) throw DataError("embed_label_text: empty token list");
  EncoderOutput out = encode_ids(g, P, token_ids, false, nullptr);
  const int n_layers = std::min<int>(3, static_cast<int>(out.hidden.size()));
  std::vector<ad::NodeRef> bottom(out.hidden.begin(), out.hidden.begin() + n_layers);
  ad::NodeRef acc = bottom[0];
  for (int l = 1; l < n_layers; ++l) acc = ad::add(g, acc, bottom[l]);
  acc = ad::scale(g, acc, 1.0 / n_layers);
  return ad::l2_normalize_rows(g, ad::mean_rows(g, acc));
}

}  // namespace slukit
