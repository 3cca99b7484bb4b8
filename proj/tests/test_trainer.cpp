#include <catch_amalgamated.hpp>

#include <filesystem>

#include "slukit/toy.hpp"
#include "slukit/trainer.hpp"

using namespace slukit;

namespace {

Dataset mini_corpus() {
  Dataset d;
  d.schema.slots = {"x", "y"};
  d.schema.intents = {"go", "stop"};
  d.split = "train";
  auto add = [&](const std::string& intent, std::vector<std::string> toks,
                 std::vector<std::string> tags) {
    Utterance u;
    u.id = "u" + std::to_string(d.size());
    u.locale = "en";
    u.intent = intent;
    u.tokens = std::move(toks);
    u.slots = std::move(tags);
    d.utterances.push_back(u);
  };
  add("go", {"move", "to", "alpha"}, {"O", "O", "B-x"});
  add("go", {"move", "to", "beta"}, {"O", "O", "B-x"});
  add("go", {"walk", "toward", "gamma"}, {"O", "O", "B-x"});
  add("stop", {"halt", "at", "delta"}, {"O", "O", "B-y"});
  add("stop", {"halt", "at", "epsilon"}, {"O", "O", "B-y"});
  add("stop", {"brake", "near", "zeta"}, {"O", "O", "B-y"});
  add("go", {"move", "to", "gamma"}, {"O", "O", "B-x"});
  add("stop", {"brake", "near", "delta"}, {"O", "O", "B-y"});
  return d;
}

std::vector<BilingualDictionary> mini_dicts() {
  BilingualDictionary d;
  d.source_locale = "en";
  d.target_locale = "xx";
  for (const auto& w : {"move", "to", "alpha", "beta", "gamma", "halt", "at", "delta",
                        "epsilon", "walk", "toward", "brake", "near", "zeta"})
    d.entries[w] = {"xx_" + std::string(w)};
  return {d};
}

ModelParams mini_model(const Dataset& d, const std::vector<BilingualDictionary>& dicts,
                       std::uint64_t seed = 7) {
  Vocabulary v;
  for (const auto& u : d.utterances)
    for (const auto& t : u.tokens) v.add(t);
  for (const auto& dict : dicts)
    for (const auto& [s, ts] : dict.entries)
      for (const auto& t : ts) v.add(t);
  for (const auto& w : {"outside", "begin", "inside", "x", "y"}) v.add(w);
  EncoderConfig ec;
  ec.layers = 1;
  ec.dim = 16;
  ec.heads = 2;
  ec.ff_dim = 32;
  ec.max_len = 32;
  ec.dropout = 0.0;
  ec.seed = seed;
  ModelParams m;
  m.init(ec, d.schema, v);
  return m;
}

TrainConfig fast_config() {
  TrainConfig cfg;
  cfg.batch_size = 4;
  cfg.epochs = 3;
  cfg.lr_encoder = 3e-3;
  cfg.lr_heads = 3e-3;
  cfg.seed = 11;
  cfg.pool.p_v = 5;
  cfg.pool.p_s = 1;
  cfg.pool.n_s = 1;
  cfg.cl.n_w = 1;
  return cfg;
}

}  // namespace

TEST_CASE("linear schedule: warmup peak, zero at final step, pointwise linear") {
  LinearSchedule s(100, 0.10);
  REQUIRE(s.warmup_steps == 10);
  REQUIRE(s.factor(10) == 1.0);
  REQUIRE(s.factor(100) == 0.0);
  REQUIRE(s.factor(5) == Catch::Approx(0.5).epsilon(1e-12));
  REQUIRE(s.factor(55) == Catch::Approx(0.5).epsilon(1e-12));
  for (std::size_t t = 2; t < 10; ++t)
    REQUIRE(s.factor(t) - s.factor(t - 1) == Catch::Approx(0.1).epsilon(1e-9));
  for (std::size_t t = 12; t <= 100; ++t)
    REQUIRE(s.factor(t - 1) - s.factor(t) == Catch::Approx(1.0 / 90).epsilon(1e-9));
}

TEST_CASE("adamw matches a hand-stepped update") {
  ad::Parameter p;
  p.name = "w";
  p.value = ad::Matrix::Constant(1, 1, 2.0);
  p.init_state();
  p.grad(0, 0) = 0.5;
  AdamW opt;
  opt.weight_decay = 0.01;
  opt.step({{&p, 0.1}}, 1.0);
  // t=1: m=0.05, v=0.00025*... compute directly
  const double m = 0.1 * 0.5, v = 0.001 * 0.25;
  const double mhat = m / (1 - 0.9), vhat = v / (1 - 0.999);
  double want = 2.0 - 0.1 * (mhat / (std::sqrt(vhat) + 1e-8));
  want -= 0.1 * 0.01 * want;
  REQUIRE(p.value(0, 0) == Catch::Approx(want).epsilon(1e-12));
}

TEST_CASE("gradient clipping rescales to the max norm") {
  ad::Parameter a, b;
  a.value = ad::Matrix::Zero(1, 2);
  b.value = ad::Matrix::Zero(1, 2);
  a.init_state();
  b.init_state();
  a.grad << 3.0, 0.0;
  b.grad << 0.0, 4.0;
  const double gn = clip_gradients({&a, &b}, 1.0);
  REQUIRE(gn == Catch::Approx(5.0));
  REQUIRE(a.grad(0, 0) == Catch::Approx(0.6));
  REQUIRE(b.grad(0, 1) == Catch::Approx(0.8));
  // under the limit: untouched
  a.grad << 0.1, 0.0;
  b.grad << 0.0, 0.1;
  clip_gradients({&a, &b}, 1.0);
  REQUIRE(a.grad(0, 0) == 0.1);
}

TEST_CASE("subsample: identity at 1.0, ceil sizing, seeded determinism") {
  Dataset d = mini_corpus();
  REQUIRE(subsample(d, 1.0, 3).size() == d.size());
  REQUIRE(subsample(d, 0.5, 3).size() == 4);
  REQUIRE(subsample(d, 0.3, 3).size() == 3);  // ceil(2.4)
  auto a = subsample(d, 0.5, 3);
  auto b = subsample(d, 0.5, 3);
  auto c = subsample(d, 0.5, 4);
  REQUIRE(a.utterances.size() == b.utterances.size());
  for (std::size_t i = 0; i < a.size(); ++i)
    REQUIRE(a.utterances[i].id == b.utterances[i].id);
  bool differs = a.size() != c.size();
  for (std::size_t i = 0; !differs && i < a.size(); ++i)
    differs = a.utterances[i].id != c.utterances[i].id;
  REQUIRE(differs);
  REQUIRE_THROWS_AS(subsample(d, 0.0, 1), ConfigError);
}

TEST_CASE("zsjoint degeneration trains single-pass and loss decreases") {
  Dataset d = mini_corpus();
  ModelParams m = mini_model(d, {});
  m.laj.identity_compressor = true;
  m.laj.identity_projector = true;
  TrainConfig cfg = fast_config();
  cfg.epochs = 12;
  cfg.cs.sentence_ratio = 0.0;
  cfg.cl.lambda_u = cfg.cl.lambda_s = cfg.cl.lambda_w = 0.0;
  REQUIRE_FALSE(cfg.use_cs());
  TrainState st = train(d, d, {}, m, cfg);
  REQUIRE(st.log.front().l_u == 0.0);
  REQUIRE(st.log.back().total < st.log.front().total);
  REQUIRE(st.best_valid_em >= 0.0);
}

TEST_CASE("full pipeline trains with all losses and identical seeds match bitwise") {
  Dataset d = mini_corpus();
  auto dicts = mini_dicts();
  TrainConfig cfg = fast_config();

  ModelParams m1 = mini_model(d, dicts);
  TrainState s1 = train(d, d, dicts, m1, cfg);
  ModelParams m2 = mini_model(d, dicts);
  TrainState s2 = train(d, d, dicts, m2, cfg);

  REQUIRE(s1.log.size() == s2.log.size());
  for (std::size_t i = 0; i < s1.log.size(); ++i) {
    REQUIRE(s1.log[i].total == s2.log[i].total);
    REQUIRE(s1.log[i].l_j == s2.log[i].l_j);
    REQUIRE(s1.log[i].l_u == s2.log[i].l_u);
    REQUIRE(s1.log[i].l_s == s2.log[i].l_s);
    REQUIRE(s1.log[i].l_w == s2.log[i].l_w);
  }
  REQUIRE(s1.best_valid_em == s2.best_valid_em);
  // contrastive terms were actually exercised
  bool any_u = false, any_s = false, any_w = false;
  for (const auto& e : s1.log) {
    any_u = any_u || e.l_u != 0.0;
    any_s = any_s || e.l_s != 0.0;
    any_w = any_w || e.l_w != 0.0;
  }
  REQUIRE(any_u);
  REQUIRE(any_s);
  REQUIRE(any_w);
}

TEST_CASE("checkpoint selection attains the maximum logged validation EM") {
  Dataset d = mini_corpus();
  auto dicts = mini_dicts();
  ModelParams m = mini_model(d, dicts);
  TrainConfig cfg = fast_config();
  cfg.epochs = 5;
  const std::string run_dir =
      (std::filesystem::temp_directory_path() / "slukit_run_sel").string();
  std::filesystem::remove_all(run_dir);
  TrainState st = train(d, d, dicts, m, cfg, run_dir, "cfg");
  REQUIRE(st.best_valid_em ==
          *std::max_element(st.valid_em_by_epoch.begin(), st.valid_em_by_epoch.end()));
  REQUIRE(std::filesystem::exists(st.best_checkpoint));
  REQUIRE(std::filesystem::exists(run_dir + "/loss_log.jsonl"));
  REQUIRE(std::filesystem::exists(run_dir + "/config.txt"));
  REQUIRE(std::filesystem::exists(run_dir + "/final_metrics.json"));

  // reloaded checkpoint predicts identically to some trained model state
  ModelParams loaded = load_checkpoint(st.best_checkpoint);
  auto before = predict_dataset(loaded, d);
  auto again = predict_dataset(loaded, d);
  for (std::size_t i = 0; i < before.size(); ++i) {
    REQUIRE(before[i].pred_intent == again[i].pred_intent);
    REQUIRE(before[i].pred_tags == again[i].pred_tags);
  }
}

TEST_CASE("checkpoint round-trips every tensor bit-exactly") {
  Dataset d = mini_corpus();
  ModelParams m = mini_model(d, {});
  const std::string path =
      (std::filesystem::temp_directory_path() / "roundtrip.ckpt").string();
  save_checkpoint(m, path, "echo");
  ModelParams l = load_checkpoint(path);
  auto pa = m.all();
  auto pb = l.all();
  REQUIRE(pa.size() == pb.size());
  for (std::size_t i = 0; i < pa.size(); ++i) {
    REQUIRE(pa[i]->name == pb[i]->name);
    REQUIRE(pa[i]->value == pb[i]->value);
  }
  REQUIRE(l.schema.slots == m.schema.slots);
  REQUIRE(l.vocab.size() == m.vocab.size());
}

TEST_CASE("training rejects invalid configurations") {
  Dataset d = mini_corpus();
  ModelParams m = mini_model(d, {});
  TrainConfig cfg = fast_config();
  cfg.batch_size = 1;  // contrastive losses need pairs
  REQUIRE_THROWS_AS(train(d, d, {}, m, cfg), ConfigError);
  cfg = fast_config();
  cfg.train_fraction = 1.5;
  REQUIRE_THROWS_AS(train(d, d, {}, m, cfg), ConfigError);
  cfg = fast_config();
  Dataset empty;
  empty.schema = d.schema;
  REQUIRE_THROWS_AS(train(empty, d, {}, m, cfg), DataError);
}
