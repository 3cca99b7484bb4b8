#pragma once

// Seeded training loop: per-epoch dynamic code-switching, per-batch hard
// negative generation, AdamW with linear warmup/decay and two parameter
// groups (encoder vs heads), gradient clipping, and checkpoint selection
// by validation semantic exact match.

#include <cmath>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "slukit/checkpoint.hpp"
#include "slukit/codeswitch.hpp"
#include "slukit/corpus.hpp"
#include "slukit/evalkit.hpp"
#include "slukit/mcl.hpp"
#include "slukit/negpool.hpp"

namespace slukit {

struct TrainConfig {
  int batch_size = 32;
  int epochs = 20;
  double lr_encoder = 1e-3;  // the from-scratch encoder trains hotter than a PLM
  double lr_heads = 1e-3;
  double weight_decay = 0.0;
  double warmup_fraction = 0.10;
  double grad_clip = 1.0;
  double train_fraction = 1.0;
  std::uint64_t seed = 42;
  CLConfig cl;
  NegPoolConfig pool;
  CodeSwitchConfig cs;

  bool use_cs() const { return cs.sentence_ratio > 0.0 || cl.any_enabled(); }

  void validate() const {
    if (batch_size < 1) throw ConfigError("train: batch_size must be >= 1");
    if (cl.any_enabled() && batch_size < 2)
      throw ConfigError("train: batch_size must be >= 2 with contrastive losses on");
    if (epochs < 1) throw ConfigError("train: epochs must be >= 1");
    if (train_fraction <= 0.0 || train_fraction > 1.0)
      throw ConfigError("train: train_fraction must be in (0,1]");
    if (warmup_fraction < 0.0 || warmup_fraction > 1.0)
      throw ConfigError("train: warmup_fraction must be in [0,1]");
    cl.validate();
  }
};

// Piecewise-linear factor: rises to 1 at the warmup boundary, falls to
// exactly 0 at the final step. Steps are numbered 1..total.
struct LinearSchedule {
  std::size_t total_steps = 1;
  std::size_t warmup_steps = 1;

  LinearSchedule() = default;
  LinearSchedule(std::size_t total, double warmup_fraction) : total_steps(total) {
    warmup_steps = static_cast<std::size_t>(
        std::llround(warmup_fraction * static_cast<double>(total)));
    if (warmup_steps < 1) warmup_steps = 1;
  }

  double factor(std::size_t step) const {
    if (step <= warmup_steps)
      return static_cast<double>(step) / static_cast<double>(warmup_steps);
    if (warmup_steps >= total_steps) return 1.0;
    return static_cast<double>(total_steps - step) /
           static_cast<double>(total_steps - warmup_steps);
  }
};

// Adam with decoupled weight decay. Parameters come in (pointer, lr) groups.
struct AdamW {
  double beta1 = 0.9, beta2 = 0.999, eps = 1e-8;
  double weight_decay = 0.0;
  std::size_t t = 0;

  void step(const std::vector<std::pair<ad::Parameter*, double>>& groups,
            double lr_factor) {
    ++t;
    const double bc1 = 1.0 - std::pow(beta1, static_cast<double>(t));
    const double bc2 = 1.0 - std::pow(beta2, static_cast<double>(t));
    for (const auto& [p, base_lr] : groups) {
      const double lr = base_lr * lr_factor;
      p->adam_m = beta1 * p->adam_m + (1.0 - beta1) * p->grad;
      p->adam_v = beta2 * p->adam_v + (1.0 - beta2) * p->grad.cwiseProduct(p->grad);
      ad::Matrix mhat = p->adam_m / bc1;
      ad::Matrix vhat = p->adam_v / bc2;
      p->value -= lr * (mhat.array() / (vhat.array().sqrt() + eps)).matrix();
      if (weight_decay > 0.0) p->value -= lr * weight_decay * p->value;
    }
  }
};

// Scales all gradients so their global norm is at most max_norm.
inline double clip_gradients(const std::vector<ad::Parameter*>& params, double max_norm) {
  double sq = 0.0;
  for (auto* p : params) sq += p->grad.squaredNorm();
  const double gn = std::sqrt(sq);
  if (max_norm > 0.0 && gn > max_norm) {
    const double scale = max_norm / gn;
    for (auto* p : params) p->grad *= scale;
  }
  return gn;
}

// Seeded uniform subsample without replacement, ceil(fraction * n) kept,
// original order preserved.
inline Dataset subsample(const Dataset& train, double fraction, std::uint64_t seed) {
  if (fraction <= 0.0 || fraction > 1.0)
    throw ConfigError("subsample: fraction must be in (0,1]");
  if (fraction == 1.0) return train;
  const std::size_t n = train.size();
  const std::size_t keep = static_cast<std::size_t>(
      std::ceil(fraction * static_cast<double>(n)));
  std::vector<std::size_t> idx(n);
  for (std::size_t i = 0; i < n; ++i) idx[i] = i;
  Rng rng = make_rng(seed, 0x5ab5a);
  std::shuffle(idx.begin(), idx.end(), rng);
  idx.resize(keep);
  std::sort(idx.begin(), idx.end());
  Dataset out;
  out.schema = train.schema;
  out.split = train.split;
  for (std::size_t i : idx) out.utterances.push_back(train.utterances[i]);
  return out;
}

struct StepLogEntry {
  std::size_t step = 0;
  int epoch = 0;
  double lr_factor = 0.0;
  double l_j = 0.0, l_u = 0.0, l_s = 0.0, l_w = 0.0, total = 0.0;

  nlohmann::json to_json() const {
    return {{"step", step}, {"epoch", epoch}, {"lr_factor", lr_factor},
            {"l_j", l_j},   {"l_u", l_u},     {"l_s", l_s},
            {"l_w", l_w},   {"total", total}};
  }
};

struct TrainState {
  std::size_t step = 0;
  int epoch = 0;
  double best_valid_em = -1.0;
  std::string best_checkpoint;
  std::vector<StepLogEntry> log;
  std::vector<double> valid_em_by_epoch;
  std::size_t warnings = 0;
};

inline std::vector<PredictionRecord> predict_dataset(ModelParams& M, const Dataset& d) {
  std::vector<PredictionRecord> records;
  records.reserve(d.size());
  for (const auto& u : d.utterances) {
    Prediction p = predict(M, u.tokens);
    PredictionRecord r;
    r.id = u.id;
    r.gold_intent = u.intent;
    r.pred_intent = p.intent;
    r.gold_tags = u.slots;
    r.pred_tags = p.tags;
    records.push_back(std::move(r));
  }
  return records;
}

inline TrainState train(const Dataset& train_full, const Dataset& valid,
                        const std::vector<BilingualDictionary>& dicts, ModelParams& M,
                        const TrainConfig& cfg, const std::string& run_dir = "",
                        const std::string& config_echo = "") {
  cfg.validate();
  if (train_full.size() == 0) throw DataError("train: empty training split");
  if (valid.size() == 0) throw DataError("train: empty validation split");
  Dataset train_set = subsample(train_full, cfg.train_fraction, cfg.seed);

  const bool use_cs = cfg.use_cs();
  NegativePool pool;
  bool have_pool = false;
  if (cfg.cl.lambda_s > 0 && use_cs) {
    EncoderMeanEmbedder embedder(M.enc, M.vocab);
    pool = build_negative_pool(train_set, M.schema, cfg.pool, embedder);
    have_pool = true;
  }

  const std::size_t n = train_set.size();
  const std::size_t steps_per_epoch =
      (n + static_cast<std::size_t>(cfg.batch_size) - 1) /
      static_cast<std::size_t>(cfg.batch_size);
  LinearSchedule sched(steps_per_epoch * static_cast<std::size_t>(cfg.epochs),
                       cfg.warmup_fraction);
  AdamW opt;
  opt.weight_decay = cfg.weight_decay;
  std::vector<std::pair<ad::Parameter*, double>> groups;
  for (auto* p : M.encoder_params()) groups.emplace_back(p, cfg.lr_encoder);
  for (auto* p : M.head_params()) groups.emplace_back(p, cfg.lr_heads);
  std::vector<ad::Parameter*> all_params = M.all();

  TrainState state;
  std::ofstream log_out;
  if (!run_dir.empty()) {
    std::filesystem::create_directories(run_dir);
    if (!config_echo.empty()) {
      std::ofstream cfg_out(run_dir + "/config.txt");
      cfg_out << config_echo;
    }
    log_out.open(run_dir + "/loss_log.jsonl");
  }

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    state.epoch = epoch;
    std::vector<SwitchedUtterance> switched;
    if (use_cs)
      switched = code_switch_dataset(train_set, dicts, cfg.cs,
                                     cfg.seed ^ static_cast<std::uint64_t>(epoch));
    std::vector<std::size_t> order(n);
    for (std::size_t i = 0; i < n; ++i) order[i] = i;
    Rng shuffle_rng = make_rng(cfg.seed, 0xba7c4 + static_cast<std::uint64_t>(epoch));
    std::shuffle(order.begin(), order.end(), shuffle_rng);

    for (std::size_t at = 0; at < n; at += static_cast<std::size_t>(cfg.batch_size)) {
      const std::size_t b = std::min(n - at, static_cast<std::size_t>(cfg.batch_size));
      std::vector<Utterance> batch;
      std::vector<SwitchedUtterance> batch_cs;
      for (std::size_t i = 0; i < b; ++i) {
        batch.push_back(train_set.utterances[order[at + i]]);
        if (use_cs) batch_cs.push_back(switched[order[at + i]]);
      }
      ++state.step;
      StepData step = prepare_step(batch, batch_cs, use_cs, have_pool ? &pool : nullptr,
                                   dicts, cfg.cs, cfg.cl, cfg.pool.n_s,
                                   mix_seed(cfg.seed, 0x57e9 + state.step));
      ad::Graph g;
      Rng dropout_rng = make_rng(cfg.seed, 0xd409 + state.step);
      StepLoss loss = build_step_loss(g, M, step, cfg.cl, true, &dropout_rng);
      state.warnings += loss.warnings;

      StepLogEntry entry;
      entry.step = state.step;
      entry.epoch = epoch;
      entry.lr_factor = sched.factor(state.step);
      entry.l_j = loss.l_j->value(0, 0);
      entry.l_u = loss.l_u->value(0, 0);
      entry.l_s = loss.l_s->value(0, 0);
      entry.l_w = loss.l_w->value(0, 0);
      entry.total = loss.total->value(0, 0);
      if (!std::isfinite(entry.total)) {
        if (!run_dir.empty()) {
          std::ofstream diag(run_dir + "/diagnostic.json");
          diag << nlohmann::json{{"step", state.step},
                                 {"epoch", epoch},
                                 {"l_j", entry.l_j},
                                 {"l_u", entry.l_u},
                                 {"l_s", entry.l_s},
                                 {"l_w", entry.l_w}}
                      .dump(2);
        }
        throw NumericError("non-finite loss at step " + std::to_string(state.step));
      }

      for (auto* p : all_params) p->grad.setZero();
      g.backward(loss.total);
      g.harvest_param_grads();
      clip_gradients(all_params, cfg.grad_clip);
      opt.step(groups, entry.lr_factor);

      state.log.push_back(entry);
      if (log_out) log_out << entry.to_json().dump() << "\n";
    }

    auto records = predict_dataset(M, valid);
    const double em = semantic_em(records);
    state.valid_em_by_epoch.push_back(em);
    // ties keep the latest epoch: with a saturating validation split the
    // most-trained checkpoint generalizes better to the target language
    if (em >= state.best_valid_em) {
      state.best_valid_em = em;
      if (!run_dir.empty()) {
        state.best_checkpoint = run_dir + "/best.ckpt";
        save_checkpoint(M, state.best_checkpoint, config_echo);
      }
    }
  }

  if (!run_dir.empty()) {
    nlohmann::json final_metrics{{"best_valid_em", state.best_valid_em},
                                 {"epochs", cfg.epochs},
                                 {"steps", state.step},
                                 {"valid_em_by_epoch", state.valid_em_by_epoch},
                                 {"warnings", state.warnings}};
    std::ofstream fm(run_dir + "/final_metrics.json");
    fm << final_metrics.dump(2) << "\n";
  }
  return state;
}

}  // namespace slukit
