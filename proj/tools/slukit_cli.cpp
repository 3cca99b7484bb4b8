// slukit command line: corpus augmentation, negative-pool construction,
// training, evaluation, error statistics, representation export, and the
// synthetic toy corpus. Exit codes: 0 ok, 1 usage/config error, 2 data
// validation error, 3 numerical failure.

#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "slukit/checkpoint.hpp"
#include "slukit/codeswitch.hpp"
#include "slukit/config.hpp"
#include "slukit/corpus.hpp"
#include "slukit/evalkit.hpp"
#include "slukit/negpool.hpp"
#include "slukit/toy.hpp"
#include "slukit/trainer.hpp"

namespace {

using namespace slukit;

struct CommonOpts {
  std::string config_path;
  std::vector<std::string> overrides;
  std::int64_t seed_override = -1;
  bool verbose = false;
};

RunConfig effective_config(const CommonOpts& opts) {
  RunConfig cfg = opts.config_path.empty() ? RunConfig() : RunConfig::load_file(opts.config_path);
  cfg.apply_overrides(opts.overrides);
  if (opts.seed_override >= 0) cfg.seed = static_cast<std::uint64_t>(opts.seed_override);
  return cfg;
}

// --dict entries are "locale=path"
std::vector<BilingualDictionary> load_dicts(const std::vector<std::string>& specs,
                                            const std::string& source_locale) {
  std::vector<BilingualDictionary> dicts;
  for (const auto& spec : specs) {
    const auto eq = spec.find('=');
    if (eq == std::string::npos)
      throw ConfigError("--dict expects locale=path, got: " + spec);
    dicts.push_back(
        load_dictionary(spec.substr(eq + 1), source_locale, spec.substr(0, eq)));
  }
  return dicts;
}

SlotSchema schema_for(const std::string& schema_path, const std::vector<std::string>& data) {
  if (!schema_path.empty()) return SlotSchema::load_json(schema_path);
  return derive_schema(data);
}

Vocabulary build_vocabulary(const Dataset& train,
                            const std::vector<BilingualDictionary>& dicts,
                            const SlotSchema& schema) {
  Vocabulary v;
  for (const auto& u : train.utterances)
    for (const auto& tok : u.tokens) v.add(tok);
  for (const auto& d : dicts)
    for (const auto& [src, translations] : d.entries)
      for (const auto& t : translations) v.add(t);
  for (const auto& text : schema.abstract_labels)
    for (const auto& tok : split_ws(text)) v.add(tok);
  for (const auto& slot : schema.slots)
    for (const auto& tok : tokenize_slot_name(slot)) v.add(tok);
  return v;
}

void write_config_echo(const RunConfig& cfg, const std::string& dir) {
  std::filesystem::create_directories(dir);
  std::ofstream out(dir + "/config.txt");
  out << cfg.echo();
}

int cmd_augment(const CommonOpts& opts, const std::string& data_path,
                const std::vector<std::string>& dict_specs, const std::string& out_path) {
  RunConfig cfg = effective_config(opts);
  SlotSchema schema = derive_schema({data_path});
  Dataset data = load_dataset(data_path, schema, ValidationMode::Lenient);
  const std::string source_locale =
      data.size() ? data.utterances.front().locale : "src";
  auto dicts = load_dicts(dict_specs, source_locale);
  auto switched = code_switch_dataset(data, dicts, cfg.cs_config(), cfg.seed);
  std::vector<Utterance> out;
  out.reserve(switched.size());
  for (const auto& s : switched) out.push_back(s.as_utterance());
  save_dataset_jsonl(out, out_path);
  if (opts.verbose)
    std::cerr << "augmented " << out.size() << " utterances -> " << out_path << "\n";
  return 0;
}

int cmd_pools(const CommonOpts& opts, const std::string& data_path,
              const std::string& schema_path, const std::string& out_path) {
  RunConfig cfg = effective_config(opts);
  SlotSchema schema = schema_for(schema_path, {data_path});
  Dataset data = load_dataset(data_path, schema, ValidationMode::Lenient);
  Vocabulary vocab = build_vocabulary(data, {}, schema);
  EncoderConfig ec = cfg.encoder_config();
  ec.vocab_size = static_cast<int>(vocab.size());
  EncoderParams enc;
  enc.init(ec);
  EncoderMeanEmbedder embedder(enc, vocab);
  NegativePool pool = build_negative_pool(data, schema, cfg.pool_config(), embedder);
  pool.save_json(out_path);
  if (opts.verbose) std::cerr << "pool written to " << out_path << "\n";
  return 0;
}

int cmd_train(const CommonOpts& opts, const std::string& train_path,
              const std::string& valid_path, const std::vector<std::string>& dict_specs,
              const std::string& schema_path, const std::string& outdir) {
  RunConfig cfg = effective_config(opts);
  SlotSchema schema = schema_for(schema_path, {train_path, valid_path});
  Dataset train_set = load_dataset(train_path, schema, ValidationMode::Lenient, "train");
  Dataset valid_set = load_dataset(valid_path, schema, ValidationMode::Lenient, "valid");
  const std::string source_locale =
      train_set.size() ? train_set.utterances.front().locale : "src";
  auto dicts = load_dicts(dict_specs, source_locale);
  Vocabulary vocab = build_vocabulary(train_set, dicts, schema);

  ModelParams model;
  model.init(cfg.encoder_config(), schema, vocab, cfg.laj_config());
  write_config_echo(cfg, outdir);
  TrainState state =
      train(train_set, valid_set, dicts, model, cfg.train_config(), outdir, cfg.echo());
  std::cout << "best validation semantic EM: " << state.best_valid_em << "\n";
  std::cout << "checkpoint: " << state.best_checkpoint << "\n";
  return 0;
}

std::vector<PredictionRecord> run_predictions(const std::string& test_path,
                                              const std::string& ckpt_path,
                                              ModelParams* out_model = nullptr) {
  ModelParams model = load_checkpoint(ckpt_path);
  Dataset test = load_dataset(test_path, model.schema, ValidationMode::Lenient, "test");
  auto records = predict_dataset(model, test);
  if (out_model) *out_model = std::move(model);
  return records;
}

int cmd_eval(const CommonOpts& opts, const std::string& test_path,
             const std::string& ckpt_path, const std::string& out_path,
             const std::string& pred_out) {
  auto records = run_predictions(test_path, ckpt_path);
  MetricsReport report = compute_metrics(records);
  std::ofstream out(out_path);
  if (!out) throw DataError("cannot write metrics file: " + out_path);
  out << report.to_json().dump(2) << "\n";
  if (!pred_out.empty()) save_predictions_jsonl(records, pred_out);
  if (opts.verbose) std::cerr << report.to_json().dump(2) << "\n";
  return 0;
}

int cmd_error_stats(const std::string& pred_path, const std::string& gold_path,
                    const std::string& out_path) {
  SlotSchema schema = derive_schema({gold_path});
  Dataset gold = load_dataset(gold_path, schema, ValidationMode::Lenient, "test");
  std::map<std::string, const Utterance*> by_id;
  for (const auto& u : gold.utterances) by_id[u.id] = &u;

  std::ifstream in(pred_path);
  if (!in) throw DataError("cannot open predictions file: " + pred_path);
  std::vector<PredictionRecord> records;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
    } catch (const nlohmann::json::exception& e) {
      throw DataError(pred_path + ":" + std::to_string(lineno) + ": " + e.what());
    }
    PredictionRecord r;
    r.id = j.at("id").get<std::string>();
    r.pred_intent = j.at("intent").get<std::string>();
    r.pred_tags = j.at("slots").get<std::vector<std::string>>();
    auto it = by_id.find(r.id);
    if (it == by_id.end())
      throw DataError(pred_path + ": prediction id not in gold data: " + r.id);
    r.gold_intent = it->second->intent;
    r.gold_tags = it->second->slots;
    if (r.gold_tags.size() != r.pred_tags.size())
      throw DataError(pred_path + ": tag length mismatch for id " + r.id);
    repair_bio(r.pred_tags);
    records.push_back(std::move(r));
  }
  ErrorStats stats = error_statistics(records);
  std::ofstream out(out_path);
  if (!out) throw DataError("cannot write error stats file: " + out_path);
  out << stats.to_json().dump(2) << "\n";
  return 0;
}

int cmd_export_repr(const std::string& data_path, const std::string& ckpt_path,
                    const std::string& out_path) {
  ModelParams model = load_checkpoint(ckpt_path);
  Dataset data = load_dataset(data_path, model.schema, ValidationMode::Lenient, "test");
  std::vector<std::tuple<std::string, std::string, std::string, Eigen::RowVectorXd>> rows;
  rows.reserve(data.size());
  for (const auto& u : data.utterances) {
    Distributions d = predict_distributions(model, u.tokens);
    rows.emplace_back(u.id, u.locale, u.intent, d.cls.row(0));
  }
  export_representations_tsv(rows, out_path);
  return 0;
}

int cmd_make_toy(const CommonOpts& opts, const std::string& out_dir) {
  RunConfig cfg = effective_config(opts);
  ToyCorpus corpus = make_toy(cfg.seed);
  save_toy(corpus, out_dir);
  if (opts.verbose)
    std::cerr << "toy corpus written to " << out_dir << " (train " << corpus.train.size()
              << ", valid " << corpus.valid.size() << ", test "
              << corpus.test_source.size() << "+" << corpus.test_target.size() << ")\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"slukit: label-aware joint SLU with multi-level contrastive learning"};
  app.require_subcommand(1);

  CommonOpts opts;
  app.add_option("--config", opts.config_path, "flat key=value config file");
  app.add_option("--set", opts.overrides, "config override key=value (repeatable)");
  app.add_option("--seed", opts.seed_override, "seed override");
  app.add_flag("--verbose", opts.verbose, "chatty progress output");

  std::string data, train_path, valid_path, test_path, schema_path, ckpt, out, outdir,
      pred_out, pred_path, gold_path;
  std::vector<std::string> dict_specs;

  auto* augment = app.add_subcommand("augment", "code-switch a JSONL corpus");
  augment->add_option("--data", data)->required();
  augment->add_option("--dict", dict_specs, "locale=path (repeatable)")->required();
  augment->add_option("--out", out)->required();

  auto* pools = app.add_subcommand("pools", "build the hard-negative value pools");
  pools->add_option("--data", data)->required();
  pools->add_option("--schema", schema_path);
  pools->add_option("--out", out)->required();

  auto* train_cmd = app.add_subcommand("train", "train a model");
  train_cmd->add_option("--train", train_path)->required();
  train_cmd->add_option("--valid", valid_path)->required();
  train_cmd->add_option("--dict", dict_specs, "locale=path (repeatable)");
  train_cmd->add_option("--schema", schema_path);
  train_cmd->add_option("--outdir", outdir)->required();

  auto* eval_cmd = app.add_subcommand("eval", "evaluate a checkpoint");
  eval_cmd->add_option("--test", test_path)->required();
  eval_cmd->add_option("--checkpoint", ckpt)->required();
  eval_cmd->add_option("--out", out)->required();
  eval_cmd->add_option("--pred-out", pred_out, "also write predictions JSONL");

  auto* errs = app.add_subcommand("error-stats", "slot error decomposition");
  errs->add_option("--pred", pred_path)->required();
  errs->add_option("--gold", gold_path)->required();
  errs->add_option("--out", out)->required();

  auto* repr = app.add_subcommand("export-repr", "export [CLS] representations as TSV");
  repr->add_option("--data", data)->required();
  repr->add_option("--checkpoint", ckpt)->required();
  repr->add_option("--out", out)->required();

  auto* toy = app.add_subcommand("make-toy", "generate the synthetic paired corpus");
  toy->add_option("--out", outdir)->required();

  CLI11_PARSE(app, argc, argv);

  try {
    if (augment->parsed()) return cmd_augment(opts, data, dict_specs, out);
    if (pools->parsed()) return cmd_pools(opts, data, schema_path, out);
    if (train_cmd->parsed())
      return cmd_train(opts, train_path, valid_path, dict_specs, schema_path, outdir);
    if (eval_cmd->parsed()) return cmd_eval(opts, test_path, ckpt, out, pred_out);
    if (errs->parsed()) return cmd_error_stats(pred_path, gold_path, out);
    if (repr->parsed()) return cmd_export_repr(data, ckpt, out);
    if (toy->parsed()) return cmd_make_toy(opts, outdir);
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 1;
  } catch (const DataError& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return 2;
  } catch (const NumericError& e) {
    std::cerr << "numerical failure: " << e.what() << "\n";
    return 3;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 1;
}
