#include <catch_amalgamated.hpp>

#include <filesystem>
#include <fstream>

#include "slukit/config.hpp"

using namespace slukit;

namespace {
std::string write_temp(const std::string& name, const std::string& content) {
  auto path = std::filesystem::temp_directory_path() / name;
  std::ofstream out(path);
  out << content;
  return path.string();
}
}  // namespace

TEST_CASE("defaults carry the documented values") {
  RunConfig cfg;
  REQUIRE(cfg.cs_sentence_ratio == 1.0);
  REQUIRE(cfg.cs_word_ratio == 0.9);
  REQUIRE(cfg.pool_p_v == 20);
  REQUIRE(cfg.pool_p_s == 5);
  REQUIRE(cfg.pool_n_s == 2);
  REQUIRE(cfg.cl_n_w == 2);
  REQUIRE(cfg.train_batch_size == 32);
  REQUIRE(cfg.train_epochs == 20);
  REQUIRE(cfg.train_lr_heads == 1e-3);
  REQUIRE(cfg.train_warmup == 0.10);
}

TEST_CASE("config file parsing with comments and whitespace") {
  auto path = write_temp("cfg1.txt",
                         "# run settings\n"
                         "seed = 7\n"
                         "cs.word_ratio=0.5   # inline comment\n"
                         "\n"
                         "ablate.compressor = true\n");
  RunConfig cfg = RunConfig::load_file(path);
  REQUIRE(cfg.seed == 7);
  REQUIRE(cfg.cs_word_ratio == 0.5);
  REQUIRE(cfg.ablate_compressor);
}

TEST_CASE("unknown keys and bad values are rejected with location") {
  auto path = write_temp("cfg2.txt", "no.such.key = 1\n");
  REQUIRE_THROWS_WITH(RunConfig::load_file(path),
                      Catch::Matchers::ContainsSubstring("unknown config key"));
  auto path2 = write_temp("cfg3.txt", "train.epochs = banana\n");
  REQUIRE_THROWS_WITH(RunConfig::load_file(path2),
                      Catch::Matchers::ContainsSubstring("bad value"));
  auto path3 = write_temp("cfg4.txt", "train.epochs\n");
  REQUIRE_THROWS_WITH(RunConfig::load_file(path3),
                      Catch::Matchers::ContainsSubstring("expected key = value"));
}

TEST_CASE("overrides apply after the file") {
  auto path = write_temp("cfg5.txt", "train.epochs = 5\n");
  RunConfig cfg = RunConfig::load_file(path);
  cfg.apply_overrides({"train.epochs=9", "cl.lambda_u=0"});
  REQUIRE(cfg.train_epochs == 9);
  REQUIRE(cfg.cl_lambda_u == 0.0);
  REQUIRE_THROWS_AS(cfg.apply_overrides({"oops"}), ConfigError);
}

TEST_CASE("echo lists every key and round-trips through the parser") {
  RunConfig cfg;
  cfg.seed = 123;
  cfg.cl_lambda_s = 0.7;
  cfg.ablate_projector = true;
  const std::string echo = cfg.echo();
  auto path = write_temp("cfg6.txt", echo);
  RunConfig back = RunConfig::load_file(path);
  REQUIRE(back.echo() == echo);
  REQUIRE(back.seed == 123);
  REQUIRE(back.cl_lambda_s == 0.7);
  REQUIRE(back.ablate_projector);
  // one line per key
  const auto& keys = detail::config_key_order();
  std::size_t lines = std::count(echo.begin(), echo.end(), '\n');
  REQUIRE(lines == keys.size());
}

TEST_CASE("derived sub-configs inherit the right fields") {
  RunConfig cfg;
  cfg.seed = 5;
  cfg.enc_dim = 48;
  cfg.enc_heads = 4;
  cfg.cl_lambda_w = 0.0;
  cfg.train_batch_size = 8;
  EncoderConfig ec = cfg.encoder_config();
  REQUIRE(ec.dim == 48);
  REQUIRE(ec.seed == 5);
  TrainConfig tc = cfg.train_config();
  REQUIRE(tc.batch_size == 8);
  REQUIRE(tc.cl.lambda_w == 0.0);
  REQUIRE(tc.cs.sentence_ratio == 1.0);
  REQUIRE(tc.pool.p_v == 20);
}
