#include <catch_amalgamated.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>

#include "slukit/corpus.hpp"

using namespace slukit;

namespace {

SlotSchema two_slot_schema() {
  SlotSchema s;
  s.slots = {"x", "y"};
  s.intents = {"greet", "ask"};
  return s;
}

std::string write_temp(const std::string& name, const std::string& content) {
  auto path = std::filesystem::temp_directory_path() / name;
  std::ofstream out(path);
  out << content;
  return path.string();
}

// independent of extract_spans: position-pair scan over random tags
std::vector<std::string> random_valid_tags(Rng& rng, const std::vector<std::string>& slots,
                                           std::size_t len) {
  std::vector<std::string> tags;
  while (tags.size() < len) {
    if (uniform01(rng) < 0.5) {
      tags.push_back("O");
      continue;
    }
    const auto& slot = slots[uniform_index(rng, slots.size())];
    std::size_t run = 1 + uniform_index(rng, 3);
    tags.push_back("B-" + slot);
    while (--run > 0 && tags.size() < len) tags.push_back("I-" + slot);
  }
  return tags;
}

}  // namespace

TEST_CASE("load_dataset ingests valid JSONL") {
  auto path = write_temp(
      "corpus_ok.jsonl",
      R"({"id":"a","locale":"en","intent":"greet","tokens":["hi","there"],"slots":["O","O"]})"
      "\n"
      R"({"id":"b","locale":"en","intent":"ask","tokens":["to","boston"],"slots":["O","B-x"]})"
      "\n");
  Dataset d = load_dataset(path, two_slot_schema(), ValidationMode::Strict);
  REQUIRE(d.size() == 2);
  REQUIRE(d.utterances[1].slots[1] == "B-x");
  REQUIRE(d.warnings == 0);
}

TEST_CASE("load_dataset rejects orphan I- in strict mode") {
  auto path = write_temp(
      "corpus_orphan.jsonl",
      R"({"id":"a","locale":"en","intent":"greet","tokens":["hi","yo"],"slots":["I-x","O"]})"
      "\n");
  REQUIRE_THROWS_WITH(load_dataset(path, two_slot_schema(), ValidationMode::Strict),
                      Catch::Matchers::ContainsSubstring("orphan I- tag at index 0"));
}

TEST_CASE("load_dataset repairs orphan I- in lenient mode") {
  auto path = write_temp(
      "corpus_orphan2.jsonl",
      R"({"id":"a","locale":"en","intent":"greet","tokens":["hi","yo"],"slots":["I-x","O"]})"
      "\n");
  Dataset d = load_dataset(path, two_slot_schema(), ValidationMode::Lenient);
  REQUIRE(d.utterances[0].slots == std::vector<std::string>{"B-x", "O"});
  REQUIRE(d.warnings == 1);
}

TEST_CASE("load_dataset reports malformed JSON with line number") {
  auto path = write_temp("corpus_bad.jsonl", "{not json}\n");
  REQUIRE_THROWS_WITH(load_dataset(path, two_slot_schema(), ValidationMode::Strict),
                      Catch::Matchers::ContainsSubstring(":1:"));
}

TEST_CASE("load_dataset rejects token/tag length mismatch") {
  auto path = write_temp(
      "corpus_len.jsonl",
      R"({"id":"a","locale":"en","intent":"greet","tokens":["hi"],"slots":["O","O"]})" "\n");
  REQUIRE_THROWS_AS(load_dataset(path, two_slot_schema(), ValidationMode::Strict), DataError);
}

TEST_CASE("load_dataset rejects unknown slot and intent") {
  auto bad_slot = write_temp(
      "corpus_slot.jsonl",
      R"({"id":"a","locale":"en","intent":"greet","tokens":["hi"],"slots":["B-zzz"]})" "\n");
  REQUIRE_THROWS_AS(load_dataset(bad_slot, two_slot_schema(), ValidationMode::Strict),
                    DataError);
  auto bad_intent = write_temp(
      "corpus_intent.jsonl",
      R"({"id":"a","locale":"en","intent":"nope","tokens":["hi"],"slots":["O"]})" "\n");
  REQUIRE_THROWS_AS(load_dataset(bad_intent, two_slot_schema(), ValidationMode::Strict),
                    DataError);
}

TEST_CASE("extract_spans worked examples") {
  REQUIRE(extract_spans({"O", "O", "B-fromloc", "O", "B-toloc"}) ==
          std::vector<SlotSpan>{{2, 2, "fromloc"}, {4, 4, "toloc"}});
  REQUIRE(extract_spans({"B-x", "I-x", "O"}) == std::vector<SlotSpan>{{0, 1, "x"}});
  REQUIRE(extract_spans({"O", "O", "O"}).empty());
}

TEST_CASE("spans_to_bio worked examples") {
  REQUIRE(spans_to_bio({{0, 1, "x"}}, 3) == std::vector<std::string>{"B-x", "I-x", "O"});
  REQUIRE(spans_to_bio({}, 2) == std::vector<std::string>{"O", "O"});
  REQUIRE_THROWS_WITH(spans_to_bio({{0, 0, "x"}, {0, 0, "y"}}, 2),
                      Catch::Matchers::ContainsSubstring("overlap"));
  REQUIRE_THROWS_AS(spans_to_bio({{1, 3, "x"}}, 3), DataError);
}

TEST_CASE("BIO round-trip holds on 1000 random valid sequences") {
  Rng rng = make_rng(7);
  const std::vector<std::string> slots{"x", "y", "depart_time", "to"};
  for (int i = 0; i < 1000; ++i) {
    auto tags = random_valid_tags(rng, slots, 1 + uniform_index(rng, 14));
    auto spans = extract_spans(tags);
    REQUIRE(spans_to_bio(spans, tags.size()) == tags);
    for (std::size_t j = 1; j < spans.size(); ++j) {
      REQUIRE(spans[j - 1].end < spans[j].start);  // disjoint, sorted
    }
  }
}

TEST_CASE("lenient repair always yields strict-valid tags") {
  Rng rng = make_rng(11);
  const std::vector<std::string> slots{"x", "y"};
  for (int i = 0; i < 100; ++i) {
    // random tags with deliberate orphan I- insertions
    std::vector<std::string> tags;
    const std::size_t len = 1 + uniform_index(rng, 10);
    for (std::size_t t = 0; t < len; ++t) {
      const double r = uniform01(rng);
      const auto& slot = slots[uniform_index(rng, slots.size())];
      tags.push_back(r < 0.4 ? "O" : (r < 0.7 ? "I-" + slot : "B-" + slot));
    }
    repair_bio(tags);
    REQUIRE(is_strict_bio(tags));
  }
}

TEST_CASE("value_frequency_table counts, ordering, tie-break") {
  Dataset d;
  d.schema = two_slot_schema();
  auto add = [&](std::vector<std::string> tokens, std::vector<std::string> tags) {
    Utterance u;
    u.id = "u" + std::to_string(d.size());
    u.locale = "en";
    u.intent = "greet";
    u.tokens = std::move(tokens);
    u.slots = std::move(tags);
    d.utterances.push_back(u);
  };
  add({"a", "b"}, {"B-x", "I-x"});
  add({"A", "B"}, {"B-x", "I-x"});  // case-folded into "a b"
  add({"a", "b", "c"}, {"B-x", "I-x", "B-x"});
  add({"q"}, {"B-y"});
  auto table = value_frequency_table(d);
  REQUIRE(table["x"] == std::vector<std::pair<std::string, int>>{{"a b", 3}, {"c", 1}});
  REQUIRE(table["y"] == std::vector<std::pair<std::string, int>>{{"q", 1}});

  Dataset empty;
  empty.schema = d.schema;
  REQUIRE(value_frequency_table(empty).empty());
}

TEST_CASE("value_frequency_table matches brute-force recount on a crafted corpus") {
  Rng rng = make_rng(23);
  const std::vector<std::string> slots{"x", "y"};
  const std::vector<std::string> words{"a", "b", "c", "D", "e"};
  Dataset d;
  d.schema = two_slot_schema();
  for (int i = 0; i < 10; ++i) {
    Utterance u;
    u.id = "r" + std::to_string(i);
    u.locale = "en";
    u.intent = "greet";
    const std::size_t len = 1 + uniform_index(rng, 8);
    u.slots = random_valid_tags(rng, slots, len);
    for (std::size_t t = 0; t < len; ++t) u.tokens.push_back(words[uniform_index(rng, words.size())]);
    d.utterances.push_back(u);
  }

  // brute-force oracle: re-scan tags by hand, tally, re-sort
  std::map<std::string, std::map<std::string, int>> oracle;
  for (const auto& u : d.utterances) {
    std::size_t t = 0;
    while (t < u.slots.size()) {
      if (u.slots[t][0] != 'B') {
        ++t;
        continue;
      }
      const std::string slot = u.slots[t].substr(2);
      std::string value = lowercase(u.tokens[t]);
      std::size_t j = t + 1;
      while (j < u.slots.size() && u.slots[j] == "I-" + slot) {
        value += " " + lowercase(u.tokens[j]);
        ++j;
      }
      oracle[slot][value]++;
      t = j;
    }
  }
  auto table = value_frequency_table(d);
  REQUIRE(table.size() == oracle.size());
  for (const auto& [slot, counted] : oracle) {
    std::vector<std::pair<std::string, int>> expect(counted.begin(), counted.end());
    std::stable_sort(expect.begin(), expect.end(), [](const auto& a, const auto& b) {
      return a.second != b.second ? a.second > b.second : a.first < b.first;
    });
    REQUIRE(table.at(slot) == expect);
  }
}

TEST_CASE("schema derives bio label list of size 2K+1") {
  SlotSchema s = two_slot_schema();
  REQUIRE(s.bio_labels() ==
          std::vector<std::string>{"O", "B-x", "I-x", "B-y", "I-y"});
  REQUIRE(s.bio_index("O") == 0);
  REQUIRE(s.bio_index("B-x") == 1);
  REQUIRE(s.bio_index("I-y") == 4);
  REQUIRE(s.bio_index("B-zzz") == -1);
}
