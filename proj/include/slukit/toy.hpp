#pragma once

// Synthetic two-language SLU world for self-contained end-to-end runs.
// The target language is the ROT13 image of the source vocabulary, so the
// lexicon is bijective, deterministic, and doubles as the bilingual
// dictionary. Test utterances instantiate templates held out of training.

#include <cstdio>
#include <filesystem>
#include <set>
#include <string>
#include <vector>

#include "slukit/codeswitch.hpp"
#include "slukit/common.hpp"
#include "slukit/corpus.hpp"

namespace slukit {

namespace toy {

inline std::string rot13(const std::string& word) {
  std::string out = word;
  for (char& c : out) {
    if (c >= 'a' && c <= 'z') c = static_cast<char>('a' + (c - 'a' + 13) % 26);
    else if (c >= 'A' && c <= 'Z') c = static_cast<char>('A' + (c - 'A' + 13) % 26);
  }
  return out;
}

struct Template {
  std::string intent;
  // tokens; a token wrapped as {slot} is a placeholder
  std::vector<std::string> pattern;
};

struct World {
  SlotSchema schema;
  std::map<std::string, std::vector<std::vector<std::string>>> fillers;  // slot -> values
  std::vector<Template> train_templates;
  std::vector<Template> test_templates;
};

inline World build_world() {
  World w;
  w.schema.slots = {"fromloc", "toloc", "city_name", "artist_name", "alarm_name",
                    "period_of_day"};
  w.schema.intents = {"book_flight", "weather_query", "play_music", "set_alarm"};

  const std::vector<std::vector<std::string>> cities = {
      {"boston"}, {"denver"}, {"atlanta"}, {"seattle"}, {"portland"}, {"oakland"},
      {"memphis"}, {"dallas"}, {"austin"}, {"tucson"}, {"omaha"}, {"fresno"}, {"reno"},
      {"tulsa"}, {"boise"}, {"mobile"}, {"tacoma"}, {"newark"}, {"orlando"}, {"tampa"},
      {"wichita"}, {"durham"}, {"laredo"}, {"spokane"}, {"fargo"}, {"provo"},
      {"lincoln"}, {"madison"}, {"norfolk"}, {"augusta"}, {"helena"}, {"juneau"},
      {"new", "york"}, {"los", "angeles"}, {"san", "francisco"}, {"salt", "lake"},
      {"kansas", "city"}, {"long", "beach"}, {"santa", "fe"}, {"baton", "rouge"},
      {"sioux", "falls"}, {"cedar", "rapids"}, {"grand", "forks"}, {"palm", "bay"},
      {"fort", "wayne"}, {"eau", "claire"}, {"ann", "arbor"}, {"santa", "cruz"}};
  w.fillers["fromloc"] = cities;
  w.fillers["toloc"] = cities;
  w.fillers["city_name"] = cities;
  w.fillers["artist_name"] = {
      {"silver", "band"}, {"dj", "kora"}, {"madrigal"}, {"red", "river"},
      {"blue", "ensemble"}, {"tomaso"}, {"vesper", "trio"}, {"golden", "day"},
      {"ana", "maro"}, {"kiwi"}, {"pale", "horizon"}, {"quartet", "nine"},
      {"copper", "owls"}, {"velvet", "echo"}, {"june", "harbor"}, {"static", "bloom"}};
  w.fillers["alarm_name"] = {
      {"morning", "run"}, {"team", "sync"}, {"workout"}, {"medication"},
      {"water", "plants"}, {"standup"}, {"laundry"}, {"night", "shift"},
      {"garden", "check"}, {"bills"}, {"stretching"}, {"review", "notes"},
      {"meal", "prep"}, {"deep", "focus"}, {"inbox", "zero"}, {"dog", "walk"}};
  w.fillers["period_of_day"] = {
      {"morning"}, {"noon"}, {"evening"}, {"night"}, {"late", "night"},
      {"early", "morning"}, {"afternoon"}, {"midnight"}};

  auto T = [](const std::string& intent, const std::string& text) {
    Template t;
    t.intent = intent;
    t.pattern = split_ws(text);
    return t;
  };
  w.train_templates = {
      T("book_flight", "book a flight from {fromloc} to {toloc}"),
      T("book_flight", "i need a flight from {fromloc} to {toloc} in the {period_of_day}"),
      T("book_flight", "please find flights from {fromloc} to {toloc}"),
      T("book_flight", "show me flights leaving {fromloc} for {toloc}"),
      T("book_flight", "what flights go from {fromloc} to {toloc} tomorrow"),
      T("book_flight", "list all flights from {fromloc} to {toloc} please"),
      T("weather_query", "what is the weather in {city_name}"),
      T("weather_query", "how cold is it in {city_name} this {period_of_day}"),
      T("weather_query", "tell me the forecast for {city_name}"),
      T("weather_query", "will it rain in {city_name} tomorrow"),
      T("weather_query", "give me the weather report for {city_name}"),
      T("weather_query", "is it windy in {city_name} right now"),
      T("play_music", "play some music by {artist_name}"),
      T("play_music", "play {artist_name} for me"),
      T("play_music", "put on songs by {artist_name}"),
      T("play_music", "i want to hear {artist_name} this {period_of_day}"),
      T("play_music", "start playing {artist_name} now"),
      T("play_music", "queue up tracks by {artist_name}"),
      T("set_alarm", "set an alarm called {alarm_name}"),
      T("set_alarm", "create an alarm named {alarm_name} for the {period_of_day}"),
      T("set_alarm", "wake me with the {alarm_name} alarm"),
      T("set_alarm", "add a reminder called {alarm_name}"),
      T("set_alarm", "schedule my {alarm_name} alarm please"),
      T("set_alarm", "turn on the {alarm_name} alarm for the {period_of_day}"),
  };
  w.test_templates = {
      T("book_flight", "find me a flight from {fromloc} to {toloc} in the {period_of_day}"),
      T("weather_query", "what is the forecast in {city_name} this {period_of_day}"),
      T("play_music", "play songs by {artist_name} for me"),
      T("set_alarm", "set an alarm named {alarm_name} for the {period_of_day}"),
  };
  return w;
}

inline bool is_placeholder(const std::string& token) {
  return token.size() > 2 && token.front() == '{' && token.back() == '}';
}

inline Utterance instantiate(const World& w, const Template& t, const std::string& id,
                             Rng& rng) {
  Utterance u;
  u.id = id;
  u.locale = "src";
  u.intent = t.intent;
  for (const auto& tok : t.pattern) {
    if (!is_placeholder(tok)) {
      u.tokens.push_back(tok);
      u.slots.push_back("O");
      continue;
    }
    const std::string slot = tok.substr(1, tok.size() - 2);
    const auto& pool = w.fillers.at(slot);
    const auto& value = pool[uniform_index(rng, pool.size())];
    for (std::size_t i = 0; i < value.size(); ++i) {
      u.tokens.push_back(value[i]);
      u.slots.push_back((i == 0 ? "B-" : "I-") + slot);
    }
  }
  return u;
}

}  // namespace toy

struct ToyCorpus {
  SlotSchema schema;
  Dataset train, valid, test_source, test_target;
  // source word -> target word, sorted by source word
  std::vector<std::pair<std::string, std::string>> lexicon;
};

inline ToyCorpus make_toy(std::uint64_t seed) {
  const toy::World w = toy::build_world();
  ToyCorpus out;
  out.schema = w.schema;

  auto gen_split = [&](const std::vector<toy::Template>& templates, std::size_t count,
                       const std::string& prefix, std::uint64_t salt) {
    std::vector<Utterance> utts;
    Rng rng = make_rng(seed, salt);
    for (std::size_t i = 0; i < count; ++i) {
      const auto& t = templates[i % templates.size()];
      char id[32];
      std::snprintf(id, sizeof(id), "%s-%04zu", prefix.c_str(), i);
      utts.push_back(toy::instantiate(w, t, id, rng));
    }
    return utts;
  };

  out.train.schema = w.schema;
  out.train.split = "train";
  out.train.utterances = gen_split(w.train_templates, 600, "train", 0x7101);
  out.valid.schema = w.schema;
  out.valid.split = "valid";
  out.valid.utterances = gen_split(w.train_templates, 100, "valid", 0x7102);
  out.test_source.schema = w.schema;
  out.test_source.split = "test";
  out.test_source.utterances = gen_split(w.test_templates, 200, "test", 0x7103);

  // Lexicon over the full source vocabulary; ROT13 has no fixed points so
  // source and target vocabularies are disjoint unless two source words
  // collide, which we check.
  std::set<std::string> vocab;
  for (const auto& split : {&out.train, &out.valid, &out.test_source})
    for (const auto& u : split->utterances)
      for (const auto& tok : u.tokens) vocab.insert(tok);
  for (const auto& word : vocab) {
    const std::string image = toy::rot13(word);
    if (vocab.count(image))
      throw DataError("toy lexicon collision: " + word + " -> " + image);
    out.lexicon.emplace_back(word, image);
  }

  std::map<std::string, std::string> lex(out.lexicon.begin(), out.lexicon.end());
  out.test_target.schema = w.schema;
  out.test_target.split = "test";
  for (const auto& u : out.test_source.utterances) {
    Utterance t = u;
    t.locale = "tgt";
    for (auto& tok : t.tokens) tok = lex.at(tok);
    out.test_target.utterances.push_back(std::move(t));
  }
  return out;
}

inline void save_toy(const ToyCorpus& c, const std::string& out_dir) {
  std::filesystem::create_directories(out_dir);
  save_dataset_jsonl(c.train.utterances, out_dir + "/train.jsonl");
  save_dataset_jsonl(c.valid.utterances, out_dir + "/valid.jsonl");
  save_dataset_jsonl(c.test_source.utterances, out_dir + "/test_source.jsonl");
  save_dataset_jsonl(c.test_target.utterances, out_dir + "/test_target.jsonl");
  c.schema.save_json(out_dir + "/schema.json");
  std::ofstream dict(out_dir + "/dict.txt");
  if (!dict) throw DataError("cannot write dictionary: " + out_dir + "/dict.txt");
  for (const auto& [src, tgt] : c.lexicon) dict << src << " " << tgt << "\n";
}

}  // namespace slukit
