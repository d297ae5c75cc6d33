#include <filesystem>
#include <fstream>
#include <string>

#include "doctest.h"
#include "mmtod/corpus.hpp"
#include "mmtod/error.hpp"

using namespace mmtod;

namespace {

const char* kOneTurn =
    R"({"dialogue_id":"d1","domain":"fashion","turns":[{"user":"hi","system":"hello","action":)"
    R"({"name":"None","attributes":[]},"visual":[],"belief":[]}]})";

std::filesystem::path temp_file(const std::string& name, const std::string& content) {
  const auto p = std::filesystem::temp_directory_path() / name;
  std::ofstream(p) << content;
  return p;
}

}  // namespace

TEST_CASE("default manifests have the fixed class counts") {
  CHECK(default_manifest(Domain::Furniture).actions.size() == 7);
  CHECK(default_manifest(Domain::Furniture).attributes.size() == 60);
  CHECK(default_manifest(Domain::Fashion).actions.size() == 5);
  CHECK(default_manifest(Domain::Fashion).attributes.size() == 7);
  CHECK(parse_domain("fashion") == Domain::Fashion);
  CHECK_THROWS_AS(parse_domain("shoes"), UsageError);
}

TEST_CASE("synth_corpus is deterministic and valid") {
  const auto a = synth_corpus(7, 10, Domain::Furniture);
  CHECK(a == synth_corpus(7, 10, Domain::Furniture));
  CHECK(a != synth_corpus(8, 10, Domain::Furniture));
  CHECK(validate(a).empty());
  const auto fashion = synth_corpus(7, 200, Domain::Fashion);
  CHECK(validate(fashion).empty());
  CHECK(mean_turns(fashion) >= 4.4);
  CHECK(mean_turns(fashion) <= 6.4);
  const auto furniture = synth_corpus(7, 200, Domain::Furniture);
  CHECK(std::abs(mean_turns(furniture) - 7.6) <= 1.0);
  CHECK_THROWS(synth_corpus(1, 0, Domain::Fashion));
  SynthOptions conditioned;
  conditioned.action_conditioned = true;
  CHECK(validate(synth_corpus(3, 20, Domain::Fashion, conditioned)).empty());
}

TEST_CASE("jsonl round trip") {
  for (Domain d : {Domain::Furniture, Domain::Fashion}) {
    const auto corpus = synth_corpus(11, 12, d);
    std::string text;
    for (const auto& dlg : corpus) text += dialogue_to_jsonl(dlg, default_manifest(d)) + "\n";
    CHECK(parse_corpus(text, default_manifest(d)) == corpus);
    const auto path = std::filesystem::temp_directory_path() / "mmtod_roundtrip.jsonl";
    write_corpus(path, corpus);
    CHECK(load_corpus(path, d) == corpus);
  }
}

TEST_CASE("minimal and empty files") {
  CHECK(load_corpus(temp_file("mmtod_one.jsonl", std::string(kOneTurn) + "\n"), Domain::Fashion).size() == 1);
  CHECK(load_corpus(temp_file("mmtod_empty.jsonl", ""), Domain::Fashion).empty());
  CHECK_THROWS_AS(load_corpus("/nonexistent/corpus.jsonl", Domain::Fashion), DataError);
}

TEST_CASE("schema errors carry line and field") {
  const auto& m = default_manifest(Domain::Fashion);
  std::string bad = kOneTurn;
  bad.replace(bad.find("\"None\""), 6, "\"Dance\"");
  CHECK_THROWS_WITH_AS(parse_corpus(std::string(kOneTurn) + "\n" + bad, m),
                       doctest::Contains("line 2: turns[0].action.name"), DataError);
  std::string short_vec = kOneTurn;
  short_vec.replace(short_vec.find("[]},"), 2, "[0,0,0,0,0,1]");
  CHECK_THROWS_WITH_AS(parse_corpus(short_vec, m), doctest::Contains("turns[0]"), DataError);
  CHECK_THROWS_WITH_AS(parse_corpus("{not json", m), doctest::Contains("line 1"), DataError);
  CHECK_THROWS_AS(parse_corpus(kOneTurn, default_manifest(Domain::Furniture)), DataError);
}

TEST_CASE("validation reports each violation") {
  auto corpus = synth_corpus(2, 1, Domain::Furniture);
  corpus[0].turns[0].user_utterance.clear();
  auto v = validate(corpus);
  REQUIRE(v.size() == 1);
  CHECK(v[0].turn == 0);
  CHECK(v[0].dialogue_id == corpus[0].dialogue_id);

  corpus = synth_corpus(2, 1, Domain::Furniture);
  const VisualObject obj{"OBJECT_0", "left", {"Red"}, "Sofas", {"Modern"}, {}};
  corpus[0].turns[1].visual = {obj, obj};
  v = validate(corpus);
  REQUIRE(v.size() == 1);
  CHECK(v[0].turn == 1);

  corpus = synth_corpus(2, 1, Domain::Furniture);
  corpus[0].turns[0].belief = {{"DA:ASK:GET", {{"a=b", "c"}}}};
  CHECK(validate(corpus).size() == 1);
  corpus[0].turns[0].belief = {{"ASK", {}}};
  CHECK(validate(corpus).size() == 1);
  corpus[0].turns.clear();
  CHECK(validate(corpus).size() == 1);
}

TEST_CASE("intent and slot grammar") {
  CHECK(is_valid_intent("DA:ASK:GET:FURNITURE.dimensions"));
  CHECK(is_valid_intent("DA:INFORM"));
  CHECK(!is_valid_intent("DA"));
  CHECK(!is_valid_intent("DA:"));
  CHECK(!is_valid_intent("DA:ASK GET"));
  CHECK(is_valid_slot_text("Kitchen Islands"));
  CHECK(!is_valid_slot_text(""));
  CHECK(!is_valid_slot_text("a, b"));
  CHECK(!is_valid_slot_text("[x]"));
}
