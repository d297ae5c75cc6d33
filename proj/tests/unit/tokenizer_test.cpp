#include <filesystem>
#include <random>
#include <set>

#include "doctest.h"
#include "mmtod/error.hpp"
#include "mmtod/serializer.hpp"
#include "mmtod/tokenizer.hpp"

using namespace mmtod;

TEST_CASE("special tokens are distinct and atomic") {
  const auto& all = special::all();
  CHECK(std::set<std::string>(all.begin(), all.end()).size() == all.size());
  CHECK(special::action_token(3) == "<ACT_3>");
  CHECK(special::is_special("<EOB>"));
  CHECK(!special::is_special("EOB"));
  CHECK(split_tokens("end<EOB>start") == std::vector<std::string>{"end", "<EOB>", "start"});
  CHECK(split_tokens("  a \t b\n") == std::vector<std::string>{"a", "b"});
  CHECK(normalize_space(" x   y ") == "x y");
  // Ordinary text never yields a special token.
  for (const auto& tok : split_tokens("EOB <EO B> <eob> ACT_1 < SOM >")) CHECK(!special::is_special(tok));
}

TEST_CASE("vocab encode and decode") {
  const Corpus corpus = synth_corpus(1, 8, Domain::Furniture);
  SerializerConfig cfg;
  const Vocab v = build_vocab(std::span<const Corpus>(&corpus, 1), cfg);
  for (std::size_t i = 0; i < special::all().size(); ++i) CHECK(v.token(static_cast<int>(i)) == special::all()[i]);
  const std::string text = render_text(corpus[0], 1, cfg);
  CHECK(v.decode(v.encode(text)) == text);
  std::mt19937_64 rng(3);
  for (int trial = 0; trial < 100; ++trial) {
    std::vector<int> ids(std::uniform_int_distribution<std::size_t>(0, 20)(rng));
    for (int& id : ids) id = std::uniform_int_distribution<int>(1, static_cast<int>(v.size()) - 1)(rng);
    CHECK(v.encode(v.decode(ids)) == ids);
  }
  CHECK(v.encode("zebra-never-seen") == std::vector<int>{v.unk_id()});
  CHECK(v.id_of("<EOS>") == 6);
}

TEST_CASE("vocab persistence and validation") {
  Vocab v;
  v.add("hello");
  v.add("hello");
  CHECK(v.size() == special::all().size() + 1);
  const auto path = std::filesystem::temp_directory_path() / "mmtod_vocab.json";
  v.save(path);
  CHECK(Vocab::load(path) == v);
  CHECK_THROWS(Vocab::from_tokens({"hello"}));
  auto dup = special::all();
  dup.push_back("x");
  dup.push_back("x");
  CHECK_THROWS(Vocab::from_tokens(dup));
  CHECK_THROWS(build_vocab(std::span<const Corpus>{}, SerializerConfig{}));
}
