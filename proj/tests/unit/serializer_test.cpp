#include <algorithm>
#include <random>
#include <string>
#include <vector>

#include "doctest.h"
#include "mmtod/serializer.hpp"
#include "fixtures.hpp"

using namespace mmtod;

TEST_CASE("flatten_visual") {
  const VisualObject a{"OBJECT_0", "left", {"White"}, "Kitchen Islands", {"Rustic", "Sophisticated"}, {}};
  const VisualObject b{"OBJECT_1", "center", {"White"}, "Kitchen Islands", {"Traditional", "Modern"},
                       {{"material", {"wood"}}}};
  CHECK(flatten_visual(std::vector<VisualObject>{a}) ==
        "OBJECT_0 : pos left color [ White ] class_name Kitchen Islands decor_style [ Rustic Sophisticated ]");
  CHECK(flatten_visual(std::vector<VisualObject>{}).empty());
  CHECK(flatten_visual(std::vector<VisualObject>{a, b}) ==
        flatten_visual(std::vector<VisualObject>{a}) + " " + flatten_visual(std::vector<VisualObject>{b}));
  CHECK(flatten_visual(std::vector<VisualObject>{b}).ends_with("decor_style [ Traditional Modern ] material [ wood ]"));
}

TEST_CASE("split_intent") {
  CHECK(split_intent("DA:ASK:GET:FURNITURE.dimensions") == "intent ask get furniture dimensions");
  CHECK(split_intent("DA:INFORM:PREFER:FURNITURE") == "intent inform prefer furniture");
  CHECK(split_intent("DA") == "intent");
  CHECK_THROWS_AS(split_intent("ASK:GET"), std::invalid_argument);
  CHECK_THROWS_AS(split_intent("DA::GET"), std::invalid_argument);
}

TEST_CASE("format_belief and parse_belief on the worked frames") {
  const std::vector<BeliefFrame> frames = {
      {"DA:INFORM:PREFER:FURNITURE", {{"furniture-O", "OBJECT_0"}, {"furniture-attentionOn", "that"}}},
      {"DA:ASK:GET:FURNITURE.dimensions", {{"furniture-O", "OBJECT_0"}}}};
  SerializerConfig raw;
  raw.split_intent = false;
  const std::string text = format_belief(frames, raw);
  CHECK(text ==
        "DA:INFORM:PREFER:FURNITURE [ furniture-O = OBJECT_0, furniture-attentionOn = that ] "
        "DA:ASK:GET:FURNITURE.dimensions [ furniture-O = OBJECT_0 ]");
  CHECK(parse_belief(text, raw) == frames);
  CHECK(format_belief(std::vector<BeliefFrame>{}, raw).empty());
  CHECK(parse_belief("", raw).empty());

  SerializerConfig si;
  const std::vector<BeliefFrame> bare = {{"DA:ASK:GET:FURNITURE.dimensions", {}}};
  CHECK(format_belief(bare, si) == "intent ask get furniture dimensions [ ]");
  const std::vector<std::string> known = {"DA:ASK:GET:FURNITURE.dimensions", "DA:ASK:GET:FURNITURE"};
  CHECK(parse_belief("intent ask get furniture dimensions [ ]", si, known) == bare);
}

TEST_CASE("parse_belief tolerates garbage") {
  SerializerConfig raw;
  raw.split_intent = false;
  CHECK(parse_belief("<EOS> ] [ = ,", raw).empty());
  const auto frames = parse_belief("DA:ASK:GET [ a = b, broken, c = d ] trailing [ words", raw);
  REQUIRE(frames.size() == 1);
  CHECK(frames[0].slots == std::vector<Slot>{{"a", "b"}, {"c", "d"}});
  SerializerConfig si;
  const auto unknown = parse_belief("intent ask nothing [ ]", si, std::vector<std::string>{"DA:ASK:GET"});
  REQUIRE(unknown.size() == 1);
  CHECK(unknown[0].intent == "intent ask nothing");
}

TEST_CASE("belief round trip on random frames") {
  std::mt19937_64 rng(2024);
  std::vector<std::string> intents = intent_vocabulary(Domain::Furniture);
  const auto& fashion = intent_vocabulary(Domain::Fashion);
  intents.insert(intents.end(), fashion.begin(), fashion.end());
  for (bool si : {false, true}) {
    SerializerConfig cfg;
    cfg.split_intent = si;
    int failures = 0;
    for (int trial = 0; trial < 1000; ++trial) {
      const auto frames = fixtures::random_frames(rng, intents);
      if (parse_belief(format_belief(frames, cfg), cfg, intents) != frames) ++failures;
    }
    CHECK(failures == 0);
  }
}

TEST_CASE("worked history-masking example") {
  const Dialogue d = fixtures::kitchen_island_dialogue();
  SerializerConfig cfg;
  cfg.multi_domain = false;
  cfg.add_action = false;
  cfg.split_intent = false;
  cfg.history_turns = 2;
  cfg.mask_history_loss = true;
  CHECK(render_text(d, 2, cfg) == fixtures::kKitchenIslandText);

  const Corpus corpus{d};
  const Vocab vocab = build_vocab(std::span<const Corpus>(&corpus, 1), cfg);
  const auto ex = build_example(d, 2, cfg, vocab);
  CHECK(vocab.decode(ex.tokens) == fixtures::kKitchenIslandText);
  const std::size_t masked = split_tokens(fixtures::kKitchenIslandMaskedPrefix).size();
  REQUIRE(ex.loss_mask.size() == ex.tokens.size());
  for (std::size_t i = 0; i < ex.tokens.size(); ++i) CHECK(ex.loss_mask[i] == (i >= masked ? 1 : 0));
  CHECK(ex.user_index == masked);
  CHECK(vocab.token(ex.tokens[masked]) == "User");
  CHECK(vocab.token(ex.tokens[ex.eob_index]) == "<EOB>");
  CHECK(vocab.token(ex.tokens.back()) == "<EOS>");
}

TEST_CASE("build_example layout properties") {
  const Corpus corpus = synth_corpus(3, 16, Domain::Furniture);
  for (bool aa : {false, true})
    for (bool mhl : {false, true})
      for (int T : {1, 2, 4}) {
        SerializerConfig cfg;
        cfg.add_action = aa;
        cfg.mask_history_loss = mhl;
        cfg.history_turns = T;
        const Vocab vocab = build_vocab(std::span<const Corpus>(&corpus, 1), cfg);
        const int user = vocab.id_of("User"), eob = vocab.id_of("<EOB>");
        for (const auto& d : corpus)
          for (std::size_t t = 0; t < d.turns.size(); ++t) {
            const auto ex = build_example(d, t, cfg, vocab);
            REQUIRE(ex.segment_ids.size() == ex.tokens.size());
            REQUIRE(ex.loss_mask.size() == ex.tokens.size());
            CHECK(ex.tokens.front() == vocab.id_of("<FURN>"));
            CHECK(ex.tokens[ex.eob_index] == eob);
            CHECK(ex.segment_ids[ex.eob_index] == Segment::Belief);
            CHECK(ex.segment_ids.back() == Segment::Belief);
            CHECK(vocab.token(ex.tokens.back()) == "<EOS>");
            // Turn window.
            const auto users = std::count(ex.tokens.begin(), ex.tokens.end(), user);
            CHECK(users == static_cast<long>(std::min<std::size_t>(static_cast<std::size_t>(T), t + 1)));
            // Mask: false prefix, true suffix from the current "User :".
            CHECK(ex.tokens[ex.user_index] == user);
            for (std::size_t i = 0; i < ex.tokens.size(); ++i)
              CHECK(ex.loss_mask[i] == (!mhl || i >= ex.user_index ? 1 : 0));
            // Gold action follows <EOB> only with AA.
            const bool has_action = vocab.token(ex.tokens[ex.eob_index + 1]) == special::action_token(d.turns[t].action.action);
            CHECK(has_action == aa);
            CHECK(ex.action_label == d.turns[t].action.action);
            // The prompt is a strict prefix without the gold action after it.
            const auto prompt = context_prompt(d, t, cfg, vocab);
            REQUIRE(prompt.tokens.size() < ex.tokens.size());
            CHECK(std::equal(prompt.tokens.begin(), prompt.tokens.end(), ex.tokens.begin()));
            const auto tail = vocab.decode(std::vector<int>(prompt.tokens.end() - 4, prompt.tokens.end()));
            CHECK(tail == "=> Belief State :");
          }
      }
}

TEST_CASE("first turn has no prior system response") {
  const Corpus corpus = synth_corpus(4, 2, Domain::Fashion);
  SerializerConfig cfg;
  const std::string text = render_text(corpus[0], 0, cfg);
  CHECK(text.starts_with("<FASH> User :"));
  CHECK(text.find("System :") == std::string::npos);
}

TEST_CASE("action tokens follow every System prefix") {
  const Corpus corpus = synth_corpus(5, 2, Domain::Furniture);
  SerializerConfig cfg;
  const auto& d = corpus[0];
  const std::string text = render_text(d, 2, cfg);
  CHECK(text.find("System : " + special::action_token(d.turns[0].action.action)) != std::string::npos);
  CHECK(text.find("System : " + special::action_token(d.turns[1].action.action)) != std::string::npos);
  CHECK(text.find("<EOB> " + special::action_token(d.turns[2].action.action)) != std::string::npos);
}

TEST_CASE("too long examples are reported") {
  const Corpus corpus = synth_corpus(3, 1, Domain::Furniture);
  SerializerConfig cfg;
  const Vocab vocab = build_vocab(std::span<const Corpus>(&corpus, 1), cfg);
  CHECK_THROWS_AS(build_example(corpus[0], 0, cfg, vocab, 10), SequenceTooLong);
  CHECK_THROWS(build_example(corpus[0], corpus[0].turns.size(), cfg, vocab));
}
