#pragma once

#include <random>
#include <string>
#include <vector>

#include "mmtod/corpus.hpp"

namespace fixtures {

// Three-turn furniture dialogue whose last turn, rendered with two turns of
// history, no domain token, no actions and raw intents, is the worked
// history-masking example.
inline mmtod::Dialogue kitchen_island_dialogue() {
  using namespace mmtod;
  const std::vector<VisualObject> islands = {
      {"OBJECT_0", "left", {"White"}, "Kitchen Islands", {"Rustic", "Sophisticated"}, {}},
      {"OBJECT_1", "center", {"White"}, "Kitchen Islands", {"Traditional", "Modern"}, {}}};
  Dialogue d;
  d.dialogue_id = "kitchen-islands";
  d.domain = Domain::Furniture;
  Turn t0;
  t0.user_utterance = "show me some kitchen islands";
  t0.system_response = "Can you see now?";
  t0.action.action = 1;
  t0.visual = islands;
  t0.belief = {{"DA:REQUEST:GET:FURNITURE", {{"furniture-type", "Kitchen Islands"}}}};
  Turn t1;
  t1.user_utterance = "no I cannot.  can you tell me about them?";
  t1.system_response = "This is our Hedon Kitchen Island with Stainless Steel Top. It featuresa natural wood countertop.";
  t1.action.action = 5;
  t1.visual = islands;
  t1.belief = {{"DA:ASK:GET:FURNITURE.info", {}}};
  Turn t2;
  t2.user_utterance = "and what are the dimensions?";
  t2.system_response = "The width is 52 inches, depth 18 inches, and height is 36 inches.";
  t2.action.action = 5;
  t2.visual = islands;
  t2.belief = {{"DA:ASK:GET:FURNITURE.dimensions", {}}};
  d.turns = {t0, t1, t2};
  return d;
}

inline const std::string kKitchenIslandMaskedPrefix =
    "System : Can you see now? User : no I cannot. can you tell me about them? <SOM> OBJECT_0 : pos "
    "left color [ White ] class_name Kitchen Islands decor_style [ Rustic Sophisticated ] OBJECT_1 : "
    "pos center color [ White ] class_name Kitchen Islands decor_style [ Traditional Modern ] <EOM> "
    "System : This is our Hedon Kitchen Island with Stainless Steel Top. It featuresa natural wood "
    "countertop.";

inline const std::string kKitchenIslandText =
    kKitchenIslandMaskedPrefix +
    " User : and what are the dimensions? <SOM> OBJECT_0 : pos left color [ White ] class_name Kitchen "
    "Islands decor_style [ Rustic Sophisticated ] OBJECT_1 : pos center color [ White ] class_name "
    "Kitchen Islands decor_style [ Traditional Modern ] <EOM> => Belief State : "
    "DA:ASK:GET:FURNITURE.dimensions [ ] <EOB> The width is 52 inches, depth 18 inches, and height is "
    "36 inches. <EOS>";

inline std::vector<mmtod::BeliefFrame> random_frames(std::mt19937_64& rng,
                                                     const std::vector<std::string>& intents) {
  static const std::vector<std::string> keys = {"furniture-O", "fashion-color", "type", "A-b_c", "x"};
  static const std::vector<std::string> values = {"OBJECT_0", "red", "Kitchen Islands", "that", "a b c",
                                                  "52", "intent", "DA:ASK:GET"};
  auto pick = [&](const std::vector<std::string>& v) {
    return v[std::uniform_int_distribution<std::size_t>(0, v.size() - 1)(rng)];
  };
  std::vector<mmtod::BeliefFrame> frames(std::uniform_int_distribution<std::size_t>(0, 4)(rng));
  for (auto& f : frames) {
    f.intent = pick(intents);
    f.slots.resize(std::uniform_int_distribution<std::size_t>(0, 3)(rng));
    for (auto& s : f.slots) s = {pick(keys), pick(values)};
  }
  return frames;
}

}  // namespace fixtures
