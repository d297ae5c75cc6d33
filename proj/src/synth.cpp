// Deterministic template corpus generator. Every belief, action and response
// is drawn from closed template sets so gold labels are exactly recoverable
// from the user utterance and the visual context.

#include <random>
#include <stdexcept>

#include "mmtod/corpus.hpp"

namespace mmtod {
namespace {

const std::vector<std::string> kPositions = {"left", "right", "center", "focus"};
const std::vector<std::string> kFurnColors = {"White", "Brown", "Black", "Grey", "Beige"};
const std::vector<std::string> kFurnClasses = {"Kitchen Islands", "Area Rugs", "Sofas",
                                               "Chairs",          "Tables",    "Lamps"};
const std::vector<std::string> kFurnDecor = {"Modern", "Rustic", "Traditional",
                                             "Sophisticated"};
const std::vector<std::string> kFashColors = {"Red", "Blue", "Black", "Green", "Pink"};
const std::vector<std::string> kFashClasses = {"Dress", "Jacket", "Shirt", "Skirt",
                                               "Sweater"};
const std::vector<std::string> kFashStyles = {"casual", "formal", "vintage"};
const std::vector<std::string> kFashBrands = {"Yogi Fit", "Home Store", "Ocean Wears"};
const std::vector<std::string> kFurnAsk = {"dimensions", "price", "material"};
const std::vector<std::string> kFashAsk = {"price",    "brand",          "size",
                                           "color",    "material",       "availableSizes",
                                           "customerRating"};

class Generator {
 public:
  Generator(std::uint64_t seed, Domain domain, const SynthOptions& options)
      : rng_(seed * 2654435761ULL + (domain == Domain::Furniture ? 17 : 29)),
        domain_(domain),
        options_(options),
        manifest_(default_manifest(domain)) {}

  Dialogue dialogue(int index, std::uint64_t seed) {
    Dialogue d;
    d.domain = domain_;
    d.dialogue_id = std::string(domain_name(domain_)) + "-" + std::to_string(seed) +
                    "-" + std::to_string(index);
    // Furniture averages 7.6 turns, fashion 5.4; uniform over a 4-wide window.
    const int lo = domain_ == Domain::Furniture ? 6 : 4;
    const int n_turns = lo + pick(4);
    for (int t = 0; t < n_turns; ++t) d.turns.push_back(turn());
    return d;
  }

 private:
  int pick(int n) { return std::uniform_int_distribution<int>(0, n - 1)(rng_); }
  const std::string& any(const std::vector<std::string>& v) {
    return v[static_cast<std::size_t>(pick(static_cast<int>(v.size())))];
  }

  std::vector<VisualObject> visuals() {
    std::vector<VisualObject> out;
    if (options_.action_conditioned) {
      VisualObject o{"OBJECT_0", "center", {"White"}, "Sofas", {"Modern"}, {}};
      if (domain_ == Domain::Fashion) {
        o.class_name = "Dress";
        o.decor_styles = {"casual"};
      }
      out.push_back(std::move(o));
      return out;
    }
    const int n = 1 + pick(2);
    std::vector<std::string> used_pos;
    for (int i = 0; i < n; ++i) {
      VisualObject o;
      o.object_id = "OBJECT_" + std::to_string(i);
      do {
        o.position = any(kPositions);
      } while (std::find(used_pos.begin(), used_pos.end(), o.position) != used_pos.end());
      used_pos.push_back(o.position);
      if (domain_ == Domain::Furniture) {
        o.colors = {any(kFurnColors)};
        if (pick(2)) o.colors.push_back(any(kFurnColors));
        o.class_name = any(kFurnClasses);
        o.decor_styles = {any(kFurnDecor)};
      } else {
        o.colors = {any(kFashColors)};
        o.class_name = any(kFashClasses);
        o.decor_styles = {any(kFashStyles)};
        o.extra.push_back({"brand", {any(kFashBrands)}});
      }
      out.push_back(std::move(o));
    }
    return out;
  }

  Turn turn() {
    Turn t;
    t.visual = visuals();
    const VisualObject& obj = t.visual[static_cast<std::size_t>(pick(static_cast<int>(t.visual.size())))];
    if (domain_ == Domain::Fashion)
      t.action.attribute_flags.assign(manifest_.attributes.size(), 0);
    int action = pick(static_cast<int>(manifest_.actions.size()));
    if (domain_ == Domain::Furniture)
      furniture_turn(t, action, obj);
    else
      fashion_turn(t, action, obj);
    if (options_.action_conditioned) {
      // Re-draw the action independently; the response follows it.
      action = pick(static_cast<int>(manifest_.actions.size()));
      t.action.action = action;
      t.system_response = conditioned_response(action);
    }
    return t;
  }

  std::string conditioned_response(int action) const {
    static const std::vector<std::string> furniture = {
        "you are welcome , have a nice day .",
        "here are a few options you might like .",
        "let me check that detail for you .",
        "here is a closer look at this one .",
        "rotating it for you right now .",
        "here are the next items in the list .",
        "done , it is now in your cart ."};
    static const std::vector<std::string> fashion = {
        "you are welcome , have a nice day .",
        "here are a few options from our catalog .",
        "this is the one you looked at earlier .",
        "let me check that detail for you .",
        "done , it is now in your cart ."};
    return (domain_ == Domain::Furniture ? furniture : fashion)
        [static_cast<std::size_t>(action)];
  }

  void furniture_turn(Turn& t, int action, const VisualObject& obj) {
    const std::string& id = obj.object_id;
    auto attr = [&](const char* name) { return manifest_.attribute_index(name); };
    t.action.action = action;
    switch (action) {
      case 0:
        t.user_utterance = pick(2) ? "thanks , that is all i need ." : "ok thank you .";
        t.belief = {{"DA:THANK:GENERAL", {}}};
        t.system_response = "you are welcome .";
        t.action.attribute = attr("none");
        break;
      case 1: {
        const std::string& cls = any(kFurnClasses);
        t.user_utterance = "show me some " + cls + " please .";
        t.belief = {{"DA:REQUEST:GET:FURNITURE", {{"furniture-type", cls}}}};
        t.system_response = "here are some " + cls + " you might like .";
        t.action.attribute = attr("furnitureType");
        break;
      }
      case 2: {
        const std::string& ask = any(kFurnAsk);
        if (pick(2)) {
          t.user_utterance = "i like " + id + " , what is its " + ask + " ?";
          t.belief = {{"DA:INFORM:PREFER:FURNITURE", {{"furniture-O", id}}},
                      {"DA:ASK:GET:FURNITURE." + ask, {{"furniture-O", id}}}};
        } else {
          t.user_utterance = "what is the " + ask + " of " + id + " ?";
          t.belief = {{"DA:ASK:GET:FURNITURE." + ask, {{"furniture-O", id}}}};
        }
        t.system_response = "the " + obj.class_name + " in " + obj.colors.front() +
                            " , let me check the " + ask + " .";
        t.action.attribute = attr(ask.c_str());
        break;
      }
      case 3:
        t.user_utterance = "tell me more about " + id + " .";
        t.belief = {{"DA:REQUEST:GET:FURNITURE.info", {{"furniture-O", id}}}};
        t.system_response = "sure , here is a closer look at the " + obj.class_name + " .";
        t.action.attribute = attr("info");
        break;
      case 4: {
        static const std::vector<std::string> dirs = {"back", "side", "front"};
        const std::string& dir = any(dirs);
        t.user_utterance = "can i see the " + dir + " of " + id + " ?";
        t.belief = {{"DA:REQUEST:ROTATE:FURNITURE",
                     {{"furniture-O", id}, {"furniture-direction", dir}}}};
        t.system_response = "rotating " + id + " to show the " + dir + " .";
        t.action.attribute = attr("direction");
        break;
      }
      case 5: {
        const std::string dir = pick(2) ? "next" : "previous";
        t.user_utterance = "show me the " + dir + " ones .";
        t.belief = {{"DA:REQUEST:NAVIGATE:FURNITURE", {{"furniture-navigate", dir}}}};
        t.system_response = "here are the " + dir + " items .";
        t.action.attribute = attr(dir.c_str());
        break;
      }
      default:
        t.user_utterance = "please add " + id + " to my cart .";
        t.belief = {{"DA:REQUEST:ADD_TO_CART:FURNITURE", {{"furniture-O", id}}}};
        t.system_response = id + " has been added to your cart .";
        t.action.attribute = attr("none");
        break;
    }
  }

  void fashion_turn(Turn& t, int action, const VisualObject& obj) {
    const std::string& id = obj.object_id;
    auto flag = [&](const std::string& name) {
      t.action.attribute_flags[static_cast<std::size_t>(manifest_.attribute_index(name))] = 1;
    };
    t.action.action = action;
    switch (action) {
      case 0:
        t.user_utterance = pick(2) ? "thanks , that is all i need ." : "ok thank you .";
        t.belief = {{"DA:THANK:GENERAL", {}}};
        t.system_response = "you are welcome .";
        break;
      case 1: {
        const std::string& color = any(kFashColors);
        const std::string& cls = any(kFashClasses);
        t.user_utterance = "do you have any " + color + " " + cls + " ?";
        t.belief = {{"DA:REQUEST:GET:CLOTHING",
                     {{"fashion-color", color}, {"fashion-type", cls}}}};
        t.system_response = "here is a " + color + " " + cls + " from our catalog .";
        flag("color");
        break;
      }
      case 2:
        t.user_utterance = "show me the one i liked earlier .";
        t.belief = {{"DA:REQUEST:GET:MEMORY", {}}};
        t.system_response = "here is the item you liked earlier .";
        break;
      case 3: {
        const int first = pick(static_cast<int>(kFashAsk.size()));
        const std::string& a1 = kFashAsk[static_cast<std::size_t>(first)];
        t.belief = {{"DA:ASK:GET:CLOTHING." + a1, {{"fashion-O", id}}}};
        flag(a1);
        if (pick(2)) {
          const std::string& a2 = kFashAsk[static_cast<std::size_t>(
              (first + 1 + pick(static_cast<int>(kFashAsk.size()) - 1)) %
              static_cast<int>(kFashAsk.size()))];
          t.user_utterance = "what is the " + a1 + " and " + a2 + " of " + id + " ?";
          t.belief.push_back({"DA:ASK:GET:CLOTHING." + a2, {{"fashion-O", id}}});
          t.system_response = "let me look up the " + a1 + " and " + a2 + " of " + id + " .";
          flag(a2);
        } else {
          t.user_utterance = "what is the " + a1 + " of " + id + " ?";
          t.system_response = "let me look up the " + a1 + " of " + id + " .";
        }
        break;
      }
      default:
        t.user_utterance = "please add " + id + " to my cart .";
        t.belief = {{"DA:REQUEST:ADD_TO_CART:CLOTHING", {{"fashion-O", id}}}};
        t.system_response = id + " has been added to your cart .";
        break;
    }
  }

  std::mt19937_64 rng_;
  Domain domain_;
  SynthOptions options_;
  const DomainManifest& manifest_;
};

}  // namespace

Corpus synth_corpus(std::uint64_t seed, int n_dialogues, Domain domain,
                    const SynthOptions& options) {
  if (n_dialogues < 1) throw std::invalid_argument("n_dialogues must be >= 1");
  Generator gen(seed, domain, options);
  Corpus out;
  out.reserve(static_cast<std::size_t>(n_dialogues));
  for (int i = 0; i < n_dialogues; ++i) out.push_back(gen.dialogue(i, seed));
  return out;
}

const std::vector<std::string>& intent_vocabulary(Domain domain) {
  static const std::vector<std::string> furniture = [] {
    std::vector<std::string> v = {"DA:THANK:GENERAL", "DA:REQUEST:GET:FURNITURE",
                                  "DA:INFORM:PREFER:FURNITURE"};
    for (const auto& a : kFurnAsk) v.push_back("DA:ASK:GET:FURNITURE." + a);
    v.insert(v.end(), {"DA:REQUEST:GET:FURNITURE.info", "DA:REQUEST:ROTATE:FURNITURE",
                       "DA:REQUEST:NAVIGATE:FURNITURE",
                       "DA:REQUEST:ADD_TO_CART:FURNITURE"});
    return v;
  }();
  static const std::vector<std::string> fashion = [] {
    std::vector<std::string> v = {"DA:THANK:GENERAL", "DA:REQUEST:GET:CLOTHING",
                                  "DA:REQUEST:GET:MEMORY"};
    for (const auto& a : kFashAsk) v.push_back("DA:ASK:GET:CLOTHING." + a);
    v.push_back("DA:REQUEST:ADD_TO_CART:CLOTHING");
    return v;
  }();
  return domain == Domain::Furniture ? furniture : fashion;
}

}  // namespace mmtod
