#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace mmtod {

enum class Domain { Furniture, Fashion };

std::string_view domain_name(Domain domain);  // "furniture" / "fashion"
Domain parse_domain(std::string_view name);   // throws UsageError

// Ordered class-name vocabularies for one domain; class index = position.
struct DomainManifest {
  Domain domain = Domain::Furniture;
  std::vector<std::string> actions;
  std::vector<std::string> attributes;

  int action_index(std::string_view name) const;     // -1 when unknown
  int attribute_index(std::string_view name) const;  // -1 when unknown
};

// 7 actions / 60 attributes for furniture, 5 / 7 for fashion.
const DomainManifest& default_manifest(Domain domain);
DomainManifest load_manifest(const std::filesystem::path& path);

struct VisualObject {
  std::string object_id;
  std::string position;
  std::vector<std::string> colors;
  std::string class_name;
  std::vector<std::string> decor_styles;
  // Attributes beyond the four named ones, in file order.
  std::vector<std::pair<std::string, std::vector<std::string>>> extra;

  bool operator==(const VisualObject&) const = default;
};

struct Slot {
  std::string key;
  std::string value;

  bool operator==(const Slot&) const = default;
  auto operator<=>(const Slot&) const = default;
};

struct BeliefFrame {
  std::string intent;  // e.g. "DA:ASK:GET:FURNITURE.dimensions"
  std::vector<Slot> slots;

  bool operator==(const BeliefFrame&) const = default;
};

// One API call per turn. Furniture carries a single attribute class in
// `attribute`; fashion carries a binary vector (one flag per attribute class)
// in `attribute_flags`. The unused field stays at its default.
struct ApiAction {
  int action = 0;
  int attribute = 0;
  std::vector<std::uint8_t> attribute_flags;

  bool operator==(const ApiAction&) const = default;
};

struct Turn {
  std::string user_utterance;
  std::string system_response;
  ApiAction action;
  std::vector<VisualObject> visual;
  std::vector<BeliefFrame> belief;

  bool operator==(const Turn&) const = default;
};

struct Dialogue {
  std::string dialogue_id;
  Domain domain = Domain::Furniture;
  std::vector<Turn> turns;

  bool operator==(const Dialogue&) const = default;
};

using Corpus = std::vector<Dialogue>;

// ---- validation -----------------------------------------------------------

struct Violation {
  std::string dialogue_id;
  int turn = -1;  // -1 for dialogue-level problems
  std::string field;
  std::string message;
};

std::vector<Violation> validate(const Corpus& dialogues);
std::vector<Violation> validate(const Corpus& dialogues,
                                const DomainManifest& furniture,
                                const DomainManifest& fashion);

// Intent grammar: DA(:SEGMENT)+(.SUFFIX)?
bool is_valid_intent(std::string_view intent);
// Slot keys/values: non-empty, single-space normalized, no '=' ',' '[' ']'.
bool is_valid_slot_text(std::string_view text);

// ---- JSONL ingestion ------------------------------------------------------

// Throws DataError with the 1-based line number and a field path on schema
// or invariant violations; std::runtime_error-derived DataError on I/O.
Corpus load_corpus(const std::filesystem::path& path, Domain domain);
Corpus load_corpus(const std::filesystem::path& path,
                   const DomainManifest& manifest);

Corpus parse_corpus(std::string_view jsonl, const DomainManifest& manifest);
std::string dialogue_to_jsonl(const Dialogue& dialogue,
                              const DomainManifest& manifest);
void write_corpus(const std::filesystem::path& path, const Corpus& dialogues);

// ---- synthetic corpora ----------------------------------------------------

struct SynthOptions {
  // Draw the action independently of the user utterance and make the
  // response a pure function of the action. Contexts collide heavily, so
  // responses are only predictable when the action is injected.
  bool action_conditioned = false;
};

Corpus synth_corpus(std::uint64_t seed, int n_dialogues, Domain domain,
                    const SynthOptions& options = {});

// Every canonical intent synth_corpus can emit for the domain.
const std::vector<std::string>& intent_vocabulary(Domain domain);

double mean_turns(const Corpus& dialogues);

}  // namespace mmtod
