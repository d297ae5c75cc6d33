#pragma once

#include <cstddef>
#include <cstdint>
#include <limits>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "mmtod/corpus.hpp"
#include "mmtod/error.hpp"
#include "mmtod/tokenizer.hpp"

namespace mmtod {

enum class Segment : std::uint8_t { System = 0, User = 1, Belief = 2, Multimodal = 3 };
inline constexpr int kNumSegments = 4;

struct SerializerConfig {
  int history_turns = 2;          // T
  bool split_intent = true;       // SI
  bool segment_embedding = true;  // SE (consumed by the model)
  bool add_action = true;         // AA
  bool mask_history_loss = true;  // MHL
  bool multi_domain = true;       // MD: prepend <FURN>/<FASH>

  bool operator==(const SerializerConfig&) const = default;
};

struct SerializedExample {
  std::vector<int> tokens;
  std::vector<Segment> segment_ids;
  std::vector<std::uint8_t> loss_mask;  // 1 = contributes to the LM loss
  std::size_t eob_index = 0;
  std::size_t user_index = 0;  // first token of the current turn's "User :"
  int action_label = 0;
  int attribute_label = 0;                      // furniture
  std::vector<std::uint8_t> attribute_flags;    // fashion
  Domain domain = Domain::Furniture;
};

struct Prompt {
  std::vector<int> tokens;
  std::vector<Segment> segment_ids;
};

// A run of text sharing one segment id and one loss-mask value.
struct TextSpan {
  std::string text;
  Segment segment;
  bool loss;
};

class SequenceTooLong : public DataError {
 public:
  using DataError::DataError;
};

std::string flatten_visual(std::span<const VisualObject> objects);

// "DA:ASK:GET:FURNITURE.dimensions" -> "intent ask get furniture dimensions".
// Throws std::invalid_argument if the intent does not match DA(:SEG)*(.SUFFIX)?.
std::string split_intent(std::string_view intent);

std::string format_belief(std::span<const BeliefFrame> frames, const SerializerConfig& cfg);

// Never throws. With SI on, split intents are mapped back through
// `known_intents` (longest match); unknown split intents are kept verbatim.
std::vector<BeliefFrame> parse_belief(std::string_view text, const SerializerConfig& cfg,
                                      std::span<const std::string> known_intents = {});

// The full text layout of one training example as labelled spans.
std::vector<TextSpan> render_spans(const Dialogue& dialogue, std::size_t turn_index,
                                   const SerializerConfig& cfg);
std::string render_text(const Dialogue& dialogue, std::size_t turn_index,
                        const SerializerConfig& cfg);

SerializedExample build_example(const Dialogue& dialogue, std::size_t turn_index,
                                const SerializerConfig& cfg, const Tokenizer& vocab,
                                std::size_t max_len = std::numeric_limits<std::size_t>::max());

// build_example truncated after the belief prompt. The gold action is never
// part of the prompt.
Prompt context_prompt(const Dialogue& dialogue, std::size_t turn_index,
                      const SerializerConfig& cfg, const Tokenizer& vocab,
                      std::size_t max_len = std::numeric_limits<std::size_t>::max());

}  // namespace mmtod
