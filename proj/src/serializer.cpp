#include "mmtod/serializer.hpp"

#include <algorithm>
#include <cctype>
#include <map>
#include <stdexcept>

namespace mmtod {
namespace {

void append_list(std::string& out, std::span<const std::string> items) {
  out += " [";
  for (const auto& s : items) {
    out.push_back(' ');
    out += s;
  }
  out += " ]";
}

std::string join(std::span<const std::string> tokens, std::size_t from, std::size_t to) {
  std::string out;
  for (std::size_t i = from; i < to; ++i) {
    if (!out.empty()) out.push_back(' ');
    out += tokens[i];
  }
  return out;
}

std::string trim_normalize(std::string_view s) {
  std::string out;
  bool pending_space = false;
  for (char c : s) {
    if (std::isspace(static_cast<unsigned char>(c))) {
      pending_space = !out.empty();
      continue;
    }
    if (pending_space) out.push_back(' ');
    pending_space = false;
    out.push_back(c);
  }
  return out;
}

std::vector<Slot> parse_slots(std::string_view body) {
  std::vector<Slot> slots;
  std::size_t pos = 0;
  while (pos <= body.size()) {
    auto comma = body.find(',', pos);
    if (comma == std::string_view::npos) comma = body.size();
    std::string_view piece = body.substr(pos, comma - pos);
    pos = comma + 1;
    auto eq = piece.find('=');
    if (eq == std::string_view::npos || piece.find('=', eq + 1) != std::string_view::npos)
      continue;
    Slot s{trim_normalize(piece.substr(0, eq)), trim_normalize(piece.substr(eq + 1))};
    if (s.key.empty() || s.value.empty()) continue;
    slots.push_back(std::move(s));
  }
  return slots;
}

}  // namespace

std::string flatten_visual(std::span<const VisualObject> objects) {
  std::string out;
  for (const auto& o : objects) {
    if (!out.empty()) out.push_back(' ');
    out += o.object_id + " : pos " + o.position + " color";
    append_list(out, o.colors);
    out += " class_name " + o.class_name + " decor_style";
    append_list(out, o.decor_styles);
    for (const auto& [key, values] : o.extra) {
      out += " " + key;
      append_list(out, values);
    }
  }
  return out;
}

std::string split_intent(std::string_view intent) {
  if (intent != "DA" && !is_valid_intent(intent))
    throw std::invalid_argument("malformed intent '" + std::string(intent) + "'");
  std::string out = "intent";
  for (char c : intent.substr(2)) {
    if (c == ':' || c == '.')
      out.push_back(' ');
    else
      out.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(c))));
  }
  return out;
}

std::string format_belief(std::span<const BeliefFrame> frames, const SerializerConfig& cfg) {
  std::string out;
  for (const auto& f : frames) {
    if (!out.empty()) out.push_back(' ');
    out += cfg.split_intent ? split_intent(f.intent) : f.intent;
    out += " [";
    for (std::size_t i = 0; i < f.slots.size(); ++i) {
      out += i == 0 ? " " : ", ";
      out += f.slots[i].key + " = " + f.slots[i].value;
    }
    out += " ]";
  }
  return out;
}

std::vector<BeliefFrame> parse_belief(std::string_view text, const SerializerConfig& cfg,
                                      std::span<const std::string> known_intents) {
  std::map<std::string, std::string> canonical;
  if (cfg.split_intent) {
    for (const auto& intent : known_intents) {
      try {
        canonical.emplace(split_intent(intent), intent);
      } catch (const std::invalid_argument&) {
      }
    }
  }

  std::vector<std::string> tokens;
  for (auto& t : split_tokens(text)) tokens.push_back(std::move(t));

  std::vector<BeliefFrame> frames;
  std::size_t head_begin = 0;
  std::size_t i = 0;
  while (i < tokens.size()) {
    if (tokens[i] != "[") {
      ++i;
      continue;
    }
    const std::size_t open = i;
    std::size_t close = open + 1;
    while (close < tokens.size() && tokens[close] != "]" && tokens[close] != "[") ++close;
    if (close >= tokens.size()) break;  // unterminated frame: discard the tail
    if (tokens[close] == "[") {
      // Malformed: restart with the slot tokens as the next frame's head.
      head_begin = open + 1;
      i = close;
      continue;
    }

    std::string intent;
    if (open > head_begin) {
      if (!cfg.split_intent) {
        intent = tokens[open - 1];
      } else {
        std::size_t best = open;
        for (std::size_t s = head_begin; s < open; ++s) {
          if (tokens[s] == "intent" && canonical.count(join(tokens, s, open))) {
            best = s;
            break;  // earliest start = longest match
          }
        }
        if (best < open) {
          intent = canonical.at(join(tokens, best, open));
        } else {
          std::size_t start = head_begin;
          for (std::size_t s = head_begin; s < open; ++s)
            if (tokens[s] == "intent") start = s;
          intent = join(tokens, start, open);
        }
      }
    }
    if (!intent.empty())
      frames.push_back({std::move(intent), parse_slots(join(tokens, open + 1, close))});
    head_begin = close + 1;
    i = close + 1;
  }
  return frames;
}

std::vector<TextSpan> render_spans(const Dialogue& dialogue, std::size_t turn_index,
                                   const SerializerConfig& cfg) {
  if (turn_index >= dialogue.turns.size())
    throw std::out_of_range("turn index " + std::to_string(turn_index) + " out of range for " +
                            dialogue.dialogue_id);
  if (cfg.history_turns < 1) throw std::invalid_argument("history_turns must be >= 1");
  const bool mask = cfg.mask_history_loss;
  std::vector<TextSpan> spans;
  if (cfg.multi_domain)
    spans.push_back({std::string(special::domain_token(dialogue.domain)), Segment::System, !mask});

  const std::size_t window = static_cast<std::size_t>(cfg.history_turns);
  const std::size_t first = turn_index + 1 > window ? turn_index + 1 - window : 0;
  for (std::size_t k = first; k <= turn_index; ++k) {
    const bool current = k == turn_index;
    if (k > 0) {
      const Turn& prev = dialogue.turns[k - 1];
      std::string sys(special::kSystemPrefix);
      if (cfg.add_action) sys += " " + special::action_token(prev.action.action);
      sys += " " + prev.system_response;
      spans.push_back({std::move(sys), Segment::System, !mask});
    }
    const Turn& turn = dialogue.turns[k];
    spans.push_back({std::string(special::kUserPrefix) + " " + turn.user_utterance, Segment::User,
                     current || !mask});
    spans.push_back({std::string(special::kStartMultimodal) + " " + flatten_visual(turn.visual) +
                         " " + std::string(special::kEndMultimodal),
                     Segment::Multimodal, current || !mask});
  }

  const Turn& turn = dialogue.turns[turn_index];
  spans.push_back({std::string(special::kBeliefPrompt), Segment::Belief, true});
  spans.push_back({format_belief(turn.belief, cfg), Segment::Belief, true});
  spans.push_back({std::string(special::kEndOfBelief), Segment::Belief, true});
  std::string target;
  if (cfg.add_action) target = special::action_token(turn.action.action) + " ";
  target += turn.system_response + " " + std::string(special::kEndOfSequence);
  spans.push_back({std::move(target), Segment::Belief, true});
  return spans;
}

std::string render_text(const Dialogue& dialogue, std::size_t turn_index,
                        const SerializerConfig& cfg) {
  std::string out;
  for (const auto& s : render_spans(dialogue, turn_index, cfg)) {
    if (!out.empty()) out.push_back(' ');
    out += s.text;
  }
  return normalize_space(out);
}

namespace {

// Spans are: [domain] {system? user multimodal}* prompt belief eob target.
constexpr std::size_t kTailSpans = 4;

}  // namespace

SerializedExample build_example(const Dialogue& dialogue, std::size_t turn_index,
                                const SerializerConfig& cfg, const Tokenizer& vocab,
                                std::size_t max_len) {
  const auto spans = render_spans(dialogue, turn_index, cfg);
  const std::size_t current_user = spans.size() - kTailSpans - 2;
  const std::size_t eob_span = spans.size() - 2;

  SerializedExample ex;
  for (std::size_t s = 0; s < spans.size(); ++s) {
    if (s == current_user) ex.user_index = ex.tokens.size();
    if (s == eob_span) ex.eob_index = ex.tokens.size();
    for (int id : vocab.encode(spans[s].text)) {
      ex.tokens.push_back(id);
      ex.segment_ids.push_back(spans[s].segment);
      ex.loss_mask.push_back(spans[s].loss ? 1 : 0);
    }
  }
  if (ex.tokens.size() > max_len)
    throw SequenceTooLong(dialogue.dialogue_id + " turn " + std::to_string(turn_index) + ": " +
                          std::to_string(ex.tokens.size()) + " tokens exceed the maximum of " +
                          std::to_string(max_len));
  const Turn& turn = dialogue.turns[turn_index];
  ex.action_label = turn.action.action;
  ex.attribute_label = turn.action.attribute;
  ex.attribute_flags = turn.action.attribute_flags;
  ex.domain = dialogue.domain;
  return ex;
}

Prompt context_prompt(const Dialogue& dialogue, std::size_t turn_index,
                      const SerializerConfig& cfg, const Tokenizer& vocab, std::size_t max_len) {
  const auto spans = render_spans(dialogue, turn_index, cfg);
  const std::size_t prompt_end = spans.size() - kTailSpans + 1;  // through the belief prompt
  Prompt p;
  for (std::size_t s = 0; s < prompt_end; ++s) {
    for (int id : vocab.encode(spans[s].text)) {
      p.tokens.push_back(id);
      p.segment_ids.push_back(spans[s].segment);
    }
  }
  if (p.tokens.size() > max_len)
    throw SequenceTooLong(dialogue.dialogue_id + " turn " + std::to_string(turn_index) +
                          ": prompt of " + std::to_string(p.tokens.size()) +
                          " tokens exceeds the maximum of " + std::to_string(max_len));
  return p;
}

}  // namespace mmtod
