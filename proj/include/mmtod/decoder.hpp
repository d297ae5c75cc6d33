#pragma once

#include <cstddef>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"
#include "mmtod/checkpoint.hpp"
#include "mmtod/metrics.hpp"

namespace mmtod {

struct GenerateOptions {
  std::size_t max_new_tokens = 128;
  bool stop_at_eob = false;  // return right after the first "<EOB>"
  bool eob_allowed = true;   // false once the context already holds "<EOB>"
};

struct Generation {
  std::vector<int> ids;     // new tokens only
  bool eos = false;         // ended on "<EOS>"
  bool eob = false;         // "<EOB>" emitted
  bool truncated = false;   // budget or max_seq_len reached first
};

// Greedy decoding: appends the argmax token (lowest id on ties) with the
// Belief segment until "<EOS>", the budget, or the model's maximum length.
// "<EOB>" can be emitted at most once.
Generation greedy_generate(const Parameters& params, const ModelConfig& cfg,
                           std::span<const int> prompt, std::span<const Segment> segments,
                           const Vocab& vocab, const GenerateOptions& options = {});

struct ApiPrediction {
  ApiAction action;
  std::vector<double> action_probs;
  std::vector<double> attribute_probs;  // softmax (furniture) or sigmoid (fashion)
};

// Heads of `domain` applied to one hidden state. Fashion attributes are on
// when sigmoid > 0.5.
ApiPrediction predict_api(const Parameters& params, const RowVector& hidden, Domain domain);

struct DecodeOptions {
  std::size_t max_new_tokens = 128;  // budget for belief + response together
  bool gt_action = true;             // force the gold action after "<EOB>" (AA on)
};

struct TurnPrediction {
  std::string dialogue_id;
  std::size_t turn = 0;
  Domain domain = Domain::Furniture;
  std::string belief_text;
  std::vector<BeliefFrame> frames;
  ApiPrediction api;
  bool eob_found = false;
  bool truncated = false;
  int forced_action = -1;  // action token appended after "<EOB>", -1 when none
  std::vector<int> generated;  // every new token after the prompt, forced one included
  std::string response;
  std::vector<int> candidate_ranks;
  int gt_rank = -1;
};

// After "<EOB>", appends `action` as "<ACT_i>" and decodes the response
// greedily. Without AA the continuation is plain greedy decoding.
Generation respond_with_action(const TrainedModel& model, std::vector<int> context,
                               std::vector<Segment> segments, int action,
                               std::size_t max_new_tokens);

// Belief, API and response for one turn.
TurnPrediction decode_turn(const TrainedModel& model, const Dialogue& dialogue, std::size_t turn,
                           const DecodeOptions& options = {});

// Sentence BLEU of every candidate against `generated`, sorted descending
// with ties broken by candidate index. Returns each candidate's 0-based rank.
std::vector<int> rank_candidates(std::string_view generated, std::span<const std::string> candidates);

struct CandidatePool {
  std::string dialogue_id;
  std::size_t turn = 0;
  std::vector<std::string> candidates;
  int gt_index = 0;

  bool operator==(const CandidatePool&) const = default;
};

// One pool per turn: the gold response plus distractors drawn from other
// turns' responses. The RNG is seeded from a hash of the dialogue id and turn.
std::vector<CandidatePool> make_candidate_pools(const Corpus& corpus, std::size_t pool_size = 100);
void save_candidate_pools(const std::filesystem::path& path, std::span<const CandidatePool> pools);
std::vector<CandidatePool> load_candidate_pools(const std::filesystem::path& path);  // DataError

struct Evaluation {
  MetricsReport report;
  std::vector<TurnPrediction> turns;
};

// Decodes every turn. Throws DataError when the corpus has a domain the
// model was not trained on or a turn has no candidate pool.
Evaluation evaluate(const TrainedModel& model, const Corpus& corpus,
                    std::span<const CandidatePool> pools, const DecodeOptions& options = {},
                    SlotMatching matching = SlotMatching::Pooled);

nlohmann::ordered_json prediction_to_json(const TurnPrediction& p);

}  // namespace mmtod
