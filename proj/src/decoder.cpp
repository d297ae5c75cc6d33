#include "mmtod/decoder.hpp"

#include <algorithm>
#include <fstream>
#include <limits>
#include <map>
#include <numeric>
#include <random>
#include <set>

#include "mmtod/error.hpp"

namespace mmtod {
namespace {

int argmax_lowest(const RowVector& v) {
  int best = 0;
  for (Eigen::Index i = 1; i < v.size(); ++i)
    if (v(i) > v(best)) best = static_cast<int>(i);
  return best;
}

std::uint64_t fnv1a(std::string_view text) {
  std::uint64_t h = 14695981039346656037ull;
  for (unsigned char c : text) {
    h ^= c;
    h *= 1099511628211ull;
  }
  return h;
}

std::string words_only(const Vocab& vocab, std::span<const int> ids) {
  std::vector<int> kept;
  for (int id : ids)
    if (!vocab.is_special_id(id)) kept.push_back(id);
  return vocab.decode(kept);
}

}  // namespace

Generation greedy_generate(const Parameters& params, const ModelConfig& cfg, std::span<const int> prompt,
                           std::span<const Segment> segments, const Vocab& vocab,
                           const GenerateOptions& options) {
  const int eob = vocab.id_of(special::kEndOfBelief);
  const int eos = vocab.id_of(special::kEndOfSequence);
  std::vector<int> context(prompt.begin(), prompt.end());
  std::vector<Segment> segs(segments.begin(), segments.end());
  bool eob_allowed = options.eob_allowed && std::find(context.begin(), context.end(), eob) == context.end();

  Generation g;
  while (true) {
    if (g.ids.size() >= options.max_new_tokens ||
        context.size() >= static_cast<std::size_t>(cfg.max_seq_len)) {
      g.truncated = true;
      break;
    }
    const ForwardCache cache = forward(params, context, segs, cfg, /*last_logits_only=*/true);
    RowVector logits = cache.logits.row(0);
    if (!eob_allowed) logits(eob) = -std::numeric_limits<double>::infinity();
    const int next = argmax_lowest(logits);
    context.push_back(next);
    segs.push_back(Segment::Belief);
    g.ids.push_back(next);
    if (next == eos) {
      g.eos = true;
      break;
    }
    if (next == eob) {
      g.eob = true;
      eob_allowed = false;
      if (options.stop_at_eob) break;
    }
  }
  return g;
}

ApiPrediction predict_api(const Parameters& params, const RowVector& hidden, Domain domain) {
  ApiPrediction p;
  const auto& action_head_params = params.heads[static_cast<std::size_t>(action_head(domain))];
  const RowVector action_probs = softmax(classifier_forward(action_head_params, hidden));
  p.action_probs.assign(action_probs.data(), action_probs.data() + action_probs.size());
  p.action.action = argmax_lowest(action_probs);

  const auto& attr_head_params = params.heads[static_cast<std::size_t>(attribute_head(domain))];
  const RowVector attr_logits = classifier_forward(attr_head_params, hidden);
  if (domain == Domain::Furniture) {
    const RowVector probs = softmax(attr_logits);
    p.attribute_probs.assign(probs.data(), probs.data() + probs.size());
    p.action.attribute = argmax_lowest(probs);
  } else {
    const RowVector probs = sigmoid(attr_logits);
    p.attribute_probs.assign(probs.data(), probs.data() + probs.size());
    for (double v : p.attribute_probs) p.action.attribute_flags.push_back(v > 0.5 ? 1 : 0);
  }
  return p;
}

Generation respond_with_action(const TrainedModel& model, std::vector<int> context,
                               std::vector<Segment> segments, int action, std::size_t max_new_tokens) {
  if (action < 0) {
    GenerateOptions o;
    o.max_new_tokens = max_new_tokens;
    return greedy_generate(model.params, model.model, context, segments, model.vocab, o);
  }
  Generation g;
  if (max_new_tokens == 0 || context.size() >= static_cast<std::size_t>(model.model.max_seq_len)) {
    g.truncated = true;
    return g;
  }
  const int forced = model.vocab.id_of(special::action_token(action));
  context.push_back(forced);
  segments.push_back(Segment::Belief);
  GenerateOptions o;
  o.max_new_tokens = max_new_tokens - 1;
  g = greedy_generate(model.params, model.model, context, segments, model.vocab, o);
  g.ids.insert(g.ids.begin(), forced);
  return g;
}

TurnPrediction decode_turn(const TrainedModel& model, const Dialogue& dialogue, std::size_t turn,
                           const DecodeOptions& options) {
  if (!model.has_domain(dialogue.domain))
    throw DataError("model has no trained heads for domain '" +
                    std::string(domain_name(dialogue.domain)) + "'");
  const auto max_len = static_cast<std::size_t>(model.model.max_seq_len);
  const Prompt prompt = context_prompt(dialogue, turn, model.serializer, model.vocab, max_len);

  TurnPrediction tp;
  tp.dialogue_id = dialogue.dialogue_id;
  tp.turn = turn;
  tp.domain = dialogue.domain;

  GenerateOptions first;
  first.max_new_tokens = options.max_new_tokens;
  first.stop_at_eob = true;
  const Generation belief =
      greedy_generate(model.params, model.model, prompt.tokens, prompt.segment_ids, model.vocab, first);

  std::vector<int> context = prompt.tokens;
  std::vector<Segment> segments = prompt.segment_ids;
  context.insert(context.end(), belief.ids.begin(), belief.ids.end());
  segments.resize(context.size(), Segment::Belief);

  // The heads read the "<EOB>" position, or the last position when absent.
  const ForwardCache cache = forward(model.params, context, segments, model.model, true);
  tp.api = predict_api(model.params, cache.hidden.bottomRows(1), dialogue.domain);
  tp.generated = belief.ids;

  const int eos = model.vocab.id_of(special::kEndOfSequence);
  std::vector<int> response_ids;
  if (belief.eob) {
    tp.eob_found = true;
    const std::vector<int> belief_ids(belief.ids.begin(), belief.ids.end() - 1);
    tp.belief_text = model.vocab.decode(belief_ids);
    tp.frames = parse_belief(tp.belief_text, model.serializer, model.intents);
    if (model.serializer.add_action)
      tp.forced_action = options.gt_action ? dialogue.turns[turn].action.action : tp.api.action.action;
    const Generation rest = respond_with_action(model, context, segments, tp.forced_action,
                                                options.max_new_tokens - belief.ids.size());
    tp.generated.insert(tp.generated.end(), rest.ids.begin(), rest.ids.end());
    tp.truncated = rest.truncated;
    response_ids.assign(rest.ids.begin() + (tp.forced_action >= 0 && !rest.ids.empty() ? 1 : 0),
                        rest.ids.end());
  } else {
    tp.truncated = belief.truncated;
    response_ids = belief.ids;
  }
  if (!response_ids.empty() && response_ids.back() == eos) response_ids.pop_back();
  tp.response = words_only(model.vocab, response_ids);
  return tp;
}

std::vector<int> rank_candidates(std::string_view generated, std::span<const std::string> candidates) {
  std::vector<double> scores(candidates.size());
  for (std::size_t i = 0; i < candidates.size(); ++i) scores[i] = sentence_bleu4(candidates[i], generated);
  std::vector<std::size_t> order(candidates.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });
  std::vector<int> ranks(candidates.size());
  for (std::size_t r = 0; r < order.size(); ++r) ranks[order[r]] = static_cast<int>(r);
  return ranks;
}

std::vector<CandidatePool> make_candidate_pools(const Corpus& corpus, std::size_t pool_size) {
  if (pool_size < 1) throw std::invalid_argument("candidate pools need at least one slot");
  std::set<std::string> unique;
  for (const auto& d : corpus)
    for (const auto& t : d.turns) unique.insert(normalize_space(t.system_response));
  const std::vector<std::string> responses(unique.begin(), unique.end());

  std::vector<CandidatePool> pools;
  for (const auto& d : corpus) {
    for (std::size_t t = 0; t < d.turns.size(); ++t) {
      CandidatePool pool;
      pool.dialogue_id = d.dialogue_id;
      pool.turn = t;
      const std::string gold = normalize_space(d.turns[t].system_response);
      std::mt19937_64 rng(fnv1a(d.dialogue_id + "#" + std::to_string(t)));

      std::vector<std::string> others;
      for (const auto& r : responses)
        if (r != gold) others.push_back(r);
      const std::size_t need = pool_size - 1;
      if (others.size() >= need) {
        std::shuffle(others.begin(), others.end(), rng);
        others.resize(need);
      } else if (!others.empty()) {
        std::uniform_int_distribution<std::size_t> pick(0, others.size() - 1);
        std::vector<std::string> drawn;
        for (std::size_t i = 0; i < need; ++i) drawn.push_back(others[pick(rng)]);
        others = std::move(drawn);
      } else {
        others.assign(need, std::string());
      }
      pool.gt_index = static_cast<int>(std::uniform_int_distribution<std::size_t>(0, need)(rng));
      pool.candidates = std::move(others);
      pool.candidates.insert(pool.candidates.begin() + pool.gt_index, gold);
      pools.push_back(std::move(pool));
    }
  }
  return pools;
}

void save_candidate_pools(const std::filesystem::path& path, std::span<const CandidatePool> pools) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write " + path.string());
  for (const auto& p : pools) {
    nlohmann::ordered_json j;
    j["dialogue_id"] = p.dialogue_id;
    j["turn"] = p.turn;
    j["gt_index"] = p.gt_index;
    j["candidates"] = p.candidates;
    out << j.dump() << '\n';
  }
}

std::vector<CandidatePool> load_candidate_pools(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open candidates " + path.string());
  std::vector<CandidatePool> pools;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (normalize_space(line).empty()) continue;
    try {
      const auto j = nlohmann::json::parse(line);
      CandidatePool p;
      p.dialogue_id = j.at("dialogue_id").get<std::string>();
      p.turn = j.at("turn").get<std::size_t>();
      p.gt_index = j.at("gt_index").get<int>();
      p.candidates = j.at("candidates").get<std::vector<std::string>>();
      if (p.candidates.empty() || p.gt_index < 0 ||
          static_cast<std::size_t>(p.gt_index) >= p.candidates.size())
        throw DataError("gt_index outside the candidate list");
      pools.push_back(std::move(p));
    } catch (const std::exception& e) {
      throw DataError(path.string() + ": line " + std::to_string(line_no) + ": " + e.what());
    }
  }
  return pools;
}

Evaluation evaluate(const TrainedModel& model, const Corpus& corpus, std::span<const CandidatePool> pools,
                    const DecodeOptions& options, SlotMatching matching) {
  if (corpus.empty()) throw DataError("cannot evaluate an empty corpus");
  for (const auto& d : corpus)
    if (!model.has_domain(d.domain))
      throw DataError("model has no trained heads for domain '" + std::string(domain_name(d.domain)) +
                      "' (dialogue " + d.dialogue_id + ")");

  std::vector<CandidatePool> generated_pools;
  if (pools.empty()) {
    generated_pools = make_candidate_pools(corpus);
    pools = generated_pools;
  }
  std::map<std::pair<std::string, std::size_t>, const CandidatePool*> by_turn;
  for (const auto& p : pools) by_turn[{p.dialogue_id, p.turn}] = &p;
  const std::size_t pool_size = pools.front().candidates.size();

  Evaluation ev;
  std::vector<std::vector<double>> action_probs;
  std::vector<int> gold_actions;
  std::array<std::vector<ApiAction>, 2> predicted_api, gold_api;
  std::vector<std::vector<BeliefFrame>> predicted_frames, gold_frames;
  std::vector<std::string> hypotheses, references;
  std::vector<int> gt_ranks;

  for (const auto& d : corpus) {
    for (std::size_t t = 0; t < d.turns.size(); ++t) {
      auto it = by_turn.find({d.dialogue_id, t});
      if (it == by_turn.end())
        throw DataError("no candidate pool for " + d.dialogue_id + " turn " + std::to_string(t));
      const CandidatePool& pool = *it->second;
      if (pool.candidates.size() != pool_size)
        throw DataError("candidate pools differ in size (" + d.dialogue_id + " turn " +
                        std::to_string(t) + ")");

      TurnPrediction tp = decode_turn(model, d, t, options);
      tp.candidate_ranks = rank_candidates(tp.response, pool.candidates);
      tp.gt_rank = tp.candidate_ranks[static_cast<std::size_t>(pool.gt_index)];

      const Turn& gold = d.turns[t];
      action_probs.push_back(tp.api.action_probs);
      gold_actions.push_back(gold.action.action);
      const auto di = static_cast<std::size_t>(d.domain);
      predicted_api[di].push_back(tp.api.action);
      gold_api[di].push_back(gold.action);
      predicted_frames.push_back(tp.frames);
      gold_frames.push_back(gold.belief);
      hypotheses.push_back(tp.response);
      references.push_back(normalize_space(gold.system_response));
      gt_ranks.push_back(tp.gt_rank);
      if (!tp.eob_found) ++ev.report.missing_eob;
      ev.turns.push_back(std::move(tp));
    }
  }

  MetricsReport& r = ev.report;
  r.turns = gold_actions.size();
  const ActionScores act = action_metrics(action_probs, gold_actions);
  r.action_accuracy = act.accuracy;
  r.action_perplexity = act.perplexity;
  r.floored_probabilities = act.floored;

  double exact = 0.0;
  Counts attr_counts;
  for (Domain dom : {Domain::Furniture, Domain::Fashion}) {
    const auto di = static_cast<std::size_t>(dom);
    if (gold_api[di].empty()) continue;
    const AttributeScores a = attribute_metrics(predicted_api[di], gold_api[di], dom);
    exact += a.accuracy * static_cast<double>(gold_api[di].size());
    attr_counts += a.counts;
  }
  r.attribute_accuracy = exact / static_cast<double>(r.turns);
  r.attribute_f1 = f1(attr_counts);
  r.attribute_convention = gold_api[1].empty() ? "accuracy" : "micro_f1";

  r.bleu4 = bleu4(hypotheses, references);
  const RetrievalScores ret = retrieval_metrics(gt_ranks, static_cast<int>(pool_size));
  r.num_candidates = static_cast<int>(pool_size);
  r.recall_at_1 = ret.recall_at_1;
  r.recall_at_5 = ret.recall_at_5;
  r.recall_at_10 = ret.recall_at_10;
  r.mean_rank = ret.mean_rank;
  r.mrr = ret.mrr;

  const BeliefScores bel = belief_metrics(predicted_frames, gold_frames, matching);
  r.intent_f1 = bel.intent_f1;
  r.slot_f1 = bel.slot_f1;
  r.joint_accuracy = bel.joint_accuracy;
  return ev;
}

nlohmann::ordered_json prediction_to_json(const TurnPrediction& p) {
  const DomainManifest& manifest = default_manifest(p.domain);
  nlohmann::ordered_json frames = nlohmann::ordered_json::array();
  for (const auto& f : p.frames) {
    nlohmann::ordered_json slots = nlohmann::ordered_json::array();
    for (const auto& s : f.slots) slots.push_back({s.key, s.value});
    frames.push_back({{"intent", f.intent}, {"slots", slots}});
  }
  nlohmann::ordered_json attributes = nlohmann::ordered_json::array();
  const auto attr_name = [&](int i) {
    return static_cast<std::size_t>(i) < manifest.attributes.size()
               ? manifest.attributes[static_cast<std::size_t>(i)]
               : std::to_string(i);
  };
  if (p.domain == Domain::Furniture) {
    attributes.push_back(attr_name(p.api.action.attribute));
  } else {
    for (std::size_t i = 0; i < p.api.action.attribute_flags.size(); ++i)
      if (p.api.action.attribute_flags[i]) attributes.push_back(attr_name(static_cast<int>(i)));
  }
  const auto action = static_cast<std::size_t>(p.api.action.action);
  nlohmann::ordered_json j;
  j["dialogue_id"] = p.dialogue_id;
  j["turn"] = p.turn;
  j["domain"] = std::string(domain_name(p.domain));
  j["belief_frames"] = frames;
  j["action"] = action < manifest.actions.size() ? manifest.actions[action] : std::to_string(action);
  j["action_probs"] = p.api.action_probs;
  j["attributes"] = attributes;
  j["response"] = p.response;
  j["eob_found"] = p.eob_found;
  j["truncated"] = p.truncated;
  j["gt_rank"] = p.gt_rank;
  j["candidate_ranks"] = p.candidate_ranks;
  return j;
}

}  // namespace mmtod
