#include "mmtod/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <map>
#include <stdexcept>
#include <tuple>

#include "mmtod/tokenizer.hpp"

namespace mmtod {
namespace {

using NgramCounts = std::map<std::vector<std::string>, std::size_t>;

NgramCounts ngrams(const std::vector<std::string>& words, std::size_t n) {
  NgramCounts counts;
  for (std::size_t i = 0; i + n <= words.size(); ++i)
    ++counts[std::vector<std::string>(words.begin() + static_cast<std::ptrdiff_t>(i),
                                      words.begin() + static_cast<std::ptrdiff_t>(i + n))];
  return counts;
}

struct BleuStats {
  std::array<double, 4> matches{};
  std::array<double, 4> totals{};
  double hyp_len = 0;
  double ref_len = 0;
};

void accumulate(BleuStats& s, std::string_view hypothesis, std::string_view reference) {
  const auto hyp = split_tokens(hypothesis);
  const auto ref = split_tokens(reference);
  s.hyp_len += static_cast<double>(hyp.size());
  s.ref_len += static_cast<double>(ref.size());
  for (std::size_t n = 1; n <= 4; ++n) {
    const auto h = ngrams(hyp, n);
    const auto r = ngrams(ref, n);
    for (const auto& [gram, count] : h) {
      auto it = r.find(gram);
      if (it != r.end()) s.matches[n - 1] += static_cast<double>(std::min(count, it->second));
      s.totals[n - 1] += static_cast<double>(count);
    }
  }
}

double combine(const BleuStats& s, bool smooth) {
  if (s.hyp_len == 0) return 0.0;
  double log_sum = 0.0;
  for (std::size_t n = 0; n < 4; ++n) {
    double m = s.matches[n], t = s.totals[n];
    if (smooth && n > 0) {
      m += 1.0;
      t += 1.0;
    }
    if (m == 0.0 || t == 0.0) return 0.0;
    log_sum += std::log(m / t);
  }
  const double bp = s.hyp_len < s.ref_len ? std::exp(1.0 - s.ref_len / s.hyp_len) : 1.0;
  return bp * std::exp(log_sum / 4.0);
}

template <typename T>
Counts multiset_counts(std::vector<T> predicted, std::vector<T> gold) {
  std::sort(predicted.begin(), predicted.end());
  std::sort(gold.begin(), gold.end());
  std::vector<T> common;
  std::set_intersection(predicted.begin(), predicted.end(), gold.begin(), gold.end(),
                        std::back_inserter(common));
  return {common.size(), predicted.size() - common.size(), gold.size() - common.size()};
}

using SlotItem = std::tuple<std::string, std::string, std::string>;

std::vector<std::string> intents_of(const std::vector<BeliefFrame>& frames) {
  std::vector<std::string> out;
  for (const auto& f : frames) out.push_back(f.intent);
  return out;
}

std::vector<SlotItem> slots_of(const std::vector<BeliefFrame>& frames, SlotMatching matching) {
  std::vector<SlotItem> out;
  for (const auto& f : frames)
    for (const auto& s : f.slots)
      out.emplace_back(matching == SlotMatching::IntentScoped ? f.intent : std::string(),
                       normalize_space(s.key), normalize_space(s.value));
  return out;
}

std::string fixed(double v, int digits) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", digits, v);
  return buf;
}

}  // namespace

double bleu4(std::span<const std::string> hypotheses, std::span<const std::string> references) {
  if (hypotheses.size() != references.size())
    throw std::invalid_argument("bleu4: hypothesis/reference count mismatch");
  if (hypotheses.empty()) throw std::invalid_argument("bleu4: no hypotheses");
  BleuStats s;
  for (std::size_t i = 0; i < hypotheses.size(); ++i) accumulate(s, hypotheses[i], references[i]);
  return combine(s, false);
}

double sentence_bleu4(std::string_view hypothesis, std::string_view reference) {
  BleuStats s;
  accumulate(s, hypothesis, reference);
  return combine(s, true);
}

double recall_at(std::span<const int> ranks, int k, int num_candidates) {
  if (ranks.empty()) throw std::invalid_argument("recall_at: no ranks");
  std::size_t hits = 0;
  for (int r : ranks) {
    if (r < 0 || r >= num_candidates)
      throw std::out_of_range("rank " + std::to_string(r) + " outside [0, " +
                              std::to_string(num_candidates) + ")");
    if (k > r) ++hits;
  }
  return static_cast<double>(hits) / static_cast<double>(ranks.size());
}

RetrievalScores retrieval_metrics(std::span<const int> ranks, int num_candidates) {
  RetrievalScores s;
  s.recall_at_1 = recall_at(ranks, 1, num_candidates);
  s.recall_at_5 = recall_at(ranks, 5, num_candidates);
  s.recall_at_10 = recall_at(ranks, 10, num_candidates);
  double rank_sum = 0.0, rr_sum = 0.0;
  for (int r : ranks) {
    rank_sum += r + 1;
    rr_sum += 1.0 / (r + 1);
  }
  const auto n = static_cast<double>(ranks.size());
  s.mean_rank = rank_sum / n;
  s.mrr = rr_sum / n;
  return s;
}

ActionScores action_metrics(std::span<const std::vector<double>> probabilities,
                            std::span<const int> gold) {
  if (probabilities.size() != gold.size())
    throw std::invalid_argument("action_metrics: prediction/gold count mismatch");
  if (gold.empty()) throw std::invalid_argument("action_metrics: no turns");
  ActionScores s;
  std::size_t correct = 0;
  double log_sum = 0.0;
  for (std::size_t i = 0; i < gold.size(); ++i) {
    const auto& p = probabilities[i];
    if (gold[i] < 0 || static_cast<std::size_t>(gold[i]) >= p.size())
      throw std::invalid_argument("action_metrics: gold class out of range");
    double total = 0.0;
    for (double v : p) total += v;
    if (std::abs(total - 1.0) > 1e-6)
      throw std::invalid_argument("action_metrics: probabilities of turn " + std::to_string(i) +
                                  " sum to " + std::to_string(total));
    const auto argmax = std::max_element(p.begin(), p.end()) - p.begin();
    if (argmax == gold[i]) ++correct;
    double pg = p[static_cast<std::size_t>(gold[i])];
    if (pg < 1e-12) {
      pg = 1e-12;
      ++s.floored;
    }
    log_sum += std::log(pg);
  }
  const auto n = static_cast<double>(gold.size());
  s.accuracy = static_cast<double>(correct) / n;
  s.perplexity = std::exp(-log_sum / n);
  return s;
}

double f1(const Counts& c) {
  const double denom = 2.0 * static_cast<double>(c.tp) + static_cast<double>(c.fp + c.fn);
  return denom == 0.0 ? 1.0 : 2.0 * static_cast<double>(c.tp) / denom;
}

AttributeScores attribute_metrics(std::span<const ApiAction> predicted, std::span<const ApiAction> gold,
                                  Domain domain) {
  if (predicted.size() != gold.size())
    throw std::invalid_argument("attribute_metrics: prediction/gold count mismatch");
  if (gold.empty()) throw std::invalid_argument("attribute_metrics: no turns");
  AttributeScores s;
  std::size_t exact = 0;
  for (std::size_t i = 0; i < gold.size(); ++i) {
    if (domain == Domain::Furniture) {
      if (predicted[i].attribute == gold[i].attribute) {
        ++exact;
        ++s.counts.tp;
      } else {
        ++s.counts.fp;
        ++s.counts.fn;
      }
      continue;
    }
    const auto& p = predicted[i].attribute_flags;
    const auto& g = gold[i].attribute_flags;
    if (p.size() != g.size())
      throw std::invalid_argument("attribute_metrics: label vector length mismatch");
    if (p == g) ++exact;
    for (std::size_t k = 0; k < g.size(); ++k) {
      if (p[k] && g[k]) ++s.counts.tp;
      else if (p[k]) ++s.counts.fp;
      else if (g[k]) ++s.counts.fn;
    }
  }
  s.accuracy = static_cast<double>(exact) / static_cast<double>(gold.size());
  s.micro_f1 = f1(s.counts);
  return s;
}

BeliefScores belief_metrics(std::span<const std::vector<BeliefFrame>> predicted,
                            std::span<const std::vector<BeliefFrame>> gold, SlotMatching matching) {
  if (predicted.size() != gold.size())
    throw std::invalid_argument("belief_metrics: prediction/gold count mismatch");
  if (gold.empty()) throw std::invalid_argument("belief_metrics: no turns");
  BeliefScores s;
  std::size_t joint = 0;
  for (std::size_t i = 0; i < gold.size(); ++i) {
    const Counts ic = multiset_counts(intents_of(predicted[i]), intents_of(gold[i]));
    const Counts sc = multiset_counts(slots_of(predicted[i], matching), slots_of(gold[i], matching));
    s.intents += ic;
    s.slots += sc;
    if (ic.fp == 0 && ic.fn == 0 && sc.fp == 0 && sc.fn == 0) ++joint;
  }
  s.intent_f1 = f1(s.intents);
  s.slot_f1 = f1(s.slots);
  s.joint_accuracy = static_cast<double>(joint) / static_cast<double>(gold.size());
  return s;
}

nlohmann::ordered_json MetricsReport::to_json() const {
  return {{"turns", turns},
          {"action_accuracy", action_accuracy},
          {"attribute_score", attribute_score()},
          {"attribute_convention", attribute_convention},
          {"attribute_accuracy", attribute_accuracy},
          {"attribute_f1", attribute_f1},
          {"action_perplexity", action_perplexity},
          {"bleu4", bleu4},
          {"recall@1", recall_at_1},
          {"recall@5", recall_at_5},
          {"recall@10", recall_at_10},
          {"mean_rank", mean_rank},
          {"mrr", mrr},
          {"intent_f1", intent_f1},
          {"slot_f1", slot_f1},
          {"joint_accuracy", joint_accuracy},
          {"num_candidates", num_candidates},
          {"missing_eob", missing_eob},
          {"floored_probabilities", floored_probabilities}};
}

std::string MetricsReport::table_header() {
  return "Act.Acc | Attr | Act Per. | BLEU | r@1 | r@5 | r@10 | Mean | MRR | Intent F1 | Slot F1 | Joint";
}

std::string MetricsReport::table_row() const {
  const std::vector<std::string> cells = {
      fixed(100 * action_accuracy, 2), fixed(100 * attribute_score(), 2), fixed(action_perplexity, 2),
      fixed(bleu4, 4),                 fixed(100 * recall_at_1, 1),       fixed(100 * recall_at_5, 1),
      fixed(100 * recall_at_10, 1),    fixed(mean_rank, 2),               fixed(mrr, 4),
      fixed(intent_f1, 4),             fixed(slot_f1, 4),                 fixed(100 * joint_accuracy, 2)};
  std::string row;
  for (const auto& c : cells) {
    if (!row.empty()) row += " | ";
    row += c;
  }
  return row;
}

}  // namespace mmtod
