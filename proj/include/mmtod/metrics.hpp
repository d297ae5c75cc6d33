#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"
#include "mmtod/corpus.hpp"

namespace mmtod {

// Corpus BLEU-4: clipped n-gram counts pooled over all pairs, uniform
// geometric mean of p1..p4, brevity penalty exp(1 - r/c) when c < r.
// Texts are split on whitespace. Throws std::invalid_argument on a size
// mismatch or an empty list.
double bleu4(std::span<const std::string> hypotheses, std::span<const std::string> references);

// Same formula on one pair with add-one smoothing of p2..p4. Used to rank
// retrieval candidates. An empty hypothesis scores 0.
double sentence_bleu4(std::string_view hypothesis, std::string_view reference);

struct RetrievalScores {
  double recall_at_1 = 0.0;
  double recall_at_5 = 0.0;
  double recall_at_10 = 0.0;
  double mean_rank = 0.0;  // 1-based
  double mrr = 0.0;
};

// Ranks are 0-based. Throws std::out_of_range for a rank outside
// [0, num_candidates) and std::invalid_argument for an empty list.
double recall_at(std::span<const int> ranks, int k, int num_candidates);
RetrievalScores retrieval_metrics(std::span<const int> ranks, int num_candidates);

struct ActionScores {
  double accuracy = 0.0;
  double perplexity = 1.0;
  std::size_t floored = 0;  // gold probabilities raised to 1e-12
};

// Argmax ties go to the lowest class. Throws std::invalid_argument when a
// probability row does not sum to 1 within 1e-6 or a gold index is out of range.
ActionScores action_metrics(std::span<const std::vector<double>> probabilities,
                            std::span<const int> gold);

struct Counts {
  std::size_t tp = 0, fp = 0, fn = 0;
  Counts& operator+=(const Counts& o) {
    tp += o.tp, fp += o.fp, fn += o.fn;
    return *this;
  }
};
// 2TP / (2TP + FP + FN); 1 when there is nothing to find and nothing found.
double f1(const Counts& c);

struct AttributeScores {
  double accuracy = 0.0;  // single label (furniture) or exact label set (fashion)
  double micro_f1 = 0.0;  // one-vs-all (furniture) or pooled labels (fashion)
  Counts counts;
};
// Turns are scored according to the domain of each gold action's shape.
AttributeScores attribute_metrics(std::span<const ApiAction> predicted,
                                  std::span<const ApiAction> gold, Domain domain);

enum class SlotMatching { Pooled, IntentScoped };

struct BeliefScores {
  double intent_f1 = 0.0;
  double slot_f1 = 0.0;
  double joint_accuracy = 0.0;
  Counts intents, slots;
};

// Per turn, intents and slots are compared as multisets (slots as
// (key, value) pairs, or (intent, key, value) when intent-scoped), with
// micro counts pooled over turns. A turn is jointly correct when both
// multisets equal gold.
BeliefScores belief_metrics(std::span<const std::vector<BeliefFrame>> predicted,
                            std::span<const std::vector<BeliefFrame>> gold,
                            SlotMatching matching = SlotMatching::Pooled);

struct MetricsReport {
  std::size_t turns = 0;
  double action_accuracy = 0.0;
  double attribute_accuracy = 0.0;
  double attribute_f1 = 0.0;
  double action_perplexity = 1.0;
  double bleu4 = 0.0;
  double recall_at_1 = 0.0;
  double recall_at_5 = 0.0;
  double recall_at_10 = 0.0;
  double mean_rank = 0.0;
  double mrr = 0.0;
  double intent_f1 = 0.0;
  double slot_f1 = 0.0;
  double joint_accuracy = 0.0;
  int num_candidates = 0;
  std::size_t missing_eob = 0;
  std::size_t floored_probabilities = 0;
  // "accuracy" when every turn is furniture, otherwise "micro_f1".
  std::string attribute_convention = "accuracy";

  double attribute_score() const {
    return attribute_convention == "accuracy" ? attribute_accuracy : attribute_f1;
  }
  nlohmann::ordered_json to_json() const;
  static std::string table_header();
  // Act.Acc | Attr | Act Per. | BLEU | r@1 | r@5 | r@10 | Mean | MRR | Intent F1 | Slot F1 | Joint
  std::string table_row() const;
  bool operator==(const MetricsReport&) const = default;
};

}  // namespace mmtod
