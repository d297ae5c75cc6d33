#pragma once

#include <Eigen/Dense>
#include <array>
#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <variant>
#include <vector>

#include "mmtod/corpus.hpp"
#include "mmtod/serializer.hpp"

namespace mmtod {

template <typename S>
using MatrixT = Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename S>
using RowVectorT = Eigen::Matrix<S, 1, Eigen::Dynamic>;
template <typename S>
using VectorT = Eigen::Matrix<S, Eigen::Dynamic, 1>;
using Matrix = MatrixT<double>;
using RowVector = RowVectorT<double>;

enum class HeadKind { FurnitureAction = 0, FurnitureAttribute = 1, FashionAction = 2, FashionAttribute = 3 };
inline constexpr int kNumHeads = 4;

std::string_view head_name(HeadKind head);
HeadKind action_head(Domain domain);
HeadKind attribute_head(Domain domain);
inline bool is_multi_label(HeadKind head) { return head == HeadKind::FashionAttribute; }

struct ModelConfig {
  int vocab_size = 0;
  int model_dim = 64;
  int n_layers = 2;
  int n_heads = 2;
  int max_seq_len = 256;
  bool use_segment_embedding = true;
  double init_std = 0.02;
  // Output widths, indexed by HeadKind.
  std::array<int, kNumHeads> head_classes = {7, 60, 5, 7};

  // Throws std::invalid_argument naming the offending field.
  void validate() const;
  int head_dim() const { return model_dim / n_heads; }
  bool operator==(const ModelConfig&) const = default;
};

template <typename S>
struct BasicLayerParams {
  MatrixT<S> ln1_gain, ln1_bias;      // 1 x d
  MatrixT<S> qkv_weight;              // d x 3d
  // No key bias: it shifts every score in a row equally and cancels in softmax.
  MatrixT<S> q_bias, v_bias;          // 1 x d
  MatrixT<S> proj_weight, proj_bias;  // d x d, 1 x d
  MatrixT<S> ln2_gain, ln2_bias;      // 1 x d
  MatrixT<S> fc_weight, fc_bias;      // d x 4d, 1 x 4d
  MatrixT<S> out_weight, out_bias;    // 4d x d, 1 x d
};

// 3-layer MLP: d -> d/2 -> d/4 -> classes, ReLU after the first two.
template <typename S>
struct BasicHeadParams {
  MatrixT<S> w1, b1, w2, b2, w3, b3;

  bool operator==(const BasicHeadParams& o) const {
    return w1 == o.w1 && b1 == o.b1 && w2 == o.w2 && b2 == o.b2 && w3 == o.w3 && b3 == o.b3;
  }
};

template <typename S>
struct BasicParameters {
  MatrixT<S> token_embedding;     // V x d; also the LM output projection (tied)
  MatrixT<S> segment_embedding;   // 4 x d
  MatrixT<S> position_embedding;  // max_seq_len x d
  std::vector<BasicLayerParams<S>> layers;
  MatrixT<S> final_gain, final_bias;  // 1 x d
  std::array<BasicHeadParams<S>, kNumHeads> heads;

  static BasicParameters zeros(const ModelConfig& cfg);
  // N(0, init_std) weights, zero biases, unit layer-norm gains.
  static BasicParameters init(const ModelConfig& cfg, std::uint64_t seed);

  // Every tensor with a stable dotted name, in a fixed order.
  std::vector<std::pair<std::string, MatrixT<S>*>> tensors();
  std::vector<std::pair<std::string, const MatrixT<S>*>> tensors() const;

  template <typename T>
  BasicParameters<T> cast() const;

  void set_zero();
  bool all_finite() const;
  S squared_norm() const;
  std::size_t parameter_count() const;
  bool operator==(const BasicParameters& other) const;
};

using LayerParams = BasicLayerParams<double>;
using HeadParams = BasicHeadParams<double>;
using Parameters = BasicParameters<double>;

extern template struct BasicParameters<double>;
extern template struct BasicParameters<long double>;

template <typename S>
struct BasicLayerCache {
  MatrixT<S> input;                  // n x d
  MatrixT<S> ln1_hat;                // normalized input
  VectorT<S> ln1_rstd;
  MatrixT<S> ln1_out;
  MatrixT<S> qkv;                    // n x 3d
  std::vector<MatrixT<S>> attn;      // per head, n x n, lower triangular
  MatrixT<S> attn_out;               // n x d, concatenated heads
  MatrixT<S> mid;                    // input + attention branch
  MatrixT<S> ln2_hat;
  VectorT<S> ln2_rstd;
  MatrixT<S> ln2_out;
  MatrixT<S> fc_pre;                 // n x 4d
  MatrixT<S> fc_act;                 // gelu(fc_pre)
};

template <typename S>
struct BasicForwardCache {
  std::vector<int> tokens;
  std::vector<Segment> segments;
  std::vector<BasicLayerCache<S>> layers;
  MatrixT<S> final_hat;
  VectorT<S> final_rstd;
  MatrixT<S> hidden;       // n x d, H
  MatrixT<S> logits;       // n x V (or 1 x V for the last position only)
  bool last_logits_only = false;
};

using ForwardCache = BasicForwardCache<double>;

// Causal forward pass. Throws std::invalid_argument on length or id range
// violations. `last_logits_only` skips the LM projection for all but the final
// position (generation).
ForwardCache forward(const Parameters& params, std::span<const int> tokens,
                     std::span<const Segment> segments, const ModelConfig& cfg,
                     bool last_logits_only = false);

RowVector classifier_forward(const HeadParams& head, const RowVector& hidden);

RowVector softmax(const RowVector& logits);
RowVector sigmoid(const RowVector& logits);

// Mean over unmasked rows of -log softmax(logits[t])[targets[t]]. Row t of
// `logits` predicts targets[t]. Throws std::invalid_argument when every
// position is masked or shapes disagree.
double lm_loss(const Matrix& logits, std::span<const int> targets,
               std::span<const std::uint8_t> mask);

// Cross-entropy for single-label heads (label = class index), mean sigmoid BCE
// over the outputs for the multi-label head (flags).
struct ClassLabel {
  int index = 0;
  std::vector<std::uint8_t> flags;
};
double classification_loss(const RowVector& logits, const ClassLabel& label, HeadKind head);

struct LmTarget {
  std::vector<int> targets;          // tokens shifted left by one (n - 1)
  std::vector<std::uint8_t> mask;    // aligned with targets
};
struct ClassTarget {
  HeadKind head = HeadKind::FurnitureAction;
  std::size_t position = 0;  // row of H fed to the head (the <EOB> position)
  ClassLabel label;
};
using LossTarget = std::variant<LmTarget, ClassTarget>;

LmTarget lm_target(const SerializedExample& ex);
ClassTarget action_target(const SerializedExample& ex);
ClassTarget attribute_target(const SerializedExample& ex);

// Loss of `target` under `cache`.
double loss(const Parameters& params, const ForwardCache& cache, const LossTarget& target);

// Reverse-mode gradient of the selected loss. Accumulates scale * dL/dtheta
// into `grads` (which must have the shapes of `params`) and returns the loss.
double backward(const Parameters& params, const ForwardCache& cache, const LossTarget& target,
                const ModelConfig& cfg, Parameters& grads, double scale = 1.0);

enum class LossPath { Lm, FurnitureAction, FurnitureAttribute, FashionAction, FashionAttribute };

struct GradCheckResult {
  double max_relative_error = 0.0;
  std::size_t coordinates = 0;
  std::string worst_tensor;
};

// Central finite differences (eps = 1e-5) against backward() on a random
// sequence of min(12, max_seq_len) tokens. The difference quotients are taken
// on an extended-precision (long double) replica of the forward pass so that
// coordinates with gradients near 1e-8 are not swamped by double rounding.
// `per_tensor` caps the coordinates sampled from each tensor (0 = all).
GradCheckResult grad_check(const ModelConfig& cfg, std::uint64_t seed, LossPath path,
                           std::size_t per_tensor = 0);

}  // namespace mmtod
