#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <random>
#include <span>
#include <string_view>
#include <vector>

#include "json.hpp"
#include "mmtod/checkpoint.hpp"
#include "mmtod/corpus.hpp"
#include "mmtod/model.hpp"
#include "mmtod/serializer.hpp"

namespace mmtod {

enum class TaskKind { Lm = 0, ApiAction = 1, ApiAttribute = 2 };
inline constexpr int kNumTasks = 3;
std::string_view task_name(TaskKind task);

struct TrainConfig {
  double lr = 5e-5;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.01;
  int batch_size = 8;
  int lm_epochs = 6;
  int mt_epochs = 20;
  std::uint64_t seed = 0;
  bool multi_task = true;    // MT; MD and MHL live in SerializerConfig
  double clip_norm = 1.0;    // global gradient norm; <= 0 disables
  int eval_every = 0;        // dev evaluation period in epochs; 0 = never
  int checkpoint_every = 0;  // 0 = final epoch only
  int max_new_tokens = 128;  // decoding budget for dev evaluation

  // Throws std::invalid_argument naming the offending field.
  void validate() const;
  int total_epochs() const { return lm_epochs + mt_epochs; }
  bool operator==(const TrainConfig&) const = default;
};

struct OptimizerState {
  Parameters m;
  Parameters v;
  std::int64_t step = 0;

  static OptimizerState zeros(const ModelConfig& cfg);
};

// One AdamW update with decoupled weight decay. Throws std::invalid_argument
// on shape mismatch and std::runtime_error naming the tensor on a non-finite
// gradient (parameters are left untouched in both cases).
void adamw_step(Parameters& params, const Parameters& grads, OptimizerState& state,
                double lr_t, const TrainConfig& cfg);
// As above, but tensors whose flag in `trainable` (tensors() order) is 0 are
// neither moved nor decayed; their moments stay untouched.
void adamw_step(Parameters& params, const Parameters& grads, OptimizerState& state,
                double lr_t, const TrainConfig& cfg, std::span<const std::uint8_t> trainable);

// base_lr * (1 - step / total_steps), floored at 0.
double lr_schedule(std::int64_t step, std::int64_t total_steps, double base_lr);

// Rescales grads to at most max_norm; returns the norm before clipping.
double clip_grad_norm(Parameters& grads, double max_norm);

struct Batch {
  Domain domain = Domain::Furniture;
  std::vector<std::size_t> indices;  // into that domain's example list
};

// Merged-domain epochs: each iteration picks a domain uniformly among those
// with batches left, takes its next shuffled batch, and the epoch ends once
// every domain is exhausted. A domain with zero examples is never drawn.
class DomainSampler {
 public:
  DomainSampler(std::size_t furniture, std::size_t fashion, std::size_t batch_size,
                std::uint64_t seed);

  std::vector<Batch> next_epoch();
  std::size_t batches_per_epoch() const;

 private:
  std::array<std::size_t, 2> sizes_;
  std::size_t batch_size_;
  std::mt19937_64 rng_;
};

// mt_epoch < 0 means the LM-only phase.
TaskKind sample_task(int mt_epoch, int mt_epochs, std::mt19937_64& rng);

struct EpochRecord {
  int epoch = 0;
  bool multi_task_phase = false;
  std::array<double, kNumTasks> mean_loss{};  // NaN-free: 0 when no batch ran
  std::array<int, kNumTasks> batches{};
  double lr = 0.0;                            // rate used by the last step
  std::optional<nlohmann::ordered_json> dev;  // MetricsReport when evaluated

  nlohmann::ordered_json to_json() const;
};

struct TrainOptions {
  // When set: vocab.json, train_log.jsonl and ckpt-{epoch}.bin (plus
  // ckpt-best.bin under dev evaluation) are written here.
  std::filesystem::path out_dir;
  const Corpus* dev_furniture = nullptr;
  const Corpus* dev_fashion = nullptr;
  std::function<void(const EpochRecord&)> on_epoch;
};

struct TrainResult {
  TrainedModel model;
  std::vector<EpochRecord> log;
  std::filesystem::path last_checkpoint;  // empty without out_dir
};

// `model_cfg` supplies the architecture; vocab_size and the segment flag are
// filled in from the data and `serializer`. With MD on both corpora must be
// non-empty; with MD off exactly one must be.
TrainResult train(const Corpus& furniture, const Corpus& fashion,
                  const SerializerConfig& serializer, ModelConfig model_cfg,
                  const TrainConfig& cfg, const TrainOptions& options = {});

}  // namespace mmtod
