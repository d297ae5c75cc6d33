#include "mmtod/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <set>
#include <stdexcept>

#include "mmtod/decoder.hpp"
#include "mmtod/error.hpp"

namespace mmtod {
namespace {

bool is_head_tensor(const std::string& name) { return name.starts_with("heads."); }

std::string ckpt_name(int epoch) { return "ckpt-" + std::to_string(epoch) + ".bin"; }

}  // namespace

std::string_view task_name(TaskKind task) {
  switch (task) {
    case TaskKind::Lm: return "lm";
    case TaskKind::ApiAction: return "action";
    case TaskKind::ApiAttribute: return "attribute";
  }
  return "?";
}

void TrainConfig::validate() const {
  auto fail = [](const std::string& what) { throw std::invalid_argument(what); };
  if (!(lr > 0.0)) fail("lr must be positive");
  if (!(beta1 >= 0.0 && beta1 < 1.0)) fail("beta1 must lie in [0, 1)");
  if (!(beta2 >= 0.0 && beta2 < 1.0)) fail("beta2 must lie in [0, 1)");
  if (!(eps > 0.0)) fail("eps must be positive");
  if (!(weight_decay >= 0.0)) fail("weight_decay must be non-negative");
  if (batch_size < 1) fail("batch_size must be at least 1");
  if (lm_epochs < 0 || mt_epochs < 0) fail("epoch counts must be non-negative");
  if (total_epochs() < 1) fail("lm_epochs + mt_epochs must be at least 1");
  if (!std::isfinite(clip_norm)) fail("clip_norm must be finite");
  if (eval_every < 0) fail("eval_every must be non-negative");
  if (checkpoint_every < 0) fail("checkpoint_every must be non-negative");
  if (max_new_tokens < 1) fail("max_new_tokens must be at least 1");
}

OptimizerState OptimizerState::zeros(const ModelConfig& cfg) {
  return {Parameters::zeros(cfg), Parameters::zeros(cfg), 0};
}

void adamw_step(Parameters& params, const Parameters& grads, OptimizerState& state, double lr_t,
                const TrainConfig& cfg, std::span<const std::uint8_t> trainable) {
  auto p = params.tensors();
  const auto g = grads.tensors();
  auto m = state.m.tensors();
  auto v = state.v.tensors();
  if (g.size() != p.size() || m.size() != p.size() || v.size() != p.size() ||
      (!trainable.empty() && trainable.size() != p.size()))
    throw std::invalid_argument("adamw_step: tensor count mismatch");
  for (std::size_t i = 0; i < p.size(); ++i) {
    const auto rows = p[i].second->rows(), cols = p[i].second->cols();
    if (g[i].second->rows() != rows || g[i].second->cols() != cols || m[i].second->rows() != rows ||
        m[i].second->cols() != cols || v[i].second->rows() != rows || v[i].second->cols() != cols)
      throw std::invalid_argument("adamw_step: shape mismatch in '" + p[i].first + "'");
    if (!g[i].second->allFinite())
      throw std::runtime_error("adamw_step: non-finite gradient in '" + p[i].first + "' at step " +
                               std::to_string(state.step + 1));
  }

  ++state.step;
  const double t = static_cast<double>(state.step);
  const double c1 = 1.0 - std::pow(cfg.beta1, t);
  const double c2 = 1.0 - std::pow(cfg.beta2, t);
  for (std::size_t i = 0; i < p.size(); ++i) {
    if (!trainable.empty() && !trainable[i]) continue;
    auto theta = p[i].second->array();
    const auto grad = g[i].second->array();
    auto mi = m[i].second->array();
    auto vi = v[i].second->array();
    mi = cfg.beta1 * mi + (1.0 - cfg.beta1) * grad;
    vi = cfg.beta2 * vi + (1.0 - cfg.beta2) * grad.square();
    theta -= lr_t * ((mi / c1) / ((vi / c2).sqrt() + cfg.eps) + cfg.weight_decay * theta);
  }
}

void adamw_step(Parameters& params, const Parameters& grads, OptimizerState& state, double lr_t,
                const TrainConfig& cfg) {
  adamw_step(params, grads, state, lr_t, cfg, {});
}

double lr_schedule(std::int64_t step, std::int64_t total_steps, double base_lr) {
  if (total_steps <= 0 || step < 0 || step > total_steps)
    throw std::invalid_argument("lr_schedule: step " + std::to_string(step) + " outside [0, " +
                                std::to_string(total_steps) + "]");
  return std::max(0.0, base_lr * (1.0 - static_cast<double>(step) / static_cast<double>(total_steps)));
}

double clip_grad_norm(Parameters& grads, double max_norm) {
  const double norm = std::sqrt(grads.squared_norm());
  if (max_norm > 0.0 && norm > max_norm) {
    const double scale = max_norm / norm;
    for (auto& [name, t] : grads.tensors()) *t *= scale;
  }
  return norm;
}

DomainSampler::DomainSampler(std::size_t furniture, std::size_t fashion, std::size_t batch_size,
                             std::uint64_t seed)
    : sizes_{furniture, fashion}, batch_size_(batch_size), rng_(seed) {
  if (furniture == 0 && fashion == 0) throw std::invalid_argument("domain_sampler: no examples");
  if (batch_size == 0) throw std::invalid_argument("domain_sampler: batch_size must be positive");
}

std::size_t DomainSampler::batches_per_epoch() const {
  return (sizes_[0] + batch_size_ - 1) / batch_size_ + (sizes_[1] + batch_size_ - 1) / batch_size_;
}

std::vector<Batch> DomainSampler::next_epoch() {
  std::array<std::vector<Batch>, 2> queues;
  for (std::size_t d = 0; d < 2; ++d) {
    std::vector<std::size_t> order(sizes_[d]);
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::shuffle(order.begin(), order.end(), rng_);
    for (std::size_t i = 0; i < order.size(); i += batch_size_) {
      Batch b;
      b.domain = static_cast<Domain>(d);
      b.indices.assign(order.begin() + static_cast<std::ptrdiff_t>(i),
                       order.begin() + static_cast<std::ptrdiff_t>(std::min(order.size(), i + batch_size_)));
      queues[d].push_back(std::move(b));
    }
  }
  std::vector<Batch> epoch;
  std::array<std::size_t, 2> next{0, 0};
  while (next[0] < queues[0].size() || next[1] < queues[1].size()) {
    std::size_t d;
    if (next[0] == queues[0].size())
      d = 1;
    else if (next[1] == queues[1].size())
      d = 0;
    else
      d = std::uniform_int_distribution<std::size_t>(0, 1)(rng_);
    epoch.push_back(std::move(queues[d][next[d]++]));
  }
  return epoch;
}

TaskKind sample_task(int mt_epoch, int mt_epochs, std::mt19937_64& rng) {
  if (mt_epoch < 0) return TaskKind::Lm;
  const int draw = std::uniform_int_distribution<int>(0, 2)(rng);
  const bool all_three = mt_epoch <= 1 || mt_epoch == mt_epochs - 1;
  if (all_three) return draw == 0 ? TaskKind::ApiAction : draw == 1 ? TaskKind::ApiAttribute : TaskKind::Lm;
  return draw == 0 ? TaskKind::ApiAttribute : TaskKind::Lm;
}

nlohmann::ordered_json EpochRecord::to_json() const {
  nlohmann::ordered_json loss, batch_counts;
  for (int k = 0; k < kNumTasks; ++k) {
    const std::string name(task_name(static_cast<TaskKind>(k)));
    loss[name] = mean_loss[static_cast<std::size_t>(k)];
    batch_counts[name] = batches[static_cast<std::size_t>(k)];
  }
  nlohmann::ordered_json j;
  j["epoch"] = epoch;
  j["phase"] = multi_task_phase ? "multi_task" : "lm";
  j["loss"] = loss;
  j["batches"] = batch_counts;
  j["lr"] = lr;
  j["dev"] = dev ? *dev : nlohmann::ordered_json(nullptr);
  return j;
}

TrainResult train(const Corpus& furniture, const Corpus& fashion, const SerializerConfig& serializer,
                  ModelConfig model_cfg, const TrainConfig& cfg, const TrainOptions& options) {
  try {
    cfg.validate();
  } catch (const std::invalid_argument& e) {
    throw UsageError(std::string("train config: ") + e.what());
  }
  if (serializer.multi_domain && (furniture.empty() || fashion.empty()))
    throw UsageError("multi-domain training (MD on) needs both a furniture and a fashion corpus");
  if (!serializer.multi_domain && furniture.empty() == fashion.empty())
    throw UsageError("single-domain training (MD off) needs exactly one domain corpus");

  std::vector<Corpus> corpora;
  TrainResult result;
  TrainedModel& tm = result.model;
  if (!furniture.empty()) {
    corpora.push_back(furniture);
    tm.domains.push_back(Domain::Furniture);
  }
  if (!fashion.empty()) {
    corpora.push_back(fashion);
    tm.domains.push_back(Domain::Fashion);
  }
  for (const auto& [corpus, domain] : {std::pair{&furniture, Domain::Furniture}, std::pair{&fashion, Domain::Fashion}})
    for (const auto& d : *corpus)
      if (d.domain != domain)
        throw DataError("dialogue " + d.dialogue_id + " is not a " + std::string(domain_name(domain)) +
                        " dialogue");

  tm.serializer = serializer;
  tm.vocab = build_vocab(corpora, serializer);
  model_cfg.vocab_size = static_cast<int>(tm.vocab.size());
  model_cfg.use_segment_embedding = serializer.segment_embedding;
  model_cfg.validate();
  tm.model = model_cfg;

  std::set<std::string> intents;
  std::array<std::vector<SerializedExample>, 2> examples;
  for (const auto& [corpus, domain] : {std::pair{&furniture, Domain::Furniture}, std::pair{&fashion, Domain::Fashion}}) {
    for (const auto& d : *corpus) {
      for (std::size_t t = 0; t < d.turns.size(); ++t) {
        examples[static_cast<std::size_t>(domain)].push_back(
            build_example(d, t, serializer, tm.vocab, static_cast<std::size_t>(model_cfg.max_seq_len)));
        for (const auto& f : d.turns[t].belief) intents.insert(f.intent);
      }
    }
  }
  tm.intents.assign(intents.begin(), intents.end());
  tm.params = Parameters::init(model_cfg, cfg.seed);

  OptimizerState state = OptimizerState::zeros(model_cfg);
  Parameters grads = Parameters::zeros(model_cfg);
  DomainSampler sampler(examples[0].size(), examples[1].size(), static_cast<std::size_t>(cfg.batch_size),
                        cfg.seed ^ 0x9e3779b97f4a7c15ull);
  std::mt19937_64 task_rng(cfg.seed ^ 0xc2b2ae3d27d4eb4full);
  const auto total_steps =
      static_cast<std::int64_t>(cfg.total_epochs()) * static_cast<std::int64_t>(sampler.batches_per_epoch());

  // Classifier heads join the optimizer only in the multi-task phase.
  std::vector<std::uint8_t> body_only, everything;
  for (const auto& [name, t] : tm.params.tensors()) {
    body_only.push_back(is_head_tensor(name) ? 0 : 1);
    everything.push_back(1);
  }

  std::ofstream log;
  if (!options.out_dir.empty()) {
    std::filesystem::create_directories(options.out_dir);
    tm.vocab.save(options.out_dir / "vocab.json");
    log.open(options.out_dir / "train_log.jsonl", std::ios::binary);
    if (!log) throw DataError("cannot write " + (options.out_dir / "train_log.jsonl").string());
  }

  Corpus dev;
  if (options.dev_furniture) dev.insert(dev.end(), options.dev_furniture->begin(), options.dev_furniture->end());
  if (options.dev_fashion) dev.insert(dev.end(), options.dev_fashion->begin(), options.dev_fashion->end());
  double best_joint = -1.0;

  for (int epoch = 0; epoch < cfg.total_epochs(); ++epoch) {
    EpochRecord rec;
    rec.epoch = epoch + 1;
    rec.multi_task_phase = cfg.multi_task && epoch >= cfg.lm_epochs;
    const int mt_epoch = rec.multi_task_phase ? epoch - cfg.lm_epochs : -1;
    std::array<double, kNumTasks> loss_sum{};

    for (const Batch& batch : sampler.next_epoch()) {
      const TaskKind task = cfg.multi_task ? sample_task(mt_epoch, cfg.mt_epochs, task_rng) : TaskKind::Lm;
      const double lr_t = lr_schedule(state.step, total_steps, cfg.lr);
      grads.set_zero();
      const double scale = 1.0 / static_cast<double>(batch.indices.size());
      double batch_loss = 0.0;
      for (std::size_t idx : batch.indices) {
        const SerializedExample& ex = examples[static_cast<std::size_t>(batch.domain)][idx];
        LossTarget target;
        switch (task) {
          case TaskKind::Lm: target = lm_target(ex); break;
          case TaskKind::ApiAction: target = action_target(ex); break;
          case TaskKind::ApiAttribute: target = attribute_target(ex); break;
        }
        const ForwardCache cache =
            forward(tm.params, ex.tokens, ex.segment_ids, model_cfg, task != TaskKind::Lm);
        batch_loss += backward(tm.params, cache, target, model_cfg, grads, scale) * scale;
      }
      clip_grad_norm(grads, cfg.clip_norm);
      adamw_step(tm.params, grads, state, lr_t, cfg, rec.multi_task_phase ? everything : body_only);
      const auto k = static_cast<std::size_t>(task);
      loss_sum[k] += batch_loss;
      ++rec.batches[k];
      rec.lr = lr_t;
    }
    for (std::size_t k = 0; k < kNumTasks; ++k)
      rec.mean_loss[k] = rec.batches[k] ? loss_sum[k] / rec.batches[k] : 0.0;

    const bool last = epoch + 1 == cfg.total_epochs();
    if (!dev.empty() && cfg.eval_every > 0 && ((epoch + 1) % cfg.eval_every == 0 || last)) {
      DecodeOptions decode;
      decode.max_new_tokens = static_cast<std::size_t>(cfg.max_new_tokens);
      const Evaluation ev = evaluate(tm, dev, {}, decode);
      rec.dev = ev.report.to_json();
      if (ev.report.joint_accuracy > best_joint && !options.out_dir.empty()) {
        best_joint = ev.report.joint_accuracy;
        save_checkpoint(options.out_dir / "ckpt-best.bin", tm);
      }
    }
    if (!options.out_dir.empty()) {
      if (last || (cfg.checkpoint_every > 0 && (epoch + 1) % cfg.checkpoint_every == 0)) {
        result.last_checkpoint = options.out_dir / ckpt_name(epoch + 1);
        save_checkpoint(result.last_checkpoint, tm);
      }
      log << rec.to_json().dump() << '\n';
      log.flush();
    }
    if (options.on_epoch) options.on_epoch(rec);
    result.log.push_back(std::move(rec));
  }
  return result;
}

}  // namespace mmtod
