#include "mmtod/config.hpp"

#include <set>
#include <string>

#include "mmtod/error.hpp"

namespace mmtod {
namespace {

using nlohmann::json;
using nlohmann::ordered_json;

// Reads an object key by key and rejects whatever was not consumed.
class SectionReader {
 public:
  SectionReader(const json& j, std::string_view where) : j_(j), where_(where) {
    if (!j_.is_object()) throw UsageError("config: '" + where_ + "' must be an object");
  }

  template <typename T>
  void read(const char* key, T& out) {
    seen_.insert(key);
    auto it = j_.find(key);
    if (it == j_.end()) return;
    try {
      if constexpr (std::is_same_v<T, bool>) {
        if (!it->is_boolean()) throw UsageError("");
      } else if constexpr (std::is_integral_v<T>) {
        if (!it->is_number_integer()) throw UsageError("");
        if constexpr (std::is_unsigned_v<T>) {
          if (it->is_number_integer() && !it->is_number_unsigned()) throw UsageError("");
        }
      } else if constexpr (std::is_floating_point_v<T>) {
        if (!it->is_number()) throw UsageError("");
      }
      out = it->get<T>();
    } catch (const std::exception&) {
      throw UsageError("config: '" + where_ + "." + key + "' has the wrong type");
    }
  }

  void finish() const {
    for (auto it = j_.begin(); it != j_.end(); ++it)
      if (!seen_.count(it.key()))
        throw UsageError("config: unknown key '" + where_ + "." + it.key() + "'");
  }

 private:
  const json& j_;
  std::string where_;
  std::set<std::string> seen_;
};

template <typename F>
auto checked(std::string_view where, F&& validate) {
  try {
    validate();
  } catch (const std::invalid_argument& e) {
    throw UsageError("config: " + std::string(where) + ": " + e.what());
  }
}

}  // namespace

ordered_json to_json(const SerializerConfig& c) {
  return {{"history_turns", c.history_turns},     {"split_intent", c.split_intent},
          {"segment_embedding", c.segment_embedding}, {"add_action", c.add_action},
          {"mask_history_loss", c.mask_history_loss}, {"multi_domain", c.multi_domain}};
}

ordered_json to_json(const ModelConfig& c) {
  return {{"vocab_size", c.vocab_size},
          {"model_dim", c.model_dim},
          {"n_layers", c.n_layers},
          {"n_heads", c.n_heads},
          {"max_seq_len", c.max_seq_len},
          {"use_segment_embedding", c.use_segment_embedding},
          {"init_std", c.init_std},
          {"head_classes", c.head_classes}};
}

ordered_json to_json(const TrainConfig& c) {
  return {{"lr", c.lr},
          {"beta1", c.beta1},
          {"beta2", c.beta2},
          {"eps", c.eps},
          {"weight_decay", c.weight_decay},
          {"batch_size", c.batch_size},
          {"lm_epochs", c.lm_epochs},
          {"mt_epochs", c.mt_epochs},
          {"seed", c.seed},
          {"multi_task", c.multi_task},
          {"clip_norm", c.clip_norm},
          {"eval_every", c.eval_every},
          {"checkpoint_every", c.checkpoint_every},
          {"max_new_tokens", c.max_new_tokens}};
}

ordered_json to_json(const RunConfig& c) {
  return {{"serializer", to_json(c.serializer)}, {"model", to_json(c.model)},
          {"train", to_json(c.train)}};
}

SerializerConfig serializer_config_from_json(const json& j, std::string_view where) {
  SerializerConfig c;
  SectionReader r(j, where);
  r.read("history_turns", c.history_turns);
  r.read("split_intent", c.split_intent);
  r.read("segment_embedding", c.segment_embedding);
  r.read("add_action", c.add_action);
  r.read("mask_history_loss", c.mask_history_loss);
  r.read("multi_domain", c.multi_domain);
  r.finish();
  if (c.history_turns < 1)
    throw UsageError("config: '" + std::string(where) + ".history_turns' must be >= 1");
  return c;
}

ModelConfig model_config_from_json(const json& j, std::string_view where) {
  ModelConfig c;
  SectionReader r(j, where);
  r.read("vocab_size", c.vocab_size);
  r.read("model_dim", c.model_dim);
  r.read("n_layers", c.n_layers);
  r.read("n_heads", c.n_heads);
  r.read("max_seq_len", c.max_seq_len);
  r.read("use_segment_embedding", c.use_segment_embedding);
  r.read("init_std", c.init_std);
  r.read("head_classes", c.head_classes);
  r.finish();
  // vocab_size is usually filled in from the data later.
  ModelConfig probe = c;
  if (probe.vocab_size == 0) probe.vocab_size = 1;
  checked(where, [&] { probe.validate(); });
  return c;
}

TrainConfig train_config_from_json(const json& j, std::string_view where) {
  TrainConfig c;
  SectionReader r(j, where);
  r.read("lr", c.lr);
  r.read("beta1", c.beta1);
  r.read("beta2", c.beta2);
  r.read("eps", c.eps);
  r.read("weight_decay", c.weight_decay);
  r.read("batch_size", c.batch_size);
  r.read("lm_epochs", c.lm_epochs);
  r.read("mt_epochs", c.mt_epochs);
  r.read("seed", c.seed);
  r.read("multi_task", c.multi_task);
  r.read("clip_norm", c.clip_norm);
  r.read("eval_every", c.eval_every);
  r.read("checkpoint_every", c.checkpoint_every);
  r.read("max_new_tokens", c.max_new_tokens);
  r.finish();
  checked(where, [&] { c.validate(); });
  return c;
}

RunConfig run_config_from_json(const json& j) {
  if (!j.is_object()) throw UsageError("config: top level must be an object");
  RunConfig c;
  for (auto it = j.begin(); it != j.end(); ++it) {
    if (it.key() == "serializer")
      c.serializer = serializer_config_from_json(*it, "serializer");
    else if (it.key() == "model")
      c.model = model_config_from_json(*it, "model");
    else if (it.key() == "train")
      c.train = train_config_from_json(*it, "train");
    else
      throw UsageError("config: unknown key '" + it.key() + "'");
  }
  return c;
}

}  // namespace mmtod
