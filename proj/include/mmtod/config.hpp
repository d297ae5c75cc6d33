#pragma once

#include <string_view>

#include "json.hpp"
#include "mmtod/model.hpp"
#include "mmtod/serializer.hpp"
#include "mmtod/trainer.hpp"

namespace mmtod {

// The single JSON file driving `train`: {serializer, model, train}. Every
// section and key is optional; unknown keys and wrong types raise UsageError
// naming the dotted key path.
struct RunConfig {
  SerializerConfig serializer;
  ModelConfig model;
  TrainConfig train;
};

nlohmann::ordered_json to_json(const SerializerConfig& cfg);
nlohmann::ordered_json to_json(const ModelConfig& cfg);
nlohmann::ordered_json to_json(const TrainConfig& cfg);
nlohmann::ordered_json to_json(const RunConfig& cfg);

SerializerConfig serializer_config_from_json(const nlohmann::json& j, std::string_view where = "serializer");
ModelConfig model_config_from_json(const nlohmann::json& j, std::string_view where = "model");
TrainConfig train_config_from_json(const nlohmann::json& j, std::string_view where = "train");
RunConfig run_config_from_json(const nlohmann::json& j);

}  // namespace mmtod
