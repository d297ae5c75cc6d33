#pragma once

#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "mmtod/corpus.hpp"
#include "mmtod/model.hpp"
#include "mmtod/serializer.hpp"
#include "mmtod/tokenizer.hpp"

namespace mmtod {

// Everything needed to decode with a trained model.
struct TrainedModel {
  ModelConfig model;
  SerializerConfig serializer;
  Vocab vocab;
  std::vector<std::string> intents;  // canonical intents seen in training
  std::vector<Domain> domains;       // domains whose heads were trained
  Parameters params;

  bool has_domain(Domain d) const;
  bool operator==(const TrainedModel&) const = default;
};

inline constexpr int kCheckpointFormatVersion = 1;

// Layout: one line of JSON header, then the tensors as contiguous
// little-endian IEEE-754 doubles in manifest order. Offsets in the manifest
// are relative to the first payload byte.
std::string encode_checkpoint(const TrainedModel& model);
TrainedModel decode_checkpoint(std::string_view bytes);  // throws DataError

void save_checkpoint(const std::filesystem::path& path, const TrainedModel& model);
TrainedModel load_checkpoint(const std::filesystem::path& path);

}  // namespace mmtod
