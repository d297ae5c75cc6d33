#include "mmtod/checkpoint.hpp"

#include <algorithm>
#include <bit>
#include <cstring>
#include <fstream>
#include <sstream>

#include "json.hpp"
#include "mmtod/config.hpp"
#include "mmtod/error.hpp"

namespace mmtod {
namespace {

static_assert(sizeof(double) == 8 && std::numeric_limits<double>::is_iec559);

void put_le(std::string& out, double value) {
  auto bits = std::bit_cast<std::uint64_t>(value);
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((bits >> (8 * i)) & 0xffu));
}

double get_le(const char* p) {
  std::uint64_t bits = 0;
  for (int i = 0; i < 8; ++i)
    bits |= static_cast<std::uint64_t>(static_cast<unsigned char>(p[i])) << (8 * i);
  return std::bit_cast<double>(bits);
}

}  // namespace

bool TrainedModel::has_domain(Domain d) const {
  return std::find(domains.begin(), domains.end(), d) != domains.end();
}

std::string encode_checkpoint(const TrainedModel& m) {
  nlohmann::ordered_json header;
  header["format_version"] = kCheckpointFormatVersion;
  header["model"] = to_json(m.model);
  header["serializer"] = to_json(m.serializer);
  nlohmann::ordered_json domains = nlohmann::ordered_json::array();
  for (Domain d : m.domains) domains.push_back(std::string(domain_name(d)));
  header["domains"] = domains;
  header["intents"] = m.intents;
  header["vocab"] = m.vocab.tokens();

  nlohmann::ordered_json manifest = nlohmann::ordered_json::array();
  std::string payload;
  for (const auto& [name, t] : m.params.tensors()) {
    manifest.push_back({{"name", name},
                        {"shape", {t->rows(), t->cols()}},
                        {"dtype", "f64"},
                        {"offset", payload.size()}});
    for (Eigen::Index i = 0; i < t->size(); ++i) put_le(payload, t->data()[i]);
  }
  header["tensors"] = manifest;
  return header.dump() + "\n" + payload;
}

TrainedModel decode_checkpoint(std::string_view bytes) {
  const auto newline = bytes.find('\n');
  if (newline == std::string_view::npos) throw DataError("checkpoint: missing header line");
  TrainedModel m;
  nlohmann::json header;
  try {
    header = nlohmann::json::parse(bytes.substr(0, newline));
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("checkpoint: malformed header: ") + e.what());
  }
  const std::string_view payload = bytes.substr(newline + 1);
  try {
    const int version = header.at("format_version").get<int>();
    if (version != kCheckpointFormatVersion)
      throw DataError("checkpoint: unsupported format_version " + std::to_string(version));
    m.model = model_config_from_json(header.at("model"), "model");
    m.serializer = serializer_config_from_json(header.at("serializer"), "serializer");
    for (const auto& d : header.at("domains")) m.domains.push_back(parse_domain(d.get<std::string>()));
    m.intents = header.at("intents").get<std::vector<std::string>>();
    m.vocab = Vocab::from_tokens(header.at("vocab").get<std::vector<std::string>>());
    if (static_cast<std::size_t>(m.model.vocab_size) != m.vocab.size())
      throw DataError("checkpoint: vocab_size disagrees with the stored vocabulary");
    m.model.validate();
    m.params = Parameters::zeros(m.model);

    const auto& manifest = header.at("tensors");
    auto tensors = m.params.tensors();
    if (manifest.size() != tensors.size())
      throw DataError("checkpoint: expected " + std::to_string(tensors.size()) + " tensors, found " +
                      std::to_string(manifest.size()));
    std::size_t expected_offset = 0;
    for (std::size_t i = 0; i < tensors.size(); ++i) {
      const auto& entry = manifest[i];
      const auto& [name, t] = tensors[i];
      const auto shape = entry.at("shape").get<std::vector<Eigen::Index>>();
      if (entry.at("name").get<std::string>() != name)
        throw DataError("checkpoint: tensor " + std::to_string(i) + " should be '" + name + "'");
      if (shape.size() != 2 || shape[0] != t->rows() || shape[1] != t->cols())
        throw DataError("checkpoint: tensor '" + name + "' has the wrong shape");
      if (entry.at("dtype").get<std::string>() != "f64")
        throw DataError("checkpoint: tensor '" + name + "' is not f64");
      const auto offset = entry.at("offset").get<std::size_t>();
      const auto size = static_cast<std::size_t>(t->size()) * 8;
      if (offset != expected_offset || offset + size > payload.size())
        throw DataError("checkpoint: tensor '" + name + "' lies outside the payload");
      for (Eigen::Index k = 0; k < t->size(); ++k)
        t->data()[k] = get_le(payload.data() + offset + static_cast<std::size_t>(k) * 8);
      expected_offset += size;
    }
    if (expected_offset != payload.size()) throw DataError("checkpoint: trailing bytes after the payload");
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("checkpoint: ") + e.what());
  } catch (const UsageError& e) {
    throw DataError(std::string("checkpoint: ") + e.what());
  } catch (const std::invalid_argument& e) {
    throw DataError(std::string("checkpoint: ") + e.what());
  }
  return m;
}

void save_checkpoint(const std::filesystem::path& path, const TrainedModel& model) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write " + path.string());
  const std::string bytes = encode_checkpoint(model);
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw DataError("failed writing " + path.string());
}

TrainedModel load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open checkpoint " + path.string());
  std::ostringstream buffer;
  buffer << in.rdbuf();
  return decode_checkpoint(buffer.str());
}

}  // namespace mmtod
