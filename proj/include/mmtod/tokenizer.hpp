#pragma once

#include <cstddef>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "mmtod/corpus.hpp"

namespace mmtod {

// Atomic tokens. They occupy the lowest vocabulary ids, in this order.
namespace special {
inline constexpr std::string_view kUnk = "<UNK>";
inline constexpr std::string_view kFurniture = "<FURN>";
inline constexpr std::string_view kFashion = "<FASH>";
inline constexpr std::string_view kStartMultimodal = "<SOM>";
inline constexpr std::string_view kEndMultimodal = "<EOM>";
inline constexpr std::string_view kEndOfBelief = "<EOB>";
inline constexpr std::string_view kEndOfSequence = "<EOS>";
inline constexpr std::string_view kSegSystem = "<SEG_SYS>";
inline constexpr std::string_view kSegUser = "<SEG_USER>";
inline constexpr std::string_view kSegBelief = "<SEG_BEL>";
inline constexpr std::string_view kSegMultimodal = "<SEG_MUL>";
// "<ACT_0>" ... "<ACT_6>", shared by both domains (index = action class).
inline constexpr int kMaxActions = 7;

// Multi-word markers; these are ordinary words to the tokenizer.
inline constexpr std::string_view kSystemPrefix = "System :";
inline constexpr std::string_view kUserPrefix = "User :";
inline constexpr std::string_view kBeliefPrompt = "=> Belief State :";

std::string action_token(int action);
std::string_view domain_token(Domain domain);
const std::vector<std::string>& all();  // declaration order, incl. <ACT_i>
bool is_special(std::string_view token);
}  // namespace special

// Text <-> id mapping. Implementations must keep special tokens atomic.
class Tokenizer {
 public:
  virtual ~Tokenizer() = default;
  virtual std::vector<int> encode(std::string_view text) const = 0;
  virtual std::string decode(std::span<const int> ids) const = 0;
  virtual int id_of(std::string_view token) const = 0;  // unk id if absent
  virtual std::size_t size() const = 0;
};

// Closed whitespace vocabulary.
class Vocab final : public Tokenizer {
 public:
  Vocab();  // specials only

  // Tokens must start with special::all() in order; duplicates rejected.
  static Vocab from_tokens(std::vector<std::string> tokens);
  static Vocab load(const std::filesystem::path& path);
  void save(const std::filesystem::path& path) const;

  std::vector<int> encode(std::string_view text) const override;
  std::string decode(std::span<const int> ids) const override;
  int id_of(std::string_view token) const override;
  std::size_t size() const override { return tokens_.size(); }

  bool contains(std::string_view token) const;
  const std::string& token(int id) const { return tokens_.at(static_cast<std::size_t>(id)); }
  const std::vector<std::string>& tokens() const { return tokens_; }
  int unk_id() const { return 0; }
  bool is_special_id(int id) const {
    return id >= 0 && static_cast<std::size_t>(id) < special::all().size();
  }
  void add(std::string_view token);

  bool operator==(const Vocab& other) const { return tokens_ == other.tokens_; }

 private:
  std::vector<std::string> tokens_;
  std::unordered_map<std::string, int> index_;
};

// Surface tokens of `text`: special tokens are cut out as atomic units even
// when glued to other characters; everything else splits on whitespace.
std::vector<std::string> split_tokens(std::string_view text);

// Joins split_tokens(text) with single spaces.
std::string normalize_space(std::string_view text);

struct SerializerConfig;

// Specials first, then every surface token of every serialized rendering of
// the corpora, in first-occurrence order. Throws std::invalid_argument on an
// empty corpus.
Vocab build_vocab(std::span<const Corpus> corpora, const SerializerConfig& cfg);

}  // namespace mmtod
