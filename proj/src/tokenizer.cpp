#include "mmtod/tokenizer.hpp"

#include <cctype>
#include <fstream>
#include <stdexcept>

#include "json.hpp"
#include "mmtod/error.hpp"
#include "mmtod/serializer.hpp"

namespace mmtod {
namespace special {

std::string action_token(int action) {
  if (action < 0 || action >= kMaxActions)
    throw std::out_of_range("action index " + std::to_string(action));
  return "<ACT_" + std::to_string(action) + ">";
}

std::string_view domain_token(Domain domain) {
  return domain == Domain::Furniture ? kFurniture : kFashion;
}

const std::vector<std::string>& all() {
  static const std::vector<std::string> tokens = [] {
    std::vector<std::string> t = {
        std::string(kUnk),           std::string(kFurniture),     std::string(kFashion),
        std::string(kStartMultimodal), std::string(kEndMultimodal), std::string(kEndOfBelief),
        std::string(kEndOfSequence), std::string(kSegSystem),     std::string(kSegUser),
        std::string(kSegBelief),     std::string(kSegMultimodal)};
    for (int i = 0; i < kMaxActions; ++i) t.push_back(action_token(i));
    return t;
  }();
  return tokens;
}

bool is_special(std::string_view token) {
  for (const auto& s : all())
    if (s == token) return true;
  return false;
}

}  // namespace special

std::vector<std::string> split_tokens(std::string_view text) {
  std::vector<std::string> out;
  std::string word;
  auto flush = [&] {
    if (!word.empty()) out.push_back(std::move(word));
    word.clear();
  };
  std::size_t i = 0;
  while (i < text.size()) {
    const char c = text[i];
    if (std::isspace(static_cast<unsigned char>(c))) {
      flush();
      ++i;
      continue;
    }
    if (c == '<') {
      bool matched = false;
      for (const auto& s : special::all()) {
        if (text.substr(i, s.size()) == s) {
          flush();
          out.push_back(s);
          i += s.size();
          matched = true;
          break;
        }
      }
      if (matched) continue;
    }
    word.push_back(c);
    ++i;
  }
  flush();
  return out;
}

std::string normalize_space(std::string_view text) {
  std::string out;
  for (const auto& t : split_tokens(text)) {
    if (!out.empty()) out.push_back(' ');
    out += t;
  }
  return out;
}

Vocab::Vocab() {
  for (const auto& s : special::all()) add(s);
}

void Vocab::add(std::string_view token) {
  if (index_.count(std::string(token))) return;
  index_.emplace(std::string(token), static_cast<int>(tokens_.size()));
  tokens_.emplace_back(token);
}

bool Vocab::contains(std::string_view token) const {
  return index_.find(std::string(token)) != index_.end();
}

Vocab Vocab::from_tokens(std::vector<std::string> tokens) {
  const auto& specials = special::all();
  if (tokens.size() < specials.size() ||
      !std::equal(specials.begin(), specials.end(), tokens.begin()))
    throw DataError("vocabulary must start with the special tokens in order");
  Vocab v;
  for (std::size_t i = specials.size(); i < tokens.size(); ++i) {
    if (v.contains(tokens[i])) throw DataError("duplicate vocabulary entry '" + tokens[i] + "'");
    if (tokens[i].empty() || split_tokens(tokens[i]).size() != 1 ||
        split_tokens(tokens[i]).front() != tokens[i])
      throw DataError("vocabulary entry '" + tokens[i] + "' is not a single token");
    v.add(tokens[i]);
  }
  return v;
}

Vocab Vocab::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open vocabulary " + path.string());
  try {
    return from_tokens(nlohmann::json::parse(in).get<std::vector<std::string>>());
  } catch (const nlohmann::json::exception& e) {
    throw DataError(path.string() + ": " + e.what());
  }
}

void Vocab::save(const std::filesystem::path& path) const {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write " + path.string());
  out << nlohmann::json(tokens_).dump() << '\n';
}

int Vocab::id_of(std::string_view token) const {
  auto it = index_.find(std::string(token));
  return it == index_.end() ? unk_id() : it->second;
}

std::vector<int> Vocab::encode(std::string_view text) const {
  std::vector<int> ids;
  for (const auto& t : split_tokens(text)) ids.push_back(id_of(t));
  return ids;
}

std::string Vocab::decode(std::span<const int> ids) const {
  std::string out;
  for (int id : ids) {
    if (!out.empty()) out.push_back(' ');
    out += id >= 0 && static_cast<std::size_t>(id) < tokens_.size() ? tokens_[static_cast<std::size_t>(id)]
                                                                   : std::string(special::kUnk);
  }
  return out;
}

Vocab build_vocab(std::span<const Corpus> corpora, const SerializerConfig& cfg) {
  Vocab v;
  bool any = false;
  for (const Corpus& corpus : corpora) {
    for (const Dialogue& d : corpus) {
      for (std::size_t t = 0; t < d.turns.size(); ++t) {
        any = true;
        for (const auto& span : render_spans(d, t, cfg))
          for (const auto& tok : split_tokens(span.text)) v.add(tok);
      }
    }
  }
  if (!any) throw std::invalid_argument("cannot build a vocabulary from an empty corpus");
  return v;
}

}  // namespace mmtod
