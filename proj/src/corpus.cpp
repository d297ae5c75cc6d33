#include "mmtod/corpus.hpp"

#include <algorithm>
#include <fstream>
#include <random>
#include <set>
#include <sstream>

#include "json.hpp"
#include "mmtod/error.hpp"

namespace mmtod {

using ojson = nlohmann::ordered_json;

std::string_view domain_name(Domain domain) {
  return domain == Domain::Furniture ? "furniture" : "fashion";
}

Domain parse_domain(std::string_view name) {
  if (name == "furniture") return Domain::Furniture;
  if (name == "fashion") return Domain::Fashion;
  throw UsageError("unknown domain '" + std::string(name) +
                   "' (expected furniture or fashion)");
}

int DomainManifest::action_index(std::string_view name) const {
  auto it = std::find(actions.begin(), actions.end(), name);
  return it == actions.end() ? -1 : static_cast<int>(it - actions.begin());
}

int DomainManifest::attribute_index(std::string_view name) const {
  auto it = std::find(attributes.begin(), attributes.end(), name);
  return it == attributes.end() ? -1
                                : static_cast<int>(it - attributes.begin());
}

namespace {

DomainManifest make_furniture_manifest() {
  DomainManifest m;
  m.domain = Domain::Furniture;
  m.actions = {"None",     "SearchFurniture",  "SpecifyInfo", "FocusOnFurniture",
               "Rotate",   "NavigateCarousel", "AddToCart"};
  m.attributes = {
      "none",        "dimensions", "price",       "material",   "color",
      "furnitureType", "direction", "navigate",   "info",       "brand",
      "width",       "depth",      "height",      "weight",     "style",
      "decorStyle",  "pattern",    "finish",      "assembly",   "warranty",
      "shipping",    "availability", "rating",    "reviews",    "seatHeight",
      "armHeight",   "legMaterial", "cushion",    "fabric",     "frame",
      "storage",     "shape",      "size",        "capacity",   "count",
      "orientation", "previous",   "next",        "focus",      "compare",
      "discount",    "delivery",   "returns",     "care",       "origin",
      "collection",  "theme",      "texture",     "seating",    "mount",
      "bulb",        "wattage",    "lightColor",  "adjustable", "foldable",
      "outdoor",     "waterproof", "upholstery",  "modular",    "recline"};
  return m;
}

DomainManifest make_fashion_manifest() {
  DomainManifest m;
  m.domain = Domain::Fashion;
  m.actions = {"None", "SearchDatabase", "SearchMemory", "SpecifyInfo",
               "AddToCart"};
  m.attributes = {"price",    "brand",          "size",          "color",
                  "material", "availableSizes", "customerRating"};
  return m;
}

std::vector<std::string> string_list(const ojson& value) {
  std::vector<std::string> out;
  for (const auto& v : value) out.push_back(v.get<std::string>());
  return out;
}

}  // namespace

const DomainManifest& default_manifest(Domain domain) {
  static const DomainManifest furniture = make_furniture_manifest();
  static const DomainManifest fashion = make_fashion_manifest();
  return domain == Domain::Furniture ? furniture : fashion;
}

DomainManifest load_manifest(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open manifest " + path.string());
  ojson j;
  try {
    j = ojson::parse(in);
  } catch (const ojson::exception& e) {
    throw DataError(path.string() + ": " + e.what());
  }
  DomainManifest m;
  try {
    m.domain = parse_domain(j.at("domain").get<std::string>());
    m.actions = string_list(j.at("actions"));
    m.attributes = string_list(j.at("attributes"));
  } catch (const ojson::exception& e) {
    throw DataError(path.string() + ": " + e.what());
  } catch (const UsageError& e) {
    throw DataError(path.string() + ": " + e.what());
  }
  if (m.actions.empty() || m.attributes.empty())
    throw DataError(path.string() + ": empty class list");
  return m;
}

// ---- validation -----------------------------------------------------------

bool is_valid_intent(std::string_view intent) {
  // DA(:SEGMENT)+(.SUFFIX)?
  if (intent.substr(0, 2) != "DA") return false;
  std::string_view rest = intent.substr(2);
  std::string_view suffix;
  if (auto dot = rest.find('.'); dot != std::string_view::npos) {
    suffix = rest.substr(dot + 1);
    rest = rest.substr(0, dot);
    if (suffix.empty()) return false;
    for (char c : suffix)
      if (std::isspace(static_cast<unsigned char>(c)) || c == '.' || c == ':')
        return false;
  }
  if (rest.empty() || rest.front() != ':') return false;
  std::size_t segments = 0;
  while (!rest.empty()) {
    if (rest.front() != ':') return false;
    rest.remove_prefix(1);
    auto end = rest.find(':');
    std::string_view seg = rest.substr(0, end);
    if (seg.empty()) return false;
    for (char c : seg)
      if (std::isspace(static_cast<unsigned char>(c))) return false;
    ++segments;
    rest = end == std::string_view::npos ? std::string_view{} : rest.substr(end);
  }
  return segments > 0;
}

bool is_valid_slot_text(std::string_view text) {
  if (text.empty() || text.front() == ' ' || text.back() == ' ') return false;
  char prev = 'x';
  for (char c : text) {
    if (c == '=' || c == ',' || c == '[' || c == ']') return false;
    if (c != ' ' && std::isspace(static_cast<unsigned char>(c))) return false;
    if (c == ' ' && prev == ' ') return false;
    prev = c;
  }
  return true;
}

namespace {

bool clean_field(const std::string& s) {
  return !s.empty() && s.find('\n') == std::string::npos &&
         s.find('\r') == std::string::npos;
}

void validate_dialogue(const Dialogue& d, const DomainManifest& manifest,
                       std::vector<Violation>& out) {
  auto add = [&](int turn, std::string field, std::string message) {
    out.push_back({d.dialogue_id, turn, std::move(field), std::move(message)});
  };
  if (d.dialogue_id.empty()) add(-1, "dialogue_id", "empty dialogue id");
  if (d.turns.empty()) add(-1, "turns", "dialogue has no turns");

  for (std::size_t ti = 0; ti < d.turns.size(); ++ti) {
    const Turn& t = d.turns[ti];
    const int turn = static_cast<int>(ti);
    if (t.user_utterance.empty()) add(turn, "user", "empty user utterance");
    if (t.system_response.empty()) add(turn, "system", "empty system response");

    const ApiAction& a = t.action;
    if (a.action < 0 || a.action >= static_cast<int>(manifest.actions.size()))
      add(turn, "action.name", "action index out of range");
    const int n_attr = static_cast<int>(manifest.attributes.size());
    if (d.domain == Domain::Furniture) {
      if (a.attribute < 0 || a.attribute >= n_attr)
        add(turn, "action.attributes", "attribute index out of range");
    } else {
      if (static_cast<int>(a.attribute_flags.size()) != n_attr) {
        add(turn, "action.attributes",
            "attribute vector has length " +
                std::to_string(a.attribute_flags.size()) + ", expected " +
                std::to_string(n_attr));
      } else if (std::any_of(a.attribute_flags.begin(), a.attribute_flags.end(),
                             [](std::uint8_t f) { return f > 1; })) {
        add(turn, "action.attributes", "attribute vector is not binary");
      }
    }

    std::set<std::string> ids;
    for (std::size_t oi = 0; oi < t.visual.size(); ++oi) {
      const VisualObject& o = t.visual[oi];
      const std::string path = "visual[" + std::to_string(oi) + "]";
      if (!ids.insert(o.object_id).second)
        add(turn, path + ".id", "duplicate object id " + o.object_id);
      bool ok = clean_field(o.object_id) && clean_field(o.position) &&
                clean_field(o.class_name);
      for (const auto& s : o.colors) ok = ok && clean_field(s);
      for (const auto& s : o.decor_styles) ok = ok && clean_field(s);
      for (const auto& [k, vs] : o.extra) {
        ok = ok && clean_field(k);
        for (const auto& s : vs) ok = ok && clean_field(s);
      }
      if (!ok) add(turn, path, "empty field or embedded newline");
    }

    for (std::size_t bi = 0; bi < t.belief.size(); ++bi) {
      const BeliefFrame& f = t.belief[bi];
      const std::string path = "belief[" + std::to_string(bi) + "]";
      if (!is_valid_intent(f.intent))
        add(turn, path + ".intent", "malformed intent '" + f.intent + "'");
      for (std::size_t si = 0; si < f.slots.size(); ++si) {
        if (!is_valid_slot_text(f.slots[si].key) ||
            !is_valid_slot_text(f.slots[si].value))
          add(turn, path + ".slots[" + std::to_string(si) + "]",
              "malformed slot key or value");
      }
    }
  }
}

}  // namespace

std::vector<Violation> validate(const Corpus& dialogues,
                                const DomainManifest& furniture,
                                const DomainManifest& fashion) {
  std::vector<Violation> out;
  for (const auto& d : dialogues)
    validate_dialogue(d, d.domain == Domain::Furniture ? furniture : fashion, out);
  return out;
}

std::vector<Violation> validate(const Corpus& dialogues) {
  return validate(dialogues, default_manifest(Domain::Furniture),
                  default_manifest(Domain::Fashion));
}

// ---- JSONL ----------------------------------------------------------------

namespace {

struct FieldError {
  std::string path;
  std::string message;
};

const ojson& field(const ojson& obj, const char* key, const std::string& path) {
  if (!obj.is_object()) throw FieldError{path, "expected object"};
  auto it = obj.find(key);
  if (it == obj.end()) throw FieldError{path + "." + key, "missing field"};
  return *it;
}

std::string get_string(const ojson& v, const std::string& path) {
  if (!v.is_string()) throw FieldError{path, "expected string"};
  return v.get<std::string>();
}

std::vector<std::string> get_string_list(const ojson& v, const std::string& path) {
  if (!v.is_array()) throw FieldError{path, "expected array of strings"};
  std::vector<std::string> out;
  for (std::size_t i = 0; i < v.size(); ++i)
    out.push_back(get_string(v[i], path + "[" + std::to_string(i) + "]"));
  return out;
}

ApiAction parse_action(const ojson& j, const DomainManifest& manifest,
                       const std::string& path) {
  ApiAction a;
  const std::string name = get_string(field(j, "name", path), path + ".name");
  a.action = manifest.action_index(name);
  if (a.action < 0) throw FieldError{path + ".name", "unknown action '" + name + "'"};

  const std::string apath = path + ".attributes";
  const ojson& attrs = field(j, "attributes", path);
  if (!attrs.is_array()) throw FieldError{apath, "expected array"};
  const bool numeric = !attrs.empty() && attrs.front().is_number_integer();

  if (manifest.domain == Domain::Furniture) {
    if (attrs.size() != 1)
      throw FieldError{apath, "furniture actions carry exactly one attribute"};
    if (numeric) {
      a.attribute = attrs.front().get<int>();
    } else {
      const std::string attr = get_string(attrs.front(), apath + "[0]");
      a.attribute = manifest.attribute_index(attr);
      if (a.attribute < 0)
        throw FieldError{apath + "[0]", "unknown attribute '" + attr + "'"};
    }
    return a;
  }

  if (numeric) {
    // Binary vector form; length is checked by validation.
    for (std::size_t i = 0; i < attrs.size(); ++i) {
      if (!attrs[i].is_number_integer())
        throw FieldError{apath + "[" + std::to_string(i) + "]", "expected 0 or 1"};
      a.attribute_flags.push_back(static_cast<std::uint8_t>(attrs[i].get<int>()));
    }
    return a;
  }
  a.attribute_flags.assign(manifest.attributes.size(), 0);
  for (std::size_t i = 0; i < attrs.size(); ++i) {
    const std::string p = apath + "[" + std::to_string(i) + "]";
    const std::string attr = get_string(attrs[i], p);
    const int idx = manifest.attribute_index(attr);
    if (idx < 0) throw FieldError{p, "unknown attribute '" + attr + "'"};
    a.attribute_flags[idx] = 1;
  }
  return a;
}

VisualObject parse_visual(const ojson& j, const std::string& path) {
  if (!j.is_object()) throw FieldError{path, "expected object"};
  VisualObject o;
  o.object_id = get_string(field(j, "id", path), path + ".id");
  o.position = get_string(field(j, "pos", path), path + ".pos");
  o.colors = get_string_list(field(j, "color", path), path + ".color");
  o.class_name = get_string(field(j, "class_name", path), path + ".class_name");
  o.decor_styles =
      get_string_list(field(j, "decor_style", path), path + ".decor_style");
  for (const auto& [key, value] : j.items()) {
    if (key == "id" || key == "pos" || key == "color" || key == "class_name" ||
        key == "decor_style")
      continue;
    const std::string p = path + "." + key;
    if (value.is_string())
      o.extra.emplace_back(key, std::vector<std::string>{value.get<std::string>()});
    else
      o.extra.emplace_back(key, get_string_list(value, p));
  }
  return o;
}

BeliefFrame parse_frame(const ojson& j, const std::string& path) {
  BeliefFrame f;
  f.intent = get_string(field(j, "intent", path), path + ".intent");
  const ojson& slots = field(j, "slots", path);
  if (!slots.is_array()) throw FieldError{path + ".slots", "expected array"};
  for (std::size_t i = 0; i < slots.size(); ++i) {
    const std::string p = path + ".slots[" + std::to_string(i) + "]";
    if (!slots[i].is_array() || slots[i].size() != 2)
      throw FieldError{p, "expected [key, value] pair"};
    f.slots.push_back({get_string(slots[i][0], p + "[0]"),
                       get_string(slots[i][1], p + "[1]")});
  }
  return f;
}

Dialogue parse_dialogue(const ojson& j, const DomainManifest& manifest) {
  Dialogue d;
  d.dialogue_id = get_string(field(j, "dialogue_id", ""), "dialogue_id");
  const std::string dom = get_string(field(j, "domain", ""), "domain");
  if (dom != domain_name(manifest.domain))
    throw FieldError{"domain", "expected '" + std::string(domain_name(manifest.domain)) +
                                   "', got '" + dom + "'"};
  d.domain = manifest.domain;
  const ojson& turns = field(j, "turns", "");
  if (!turns.is_array()) throw FieldError{"turns", "expected array"};
  for (std::size_t i = 0; i < turns.size(); ++i) {
    const std::string p = "turns[" + std::to_string(i) + "]";
    const ojson& tj = turns[i];
    Turn t;
    t.user_utterance = get_string(field(tj, "user", p), p + ".user");
    t.system_response = get_string(field(tj, "system", p), p + ".system");
    t.action = parse_action(field(tj, "action", p), manifest, p + ".action");
    const ojson& vis = field(tj, "visual", p);
    if (!vis.is_array()) throw FieldError{p + ".visual", "expected array"};
    for (std::size_t k = 0; k < vis.size(); ++k)
      t.visual.push_back(parse_visual(vis[k], p + ".visual[" + std::to_string(k) + "]"));
    const ojson& bel = field(tj, "belief", p);
    if (!bel.is_array()) throw FieldError{p + ".belief", "expected array"};
    for (std::size_t k = 0; k < bel.size(); ++k)
      t.belief.push_back(parse_frame(bel[k], p + ".belief[" + std::to_string(k) + "]"));
    d.turns.push_back(std::move(t));
  }
  return d;
}

}  // namespace

Corpus parse_corpus(std::string_view jsonl, const DomainManifest& manifest) {
  Corpus out;
  std::size_t line_no = 0;
  std::size_t pos = 0;
  while (pos < jsonl.size()) {
    auto end = jsonl.find('\n', pos);
    if (end == std::string_view::npos) end = jsonl.size();
    std::string_view line = jsonl.substr(pos, end - pos);
    pos = end + 1;
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string_view::npos) continue;
    const std::string where = "line " + std::to_string(line_no);
    ojson j;
    try {
      j = ojson::parse(line);
    } catch (const ojson::exception& e) {
      throw DataError(where + ": invalid JSON: " + e.what());
    }
    Dialogue d;
    try {
      d = parse_dialogue(j, manifest);
    } catch (const FieldError& e) {
      throw DataError(where + ": " + e.path + ": " + e.message);
    }
    auto violations = validate({d}, manifest, manifest);
    if (!violations.empty()) {
      const Violation& v = violations.front();
      std::string at = v.turn >= 0 ? "turns[" + std::to_string(v.turn) + "]." : "";
      throw DataError(where + ": dialogue " + v.dialogue_id + ": " + at + v.field +
                      ": " + v.message);
    }
    out.push_back(std::move(d));
  }
  return out;
}

Corpus load_corpus(const std::filesystem::path& path, const DomainManifest& manifest) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open corpus " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  if (in.bad()) throw DataError("error reading " + path.string());
  try {
    return parse_corpus(buf.str(), manifest);
  } catch (const DataError& e) {
    throw DataError(path.string() + ": " + e.what());
  }
}

Corpus load_corpus(const std::filesystem::path& path, Domain domain) {
  return load_corpus(path, default_manifest(domain));
}

std::string dialogue_to_jsonl(const Dialogue& d, const DomainManifest& manifest) {
  ojson j;
  j["dialogue_id"] = d.dialogue_id;
  j["domain"] = std::string(domain_name(d.domain));
  ojson turns = ojson::array();
  for (const Turn& t : d.turns) {
    ojson tj;
    tj["user"] = t.user_utterance;
    tj["system"] = t.system_response;
    ojson attrs = ojson::array();
    if (d.domain == Domain::Furniture) {
      attrs.push_back(manifest.attributes.at(t.action.attribute));
    } else {
      for (std::size_t i = 0; i < t.action.attribute_flags.size(); ++i)
        if (t.action.attribute_flags[i]) attrs.push_back(manifest.attributes.at(i));
    }
    tj["action"] = {{"name", manifest.actions.at(t.action.action)},
                    {"attributes", attrs}};
    ojson vis = ojson::array();
    for (const auto& o : t.visual) {
      ojson oj;
      oj["id"] = o.object_id;
      oj["pos"] = o.position;
      oj["color"] = o.colors;
      oj["class_name"] = o.class_name;
      oj["decor_style"] = o.decor_styles;
      for (const auto& [k, v] : o.extra) oj[k] = v;
      vis.push_back(std::move(oj));
    }
    tj["visual"] = std::move(vis);
    ojson bel = ojson::array();
    for (const auto& f : t.belief) {
      ojson slots = ojson::array();
      for (const auto& s : f.slots) slots.push_back({s.key, s.value});
      bel.push_back({{"intent", f.intent}, {"slots", slots}});
    }
    tj["belief"] = std::move(bel);
    turns.push_back(std::move(tj));
  }
  j["turns"] = std::move(turns);
  return j.dump();
}

void write_corpus(const std::filesystem::path& path, const Corpus& dialogues) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write " + path.string());
  for (const auto& d : dialogues)
    out << dialogue_to_jsonl(d, default_manifest(d.domain)) << '\n';
  if (!out) throw DataError("error writing " + path.string());
}

double mean_turns(const Corpus& dialogues) {
  if (dialogues.empty()) return 0.0;
  double total = 0.0;
  for (const auto& d : dialogues) total += static_cast<double>(d.turns.size());
  return total / static_cast<double>(dialogues.size());
}

}  // namespace mmtod
