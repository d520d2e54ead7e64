#include "lidm/corpus.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <fstream>
#include <numeric>
#include <sstream>
#include <unordered_map>

namespace lidm {

std::vector<AliasEntry> default_aliases() {
  return {
      {"moderately priced", "pricerange", "moderate"},
      {"moderately", "pricerange", "moderate"},
      {"mid priced", "pricerange", "moderate"},
      {"mid-priced", "pricerange", "moderate"},
      {"mid range", "pricerange", "moderate"},
      {"inexpensive", "pricerange", "cheap"},
      {"cheaply", "pricerange", "cheap"},
      {"pricey", "pricerange", "expensive"},
      {"upscale", "pricerange", "expensive"},
      {"high end", "pricerange", "expensive"},
      {"center", "area", "centre"},
      {"central", "area", "centre"},
      {"city center", "area", "centre"},
      {"northern", "area", "north"},
      {"southern", "area", "south"},
      {"eastern", "area", "east"},
      {"western", "area", "west"},
      {"portugese", "food", "portuguese"},
      {"oriental", "food", "asian oriental"},
      {"asian", "food", "asian oriental"},
      {"american", "food", "north american"},
  };
}

namespace {

// Single-word venue names that are also ordinary words.
const std::set<std::string> kAmbiguousNames{"ask"};

int slot_priority(std::string_view slot) {
  for (std::size_t i = 0; i < kPlaceholderSlots.size(); ++i) {
    if (kPlaceholderSlots[i] == slot) return static_cast<int>(i);
  }
  return static_cast<int>(kPlaceholderSlots.size());
}

}  // namespace

Delexicaliser::Delexicaliser(const Ontology& ontology, const KnowledgeBase& kb,
                             const std::vector<AliasEntry>& aliases) {
  for (const auto& r : kb.records()) {
    if (!kAmbiguousNames.contains(r.name)) add(tokenize(r.name), "name", r.name);
    add(tokenize(r.address), "address", r.address);
    if (r.phone) add(tokenize(*r.phone), "phone", *r.phone);
    if (r.postcode) add(tokenize(*r.postcode), "postcode", *r.postcode);
    add(tokenize(r.food), "food", r.food);
    add(tokenize(r.area), "area", r.area);
    add(tokenize(r.pricerange), "pricerange", r.pricerange);
  }
  for (const auto& slot : ontology.informable_slots) {
    for (const auto& v : ontology.values.at(slot)) add(tokenize(v), slot, v);
  }
  for (const auto& a : aliases) {
    if (!ontology.value_index(a.slot, a.value)) continue;
    add(tokenize(a.surface), a.slot, a.value);
  }
  for (auto& [first, entries] : by_first_) {
    std::stable_sort(entries.begin(), entries.end(), [](const Entry& a, const Entry& b) {
      if (a.surface.size() != b.surface.size()) return a.surface.size() > b.surface.size();
      return a.priority < b.priority;
    });
  }
}

void Delexicaliser::add(Tokens surface, std::string slot, std::string value) {
  if (surface.empty()) return;
  auto& bucket = by_first_[surface.front()];
  for (const auto& e : bucket) {
    if (e.surface == surface && e.slot == slot) return;
  }
  const int prio = slot_priority(slot);
  bucket.push_back({std::move(surface), std::move(slot), std::move(value), prio});
}

DelexResult Delexicaliser::delexicalise(const Tokens& utterance) const {
  DelexResult out;
  std::size_t i = 0;
  while (i < utterance.size()) {
    const Entry* hit = nullptr;
    if (auto it = by_first_.find(utterance[i]); it != by_first_.end()) {
      for (const auto& e : it->second) {
        if (i + e.surface.size() > utterance.size()) continue;
        if (std::equal(e.surface.begin(), e.surface.end(), utterance.begin() + static_cast<std::ptrdiff_t>(i))) {
          hit = &e;
          break;
        }
      }
    }
    if (!hit) {
      out.tokens.push_back(utterance[i]);
      ++i;
      continue;
    }
    const std::string ph = placeholder(hit->slot);
    const auto first = utterance.begin() + static_cast<std::ptrdiff_t>(i);
    const auto last = first + static_cast<std::ptrdiff_t>(hit->surface.size());
    out.lexical_map.push_back({ph, hit->slot, join(Tokens(first, last)), hit->value});
    out.tokens.push_back(ph);
    i += hit->surface.size();
  }
  return out;
}

std::optional<std::string> Delexicaliser::canonical_value(std::string_view slot, std::string_view surface) const {
  const Tokens toks = tokenize(surface);
  const std::string norm = join(toks);
  if (norm == kDontcare || norm == "dont care" || norm == "don't care" || norm == "any") {
    return std::string(kDontcare);
  }
  if (toks.empty()) return std::nullopt;
  auto it = by_first_.find(toks.front());
  if (it == by_first_.end()) return std::nullopt;
  for (const auto& e : it->second) {
    if (e.slot == slot && e.surface == toks) return e.value;
  }
  return std::nullopt;
}

namespace {

Tokens relexicalise_impl(const Tokens& templ, const KbRecord* entity, const LexicalMap& lexical_map,
                         std::vector<std::string>* unresolved) {
  Tokens out;
  std::unordered_map<std::string, std::size_t> cursor;
  for (const auto& tok : templ) {
    const auto slot = placeholder_slot(tok);
    if (!slot) {
      out.push_back(tok);
      continue;
    }
    if (entity) {
      if (auto v = entity->field(*slot)) {
        const Tokens vt = tokenize(*v);
        out.insert(out.end(), vt.begin(), vt.end());
        continue;
      }
    }
    std::size_t& pos = cursor[tok];
    const Substitution* found = nullptr;
    const Substitution* last = nullptr;
    std::size_t seen = 0;
    for (const auto& s : lexical_map) {
      if (s.placeholder != tok) continue;
      last = &s;
      if (seen++ == pos) {
        found = &s;
        break;
      }
    }
    if (!found) found = last;
    if (!found && unresolved) {
      unresolved->push_back(tok);
      out.push_back(tok);
      continue;
    }
    if (!found) {
      throw RelexError(tok, entity ? "entity '" + entity->name + "' has no " + *slot + " and no lexical value"
                                   : "no offered entity and no lexical value");
    }
    ++pos;
    const Tokens vt = tokenize(found->surface);
    out.insert(out.end(), vt.begin(), vt.end());
  }
  return out;
}

}  // namespace

Tokens relexicalise(const Tokens& templ, const KbRecord* entity, const LexicalMap& lexical_map) {
  return relexicalise_impl(templ, entity, lexical_map, nullptr);
}

Tokens relexicalise_lenient(const Tokens& templ, const KbRecord* entity, const LexicalMap& lexical_map,
                            std::vector<std::string>& unresolved) {
  return relexicalise_impl(templ, entity, lexical_map, &unresolved);
}

namespace {

std::string dialogue_id_of(const nlohmann::json& j, std::size_t position) {
  if (j.is_object() && j.contains("dialogue_id")) {
    const auto& id = j.at("dialogue_id");
    if (id.is_string()) return id.get<std::string>();
    if (id.is_number_integer()) return std::to_string(id.get<long long>());
  }
  return "#" + std::to_string(position);
}

const nlohmann::json& require(const nlohmann::json& obj, const char* field, const std::string& id,
                              const std::string& where) {
  if (!obj.is_object() || !obj.contains(field)) {
    throw CorpusError("dialogue " + id + ": missing field '" + where + field + "'");
  }
  return obj.at(field);
}

std::string require_string(const nlohmann::json& obj, const char* field, const std::string& id,
                           const std::string& where) {
  const auto& v = require(obj, field, id, where);
  if (!v.is_string()) throw CorpusError("dialogue " + id + ": field '" + where + field + "' is not a string");
  return v.get<std::string>();
}

}  // namespace

DialogueRecord parse_dialogue(const nlohmann::json& j, const Ontology& ontology, const Delexicaliser& delex) {
  const std::string id = dialogue_id_of(j, 0);
  if (!j.is_object()) throw CorpusError("dialogue " + id + ": not a JSON object");
  DialogueRecord rec;
  rec.dialogue_id = id;
  if (j.contains("finished")) {
    if (!j.at("finished").is_boolean()) throw CorpusError("dialogue " + id + ": field 'finished' is not a boolean");
    rec.finished = j.at("finished").get<bool>();
  }

  const auto& goal = require(j, "goal", id, "");
  const auto& constraints = require(goal, "constraints", id, "goal.");
  if (!constraints.is_array()) throw CorpusError("dialogue " + id + ": field 'goal.constraints' is not a list");
  for (const auto& c : constraints) {
    if (!c.is_array() || c.size() != 2 || !c[0].is_string() || !c[1].is_string()) {
      throw CorpusError("dialogue " + id + ": field 'goal.constraints' entries must be [slot, value]");
    }
    const auto slot = c[0].get<std::string>();
    if (!ontology.is_informable(slot)) {
      throw CorpusError("dialogue " + id + ": field 'goal.constraints' names non-informable slot '" + slot + "'");
    }
    const auto raw = c[1].get<std::string>();
    rec.goal_constraints[slot] = delex.canonical_value(slot, raw).value_or(join(tokenize(raw)));
  }
  if (goal.contains("request-slots")) {
    const auto& reqs = goal.at("request-slots");
    if (!reqs.is_array()) throw CorpusError("dialogue " + id + ": field 'goal.request-slots' is not a list");
    for (const auto& r : reqs) {
      if (!r.is_string()) throw CorpusError("dialogue " + id + ": field 'goal.request-slots' holds a non-string");
      rec.goal_requests.insert(r.get<std::string>());
    }
  }

  const auto& dial = require(j, "dial", id, "");
  if (!dial.is_array()) throw CorpusError("dialogue " + id + ": field 'dial' is not a list");
  std::map<std::string, std::string> labels;
  for (const auto& s : ontology.informable_slots) labels[s] = std::string(kNone);
  for (std::size_t t = 0; t < dial.size(); ++t) {
    const auto& turn = dial[t];
    const std::string where = "dial[" + std::to_string(t) + "].";
    const auto& usr = require(turn, "usr", id, where);
    const auto& sys = require(turn, "sys", id, where);
    Turn out;
    out.user = tokenize(require_string(usr, "transcript", id, where + "usr."));
    out.response = tokenize(require_string(sys, "sent", id, where + "sys."));
    if (usr.contains("slu")) {
      const auto& slu = usr.at("slu");
      if (!slu.is_array()) throw CorpusError("dialogue " + id + ": field '" + where + "usr.slu' is not a list");
      for (const auto& act : slu) {
        if (!act.is_object() || !act.contains("act") || !act.contains("slots")) {
          throw CorpusError("dialogue " + id + ": field '" + where + "usr.slu' entries need 'act' and 'slots'");
        }
        const auto name = act.at("act").get<std::string>();
        for (const auto& sv : act.at("slots")) {
          if (!sv.is_array() || sv.size() != 2) continue;
          const auto slot = sv[0].get<std::string>();
          const auto value = sv[1].get<std::string>();
          if (name == "inform" && ontology.is_informable(slot)) {
            if (auto canon = delex.canonical_value(slot, value)) labels[slot] = *canon;
          } else if (name == "request" && slot == "slot" && ontology.is_requestable(value)) {
            out.requested.insert(value);
          }
        }
      }
    }
    out.slot_labels = labels;
    auto du = delex.delexicalise(out.user);
    out.delex_user = std::move(du.tokens);
    out.user_map = std::move(du.lexical_map);
    auto dr = delex.delexicalise(out.response);
    out.delex_response = std::move(dr.tokens);
    out.response_map = std::move(dr.lexical_map);
    rec.turns.push_back(std::move(out));
  }
  return rec;
}

CorpusLoad parse_corpus(const nlohmann::json& j, const Ontology& ontology, const Delexicaliser& delex) {
  if (!j.is_array()) throw CorpusError("corpus must be a JSON list of dialogues");
  CorpusLoad out;
  for (std::size_t i = 0; i < j.size(); ++i) {
    try {
      auto rec = parse_dialogue(j[i], ontology, delex);
      if (!j[i].contains("dialogue_id")) rec.dialogue_id = dialogue_id_of(j[i], i);
      out.records.push_back(std::move(rec));
    } catch (const std::exception& e) {
      out.rejected.push_back({dialogue_id_of(j[i], i), e.what()});
    }
  }
  return out;
}

CorpusLoad load_corpus(const std::filesystem::path& path, const Ontology& ontology, const Delexicaliser& delex) {
  std::ifstream in(path);
  if (!in) throw CorpusError("cannot open corpus file " + path.string());
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw CorpusError("corpus file " + path.string() + " is not valid JSON: " + e.what());
  }
  return parse_corpus(j, ontology, delex);
}

std::size_t count_turns(const std::vector<DialogueRecord>& records) {
  std::size_t n = 0;
  for (const auto& r : records) n += r.turns.size();
  return n;
}

CorpusSplit split_corpus(const std::vector<DialogueRecord>& records, std::uint64_t seed) {
  std::vector<std::size_t> order(records.size());
  std::iota(order.begin(), order.end(), 0);
  Rng rng(seed);
  // Fisher-Yates with an explicit index draw so splits do not depend on the standard library.
  for (std::size_t i = order.size(); i > 1; --i) {
    const std::size_t k = static_cast<std::size_t>(rng() % i);
    std::swap(order[i - 1], order[k]);
  }
  const std::size_t fifth = records.size() / 5;
  CorpusSplit split;
  for (std::size_t i = 0; i < order.size(); ++i) {
    const auto& rec = records[order[i]];
    if (i < fifth) {
      split.valid.push_back(rec);
    } else if (i < 2 * fifth) {
      split.test.push_back(rec);
    } else {
      split.train.push_back(rec);
    }
  }
  return split;
}

nlohmann::json split_manifest(const CorpusSplit& split, std::uint64_t seed) {
  auto ids = [](const std::vector<DialogueRecord>& rs) {
    std::vector<std::string> out;
    for (const auto& r : rs) out.push_back(r.dialogue_id);
    return out;
  };
  return {{"seed", seed}, {"train", ids(split.train)}, {"valid", ids(split.valid)}, {"test", ids(split.test)}};
}

void save_split_manifest(const CorpusSplit& split, std::uint64_t seed, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write split manifest " + path.string());
  out << split_manifest(split, seed).dump(2) << '\n';
}

Vocabulary build_vocab(const std::vector<DialogueRecord>& train, int min_count) {
  std::unordered_map<std::string, int> counts;
  for (const auto& rec : train) {
    for (const auto& t : rec.turns) {
      for (const auto& w : t.delex_user) ++counts[w];
      for (const auto& w : t.delex_response) ++counts[w];
    }
  }
  const auto placeholders = placeholder_tokens();
  std::vector<std::pair<std::string, int>> kept;
  for (const auto& [w, c] : counts) {
    if (c < min_count || placeholder_slot(w)) continue;
    if (w == Vocabulary::kBos || w == Vocabulary::kEos || w == Vocabulary::kUnk) continue;
    kept.emplace_back(w, c);
  }
  std::sort(kept.begin(), kept.end(), [](const auto& a, const auto& b) {
    return a.second != b.second ? a.second > b.second : a.first < b.first;
  });
  std::vector<std::string> words;
  words.reserve(kept.size());
  for (auto& [w, c] : kept) words.push_back(w);
  return Vocabulary(placeholders, words);
}

}  // namespace lidm
