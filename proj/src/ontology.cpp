#include "lidm/ontology.hpp"

#include "lidm/text.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cmath>
#include <fstream>

namespace lidm {

std::string placeholder(std::string_view slot) { return "[v." + std::string(slot) + "]"; }

std::optional<std::string> placeholder_slot(std::string_view token) {
  if (token.size() > 4 && token.starts_with("[v.") && token.back() == ']') {
    return std::string(token.substr(3, token.size() - 4));
  }
  return std::nullopt;
}

std::vector<std::string> placeholder_tokens() {
  std::vector<std::string> out;
  for (auto s : kPlaceholderSlots) out.push_back(placeholder(s));
  return out;
}

std::vector<std::string> Ontology::belief_values(std::string_view slot) const {
  auto it = values.find(std::string(slot));
  if (it == values.end()) throw OntologyError("not an informable slot: " + std::string(slot));
  std::vector<std::string> out = it->second;
  out.emplace_back(kDontcare);
  out.emplace_back(kNone);
  return out;
}

std::optional<int> Ontology::value_index(std::string_view slot, std::string_view value) const {
  auto it = values.find(std::string(slot));
  if (it == values.end()) return std::nullopt;
  const auto& vs = it->second;
  if (value == kDontcare) return static_cast<int>(vs.size());
  if (value == kNone) return static_cast<int>(vs.size()) + 1;
  auto pos = std::find(vs.begin(), vs.end(), value);
  if (pos == vs.end()) return std::nullopt;
  return static_cast<int>(pos - vs.begin());
}

bool Ontology::is_informable(std::string_view slot) const {
  return std::find(informable_slots.begin(), informable_slots.end(), slot) != informable_slots.end();
}

bool Ontology::is_requestable(std::string_view slot) const {
  return std::find(requestable_slots.begin(), requestable_slots.end(), slot) != requestable_slots.end();
}

std::size_t Ontology::belief_dim() const {
  std::size_t n = requestable_slots.size();
  for (const auto& s : informable_slots) n += values.at(s).size() + 2;
  return n;
}

nlohmann::json Ontology::to_json() const {
  nlohmann::json inf = nlohmann::json::object();
  for (const auto& s : informable_slots) inf[s] = values.at(s);
  return {{"informable", inf}, {"requestable", requestable_slots}, {"informable_order", informable_slots}};
}

Ontology Ontology::from_json(const nlohmann::json& j) {
  if (!j.is_object() || !j.contains("informable") || !j.contains("requestable")) {
    throw OntologyError("ontology must contain 'informable' and 'requestable'");
  }
  Ontology o;
  const auto& inf = j.at("informable");
  for (auto slot : kInformableSlots) {
    const std::string s(slot);
    if (!inf.contains(s)) throw OntologyError("ontology is missing informable slot '" + s + "'");
    std::vector<std::string> vals;
    for (const auto& v : inf.at(s)) {
      std::string value = join(tokenize(v.get<std::string>()));
      if (value.empty()) throw OntologyError("empty value for slot '" + s + "'");
      if (value == kDontcare || value == kNone) continue;
      if (std::find(vals.begin(), vals.end(), value) == vals.end()) vals.push_back(value);
    }
    o.informable_slots.push_back(s);
    o.values[s] = std::move(vals);
  }
  std::vector<std::string> listed;
  for (const auto& r : j.at("requestable")) listed.push_back(r.get<std::string>());
  for (auto slot : kRequestableSlots) {
    const std::string s(slot);
    if (std::find(listed.begin(), listed.end(), s) == listed.end()) {
      throw OntologyError("ontology is missing requestable slot '" + s + "'");
    }
    o.requestable_slots.push_back(s);
  }
  return o;
}

Ontology load_ontology(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw OntologyError("cannot open ontology file " + path.string());
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw OntologyError("ontology file " + path.string() + " is not valid JSON: " + e.what());
  }
  return Ontology::from_json(j);
}

BeliefState BeliefState::initial(const Ontology& ontology) {
  BeliefState b;
  for (const auto& s : ontology.informable_slots) {
    Vector v = Vector::Zero(static_cast<Eigen::Index>(ontology.values.at(s).size() + 2));
    v(v.size() - 1) = 1.0;
    b.informable.push_back(std::move(v));
  }
  b.requestable = Vector::Zero(static_cast<Eigen::Index>(ontology.requestable_slots.size()));
  return b;
}

Vector BeliefState::concat() const {
  Vector out(static_cast<Eigen::Index>(dim()));
  Eigen::Index r = 0;
  for (const auto& v : informable) {
    out.segment(r, v.size()) = v;
    r += v.size();
  }
  out.segment(r, requestable.size()) = requestable;
  return out;
}

std::size_t BeliefState::dim() const {
  std::size_t n = static_cast<std::size_t>(requestable.size());
  for (const auto& v : informable) n += static_cast<std::size_t>(v.size());
  return n;
}

bool BeliefState::valid(double tolerance) const {
  for (const auto& v : informable) {
    if (!v.allFinite() || (v.array() < 0.0).any() || (v.array() > 1.0).any()) return false;
    if (std::abs(v.sum() - 1.0) > tolerance) return false;
  }
  return requestable.allFinite() && (requestable.array() >= 0.0).all() && (requestable.array() <= 1.0).all();
}

}  // namespace lidm
