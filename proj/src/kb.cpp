#include "lidm/kb.hpp"

#include "lidm/text.hpp"

#include <nlohmann/json.hpp>

#include <fstream>
#include <set>

namespace lidm {

std::optional<std::string> KbRecord::field(std::string_view slot) const {
  if (slot == "name") return name;
  if (slot == "food") return food;
  if (slot == "pricerange") return pricerange;
  if (slot == "area") return area;
  if (slot == "address") return address;
  if (slot == "phone") return phone;
  if (slot == "postcode") return postcode;
  return std::nullopt;
}

Query form_query(const BeliefState& belief, const Ontology& ontology) {
  Query q;
  for (std::size_t s = 0; s < ontology.informable_slots.size(); ++s) {
    const Vector& dist = belief.informable.at(s);
    Eigen::Index best = 0;
    for (Eigen::Index i = 1; i < dist.size(); ++i) {
      if (dist(i) > dist(best)) best = i;
    }
    const auto& slot = ontology.informable_slots[s];
    const auto& values = ontology.values.at(slot);
    if (static_cast<std::size_t>(best) < values.size()) q[slot] = values[static_cast<std::size_t>(best)];
  }
  return q;
}

Vector match_bins(int count) {
  if (count < 0) throw std::invalid_argument("match_bins: negative count " + std::to_string(count));
  Vector v = Vector::Zero(kMatchBins);
  v(std::min(count, kMatchBins - 1)) = 1.0;
  return v;
}

KnowledgeBase::KnowledgeBase(std::vector<KbRecord> records) : records_(std::move(records)) {
  std::set<std::string> names;
  for (const auto& r : records_) {
    if (!names.insert(r.name).second) throw KbError("duplicate venue name in KB: " + r.name);
  }
}

SearchResult KnowledgeBase::search(const Query& query) const {
  SearchResult out;
  for (std::size_t i = 0; i < records_.size(); ++i) {
    bool ok = true;
    for (const auto& [slot, value] : query) {
      const auto v = records_[i].field(slot);
      if (!v || *v != value) {
        ok = false;
        break;
      }
    }
    if (ok) out.indices.push_back(i);
  }
  out.count = static_cast<int>(out.indices.size());
  return out;
}

std::optional<std::size_t> KnowledgeBase::find_by_name(std::string_view name) const {
  for (std::size_t i = 0; i < records_.size(); ++i) {
    if (records_[i].name == name) return i;
  }
  return std::nullopt;
}

nlohmann::json KnowledgeBase::to_json() const {
  nlohmann::json arr = nlohmann::json::array();
  for (const auto& r : records_) {
    nlohmann::json o{{"name", r.name}, {"food", r.food}, {"pricerange", r.pricerange},
                     {"area", r.area}, {"address", r.address}};
    if (r.phone) o["phone"] = *r.phone;
    if (r.postcode) o["postcode"] = *r.postcode;
    arr.push_back(std::move(o));
  }
  return arr;
}

namespace {

std::string normalise(const nlohmann::json& v) { return join(tokenize(v.get<std::string>())); }

}  // namespace

KnowledgeBase KnowledgeBase::from_json(const nlohmann::json& j) {
  if (!j.is_array()) throw KbError("KB must be a JSON list of venues");
  std::vector<KbRecord> records;
  for (std::size_t i = 0; i < j.size(); ++i) {
    const auto& o = j[i];
    KbRecord r;
    for (const char* key : {"name", "food", "pricerange", "area", "address"}) {
      if (!o.contains(key) || !o.at(key).is_string()) {
        throw KbError("KB entry " + std::to_string(i) + " lacks string field '" + key + "'");
      }
    }
    r.name = normalise(o.at("name"));
    r.food = normalise(o.at("food"));
    r.pricerange = normalise(o.at("pricerange"));
    r.area = normalise(o.at("area"));
    r.address = normalise(o.at("address"));
    // Empty strings in the published KB mean the field is unknown.
    if (o.contains("phone") && o.at("phone").is_string()) {
      auto p = normalise(o.at("phone"));
      if (!p.empty()) r.phone = std::move(p);
    }
    if (o.contains("postcode") && o.at("postcode").is_string()) {
      auto p = normalise(o.at("postcode"));
      if (!p.empty()) r.postcode = std::move(p);
    }
    records.push_back(std::move(r));
  }
  return KnowledgeBase(std::move(records));
}

KnowledgeBase load_kb(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw KbError("cannot open KB file " + path.string());
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw KbError("KB file " + path.string() + " is not valid JSON: " + e.what());
  }
  return KnowledgeBase::from_json(j);
}

}  // namespace lidm
