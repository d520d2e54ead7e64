#pragma once

#include "lidm/ontology.hpp"

#include <nlohmann/json_fwd.hpp>

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace lidm {

struct KbRecord {
  std::string name;
  std::string food;
  std::string pricerange;
  std::string area;
  std::string address;
  std::optional<std::string> phone;
  std::optional<std::string> postcode;

  // Value of a slot by name ("name", "food", ..., "postcode"); nullopt when absent.
  std::optional<std::string> field(std::string_view slot) const;
};

// Informable slot -> required value.
using Query = std::map<std::string, std::string>;

// Argmax value of every informable slot, dropping "none" and "dontcare".
// Ties resolve to the earliest value in ontology order.
Query form_query(const BeliefState& belief, const Ontology& ontology);

inline constexpr int kMatchBins = 6;

// One-hot over {0}, {1}, {2}, {3}, {4}, {>=5}.
Vector match_bins(int count);

struct SearchResult {
  int count = 0;
  std::vector<std::size_t> indices;  // KB file order
};

class KbError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class KnowledgeBase {
 public:
  KnowledgeBase() = default;
  explicit KnowledgeBase(std::vector<KbRecord> records);

  std::size_t size() const { return records_.size(); }
  const std::vector<KbRecord>& records() const { return records_; }
  const KbRecord& at(std::size_t i) const { return records_.at(i); }

  SearchResult search(const Query& query) const;
  std::optional<std::size_t> find_by_name(std::string_view name) const;

  nlohmann::json to_json() const;
  static KnowledgeBase from_json(const nlohmann::json& j);

 private:
  std::vector<KbRecord> records_;
};

// Published database file: a JSON list of venue objects.
KnowledgeBase load_kb(const std::filesystem::path& path);

}  // namespace lidm
