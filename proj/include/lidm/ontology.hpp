#pragma once

#include "lidm/params.hpp"

#include <nlohmann/json_fwd.hpp>

#include <array>
#include <filesystem>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace lidm {

inline constexpr std::array<std::string_view, 3> kInformableSlots{"food", "pricerange", "area"};
inline constexpr std::array<std::string_view, 6> kRequestableSlots{"address", "phone", "postcode",
                                                                   "food", "pricerange", "area"};
// Placeholder priority when two surface forms of equal length match at the same position.
inline constexpr std::array<std::string_view, 7> kPlaceholderSlots{"name", "address", "phone", "postcode",
                                                                   "food", "area", "pricerange"};
inline constexpr std::string_view kDontcare = "dontcare";
inline constexpr std::string_view kNone = "none";

std::string placeholder(std::string_view slot);
// "[v.food]" -> "food"; nullopt for ordinary words.
std::optional<std::string> placeholder_slot(std::string_view token);
std::vector<std::string> placeholder_tokens();

class OntologyError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct Ontology {
  std::vector<std::string> informable_slots;
  std::map<std::string, std::vector<std::string>> values;
  std::vector<std::string> requestable_slots;

  // Ontology values followed by "dontcare" and "none".
  std::vector<std::string> belief_values(std::string_view slot) const;
  std::optional<int> value_index(std::string_view slot, std::string_view value) const;
  bool is_informable(std::string_view slot) const;
  bool is_requestable(std::string_view slot) const;
  std::size_t belief_dim() const;

  nlohmann::json to_json() const;
  static Ontology from_json(const nlohmann::json& j);
};

// Published ontology file: {"informable": {slot: [values]}, "requestable": [slots]}.
Ontology load_ontology(const std::filesystem::path& path);

struct BeliefState {
  // Per informable slot (ontology order): distribution over values, dontcare, none.
  std::vector<Vector> informable;
  // Per requestable slot: probability that it is requested this turn.
  Vector requestable;

  static BeliefState initial(const Ontology& ontology);
  Vector concat() const;
  std::size_t dim() const;
  bool valid(double tolerance = 1e-6) const;
};

}  // namespace lidm
