#pragma once

#include "lidm/kb.hpp"
#include "lidm/ontology.hpp"
#include "lidm/text.hpp"

#include <nlohmann/json_fwd.hpp>

#include <cstdint>
#include <filesystem>
#include <map>
#include <set>
#include <string>
#include <vector>

namespace lidm {

struct Substitution {
  std::string placeholder;  // "[v.food]"
  std::string slot;         // "food"
  std::string surface;      // original words as they appeared
  std::string value;        // canonical ontology / KB value
};

// Substitutions in order of occurrence; placeholders consume entries left to right.
using LexicalMap = std::vector<Substitution>;

struct DelexResult {
  Tokens tokens;
  LexicalMap lexical_map;
};

struct AliasEntry {
  std::string surface;
  std::string slot;
  std::string value;
};

// Hand-curated surface variants that map onto ontology values; entries whose
// target value is missing from the ontology are ignored.
std::vector<AliasEntry> default_aliases();

class Delexicaliser {
 public:
  Delexicaliser(const Ontology& ontology, const KnowledgeBase& kb,
                const std::vector<AliasEntry>& aliases = default_aliases());

  // Longest match first, left to right; equal-length matches resolve by kPlaceholderSlots order.
  DelexResult delexicalise(const Tokens& utterance) const;

  // Canonical ontology value for a surface string of an informable slot, if any.
  std::optional<std::string> canonical_value(std::string_view slot, std::string_view surface) const;

 private:
  struct Entry {
    Tokens surface;
    std::string slot;
    std::string value;
    int priority = 0;
  };
  void add(Tokens surface, std::string slot, std::string value);
  std::map<std::string, std::vector<Entry>> by_first_;
};

class RelexError : public std::runtime_error {
 public:
  RelexError(const std::string& placeholder, const std::string& why)
      : std::runtime_error("cannot resolve " + placeholder + ": " + why), placeholder_(placeholder) {}
  const std::string& placeholder() const { return placeholder_; }

 private:
  std::string placeholder_;
};

// Fills placeholders from the entity first, then from the lexical map in order of occurrence.
Tokens relexicalise(const Tokens& templ, const KbRecord* entity, const LexicalMap& lexical_map);
// As relexicalise, but unresolvable placeholders stay in place and are appended to `unresolved`.
Tokens relexicalise_lenient(const Tokens& templ, const KbRecord* entity, const LexicalMap& lexical_map,
                            std::vector<std::string>& unresolved);

struct Turn {
  Tokens user;
  Tokens response;
  Tokens delex_user;
  Tokens delex_response;
  LexicalMap user_map;
  LexicalMap response_map;
  // Informable slot -> accumulated annotated value ("none" when never informed).
  std::map<std::string, std::string> slot_labels;
  // Requestable slots asked for in this turn.
  std::set<std::string> requested;
};

struct DialogueRecord {
  std::string dialogue_id;
  std::map<std::string, std::string> goal_constraints;
  std::set<std::string> goal_requests;
  bool finished = false;
  std::vector<Turn> turns;
};

class CorpusError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct RejectedRecord {
  std::string dialogue_id;
  std::string reason;
};

struct CorpusLoad {
  std::vector<DialogueRecord> records;
  std::vector<RejectedRecord> rejected;
};

// Parses one dialogue object of the published corpus; throws CorpusError naming the field and id.
DialogueRecord parse_dialogue(const nlohmann::json& j, const Ontology& ontology, const Delexicaliser& delex);
CorpusLoad parse_corpus(const nlohmann::json& j, const Ontology& ontology, const Delexicaliser& delex);
CorpusLoad load_corpus(const std::filesystem::path& path, const Ontology& ontology, const Delexicaliser& delex);

std::size_t count_turns(const std::vector<DialogueRecord>& records);

struct CorpusSplit {
  std::vector<DialogueRecord> train;
  std::vector<DialogueRecord> valid;
  std::vector<DialogueRecord> test;
};

// Dialogue-level 3:1:1 split; the remainder goes to train.
CorpusSplit split_corpus(const std::vector<DialogueRecord>& records, std::uint64_t seed);

nlohmann::json split_manifest(const CorpusSplit& split, std::uint64_t seed);
void save_split_manifest(const CorpusSplit& split, std::uint64_t seed, const std::filesystem::path& path);

// Tokens of delexicalised user and machine turns with frequency >= min_count, most frequent first.
// Placeholders are always present.
Vocabulary build_vocab(const std::vector<DialogueRecord>& train, int min_count);

}  // namespace lidm
