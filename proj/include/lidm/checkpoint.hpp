#pragma once

#include "lidm/belief.hpp"
#include "lidm/corpus.hpp"
#include "lidm/kb.hpp"
#include "lidm/model.hpp"
#include "lidm/ontology.hpp"
#include "lidm/text.hpp"

#include <nlohmann/json.hpp>

#include <cstdint>
#include <filesystem>
#include <string>

namespace lidm {

inline constexpr std::uint32_t kCheckpointVersion = 1;

class CheckpointError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// A trained system: everything needed to track, decode and relexicalise.
struct Agent {
  Ontology ontology;
  KnowledgeBase kb;
  Vocabulary vocab;
  Delexicaliser delex;
  BeliefTracker tracker;
  LidmModel model;
  std::string tag;
  std::uint64_t seed = 0;
  nlohmann::json training;  // hyperparameters and data settings recorded at training time
};

// Layout: "LIDMCKPT", u32 version, u64 manifest length, manifest JSON, u64 array count, then per array
// u32 name length, name, u32 group length, group, u8 policy flag, i64 rows, i64 cols, rows*cols doubles
// (column-major, host byte order). Tracker arrays are the ones named "tracker/...".
void save_checkpoint(const std::filesystem::path& path, const Agent& agent);
Agent load_checkpoint(const std::filesystem::path& path);

// Reads only the manifest.
nlohmann::json read_manifest(const std::filesystem::path& path);

}  // namespace lidm
