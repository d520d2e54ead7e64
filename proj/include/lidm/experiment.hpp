#pragma once

#include "lidm/belief.hpp"
#include "lidm/checkpoint.hpp"
#include "lidm/corpus.hpp"
#include "lidm/eval.hpp"
#include "lidm/nvil.hpp"
#include "lidm/rl.hpp"

#include <nlohmann/json.hpp>

#include <filesystem>
#include <optional>
#include <ostream>
#include <string>

namespace lidm {

struct DataConfig {
  std::filesystem::path corpus;
  std::filesystem::path ontology;
  std::filesystem::path kb;
  std::uint64_t split_seed = 1;
  int min_count = 2;

  nlohmann::json to_json() const;
  // Relative paths are resolved against base_dir.
  static DataConfig from_json(const nlohmann::json& j, const std::filesystem::path& base_dir = {});
};

struct CorpusData {
  Ontology ontology;
  KnowledgeBase kb;
  Delexicaliser delex;
  CorpusLoad load;
  CorpusSplit split;
  Vocabulary vocab;
};

CorpusData load_corpus_data(const DataConfig& config);

struct ExperimentConfig {
  DataConfig data;
  int latent_size = 50;
  int hidden = 50;
  int embed_dim = 50;
  int max_len = 40;
  TrackerConfig tracker;
  TrackerTrainConfig tracker_training;
  NvilConfig nvil;
  RlConfig rl;
  DecodeOptions decode;
  std::uint64_t seed = 1;
  std::filesystem::path output_dir = "runs/lidm";

  nlohmann::json to_json() const;
  static ExperimentConfig from_json(const nlohmann::json& j, const std::filesystem::path& base_dir = {});
  static ExperimentConfig load(const std::filesystem::path& path);

  // One master seed for everything that samples: model init, tracker, NVIL, RL.
  void reseed(std::uint64_t master);
};

struct TrainingOutcome {
  std::filesystem::path checkpoint;
  TrackerTrainReport tracker;
  TrackerAccuracy tracker_valid;
  LabeledSet labels;
  std::vector<EpochStats> epochs;
  EvalReport test;
};

// Tracker pre-training, labeling, semi-supervised training, checkpoint and test evaluation.
// Artifacts go to config.output_dir.
TrainingOutcome run_training(const ExperimentConfig& config, std::ostream& log);

// Contexts for one split of the checkpoint's corpus, labeled with the clustering of the training split.
struct AgentData {
  CorpusData data;
  std::vector<DialogueContext> train;
  std::vector<DialogueContext> valid;
  std::vector<DialogueContext> test;
};

// Reloads the corpus recorded in the checkpoint (or `data_override`) and checks the vocabulary hash.
AgentData load_agent_data(const Agent& agent, const std::optional<DataConfig>& data_override = std::nullopt);

struct RlOutcome {
  std::filesystem::path checkpoint;
  EvalReport before;
  EvalReport after;
  std::vector<RlEpochStats> epochs;
};

RlOutcome run_finetune(const std::filesystem::path& checkpoint, const RlConfig& config,
                       const std::filesystem::path& output, const std::optional<DataConfig>& data_override,
                       std::ostream& log);

}  // namespace lidm
