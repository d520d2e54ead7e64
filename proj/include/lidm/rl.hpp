#pragma once

#include "lidm/eval.hpp"
#include "lidm/kb.hpp"
#include "lidm/model.hpp"
#include "lidm/pipeline.hpp"

#include <nlohmann/json_fwd.hpp>

#include <functional>
#include <ostream>
#include <vector>

namespace lidm {

struct TurnReward {
  double sbleu = 0.0;
  int delta = 0;  // +1 improves, -1 degrades, 0 otherwise
  double reward = 0.0;
};

double combine_reward(double sbleu, int delta, double eta);

// Replaces the reference response of turn t with `generated` (all other turns stay human)
// and compares dialogue success with and without the substitution.
TurnReward turn_reward(const Tokens& generated, const DialogueContext& dialogue, std::size_t t,
                       const KnowledgeBase& kb, double eta);

// Accumulates the gradient of -reward * log pi(z|s) into the policy MLP only.
double accumulate_policy_gradient(LidmModel& model, const TurnContext& turn, int z, double reward);

struct RlConfig {
  int epochs = 3;
  double learning_rate = 1e-4;
  double eta = 0.5;
  bool greedy = true;  // decoding of m_t during fine-tuning; false samples words
  int max_len = 40;
  std::uint64_t seed = 1;

  nlohmann::json to_json() const;
  static RlConfig from_json(const nlohmann::json& j);
};

struct RlEpochStats {
  int epoch = 0;
  double mean_reward = 0.0;
  double success_train = 0.0;
  double success_valid = 0.0;
  std::size_t skipped_turns = 0;
};

class RlTrainer {
 public:
  RlTrainer(LidmModel& model, const KnowledgeBase& kb, const Vocabulary& vocab, RlConfig config);

  // Unlabeled turns sample z from the policy; labeled turns take their label.
  TurnReward train_turn(const DialogueContext& dialogue, std::size_t t);
  // Success columns use the evaluation decoder (argmax intention, beam search).
  RlEpochStats train_epoch(const std::vector<DialogueContext>& train, const std::vector<DialogueContext>& valid,
                           int epoch, const DecodeOptions& eval_options);
  std::vector<RlEpochStats> fit(const std::vector<DialogueContext>& train, const std::vector<DialogueContext>& valid,
                                const DecodeOptions& eval_options,
                                const std::function<void(const RlEpochStats&)>& on_epoch = {});

 private:
  Tokens generate(int z, const Vector& state);

  LidmModel* model_;
  const KnowledgeBase* kb_;
  const Vocabulary* vocab_;
  RlConfig config_;
  Rng rng_;
  Adam adam_;
};

void write_rl_csv_header(std::ostream& out);
void write_rl_csv_row(std::ostream& out, const RlEpochStats& s);

}  // namespace lidm
