#pragma once

#include "lidm/kb.hpp"
#include "lidm/metrics.hpp"
#include "lidm/model.hpp"
#include "lidm/pipeline.hpp"
#include "lidm/text.hpp"

#include <nlohmann/json_fwd.hpp>

#include <functional>
#include <optional>
#include <set>
#include <string>
#include <vector>

namespace lidm {

struct DialogueEvaluation {
  std::string dialogue_id;
  bool success = false;
  std::optional<std::string> entity;
  std::set<std::string> answered;
  std::set<std::string> requested;
};

struct EvalReport {
  std::string model;
  double success_rate = 0.0;
  double corpus_bleu = 0.0;
  std::size_t turns = 0;
  std::vector<DialogueEvaluation> dialogues;

  nlohmann::json to_json() const;
};

// Rows: Model, Success %, BLEU.
std::string render_table(const std::vector<EvalReport>& reports);

// Produces the delexicalised response for turn t of a dialogue.
using Responder = std::function<Tokens(const DialogueContext&, std::size_t)>;

EvalReport evaluate_responses(const std::vector<DialogueContext>& dialogues, const Responder& responder,
                              const KnowledgeBase& kb, std::string model_name);

// Human responses passed through unchanged.
EvalReport evaluate_ground_truth(const std::vector<DialogueContext>& dialogues, const KnowledgeBase& kb);

struct DecodeOptions {
  int beam_width = 10;
  int max_len = 40;
};

// Most probable intention under the policy, then beam search.
Tokens predict_response(const LidmModel& model, const TurnContext& turn, const Vocabulary& vocab,
                        const DecodeOptions& options);

EvalReport evaluate_model(const LidmModel& model, const std::vector<DialogueContext>& dialogues,
                          const KnowledgeBase& kb, const Vocabulary& vocab, const DecodeOptions& options,
                          std::string model_name);

class VocabularyMismatch : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

void check_vocab_hash(std::uint64_t expected, const Vocabulary& vocab);

}  // namespace lidm
