#pragma once

#include "lidm/autodiff.hpp"
#include "lidm/corpus.hpp"
#include "lidm/nn.hpp"
#include "lidm/ontology.hpp"
#include "lidm/params.hpp"
#include "lidm/text.hpp"

#include <nlohmann/json_fwd.hpp>

#include <cstdint>
#include <map>
#include <set>
#include <string>
#include <vector>

namespace lidm {

struct TrackerConfig {
  int embed_dim = 30;
  int filters = 20;  // per window width
  int max_width = 3;
  int hidden = 20;
  double init_recurrence = 3.0;

  nlohmann::json to_json() const;
  static TrackerConfig from_json(const nlohmann::json& j);
};

// Tracker input for one turn: delexicalised, id-encoded user turn and previous machine turn.
struct TrackerTurn {
  TokenIds user;
  TokenIds prev_response;
  LexicalMap user_map;
  LexicalMap prev_response_map;
};

struct TrackerLabels {
  std::map<std::string, std::string> slot_labels;
  std::set<std::string> requested;
};

class TrackerError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Per informable slot: CNNs over the user turn and the previous machine turn, a value
// scorer shared by all values of the slot (fed with value-specific mention flags taken from
// the lexical maps), separate dontcare/none scores and a recurrence on the previous belief.
// Requestables share one CNN over the user turn with an independent sigmoid per slot.
class BeliefTracker {
 public:
  BeliefTracker(const Ontology& ontology, int vocab_size, const TrackerConfig& config, std::uint64_t seed);
  // Parameters restored from a checkpoint; names must carry the "tracker/" prefix.
  BeliefTracker(const Ontology& ontology, const TrackerConfig& config, ParamStore params);
  BeliefTracker(const BeliefTracker& other);
  BeliefTracker& operator=(const BeliefTracker& other);

  struct Output {
    std::vector<ad::Var> slot_log_probs;  // one per informable slot
    ad::Var request_logits;
  };
  Output forward(ad::Tape& tape, const TrackerTurn& turn, const BeliefState& prev) const;

  // An empty user turn with an empty previous machine turn carries no evidence and
  // returns prev unchanged.
  BeliefState track(const TrackerTurn& turn, const BeliefState& prev) const;

  // Sum of per-slot cross-entropies and per-requestable binary cross-entropies.
  ad::Var loss(ad::Tape& tape, const Output& out, const TrackerLabels& labels) const;

  const Ontology& ontology() const { return ontology_; }
  const TrackerConfig& config() const { return config_; }
  int vocab_size() const { return static_cast<int>(embed_.vocab_size()); }
  ParamStore& params() { return params_; }
  const ParamStore& params() const { return params_; }

 private:
  struct SlotNet {
    nn::ConvPool user_cnn;
    nn::ConvPool machine_cnn;
    nn::Linear hidden;
    const Param* mention = nullptr;
    const Param* value_out = nullptr;
    nn::Linear special;
    const Param* recurrence = nullptr;
  };
  void create(int vocab_size, std::uint64_t seed);
  void bind();
  std::vector<ad::Var> embed_padded(ad::Tape& tape, const TokenIds& ids) const;

  Ontology ontology_;
  TrackerConfig config_;
  ParamStore params_;
  nn::Embedding embed_;
  std::vector<SlotNet> slots_;
  nn::ConvPool request_cnn_;
  nn::Linear request_out_;
};

struct TrackerDialogue {
  std::string dialogue_id;
  std::vector<TrackerTurn> turns;
  std::vector<TrackerLabels> labels;
};

TrackerDialogue tracker_dialogue(const DialogueRecord& record, const Vocabulary& vocab);

// Runs the tracker along a dialogue from the initial belief; element t is b_t.
std::vector<BeliefState> track_dialogue(const BeliefTracker& tracker, const TrackerDialogue& dialogue);

struct TrackerTrainConfig {
  int epochs = 15;
  double learning_rate = 1e-3;
  int patience = 3;
  std::uint64_t seed = 1;
};

struct TrackerTrainReport {
  double initial_valid_loss = 0.0;
  std::vector<double> train_loss;  // mean per turn
  std::vector<double> valid_loss;
  int best_epoch = -1;  // -1 when no epoch ran
};

// Throws TrackerError listing every dialogue whose turns lack slot annotations.
void check_annotations(const std::vector<DialogueRecord>& records, const Ontology& ontology);

// Trains in place and restores the parameters of the epoch with the lowest validation loss.
TrackerTrainReport pretrain_trackers(BeliefTracker& tracker, const std::vector<DialogueRecord>& train,
                                     const std::vector<DialogueRecord>& valid, const Vocabulary& vocab,
                                     const TrackerTrainConfig& config);

double tracker_loss(const BeliefTracker& tracker, const std::vector<TrackerDialogue>& dialogues);

struct TrackerAccuracy {
  std::map<std::string, double> per_slot;
  double requestable = 0.0;
  std::size_t turns = 0;
};

TrackerAccuracy tracker_accuracy(const BeliefTracker& tracker, const std::vector<DialogueRecord>& records,
                                 const Vocabulary& vocab);

}  // namespace lidm
