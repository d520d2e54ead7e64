#include "lidm/pipeline.hpp"

namespace lidm {

DialogueContext build_context(const DialogueRecord& record, const BeliefTracker& tracker, const KnowledgeBase& kb,
                              const Vocabulary& vocab) {
  DialogueContext d;
  d.dialogue_id = record.dialogue_id;
  d.goal_constraints = record.goal_constraints;
  d.goal_requests = record.goal_requests;
  const auto beliefs = track_dialogue(tracker, tracker_dialogue(record, vocab));
  for (std::size_t t = 0; t < record.turns.size(); ++t) {
    const Turn& turn = record.turns[t];
    TurnContext c;
    c.user = vocab.encode(turn.delex_user);
    c.response = vocab.encode(turn.delex_response);
    c.response.push_back(vocab.eos());
    c.belief = beliefs[t].concat();
    c.query = form_query(beliefs[t], tracker.ontology());
    c.search = kb.search(c.query);
    c.match = match_bins(c.search.count);
    d.turns.push_back(std::move(c));
    d.reference_responses.push_back(turn.delex_response);
  }
  return d;
}

std::vector<DialogueContext> build_contexts(const std::vector<DialogueRecord>& records, const BeliefTracker& tracker,
                                            const KnowledgeBase& kb, const Vocabulary& vocab) {
  std::vector<DialogueContext> out;
  out.reserve(records.size());
  for (const auto& r : records) out.push_back(build_context(r, tracker, kb, vocab));
  return out;
}

std::size_t count_turns(const std::vector<DialogueContext>& dialogues) {
  std::size_t n = 0;
  for (const auto& d : dialogues) n += d.turns.size();
  return n;
}

Query annotated_query(const std::map<std::string, std::string>& slot_labels) {
  Query q;
  for (const auto& [slot, value] : slot_labels) {
    if (value != kNone && value != kDontcare) q[slot] = value;
  }
  return q;
}

DialogueContext reference_context(const DialogueRecord& record, const KnowledgeBase& kb) {
  DialogueContext d;
  d.dialogue_id = record.dialogue_id;
  d.goal_constraints = record.goal_constraints;
  d.goal_requests = record.goal_requests;
  for (const auto& turn : record.turns) {
    TurnContext c;
    c.query = annotated_query(turn.slot_labels);
    c.search = kb.search(c.query);
    c.match = match_bins(c.search.count);
    d.turns.push_back(std::move(c));
    d.reference_responses.push_back(turn.delex_response);
  }
  return d;
}

std::vector<DialogueContext> reference_contexts(const std::vector<DialogueRecord>& records, const KnowledgeBase& kb) {
  std::vector<DialogueContext> out;
  out.reserve(records.size());
  for (const auto& r : records) out.push_back(reference_context(r, kb));
  return out;
}

}  // namespace lidm
