#pragma once

#include "lidm/belief.hpp"
#include "lidm/corpus.hpp"
#include "lidm/kb.hpp"
#include "lidm/text.hpp"

#include <map>
#include <set>
#include <string>
#include <vector>

namespace lidm {

// Everything the LIDM needs about one turn once the frozen tracker and the KB have run.
struct TurnContext {
  TokenIds user;
  TokenIds response;  // ends with end-of-sentence
  Vector belief;      // b_t concatenation
  Vector match;       // six-bin x_t
  Query query;
  SearchResult search;
  int label = -1;  // cluster label, -1 when unlabeled
};

struct DialogueContext {
  std::string dialogue_id;
  std::map<std::string, std::string> goal_constraints;
  std::set<std::string> goal_requests;
  std::vector<TurnContext> turns;
  std::vector<Tokens> reference_responses;  // delexicalised, without end-of-sentence
};

DialogueContext build_context(const DialogueRecord& record, const BeliefTracker& tracker, const KnowledgeBase& kb,
                              const Vocabulary& vocab);
std::vector<DialogueContext> build_contexts(const std::vector<DialogueRecord>& records, const BeliefTracker& tracker,
                                            const KnowledgeBase& kb, const Vocabulary& vocab);

std::size_t count_turns(const std::vector<DialogueContext>& dialogues);

// Query from annotated slot labels, dropping "none" and "dontcare".
Query annotated_query(const std::map<std::string, std::string>& slot_labels);

// Contexts for scoring human responses: KB results come from the annotated state, no model inputs are filled.
DialogueContext reference_context(const DialogueRecord& record, const KnowledgeBase& kb);
std::vector<DialogueContext> reference_contexts(const std::vector<DialogueRecord>& records, const KnowledgeBase& kb);

}  // namespace lidm
