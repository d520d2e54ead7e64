#pragma once

#include "lidm/kb.hpp"
#include "lidm/text.hpp"

#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

namespace lidm {

// Corpus BLEU-4: clipped n-gram counts pooled over the corpus, uniform weights and the
// brevity penalty exp(1 - r/c). Orders for which the candidates contain no n-gram at all
// are left out and the remaining weights renormalised. Throws on an empty corpus.
double corpus_bleu(const std::vector<Tokens>& candidates, const std::vector<Tokens>& references);

// Sentence BLEU-4 with add-one smoothing of the 2..4-gram precisions (BLEU+1).
double sentence_bleu(const Tokens& candidate, const Tokens& reference);

struct DialogueOutcome {
  bool success = false;
  std::optional<std::size_t> entity;  // KB index of the entity that satisfied the goal
  std::set<std::string> answered;     // goal requests supplied for that entity
  std::vector<std::optional<std::size_t>> offered;  // entity current after each turn
};

// A response mentioning [v.name] offers the first KB match of the turn's query; the offer stays
// current until another one is made. Success requires an offered entity meeting every goal
// constraint ("dontcare" always holds) whose requested slots were all supplied, as placeholders,
// while it was current.
DialogueOutcome dialogue_success(const std::map<std::string, std::string>& goal_constraints,
                                 const std::set<std::string>& goal_requests, const std::vector<Tokens>& responses,
                                 const std::vector<SearchResult>& turn_results, const KnowledgeBase& kb);

bool satisfies(const KbRecord& entity, const std::map<std::string, std::string>& constraints);

}  // namespace lidm
