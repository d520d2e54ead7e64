#include "lidm/eval.hpp"

#include <nlohmann/json.hpp>

#include <cstdio>
#include <sstream>

namespace lidm {

nlohmann::json EvalReport::to_json() const {
  nlohmann::json dl = nlohmann::json::array();
  for (const auto& d : dialogues) {
    dl.push_back({{"dialogue_id", d.dialogue_id},
                  {"success", d.success},
                  {"entity", d.entity ? nlohmann::json(*d.entity) : nlohmann::json(nullptr)},
                  {"answered", d.answered},
                  {"requested", d.requested}});
  }
  return {{"model", model},
          {"success_rate", success_rate},
          {"corpus_bleu", corpus_bleu},
          {"turns", turns},
          {"dialogues", std::move(dl)}};
}

std::string render_table(const std::vector<EvalReport>& reports) {
  std::size_t width = 5;
  for (const auto& r : reports) width = std::max(width, r.model.size());
  std::ostringstream out;
  auto row = [&](const std::string& a, const std::string& b, const std::string& c) {
    out << a << std::string(width - a.size() + 2, ' ') << b << std::string(11 - std::min<std::size_t>(b.size(), 10), ' ')
        << c << '\n';
  };
  row("Model", "Success %", "BLEU");
  out << std::string(width + 2 + 11 + 5, '-') << '\n';
  for (const auto& r : reports) {
    char s[32];
    char b[32];
    std::snprintf(s, sizeof s, "%.1f", 100.0 * r.success_rate);
    std::snprintf(b, sizeof b, "%.3f", r.corpus_bleu);
    row(r.model, s, b);
  }
  return out.str();
}

EvalReport evaluate_responses(const std::vector<DialogueContext>& dialogues, const Responder& responder,
                              const KnowledgeBase& kb, std::string model_name) {
  EvalReport report;
  report.model = std::move(model_name);
  std::vector<Tokens> candidates;
  std::vector<Tokens> references;
  std::size_t successes = 0;
  for (const auto& d : dialogues) {
    std::vector<Tokens> responses;
    std::vector<SearchResult> results;
    for (std::size_t t = 0; t < d.turns.size(); ++t) {
      responses.push_back(responder(d, t));
      results.push_back(d.turns[t].search);
      candidates.push_back(responses.back());
      references.push_back(d.reference_responses[t]);
    }
    const DialogueOutcome o = dialogue_success(d.goal_constraints, d.goal_requests, responses, results, kb);
    DialogueEvaluation e;
    e.dialogue_id = d.dialogue_id;
    e.success = o.success;
    if (o.entity) e.entity = kb.at(*o.entity).name;
    e.answered = o.answered;
    e.requested = d.goal_requests;
    if (o.success) ++successes;
    report.dialogues.push_back(std::move(e));
  }
  report.turns = candidates.size();
  report.success_rate = dialogues.empty() ? 0.0 : static_cast<double>(successes) / static_cast<double>(dialogues.size());
  report.corpus_bleu = candidates.empty() ? 0.0 : corpus_bleu(candidates, references);
  return report;
}

EvalReport evaluate_ground_truth(const std::vector<DialogueContext>& dialogues, const KnowledgeBase& kb) {
  return evaluate_responses(
      dialogues, [](const DialogueContext& d, std::size_t t) { return d.reference_responses[t]; }, kb,
      "Ground Truth");
}

Tokens predict_response(const LidmModel& model, const TurnContext& turn, const Vocabulary& vocab,
                        const DecodeOptions& options) {
  const Vector s = model.dialogue_state(turn.user, turn.belief, turn.match);
  const int z = model.policy_distribution(s).argmax();
  const DecodeResult r = model.beam_decode(z, s, options.beam_width, options.max_len);
  return vocab.decode(r.tokens);
}

EvalReport evaluate_model(const LidmModel& model, const std::vector<DialogueContext>& dialogues,
                          const KnowledgeBase& kb, const Vocabulary& vocab, const DecodeOptions& options,
                          std::string model_name) {
  if (static_cast<std::size_t>(model.config().vocab_size) != vocab.size()) {
    throw VocabularyMismatch("model vocabulary size " + std::to_string(model.config().vocab_size) +
                             " differs from corpus vocabulary size " + std::to_string(vocab.size()));
  }
  return evaluate_responses(
      dialogues,
      [&](const DialogueContext& d, std::size_t t) { return predict_response(model, d.turns[t], vocab, options); },
      kb, std::move(model_name));
}

void check_vocab_hash(std::uint64_t expected, const Vocabulary& vocab) {
  if (vocab.hash() != expected) {
    throw VocabularyMismatch("vocabulary hash mismatch: checkpoint " + std::to_string(expected) + ", corpus " +
                             std::to_string(vocab.hash()));
  }
}

}  // namespace lidm
