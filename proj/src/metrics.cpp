#include "lidm/metrics.hpp"

#include "lidm/ontology.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace lidm {

namespace {

constexpr int kMaxOrder = 4;

using NgramCounts = std::map<std::vector<std::string>, int>;

NgramCounts ngrams(const Tokens& toks, int n) {
  NgramCounts out;
  if (static_cast<int>(toks.size()) < n) return out;
  for (std::size_t i = 0; i + static_cast<std::size_t>(n) <= toks.size(); ++i) {
    ++out[std::vector<std::string>(toks.begin() + static_cast<std::ptrdiff_t>(i),
                                   toks.begin() + static_cast<std::ptrdiff_t>(i) + n)];
  }
  return out;
}

// Clipped matches and candidate n-gram total for one sentence pair.
std::pair<long, long> match_counts(const Tokens& cand, const Tokens& ref, int n) {
  const NgramCounts c = ngrams(cand, n);
  const NgramCounts r = ngrams(ref, n);
  long matched = 0;
  long total = 0;
  for (const auto& [g, k] : c) {
    total += k;
    auto it = r.find(g);
    if (it != r.end()) matched += std::min(k, it->second);
  }
  return {matched, total};
}

double brevity_penalty(double c, double r) {
  if (c <= 0.0) return 0.0;
  return c > r ? 1.0 : std::exp(1.0 - r / c);
}

}  // namespace

double corpus_bleu(const std::vector<Tokens>& candidates, const std::vector<Tokens>& references) {
  if (candidates.size() != references.size()) throw std::invalid_argument("corpus_bleu: corpus sizes differ");
  if (candidates.empty()) throw std::invalid_argument("corpus_bleu: empty corpus");
  long matched[kMaxOrder] = {};
  long total[kMaxOrder] = {};
  double c = 0.0;
  double r = 0.0;
  for (std::size_t i = 0; i < candidates.size(); ++i) {
    c += static_cast<double>(candidates[i].size());
    r += static_cast<double>(references[i].size());
    for (int n = 1; n <= kMaxOrder; ++n) {
      const auto [m, t] = match_counts(candidates[i], references[i], n);
      matched[n - 1] += m;
      total[n - 1] += t;
    }
  }
  if (c == 0.0) return 0.0;
  double log_sum = 0.0;
  int orders = 0;
  for (int n = 0; n < kMaxOrder; ++n) {
    if (total[n] == 0) continue;
    if (matched[n] == 0) return 0.0;
    log_sum += std::log(static_cast<double>(matched[n]) / static_cast<double>(total[n]));
    ++orders;
  }
  return brevity_penalty(c, r) * std::exp(log_sum / orders);
}

double sentence_bleu(const Tokens& candidate, const Tokens& reference) {
  if (candidate.empty()) return 0.0;
  double log_sum = 0.0;
  for (int n = 1; n <= kMaxOrder; ++n) {
    const auto [m, t] = match_counts(candidate, reference, n);
    if (n == 1) {
      if (m == 0) return 0.0;
      log_sum += std::log(static_cast<double>(m) / static_cast<double>(t));
    } else {
      log_sum += std::log((static_cast<double>(m) + 1.0) / (static_cast<double>(t) + 1.0));
    }
  }
  return brevity_penalty(static_cast<double>(candidate.size()), static_cast<double>(reference.size())) *
         std::exp(log_sum / kMaxOrder);
}

bool satisfies(const KbRecord& entity, const std::map<std::string, std::string>& constraints) {
  for (const auto& [slot, value] : constraints) {
    if (value == kDontcare) continue;
    const auto v = entity.field(slot);
    if (!v || *v != value) return false;
  }
  return true;
}

DialogueOutcome dialogue_success(const std::map<std::string, std::string>& goal_constraints,
                                 const std::set<std::string>& goal_requests, const std::vector<Tokens>& responses,
                                 const std::vector<SearchResult>& turn_results, const KnowledgeBase& kb) {
  if (responses.size() != turn_results.size()) {
    throw std::invalid_argument("dialogue_success: one search result per response is required");
  }
  const std::string name_ph = placeholder("name");
  DialogueOutcome out;
  std::map<std::size_t, std::set<std::string>> supplied;
  std::optional<std::size_t> current;
  for (std::size_t t = 0; t < responses.size(); ++t) {
    const Tokens& resp = responses[t];
    if (std::find(resp.begin(), resp.end(), name_ph) != resp.end() && !turn_results[t].indices.empty()) {
      current = turn_results[t].indices.front();
      supplied[*current];
    }
    if (current) {
      for (const auto& tok : resp) {
        if (auto slot = placeholder_slot(tok); slot && *slot != "name") supplied[*current].insert(*slot);
      }
    }
    out.offered.push_back(current);
  }
  for (const auto& [idx, slots] : supplied) {
    if (!satisfies(kb.at(idx), goal_constraints)) continue;
    std::set<std::string> answered;
    for (const auto& req : goal_requests) {
      if (slots.count(req)) answered.insert(req);
    }
    const bool ok = answered.size() == goal_requests.size();
    // Prefer a successful entity; otherwise report the one answering the most requests.
    if (!out.entity || (ok && !out.success) || (!out.success && answered.size() > out.answered.size())) {
      out.entity = idx;
      out.answered = std::move(answered);
      out.success = ok;
    }
  }
  return out;
}

}  // namespace lidm
