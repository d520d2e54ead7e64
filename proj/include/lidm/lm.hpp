#pragma once

#include "lidm/params.hpp"
#include "lidm/text.hpp"

#include <algorithm>
#include <cmath>
#include <concepts>
#include <span>
#include <stdexcept>
#include <utility>
#include <vector>

namespace lidm {

// A left-to-right language model exposing one step at a time:
// step(state, previous_token) returns the next state and log-probabilities over the vocabulary.
template <class M>
concept StepLanguageModel = requires(const M& m, const typename M::State& s, int token) {
  { m.initial_state() } -> std::convertible_to<typename M::State>;
  { m.step(s, token) } -> std::convertible_to<std::pair<typename M::State, Vector>>;
  { m.vocab_size() } -> std::convertible_to<int>;
  { m.bos() } -> std::convertible_to<int>;
  { m.eos() } -> std::convertible_to<int>;
};

// Sum of log p(w_{j+1} | w_<=j); the sequence must end with end-of-sentence.
template <StepLanguageModel M>
double sequence_log_prob(const M& lm, std::span<const int> tokens) {
  if (tokens.empty() || tokens.back() != lm.eos()) {
    throw std::invalid_argument("sequence_log_prob: sequence must end with end-of-sentence");
  }
  auto state = lm.initial_state();
  int prev = lm.bos();
  double total = 0.0;
  for (int tok : tokens) {
    if (tok < 0 || tok >= lm.vocab_size()) throw std::out_of_range("sequence_log_prob: token id out of range");
    auto [next, logp] = lm.step(state, prev);
    total += logp(tok);
    state = std::move(next);
    prev = tok;
  }
  return total;
}

struct DecodeResult {
  TokenIds tokens;  // without end-of-sentence
  double log_prob = 0.0;
  double avg_log_prob = 0.0;
  // False when no hypothesis emitted end-of-sentence within max_len.
  bool terminated = true;
};

template <StepLanguageModel M>
DecodeResult greedy_decode(const M& lm, int max_len) {
  DecodeResult out;
  auto state = lm.initial_state();
  int prev = lm.bos();
  int steps = 0;
  out.terminated = false;
  while (steps < max_len) {
    auto [next, logp] = lm.step(state, prev);
    Eigen::Index best = 0;
    logp.maxCoeff(&best);
    out.log_prob += logp(best);
    ++steps;
    if (static_cast<int>(best) == lm.eos()) {
      out.terminated = true;
      break;
    }
    out.tokens.push_back(static_cast<int>(best));
    state = std::move(next);
    prev = static_cast<int>(best);
  }
  out.avg_log_prob = steps > 0 ? out.log_prob / steps : 0.0;
  return out;
}

// Beam search ranking live hypotheses by cumulative log-probability and returning the
// completed hypothesis with the best average log-probability per emitted token
// (end-of-sentence included in the count).
template <StepLanguageModel M>
DecodeResult beam_decode(const M& lm, long long beam_width, int max_len) {
  if (beam_width < 1) throw std::invalid_argument("beam_decode: beam width must be >= 1");
  using State = typename M::State;
  struct Live {
    State state;
    TokenIds tokens;
    double log_prob;
  };
  struct Candidate {
    std::size_t parent;
    int token;
    double log_prob;
  };
  std::vector<Live> live;
  live.push_back({lm.initial_state(), {}, 0.0});
  std::vector<DecodeResult> finished;

  for (int step = 0; step < max_len && !live.empty(); ++step) {
    std::vector<State> next_states;
    std::vector<Candidate> cands;
    next_states.reserve(live.size());
    for (std::size_t h = 0; h < live.size(); ++h) {
      const int prev = live[h].tokens.empty() ? lm.bos() : live[h].tokens.back();
      auto [ns, logp] = lm.step(live[h].state, prev);
      next_states.push_back(std::move(ns));
      for (Eigen::Index v = 0; v < logp.size(); ++v) {
        cands.push_back({h, static_cast<int>(v), live[h].log_prob + logp(v)});
      }
    }
    const auto keep = static_cast<std::size_t>(std::min<long long>(beam_width, static_cast<long long>(cands.size())));
    auto better = [](const Candidate& a, const Candidate& b) {
      if (a.log_prob != b.log_prob) return a.log_prob > b.log_prob;
      if (a.parent != b.parent) return a.parent < b.parent;
      return a.token < b.token;
    };
    std::partial_sort(cands.begin(), cands.begin() + static_cast<std::ptrdiff_t>(keep), cands.end(), better);
    std::vector<Live> next_live;
    for (std::size_t k = 0; k < keep; ++k) {
      const auto& c = cands[k];
      const Live& parent = live[c.parent];
      if (c.token == lm.eos()) {
        DecodeResult r;
        r.tokens = parent.tokens;
        r.log_prob = c.log_prob;
        r.avg_log_prob = c.log_prob / static_cast<double>(parent.tokens.size() + 1);
        finished.push_back(std::move(r));
      } else {
        TokenIds toks = parent.tokens;
        toks.push_back(c.token);
        next_live.push_back({next_states[c.parent], std::move(toks), c.log_prob});
      }
    }
    live = std::move(next_live);
  }

  auto by_avg = [](const DecodeResult& a, const DecodeResult& b) { return a.avg_log_prob < b.avg_log_prob; };
  if (!finished.empty()) {
    // max_element keeps the first of equal scores, i.e. the one found earliest.
    return *std::max_element(finished.begin(), finished.end(), [&](const auto& a, const auto& b) {
      return by_avg(a, b);
    });
  }
  DecodeResult best;
  best.terminated = false;
  bool have = false;
  for (const auto& l : live) {
    const double avg = l.tokens.empty() ? 0.0 : l.log_prob / static_cast<double>(l.tokens.size());
    if (!have || avg > best.avg_log_prob) {
      best.tokens = l.tokens;
      best.log_prob = l.log_prob;
      best.avg_log_prob = avg;
      have = true;
    }
  }
  return best;
}

}  // namespace lidm
