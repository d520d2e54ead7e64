#include "lidm/rl.hpp"

#include "lidm/nvil.hpp"

#include <nlohmann/json.hpp>

#include <cmath>
#include <numeric>

namespace lidm {

double combine_reward(double sbleu, int delta, double eta) { return eta * sbleu + delta; }

TurnReward turn_reward(const Tokens& generated, const DialogueContext& dialogue, std::size_t t,
                       const KnowledgeBase& kb, double eta) {
  if (t >= dialogue.turns.size()) throw std::out_of_range("turn_reward: turn index out of range");
  std::vector<SearchResult> results;
  for (const auto& turn : dialogue.turns) results.push_back(turn.search);
  const bool before =
      dialogue_success(dialogue.goal_constraints, dialogue.goal_requests, dialogue.reference_responses, results, kb)
          .success;
  std::vector<Tokens> substituted = dialogue.reference_responses;
  substituted[t] = generated;
  const bool after =
      dialogue_success(dialogue.goal_constraints, dialogue.goal_requests, substituted, results, kb).success;
  TurnReward r;
  r.sbleu = sentence_bleu(generated, dialogue.reference_responses[t]);
  r.delta = static_cast<int>(after) - static_cast<int>(before);
  r.reward = combine_reward(r.sbleu, r.delta, eta);
  return r;
}

double accumulate_policy_gradient(LidmModel& model, const TurnContext& turn, int z, double reward) {
  ad::Tape tape(policy_subset());
  ad::Var s = model.dialogue_state(tape, model.encode_utterance(tape, turn.user), turn.belief, turn.match);
  ad::Var logpi = ad::pick(ad::log_softmax(model.policy_logits(tape, s)), z);
  tape.backward(ad::scale(logpi, -reward));
  return logpi.scalar();
}

nlohmann::json RlConfig::to_json() const {
  return {{"epochs", epochs}, {"learning_rate", learning_rate}, {"eta", eta},
          {"greedy", greedy}, {"max_len", max_len},             {"seed", seed}};
}

RlConfig RlConfig::from_json(const nlohmann::json& j) {
  RlConfig c;
  c.epochs = j.value("epochs", c.epochs);
  c.learning_rate = j.value("learning_rate", c.learning_rate);
  c.eta = j.value("eta", c.eta);
  c.greedy = j.value("greedy", c.greedy);
  c.max_len = j.value("max_len", c.max_len);
  c.seed = j.value("seed", c.seed);
  return c;
}

RlTrainer::RlTrainer(LidmModel& model, const KnowledgeBase& kb, const Vocabulary& vocab, RlConfig config)
    : model_(&model), kb_(&kb), vocab_(&vocab), config_(config), rng_(config.seed), adam_(config.learning_rate) {}

Tokens RlTrainer::generate(int z, const Vector& state) {
  if (config_.greedy) return vocab_->decode(model_->greedy_decode(z, state, config_.max_len).tokens);
  const DecoderLm lm = model_->decoder(z, state);
  auto st = lm.initial_state();
  int prev = lm.bos();
  TokenIds out;
  for (int i = 0; i < config_.max_len; ++i) {
    auto [next, logp] = lm.step(st, prev);
    const int w = sample_index(logp.array().exp().matrix(), rng_);
    if (w == lm.eos()) break;
    out.push_back(w);
    st = std::move(next);
    prev = w;
  }
  return vocab_->decode(out);
}

TurnReward RlTrainer::train_turn(const DialogueContext& dialogue, std::size_t t) {
  const TurnContext& turn = dialogue.turns.at(t);
  const Vector s = model_->dialogue_state(turn.user, turn.belief, turn.match);
  const int latent = model_->config().latent_size;
  int z = 0;
  if (turn.label >= 0 && turn.label < latent) {
    z = turn.label;
  } else {
    z = sample_intention(model_->policy_distribution(s), rng_);
  }
  const TurnReward r = turn_reward(generate(z, s), dialogue, t, *kb_, config_.eta);
  accumulate_policy_gradient(*model_, turn, z, r.reward);
  apply_step(*model_, policy_subset(), adam_);
  return r;
}

RlEpochStats RlTrainer::train_epoch(const std::vector<DialogueContext>& train,
                                    const std::vector<DialogueContext>& valid, int epoch,
                                    const DecodeOptions& eval_options) {
  RlEpochStats st;
  st.epoch = epoch;
  std::vector<std::size_t> order(train.size());
  std::iota(order.begin(), order.end(), 0);
  std::shuffle(order.begin(), order.end(), rng_);
  double total = 0.0;
  std::size_t n = 0;
  for (std::size_t i : order) {
    for (std::size_t t = 0; t < train[i].turns.size(); ++t) {
      try {
        total += train_turn(train[i], t).reward;
        ++n;
      } catch (const std::exception&) {
        ++st.skipped_turns;
      }
    }
  }
  st.mean_reward = n ? total / static_cast<double>(n) : 0.0;
  st.success_train = evaluate_model(*model_, train, *kb_, *vocab_, eval_options, "train").success_rate;
  st.success_valid = evaluate_model(*model_, valid, *kb_, *vocab_, eval_options, "valid").success_rate;
  return st;
}

std::vector<RlEpochStats> RlTrainer::fit(const std::vector<DialogueContext>& train,
                                         const std::vector<DialogueContext>& valid, const DecodeOptions& eval_options,
                                         const std::function<void(const RlEpochStats&)>& on_epoch) {
  std::vector<RlEpochStats> log;
  for (int e = 1; e <= config_.epochs; ++e) {
    log.push_back(train_epoch(train, valid, e, eval_options));
    if (on_epoch) on_epoch(log.back());
  }
  return log;
}

void write_rl_csv_header(std::ostream& out) { out << "epoch,mean_reward,success_train,success_valid\n"; }

void write_rl_csv_row(std::ostream& out, const RlEpochStats& s) {
  const auto old = out.precision(12);
  out << s.epoch << ',' << s.mean_reward << ',' << s.success_train << ',' << s.success_valid << '\n';
  out.precision(old);
}

}  // namespace lidm
