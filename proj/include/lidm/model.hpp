#pragma once

#include "lidm/autodiff.hpp"
#include "lidm/kb.hpp"
#include "lidm/lm.hpp"
#include "lidm/nn.hpp"
#include "lidm/params.hpp"

#include <nlohmann/json_fwd.hpp>

#include <cstdint>
#include <span>
#include <vector>

namespace lidm {

struct LidmConfig {
  int vocab_size = 0;
  int bos = 0;
  int eos = 1;
  int belief_dim = 0;
  int match_dim = kMatchBins;
  int latent_size = 50;
  int embed_dim = 50;
  int hidden = 50;  // encoder (per direction) and decoder
  int control_half = 50;
  int policy_hidden = 50;
  int inference_hidden = 100;
  int baseline_hidden = 50;
  int max_len = 40;

  int utterance_dim() const { return 2 * hidden; }
  int state_dim() const { return utterance_dim() + belief_dim + match_dim; }
  int control_dim() const { return 2 * control_half; }

  nlohmann::json to_json() const;
  static LidmConfig from_json(const nlohmann::json& j);
};

struct IntentionDistribution {
  enum class Source { policy, inference };

  Vector probs;
  Source source = Source::policy;

  int size() const { return static_cast<int>(probs.size()); }
  int argmax() const;
  // Indices of the k most probable intentions, descending (ties by index).
  std::vector<int> top_k(int k) const;
  bool valid(double tolerance = 1e-6) const;
};

// Draws an index with probability probs[i] by inverting the CDF of one 53-bit uniform.
int sample_intention(const IntentionDistribution& dist, Rng& rng);
int sample_index(const Vector& probs, Rng& rng);

class LidmModel;

// Conditional decoder for a fixed control vector, usable with the generic search routines.
class DecoderLm {
 public:
  using State = nn::LstmValues;

  DecoderLm(const LidmModel& model, const Vector& control);

  State initial_state() const;
  std::pair<State, Vector> step(const State& state, int token) const;
  int vocab_size() const;
  int bos() const;
  int eos() const;

 private:
  const LidmModel* model_;
  Vector control_input_;  // decoder input projection of d_t, constant across steps
};

class LidmModel {
 public:
  LidmModel(const LidmConfig& config, std::uint64_t seed);
  // Takes ownership of parameters loaded from a checkpoint.
  LidmModel(const LidmConfig& config, ParamStore params);
  LidmModel(const LidmModel& other);
  LidmModel& operator=(const LidmModel& other);

  const LidmConfig& config() const { return config_; }
  ParamStore& params() { return params_; }
  const ParamStore& params() const { return params_; }

  // Tape-level building blocks used by training.
  ad::Var encode_utterance(ad::Tape& tape, std::span<const int> tokens) const;
  ad::Var dialogue_state(ad::Tape& tape, ad::Var utterance, const Vector& belief, const Vector& match) const;
  ad::Var policy_logits(ad::Tape& tape, ad::Var state) const;
  ad::Var control_vector(ad::Tape& tape, int intention, ad::Var state) const;
  ad::Var response_log_prob(ad::Tape& tape, ad::Var control, std::span<const int> response) const;
  ad::Var posterior_logits(ad::Tape& tape, std::span<const int> user, std::span<const int> response,
                           const Vector& belief, const Vector& match) const;
  // b + b(s); the state enters as a constant.
  ad::Var baseline(ad::Tape& tape, const Vector& state) const;

  // Forward-only conveniences.
  Vector encode_utterance(std::span<const int> tokens) const;
  Vector dialogue_state(std::span<const int> user, const Vector& belief, const Vector& match) const;
  IntentionDistribution policy_distribution(const Vector& state) const;
  IntentionDistribution posterior_distribution(std::span<const int> user, std::span<const int> response,
                                               const Vector& belief, const Vector& match) const;
  Vector control_vector(int intention, const Vector& state) const;
  // response must end with end-of-sentence.
  double response_log_prob(std::span<const int> response, int intention, const Vector& state) const;
  // log p(m|s) = log sum_z p(m|z,s) pi(z|s), by enumeration.
  double log_marginal_likelihood(std::span<const int> response, const Vector& state) const;
  double marginal_likelihood(std::span<const int> response, const Vector& state) const;
  double baseline(const Vector& state) const;

  DecoderLm decoder(int intention, const Vector& state) const;
  DecodeResult beam_decode(int intention, const Vector& state, int beam_width, int max_len) const;
  DecodeResult greedy_decode(int intention, const Vector& state, int max_len) const;

 private:
  friend class DecoderLm;
  void create(std::uint64_t seed);
  void bind();
  void check_intention(int z) const;

  LidmConfig config_;
  ParamStore params_;

  // generative (Theta2)
  nn::Embedding enc_embed_;
  nn::BiLstm encoder_;
  nn::Linear policy_hidden_;
  nn::Linear policy_out_;
  // decoder (Theta1)
  const Param* w3_ = nullptr;
  const Param* b3_ = nullptr;
  const Param* w4_ = nullptr;
  const Param* w5_ = nullptr;
  nn::Embedding dec_embed_;
  nn::LstmCell dec_cell_;
  const Param* dec_control_ = nullptr;
  nn::Linear dec_out_;
  // inference (Phi)
  nn::Embedding inf_embed_;
  nn::BiLstm inf_user_;
  nn::BiLstm inf_response_;
  nn::Linear inf_hidden_;
  const Param* w6_ = nullptr;
  // baselines
  const Param* baseline_const_ = nullptr;
  nn::Linear baseline_hidden_;
  nn::Linear baseline_out_;
};

}  // namespace lidm
