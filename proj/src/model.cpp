#include "lidm/model.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

namespace lidm {

nlohmann::json LidmConfig::to_json() const {
  return {{"vocab_size", vocab_size},         {"bos", bos},
          {"eos", eos},                       {"belief_dim", belief_dim},
          {"match_dim", match_dim},           {"latent_size", latent_size},
          {"embed_dim", embed_dim},           {"hidden", hidden},
          {"control_half", control_half},     {"policy_hidden", policy_hidden},
          {"inference_hidden", inference_hidden}, {"baseline_hidden", baseline_hidden},
          {"max_len", max_len}};
}

LidmConfig LidmConfig::from_json(const nlohmann::json& j) {
  LidmConfig c;
  auto get = [&](const char* key, int& out) {
    if (j.contains(key)) out = j.at(key).get<int>();
  };
  get("vocab_size", c.vocab_size);
  get("bos", c.bos);
  get("eos", c.eos);
  get("belief_dim", c.belief_dim);
  get("match_dim", c.match_dim);
  get("latent_size", c.latent_size);
  get("embed_dim", c.embed_dim);
  get("hidden", c.hidden);
  get("control_half", c.control_half);
  get("policy_hidden", c.policy_hidden);
  get("inference_hidden", c.inference_hidden);
  get("baseline_hidden", c.baseline_hidden);
  get("max_len", c.max_len);
  return c;
}

int IntentionDistribution::argmax() const {
  if (probs.size() == 0) throw std::logic_error("argmax of an empty distribution");
  Eigen::Index best = 0;
  probs.maxCoeff(&best);
  return static_cast<int>(best);
}

std::vector<int> IntentionDistribution::top_k(int k) const {
  std::vector<int> idx(static_cast<std::size_t>(size()));
  std::iota(idx.begin(), idx.end(), 0);
  std::stable_sort(idx.begin(), idx.end(), [&](int a, int b) { return probs(a) > probs(b); });
  idx.resize(static_cast<std::size_t>(std::clamp(k, 0, size())));
  return idx;
}

bool IntentionDistribution::valid(double tolerance) const {
  if (probs.size() == 0 || !probs.allFinite()) return false;
  if ((probs.array() < 0.0).any()) return false;
  return std::abs(probs.sum() - 1.0) <= tolerance;
}

int sample_index(const Vector& probs, Rng& rng) {
  if (probs.size() == 0) throw std::invalid_argument("sample_index: empty distribution");
  if (!probs.allFinite() || (probs.array() < 0.0).any()) {
    throw std::invalid_argument("sample_index: probabilities must be finite and non-negative");
  }
  const double u = static_cast<double>(rng() >> 11) * 0x1.0p-53;
  const double total = probs.sum();
  double cum = 0.0;
  int last_positive = -1;
  for (Eigen::Index i = 0; i < probs.size(); ++i) {
    if (probs(i) <= 0.0) continue;
    cum += probs(i) / total;
    last_positive = static_cast<int>(i);
    if (u < cum) return last_positive;
  }
  if (last_positive < 0) throw std::invalid_argument("sample_index: all probabilities are zero");
  return last_positive;
}

int sample_intention(const IntentionDistribution& dist, Rng& rng) { return sample_index(dist.probs, rng); }

namespace {

Vector log_softmax_values(const Vector& x) {
  const double m = x.maxCoeff();
  const double lse = m + std::log((x.array() - m).exp().sum());
  return (x.array() - lse).matrix();
}

Vector softmax_values(const Vector& x) { return log_softmax_values(x).array().exp().matrix(); }

double log_sum_exp(const Vector& x) {
  const double m = x.maxCoeff();
  if (!std::isfinite(m)) return m;
  return m + std::log((x.array() - m).exp().sum());
}

}  // namespace

DecoderLm::DecoderLm(const LidmModel& model, const Vector& control)
    : model_(&model), control_input_(model.dec_control_->value * control) {}

DecoderLm::State DecoderLm::initial_state() const { return model_->dec_cell_.initial_values(); }

std::pair<DecoderLm::State, Vector> DecoderLm::step(const State& state, int token) const {
  const Matrix& table = model_->dec_embed_.table->value;
  if (token < 0 || token >= table.cols()) throw std::out_of_range("decoder: token id out of range");
  State next = model_->dec_cell_.step_values(state, table.col(token), &control_input_);
  Vector logp = log_softmax_values(model_->dec_out_.apply(next.h));
  return {std::move(next), std::move(logp)};
}

int DecoderLm::vocab_size() const { return model_->config_.vocab_size; }
int DecoderLm::bos() const { return model_->config_.bos; }
int DecoderLm::eos() const { return model_->config_.eos; }

LidmModel::LidmModel(const LidmConfig& config, std::uint64_t seed) : config_(config) {
  if (config_.vocab_size <= 0 || config_.latent_size <= 0 || config_.belief_dim < 0) {
    throw std::invalid_argument("LidmModel: vocabulary, latent size and belief size must be positive");
  }
  create(seed);
  bind();
}

LidmModel::LidmModel(const LidmConfig& config, ParamStore params) : config_(config), params_(std::move(params)) {
  bind();
  if (dec_embed_.vocab_size() != config_.vocab_size || policy_out_.out_dim() != config_.latent_size ||
      policy_hidden_.in_dim() != config_.state_dim()) {
    throw std::invalid_argument("LidmModel: parameter shapes disagree with the configuration");
  }
}

LidmModel::LidmModel(const LidmModel& other) : config_(other.config_), params_(other.params_) { bind(); }

LidmModel& LidmModel::operator=(const LidmModel& other) {
  if (this != &other) {
    config_ = other.config_;
    params_ = other.params_;
    bind();
  }
  return *this;
}

void LidmModel::create(std::uint64_t seed) {
  Rng rng(seed);
  const auto& c = config_;
  const Eigen::Index sd = c.state_dim();
  nn::Embedding::create(params_, "encoder/embed", ParamGroup::generative, c.vocab_size, c.embed_dim, rng);
  nn::BiLstm::create(params_, "encoder/lstm", ParamGroup::generative, c.embed_dim, c.hidden, rng);
  nn::Linear::create(params_, "policy/l1", ParamGroup::generative, sd, c.policy_hidden, rng, true);
  nn::Linear::create(params_, "policy/l2", ParamGroup::generative, c.policy_hidden, c.latent_size, rng, true);

  const double sc = std::sqrt(6.0 / static_cast<double>(c.latent_size + c.control_half));
  params_.add("decoder/W3", ParamGroup::decoder, uniform_matrix(c.control_half, c.latent_size, sc, rng));
  params_.add("decoder/b3", ParamGroup::decoder, Matrix::Zero(c.control_half, 1));
  params_.add("decoder/W4", ParamGroup::decoder, uniform_matrix(c.control_half, c.latent_size, sc, rng));
  params_.add("decoder/W5", ParamGroup::decoder,
              uniform_matrix(c.control_half, sd, std::sqrt(6.0 / static_cast<double>(sd + c.control_half)), rng));
  nn::Embedding::create(params_, "decoder/embed", ParamGroup::decoder, c.vocab_size, c.embed_dim, rng);
  nn::LstmCell::create(params_, "decoder/lstm", ParamGroup::decoder, c.embed_dim, c.hidden, rng);
  params_.add("decoder/lstm/Wd", ParamGroup::decoder,
              uniform_matrix(4 * c.hidden, c.control_dim(), 1.0 / std::sqrt(static_cast<double>(c.hidden)), rng));
  nn::Linear::create(params_, "decoder/out", ParamGroup::decoder, c.hidden, c.vocab_size, rng);

  nn::Embedding::create(params_, "inference/embed", ParamGroup::inference, c.vocab_size, c.embed_dim, rng);
  nn::BiLstm::create(params_, "inference/user", ParamGroup::inference, c.embed_dim, c.hidden, rng);
  nn::BiLstm::create(params_, "inference/response", ParamGroup::inference, c.embed_dim, c.hidden, rng);
  const Eigen::Index joint = 4 * c.hidden + c.belief_dim + c.match_dim;
  nn::Linear::create(params_, "inference/mlp", ParamGroup::inference, joint, c.inference_hidden, rng);
  params_.add("inference/W6", ParamGroup::inference,
              uniform_matrix(c.latent_size, c.inference_hidden,
                             std::sqrt(6.0 / static_cast<double>(c.latent_size + c.inference_hidden)), rng));

  params_.add("baseline/b", ParamGroup::baseline, Matrix::Zero(1, 1));
  nn::Linear::create(params_, "baseline/mlp/l1", ParamGroup::baseline, sd, c.baseline_hidden, rng);
  nn::Linear::create(params_, "baseline/mlp/l2", ParamGroup::baseline, c.baseline_hidden, 1, rng);
}

void LidmModel::bind() {
  enc_embed_ = nn::Embedding::bind(params_, "encoder/embed");
  encoder_ = nn::BiLstm::bind(params_, "encoder/lstm");
  policy_hidden_ = nn::Linear::bind(params_, "policy/l1");
  policy_out_ = nn::Linear::bind(params_, "policy/l2");
  w3_ = &params_.at("decoder/W3");
  b3_ = &params_.at("decoder/b3");
  w4_ = &params_.at("decoder/W4");
  w5_ = &params_.at("decoder/W5");
  dec_embed_ = nn::Embedding::bind(params_, "decoder/embed");
  dec_cell_ = nn::LstmCell::bind(params_, "decoder/lstm");
  dec_control_ = &params_.at("decoder/lstm/Wd");
  dec_out_ = nn::Linear::bind(params_, "decoder/out");
  inf_embed_ = nn::Embedding::bind(params_, "inference/embed");
  inf_user_ = nn::BiLstm::bind(params_, "inference/user");
  inf_response_ = nn::BiLstm::bind(params_, "inference/response");
  inf_hidden_ = nn::Linear::bind(params_, "inference/mlp");
  w6_ = &params_.at("inference/W6");
  baseline_const_ = &params_.at("baseline/b");
  baseline_hidden_ = nn::Linear::bind(params_, "baseline/mlp/l1");
  baseline_out_ = nn::Linear::bind(params_, "baseline/mlp/l2");
}

void LidmModel::check_intention(int z) const {
  if (z < 0 || z >= config_.latent_size) {
    throw std::out_of_range("intention " + std::to_string(z) + " outside [0, " +
                            std::to_string(config_.latent_size) + ")");
  }
}

namespace {

// A trailing end-of-sentence is dropped; an empty utterance is read as a single <s>.
std::vector<ad::Var> embed_tokens(ad::Tape& tape, const nn::Embedding& embed, std::span<const int> tokens, int bos,
                                  int eos) {
  if (!tokens.empty() && tokens.back() == eos) tokens = tokens.first(tokens.size() - 1);
  embed.check(tokens);
  std::vector<ad::Var> xs;
  if (tokens.empty()) xs.push_back(embed.lookup(tape, bos));
  for (int t : tokens) xs.push_back(embed.lookup(tape, t));
  return xs;
}

}  // namespace

ad::Var LidmModel::encode_utterance(ad::Tape& tape, std::span<const int> tokens) const {
  const auto xs = embed_tokens(tape, enc_embed_, tokens, config_.bos, config_.eos);
  return encoder_.encode(tape, xs);
}

ad::Var LidmModel::dialogue_state(ad::Tape& tape, ad::Var utterance, const Vector& belief,
                                  const Vector& match) const {
  if (belief.size() != config_.belief_dim || match.size() != config_.match_dim) {
    throw std::invalid_argument("dialogue_state: belief or match vector has the wrong size");
  }
  return ad::concat({utterance, tape.constant(belief), tape.constant(match)});
}

ad::Var LidmModel::policy_logits(ad::Tape& tape, ad::Var state) const {
  return policy_out_(tape, ad::tanh(policy_hidden_(tape, state)));
}

ad::Var LidmModel::control_vector(ad::Tape& tape, int intention, ad::Var state) const {
  check_intention(intention);
  ad::Var w4z = ad::column(tape.param(*w4_), intention);
  ad::Var gate = ad::sigmoid(ad::column(tape.param(*w3_), intention) + tape.param(*b3_));
  ad::Var proj = ad::matmul(tape.param(*w5_), state);
  return ad::concat({w4z, ad::cmul(gate, proj)});
}

ad::Var LidmModel::response_log_prob(ad::Tape& tape, ad::Var control, std::span<const int> response) const {
  if (response.empty() || response.back() != config_.eos) {
    throw std::invalid_argument("response_log_prob: response must end with end-of-sentence");
  }
  dec_embed_.check(response);
  ad::Var extra = ad::matmul(tape.param(*dec_control_), control);
  nn::LstmState st = dec_cell_.initial(tape);
  int prev = config_.bos;
  std::vector<ad::Var> terms;
  terms.reserve(response.size());
  for (int tok : response) {
    st = dec_cell_.step(tape, st, dec_embed_.lookup(tape, prev), extra);
    terms.push_back(ad::pick(ad::log_softmax(dec_out_(tape, st.h)), tok));
    prev = tok;
  }
  return ad::sum(ad::concat(terms));
}

ad::Var LidmModel::posterior_logits(ad::Tape& tape, std::span<const int> user, std::span<const int> response,
                                    const Vector& belief, const Vector& match) const {
  if (belief.size() != config_.belief_dim || match.size() != config_.match_dim) {
    throw std::invalid_argument("posterior_logits: belief or match vector has the wrong size");
  }
  const auto xu = embed_tokens(tape, inf_embed_, user, config_.bos, config_.eos);
  const auto xm = embed_tokens(tape, inf_embed_, response, config_.bos, config_.eos);
  ad::Var joint = ad::concat(
      {inf_user_.encode(tape, xu), inf_response_.encode(tape, xm), tape.constant(belief), tape.constant(match)});
  ad::Var h = ad::tanh(inf_hidden_(tape, joint));
  return ad::matmul(tape.param(*w6_), h);
}

ad::Var LidmModel::baseline(ad::Tape& tape, const Vector& state) const {
  ad::Var s = tape.constant(state);
  ad::Var bs = baseline_out_(tape, ad::tanh(baseline_hidden_(tape, s)));
  return tape.param(*baseline_const_) + bs;
}

Vector LidmModel::encode_utterance(std::span<const int> tokens) const {
  ad::Tape tape;
  return encode_utterance(tape, tokens).value();
}

Vector LidmModel::dialogue_state(std::span<const int> user, const Vector& belief, const Vector& match) const {
  ad::Tape tape;
  return dialogue_state(tape, encode_utterance(tape, user), belief, match).value();
}

IntentionDistribution LidmModel::policy_distribution(const Vector& state) const {
  if (state.size() != config_.state_dim()) throw std::invalid_argument("policy_distribution: wrong state size");
  const Vector h = policy_hidden_.apply(state).array().tanh().matrix();
  return {softmax_values(policy_out_.apply(h)), IntentionDistribution::Source::policy};
}

IntentionDistribution LidmModel::posterior_distribution(std::span<const int> user, std::span<const int> response,
                                                        const Vector& belief, const Vector& match) const {
  ad::Tape tape;
  const Vector logits = posterior_logits(tape, user, response, belief, match).value();
  return {softmax_values(logits), IntentionDistribution::Source::inference};
}

Vector LidmModel::control_vector(int intention, const Vector& state) const {
  check_intention(intention);
  if (state.size() != config_.state_dim()) throw std::invalid_argument("control_vector: wrong state size");
  Vector d(config_.control_dim());
  const Eigen::Index half = config_.control_half;
  d.head(half) = w4_->value.col(intention);
  const Vector pre = w3_->value.col(intention) + b3_->value;
  const Vector gate = (1.0 / (1.0 + (-pre.array()).exp())).matrix();
  d.tail(half) = gate.cwiseProduct(w5_->value * state);
  return d;
}

double LidmModel::response_log_prob(std::span<const int> response, int intention, const Vector& state) const {
  return sequence_log_prob(decoder(intention, state), response);
}

double LidmModel::log_marginal_likelihood(std::span<const int> response, const Vector& state) const {
  const IntentionDistribution pi = policy_distribution(state);
  Vector terms(config_.latent_size);
  for (int z = 0; z < config_.latent_size; ++z) {
    terms(z) = response_log_prob(response, z, state) + std::log(pi.probs(z));
  }
  return log_sum_exp(terms);
}

double LidmModel::marginal_likelihood(std::span<const int> response, const Vector& state) const {
  return std::exp(log_marginal_likelihood(response, state));
}

double LidmModel::baseline(const Vector& state) const {
  const Vector h = baseline_hidden_.apply(state).array().tanh().matrix();
  return baseline_const_->value(0, 0) + baseline_out_.apply(h)(0);
}

DecoderLm LidmModel::decoder(int intention, const Vector& state) const {
  return DecoderLm(*this, control_vector(intention, state));
}

DecodeResult LidmModel::beam_decode(int intention, const Vector& state, int beam_width, int max_len) const {
  return lidm::beam_decode(decoder(intention, state), beam_width, max_len);
}

DecodeResult LidmModel::greedy_decode(int intention, const Vector& state, int max_len) const {
  return lidm::greedy_decode(decoder(intention, state), max_len);
}

}  // namespace lidm
