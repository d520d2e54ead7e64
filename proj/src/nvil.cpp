#include "lidm/nvil.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <array>
#include <cctype>
#include <cmath>
#include <map>
#include <numeric>
#include <ostream>

namespace lidm {

double kl_divergence(const Vector& q, const Vector& pi) {
  if (q.size() != pi.size()) throw std::invalid_argument("kl_divergence: size mismatch");
  double kl = 0.0;
  for (Eigen::Index z = 0; z < q.size(); ++z) {
    if (q(z) > 0.0) kl += q(z) * (std::log(q(z)) - std::log(pi(z)));
  }
  return kl;
}

double bound_from_samples(std::span<const double> sample_log_p, const Vector& q, const Vector& pi, double lambda) {
  if (sample_log_p.empty()) throw std::invalid_argument("bound_from_samples: need at least one sample");
  const double mean = std::accumulate(sample_log_p.begin(), sample_log_p.end(), 0.0) /
                      static_cast<double>(sample_log_p.size());
  return mean - lambda * kl_divergence(q, pi);
}

double bound_from_terms(const Vector& log_p, const Vector& q, const Vector& pi, double lambda) {
  double e = 0.0;
  for (Eigen::Index z = 0; z < q.size(); ++z) {
    if (q(z) > 0.0) e += q(z) * log_p(z);
  }
  return e - lambda * kl_divergence(q, pi);
}

double learning_signal(double log_p, double log_q, double log_pi, double lambda) {
  return log_p - lambda * (log_q - log_pi);
}

namespace {

Vector state_of(const LidmModel& model, const TurnContext& turn) {
  return model.dialogue_state(turn.user, turn.belief, turn.match);
}

ad::Var tape_state(ad::Tape& tape, const LidmModel& model, const TurnContext& turn) {
  return model.dialogue_state(tape, model.encode_utterance(tape, turn.user), turn.belief, turn.match);
}

}  // namespace

Vector response_log_probs(const LidmModel& model, const TurnContext& turn, const Vector& state) {
  const int n = model.config().latent_size;
  Vector out(n);
  for (int z = 0; z < n; ++z) out(z) = model.response_log_prob(turn.response, z, state);
  return out;
}

double variational_bound(const LidmModel& model, const TurnContext& turn, double lambda,
                         std::span<const int> samples) {
  const Vector s = state_of(model, turn);
  const Vector pi = model.policy_distribution(s).probs;
  const Vector q = model.posterior_distribution(turn.user, turn.response, turn.belief, turn.match).probs;
  std::vector<double> lp;
  lp.reserve(samples.size());
  for (int z : samples) lp.push_back(model.response_log_prob(turn.response, z, s));
  return bound_from_samples(lp, q, pi, lambda);
}

double exact_bound(const LidmModel& model, const TurnContext& turn, double lambda, const Vector* q) {
  const Vector s = state_of(model, turn);
  const Vector pi = model.policy_distribution(s).probs;
  const Vector qv = q ? *q : model.posterior_distribution(turn.user, turn.response, turn.belief, turn.match).probs;
  return bound_from_terms(response_log_probs(model, turn, s), qv, pi, lambda);
}

Vector exact_posterior(const LidmModel& model, const TurnContext& turn) {
  const Vector s = state_of(model, turn);
  const Vector pi = model.policy_distribution(s).probs;
  const Vector joint = response_log_probs(model, turn, s) + pi.array().log().matrix();
  const double m = joint.maxCoeff();
  Vector w = (joint.array() - m).exp().matrix();
  return w / w.sum();
}

// Each accumulator differentiates -weight * quantity, so a descent step ascends the quantity.

double accumulate_decoder(LidmModel& model, const TurnContext& turn, int z, double weight) {
  ad::Tape tape(in_group(ParamGroup::decoder));
  ad::Var s = ad::detach(tape_state(tape, model, turn));
  ad::Var lp = model.response_log_prob(tape, model.control_vector(tape, z, s), turn.response);
  tape.backward(ad::scale(lp, -weight));
  return lp.scalar();
}

double accumulate_generative(LidmModel& model, const TurnContext& turn, const Vector& q, double lambda,
                             double weight) {
  ad::Tape tape(in_group(ParamGroup::generative));
  ad::Var logpi = ad::log_softmax(model.policy_logits(tape, tape_state(tape, model, turn)));
  ad::Var obj = ad::scale(ad::dot(tape.constant(Matrix(q)), logpi), lambda);
  tape.backward(ad::scale(obj, -weight));
  return obj.scalar();
}

double accumulate_labeled_policy(LidmModel& model, const TurnContext& turn, int z, double weight) {
  ad::Tape tape(in_group(ParamGroup::generative));
  ad::Var logpi = ad::pick(ad::log_softmax(model.policy_logits(tape, tape_state(tape, model, turn))), z);
  tape.backward(ad::scale(logpi, -weight));
  return logpi.scalar();
}

double accumulate_inference(LidmModel& model, const TurnContext& turn, int z, double signal, double weight) {
  ad::Tape tape(in_group(ParamGroup::inference));
  ad::Var logq =
      ad::pick(ad::log_softmax(model.posterior_logits(tape, turn.user, turn.response, turn.belief, turn.match)), z);
  tape.backward(ad::scale(logq, -weight * signal));
  return logq.scalar();
}

double accumulate_baseline(LidmModel& model, const Vector& state, double reward) {
  ad::Tape tape(in_group(ParamGroup::baseline));
  ad::Var loss = ad::square(tape.constant(reward) - model.baseline(tape, state));
  tape.backward(loss);
  return loss.scalar();
}

double baseline_loss(const LidmModel& model, const Vector& state, double reward) {
  const double d = reward - model.baseline(state);
  return d * d;
}

bool apply_step(LidmModel& model, const ParamFilter& group, Adam& adam, double clip) {
  auto params = model.params().select(group);
  if (!grads_finite(params)) {
    for (Param* p : params) p->zero_grad();
    return false;
  }
  if (clip > 0.0) clip_grad_norm(params, clip);
  adam.step(params);
  return true;
}

bool decoder_gradient_step(LidmModel& model, const TurnContext& turn, int z, Adam& adam) {
  accumulate_decoder(model, turn, z, 1.0);
  return apply_step(model, in_group(ParamGroup::decoder), adam);
}

bool generative_kl_step(LidmModel& model, const TurnContext& turn, const Vector& q, double lambda, Adam& adam) {
  accumulate_generative(model, turn, q, lambda, 1.0);
  return apply_step(model, in_group(ParamGroup::generative), adam);
}

bool inference_gradient_step(LidmModel& model, const TurnContext& turn, int z, double signal, Adam& adam) {
  accumulate_inference(model, turn, z, signal, 1.0);
  return apply_step(model, in_group(ParamGroup::inference), adam);
}

bool baseline_step(LidmModel& model, const Vector& state, double reward, Adam& adam) {
  accumulate_baseline(model, state, reward);
  return apply_step(model, in_group(ParamGroup::baseline), adam);
}

namespace {

// English function words (the widely used NLTK list).
constexpr std::array<std::string_view, 179> kStopwords{
    "i",        "me",         "my",        "myself",   "we",        "our",       "ours",       "ourselves",
    "you",      "you're",     "you've",    "you'll",   "you'd",     "your",      "yours",      "yourself",
    "yourselves", "he",       "him",       "his",      "himself",   "she",       "she's",      "her",
    "hers",     "herself",    "it",        "it's",     "its",       "itself",    "they",       "them",
    "their",    "theirs",     "themselves", "what",    "which",     "who",       "whom",       "this",
    "that",     "that'll",    "these",     "those",    "am",        "is",        "are",        "was",
    "were",     "be",         "been",      "being",    "have",      "has",       "had",        "having",
    "do",       "does",       "did",       "doing",    "a",         "an",        "the",        "and",
    "but",      "if",         "or",        "because",  "as",        "until",     "while",      "of",
    "at",       "by",         "for",       "with",     "about",     "against",   "between",    "into",
    "through",  "during",     "before",    "after",    "above",     "below",     "to",         "from",
    "up",       "down",       "in",        "out",      "on",        "off",       "over",       "under",
    "again",    "further",    "then",      "once",     "here",      "there",     "when",       "where",
    "why",      "how",        "all",       "any",      "both",      "each",      "few",        "more",
    "most",     "other",      "some",      "such",     "no",        "nor",       "not",        "only",
    "own",      "same",       "so",        "than",     "too",       "very",      "s",          "t",
    "can",      "will",       "just",      "don",      "don't",     "should",    "should've",  "now",
    "d",        "ll",         "m",         "o",        "re",        "ve",        "y",          "ain",
    "aren",     "aren't",     "couldn",    "couldn't", "didn",      "didn't",    "doesn",      "doesn't",
    "hadn",     "hadn't",     "hasn",      "hasn't",   "haven",     "haven't",   "isn",        "isn't",
    "ma",       "mightn",     "mightn't",  "mustn",    "mustn't",   "needn",     "needn't",    "shan",
    "shan't",   "shouldn",    "shouldn't", "wasn",     "wasn't",    "weren",     "weren't",    "won",
    "won't",    "wouldn",     "wouldn't"};

bool is_punctuation(std::string_view tok) {
  return !tok.empty() &&
         std::all_of(tok.begin(), tok.end(), [](unsigned char c) { return std::ispunct(c) != 0; });
}

}  // namespace

std::span<const std::string_view> english_stopwords() { return kStopwords; }

std::set<std::string> content_words(const Tokens& delex_response) {
  std::set<std::string> out;
  for (const auto& tok : delex_response) {
    if (placeholder_slot(tok)) {
      out.insert(tok);
      continue;
    }
    if (is_punctuation(tok)) continue;
    if (std::find(kStopwords.begin(), kStopwords.end(), tok) != kStopwords.end()) continue;
    out.insert(tok);
  }
  return out;
}

LabeledSet cluster_responses(const std::vector<DialogueRecord>& records, int latent_size) {
  LabeledSet out;
  std::map<std::set<std::string>, std::size_t> counts;
  std::vector<std::vector<std::set<std::string>>> sets;
  for (const auto& r : records) {
    auto& row = sets.emplace_back();
    for (const auto& t : r.turns) {
      row.push_back(content_words(t.delex_response));
      if (!row.back().empty()) ++counts[row.back()];
      ++out.total;
    }
  }
  for (const auto& [content, size] : counts) out.clusters.push_back({content, size});
  std::stable_sort(out.clusters.begin(), out.clusters.end(),
                   [](const ResponseCluster& a, const ResponseCluster& b) { return a.size > b.size; });
  std::map<std::set<std::string>, int> rank;
  for (std::size_t i = 0; i < out.clusters.size() && static_cast<int>(i) < latent_size; ++i) {
    rank[out.clusters[i].content] = static_cast<int>(i);
  }
  for (const auto& row : sets) {
    auto& labels = out.labels.emplace_back();
    for (const auto& content : row) {
      auto it = content.empty() ? rank.end() : rank.find(content);
      labels.push_back(it == rank.end() ? -1 : it->second);
      if (labels.back() >= 0) ++out.labeled;
    }
  }
  return out;
}

void apply_labels(std::vector<DialogueContext>& dialogues, const LabeledSet& labels) {
  if (labels.labels.size() != dialogues.size()) throw std::invalid_argument("apply_labels: dialogue count mismatch");
  for (std::size_t d = 0; d < dialogues.size(); ++d) {
    if (labels.labels[d].size() != dialogues[d].turns.size()) {
      throw std::invalid_argument("apply_labels: turn count mismatch in dialogue " + dialogues[d].dialogue_id);
    }
    for (std::size_t t = 0; t < dialogues[d].turns.size(); ++t) dialogues[d].turns[t].label = labels.labels[d][t];
  }
}

nlohmann::json NvilConfig::to_json() const {
  return {{"lambda", lambda},
          {"alpha", alpha},
          {"samples", samples},
          {"learning_rate", learning_rate},
          {"baseline_learning_rate", baseline_learning_rate},
          {"max_epochs", max_epochs},
          {"patience", patience},
          {"clip", clip},
          {"seed", seed}};
}

NvilConfig NvilConfig::from_json(const nlohmann::json& j) {
  NvilConfig c;
  c.lambda = j.value("lambda", c.lambda);
  c.alpha = j.value("alpha", c.alpha);
  c.samples = j.value("samples", c.samples);
  c.learning_rate = j.value("learning_rate", c.learning_rate);
  c.baseline_learning_rate = j.value("baseline_learning_rate", c.baseline_learning_rate);
  c.max_epochs = j.value("max_epochs", c.max_epochs);
  c.patience = j.value("patience", c.patience);
  c.clip = j.value("clip", c.clip);
  c.seed = j.value("seed", c.seed);
  return c;
}

namespace {

bool is_labeled(const TurnContext& turn, const LidmModel& model) {
  return turn.label >= 0 && turn.label < model.config().latent_size;
}

}  // namespace

JointObjective joint_objective(const LidmModel& model, const std::vector<DialogueContext>& dialogues,
                               const NvilConfig& config) {
  JointObjective j;
  for (const auto& d : dialogues) {
    for (const auto& turn : d.turns) {
      if (is_labeled(turn, model)) {
        const Vector s = state_of(model, turn);
        const Vector pi = model.policy_distribution(s).probs;
        const Vector q = model.posterior_distribution(turn.user, turn.response, turn.belief, turn.match).probs;
        j.l2 += model.response_log_prob(turn.response, turn.label, s) + std::log(pi(turn.label)) +
                std::log(q(turn.label));
      } else {
        j.l1 += exact_bound(model, turn, config.lambda);
      }
    }
  }
  j.total = config.alpha * j.l1 + j.l2;
  return j;
}

double mean_exact_bound(const LidmModel& model, const std::vector<DialogueContext>& dialogues, double lambda) {
  double total = 0.0;
  std::size_t n = 0;
  for (const auto& d : dialogues) {
    for (const auto& turn : d.turns) {
      total += exact_bound(model, turn, lambda);
      ++n;
    }
  }
  return n ? total / static_cast<double>(n) : 0.0;
}

NvilTrainer::NvilTrainer(LidmModel& model, NvilConfig config)
    : model_(&model), config_(config), rng_(config.seed) {
  if (config_.samples < 1) throw std::invalid_argument("NvilTrainer: need at least one sample");
  opt_.generative.set_learning_rate(config_.learning_rate);
  opt_.inference.set_learning_rate(config_.learning_rate);
  opt_.baseline.set_learning_rate(config_.baseline_learning_rate);
}

TurnStats NvilTrainer::train_turn(const TurnContext& turn) {
  LidmModel& m = *model_;
  const double lambda = config_.lambda;
  const Vector s = state_of(m, turn);
  const Vector pi = m.policy_distribution(s).probs;
  const Vector q = m.posterior_distribution(turn.user, turn.response, turn.belief, turn.match).probs;
  TurnStats st;
  st.kl = kl_divergence(q, pi);
  auto step = [&](ParamGroup g, Adam& adam) {
    if (!apply_step(m, in_group(g), adam, config_.clip)) ++st.skipped;
  };

  if (is_labeled(turn, m)) {
    // Supervised path: the cluster label replaces sampling.
    const int z = turn.label;
    st.labeled = true;
    const double lp = accumulate_decoder(m, turn, z, 1.0);
    accumulate_labeled_policy(m, turn, z, 1.0);
    step(ParamGroup::decoder, opt_.generative);
    step(ParamGroup::generative, opt_.generative);
    accumulate_inference(m, turn, z, 1.0, 1.0);
    step(ParamGroup::inference, opt_.inference);
    st.joint = lp + std::log(pi(z)) + std::log(q(z));
    return st;
  }

  const int n = config_.samples;
  const double alpha = config_.alpha;
  std::vector<int> zs;
  std::vector<double> lps;
  for (int i = 0; i < n; ++i) {
    zs.push_back(sample_index(q, rng_));
    lps.push_back(accumulate_decoder(m, turn, zs.back(), alpha / n));
  }
  accumulate_generative(m, turn, q, lambda, alpha);
  step(ParamGroup::decoder, opt_.generative);
  step(ParamGroup::generative, opt_.generative);

  // Learning signals use the generative model as it was when z was drawn.
  const double base = m.baseline(s);
  for (int i = 0; i < n; ++i) {
    const int z = zs[static_cast<std::size_t>(i)];
    const double r = learning_signal(lps[static_cast<std::size_t>(i)], std::log(q(z)), std::log(pi(z)), lambda);
    accumulate_inference(m, turn, z, r - base, alpha / n);
    accumulate_baseline(m, s, r);
  }
  step(ParamGroup::inference, opt_.inference);
  step(ParamGroup::baseline, opt_.baseline);
  st.bound = bound_from_samples(lps, q, pi, lambda);
  return st;
}

EpochStats NvilTrainer::train_epoch(const std::vector<DialogueContext>& train,
                                    const std::vector<DialogueContext>& valid, int epoch) {
  EpochStats es;
  es.epoch = epoch;
  std::vector<std::size_t> order(train.size());
  std::iota(order.begin(), order.end(), 0);
  std::shuffle(order.begin(), order.end(), rng_);
  std::size_t turns = 0;
  for (std::size_t i : order) {
    for (const auto& turn : train[i].turns) {
      const TurnStats ts = train_turn(turn);
      if (ts.labeled) {
        es.l2 += ts.joint;
      } else {
        es.l1 += ts.bound;
      }
      es.kl += ts.kl;
      es.skipped_steps += ts.skipped;
      ++turns;
    }
  }
  es.kl = turns ? es.kl / static_cast<double>(turns) : 0.0;
  es.objective = config_.alpha * es.l1 + es.l2;
  es.valid_bound = mean_exact_bound(*model_, valid, config_.lambda);
  return es;
}

std::vector<EpochStats> NvilTrainer::fit(const std::vector<DialogueContext>& train,
                                         const std::vector<DialogueContext>& valid,
                                         const std::function<void(const EpochStats&)>& on_epoch) {
  std::vector<EpochStats> log;
  double best = -std::numeric_limits<double>::infinity();
  auto best_params = model_->params().snapshot();
  int since_best = 0;
  for (int epoch = 1; epoch <= config_.max_epochs; ++epoch) {
    const EpochStats es = train_epoch(train, valid, epoch);
    log.push_back(es);
    if (on_epoch) on_epoch(es);
    if (es.valid_bound > best) {
      best = es.valid_bound;
      best_params = model_->params().snapshot();
      since_best = 0;
    } else if (++since_best >= config_.patience) {
      break;
    }
  }
  model_->params().restore(best_params);
  return log;
}

void write_epoch_csv_header(std::ostream& out) { out << "epoch,L1,L2,L',valid_bound,KL\n"; }

void write_epoch_csv_row(std::ostream& out, const EpochStats& s) {
  const auto old = out.precision(12);
  out << s.epoch << ',' << s.l1 << ',' << s.l2 << ',' << s.objective << ',' << s.valid_bound << ',' << s.kl << '\n';
  out.precision(old);
}

}  // namespace lidm
