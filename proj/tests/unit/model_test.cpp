#include "lidm/model.hpp"
#include "lidm/nvil.hpp"
#include "toy.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <map>

using namespace lidm;
using lidm::testing::randomise;
using lidm::testing::toy_config;
using lidm::testing::toy_turn;

namespace {

void zero_all(LidmModel& m) {
  for (const auto& p : m.params()) p->value.setZero();
}

Vector state_of(const LidmModel& m, const TurnContext& t) { return m.dialogue_state(t.user, t.belief, t.match); }

// A fixed random table of next-token distributions keyed on (position, previous token).
struct TableLm {
  using State = int;  // position
  int v;
  int max_len;
  std::map<std::pair<int, int>, Vector> table;

  TableLm(int vocab, int len, std::uint64_t seed) : v(vocab), max_len(len) {
    Rng rng(seed);
    std::uniform_real_distribution<double> u(-2.0, 2.0);
    for (int pos = 0; pos <= len; ++pos) {
      for (int prev = 0; prev < vocab; ++prev) {
        Vector logits(vocab);
        for (int k = 0; k < vocab; ++k) logits(k) = u(rng);
        const double lse = std::log(logits.array().exp().sum());
        table[{pos, prev}] = (logits.array() - lse).matrix();
      }
    }
  }
  State initial_state() const { return 0; }
  std::pair<State, Vector> step(const State& s, int tok) const { return {s + 1, table.at({s, tok})}; }
  int vocab_size() const { return v; }
  int bos() const { return 0; }
  int eos() const { return 1; }
};

// Best completed hypothesis by average log-probability, by enumerating every sequence.
double best_average(const TableLm& lm, int max_len) {
  double best = -1e300;
  std::function<void(int, int, double, int)> rec = [&](int pos, int prev, double lp, int len) {
    if (pos >= max_len) return;
    const Vector& logp = lm.table.at({pos, prev});
    best = std::max(best, (lp + logp(lm.eos())) / (len + 1));
    for (int k = 0; k < lm.v; ++k) {
      if (k == lm.eos()) continue;
      rec(pos + 1, k, lp + logp(k), len + 1);
    }
  };
  rec(0, lm.bos(), 0.0, 0);
  return best;
}

}  // namespace

static_assert(StepLanguageModel<TableLm>);
static_assert(StepLanguageModel<DecoderLm>);

TEST(Encoder, OutputIsTwiceHidden) {
  LidmModel m(toy_config(), 1);
  const TokenIds u{2, 3, 4};
  const Vector e = m.encode_utterance(u);
  EXPECT_EQ(e.size(), 2 * m.config().hidden);
  EXPECT_EQ(e, m.encode_utterance(u));
  EXPECT_EQ(m.encode_utterance(TokenIds{}).size(), 6);
}

TEST(Encoder, ZeroWeightsGiveZeroVector) {
  LidmModel m(toy_config(), 1);
  zero_all(m);
  EXPECT_TRUE(m.encode_utterance(TokenIds{2, 5, 3}).isZero());
}

TEST(Encoder, RejectsUnknownIds) {
  LidmModel m(toy_config(), 1);
  EXPECT_THROW(m.encode_utterance(TokenIds{2, 17}), std::out_of_range);
}

TEST(Policy, ZeroParametersGiveUniform) {
  LidmModel m(toy_config(4), 1);
  zero_all(m);
  const auto pi = m.policy_distribution(Vector::Random(m.config().state_dim()));
  for (int z = 0; z < 4; ++z) EXPECT_DOUBLE_EQ(pi.probs(z), 0.25);
}

TEST(Policy, SoftmaxOfOutputBias) {
  LidmModel m(toy_config(3), 1);
  zero_all(m);
  m.params().at("policy/l2/b").value.col(0) << std::log(2.0), 0.0, 0.0;
  const auto pi = m.policy_distribution(Vector::Random(m.config().state_dim()));
  EXPECT_NEAR(pi.probs(0), 0.5, 1e-12);
  EXPECT_NEAR(pi.probs(1), 0.25, 1e-12);
  EXPECT_NEAR(pi.probs(2), 0.25, 1e-12);
  EXPECT_EQ(pi.argmax(), 0);
  EXPECT_EQ(pi.top_k(2), (std::vector<int>{0, 1}));
}

TEST(Policy, AlwaysADistribution) {
  Rng rng(3);
  for (int trial = 0; trial < 50; ++trial) {
    LidmModel m(toy_config(5), trial);
    randomise(m.params(), rng, 3.0);
    const auto pi = m.policy_distribution(Vector::Random(m.config().state_dim()) * 5);
    EXPECT_TRUE(pi.valid(1e-9));
  }
}

TEST(Sampling, OneHotAlwaysPicksItsIndex) {
  Rng rng(1);
  Vector p = Vector::Zero(7);
  p(4) = 1.0;
  for (int i = 0; i < 200; ++i) EXPECT_EQ(sample_index(p, rng), 4);
}

TEST(Sampling, UniformOverFiftyPassesChiSquare) {
  Rng rng(11);
  const int n = 100000;
  std::vector<int> counts(50, 0);
  const Vector p = Vector::Constant(50, 1.0 / 50);
  for (int i = 0; i < n; ++i) ++counts[static_cast<std::size_t>(sample_index(p, rng))];
  const double expect = n / 50.0;
  double chi2 = 0.0;
  for (int c : counts) chi2 += (c - expect) * (c - expect) / expect;
  // 49 degrees of freedom, upper 0.1% point
  EXPECT_LT(chi2, 85.35);
}

TEST(Sampling, FixedSeedRepeats) {
  const Vector p = (Vector(4) << 0.1, 0.2, 0.3, 0.4).finished();
  Rng a(5), b(5);
  for (int i = 0; i < 100; ++i) EXPECT_EQ(sample_index(p, a), sample_index(p, b));
}

TEST(Sampling, RejectsBadDistributions) {
  Rng rng(1);
  Vector p(2);
  p << std::nan(""), 1.0;
  EXPECT_THROW(sample_index(p, rng), std::invalid_argument);
  EXPECT_THROW(sample_index(Vector::Zero(3), rng), std::invalid_argument);
  EXPECT_THROW(sample_index(Vector(), rng), std::invalid_argument);
  p << -0.1, 1.1;
  EXPECT_THROW(sample_index(p, rng), std::invalid_argument);
}

TEST(Control, GateIsHalfAtZeroPreActivation) {
  LidmModel m(toy_config(), 2);
  m.params().at("decoder/W3").value.setZero();
  const Vector s = Vector::Random(m.config().state_dim());
  const Vector d = m.control_vector(1, s);
  const int h = m.config().control_half;
  ASSERT_EQ(d.size(), 2 * h);
  EXPECT_EQ(d.head(h), m.params().at("decoder/W4").value.col(1));
  EXPECT_TRUE(d.tail(h).isApprox(0.5 * m.params().at("decoder/W5").value * s, 1e-12));
}

TEST(Control, NegativeBiasClosesGate) {
  LidmModel m(toy_config(), 2);
  m.params().at("decoder/W3").value.setZero();
  m.params().at("decoder/b3").value.setConstant(-20.0);
  const Vector d = m.control_vector(0, Vector::Random(m.config().state_dim()));
  EXPECT_LT(d.tail(m.config().control_half).cwiseAbs().maxCoeff(), 1e-7);
}

TEST(Control, DependsOnIntentionAndGateStaysInside) {
  Rng rng(4);
  LidmModel m(toy_config(4), 2);
  randomise(m.params(), rng, 2.0);
  const Vector s = Vector::Random(m.config().state_dim());
  EXPECT_NE(m.control_vector(0, s), m.control_vector(1, s));
  const auto& w3 = m.params().at("decoder/W3").value;
  const auto& b3 = m.params().at("decoder/b3").value;
  for (int z = 0; z < 4; ++z) {
    const Vector pre = w3.col(z) + b3;
    const Vector g = (1.0 / (1.0 + (-pre.array()).exp())).matrix();
    EXPECT_TRUE((g.array() > 0).all() && (g.array() < 1).all());
  }
  EXPECT_THROW(m.control_vector(4, s), std::out_of_range);
  EXPECT_THROW(m.control_vector(-1, s), std::out_of_range);
}

TEST(Decoder, SingleWordVocabularyIsCertain) {
  auto c = toy_config(2, 1);
  c.eos = 0;
  LidmModel m(c, 1);
  EXPECT_DOUBLE_EQ(m.response_log_prob(TokenIds{0}, 1, Vector::Random(c.state_dim())), 0.0);
}

TEST(Decoder, LogProbabilityIsNonPositive) {
  Rng rng(6);
  for (int trial = 0; trial < 30; ++trial) {
    LidmModel m(toy_config(), trial);
    randomise(m.params(), rng, 1.0);
    const auto t = toy_turn(m.config(), rng, trial % 5);
    EXPECT_LE(m.response_log_prob(t.response, trial % 3, state_of(m, t)), 0.0);
  }
}

TEST(Decoder, OutputBiasOnlyMatchesTable) {
  LidmModel m(toy_config(), 1);
  zero_all(m);
  Vector b(6);
  b << 0.3, -1.0, 2.0, 0.0, 0.5, -0.2;
  m.params().at("decoder/out/b").value.col(0) = b;
  const double lse = std::log(b.array().exp().sum());
  const TokenIds r{2, 4, 2, 1};
  double expect = 0.0;
  for (int w : r) expect += b(w) - lse;
  EXPECT_NEAR(m.response_log_prob(r, 0, Vector::Random(m.config().state_dim())), expect, 1e-12);
}

TEST(Decoder, TapeAndForwardAgree) {
  Rng rng(8);
  LidmModel m(toy_config(), 3);
  randomise(m.params(), rng, 1.0);
  const auto t = toy_turn(m.config(), rng);
  ad::Tape tape;
  ad::Var s = m.dialogue_state(tape, m.encode_utterance(tape, t.user), t.belief, t.match);
  const double a = m.response_log_prob(tape, m.control_vector(tape, 2, s), t.response).value()(0);
  EXPECT_NEAR(a, m.response_log_prob(t.response, 2, state_of(m, t)), 1e-12);
}

TEST(Decoder, ConditionedOnIntention) {
  Rng rng(9);
  LidmModel m(toy_config(), 3);
  randomise(m.params(), rng, 1.0);
  const auto t = toy_turn(m.config(), rng);
  const Vector s = state_of(m, t);
  EXPECT_NE(m.response_log_prob(t.response, 0, s), m.response_log_prob(t.response, 1, s));
  // With the decoder control weights cleared the intention no longer matters.
  m.params().at("decoder/lstm/Wd").value.setZero();
  EXPECT_DOUBLE_EQ(m.response_log_prob(t.response, 0, s), m.response_log_prob(t.response, 1, s));
}

TEST(Decoder, RequiresEndOfSentence) {
  LidmModel m(toy_config(), 1);
  const Vector s = Vector::Zero(m.config().state_dim());
  EXPECT_THROW(m.response_log_prob(TokenIds{2, 3}, 0, s), std::invalid_argument);
  EXPECT_THROW(m.response_log_prob(TokenIds{}, 0, s), std::invalid_argument);
}

TEST(Posterior, ZeroInferenceWeightsGiveUniform) {
  Rng rng(2);
  LidmModel m(toy_config(5), 1);
  for (Param* p : m.params().select(in_group(ParamGroup::inference))) p->value.setZero();
  const auto t = toy_turn(m.config(), rng);
  const auto q = m.posterior_distribution(t.user, t.response, t.belief, t.match);
  EXPECT_EQ(q.source, IntentionDistribution::Source::inference);
  for (int z = 0; z < 5; ++z) EXPECT_DOUBLE_EQ(q.probs(z), 0.2);
}

TEST(Posterior, AlwaysNormalised) {
  Rng rng(3);
  for (int trial = 0; trial < 100; ++trial) {
    LidmModel m(toy_config(4), trial);
    randomise(m.params(), rng, 2.0);
    const auto t = toy_turn(m.config(), rng, trial % 4);
    EXPECT_TRUE(m.posterior_distribution(t.user, t.response, t.belief, t.match).valid(1e-9));
  }
}

TEST(Beam, WidthOneIsGreedy) {
  Rng rng(5);
  for (int trial = 0; trial < 20; ++trial) {
    LidmModel m(toy_config(3, 6), trial);
    randomise(m.params(), rng, 2.0);
    const Vector s = Vector::Random(m.config().state_dim());
    const auto g = m.greedy_decode(trial % 3, s, 6);
    const auto b = m.beam_decode(trial % 3, s, 1, 6);
    EXPECT_EQ(g.tokens, b.tokens);
    EXPECT_EQ(g.terminated, b.terminated);
    if (g.terminated) {
      EXPECT_NEAR(g.log_prob, b.log_prob, 1e-12);
    }
  }
}

TEST(Beam, WideBeamFindsExhaustiveOptimum) {
  for (std::uint64_t seed = 1; seed <= 20; ++seed) {
    TableLm lm(3, 4, seed);
    const auto r = beam_decode(lm, 1000, 4);
    ASSERT_TRUE(r.terminated);
    EXPECT_NEAR(r.avg_log_prob, best_average(lm, 4), 1e-12) << seed;
    TokenIds full = r.tokens;
    full.push_back(lm.eos());
    EXPECT_NEAR(sequence_log_prob(lm, full), r.log_prob, 1e-12);
  }
}

TEST(Beam, CertainEndGivesEmptyResponse) {
  LidmModel m(toy_config(), 1);
  zero_all(m);
  m.params().at("decoder/out/b").value(1, 0) = 50.0;
  const auto r = m.beam_decode(0, Vector::Zero(m.config().state_dim()), 4, 10);
  EXPECT_TRUE(r.terminated);
  EXPECT_TRUE(r.tokens.empty());
  EXPECT_THROW(m.beam_decode(0, Vector::Zero(m.config().state_dim()), 0, 10), std::invalid_argument);
}

TEST(Beam, NoEndWithinLimitIsFlagged) {
  LidmModel m(toy_config(), 1);
  zero_all(m);
  m.params().at("decoder/out/b").value(3, 0) = 50.0;
  const auto r = m.beam_decode(0, Vector::Zero(m.config().state_dim()), 1, 5);
  EXPECT_FALSE(r.terminated);
  EXPECT_EQ(r.tokens.size(), 5u);
}

TEST(Marginal, SingleIntentionEqualsConditional) {
  Rng rng(1);
  LidmModel m(toy_config(1), 4);
  randomise(m.params(), rng, 1.0);
  const auto t = toy_turn(m.config(), rng);
  const Vector s = state_of(m, t);
  EXPECT_NEAR(m.log_marginal_likelihood(t.response, s), m.response_log_prob(t.response, 0, s), 1e-12);
}

TEST(Marginal, UniformPolicyAveragesConditionals) {
  Rng rng(2);
  LidmModel m(toy_config(4), 4);
  randomise(m.params(), rng, 1.0);
  for (Param* p : m.params().select(policy_subset())) p->value.setZero();
  const auto t = toy_turn(m.config(), rng);
  const Vector s = state_of(m, t);
  double mean = 0.0;
  for (int z = 0; z < 4; ++z) mean += std::exp(m.response_log_prob(t.response, z, s)) / 4;
  EXPECT_NEAR(m.marginal_likelihood(t.response, s), mean, 1e-12 * mean);
}

TEST(Marginal, MonteCarloAgrees) {
  Rng rng(3);
  LidmModel m(toy_config(5), 4);
  randomise(m.params(), rng, 1.5);
  const auto t = toy_turn(m.config(), rng, 1);
  const Vector s = state_of(m, t);
  const auto pi = m.policy_distribution(s);
  const int n = 20000;
  double sum = 0.0, sum2 = 0.0;
  for (int i = 0; i < n; ++i) {
    const double p = std::exp(m.response_log_prob(t.response, sample_intention(pi, rng), s));
    sum += p;
    sum2 += p * p;
  }
  const double mean = sum / n;
  const double se = std::sqrt((sum2 / n - mean * mean) / n);
  EXPECT_NEAR(mean, m.marginal_likelihood(t.response, s), 3 * se);
}

TEST(Bound, NeverExceedsLogMarginal) {
  Rng rng(7);
  for (int trial = 0; trial < 100; ++trial) {
    LidmModel m(toy_config(4), trial);
    randomise(m.params(), rng, 1.5);
    const auto t = toy_turn(m.config(), rng, trial % 4);
    Vector q = Vector::Random(4).array().abs() + 1e-3;
    q /= q.sum();
    const double logp = m.log_marginal_likelihood(t.response, state_of(m, t));
    EXPECT_LE(exact_bound(m, t, 1.0, &q), logp + 1e-12);
    EXPECT_LE(exact_bound(m, t, 1.0), logp + 1e-12);
  }
}

TEST(Bound, TightAtExactPosterior) {
  Rng rng(8);
  for (int trial = 0; trial < 20; ++trial) {
    LidmModel m(toy_config(4), trial);
    randomise(m.params(), rng, 1.5);
    const auto t = toy_turn(m.config(), rng);
    const Vector post = exact_posterior(m, t);
    EXPECT_NEAR(post.sum(), 1.0, 1e-12);
    EXPECT_NEAR(exact_bound(m, t, 1.0, &post), m.log_marginal_likelihood(t.response, state_of(m, t)), 1e-8);
  }
}

TEST(Model, CopyOwnsItsParameters) {
  LidmModel a(toy_config(), 1);
  LidmModel b = a;
  a.params().at("decoder/W4").value.setZero();
  EXPECT_FALSE(b.params().at("decoder/W4").value.isZero());
  const Vector s = Vector::Random(b.config().state_dim());
  EXPECT_NE(a.control_vector(0, s), b.control_vector(0, s));
}

TEST(Model, SameSeedSameInitialisation) {
  const auto all = [](const Param&) { return true; };
  EXPECT_EQ(LidmModel(toy_config(), 3).params().hash(all), LidmModel(toy_config(), 3).params().hash(all));
  EXPECT_NE(LidmModel(toy_config(), 3).params().hash(all), LidmModel(toy_config(), 4).params().hash(all));
}

TEST(Model, ParameterGroupsPartitionTheStore) {
  LidmModel m(toy_config(), 1);
  std::size_t total = 0;
  for (auto g : {ParamGroup::decoder, ParamGroup::generative, ParamGroup::inference, ParamGroup::baseline}) {
    total += m.params().select(in_group(g)).size();
  }
  EXPECT_EQ(total, m.params().size());
  for (const Param* p : m.params().select(policy_subset())) {
    EXPECT_EQ(p->name.rfind("policy/", 0), 0u);
    EXPECT_EQ(p->group, ParamGroup::generative);
  }
  EXPECT_EQ(m.params().select(policy_subset()).size(), 4u);
}
