// One PASS/FAIL line per acceptance criterion; exit status 1 when any fails.
// Criteria that need the real restaurant corpus read it from $LIDM_CORPUS_DIR
// (CamRest676.json, CamRestOTGY.json, CamRestDB.json) and fail when it is absent.

#include "lidm/experiment.hpp"
#include "lidm/lm.hpp"
#include "lidm/service.hpp"
#include "toy.hpp"

#include <chrono>
#include <cmath>
#include <cstdlib>
#include <functional>
#include <iomanip>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>
#include <string>

using namespace lidm;
using lidm::testing::randomise;
using lidm::testing::toy_config;
using lidm::testing::toy_turn;
namespace fs = std::filesystem;

namespace {

// Tolerances and bands.
constexpr double kGroundTruthSuccess = 0.916;
constexpr double kGroundTruthBand = 0.03;
constexpr double kGroundTruthSeconds = 60.0;
constexpr double kMinBleu = 0.20;
constexpr double kSuccessLow = 0.50;
constexpr double kSuccessHigh = 0.75;
constexpr double kTrainingSeconds = 4 * 3600.0;
constexpr double kRlSuccessGain = 0.10;
constexpr double kRlBleuDrop = 0.03;
constexpr int kRlEpochs = 3;
constexpr double kLabeled50Low = 0.30, kLabeled50High = 0.40;
constexpr double kLabeled100Low = 0.38, kLabeled100High = 0.48;
constexpr double kTopClusterSize = 138.0;
constexpr double kTopClusterBand = 0.15;
constexpr double kBoundSlack = 1e-12;
constexpr double kTightness = 1e-8;
constexpr double kGradientTolerance = 1e-4;
constexpr int kVarianceResamples = 2000;
constexpr double kCurveTolerance = 1e-6;

const ParamFilter kAll = [](const Param&) { return true; };

struct Outcome {
  bool pass = false;
  std::string detail;
};

int failures = 0;

void report(const std::string& name, const std::function<Outcome()>& check) {
  Outcome o;
  try {
    o = check();
  } catch (const std::exception& e) {
    o = {false, std::string("error: ") + e.what()};
  }
  if (!o.pass) ++failures;
  std::cout << (o.pass ? "PASS " : "FAIL ") << name << ": " << o.detail << std::endl;
}

std::string fmt(double x, int precision = 4) {
  std::ostringstream s;
  s << std::fixed << std::setprecision(precision) << x;
  return s.str();
}

std::string sci(double x) {
  std::ostringstream s;
  s << std::scientific << std::setprecision(1) << x;
  return s.str();
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

std::optional<DataConfig> corpus_data() {
  const char* dir = std::getenv("LIDM_CORPUS_DIR");
  if (!dir || !*dir) return std::nullopt;
  DataConfig d = ExperimentConfig::load(fs::path(LIDM_CONFIG_DIR) / "camrest_i70.json").data;
  d.corpus = fs::path(dir) / "CamRest676.json";
  d.ontology = fs::path(dir) / "CamRestOTGY.json";
  d.kb = fs::path(dir) / "CamRestDB.json";
  for (const auto& p : {d.corpus, d.ontology, d.kb}) {
    if (!fs::exists(p)) return std::nullopt;
  }
  return d;
}

const Outcome kNoCorpus{false, "corpus unavailable (set LIDM_CORPUS_DIR to the CamRest676 files)"};

Vector state_of(const LidmModel& m, const TurnContext& t) { return m.dialogue_state(t.user, t.belief, t.match); }

LidmModel random_model(std::uint64_t seed, int latent, int vocab = 6, double scale = 1.0) {
  LidmModel m(toy_config(latent, vocab), seed);
  Rng rng(seed + 1000);
  randomise(m.params(), rng, scale);
  return m;
}

// ---- corpus criteria

Outcome ground_truth() {
  const auto data = corpus_data();
  if (!data) return kNoCorpus;
  const auto t0 = std::chrono::steady_clock::now();
  const CorpusData cd = load_corpus_data(*data);
  const auto r = evaluate_ground_truth(reference_contexts(cd.split.test, cd.kb), cd.kb);
  const double secs = seconds_since(t0);
  const bool ok = r.corpus_bleu == 1.0 && std::abs(r.success_rate - kGroundTruthSuccess) <= kGroundTruthBand &&
                  secs < kGroundTruthSeconds;
  return {ok, "BLEU " + fmt(r.corpus_bleu, 6) + ", success " + fmt(100 * r.success_rate, 1) + "% (want " +
                  fmt(100 * kGroundTruthSuccess, 1) + " +/- " + fmt(100 * kGroundTruthBand, 0) + "), " +
                  fmt(secs, 1) + " s"};
}

// Shared between the training and RL criteria.
std::optional<TrainingOutcome> trained;

Outcome semi_supervised() {
  const auto data = corpus_data();
  if (!data) return kNoCorpus;
  ExperimentConfig c = ExperimentConfig::load(fs::path(LIDM_CONFIG_DIR) / "camrest_i70.json");
  c.data = *data;
  c.reseed(seed_from_env(c.seed));
  c.output_dir = fs::current_path() / "acceptance_i70";
  const auto t0 = std::chrono::steady_clock::now();
  std::ostringstream log;
  trained = run_training(c, log);
  const double secs = seconds_since(t0);
  const auto& r = trained->test;
  const bool ok = r.corpus_bleu >= kMinBleu && r.success_rate >= kSuccessLow && r.success_rate <= kSuccessHigh &&
                  secs <= kTrainingSeconds;
  return {ok, "I=70 BLEU " + fmt(r.corpus_bleu, 3) + " (want >= " + fmt(kMinBleu, 2) + "), success " +
                  fmt(100 * r.success_rate, 1) + "% (want " + fmt(100 * kSuccessLow, 0) + "-" +
                  fmt(100 * kSuccessHigh, 0) + "), " + fmt(secs / 60, 1) + " min"};
}

Outcome rl_finetuning() {
  const auto data = corpus_data();
  if (!data) return kNoCorpus;
  if (!trained) return {false, "no trained checkpoint"};
  RlConfig cfg = ExperimentConfig::load(fs::path(LIDM_CONFIG_DIR) / "camrest_i70.json").rl;
  cfg.epochs = kRlEpochs;
  cfg.seed = seed_from_env(1) + 3;
  std::ostringstream log;
  const auto out = run_finetune(trained->checkpoint, cfg, trained->checkpoint.parent_path() / "lidm_rl.ckpt", *data, log);
  const double gain = out.after.success_rate - out.before.success_rate;
  const double drop = out.before.corpus_bleu - out.after.corpus_bleu;
  return {gain >= kRlSuccessGain && drop <= kRlBleuDrop,
          "success " + fmt(100 * out.before.success_rate, 1) + " -> " + fmt(100 * out.after.success_rate, 1) +
              ", BLEU " + fmt(out.before.corpus_bleu, 3) + " -> " + fmt(out.after.corpus_bleu, 3)};
}

Outcome labeler() {
  const auto data = corpus_data();
  if (!data) return kNoCorpus;
  const CorpusData cd = load_corpus_data(*data);
  const auto i50 = cluster_responses(cd.load.records, 50);
  const auto i100 = cluster_responses(cd.load.records, 100);
  const double f50 = i50.labeled_fraction(), f100 = i100.labeled_fraction();
  const auto& top = i50.clusters.front();
  const bool words = top.content == std::set<std::string>{"thank", "goodbye"};
  const bool size = std::abs(static_cast<double>(top.size) - kTopClusterSize) <= kTopClusterBand * kTopClusterSize;
  std::string content;
  for (const auto& w : top.content) content += (content.empty() ? "" : " ") + w;
  const bool ok = f50 >= kLabeled50Low && f50 <= kLabeled50High && f100 >= kLabeled100Low &&
                  f100 <= kLabeled100High && words && size;
  return {ok, "I=50 " + fmt(100 * f50, 1) + "%, I=100 " + fmt(100 * f100, 1) + "%, top {" + content + "} size " +
                  std::to_string(top.size)};
}

// ---- toy criteria

Outcome bound() {
  Rng rng(101);
  double worst_gap = -1e300, worst_tight = 0.0;
  for (int trial = 0; trial < 100; ++trial) {
    const int latent = 2 + trial % 4;
    auto m = random_model(static_cast<std::uint64_t>(trial) + 1, latent, 10, 1.5);
    const auto t = toy_turn(m.config(), rng, 1 + trial % 4);
    const double logp = m.log_marginal_likelihood(t.response, state_of(m, t));
    worst_gap = std::max(worst_gap, exact_bound(m, t, 1.0) - logp);
    Vector q = Vector::Random(latent).array().abs() + 1e-3;
    q /= q.sum();
    worst_gap = std::max(worst_gap, exact_bound(m, t, 1.0, &q) - logp);
    const Vector post = exact_posterior(m, t);
    worst_tight = std::max(worst_tight, std::abs(exact_bound(m, t, 1.0, &post) - logp));
  }
  return {worst_gap <= kBoundSlack && worst_tight <= kTightness,
          "max(bound - log p) " + sci(worst_gap) + " over 100 draws, |bound - log p| at posterior " +
              sci(worst_tight)};
}

Outcome gradients() {
  Rng rng(202);
  const double lambda = 0.1;
  std::map<std::string, double> worst{{"decoder", 0.0}, {"generative", 0.0}, {"inference", 0.0}};
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    auto m = random_model(seed, 4);
    const auto t = toy_turn(m.config(), rng);
    const Vector s = state_of(m, t);
    const int z = static_cast<int>(seed % 4);

    m.params().zero_grad();
    accumulate_decoder(m, t, z, 1.0);
    worst["decoder"] = std::max(worst["decoder"], lidm::testing::gradient_relative_error(
                                                      m.params(), in_group(ParamGroup::decoder),
                                                      [&] { return -m.response_log_prob(t.response, z, s); }));

    const Vector q = m.posterior_distribution(t.user, t.response, t.belief, t.match).probs;
    m.params().zero_grad();
    accumulate_generative(m, t, q, lambda, 1.0);
    worst["generative"] = std::max(
        worst["generative"],
        lidm::testing::gradient_relative_error(m.params(), in_group(ParamGroup::generative), [&] {
          return lambda * kl_divergence(q, m.policy_distribution(state_of(m, t)).probs);
        }));

    // expected score-function gradient, enumerated over z ~ q, against the exact bound
    const Vector pi = m.policy_distribution(s).probs;
    m.params().zero_grad();
    for (int k = 0; k < q.size(); ++k) {
      const double r = learning_signal(m.response_log_prob(t.response, k, s), std::log(q(k)), std::log(pi(k)), lambda);
      accumulate_inference(m, t, k, r - m.baseline(s), q(k));
    }
    worst["inference"] =
        std::max(worst["inference"], lidm::testing::gradient_relative_error(m.params(), in_group(ParamGroup::inference),
                                                                            [&] { return -exact_bound(m, t, lambda); }));
  }
  bool ok = true;
  std::string detail;
  for (const auto& [name, err] : worst) {
    ok = ok && err < kGradientTolerance;
    std::ostringstream s;
    s << name << ' ' << std::scientific << std::setprecision(1) << err;
    detail += (detail.empty() ? "" : ", ") + s.str();
  }
  return {ok, detail + " (max relative error, 5 draws)"};
}

// Flattened inference-group gradient of one sample (r - c) grad log q(z).
Vector sample_gradient(LidmModel& m, const TurnContext& t, int z, double signal) {
  m.params().zero_grad();
  accumulate_inference(m, t, z, signal, 1.0);
  std::vector<double> flat;
  for (const Param* p : m.params().select(in_group(ParamGroup::inference))) {
    flat.insert(flat.end(), p->grad.data(), p->grad.data() + p->grad.size());
  }
  m.params().zero_grad();
  return Eigen::Map<Vector>(flat.data(), static_cast<Eigen::Index>(flat.size()));
}

Outcome variance() {
  Rng rng(303);
  auto m = random_model(9, 4);
  const auto t = toy_turn(m.config(), rng, 4);
  const double lambda = 0.1;
  const Vector s = state_of(m, t);
  const Vector pi = m.policy_distribution(s).probs;
  const Vector q = m.posterior_distribution(t.user, t.response, t.belief, t.match).probs;
  auto signal = [&](int z) {
    return learning_signal(m.response_log_prob(t.response, z, s), std::log(q(z)), std::log(pi(z)), lambda);
  };
  // baselines fitted the way training fits them
  Adam adam(1e-2);
  for (int i = 0; i < 3000; ++i) baseline_step(m, s, signal(sample_index(q, rng)), adam);
  const double c = m.baseline(s);

  std::vector<Vector> with, without;
  for (int i = 0; i < kVarianceResamples; ++i) {
    const int z = sample_index(q, rng);
    with.push_back(sample_gradient(m, t, z, signal(z) - c));
    without.push_back(sample_gradient(m, t, z, signal(z)));
  }
  auto empirical = [](const std::vector<Vector>& xs) {
    Vector mean = Vector::Zero(xs[0].size());
    for (const auto& x : xs) mean += x;
    mean /= static_cast<double>(xs.size());
    double v = 0.0;
    for (const auto& x : xs) v += (x - mean).squaredNorm();
    return v / static_cast<double>(xs.size() - 1);
  };
  const double vb = empirical(with), vn = empirical(without);
  return {vb <= vn, "trace variance " + fmt(vb, 4) + " with baselines vs " + fmt(vn, 4) + " without, " +
                        std::to_string(kVarianceResamples) + " resamples"};
}

// Best average log-probability over every sequence ending in EOS within max_len tokens.
double exhaustive_best(const DecoderLm& lm, int max_len) {
  double best = -1e300;
  TokenIds seq;
  std::function<void()> rec = [&] {
    seq.push_back(lm.eos());
    best = std::max(best, sequence_log_prob(lm, seq) / static_cast<double>(seq.size()));
    seq.pop_back();
    if (static_cast<int>(seq.size()) + 1 >= max_len) return;
    for (int v = 0; v < lm.vocab_size(); ++v) {
      if (v == lm.eos()) continue;
      seq.push_back(v);
      rec();
      seq.pop_back();
    }
  };
  rec();
  return best;
}

Outcome beam() {
  const int vocab = 5, max_len = 4;
  long long width = 1;
  for (int i = 0; i < max_len; ++i) width *= vocab;
  double worst = 0.0;
  for (std::uint64_t seed = 1; seed <= 10; ++seed) {
    auto m = random_model(seed, 3, vocab, 2.0);
    const Vector s = Vector::Random(m.config().state_dim());
    const DecoderLm lm = m.decoder(static_cast<int>(seed % 3), s);
    const auto r = beam_decode(lm, width, max_len);
    if (!r.terminated) return {false, "beam did not terminate (seed " + std::to_string(seed) + ")"};
    worst = std::max(worst, std::abs(r.avg_log_prob - exhaustive_best(lm, max_len)));
  }
  std::ostringstream s;
  s << "width " << width << ", |V|=" << vocab << ", max_len " << max_len << ", max gap " << std::scientific
    << std::setprecision(1) << worst << " over 10 decoders";
  return {worst <= 1e-12, s.str()};
}

Outcome discipline() {
  Rng rng(404);
  auto m = random_model(12, 3);
  const auto t = toy_turn(m.config(), rng);
  Adam adam(1e-2);
  Vector q(3);
  q << 0.1, 0.2, 0.7;
  const std::vector<std::pair<ParamGroup, std::function<bool()>>> steps{
      {ParamGroup::decoder, [&] { return decoder_gradient_step(m, t, 0, adam); }},
      {ParamGroup::generative, [&] { return generative_kl_step(m, t, q, 0.1, adam); }},
      {ParamGroup::inference, [&] { return inference_gradient_step(m, t, 1, -1.5, adam); }},
      {ParamGroup::baseline, [&] { return baseline_step(m, state_of(m, t), 2.0, adam); }},
  };
  const std::vector<ParamGroup> groups{ParamGroup::decoder, ParamGroup::generative, ParamGroup::inference,
                                       ParamGroup::baseline};
  std::string bad;
  for (const auto& [group, run] : steps) {
    std::map<ParamGroup, std::uint64_t> before;
    for (auto g : groups) before[g] = m.params().hash(in_group(g));
    const std::string name(to_string(group));
    if (!run()) bad += " " + name + " step skipped;";
    for (auto g : groups) {
      const bool moved = m.params().hash(in_group(g)) != before[g];
      if (moved != (g == group)) bad += " " + name + " step " + (moved ? "moved " : "left ") + std::string(to_string(g)) + ";";
    }
  }

  // RL on the synthetic fixture corpus
  const auto& data = lidm::testing::synthetic_corpus();
  Agent agent = lidm::testing::small_agent(4);
  std::vector<DialogueRecord> recs(data.split.train.begin(), data.split.train.begin() + 8);
  auto train = build_contexts(recs, agent.tracker, data.kb, data.vocab);
  apply_labels(train, cluster_responses(recs, 6));
  const auto not_policy = [](const Param& p) { return !p.policy; };
  const auto frozen = agent.model.params().hash(not_policy);
  const auto tracker = agent.tracker.params().hash(kAll);
  const auto policy = agent.model.params().hash(policy_subset());
  RlConfig cfg;
  cfg.learning_rate = 1e-2;
  cfg.max_len = 10;
  RlTrainer trainer(agent.model, data.kb, data.vocab, cfg);
  for (const auto& d : train) {
    for (std::size_t i = 0; i < d.turns.size(); ++i) trainer.train_turn(d, i);
  }
  if (agent.model.params().hash(not_policy) != frozen) bad += " RL moved parameters outside the policy;";
  if (agent.tracker.params().hash(kAll) != tracker) bad += " RL moved the tracker;";
  if (agent.model.params().hash(policy_subset()) == policy) bad += " RL left the policy unchanged;";
  return {bad.empty(), bad.empty() ? "decoder, generative, inference, baseline and RL steps each move only their group"
                                   : bad};
}

Outcome determinism() {
  const std::uint64_t seed = seed_from_env(7);
  lidm::testing::TempDir dir("acceptance");
  std::vector<std::vector<EpochStats>> curves;
  std::vector<fs::path> checkpoints;
  for (const char* run : {"a", "b"}) {
    ExperimentConfig c = lidm::testing::tiny_experiment(dir.path() / run);
    c.reseed(seed);
    std::ostringstream log;
    const auto out = run_training(c, log);
    curves.push_back(out.epochs);
    checkpoints.push_back(out.checkpoint);
  }
  double worst = 0.0;
  if (curves[0].size() != curves[1].size()) return {false, "different epoch counts"};
  for (std::size_t e = 0; e < curves[0].size(); ++e) {
    worst = std::max(worst, std::abs(curves[0][e].objective - curves[1][e].objective));
  }

  const std::vector<std::string> script{"i want cheap chinese food", "in the centre please", "what is the phone number",
                                        "thank you goodbye"};
  std::vector<std::vector<std::string>> transcripts;
  for (const auto& ckpt : checkpoints) {
    const Agent agent = load_checkpoint(ckpt);
    SessionManager sessions(agent, seed);
    ChatOptions o;  // interactive: intentions are sampled
    o.beam_width = 2;
    o.max_len = 12;
    const auto id = sessions.create();
    std::vector<std::string> lines;
    for (const auto& u : script) lines.push_back(sessions.message(id, u, std::nullopt, o).response);
    transcripts.push_back(lines);
  }
  const bool ok = worst <= kCurveTolerance && transcripts[0] == transcripts[1];
  std::ostringstream s;
  s << "seed " << seed << ", " << curves[0].size() << " epochs, max |dL'| " << std::scientific << std::setprecision(1)
    << worst << ", transcripts " << (transcripts[0] == transcripts[1] ? "identical" : "differ");
  return {ok, s.str()};
}

}  // namespace

int main() {
  report("ground-truth metrics", ground_truth);
  report("semi-supervised training", semi_supervised);
  report("RL fine-tuning", rl_finetuning);
  report("labeler fidelity", labeler);
  report("bound correctness", bound);
  report("gradient oracles", gradients);
  report("variance reduction", variance);
  report("beam oracle", beam);
  report("parameter discipline", discipline);
  report("determinism", determinism);
  std::cout << (failures ? std::to_string(failures) + " failed" : std::string("all passed")) << std::endl;
  return failures ? 1 : 0;
}
