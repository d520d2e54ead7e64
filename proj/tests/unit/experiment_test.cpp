#include "lidm/experiment.hpp"
#include "toy.hpp"

#include <gtest/gtest.h>

#include <fstream>
#include <sstream>

using namespace lidm;
using lidm::testing::TempDir;
using lidm::testing::tiny_experiment;

namespace {

const ParamFilter kAll = [](const Param&) { return true; };

std::vector<std::vector<double>> read_csv(const std::filesystem::path& p) {
  std::ifstream in(p);
  std::string line;
  std::getline(in, line);  // header
  std::vector<std::vector<double>> rows;
  while (std::getline(in, line)) {
    std::vector<double> row;
    std::stringstream ss(line);
    for (std::string cell; std::getline(ss, cell, ',');) row.push_back(std::stod(cell));
    rows.push_back(row);
  }
  return rows;
}

class Experiment : public ::testing::Test {
 protected:
  static void SetUpTestSuite() {
    dir_ = new TempDir("exp");
    std::ostringstream log;
    outcome_ = new TrainingOutcome(run_training(tiny_experiment(dir_->path() / "a"), log));
    log_ = new std::string(log.str());
  }
  static void TearDownTestSuite() {
    delete outcome_;
    delete log_;
    delete dir_;
  }
  static TempDir* dir_;
  static TrainingOutcome* outcome_;
  static std::string* log_;
};

TempDir* Experiment::dir_ = nullptr;
TrainingOutcome* Experiment::outcome_ = nullptr;
std::string* Experiment::log_ = nullptr;

}  // namespace

TEST(ExperimentConfig, JsonRoundTripAndRelativePaths) {
  const auto c = ExperimentConfig::load(lidm::testing::data_dir() / "tiny_experiment.json");
  EXPECT_EQ(c.data.corpus, lidm::testing::data_dir() / "synthetic" / "CamRest676.json");
  EXPECT_EQ(c.data.split_seed, 3u);
  EXPECT_EQ(c.latent_size, 8);
  const auto back = ExperimentConfig::from_json(c.to_json());
  EXPECT_EQ(back.to_json(), c.to_json());
  EXPECT_THROW(ExperimentConfig::load(lidm::testing::data_dir() / "missing.json"), std::runtime_error);
}

TEST(ExperimentConfig, ReseedDerivesEverySeed) {
  ExperimentConfig c;
  c.reseed(10);
  EXPECT_EQ(c.seed, 10u);
  EXPECT_EQ(c.tracker_training.seed, 11u);
  EXPECT_EQ(c.nvil.seed, 12u);
  EXPECT_EQ(c.rl.seed, 13u);
}

TEST(ExperimentConfig, RejectsNonsense) {
  auto j = ExperimentConfig().to_json();
  j["latent_size"] = 0;
  EXPECT_THROW(ExperimentConfig::from_json(j), std::invalid_argument);
}

TEST_F(Experiment, WritesArtifacts) {
  const auto out = dir_->path() / "a";
  for (const char* f : {"config.json", "split.json", "vocab.txt", "tracker.json", "labels.json", "epochs.csv",
                        "lidm.ckpt", "eval_test.json", "eval_table.txt"}) {
    EXPECT_TRUE(std::filesystem::exists(out / f)) << f;
  }
  EXPECT_EQ(outcome_->epochs.size(), 2u);
  EXPECT_EQ(read_csv(out / "epochs.csv").size(), 2u);
  EXPECT_GT(outcome_->labels.labeled, 0u);
  EXPECT_NE(log_->find("Ground Truth"), std::string::npos);

  const Agent agent = load_checkpoint(outcome_->checkpoint);
  EXPECT_EQ(agent.tag, "LIDM I=6");
  EXPECT_EQ(agent.model.config().latent_size, 6);
  EXPECT_TRUE(agent.training.contains("experiment"));
  EXPECT_EQ(Vocabulary::load(out / "vocab.txt").hash(), agent.vocab.hash());
}

TEST_F(Experiment, EvaluationIsReproducible) {
  const Agent agent = load_checkpoint(outcome_->checkpoint);
  const AgentData data = load_agent_data(agent);
  DecodeOptions opt;
  opt.beam_width = 2;
  opt.max_len = 20;
  const auto again = evaluate_model(agent.model, data.test, agent.kb, agent.vocab, opt, agent.tag);
  EXPECT_EQ(again.to_json(), outcome_->test.to_json());
}

TEST_F(Experiment, SameSeedSameTrainingCurve) {
  std::ostringstream log;
  const auto second = run_training(tiny_experiment(dir_->path() / "b"), log);
  const auto a = read_csv(dir_->path() / "a" / "epochs.csv");
  const auto b = read_csv(dir_->path() / "b" / "epochs.csv");
  ASSERT_EQ(a.size(), b.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    ASSERT_EQ(a[i].size(), b[i].size());
    for (std::size_t k = 0; k < a[i].size(); ++k) EXPECT_NEAR(a[i][k], b[i][k], 1e-6) << "row " << i << " col " << k;
  }
  EXPECT_EQ(load_checkpoint(second.checkpoint).model.params().hash(kAll),
            load_checkpoint(outcome_->checkpoint).model.params().hash(kAll));
}

TEST_F(Experiment, FinetuneMovesOnlyThePolicy) {
  const Agent before = load_checkpoint(outcome_->checkpoint);
  RlConfig cfg;
  cfg.epochs = 1;
  cfg.learning_rate = 1e-2;
  cfg.max_len = 12;
  std::ostringstream log;
  const auto out = dir_->path() / "a" / "lidm_rl.ckpt";
  const auto rl = run_finetune(outcome_->checkpoint, cfg, out, std::nullopt, log);
  const Agent after = load_checkpoint(out);
  const auto not_policy = [](const Param& p) { return !p.policy; };
  EXPECT_EQ(after.tag, "LIDM I=6+RL");
  EXPECT_EQ(after.model.params().hash(not_policy), before.model.params().hash(not_policy));
  EXPECT_NE(after.model.params().hash(policy_subset()), before.model.params().hash(policy_subset()));
  EXPECT_EQ(after.tracker.params().hash(kAll), before.tracker.params().hash(kAll));
  EXPECT_EQ(rl.epochs.size(), 1u);
  EXPECT_EQ(rl.before.to_json(), outcome_->test.to_json());
  EXPECT_TRUE(after.training.contains("rl"));
  EXPECT_TRUE(std::filesystem::exists(dir_->path() / "a" / "rl.csv"));
  EXPECT_TRUE(std::filesystem::exists(dir_->path() / "a" / "eval_rl.json"));
}

TEST_F(Experiment, ForeignCorpusIsRefused) {
  const Agent agent = load_checkpoint(outcome_->checkpoint);
  DataConfig other = lidm::testing::synthetic_data();
  other.split_seed = 99;  // different training split, so a different vocabulary
  other.min_count = 2;
  EXPECT_THROW(load_agent_data(agent, other), VocabularyMismatch);
}
