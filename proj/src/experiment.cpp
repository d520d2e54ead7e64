#include "lidm/experiment.hpp"

#include <nlohmann/json.hpp>

#include <fstream>

namespace lidm {

namespace fs = std::filesystem;

namespace {

fs::path resolve(const fs::path& p, const fs::path& base) {
  if (p.empty() || p.is_absolute() || base.empty()) return p;
  return base / p;
}

nlohmann::json tracker_train_json(const TrackerTrainConfig& c) {
  return {{"epochs", c.epochs}, {"learning_rate", c.learning_rate}, {"patience", c.patience}, {"seed", c.seed}};
}

TrackerTrainConfig tracker_train_from_json(const nlohmann::json& j) {
  TrackerTrainConfig c;
  c.epochs = j.value("epochs", c.epochs);
  c.learning_rate = j.value("learning_rate", c.learning_rate);
  c.patience = j.value("patience", c.patience);
  c.seed = j.value("seed", c.seed);
  return c;
}

void write_json(const fs::path& path, const nlohmann::json& j) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << j.dump(2) << '\n';
}

nlohmann::json accuracy_json(const TrackerAccuracy& a) {
  return {{"per_slot", a.per_slot}, {"requestable", a.requestable}, {"turns", a.turns}};
}

nlohmann::json clusters_json(const LabeledSet& labels, std::size_t limit) {
  nlohmann::json rows = nlohmann::json::array();
  for (std::size_t i = 0; i < labels.clusters.size() && i < limit; ++i) {
    rows.push_back({{"index", i}, {"size", labels.clusters[i].size}, {"content", labels.clusters[i].content}});
  }
  return {{"labeled", labels.labeled},
          {"total", labels.total},
          {"labeled_fraction", labels.labeled_fraction()},
          {"clusters", labels.clusters.size()},
          {"top", rows}};
}

}  // namespace

nlohmann::json DataConfig::to_json() const {
  return {{"corpus", corpus.string()},
          {"ontology", ontology.string()},
          {"kb", kb.string()},
          {"split_seed", split_seed},
          {"min_count", min_count}};
}

DataConfig DataConfig::from_json(const nlohmann::json& j, const fs::path& base_dir) {
  DataConfig c;
  c.corpus = resolve(j.at("corpus").get<std::string>(), base_dir);
  c.ontology = resolve(j.at("ontology").get<std::string>(), base_dir);
  c.kb = resolve(j.at("kb").get<std::string>(), base_dir);
  c.split_seed = j.value("split_seed", c.split_seed);
  c.min_count = j.value("min_count", c.min_count);
  return c;
}

CorpusData load_corpus_data(const DataConfig& config) {
  Ontology ontology = load_ontology(config.ontology);
  KnowledgeBase kb = load_kb(config.kb);
  Delexicaliser delex(ontology, kb);
  CorpusLoad load = load_corpus(config.corpus, ontology, delex);
  CorpusSplit split = split_corpus(load.records, config.split_seed);
  Vocabulary vocab = build_vocab(split.train, config.min_count);
  return CorpusData{std::move(ontology), std::move(kb), std::move(delex), std::move(load), std::move(split),
                    std::move(vocab)};
}

nlohmann::json ExperimentConfig::to_json() const {
  return {{"data", data.to_json()},
          {"latent_size", latent_size},
          {"hidden", hidden},
          {"embed_dim", embed_dim},
          {"max_len", max_len},
          {"tracker", tracker.to_json()},
          {"tracker_training", tracker_train_json(tracker_training)},
          {"nvil", nvil.to_json()},
          {"rl", rl.to_json()},
          {"decode", {{"beam_width", decode.beam_width}, {"max_len", decode.max_len}}},
          {"seed", seed},
          {"output_dir", output_dir.string()}};
}

ExperimentConfig ExperimentConfig::from_json(const nlohmann::json& j, const fs::path& base_dir) {
  ExperimentConfig c;
  c.data = DataConfig::from_json(j.at("data"), base_dir);
  c.latent_size = j.value("latent_size", c.latent_size);
  c.hidden = j.value("hidden", c.hidden);
  c.embed_dim = j.value("embed_dim", c.embed_dim);
  c.max_len = j.value("max_len", c.max_len);
  if (j.contains("tracker")) c.tracker = TrackerConfig::from_json(j["tracker"]);
  if (j.contains("tracker_training")) c.tracker_training = tracker_train_from_json(j["tracker_training"]);
  if (j.contains("nvil")) c.nvil = NvilConfig::from_json(j["nvil"]);
  if (j.contains("rl")) c.rl = RlConfig::from_json(j["rl"]);
  if (j.contains("decode")) {
    c.decode.beam_width = j["decode"].value("beam_width", c.decode.beam_width);
    c.decode.max_len = j["decode"].value("max_len", c.decode.max_len);
  }
  c.seed = j.value("seed", c.seed);
  if (j.contains("output_dir")) c.output_dir = resolve(j["output_dir"].get<std::string>(), base_dir);
  if (c.latent_size < 1) throw std::invalid_argument("latent_size must be positive");
  if (c.decode.beam_width < 1) throw std::invalid_argument("beam_width must be positive");
  return c;
}

ExperimentConfig ExperimentConfig::load(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open config " + path.string());
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw std::runtime_error("config " + path.string() + " is not valid JSON: " + e.what());
  }
  return from_json(j, path.parent_path());
}

void ExperimentConfig::reseed(std::uint64_t master) {
  seed = master;
  tracker_training.seed = master + 1;
  nvil.seed = master + 2;
  rl.seed = master + 3;
}

TrainingOutcome run_training(const ExperimentConfig& config, std::ostream& log) {
  TrainingOutcome outcome;
  const fs::path out_dir = config.output_dir;
  fs::create_directories(out_dir);
  write_json(out_dir / "config.json", config.to_json());

  CorpusData data = load_corpus_data(config.data);
  log << "corpus: " << data.load.records.size() << " dialogues (" << data.load.rejected.size() << " rejected), split "
      << data.split.train.size() << '/' << data.split.valid.size() << '/' << data.split.test.size() << ", vocab "
      << data.vocab.size() << '\n';
  for (const auto& r : data.load.rejected) log << "  rejected " << r.dialogue_id << ": " << r.reason << '\n';
  save_split_manifest(data.split, config.data.split_seed, out_dir / "split.json");
  data.vocab.save(out_dir / "vocab.txt");

  check_annotations(data.split.train, data.ontology);
  check_annotations(data.split.valid, data.ontology);
  BeliefTracker tracker(data.ontology, static_cast<int>(data.vocab.size()), config.tracker,
                        config.tracker_training.seed);
  outcome.tracker = pretrain_trackers(tracker, data.split.train, data.split.valid, data.vocab, config.tracker_training);
  outcome.tracker_valid = tracker_accuracy(tracker, data.split.valid, data.vocab);
  log << "tracker: best epoch " << outcome.tracker.best_epoch << ", valid requestable accuracy "
      << outcome.tracker_valid.requestable << '\n';
  write_json(out_dir / "tracker.json", {{"initial_valid_loss", outcome.tracker.initial_valid_loss},
                                        {"train_loss", outcome.tracker.train_loss},
                                        {"valid_loss", outcome.tracker.valid_loss},
                                        {"best_epoch", outcome.tracker.best_epoch},
                                        {"valid_accuracy", accuracy_json(outcome.tracker_valid)}});

  auto train = build_contexts(data.split.train, tracker, data.kb, data.vocab);
  const auto valid = build_contexts(data.split.valid, tracker, data.kb, data.vocab);
  const auto test = build_contexts(data.split.test, tracker, data.kb, data.vocab);
  outcome.labels = cluster_responses(data.split.train, config.latent_size);
  apply_labels(train, outcome.labels);
  log << "labels: " << outcome.labels.labeled << '/' << outcome.labels.total << " training turns labeled\n";
  write_json(out_dir / "labels.json", clusters_json(outcome.labels, 20));

  LidmConfig mc;
  mc.vocab_size = static_cast<int>(data.vocab.size());
  mc.bos = data.vocab.bos();
  mc.eos = data.vocab.eos();
  mc.belief_dim = static_cast<int>(BeliefState::initial(data.ontology).dim());
  mc.latent_size = config.latent_size;
  mc.embed_dim = config.embed_dim;
  mc.hidden = config.hidden;
  mc.max_len = config.max_len;
  LidmModel model(mc, config.seed);

  std::ofstream csv(out_dir / "epochs.csv");
  write_epoch_csv_header(csv);
  NvilTrainer trainer(model, config.nvil);
  outcome.epochs = trainer.fit(train, valid, [&](const EpochStats& s) {
    write_epoch_csv_row(csv, s);
    csv.flush();
    log << "epoch " << s.epoch << ": L'=" << s.objective << " valid_bound=" << s.valid_bound << " KL=" << s.kl
        << '\n';
  });

  Agent agent{data.ontology, data.kb,       data.vocab, data.delex, tracker, model,
              "LIDM I=" + std::to_string(config.latent_size),      config.seed,
              {{"experiment", config.to_json()}, {"labeled_fraction", outcome.labels.labeled_fraction()}}};
  outcome.checkpoint = out_dir / "lidm.ckpt";
  save_checkpoint(outcome.checkpoint, agent);

  const EvalReport truth = evaluate_ground_truth(reference_contexts(data.split.test, data.kb), data.kb);
  outcome.test = evaluate_model(model, test, data.kb, data.vocab, config.decode, agent.tag);
  write_json(out_dir / "eval_test.json", {{"ground_truth", truth.to_json()}, {"model", outcome.test.to_json()}});
  std::ofstream(out_dir / "eval_table.txt") << render_table({truth, outcome.test});
  log << render_table({truth, outcome.test});
  return outcome;
}

AgentData load_agent_data(const Agent& agent, const std::optional<DataConfig>& data_override) {
  DataConfig dc;
  if (data_override) {
    dc = *data_override;
  } else {
    if (!agent.training.contains("experiment")) {
      throw std::runtime_error("checkpoint does not record its corpus; pass the data paths explicitly");
    }
    dc = DataConfig::from_json(agent.training["experiment"].at("data"));
  }
  AgentData out{load_corpus_data(dc), {}, {}, {}};
  check_vocab_hash(agent.vocab.hash(), out.data.vocab);
  out.train = build_contexts(out.data.split.train, agent.tracker, agent.kb, agent.vocab);
  out.valid = build_contexts(out.data.split.valid, agent.tracker, agent.kb, agent.vocab);
  out.test = build_contexts(out.data.split.test, agent.tracker, agent.kb, agent.vocab);
  apply_labels(out.train, cluster_responses(out.data.split.train, agent.model.config().latent_size));
  return out;
}

RlOutcome run_finetune(const fs::path& checkpoint, const RlConfig& config, const fs::path& output,
                       const std::optional<DataConfig>& data_override, std::ostream& log) {
  RlOutcome outcome;
  Agent agent = load_checkpoint(checkpoint);
  const AgentData data = load_agent_data(agent, data_override);
  DecodeOptions decode;
  if (agent.training.contains("experiment") && agent.training["experiment"].contains("decode")) {
    const auto& d = agent.training["experiment"]["decode"];
    decode.beam_width = d.value("beam_width", decode.beam_width);
    decode.max_len = d.value("max_len", decode.max_len);
  }

  outcome.before = evaluate_model(agent.model, data.test, agent.kb, agent.vocab, decode, agent.tag);
  const fs::path out_dir = output.has_parent_path() ? output.parent_path() : fs::path(".");
  fs::create_directories(out_dir);
  std::ofstream csv(out_dir / "rl.csv");
  write_rl_csv_header(csv);
  RlTrainer trainer(agent.model, agent.kb, agent.vocab, config);
  outcome.epochs = trainer.fit(data.train, data.valid, decode, [&](const RlEpochStats& s) {
    write_rl_csv_row(csv, s);
    csv.flush();
    log << "rl epoch " << s.epoch << ": reward=" << s.mean_reward << " success_train=" << s.success_train
        << " success_valid=" << s.success_valid << '\n';
  });

  agent.tag += "+RL";
  agent.training["rl"] = config.to_json();
  outcome.after = evaluate_model(agent.model, data.test, agent.kb, agent.vocab, decode, agent.tag);
  outcome.checkpoint = output;
  save_checkpoint(output, agent);
  write_json(out_dir / "eval_rl.json", {{"before", outcome.before.to_json()}, {"after", outcome.after.to_json()}});
  log << render_table({outcome.before, outcome.after});
  return outcome;
}

}  // namespace lidm
