#include "lidm/checkpoint.hpp"
#include "lidm/eval.hpp"
#include "lidm/experiment.hpp"
#include "lidm/nvil.hpp"
#include "lidm/service.hpp"

#include <CLI11.hpp>
#include <httplib.h>
#include <nlohmann/json.hpp>

#include <chrono>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <sstream>

using namespace lidm;
namespace fs = std::filesystem;

namespace {

// Data location either from an experiment config or from explicit paths.
struct DataArgs {
  std::string config;
  std::string corpus;
  std::string ontology;
  std::string kb;
  std::uint64_t split_seed = 1;
  int min_count = 2;

  void add(CLI::App* app) {
    app->add_option("--config", config, "experiment config (its data section is used)");
    app->add_option("--corpus", corpus, "dialogue corpus JSON");
    app->add_option("--ontology", ontology, "ontology JSON");
    app->add_option("--kb", kb, "venue database JSON");
    app->add_option("--split-seed", split_seed);
    app->add_option("--min-count", min_count);
  }
  bool given() const { return !config.empty() || !corpus.empty(); }
  DataConfig resolve() const {
    if (!config.empty()) return ExperimentConfig::load(config).data;
    if (corpus.empty() || ontology.empty() || kb.empty()) {
      throw CLI::ValidationError("data", "need --config or all of --corpus, --ontology, --kb");
    }
    DataConfig d;
    d.corpus = corpus;
    d.ontology = ontology;
    d.kb = kb;
    d.split_seed = split_seed;
    d.min_count = min_count;
    return d;
  }
};

void print_json(const fs::path& path, const nlohmann::json& j) {
  if (path.empty()) return;
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << j.dump(2) << '\n';
}

int cmd_train(const std::string& config_path, const std::string& output_dir) {
  ExperimentConfig config = ExperimentConfig::load(config_path);
  config.reseed(seed_from_env(config.seed));
  if (!output_dir.empty()) config.output_dir = output_dir;
  const auto t0 = std::chrono::steady_clock::now();
  const TrainingOutcome out = run_training(config, std::cout);
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  std::cout << "checkpoint " << out.checkpoint.string() << " (" << std::fixed << std::setprecision(0) << secs
            << " s)\n";
  return 0;
}

int cmd_label(const DataArgs& args, int latent_size, const std::string& split, const std::string& output) {
  const CorpusData data = load_corpus_data(args.resolve());
  const std::vector<DialogueRecord>* records = &data.load.records;
  if (split == "train") records = &data.split.train;
  const LabeledSet labels = cluster_responses(*records, latent_size);
  std::cout << "labeled " << labels.labeled << " of " << labels.total << " turns (" << std::fixed
            << std::setprecision(1) << 100.0 * labels.labeled_fraction() << "%), " << labels.clusters.size()
            << " clusters\n";
  nlohmann::json rows = nlohmann::json::array();
  for (std::size_t i = 0; i < labels.clusters.size() && i < static_cast<std::size_t>(latent_size); ++i) {
    const auto& c = labels.clusters[i];
    std::string words;
    for (const auto& w : c.content) words += (words.empty() ? "" : " ") + w;
    if (i < 10) std::cout << std::setw(4) << i << std::setw(6) << c.size << "  {" << words << "}\n";
    rows.push_back({{"index", i}, {"size", c.size}, {"content", c.content}});
  }
  print_json(output, {{"latent_size", latent_size},
                      {"split", split},
                      {"labeled", labels.labeled},
                      {"total", labels.total},
                      {"labeled_fraction", labels.labeled_fraction()},
                      {"clusters", rows}});
  return 0;
}

int cmd_finetune(const std::string& checkpoint, std::string output, const std::string& config_path, int epochs,
                 const DataArgs& data_args) {
  RlConfig rl;
  if (!config_path.empty()) rl = ExperimentConfig::load(config_path).rl;
  if (epochs >= 0) rl.epochs = epochs;
  rl.seed = seed_from_env(rl.seed);
  if (output.empty()) {
    fs::path p(checkpoint);
    output = (p.parent_path() / (p.stem().string() + "_rl" + p.extension().string())).string();
  }
  std::optional<DataConfig> data;
  if (data_args.given()) data = data_args.resolve();
  const RlOutcome out = run_finetune(checkpoint, rl, output, data, std::cout);
  std::cout << "checkpoint " << out.checkpoint.string() << '\n';
  return 0;
}

int cmd_evaluate(const std::string& checkpoint, const std::string& split, bool ground_truth, const std::string& output,
                 const DataArgs& data_args) {
  const auto t0 = std::chrono::steady_clock::now();
  std::vector<EvalReport> reports;
  if (ground_truth && checkpoint.empty()) {
    const CorpusData data = load_corpus_data(data_args.resolve());
    const auto& records = split == "valid" ? data.split.valid : split == "train" ? data.split.train : data.split.test;
    const auto contexts = reference_contexts(records, data.kb);
    reports.push_back(evaluate_ground_truth(contexts, data.kb));
  } else {
    if (checkpoint.empty()) throw CLI::ValidationError("--checkpoint", "required unless --ground-truth");
    const Agent agent = load_checkpoint(checkpoint);
    std::optional<DataConfig> data;
    if (data_args.given()) data = data_args.resolve();
    const AgentData ad = load_agent_data(agent, data);
    const auto& contexts = split == "valid" ? ad.valid : split == "train" ? ad.train : ad.test;
    DecodeOptions decode;
    if (agent.training.contains("experiment") && agent.training["experiment"].contains("decode")) {
      decode.beam_width = agent.training["experiment"]["decode"].value("beam_width", decode.beam_width);
      decode.max_len = agent.training["experiment"]["decode"].value("max_len", decode.max_len);
    }
    if (ground_truth) {
      const auto& records =
          split == "valid" ? ad.data.split.valid : split == "train" ? ad.data.split.train : ad.data.split.test;
      reports.push_back(evaluate_ground_truth(reference_contexts(records, agent.kb), agent.kb));
    }
    reports.push_back(evaluate_model(agent.model, contexts, agent.kb, agent.vocab, decode, agent.tag));
  }
  std::cout << render_table(reports);
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  std::cout << "split " << split << ", " << reports.front().dialogues.size() << " dialogues, " << std::fixed
            << std::setprecision(1) << secs << " s\n";
  nlohmann::json j = nlohmann::json::array();
  for (const auto& r : reports) j.push_back(r.to_json());
  print_json(output, j);
  return 0;
}

int cmd_serve(const std::string& checkpoint, const std::string& host, int port, const std::string& log_path,
              const std::string& mode) {
  const Agent agent = load_checkpoint(checkpoint);
  ChatOptions options;
  options.mode = chat_mode_from_string(mode);
  std::optional<fs::path> log;
  if (!log_path.empty()) log = log_path;
  SessionManager sessions(agent, seed_from_env(agent.seed), std::chrono::minutes(30), log);
  httplib::Server server;
  register_routes(server, sessions, options);
  if (!server.bind_to_port(host, port)) {
    std::cerr << "cannot bind " << host << ':' << port << " (port busy?)\n";
    return 3;
  }
  std::cout << "serving " << agent.tag << " on http://" << host << ':' << port << std::endl;
  server.listen_after_bind();
  return 0;
}

void print_diagnostics(const ChatResult& r) {
  for (const auto& row : r.diagnostics.top) {
    std::cout << "  (" << std::setw(3) << row.intention << ' ' << std::fixed << std::setprecision(2) << row.prob
              << ") " << row.decoded << (row.intention == r.diagnostics.chosen ? "  <" : "") << '\n';
  }
  std::cout << "  db matches: " << r.diagnostics.db_matches << '\n';
}

int cmd_chat(const std::string& checkpoint, const std::string& mode, bool show) {
  const Agent agent = load_checkpoint(checkpoint);
  ChatOptions options;
  options.mode = chat_mode_from_string(mode);
  SessionManager sessions(agent, seed_from_env(agent.seed));
  std::string id = sessions.create();
  std::cout << agent.tag << " ready. Commands: /force N <text>, /mode interactive|deterministic, /state, /reset, /quit\n";
  std::string line;
  while (std::cout << "> " << std::flush, std::getline(std::cin, line)) {
    if (line.empty()) continue;
    std::optional<int> forced;
    if (line == "/quit" || line == "/exit") break;
    if (line == "/reset") {
      sessions.erase(id);
      id = sessions.create();
      std::cout << "new session\n";
      continue;
    }
    if (line == "/state") {
      auto s = sessions.get(id);
      std::lock_guard lock(s->mutex);
      std::cout << session_view(agent, *s).dump(2) << '\n';
      continue;
    }
    if (line.rfind("/mode ", 0) == 0) {
      try {
        options.mode = chat_mode_from_string(line.substr(6));
      } catch (const std::exception& e) {
        std::cout << e.what() << '\n';
      }
      continue;
    }
    if (line.rfind("/force ", 0) == 0) {
      std::istringstream in(line.substr(7));
      int z = 0;
      if (!(in >> z)) {
        std::cout << "usage: /force N <text>\n";
        continue;
      }
      forced = z;
      std::getline(in >> std::ws, line);
    }
    try {
      const ChatResult r = sessions.message(id, line, forced, options);
      std::cout << r.response << '\n';
      if (show) print_diagnostics(r);
    } catch (const std::exception& e) {
      std::cout << "error: " << e.what() << '\n';
    }
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Latent intention dialogue model"};
  app.require_subcommand(1);

  std::string config, output, checkpoint, split = "test", host = "127.0.0.1", log_path, mode = "interactive";
  int latent_size = 50, epochs = -1, port = 8080;
  bool ground_truth = false, quiet = false;
  DataArgs data;

  auto* train = app.add_subcommand("train", "train trackers and the LIDM from a config file");
  train->add_option("--config", config, "experiment config JSON")->required()->check(CLI::ExistingFile);
  train->add_option("--output-dir", output, "overrides output_dir of the config");

  auto* label = app.add_subcommand("label", "cluster responses and report labeled fractions");
  label->add_option("--latent-size,-I", latent_size, "number of intentions")->required()->check(CLI::PositiveNumber);
  label->add_option("--split", split, "all or train")->check(CLI::IsMember({"all", "train"}));
  label->add_option("--output", output, "JSON summary");
  data.add(label);

  auto* rl = app.add_subcommand("finetune-rl", "policy-gradient fine-tuning of a trained checkpoint");
  rl->add_option("--checkpoint", checkpoint)->required()->check(CLI::ExistingFile);
  rl->add_option("--epochs", epochs)->check(CLI::NonNegativeNumber);
  rl->add_option("--output", output, "checkpoint to write (default <name>_rl.ckpt)");
  rl->add_option("--rl-config", config, "experiment config whose rl section is used");
  DataArgs rl_data;
  rl_data.add(rl);

  auto* eval = app.add_subcommand("evaluate", "corpus evaluation: success rate and BLEU");
  eval->add_option("--checkpoint", checkpoint)->check(CLI::ExistingFile);
  eval->add_option("--split", split)->check(CLI::IsMember({"train", "valid", "test"}));
  eval->add_flag("--ground-truth", ground_truth, "score the human responses");
  eval->add_option("--output", output, "JSON report");
  DataArgs eval_data;
  eval_data.add(eval);

  auto* serve = app.add_subcommand("serve", "HTTP chat service");
  serve->add_option("--checkpoint", checkpoint)->required()->check(CLI::ExistingFile);
  serve->add_option("--port", port)->check(CLI::Range(1, 65535));
  serve->add_option("--host", host);
  serve->add_option("--transcript-log", log_path, "append-only JSON lines log");
  serve->add_option("--mode", mode)->check(CLI::IsMember({"interactive", "deterministic"}));

  auto* chat = app.add_subcommand("chat", "terminal chat");
  chat->add_option("--checkpoint", checkpoint)->required()->check(CLI::ExistingFile);
  chat->add_option("--mode", mode)->check(CLI::IsMember({"interactive", "deterministic"}));
  chat->add_flag("--quiet", quiet, "hide the intention list");

  CLI11_PARSE(app, argc, argv);
  try {
    if (*train) return cmd_train(config, output);
    if (*label) return cmd_label(data, latent_size, split == "test" ? "all" : split, output);
    if (*rl) return cmd_finetune(checkpoint, output, config, epochs, rl_data);
    if (*eval) return cmd_evaluate(checkpoint, split, ground_truth, output, eval_data);
    if (*serve) return cmd_serve(checkpoint, host, port, log_path, mode);
    if (*chat) return cmd_chat(checkpoint, mode, !quiet);
  } catch (const CLI::Error& e) {
    return app.exit(e);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
