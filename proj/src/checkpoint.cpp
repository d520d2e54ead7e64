#include "lidm/checkpoint.hpp"

#include <cstring>
#include <fstream>

namespace lidm {

namespace {

constexpr char kMagic[8] = {'L', 'I', 'D', 'M', 'C', 'K', 'P', 'T'};

template <class T>
void put(std::ostream& out, T v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof v);
}

void put_string(std::ostream& out, const std::string& s) {
  put<std::uint32_t>(out, static_cast<std::uint32_t>(s.size()));
  out.write(s.data(), static_cast<std::streamsize>(s.size()));
}

template <class T>
T get(std::istream& in) {
  T v{};
  in.read(reinterpret_cast<char*>(&v), sizeof v);
  if (!in) throw CheckpointError("checkpoint truncated");
  return v;
}

std::string get_string(std::istream& in, std::size_t limit = 1u << 20) {
  const auto n = get<std::uint32_t>(in);
  if (n > limit) throw CheckpointError("checkpoint corrupt: implausible string length");
  std::string s(n, '\0');
  in.read(s.data(), n);
  if (!in) throw CheckpointError("checkpoint truncated");
  return s;
}

void put_params(std::ostream& out, const ParamStore& store) {
  for (const auto& p : store) {
    put_string(out, p->name);
    put_string(out, std::string(to_string(p->group)));
    put<std::uint8_t>(out, p->policy ? 1 : 0);
    put<std::int64_t>(out, p->value.rows());
    put<std::int64_t>(out, p->value.cols());
    out.write(reinterpret_cast<const char*>(p->value.data()),
              static_cast<std::streamsize>(sizeof(double) * static_cast<std::size_t>(p->value.size())));
  }
}

std::ifstream open_checked(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw CheckpointError("cannot open checkpoint " + path.string());
  char magic[8];
  in.read(magic, sizeof magic);
  if (!in || std::memcmp(magic, kMagic, sizeof magic) != 0) {
    throw CheckpointError(path.string() + " is not a model checkpoint");
  }
  const auto version = get<std::uint32_t>(in);
  if (version > kCheckpointVersion) {
    throw CheckpointError("checkpoint version " + std::to_string(version) + " is newer than supported (" +
                          std::to_string(kCheckpointVersion) + ")");
  }
  return in;
}

nlohmann::json read_manifest_from(std::istream& in) {
  const auto len = get<std::uint64_t>(in);
  if (len > (1ull << 32)) throw CheckpointError("checkpoint corrupt: implausible manifest length");
  std::string text(len, '\0');
  in.read(text.data(), static_cast<std::streamsize>(len));
  if (!in) throw CheckpointError("checkpoint truncated");
  try {
    return nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw CheckpointError(std::string("checkpoint manifest is not valid JSON: ") + e.what());
  }
}

}  // namespace

void save_checkpoint(const std::filesystem::path& path, const Agent& agent) {
  nlohmann::json manifest{{"version", kCheckpointVersion},
                          {"tag", agent.tag},
                          {"seed", agent.seed},
                          {"model_config", agent.model.config().to_json()},
                          {"tracker_config", agent.tracker.config().to_json()},
                          {"vocab", agent.vocab.tokens()},
                          {"vocab_hash", agent.vocab.hash()},
                          {"ontology", agent.ontology.to_json()},
                          {"kb", agent.kb.to_json()},
                          {"training", agent.training}};
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  const auto tmp = std::filesystem::path(path.string() + ".tmp");
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw CheckpointError("cannot write checkpoint " + tmp.string());
    out.write(kMagic, sizeof kMagic);
    put<std::uint32_t>(out, kCheckpointVersion);
    const std::string text = manifest.dump();
    put<std::uint64_t>(out, text.size());
    out.write(text.data(), static_cast<std::streamsize>(text.size()));
    put<std::uint64_t>(out, agent.model.params().size() + agent.tracker.params().size());
    put_params(out, agent.model.params());
    put_params(out, agent.tracker.params());
    if (!out) throw CheckpointError("failed writing checkpoint " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

nlohmann::json read_manifest(const std::filesystem::path& path) {
  auto in = open_checked(path);
  return read_manifest_from(in);
}

Agent load_checkpoint(const std::filesystem::path& path) {
  auto in = open_checked(path);
  const nlohmann::json manifest = read_manifest_from(in);
  const auto count = get<std::uint64_t>(in);
  ParamStore model_params;
  ParamStore tracker_params;
  for (std::uint64_t i = 0; i < count; ++i) {
    std::string name = get_string(in);
    const std::string group = get_string(in);
    const bool policy = get<std::uint8_t>(in) != 0;
    const auto rows = get<std::int64_t>(in);
    const auto cols = get<std::int64_t>(in);
    if (rows < 0 || cols < 0 || rows * cols > (1ll << 28)) throw CheckpointError("checkpoint corrupt: bad shape");
    Matrix m(rows, cols);
    in.read(reinterpret_cast<char*>(m.data()), static_cast<std::streamsize>(sizeof(double) * m.size()));
    if (!in) throw CheckpointError("checkpoint truncated in array " + name);
    ParamGroup g;
    try {
      g = param_group_from_string(group);
    } catch (const std::exception&) {
      throw CheckpointError("checkpoint corrupt: unknown parameter group '" + group + "'");
    }
    ParamStore& dest = name.rfind("tracker/", 0) == 0 ? tracker_params : model_params;
    dest.add(std::move(name), g, std::move(m), policy);
  }

  try {
    Ontology ontology = Ontology::from_json(manifest.at("ontology"));
    KnowledgeBase kb = KnowledgeBase::from_json(manifest.at("kb"));
    const auto tokens = manifest.at("vocab").get<std::vector<std::string>>();
    Vocabulary vocab = Vocabulary::from_tokens(tokens);
    if (vocab.hash() != manifest.at("vocab_hash").get<std::uint64_t>()) {
      throw CheckpointError("checkpoint corrupt: vocabulary hash does not match its token list");
    }
    Delexicaliser delex(ontology, kb);
    BeliefTracker tracker(ontology, TrackerConfig::from_json(manifest.at("tracker_config")), std::move(tracker_params));
    LidmModel model(LidmConfig::from_json(manifest.at("model_config")), std::move(model_params));
    return Agent{std::move(ontology),
                 std::move(kb),
                 std::move(vocab),
                 std::move(delex),
                 std::move(tracker),
                 std::move(model),
                 manifest.value("tag", std::string()),
                 manifest.value("seed", std::uint64_t{0}),
                 manifest.value("training", nlohmann::json::object())};
  } catch (const CheckpointError&) {
    throw;
  } catch (const std::exception& e) {
    throw CheckpointError(std::string("checkpoint corrupt: ") + e.what());
  }
}

}  // namespace lidm
