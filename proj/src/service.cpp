#include "lidm/service.hpp"

#include "lidm/eval.hpp"

#include <httplib.h>

#include <cstdio>
#include <cstdlib>
#include <random>

namespace lidm {

ChatMode chat_mode_from_string(std::string_view s) {
  if (s == "interactive") return ChatMode::interactive;
  if (s == "deterministic") return ChatMode::deterministic;
  throw InvalidRequest("unknown chat mode '" + std::string(s) + "' (interactive or deterministic)");
}

std::string_view to_string(ChatMode mode) {
  return mode == ChatMode::interactive ? "interactive" : "deterministic";
}

namespace {

// Substitutions made from the offered entity, so the tracker sees what the machine said.
LexicalMap machine_lexical_map(const Tokens& delex, const KbRecord* entity) {
  LexicalMap map;
  if (!entity) return map;
  for (const auto& tok : delex) {
    const auto slot = placeholder_slot(tok);
    if (!slot) continue;
    if (auto v = entity->field(*slot)) map.push_back({tok, *slot, *v, *v});
  }
  return map;
}

}  // namespace

ChatResult chat_turn(const Agent& agent, Session& session, const std::string& text,
                     std::optional<int> forced_intention, const ChatOptions& options) {
  const int latent = agent.model.config().latent_size;
  if (forced_intention && (*forced_intention < 0 || *forced_intention >= latent)) {
    throw InvalidRequest("forced_intention " + std::to_string(*forced_intention) + " outside [0, " +
                         std::to_string(latent) + ")");
  }
  const DelexResult user = agent.delex.delexicalise(tokenize(text));
  TrackerTurn tt;
  tt.user = agent.vocab.encode(user.tokens);
  tt.user_map = user.lexical_map;
  tt.prev_response = agent.vocab.encode(session.last_response);
  tt.prev_response_map = session.last_response_map;
  BeliefState belief = agent.tracker.track(tt, session.belief);

  ChatResult result;
  result.query = form_query(belief, agent.ontology);
  const SearchResult found = agent.kb.search(result.query);
  const Vector match = match_bins(found.count);
  const Vector state = agent.model.dialogue_state(tt.user, belief.concat(), match);
  const IntentionDistribution pi = agent.model.policy_distribution(state);

  const int k = std::clamp(options.top_k, 1, latent);
  const std::vector<int> top = pi.top_k(k);
  int chosen = top.front();
  if (forced_intention) {
    chosen = *forced_intention;
  } else if (options.mode == ChatMode::interactive) {
    Vector p(static_cast<Eigen::Index>(top.size()));
    for (std::size_t i = 0; i < top.size(); ++i) p(static_cast<Eigen::Index>(i)) = pi.probs(top[i]);
    chosen = top[static_cast<std::size_t>(sample_index(p / p.sum(), session.rng))];
  }

  const KbRecord* entity = nullptr;
  if (!found.indices.empty()) {
    entity = &agent.kb.at(found.indices.front());
  } else if (session.offered) {
    entity = &agent.kb.at(*session.offered);
  }
  auto decode = [&](int z, std::vector<std::string>& unresolved) {
    const DecodeResult r = agent.model.beam_decode(z, state, options.beam_width, options.max_len);
    Tokens delex = agent.vocab.decode(r.tokens);
    Tokens surface = relexicalise_lenient(delex, entity, user.lexical_map, unresolved);
    return std::pair{std::move(delex), std::move(surface)};
  };

  Tokens chosen_delex;
  for (int z : top) {
    std::vector<std::string> unresolved;
    auto [delex, surface] = decode(z, unresolved);
    if (z == chosen) {
      chosen_delex = delex;
      result.response = join(surface);
      result.unresolved = unresolved;
    }
    result.diagnostics.top.push_back({z, pi.probs(z), join(surface), join(delex)});
  }
  if (std::find(top.begin(), top.end(), chosen) == top.end()) {
    auto [delex, surface] = decode(chosen, result.unresolved);
    chosen_delex = delex;
    result.response = join(surface);
  }
  result.delex_response = join(chosen_delex);
  result.diagnostics.chosen = chosen;
  result.diagnostics.forced = forced_intention.has_value();
  result.diagnostics.db_matches = found.count;

  const std::string name_ph = placeholder("name");
  if (entity && std::find(chosen_delex.begin(), chosen_delex.end(), name_ph) != chosen_delex.end()) {
    session.offered = found.indices.empty() ? session.offered : std::optional(found.indices.front());
  }
  result.belief = belief_summary(belief, agent.ontology);
  session.belief = std::move(belief);
  session.last_response_map = machine_lexical_map(chosen_delex, entity);
  session.last_response = std::move(chosen_delex);
  ++session.turns;
  session.transcript.push_back({"user", text, std::nullopt});
  session.transcript.push_back({"machine", result.response, chosen});
  return result;
}

nlohmann::json belief_summary(const BeliefState& belief, const Ontology& ontology) {
  nlohmann::json slots = nlohmann::json::object();
  for (std::size_t s = 0; s < ontology.informable_slots.size(); ++s) {
    const auto& slot = ontology.informable_slots[s];
    const auto values = ontology.belief_values(slot);
    Eigen::Index best = 0;
    belief.informable[s].maxCoeff(&best);
    slots[slot] = {{"value", values[static_cast<std::size_t>(best)]}, {"prob", belief.informable[s](best)}};
  }
  nlohmann::json requested = nlohmann::json::array();
  for (std::size_t r = 0; r < ontology.requestable_slots.size(); ++r) {
    if (belief.requestable(static_cast<Eigen::Index>(r)) > 0.5) requested.push_back(ontology.requestable_slots[r]);
  }
  return {{"informable", slots}, {"requested", requested}};
}

nlohmann::json session_view(const Agent& agent, const Session& session) {
  nlohmann::json transcript = nlohmann::json::array();
  for (const auto& e : session.transcript) {
    nlohmann::json j{{"speaker", e.speaker}, {"text", e.text}};
    if (e.intention) j["intention"] = *e.intention;
    transcript.push_back(std::move(j));
  }
  return {{"session_id", session.id},
          {"turns", session.turns},
          {"belief", belief_summary(session.belief, agent.ontology)},
          {"last_response", join(session.last_response)},
          {"offered_entity",
           session.offered ? nlohmann::json(agent.kb.at(*session.offered).name) : nlohmann::json(nullptr)},
          {"transcript", std::move(transcript)}};
}

nlohmann::json chat_result_json(const ChatResult& result) {
  nlohmann::json diag = nlohmann::json::array();
  for (const auto& row : result.diagnostics.top) {
    diag.push_back({{"intention", row.intention}, {"prob", row.prob}, {"decoded", row.decoded}, {"delex", row.delex}});
  }
  return {{"response", result.response},
          {"delex_response", result.delex_response},
          {"diagnostics", std::move(diag)},
          {"chosen_intention", result.diagnostics.chosen},
          {"forced", result.diagnostics.forced},
          {"db_matches", result.diagnostics.db_matches},
          {"unresolved", result.unresolved},
          {"belief", result.belief}};
}

SessionManager::SessionManager(const Agent& agent, std::uint64_t seed, std::chrono::seconds idle_timeout,
                               std::optional<std::filesystem::path> transcript_log)
    : agent_(&agent), seed_(seed), timeout_(idle_timeout), id_rng_(std::random_device{}()) {
  if (transcript_log) {
    if (transcript_log->has_parent_path()) std::filesystem::create_directories(transcript_log->parent_path());
    log_.emplace(*transcript_log, std::ios::app);
    if (!*log_) throw std::runtime_error("cannot open transcript log " + transcript_log->string());
  }
}

std::string SessionManager::create() {
  expire();
  auto s = std::make_shared<Session>();
  s->belief = BeliefState::initial(agent_->ontology);
  s->rng.seed(seed_);
  s->last_active = std::chrono::steady_clock::now();
  std::lock_guard lock(mutex_);
  char buf[40];
  std::snprintf(buf, sizeof buf, "%016llx%04llx", static_cast<unsigned long long>(id_rng_()),
                static_cast<unsigned long long>(++counter_ & 0xffff));
  s->id = buf;
  sessions_[s->id] = s;
  return s->id;
}

std::shared_ptr<Session> SessionManager::get(const std::string& id) {
  std::lock_guard lock(mutex_);
  auto it = sessions_.find(id);
  if (it == sessions_.end()) throw UnknownSession(id);
  return it->second;
}

bool SessionManager::erase(const std::string& id) {
  std::lock_guard lock(mutex_);
  return sessions_.erase(id) > 0;
}

std::size_t SessionManager::size() {
  std::lock_guard lock(mutex_);
  return sessions_.size();
}

std::size_t SessionManager::expire() {
  const auto now = std::chrono::steady_clock::now();
  std::lock_guard lock(mutex_);
  std::size_t removed = 0;
  for (auto it = sessions_.begin(); it != sessions_.end();) {
    std::unique_lock sl(it->second->mutex, std::try_to_lock);
    // A session busy with a turn is active by definition.
    if (sl.owns_lock() && now - it->second->last_active > timeout_) {
      sl.unlock();
      it = sessions_.erase(it);
      ++removed;
    } else {
      ++it;
    }
  }
  return removed;
}

ChatResult SessionManager::message(const std::string& id, const std::string& text,
                                   std::optional<int> forced_intention, const ChatOptions& options) {
  expire();
  auto session = get(id);
  std::lock_guard lock(session->mutex);
  ChatResult r = chat_turn(*agent_, *session, text, forced_intention, options);
  session->last_active = std::chrono::steady_clock::now();
  log_turn(*session, text, r);
  return r;
}

void SessionManager::log_turn(const Session& session, const std::string& text, const ChatResult& result) {
  if (!log_) return;
  nlohmann::json line{{"session_id", session.id},
                      {"turn", session.turns},
                      {"user", text},
                      {"response", result.response},
                      {"intention", result.diagnostics.chosen},
                      {"forced", result.diagnostics.forced},
                      {"db_matches", result.diagnostics.db_matches}};
  std::lock_guard lock(log_mutex_);
  *log_ << line.dump() << '\n';
  log_->flush();
}

std::uint64_t seed_from_env(std::uint64_t fallback) {
  const char* v = std::getenv("LIDM_SEED");
  if (!v || !*v) return fallback;
  try {
    return std::stoull(v);
  } catch (const std::exception&) {
    throw std::invalid_argument(std::string("LIDM_SEED must be an unsigned integer, got '") + v + "'");
  }
}

namespace {

void send_json(httplib::Response& res, int status, const nlohmann::json& body) {
  res.status = status;
  res.set_content(body.dump(), "application/json");
}

void send_error(httplib::Response& res, int status, const std::string& message) {
  send_json(res, status, {{"error", message}});
}

}  // namespace

void register_routes(httplib::Server& server, SessionManager& sessions, const ChatOptions& options) {
  server.set_default_headers({{"Access-Control-Allow-Origin", "*"}});
  server.Options(R"(/api/.*)", [](const httplib::Request&, httplib::Response& res) {
    res.set_header("Access-Control-Allow-Methods", "GET, POST, DELETE, OPTIONS");
    res.set_header("Access-Control-Allow-Headers", "Content-Type");
    res.status = 204;
  });

  server.Post("/api/session", [&sessions](const httplib::Request&, httplib::Response& res) {
    const std::string id = sessions.create();
    auto s = sessions.get(id);
    std::lock_guard lock(s->mutex);
    nlohmann::json body = session_view(sessions.agent(), *s);
    send_json(res, 201, body);
  });

  server.Post(R"(/api/session/([^/]+)/message)", [&sessions, options](const httplib::Request& req,
                                                                      httplib::Response& res) {
    const std::string id = req.matches[1];
    nlohmann::json body;
    try {
      body = nlohmann::json::parse(req.body);
    } catch (const nlohmann::json::exception&) {
      return send_error(res, 400, "request body must be JSON");
    }
    if (!body.is_object() || !body.contains("text") || !body["text"].is_string()) {
      return send_error(res, 400, "field 'text' (string) is required");
    }
    const std::string text = body["text"].get<std::string>();
    if (tokenize(text).empty()) return send_error(res, 400, "field 'text' must not be empty");
    std::optional<int> forced;
    if (body.contains("forced_intention") && !body["forced_intention"].is_null()) {
      if (!body["forced_intention"].is_number_integer()) {
        return send_error(res, 400, "field 'forced_intention' must be an integer");
      }
      forced = body["forced_intention"].get<int>();
    }
    ChatOptions opts = options;
    try {
      if (body.contains("mode")) opts.mode = chat_mode_from_string(body["mode"].get<std::string>());
      send_json(res, 200, chat_result_json(sessions.message(id, text, forced, opts)));
    } catch (const UnknownSession& e) {
      send_error(res, 404, e.what());
    } catch (const InvalidRequest& e) {
      send_error(res, 400, e.what());
    } catch (const nlohmann::json::exception& e) {
      send_error(res, 400, e.what());
    }
  });

  server.Get(R"(/api/session/([^/]+)/state)", [&sessions](const httplib::Request& req, httplib::Response& res) {
    try {
      auto s = sessions.get(req.matches[1]);
      std::lock_guard lock(s->mutex);
      send_json(res, 200, session_view(sessions.agent(), *s));
    } catch (const UnknownSession& e) {
      send_error(res, 404, e.what());
    }
  });

  server.Delete(R"(/api/session/([^/]+))", [&sessions](const httplib::Request& req, httplib::Response& res) {
    if (!sessions.erase(req.matches[1])) return send_error(res, 404, "unknown session " + std::string(req.matches[1]));
    send_json(res, 200, {{"deleted", std::string(req.matches[1])}});
  });
}

}  // namespace lidm
