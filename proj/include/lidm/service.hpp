#pragma once

#include "lidm/checkpoint.hpp"

#include <nlohmann/json.hpp>

#include <chrono>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

namespace httplib {
class Server;
}

namespace lidm {

enum class ChatMode { interactive, deterministic };

ChatMode chat_mode_from_string(std::string_view s);
std::string_view to_string(ChatMode mode);

struct ChatOptions {
  ChatMode mode = ChatMode::interactive;
  int top_k = 5;
  int beam_width = 10;
  int max_len = 40;
};

struct IntentionRow {
  int intention = 0;
  double prob = 0.0;
  std::string decoded;  // surface form
  std::string delex;
};

struct TurnDiagnostics {
  std::vector<IntentionRow> top;  // probabilities descending
  int chosen = 0;
  bool forced = false;
  int db_matches = 0;
};

struct TranscriptEntry {
  std::string speaker;  // "user" or "machine"
  std::string text;
  std::optional<int> intention;
};

struct Session {
  std::string id;
  BeliefState belief;
  Tokens last_response;  // delexicalised
  LexicalMap last_response_map;
  std::optional<std::size_t> offered;  // KB index
  int turns = 0;
  std::vector<TranscriptEntry> transcript;
  Rng rng;
  std::chrono::steady_clock::time_point last_active;
  std::mutex mutex;
};

struct ChatResult {
  std::string response;
  std::string delex_response;
  TurnDiagnostics diagnostics;
  std::vector<std::string> unresolved;  // placeholders left verbatim
  Query query;
  nlohmann::json belief;  // summary after the turn
};

class UnknownSession : public std::runtime_error {
 public:
  explicit UnknownSession(const std::string& id) : std::runtime_error("unknown session " + id) {}
};

class InvalidRequest : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Runs one turn against a session; the caller holds the session lock.
ChatResult chat_turn(const Agent& agent, Session& session, const std::string& text,
                     std::optional<int> forced_intention, const ChatOptions& options);

nlohmann::json belief_summary(const BeliefState& belief, const Ontology& ontology);
nlohmann::json session_view(const Agent& agent, const Session& session);
nlohmann::json chat_result_json(const ChatResult& result);

class SessionManager {
 public:
  SessionManager(const Agent& agent, std::uint64_t seed, std::chrono::seconds idle_timeout = std::chrono::minutes(30),
                 std::optional<std::filesystem::path> transcript_log = std::nullopt);

  std::string create();
  std::shared_ptr<Session> get(const std::string& id);
  bool erase(const std::string& id);
  std::size_t size();
  // Drops sessions idle for longer than the timeout; returns how many were removed.
  std::size_t expire();

  // Locks the session for the duration of the turn and appends the turn to the log.
  ChatResult message(const std::string& id, const std::string& text, std::optional<int> forced_intention,
                     const ChatOptions& options);

  const Agent& agent() const { return *agent_; }

 private:
  void log_turn(const Session& session, const std::string& text, const ChatResult& result);

  const Agent* agent_;
  std::uint64_t seed_;
  std::chrono::seconds timeout_;
  std::mutex mutex_;
  std::map<std::string, std::shared_ptr<Session>> sessions_;
  std::uint64_t counter_ = 0;
  Rng id_rng_;
  std::mutex log_mutex_;
  std::optional<std::ofstream> log_;
};

// LIDM_SEED when set, otherwise the fallback.
std::uint64_t seed_from_env(std::uint64_t fallback);

void register_routes(httplib::Server& server, SessionManager& sessions, const ChatOptions& options);

}  // namespace lidm
