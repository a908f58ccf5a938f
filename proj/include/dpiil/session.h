#ifndef DPIIL_SESSION_H_
#define DPIIL_SESSION_H_

#include <chrono>
#include <cstdint>
#include <memory>
#include <optional>
#include <stdexcept>
#include <string>
#include <utility>
#include <variant>
#include <vector>

#include "dpiil/arena.h"
#include "dpiil/dataset.h"
#include "dpiil/estimators.h"
#include "dpiil/learner.h"
#include "dpiil/oracle.h"
#include "dpiil/riskgate.h"

namespace dpiil {

// ---- Wire messages: one JSON object per line, discriminated by "type". ----

struct StateMsg {
  int t = 0;
  double x = 0.0;
  double y = 0.0;
  ControlMode mode = ControlMode::kAuto;
  double risk = 0.0;
  std::optional<Outcome> outcome;  // set on the terminal state only
  bool clipped = false;            // the previous action was clipped
};
struct RequestInterventionMsg {
  int t = 0;
};
struct ReleaseInterventionMsg {
  int t = 0;
};
struct HumanActionMsg {
  int t = 0;
  double vx = 0.0;
  double vy = 0.0;
};
struct EpisodeEndMsg {
  int episode = 0;
  Outcome outcome = Outcome::kTimeout;
};
struct SessionConfigMsg {
  EnvConfig env;
  double tick_hz = 20.0;
  int episodes = 0;
  bool lockstep = false;
};
struct ProtocolErrorMsg {
  std::string reason;
};

using SessionMessage = std::variant<StateMsg, RequestInterventionMsg, ReleaseInterventionMsg, HumanActionMsg,
                                    EpisodeEndMsg, SessionConfigMsg, ProtocolErrorMsg>;

class ProtocolError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Single line, no trailing newline.
std::string EncodeMessage(const SessionMessage& msg);
// Throws ProtocolError for anything that is not a well-formed message.
SessionMessage DecodeMessage(const std::string& line);
const char* MessageType(const SessionMessage& msg);

// ---- Transport ----

class ChannelClosed : public std::runtime_error {
 public:
  ChannelClosed() : std::runtime_error("peer disconnected") {}
};

// Bidirectional line transport.
class Channel {
 public:
  virtual ~Channel() = default;
  // Throws ChannelClosed when the peer is gone.
  virtual void Send(const std::string& line) = 0;
  // Next line, or nullopt if none arrives within `timeout`. Throws
  // ChannelClosed once the peer is gone and nothing is buffered.
  virtual std::optional<std::string> Receive(std::chrono::milliseconds timeout) = 0;
  virtual void Close() = 0;
};

// Two connected in-process endpoints.
std::pair<std::unique_ptr<Channel>, std::unique_ptr<Channel>> MakeChannelPair();

// Loopback TCP listener; port 0 picks a free port.
class TcpListener {
 public:
  explicit TcpListener(int port);
  ~TcpListener();
  TcpListener(const TcpListener&) = delete;
  TcpListener& operator=(const TcpListener&) = delete;

  int port() const { return port_; }
  // nullptr if no client connects in time.
  std::unique_ptr<Channel> Accept(std::chrono::milliseconds timeout);

 private:
  int fd_ = -1;
  int port_ = 0;
};

std::unique_ptr<Channel> TcpConnect(const std::string& host, int port);

// ---- Server ----

struct SessionOptions {
  double tick_hz = 20.0;
  int episodes = 3;
  // Expert ticks block until the client answers with the current t (or
  // lockstep_timeout passes, which counts as no input).
  bool lockstep = false;
  std::chrono::milliseconds lockstep_timeout{10000};
  std::uint64_t seed = 0;
};

struct SessionResult {
  std::vector<EpisodeLog> logs;    // completed episodes
  std::optional<int> aborted;      // episode index cut short by a disconnect
  Dataset dataset;                 // expert-mode samples of completed episodes
  int successes = 0;
  int protocol_errors = 0;
};

// Runs opts.episodes gated episodes with the connected client acting as the
// expert. A disconnect aborts the current episode, drops its samples and ends
// the session.
SessionResult ServeSession(const World& world, const EnsemblePolicy& policy, const RiskGate& gate,
                           Channel& client, const SessionOptions& opts);

// Stored episode as the message stream the session would have produced:
// one state per row, then episode_end.
std::vector<SessionMessage> ReplayMessages(const EpisodeLog& log);

// Synthetic client: answers every expert-mode state with the oracle expert's
// action until the session sends its last episode_end or disconnects.
struct ScriptedClientStats {
  int states = 0;
  int actions_sent = 0;
  int episodes = 0;
  int errors_received = 0;
};
ScriptedClientStats RunScriptedExpertClient(Channel& server, const World& world, const ExpertConfig& expert,
                                            std::uint64_t seed);

}  // namespace dpiil

#endif  // DPIIL_SESSION_H_
