#include "dpiil/session.h"

#include <arpa/inet.h>
#include <netinet/in.h>
#include <poll.h>
#include <sys/socket.h>
#include <unistd.h>

#include <cerrno>
#include <cmath>
#include <condition_variable>
#include <cstring>
#include <deque>
#include <mutex>
#include <thread>

#include "json.hpp"

namespace dpiil {

using json = nlohmann::json;

namespace {

json PointJson(const Vec2& p) { return json::array({p.x, p.y}); }

Vec2 PointFrom(const json& j) {
  if (!j.is_array() || j.size() != 2) throw ProtocolError("expected [x, y]");
  return {j.at(0).get<double>(), j.at(1).get<double>()};
}

template <class... F>
struct Overload : F... {
  using F::operator()...;
};
template <class... F>
Overload(F...) -> Overload<F...>;

}  // namespace

const char* MessageType(const SessionMessage& msg) {
  return std::visit(Overload{
                        [](const StateMsg&) { return "state"; },
                        [](const RequestInterventionMsg&) { return "request_intervention"; },
                        [](const ReleaseInterventionMsg&) { return "release_intervention"; },
                        [](const HumanActionMsg&) { return "human_action"; },
                        [](const EpisodeEndMsg&) { return "episode_end"; },
                        [](const SessionConfigMsg&) { return "session_config"; },
                        [](const ProtocolErrorMsg&) { return "protocol_error"; },
                    },
                    msg);
}

std::string EncodeMessage(const SessionMessage& msg) {
  json j;
  j["type"] = MessageType(msg);
  std::visit(Overload{
                 [&](const StateMsg& m) {
                   j["t"] = m.t;
                   j["x"] = m.x;
                   j["y"] = m.y;
                   j["mode"] = ControlModeName(m.mode);
                   j["risk"] = m.risk;
                   j["clipped"] = m.clipped;
                   if (m.outcome) j["outcome"] = OutcomeName(*m.outcome);
                 },
                 [&](const RequestInterventionMsg& m) { j["t"] = m.t; },
                 [&](const ReleaseInterventionMsg& m) { j["t"] = m.t; },
                 [&](const HumanActionMsg& m) {
                   j["t"] = m.t;
                   j["vx"] = m.vx;
                   j["vy"] = m.vy;
                 },
                 [&](const EpisodeEndMsg& m) {
                   j["episode"] = m.episode;
                   j["outcome"] = OutcomeName(m.outcome);
                 },
                 [&](const SessionConfigMsg& m) {
                   j["tick_hz"] = m.tick_hz;
                   j["episodes"] = m.episodes;
                   j["lockstep"] = m.lockstep;
                   j["half_extent"] = m.env.half_extent;
                   j["agent_radius"] = m.env.agent_radius;
                   j["start"] = PointJson(m.env.start);
                   j["goal"] = PointJson(m.env.goal);
                   j["goal_radius"] = m.env.goal_radius;
                   j["max_action"] = m.env.max_action;
                   j["horizon"] = m.env.horizon;
                   json walls = json::array();
                   for (const WallSpec& w : m.env.walls) {
                     walls.push_back({{"from", PointJson(w.from)},
                                      {"to", PointJson(w.to)},
                                      {"thickness", w.thickness},
                                      {"gap_center", w.gap_center},
                                      {"gap_width", w.gap_width}});
                   }
                   j["walls"] = walls;
                 },
                 [&](const ProtocolErrorMsg& m) { j["reason"] = m.reason; },
             },
             msg);
  return j.dump();
}

SessionMessage DecodeMessage(const std::string& line) {
  json j;
  try {
    j = json::parse(line);
  } catch (const json::exception&) {
    throw ProtocolError("not a JSON object");
  }
  if (!j.is_object()) throw ProtocolError("not a JSON object");
  if (!j.contains("type") || !j["type"].is_string()) throw ProtocolError("missing message type");
  const std::string type = j["type"];
  try {
    if (type == "state") {
      StateMsg m;
      m.t = j.at("t").get<int>();
      m.x = j.at("x").get<double>();
      m.y = j.at("y").get<double>();
      m.mode = ParseControlMode(j.at("mode").get<std::string>());
      m.risk = j.at("risk").get<double>();
      m.clipped = j.value("clipped", false);
      if (j.contains("outcome")) m.outcome = ParseOutcome(j["outcome"].get<std::string>());
      return m;
    }
    if (type == "request_intervention") return RequestInterventionMsg{j.at("t").get<int>()};
    if (type == "release_intervention") return ReleaseInterventionMsg{j.at("t").get<int>()};
    if (type == "human_action") {
      HumanActionMsg m{j.at("t").get<int>(), j.at("vx").get<double>(), j.at("vy").get<double>()};
      if (!std::isfinite(m.vx) || !std::isfinite(m.vy)) throw ProtocolError("non-finite action");
      return m;
    }
    if (type == "episode_end") {
      return EpisodeEndMsg{j.at("episode").get<int>(), ParseOutcome(j.at("outcome").get<std::string>())};
    }
    if (type == "session_config") {
      SessionConfigMsg m;
      m.tick_hz = j.at("tick_hz").get<double>();
      m.episodes = j.at("episodes").get<int>();
      m.lockstep = j.value("lockstep", false);
      m.env.half_extent = j.at("half_extent").get<double>();
      m.env.agent_radius = j.at("agent_radius").get<double>();
      m.env.start = PointFrom(j.at("start"));
      m.env.goal = PointFrom(j.at("goal"));
      m.env.goal_radius = j.at("goal_radius").get<double>();
      m.env.max_action = j.at("max_action").get<double>();
      m.env.horizon = j.at("horizon").get<int>();
      for (const json& w : j.at("walls")) {
        m.env.walls.push_back({PointFrom(w.at("from")), PointFrom(w.at("to")), w.at("thickness").get<double>(),
                               w.at("gap_center").get<double>(), w.at("gap_width").get<double>()});
      }
      return m;
    }
    if (type == "protocol_error") return ProtocolErrorMsg{j.at("reason").get<std::string>()};
  } catch (const json::exception& e) {
    throw ProtocolError("bad " + type + " message: " + e.what());
  } catch (const std::invalid_argument& e) {
    throw ProtocolError("bad " + type + " message: " + e.what());
  }
  throw ProtocolError("unknown message type '" + type + "'");
}

// ---- In-process channel ----

namespace {

struct PipeState {
  std::mutex mu;
  std::condition_variable cv;
  std::deque<std::string> queue[2];  // queue[i] holds lines for endpoint i
  bool closed[2] = {false, false};
};

class PipeEnd : public Channel {
 public:
  PipeEnd(std::shared_ptr<PipeState> st, int self) : st_(std::move(st)), self_(self) {}
  ~PipeEnd() override { Close(); }

  void Send(const std::string& line) override {
    std::lock_guard<std::mutex> lock(st_->mu);
    if (st_->closed[0] || st_->closed[1]) throw ChannelClosed();
    st_->queue[1 - self_].push_back(line);
    st_->cv.notify_all();
  }

  std::optional<std::string> Receive(std::chrono::milliseconds timeout) override {
    std::unique_lock<std::mutex> lock(st_->mu);
    auto& q = st_->queue[self_];
    st_->cv.wait_for(lock, timeout, [&] { return !q.empty() || st_->closed[1 - self_] || st_->closed[self_]; });
    if (!q.empty()) {
      std::string line = std::move(q.front());
      q.pop_front();
      return line;
    }
    if (st_->closed[1 - self_] || st_->closed[self_]) throw ChannelClosed();
    return std::nullopt;
  }

  void Close() override {
    std::lock_guard<std::mutex> lock(st_->mu);
    st_->closed[self_] = true;
    st_->cv.notify_all();
  }

 private:
  std::shared_ptr<PipeState> st_;
  int self_;
};

// ---- TCP channel ----

class TcpChannel : public Channel {
 public:
  explicit TcpChannel(int fd) : fd_(fd) {}
  ~TcpChannel() override { Close(); }

  void Send(const std::string& line) override {
    if (fd_ < 0) throw ChannelClosed();
    std::string data = line + "\n";
    std::size_t off = 0;
    while (off < data.size()) {
      const ssize_t n = ::send(fd_, data.data() + off, data.size() - off, MSG_NOSIGNAL);
      if (n < 0) {
        if (errno == EINTR) continue;
        throw ChannelClosed();
      }
      off += static_cast<std::size_t>(n);
    }
  }

  std::optional<std::string> Receive(std::chrono::milliseconds timeout) override {
    const auto deadline = std::chrono::steady_clock::now() + timeout;
    for (;;) {
      const auto nl = buffer_.find('\n');
      if (nl != std::string::npos) {
        std::string line = buffer_.substr(0, nl);
        buffer_.erase(0, nl + 1);
        if (!line.empty() && line.back() == '\r') line.pop_back();
        return line;
      }
      if (fd_ < 0 || eof_) throw ChannelClosed();
      const auto left = std::chrono::duration_cast<std::chrono::milliseconds>(deadline - std::chrono::steady_clock::now());
      pollfd p{fd_, POLLIN, 0};
      const int r = ::poll(&p, 1, static_cast<int>(std::max<long>(0, left.count())));
      if (r < 0 && errno == EINTR) continue;
      if (r <= 0) return std::nullopt;
      char buf[4096];
      const ssize_t n = ::recv(fd_, buf, sizeof(buf), 0);
      if (n <= 0) {
        eof_ = true;
        continue;
      }
      buffer_.append(buf, static_cast<std::size_t>(n));
    }
  }

  void Close() override {
    if (fd_ >= 0) {
      ::shutdown(fd_, SHUT_RDWR);
      ::close(fd_);
      fd_ = -1;
    }
  }

 private:
  int fd_;
  bool eof_ = false;
  std::string buffer_;
};

}  // namespace

std::pair<std::unique_ptr<Channel>, std::unique_ptr<Channel>> MakeChannelPair() {
  auto st = std::make_shared<PipeState>();
  return {std::make_unique<PipeEnd>(st, 0), std::make_unique<PipeEnd>(st, 1)};
}

TcpListener::TcpListener(int port) {
  fd_ = ::socket(AF_INET, SOCK_STREAM, 0);
  if (fd_ < 0) throw std::runtime_error(std::string("socket: ") + std::strerror(errno));
  const int one = 1;
  ::setsockopt(fd_, SOL_SOCKET, SO_REUSEADDR, &one, sizeof(one));
  sockaddr_in addr{};
  addr.sin_family = AF_INET;
  addr.sin_addr.s_addr = htonl(INADDR_LOOPBACK);
  addr.sin_port = htons(static_cast<uint16_t>(port));
  if (::bind(fd_, reinterpret_cast<sockaddr*>(&addr), sizeof(addr)) < 0 || ::listen(fd_, 1) < 0) {
    const std::string err = std::strerror(errno);
    ::close(fd_);
    throw std::runtime_error("cannot listen on port " + std::to_string(port) + ": " + err);
  }
  socklen_t len = sizeof(addr);
  ::getsockname(fd_, reinterpret_cast<sockaddr*>(&addr), &len);
  port_ = ntohs(addr.sin_port);
}

TcpListener::~TcpListener() {
  if (fd_ >= 0) ::close(fd_);
}

std::unique_ptr<Channel> TcpListener::Accept(std::chrono::milliseconds timeout) {
  pollfd p{fd_, POLLIN, 0};
  if (::poll(&p, 1, static_cast<int>(timeout.count())) <= 0) return nullptr;
  const int c = ::accept(fd_, nullptr, nullptr);
  if (c < 0) return nullptr;
  return std::make_unique<TcpChannel>(c);
}

std::unique_ptr<Channel> TcpConnect(const std::string& host, int port) {
  const int fd = ::socket(AF_INET, SOCK_STREAM, 0);
  if (fd < 0) throw std::runtime_error(std::string("socket: ") + std::strerror(errno));
  sockaddr_in addr{};
  addr.sin_family = AF_INET;
  addr.sin_port = htons(static_cast<uint16_t>(port));
  if (::inet_pton(AF_INET, host.c_str(), &addr.sin_addr) != 1) {
    ::close(fd);
    throw std::runtime_error("bad address '" + host + "'");
  }
  if (::connect(fd, reinterpret_cast<sockaddr*>(&addr), sizeof(addr)) < 0) {
    const std::string err = std::strerror(errno);
    ::close(fd);
    throw std::runtime_error("cannot connect to " + host + ":" + std::to_string(port) + ": " + err);
  }
  return std::make_unique<TcpChannel>(fd);
}

// ---- Server ----

namespace {

class EpisodeRunner {
 public:
  EpisodeRunner(const World& world, const EnsemblePolicy& policy, const RiskGate& gate, Channel& client,
                const SessionOptions& opts, SessionResult& result)
      : world_(world), policy_(policy), gate_(gate), client_(client), opts_(opts), result_(result) {}

  // Returns false if the client disconnected.
  bool Run(int episode) {
    EpisodeLog log;
    log.episode = episode;
    Dataset samples;
    State2 s = Reset(world_, DeriveSeed(opts_.seed, static_cast<std::uint64_t>(episode), 0));
    ControlMode prev = ControlMode::kAuto;
    bool clipped_prev = false;
    const auto period = std::chrono::duration_cast<std::chrono::steady_clock::duration>(
        std::chrono::duration<double>(1.0 / opts_.tick_hz));
    auto tick_start = std::chrono::steady_clock::now();
    try {
      for (int t = 0; t < world_.horizon(); ++t) {
        StepRecord rec;
        rec.t = t;
        rec.s = s;
        rec.risk = gate_.Risk(s);
        rec.mode = gate_.DecideRisk(rec.risk);
        client_.Send(EncodeMessage(StateMsg{t, s.x, s.y, rec.mode, rec.risk, std::nullopt, clipped_prev}));
        if (rec.mode != prev) {
          client_.Send(rec.mode == ControlMode::kExpert ? EncodeMessage(RequestInterventionMsg{t})
                                                        : EncodeMessage(ReleaseInterventionMsg{t}));
        }
        const auto deadline = tick_start + period;
        std::optional<HumanActionMsg> human = Collect(t, rec.mode, deadline);
        if (!opts_.lockstep) {
          std::this_thread::sleep_until(deadline);
          tick_start = deadline;
        }
        if (rec.mode == ControlMode::kExpert) {
          rec.a = human ? Action2{human->vx, human->vy} : Action2{};
        } else {
          rec.a = PolicyAction(policy_, s);
        }
        const StepResult r = Step(world_, s, rec.a, t);
        rec.outcome = r.outcome;
        rec.clipped = r.clipped;
        if (rec.mode == ControlMode::kExpert) {
          samples.push_back({s, ClipAction(rec.a, world_.max_action()), SpeedOf(s, r.next)});
        }
        log.steps.push_back(rec);
        prev = rec.mode;
        clipped_prev = r.clipped;
        s = r.next;
        if (IsTerminal(r.outcome)) {
          client_.Send(EncodeMessage(StateMsg{t + 1, s.x, s.y, rec.mode, rec.risk, r.outcome, r.clipped}));
          client_.Send(EncodeMessage(EpisodeEndMsg{episode, r.outcome}));
          break;
        }
      }
    } catch (const ChannelClosed&) {
      result_.aborted = episode;
      return false;
    }
    log.outcome = log.steps.back().outcome;
    if (log.outcome == Outcome::kSuccess) ++result_.successes;
    result_.dataset.insert(result_.dataset.end(), samples.begin(), samples.end());
    result_.logs.push_back(std::move(log));
    return true;
  }

 private:
  void Reject(const std::string& reason) {
    ++result_.protocol_errors;
    client_.Send(EncodeMessage(ProtocolErrorMsg{reason}));
  }

  // Drains client messages for tick t. In Expert mode the last valid
  // human_action wins.
  std::optional<HumanActionMsg> Collect(int t, ControlMode mode, std::chrono::steady_clock::time_point deadline) {
    std::optional<HumanActionMsg> latest;
    for (;;) {
      std::chrono::milliseconds wait{0};
      if (opts_.lockstep) {
        if (mode == ControlMode::kExpert && !latest) wait = opts_.lockstep_timeout;
      } else {
        wait = std::chrono::duration_cast<std::chrono::milliseconds>(deadline - std::chrono::steady_clock::now());
        if (wait.count() < 0) wait = std::chrono::milliseconds{0};
      }
      const std::optional<std::string> line = client_.Receive(wait);
      if (!line) return latest;
      SessionMessage msg;
      try {
        msg = DecodeMessage(*line);
      } catch (const ProtocolError& e) {
        Reject(e.what());
        continue;
      }
      const auto* act = std::get_if<HumanActionMsg>(&msg);
      if (act == nullptr) {
        Reject(std::string("unexpected message type '") + MessageType(msg) + "' from client");
      } else if (mode != ControlMode::kExpert) {
        Reject("human_action is only valid in expert mode");
      } else if (act->t > t) {
        Reject("human_action for future step t=" + std::to_string(act->t));
      } else if (opts_.lockstep && act->t != t) {
        Reject("stale human_action t=" + std::to_string(act->t));
      } else {
        latest = *act;
      }
    }
  }

  const World& world_;
  const EnsemblePolicy& policy_;
  const RiskGate& gate_;
  Channel& client_;
  const SessionOptions& opts_;
  SessionResult& result_;
};

}  // namespace

SessionResult ServeSession(const World& world, const EnsemblePolicy& policy, const RiskGate& gate,
                           Channel& client, const SessionOptions& opts) {
  if (!(opts.tick_hz > 0.0)) throw std::invalid_argument("tick rate must be positive");
  if (opts.episodes < 1) throw std::invalid_argument("session needs at least one episode");
  SessionResult result;
  try {
    client.Send(EncodeMessage(SessionConfigMsg{world.config(), opts.tick_hz, opts.episodes, opts.lockstep}));
  } catch (const ChannelClosed&) {
    result.aborted = 0;
    return result;
  }
  EpisodeRunner runner(world, policy, gate, client, opts, result);
  for (int e = 0; e < opts.episodes; ++e) {
    if (!runner.Run(e)) break;
  }
  return result;
}

std::vector<SessionMessage> ReplayMessages(const EpisodeLog& log) {
  if (log.steps.empty()) throw std::invalid_argument("cannot replay an empty episode");
  std::vector<SessionMessage> out;
  bool clipped_prev = false;
  for (const StepRecord& r : log.steps) {
    StateMsg m{r.t, r.s.x, r.s.y, r.mode, r.risk, std::nullopt, clipped_prev};
    if (IsTerminal(r.outcome)) m.outcome = r.outcome;
    out.push_back(m);
    clipped_prev = r.clipped;
  }
  out.push_back(EpisodeEndMsg{log.episode, log.outcome});
  return out;
}

ScriptedClientStats RunScriptedExpertClient(Channel& server, const World& world, const ExpertConfig& expert,
                                            std::uint64_t seed) {
  ScriptedClientStats stats;
  Rng rng(seed);
  int expected = -1;
  std::optional<StateMsg> last;
  try {
    for (;;) {
      const std::optional<std::string> line = server.Receive(std::chrono::milliseconds(60000));
      if (!line) break;
      const SessionMessage msg = DecodeMessage(*line);
      if (const auto* cfg = std::get_if<SessionConfigMsg>(&msg)) {
        expected = cfg->episodes;
      } else if (const auto* st = std::get_if<StateMsg>(&msg)) {
        ++stats.states;
        last = *st;
        if (st->mode == ControlMode::kExpert && !st->outcome) {
          const Action2 a = ExpertAction(world, expert, State2{st->x, st->y}, rng);
          server.Send(EncodeMessage(HumanActionMsg{st->t, a.vx, a.vy}));
          ++stats.actions_sent;
        }
      } else if (std::holds_alternative<EpisodeEndMsg>(msg)) {
        if (++stats.episodes == expected) break;
      } else if (std::holds_alternative<ProtocolErrorMsg>(msg)) {
        ++stats.errors_received;
      }
    }
  } catch (const ChannelClosed&) {
  }
  return stats;
}

}  // namespace dpiil
