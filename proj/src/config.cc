#include "dpiil/config.h"

#include <charconv>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <functional>
#include <sstream>
#include <stdexcept>

namespace dpiil {

namespace {

std::string Trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

std::string FormatDouble(double v) {
  char buf[64];
  const auto r = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, r.ptr);
}

double ParseDouble(const std::string& s) {
  const std::string t = Trim(s);
  double v = 0.0;
  const auto r = std::from_chars(t.data(), t.data() + t.size(), v);
  if (r.ec != std::errc() || r.ptr != t.data() + t.size() || !std::isfinite(v)) {
    throw ConfigError("expected a number, got '" + s + "'");
  }
  return v;
}

long long ParseInt(const std::string& s) {
  const std::string t = Trim(s);
  long long v = 0;
  const auto r = std::from_chars(t.data(), t.data() + t.size(), v);
  if (r.ec != std::errc() || r.ptr != t.data() + t.size()) {
    throw ConfigError("expected an integer, got '" + s + "'");
  }
  return v;
}

std::uint64_t ParseUnsigned(const std::string& s) {
  const std::string t = Trim(s);
  std::uint64_t v = 0;
  const auto r = std::from_chars(t.data(), t.data() + t.size(), v);
  if (r.ec != std::errc() || r.ptr != t.data() + t.size()) {
    throw ConfigError("expected a non-negative integer, got '" + s + "'");
  }
  return v;
}

bool ParseBool(const std::string& s) {
  const std::string t = Trim(s);
  if (t == "true" || t == "1") return true;
  if (t == "false" || t == "0") return false;
  throw ConfigError("expected true or false, got '" + s + "'");
}

std::vector<double> ParseNumbers(const std::string& s) {
  std::vector<double> out;
  std::string cur;
  auto flush = [&] {
    if (!cur.empty()) out.push_back(ParseDouble(cur));
    cur.clear();
  };
  for (char c : s) {
    if (c == ' ' || c == '\t' || c == ',') {
      flush();
    } else {
      cur.push_back(c);
    }
  }
  flush();
  return out;
}

std::string JoinPoints(const std::vector<Vec2>& pts) {
  std::string out;
  for (std::size_t i = 0; i < pts.size(); ++i) {
    if (i) out += ", ";
    out += FormatDouble(pts[i].x) + " " + FormatDouble(pts[i].y);
  }
  return out;
}

Vec2 ParsePoint(const std::string& s) {
  const auto v = ParseNumbers(s);
  if (v.size() != 2) throw ConfigError("expected 'x y', got '" + s + "'");
  return {v[0], v[1]};
}

std::vector<Vec2> ParsePoints(const std::string& s) {
  const auto v = ParseNumbers(s);
  if (v.size() % 2 != 0 || v.empty()) throw ConfigError("expected pairs 'x y, x y, ...'");
  std::vector<Vec2> pts;
  for (std::size_t i = 0; i < v.size(); i += 2) pts.push_back({v[i], v[i + 1]});
  return pts;
}

std::string FormatWall(const WallSpec& w) {
  return FormatDouble(w.from.x) + " " + FormatDouble(w.from.y) + " " + FormatDouble(w.to.x) + " " +
         FormatDouble(w.to.y) + " " + FormatDouble(w.thickness) + " " + FormatDouble(w.gap_center) +
         " " + FormatDouble(w.gap_width);
}

WallSpec ParseWall(const std::string& s) {
  const auto v = ParseNumbers(s);
  if (v.size() != 7) {
    throw ConfigError("env.wall needs 7 numbers: from_x from_y to_x to_y thickness gap_center gap_width");
  }
  return {{v[0], v[1]}, {v[2], v[3]}, v[4], v[5], v[6]};
}

struct Field {
  const char* key;
  std::function<std::string(const ExperimentConfig&)> get;
  std::function<void(ExperimentConfig&, const std::string&)> set;
};

#define DPIIL_DOUBLE(KEY, EXPR)                                              \
  Field {                                                                    \
    KEY, [](const ExperimentConfig& c) { return FormatDouble(c.EXPR); },     \
        [](ExperimentConfig& c, const std::string& v) { c.EXPR = ParseDouble(v); } \
  }
#define DPIIL_INT(KEY, EXPR)                                                 \
  Field {                                                                    \
    KEY, [](const ExperimentConfig& c) { return std::to_string(c.EXPR); },   \
        [](ExperimentConfig& c, const std::string& v) {                      \
          c.EXPR = static_cast<decltype(c.EXPR)>(ParseInt(v));               \
        }                                                                    \
  }
#define DPIIL_BOOL(KEY, EXPR)                                                           \
  Field {                                                                               \
    KEY, [](const ExperimentConfig& c) { return std::string(c.EXPR ? "true" : "false"); }, \
        [](ExperimentConfig& c, const std::string& v) { c.EXPR = ParseBool(v); }        \
  }

const std::vector<Field>& Fields() {
  static const std::vector<Field> fields = {
      {"algorithm", [](const ExperimentConfig& c) { return std::string(AlgorithmName(c.train.algorithm)); },
       [](ExperimentConfig& c, const std::string& v) {
         try {
           c.train.algorithm = ParseAlgorithm(Trim(v));
         } catch (const std::invalid_argument& e) {
           throw ConfigError(e.what());
         }
       }},
      {"seed", [](const ExperimentConfig& c) { return std::to_string(c.train.seed); },
       [](ExperimentConfig& c, const std::string& v) { c.train.seed = ParseUnsigned(v); }},
      {"seeds",
       [](const ExperimentConfig& c) {
         std::string out;
         for (std::size_t i = 0; i < c.seeds.size(); ++i) {
           if (i) out += ", ";
           out += std::to_string(c.seeds[i]);
         }
         return out;
       },
       [](ExperimentConfig& c, const std::string& v) {
         c.seeds.clear();
         std::stringstream ss(v);
         std::string item;
         while (std::getline(ss, item, ',')) {
           if (!Trim(item).empty()) c.seeds.push_back(ParseUnsigned(item));
         }
       }},
      DPIIL_INT("iterations", train.iterations),
      DPIIL_INT("budget", train.budget),
      DPIIL_INT("initial_demos", train.initial_demos),
      DPIIL_INT("ensemble_size", train.ensemble_size),
      DPIIL_DOUBLE("dagger_beta", train.dagger_beta),
      {"chi.mode", [](const ExperimentConfig& c) { return std::string(c.train.chi.fixed ? "fixed" : "calibrate"); },
       [](ExperimentConfig& c, const std::string& v) {
         const std::string t = Trim(v);
         if (t != "fixed" && t != "calibrate") throw ConfigError("chi.mode must be 'fixed' or 'calibrate'");
         c.train.chi.fixed = t == "fixed";
       }},
      DPIIL_DOUBLE("chi.value", train.chi.value),
      DPIIL_DOUBLE("chi.quantile", train.chi.quantile),
      DPIIL_INT("eval_episodes", train.eval_episodes),
      DPIIL_BOOL("eval_each_iteration", train.eval_each_iteration),
      DPIIL_INT("max_episodes_per_iteration", train.max_episodes_per_iteration),
      {"out_dir", [](const ExperimentConfig& c) { return c.out_dir; },
       [](ExperimentConfig& c, const std::string& v) { c.out_dir = Trim(v); }},
      DPIIL_BOOL("export_episodes", export_episodes),

      DPIIL_DOUBLE("env.half_extent", train.env.half_extent),
      DPIIL_DOUBLE("env.agent_radius", train.env.agent_radius),
      {"env.start", [](const ExperimentConfig& c) { return JoinPoints({c.train.env.start}); },
       [](ExperimentConfig& c, const std::string& v) { c.train.env.start = ParsePoint(v); }},
      {"env.goal", [](const ExperimentConfig& c) { return JoinPoints({c.train.env.goal}); },
       [](ExperimentConfig& c, const std::string& v) { c.train.env.goal = ParsePoint(v); }},
      DPIIL_DOUBLE("env.goal_radius", train.env.goal_radius),
      DPIIL_INT("env.horizon", train.env.horizon),
      DPIIL_DOUBLE("env.init_noise", train.env.init_noise),
      DPIIL_DOUBLE("env.max_action", train.env.max_action),

      {"expert.path", [](const ExperimentConfig& c) { return JoinPoints(c.train.expert.path); },
       [](ExperimentConfig& c, const std::string& v) { c.train.expert.path = ParsePoints(v); }},
      DPIIL_DOUBLE("expert.v_fast", train.expert.v_fast),
      DPIIL_DOUBLE("expert.v_slow", train.expert.v_slow),
      DPIIL_DOUBLE("expert.slow_clearance", train.expert.slow_clearance),
      DPIIL_DOUBLE("expert.blend_band", train.expert.blend_band),
      DPIIL_DOUBLE("expert.noise_k", train.expert.noise_k),
      DPIIL_DOUBLE("expert.tracking_gain", train.expert.tracking_gain),
      DPIIL_DOUBLE("hg.d_safe", train.hg.d_safe),
      DPIIL_DOUBLE("hg.d_dev", train.hg.d_dev),

      {"net.hidden",
       [](const ExperimentConfig& c) {
         std::string out;
         for (std::size_t i = 0; i < c.train.net.hidden.size(); ++i) {
           if (i) out += " ";
           out += std::to_string(c.train.net.hidden[i]);
         }
         return out;
       },
       [](ExperimentConfig& c, const std::string& v) {
         c.train.net.hidden.clear();
         for (double h : ParseNumbers(v)) {
           if (h < 1 || h != std::floor(h)) throw ConfigError("net.hidden sizes must be positive integers");
           c.train.net.hidden.push_back(static_cast<int>(h));
         }
       }},
      DPIIL_INT("net.epochs", train.net.train.epochs),
      DPIIL_INT("net.batch_size", train.net.train.batch_size),
      DPIIL_DOUBLE("net.lr", train.net.train.adam.lr),
      DPIIL_DOUBLE("net.beta1", train.net.train.adam.beta1),
      DPIIL_DOUBLE("net.beta2", train.net.train.adam.beta2),
      DPIIL_DOUBLE("net.eps", train.net.train.adam.eps),

      DPIIL_INT("session.port", session.port),
      DPIIL_DOUBLE("session.tick_hz", session.tick_hz),
      DPIIL_INT("session.episodes", session.episodes),
      DPIIL_DOUBLE("session.connect_timeout", session.connect_timeout),
      DPIIL_BOOL("session.lockstep", session.lockstep),
      {"session.models", [](const ExperimentConfig& c) { return c.session.models; },
       [](ExperimentConfig& c, const std::string& v) { c.session.models = Trim(v); }},
  };
  return fields;
}

#undef DPIIL_DOUBLE
#undef DPIIL_INT
#undef DPIIL_BOOL

const Field* FindField(const std::string& key) {
  for (const Field& f : Fields()) {
    if (key == f.key) return &f;
  }
  return nullptr;
}

std::string Resolve(const std::string& path, const std::string& base_dir) {
  if (path.empty() || base_dir.empty()) return path;
  const std::filesystem::path p(path);
  if (p.is_absolute()) return path;
  return (std::filesystem::path(base_dir) / p).lexically_normal().string();
}

}  // namespace

void ExperimentConfig::Validate() const {
  train.Validate();
  BuildWorld(train.env);
  if (seeds.empty()) throw ConfigError("seeds must list at least one seed");
  if (out_dir.empty()) throw ConfigError("out_dir must not be empty");
  if (session.port < 0 || session.port > 65535) throw ConfigError("session.port out of range");
  if (!(session.tick_hz > 0.0)) throw ConfigError("session.tick_hz must be positive");
  if (session.episodes < 1) throw ConfigError("session.episodes must be >= 1");
  if (!(session.connect_timeout >= 0.0)) throw ConfigError("session.connect_timeout must be >= 0");
  if (!session.models.empty() && !std::filesystem::exists(session.models)) {
    throw ConfigError("session.models: no such path '" + session.models + "'");
  }
}

ExperimentConfig ParseExperimentConfig(const std::string& text, const std::string& base_dir) {
  ExperimentConfig cfg;
  std::istringstream in(text);
  std::string raw;
  int line_no = 0;
  bool have_version = false;
  bool walls_seen = false;
  while (std::getline(in, raw)) {
    ++line_no;
    const std::string line = Trim(raw.substr(0, raw.find('#')));
    if (line.empty()) continue;
    const auto eq = line.find('=');
    const std::string where = "config line " + std::to_string(line_no) + ": ";
    if (eq == std::string::npos) throw ConfigError(where + "expected 'key = value'");
    const std::string key = Trim(line.substr(0, eq));
    const std::string value = Trim(line.substr(eq + 1));
    try {
      if (key == "schema_version") {
        const long long v = ParseInt(value);
        if (v != ExperimentConfig::kSchemaVersion) {
          throw ConfigError("unsupported schema_version " + value + " (expected " +
                            std::to_string(ExperimentConfig::kSchemaVersion) + ")");
        }
        have_version = true;
      } else if (key == "env.wall") {
        if (!walls_seen) cfg.train.env.walls.clear();
        walls_seen = true;
        if (value != "none") cfg.train.env.walls.push_back(ParseWall(value));
      } else if (const Field* f = FindField(key)) {
        f->set(cfg, value);
      } else {
        throw ConfigError("unknown key '" + key + "'");
      }
    } catch (const ConfigError& e) {
      throw ConfigError(where + e.what());
    }
  }
  if (!have_version) throw ConfigError("config is missing schema_version");
  cfg.session.models = Resolve(cfg.session.models, base_dir);
  cfg.Validate();
  return cfg;
}

ExperimentConfig LoadExperimentConfig(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config '" + path + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  return ParseExperimentConfig(ss.str(), std::filesystem::path(path).parent_path().string());
}

std::string FormatExperimentConfig(const ExperimentConfig& cfg) {
  std::ostringstream out;
  out << "schema_version = " << ExperimentConfig::kSchemaVersion << "\n";
  for (const Field& f : Fields()) {
    out << f.key << " = " << f.get(cfg) << "\n";
    if (std::string(f.key) == "env.max_action") {
      for (const WallSpec& w : cfg.train.env.walls) out << "env.wall = " << FormatWall(w) << "\n";
      if (cfg.train.env.walls.empty()) out << "env.wall = none\n";
    }
  }
  return out.str();
}

void SaveExperimentConfig(const std::string& path, const ExperimentConfig& cfg) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write config '" + path + "'");
  out << FormatExperimentConfig(cfg);
  if (!out) throw std::runtime_error("failed writing config '" + path + "'");
}

bool operator==(const ExperimentConfig& a, const ExperimentConfig& b) {
  return FormatExperimentConfig(a) == FormatExperimentConfig(b);
}

}  // namespace dpiil
