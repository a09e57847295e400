#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "fedcell/error.hpp"
#include "fedcell/harness.hpp"

#ifndef FEDCELL_DATA_DIR
#define FEDCELL_DATA_DIR "data"
#endif

namespace fedcell::harness {

namespace fs = std::filesystem;
using nlohmann::json;

PolicyKind parse_policy(const std::string& name) {
  if (name == "dqn") return PolicyKind::dqn;
  if (name == "random") return PolicyKind::random;
  if (name == "exhaustive") return PolicyKind::exhaustive;
  throw Error("unknown policy '" + name + "' (expected dqn, random or exhaustive)");
}

std::string to_string(PolicyKind kind) {
  switch (kind) {
    case PolicyKind::dqn:
      return "dqn";
    case PolicyKind::random:
      return "random";
    case PolicyKind::exhaustive:
      return "exhaustive";
  }
  return "?";
}

fs::path data_dir() {
  if (const char* env = std::getenv("FEDCELL_DATA"); env != nullptr && *env != '\0') return env;
  return FEDCELL_DATA_DIR;
}

fs::path resolve_room(const std::string& ref, const fs::path& base) {
  if (ref.size() == 1 && std::isalpha(static_cast<unsigned char>(ref[0]))) {
    const char c = static_cast<char>(std::tolower(static_cast<unsigned char>(ref[0])));
    return data_dir() / "rooms" / (std::string("room_") + c + ".json");
  }
  const fs::path p(ref);
  return p.is_absolute() ? p : base / p;
}

namespace {

// Locates the line of a key path by scanning for each quoted key in turn.
// Good enough for diagnostics; falls back to line 1.
int line_of(std::string_view text, const std::vector<std::string>& path) {
  std::size_t pos = 0;
  bool found_any = false;
  for (const auto& key : path) {
    if (!key.empty() && std::isdigit(static_cast<unsigned char>(key[0]))) continue;
    const std::string quoted = "\"" + key + "\"";
    const auto at = text.find(quoted, pos);
    if (at == std::string_view::npos) break;
    pos = at;
    found_any = true;
  }
  if (!found_any) return 1;
  return 1 + static_cast<int>(std::count(text.begin(), text.begin() + static_cast<long>(pos), '\n'));
}

std::string join_path(const std::vector<std::string>& path) {
  std::string out;
  for (const auto& k : path) {
    if (!out.empty()) out += (std::isdigit(static_cast<unsigned char>(k[0])) ? "" : ".");
    out += std::isdigit(static_cast<unsigned char>(k[0])) ? "[" + k + "]" : k;
  }
  return out.empty() ? "<root>" : out;
}

class Reader {
 public:
  Reader(std::string_view text, fs::path source) : text_(text), source_(std::move(source)) {}

  [[noreturn]] void fail(const std::vector<std::string>& path, const std::string& msg) const {
    std::ostringstream os;
    os << source_.string() << ':' << line_of(text_, path) << ": " << join_path(path) << ": " << msg;
    throw Error(os.str());
  }

  void only_keys(const json& obj, const std::vector<std::string>& path,
                 std::initializer_list<const char*> allowed) const {
    if (!obj.is_object()) fail(path, "expected an object");
    for (const auto& [key, value] : obj.items()) {
      if (std::none_of(allowed.begin(), allowed.end(), [&](const char* a) { return key == a; })) {
        auto p = path;
        p.push_back(key);
        fail(p, "unknown key");
      }
    }
  }

  double number(const json& obj, const std::vector<std::string>& path, const char* key,
                double fallback) const {
    if (!obj.contains(key)) return fallback;
    auto p = path;
    p.push_back(key);
    if (!obj[key].is_number()) fail(p, "expected a number");
    return obj[key].get<double>();
  }

  long long integer(const json& obj, const std::vector<std::string>& path, const char* key,
                    long long fallback) const {
    if (!obj.contains(key)) return fallback;
    auto p = path;
    p.push_back(key);
    if (!obj[key].is_number_integer()) fail(p, "expected an integer");
    return obj[key].get<long long>();
  }

  std::string string(const json& obj, const std::vector<std::string>& path, const char* key,
                     const std::string& fallback) const {
    if (!obj.contains(key)) return fallback;
    auto p = path;
    p.push_back(key);
    if (!obj[key].is_string()) fail(p, "expected a string");
    return obj[key].get<std::string>();
  }

  void require(bool ok, const std::vector<std::string>& path, const std::string& msg) const {
    if (!ok) fail(path, msg);
  }

 private:
  std::string_view text_;
  fs::path source_;
};

std::vector<RoomRef> parse_rooms(const Reader& r, const json& list, const std::vector<std::string>& path,
                                 const fs::path& base) {
  if (!list.is_array() || list.empty()) r.fail(path, "expected a non-empty list of rooms");
  std::vector<RoomRef> rooms;
  for (std::size_t i = 0; i < list.size(); ++i) {
    auto p = path;
    p.push_back(std::to_string(i));
    if (!list[i].is_string()) r.fail(p, "expected a room name or layout path");
    RoomRef ref;
    ref.name = list[i].get<std::string>();
    ref.path = resolve_room(ref.name, base);
    if (!fs::exists(ref.path)) r.fail(p, "room file " + ref.path.string() + " does not exist");
    try {
      ref.layout = geometry::load_layout(ref.path);
    } catch (const Error& e) {
      r.fail(p, e.what());
    }
    rooms.push_back(std::move(ref));
  }
  return rooms;
}

}  // namespace

ExperimentConfig parse_config(std::string_view text, const fs::path& source) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    const auto byte = std::min<std::size_t>(e.byte, text.size());
    const int line = 1 + static_cast<int>(std::count(text.begin(), text.begin() + static_cast<long>(byte > 0 ? byte - 1 : 0), '\n'));
    throw Error(source.string() + ":" + std::to_string(line) + ": malformed JSON: " + e.what());
  }
  const Reader r(text, source);
  r.only_keys(j, {},
              {"scenario", "rooms", "radio", "mobility", "env", "dqn", "federation", "policy",
               "objective", "label", "episodes", "eval_episodes", "seeds", "output_dir"});

  ExperimentConfig cfg;
  cfg.source = source;
  const fs::path base = source.has_parent_path() ? source.parent_path() : fs::path(".");

  cfg.scenario = r.string(j, {}, "scenario", cfg.scenario);
  if (!j.contains("rooms")) r.fail({"rooms"}, "required key missing");
  cfg.rooms = parse_rooms(r, j["rooms"], {"rooms"}, base);

  if (j.contains("radio")) {
    const json& o = j["radio"];
    const std::vector<std::string> p{"radio"};
    r.only_keys(o, p, {"bandwidth_hz", "carrier_ghz", "tx_gain_db", "rx_gain_db", "noise_power_dbm", "ue_height_m"});
    auto& rp = cfg.env.radio;
    rp.bandwidth_hz = r.number(o, p, "bandwidth_hz", rp.bandwidth_hz);
    rp.carrier_ghz = r.number(o, p, "carrier_ghz", rp.carrier_ghz);
    rp.tx_gain_db = r.number(o, p, "tx_gain_db", rp.tx_gain_db);
    rp.rx_gain_db = r.number(o, p, "rx_gain_db", rp.rx_gain_db);
    rp.noise_power_dbm = r.number(o, p, "noise_power_dbm", rp.noise_power_dbm);
    rp.ue_height_m = r.number(o, p, "ue_height_m", rp.ue_height_m);
    r.require(rp.bandwidth_hz > 0, {"radio", "bandwidth_hz"}, "must be > 0");
    r.require(rp.carrier_ghz > 0, {"radio", "carrier_ghz"}, "must be > 0");
  }
  cfg.env.mobility.ue_height = cfg.env.radio.ue_height_m;

  if (j.contains("mobility")) {
    const json& o = j["mobility"];
    const std::vector<std::string> p{"mobility"};
    r.only_keys(o, p, {"n_ues", "speed", "offset_sigma"});
    auto& m = cfg.env.mobility;
    m.n_ues = static_cast<int>(r.integer(o, p, "n_ues", m.n_ues));
    m.speed = r.number(o, p, "speed", m.speed);
    m.offset_sigma = r.number(o, p, "offset_sigma", m.offset_sigma);
    r.require(m.n_ues >= 1, {"mobility", "n_ues"}, "must be >= 1");
    r.require(m.speed > 0, {"mobility", "speed"}, "must be > 0");
    r.require(m.offset_sigma >= 0, {"mobility", "offset_sigma"}, "must be >= 0");
  }

  if (j.contains("env")) {
    const json& o = j["env"];
    const std::vector<std::string> p{"env"};
    r.only_keys(o, p, {"levels_dbm", "action_mode", "initial_power_dbm", "steps_per_episode"});
    auto& e = cfg.env;
    if (o.contains("levels_dbm")) {
      const json& l = o["levels_dbm"];
      if (!l.is_array() || l.empty()) r.fail({"env", "levels_dbm"}, "expected a non-empty list of dBm values");
      e.levels_dbm.clear();
      for (const auto& v : l) {
        if (!v.is_number()) r.fail({"env", "levels_dbm"}, "expected numbers");
        e.levels_dbm.push_back(v.get<double>());
      }
      for (std::size_t i = 1; i < e.levels_dbm.size(); ++i) {
        r.require(e.levels_dbm[i] > e.levels_dbm[i - 1], {"env", "levels_dbm"}, "must be strictly increasing");
      }
    }
    try {
      e.mode = env::parse_action_mode(r.string(o, p, "action_mode", env::to_string(e.mode)));
    } catch (const Error& ex) {
      r.fail({"env", "action_mode"}, ex.what());
    }
    e.initial_power_dbm = r.number(o, p, "initial_power_dbm", e.initial_power_dbm);
    e.steps_per_episode = static_cast<int>(r.integer(o, p, "steps_per_episode", e.steps_per_episode));
    r.require(e.steps_per_episode >= 1, {"env", "steps_per_episode"}, "must be >= 1");
    r.require(std::find(e.levels_dbm.begin(), e.levels_dbm.end(), e.initial_power_dbm) != e.levels_dbm.end(),
              {"env", "initial_power_dbm"}, "must be one of levels_dbm");
  }

  if (j.contains("dqn")) {
    const json& o = j["dqn"];
    const std::vector<std::string> p{"dqn"};
    r.only_keys(o, p,
                {"gamma", "epsilon_start", "epsilon_end", "epsilon_decay_fraction", "batch",
                 "target_update", "replay_capacity", "hidden_dims", "learning_rate"});
    auto& d = cfg.dqn;
    d.gamma = r.number(o, p, "gamma", d.gamma);
    d.epsilon.start = r.number(o, p, "epsilon_start", d.epsilon.start);
    d.epsilon.end = r.number(o, p, "epsilon_end", d.epsilon.end);
    cfg.epsilon_decay_fraction = r.number(o, p, "epsilon_decay_fraction", cfg.epsilon_decay_fraction);
    d.batch = static_cast<std::size_t>(std::max(0LL, r.integer(o, p, "batch", static_cast<long long>(d.batch))));
    d.target_update = static_cast<int>(r.integer(o, p, "target_update", d.target_update));
    d.replay_capacity = static_cast<std::size_t>(
        std::max(0LL, r.integer(o, p, "replay_capacity", static_cast<long long>(d.replay_capacity))));
    d.adam.learning_rate = r.number(o, p, "learning_rate", d.adam.learning_rate);
    if (o.contains("hidden_dims")) {
      const json& h = o["hidden_dims"];
      if (!h.is_array()) r.fail({"dqn", "hidden_dims"}, "expected a list of layer widths");
      d.hidden_dims.clear();
      for (const auto& v : h) {
        if (!v.is_number_integer() || v.get<long long>() < 1) r.fail({"dqn", "hidden_dims"}, "widths must be integers >= 1");
        d.hidden_dims.push_back(v.get<int>());
      }
    }
    r.require(d.gamma >= 0 && d.gamma <= 1, {"dqn", "gamma"}, "must be in [0, 1]");
    r.require(d.epsilon.start >= 0 && d.epsilon.start <= 1, {"dqn", "epsilon_start"}, "must be in [0, 1]");
    r.require(d.epsilon.end >= 0 && d.epsilon.end <= 1, {"dqn", "epsilon_end"}, "must be in [0, 1]");
    r.require(cfg.epsilon_decay_fraction >= 0 && cfg.epsilon_decay_fraction <= 1,
              {"dqn", "epsilon_decay_fraction"}, "must be in [0, 1]");
    r.require(d.batch >= 1, {"dqn", "batch"}, "must be >= 1");
    r.require(d.replay_capacity >= d.batch, {"dqn", "replay_capacity"}, "must be >= batch");
    r.require(d.target_update >= 1, {"dqn", "target_update"}, "must be >= 1");
    r.require(d.adam.learning_rate > 0, {"dqn", "learning_rate"}, "must be > 0");
  }

  if (j.contains("federation")) {
    const json& o = j["federation"];
    const std::vector<std::string> p{"federation"};
    r.only_keys(o, p, {"aggregation_cycle", "rounds", "rooms"});
    auto& f = cfg.federation;
    f.aggregation_cycle = static_cast<int>(r.integer(o, p, "aggregation_cycle", f.aggregation_cycle));
    f.rounds = static_cast<int>(r.integer(o, p, "rounds", f.rounds));
    r.require(f.aggregation_cycle >= 1, {"federation", "aggregation_cycle"}, "must be >= 1");
    r.require(f.rounds >= 0, {"federation", "rounds"}, "must be >= 0");
    if (o.contains("rooms")) cfg.federation_rooms = parse_rooms(r, o["rooms"], {"federation", "rooms"}, base);
  }
  if (cfg.federation_rooms.empty()) cfg.federation_rooms = cfg.rooms;
  cfg.federation.rooms.clear();
  for (const auto& room : cfg.federation_rooms) cfg.federation.rooms.push_back(room.layout.name);

  try {
    cfg.policy = parse_policy(r.string(j, {}, "policy", to_string(cfg.policy)));
  } catch (const Error& ex) {
    r.fail({"policy"}, ex.what());
  }
  try {
    cfg.objective = baselines::parse_objective(r.string(j, {}, "objective", baselines::to_string(cfg.objective)));
  } catch (const Error& ex) {
    r.fail({"objective"}, ex.what());
  }
  cfg.label = r.string(j, {}, "label", "");
  if (cfg.label.empty()) cfg.label = cfg.policy == PolicyKind::dqn ? "single_rl" : to_string(cfg.policy);

  cfg.episodes = static_cast<int>(r.integer(j, {}, "episodes", cfg.episodes));
  r.require(cfg.episodes >= 0, {"episodes"}, "must be >= 0");
  cfg.eval_episodes = static_cast<int>(r.integer(j, {}, "eval_episodes", cfg.eval_episodes));
  r.require(cfg.eval_episodes >= 0, {"eval_episodes"}, "must be >= 0");

  if (j.contains("seeds")) {
    const json& s = j["seeds"];
    if (!s.is_array() || s.empty()) r.fail({"seeds"}, "expected a non-empty list of integers");
    cfg.seeds.clear();
    for (const auto& v : s) {
      if (!v.is_number_unsigned()) r.fail({"seeds"}, "seeds must be non-negative integers");
      cfg.seeds.push_back(v.get<std::uint64_t>());
    }
  }
  cfg.output_dir = r.string(j, {}, "output_dir", cfg.output_dir.string());

  // Cross-module checks for anything not covered above.
  try {
    env::validate(cfg.env);
    agent::validate(cfg.dqn);
  } catch (const Error& ex) {
    r.fail({}, ex.what());
  }
  const auto cells = cfg.rooms.front().layout.cells.size();
  for (std::size_t i = 0; i < cfg.rooms.size(); ++i) {
    r.require(cfg.rooms[i].layout.cells.size() == cells, {"rooms", std::to_string(i)},
              "all rooms in one experiment must have the same number of cells");
  }
  return cfg;
}

ExperimentConfig load_config(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open config " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_config(buf.str(), path);
}

agent::DqnConfig dqn_for(const ExperimentConfig& cfg, int total_episodes) {
  agent::DqnConfig d = cfg.dqn;
  d.epsilon.decay_episodes =
      static_cast<int>(std::lround(cfg.epsilon_decay_fraction * static_cast<double>(total_episodes)));
  return d;
}

approximator::NetworkSpec network_for(const env::Environment& env, const agent::DqnConfig& dqn) {
  approximator::NetworkSpec spec;
  spec.input_dim = static_cast<int>(env.state_size());
  spec.hidden_dims = dqn.hidden_dims;
  spec.output_dim = static_cast<int>(env.action_space().size());
  return spec;
}

}  // namespace fedcell::harness
