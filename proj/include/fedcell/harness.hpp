#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "fedcell/agent.hpp"
#include "fedcell/baselines.hpp"
#include "fedcell/env.hpp"
#include "fedcell/federation.hpp"
#include "fedcell/geometry.hpp"

namespace fedcell::harness {

enum class PolicyKind { dqn, random, exhaustive };

PolicyKind parse_policy(const std::string& name);
std::string to_string(PolicyKind kind);

struct RoomRef {
  std::string name;  // as written in the config
  std::filesystem::path path;
  geometry::RoomLayout layout;
};

struct ExperimentConfig {
  std::string scenario = "experiment";
  std::vector<RoomRef> rooms;
  env::EnvConfig env;
  agent::DqnConfig dqn;
  double epsilon_decay_fraction = 0.8;
  federation::FederationConfig federation;
  std::vector<RoomRef> federation_rooms;
  PolicyKind policy = PolicyKind::dqn;
  baselines::Objective objective = baselines::Objective::sum_rate;
  std::string label;  // policy name in metrics; defaults from `policy`
  int episodes = 2000;
  int eval_episodes = 50;
  std::vector<std::uint64_t> seeds{1};
  std::filesystem::path output_dir = "runs";
  std::filesystem::path source;  // config file, for diagnostics
};

/// Directory holding rooms/ and cqi_table.csv. FEDCELL_DATA overrides the
/// build-time default.
std::filesystem::path data_dir();

/// "A".."E" name the shipped rooms; anything else is a path relative to
/// `base`.
std::filesystem::path resolve_room(const std::string& ref, const std::filesystem::path& base);

/// Parses and validates a config document. Errors are fedcell::Error with
/// "<source>:<line>: <key path>: <problem>" messages.
ExperimentConfig parse_config(std::string_view text, const std::filesystem::path& source = "config");
ExperimentConfig load_config(const std::filesystem::path& path);

/// Epsilon schedule decaying over the given fraction of `total_episodes`.
agent::DqnConfig dqn_for(const ExperimentConfig& cfg, int total_episodes);

approximator::NetworkSpec network_for(const env::Environment& env, const agent::DqnConfig& dqn);

struct MetricsRow {
  std::string scenario;
  std::string room;
  std::string policy;
  std::uint64_t seed = 0;
  double cumulative_q1_mbps = 0.0;
  double cumulative_avg_mbps = 0.0;
  int episodes = 0;
};

/// Sums per-episode mean Q1 and mean rate over the evaluation episodes.
MetricsRow summarize(const std::string& scenario, const std::string& room, const std::string& policy,
                     std::uint64_t seed, std::span<const env::EpisodeLog> logs);

void write_metrics_csv(std::ostream& out, std::span<const MetricsRow> rows);
std::vector<MetricsRow> read_metrics_csv(std::istream& in);

/// Policy rows x {Q1, Avg} criteria x room columns, median over seeds.
/// Missing (policy, room) cells are empty.
struct ReportTable {
  std::vector<std::string> policies;
  std::vector<std::string> rooms;
  // values[p][criterion][r]; criterion 0 = Q1, 1 = Avg
  std::vector<std::vector<std::vector<std::optional<double>>>> values;
};

double median(std::vector<double> values);
ReportTable build_report(std::span<const MetricsRow> rows);
void write_report_csv(std::ostream& out, const ReportTable& table);
void write_report_text(std::ostream& out, const ReportTable& table);

/// First index i >= window-1 at which the median of curve[i-window+1..i]
/// reaches `fraction` of the final window's median. Returns curve.size()
/// if never reached.
std::size_t episodes_to_fraction(std::span<const double> curve, double fraction, std::size_t window);

/// Output directory guard: refuses a non-empty directory without force,
/// records created files and removes them again on rollback.
class OutputDir {
 public:
  OutputDir(std::filesystem::path dir, bool force);
  ~OutputDir();
  OutputDir(const OutputDir&) = delete;
  OutputDir& operator=(const OutputDir&) = delete;

  const std::filesystem::path& path() const { return dir_; }
  /// Path for a new output file; it is removed on rollback.
  std::filesystem::path file(const std::string& name);
  void commit() { committed_ = true; }
  void rollback();

 private:
  std::filesystem::path dir_;
  bool created_ = false;
  bool committed_ = false;
  std::vector<std::filesystem::path> files_;
};

struct CommandOptions {
  std::filesystem::path config;
  std::optional<std::filesystem::path> out;
  std::optional<std::uint64_t> seed;
  std::optional<std::filesystem::path> checkpoint;
  bool force = false;
};

/// CLI subcommands. Each returns a process exit code; diagnostics go to
/// `err`, summaries to `out`.
int cmd_train(const CommandOptions& opts, std::ostream& out, std::ostream& err);
int cmd_federate(const CommandOptions& opts, std::ostream& out, std::ostream& err);
int cmd_eval(const CommandOptions& opts, std::ostream& out, std::ostream& err);
int cmd_adapt(const CommandOptions& opts, std::ostream& out, std::ostream& err);
int cmd_report(const std::filesystem::path& metrics_dir, std::ostream& out, std::ostream& err);

}  // namespace fedcell::harness
