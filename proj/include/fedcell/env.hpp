#pragma once

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "fedcell/geometry.hpp"
#include "fedcell/radio.hpp"

namespace fedcell::env {

enum class ActionMode { full, dedup_keep_max };

ActionMode parse_action_mode(const std::string& name);
std::string to_string(ActionMode mode);

/// Discrete joint power settings, one power vector (dBm per cell) per action.
struct ActionSpace {
  std::vector<double> levels_dbm;
  std::vector<std::vector<double>> combos;
  ActionMode mode = ActionMode::full;

  std::size_t size() const { return combos.size(); }
  std::size_t n_cells() const { return combos.empty() ? 0 : combos.front().size(); }
  /// Index of an exact power vector, if present.
  std::optional<std::size_t> find(std::span<const double> powers) const;
};

/// Cartesian product of `levels` over `n_cells` cells, cell 0 most
/// significant. dedup_keep_max keeps one combo per vector of pairwise dB
/// differences: the one with the largest total power.
ActionSpace build_action_space(std::span<const double> levels, int n_cells, ActionMode mode);

struct StateVector {
  std::vector<double> norm_powers;  // M
  std::vector<double> norm_counts;  // M
  std::vector<double> norm_cqi;     // M*N, cell-major

  std::size_t size() const { return norm_powers.size() + norm_counts.size() + norm_cqi.size(); }
  std::vector<double> flatten() const;
};

inline std::size_t state_dim(std::size_t n_cells, std::size_t n_ues) {
  return 2 * n_cells + n_cells * n_ues;
}

StateVector encode_state(std::span<const double> powers_dbm, const radio::Attachment& attachment,
                         const ActionSpace& space, int max_cqi = 15);

/// 0.25 quantile in Mbps, linear interpolation between order statistics
/// (position 0.25 * (n - 1) in the sorted sample).
double q1_throughput(std::span<const double> per_ue_rates_bps);

struct StepOutcome {
  StateVector state;
  double reward = 0.0;  // Mbps
  std::vector<double> per_ue_rates;  // bps
  double q1 = 0.0;         // Mbps
  double mean_rate = 0.0;  // Mbps
  bool done = false;
};

struct EnvConfig {
  radio::RadioParams radio;
  geometry::MobilityConfig mobility;
  std::vector<double> levels_dbm{19.5, 21.0, 22.5, 24.0};
  ActionMode mode = ActionMode::dedup_keep_max;
  double initial_power_dbm = 24.0;
  int steps_per_episode = 100;
};

void validate(const EnvConfig& cfg);

/// Everything needed to score candidate power vectors for the next step
/// without touching the live environment.
struct Snapshot {
  std::vector<geometry::Vec3> next_positions;
  radio::PathGains next_gains;
  std::vector<double> current_powers_dbm;
  double previous_q1 = 0.0;
};

struct Evaluation {
  radio::Attachment attachment;
  double q1_mbps = 0.0;
  double mean_mbps = 0.0;
  double sum_mbps = 0.0;
};

Evaluation evaluate_powers(const radio::PathGains& gains, std::span<const double> powers_dbm,
                           const radio::RadioParams& params, const radio::CqiTable& table);

/// One room as an episodic MDP. Step order: apply powers, move UEs,
/// re-attach by RSRP, measure, reward = Q1(now) - Q1(previous step).
class Environment {
 public:
  Environment(geometry::RoomLayout layout, EnvConfig cfg,
              const radio::CqiTable& table = radio::CqiTable::standard());

  /// Regenerates trajectories from `seed`, sets every cell to the initial
  /// power, attaches and returns s_0.
  StateVector reset(std::uint64_t seed);
  StepOutcome step(std::size_t action);

  /// Replays these positions instead of generating billiard runs. Each
  /// trajectory needs steps_per_episode + 1 entries (index 0 is s_0).
  void set_fixed_trajectories(std::vector<geometry::Trajectory> trajectories);

  Snapshot snapshot() const;

  const ActionSpace& action_space() const { return space_; }
  const geometry::RoomLayout& layout() const { return layout_; }
  const EnvConfig& config() const { return cfg_; }
  const radio::CqiTable& cqi_table() const { return *table_; }
  std::size_t n_cells() const { return layout_.cells.size(); }
  std::size_t n_ues() const { return static_cast<std::size_t>(cfg_.mobility.n_ues); }
  std::size_t state_size() const { return state_dim(n_cells(), n_ues()); }

  int t() const { return t_; }
  bool done() const { return t_ >= cfg_.steps_per_episode; }
  bool started() const { return started_; }
  const StateVector& state() const { return state_; }
  const radio::Attachment& attachment() const { return attachment_; }
  std::span<const double> powers_dbm() const { return powers_; }
  double q1() const { return q1_; }
  double initial_q1() const { return initial_q1_; }
  std::span<const geometry::Vec3> positions() const { return positions_; }

 private:
  void measure();

  geometry::RoomLayout layout_;
  EnvConfig cfg_;
  const radio::CqiTable* table_;
  ActionSpace space_;
  std::optional<std::vector<geometry::Trajectory>> fixed_;
  std::vector<geometry::Trajectory> trajectories_;

  bool started_ = false;
  int t_ = 0;
  std::vector<double> powers_;
  std::vector<geometry::Vec3> positions_;
  radio::Attachment attachment_;
  StateVector state_;
  double q1_ = 0.0;
  double mean_ = 0.0;
  double initial_q1_ = 0.0;
};

/// Per-episode summary shared by learning agents and baselines.
struct EpisodeLog {
  int episode = 0;
  double cumulative_reward = 0.0;
  double mean_q1_mbps = 0.0;
  double mean_rate_mbps = 0.0;
  double epsilon = 0.0;
};

/// Per-step record for trace export.
struct TraceRow {
  int step = 0;
  std::size_t action = 0;
  std::vector<double> powers_dbm;
  double q1_mbps = 0.0;
  double mean_mbps = 0.0;
  double reward = 0.0;
};

using Policy = std::function<std::size_t(const Environment&)>;

/// Runs `episodes` episodes of `policy`; episode k resets with
/// `seed_base + k`. Optionally collects per-step traces.
std::vector<EpisodeLog> rollout(Environment& env, const Policy& policy, int episodes,
                                std::uint64_t seed_base, std::vector<TraceRow>* trace = nullptr);

void write_trace_csv(std::ostream& out, std::span<const TraceRow> rows, std::size_t n_cells);

}  // namespace fedcell::env
