#include "fedcell/env.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <ostream>

#include "fedcell/error.hpp"
#include "fedcell/units.hpp"

namespace fedcell::env {

namespace {

// Power levels are multiples of small dB steps; compare differences on a
// 1e-9 dB grid so 22.5 - 21.0 and 24.0 - 22.5 land in the same class.
long long quantize_db(double db) { return std::llround(db * 1e9); }

}  // namespace

ActionMode parse_action_mode(const std::string& name) {
  if (name == "full") return ActionMode::full;
  if (name == "dedup_keep_max") return ActionMode::dedup_keep_max;
  throw Error("unknown action mode '" + name + "' (expected full or dedup_keep_max)");
}

std::string to_string(ActionMode mode) {
  return mode == ActionMode::full ? "full" : "dedup_keep_max";
}

std::optional<std::size_t> ActionSpace::find(std::span<const double> powers) const {
  for (std::size_t i = 0; i < combos.size(); ++i) {
    if (std::equal(combos[i].begin(), combos[i].end(), powers.begin(), powers.end())) return i;
  }
  return std::nullopt;
}

ActionSpace build_action_space(std::span<const double> levels, int n_cells, ActionMode mode) {
  if (levels.empty()) throw Error("action space: power level list is empty");
  if (n_cells < 1) throw Error("action space: need at least one cell");
  for (std::size_t i = 1; i < levels.size(); ++i) {
    if (!(levels[i] > levels[i - 1])) throw Error("action space: levels must be strictly increasing");
  }

  ActionSpace space;
  space.levels_dbm.assign(levels.begin(), levels.end());
  space.mode = mode;

  const std::size_t base = levels.size();
  std::size_t total = 1;
  for (int c = 0; c < n_cells; ++c) total *= base;

  std::vector<std::vector<double>> all;
  all.reserve(total);
  for (std::size_t idx = 0; idx < total; ++idx) {
    std::vector<double> combo(static_cast<std::size_t>(n_cells));
    std::size_t rest = idx;
    for (int c = n_cells - 1; c >= 0; --c) {
      combo[static_cast<std::size_t>(c)] = levels[rest % base];
      rest /= base;
    }
    all.push_back(std::move(combo));
  }

  if (mode == ActionMode::full) {
    space.combos = std::move(all);
    return space;
  }

  // class key: pairwise differences p_i - p_j for i < j
  std::map<std::vector<long long>, std::size_t> best;
  for (std::size_t idx = 0; idx < all.size(); ++idx) {
    const auto& combo = all[idx];
    std::vector<long long> key;
    for (std::size_t i = 0; i < combo.size(); ++i) {
      for (std::size_t j = i + 1; j < combo.size(); ++j) key.push_back(quantize_db(combo[i] - combo[j]));
    }
    const double total_power = std::accumulate(combo.begin(), combo.end(), 0.0);
    auto [it, inserted] = best.try_emplace(key, idx);
    if (!inserted) {
      const auto& cur = all[it->second];
      if (total_power > std::accumulate(cur.begin(), cur.end(), 0.0)) it->second = idx;
    }
  }
  std::vector<std::size_t> keep;
  for (const auto& [key, idx] : best) keep.push_back(idx);
  std::sort(keep.begin(), keep.end());
  for (std::size_t idx : keep) space.combos.push_back(all[idx]);
  return space;
}

std::vector<double> StateVector::flatten() const {
  std::vector<double> out;
  out.reserve(size());
  out.insert(out.end(), norm_powers.begin(), norm_powers.end());
  out.insert(out.end(), norm_counts.begin(), norm_counts.end());
  out.insert(out.end(), norm_cqi.begin(), norm_cqi.end());
  return out;
}

StateVector encode_state(std::span<const double> powers_dbm, const radio::Attachment& attachment,
                         const ActionSpace& space, int max_cqi) {
  const double lo = space.levels_dbm.front();
  const double hi = space.levels_dbm.back();
  const std::size_t m_cells = attachment.n_cells;
  const std::size_t n_ues = attachment.n_ues;

  StateVector s;
  s.norm_powers.resize(m_cells);
  for (std::size_t m = 0; m < m_cells; ++m) {
    const double v = hi > lo ? (powers_dbm[m] - lo) / (hi - lo) : 1.0;
    s.norm_powers[m] = std::clamp(v, 0.0, 1.0);
  }
  s.norm_counts.resize(m_cells);
  for (std::size_t m = 0; m < m_cells; ++m) {
    s.norm_counts[m] = n_ues > 0 ? static_cast<double>(attachment.ues_on(m)) / n_ues : 0.0;
  }
  s.norm_cqi.resize(m_cells * n_ues);
  for (std::size_t m = 0; m < m_cells; ++m) {
    for (std::size_t n = 0; n < n_ues; ++n) {
      s.norm_cqi[m * n_ues + n] = static_cast<double>(attachment.link(m, n).cqi) / max_cqi;
    }
  }
  return s;
}

double q1_throughput(std::span<const double> per_ue_rates_bps) {
  if (per_ue_rates_bps.empty()) throw Error("q1_throughput: empty rate list");
  std::vector<double> sorted(per_ue_rates_bps.begin(), per_ue_rates_bps.end());
  std::sort(sorted.begin(), sorted.end());
  const double pos = 0.25 * static_cast<double>(sorted.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const std::size_t hi = std::min(lo + 1, sorted.size() - 1);
  const double frac = pos - static_cast<double>(lo);
  return units::bps_to_mbps(sorted[lo] + frac * (sorted[hi] - sorted[lo]));
}

void validate(const EnvConfig& cfg) {
  radio::validate(cfg.radio);
  geometry::validate(cfg.mobility);
  if (cfg.levels_dbm.empty()) throw Error("env.levels_dbm must not be empty");
  if (cfg.steps_per_episode < 1) throw Error("env.steps_per_episode must be >= 1");
  if (std::find(cfg.levels_dbm.begin(), cfg.levels_dbm.end(), cfg.initial_power_dbm) ==
      cfg.levels_dbm.end()) {
    throw Error("env.initial_power_dbm must be one of the power levels");
  }
}

Evaluation evaluate_powers(const radio::PathGains& gains, std::span<const double> powers_dbm,
                           const radio::RadioParams& params, const radio::CqiTable& table) {
  Evaluation e;
  e.attachment = radio::attach_ues(gains, powers_dbm, params, table);
  const auto& rates = e.attachment.ue_rate_bps;
  e.q1_mbps = q1_throughput(rates);
  const double sum = std::accumulate(rates.begin(), rates.end(), 0.0);
  e.sum_mbps = units::bps_to_mbps(sum);
  e.mean_mbps = e.sum_mbps / static_cast<double>(rates.size());
  return e;
}

Environment::Environment(geometry::RoomLayout layout, EnvConfig cfg, const radio::CqiTable& table)
    : layout_(std::move(layout)), cfg_(std::move(cfg)), table_(&table) {
  geometry::validate(layout_);
  validate(cfg_);
  space_ = build_action_space(cfg_.levels_dbm, static_cast<int>(layout_.cells.size()), cfg_.mode);
  const std::vector<double> initial(layout_.cells.size(), cfg_.initial_power_dbm);
  if (!space_.find(initial)) throw Error("initial power vector is not in the action space");
}

void Environment::set_fixed_trajectories(std::vector<geometry::Trajectory> trajectories) {
  if (trajectories.size() != n_ues()) throw Error("fixed trajectories: one per UE required");
  for (const auto& tr : trajectories) {
    if (tr.size() < static_cast<std::size_t>(cfg_.steps_per_episode) + 1) {
      throw Error("fixed trajectories: need steps_per_episode + 1 positions");
    }
  }
  fixed_ = std::move(trajectories);
}

void Environment::measure() {
  positions_.resize(n_ues());
  for (std::size_t n = 0; n < n_ues(); ++n) positions_[n] = trajectories_[n][static_cast<std::size_t>(t_)];
  const auto gains = radio::compute_path_gains(positions_, layout_, cfg_.radio);
  Evaluation e = evaluate_powers(gains, powers_, cfg_.radio, *table_);
  attachment_ = std::move(e.attachment);
  q1_ = e.q1_mbps;
  mean_ = e.mean_mbps;
  state_ = encode_state(powers_, attachment_, space_, table_->max_cqi());
}

StateVector Environment::reset(std::uint64_t seed) {
  if (fixed_) {
    trajectories_ = *fixed_;
  } else {
    geometry::MobilityConfig mob = cfg_.mobility;
    mob.seed = seed;
    trajectories_ = geometry::generate_trajectories(layout_, mob, cfg_.steps_per_episode + 1);
  }
  t_ = 0;
  started_ = true;
  powers_.assign(n_cells(), cfg_.initial_power_dbm);
  measure();
  initial_q1_ = q1_;
  return state_;
}

StepOutcome Environment::step(std::size_t action) {
  if (!started_) throw Error("step called before reset");
  if (done()) throw Error("step called after the episode finished; call reset");
  if (action >= space_.size()) throw Error("action index " + std::to_string(action) + " out of range");

  const double previous_q1 = q1_;
  powers_ = space_.combos[action];
  ++t_;
  measure();

  StepOutcome out;
  out.state = state_;
  out.reward = q1_ - previous_q1;
  out.per_ue_rates = attachment_.ue_rate_bps;
  out.q1 = q1_;
  out.mean_rate = mean_;
  out.done = done();
  return out;
}

Snapshot Environment::snapshot() const {
  if (!started_) throw Error("snapshot requires a reset environment");
  if (done()) throw Error("snapshot: episode finished");
  Snapshot s;
  s.next_positions.resize(n_ues());
  for (std::size_t n = 0; n < n_ues(); ++n) {
    s.next_positions[n] = trajectories_[n][static_cast<std::size_t>(t_ + 1)];
  }
  s.next_gains = radio::compute_path_gains(s.next_positions, layout_, cfg_.radio);
  s.current_powers_dbm = powers_;
  s.previous_q1 = q1_;
  return s;
}

std::vector<EpisodeLog> rollout(Environment& env, const Policy& policy, int episodes,
                                std::uint64_t seed_base, std::vector<TraceRow>* trace) {
  std::vector<EpisodeLog> logs;
  for (int ep = 0; ep < episodes; ++ep) {
    env.reset(seed_base + static_cast<std::uint64_t>(ep));
    EpisodeLog log;
    log.episode = ep;
    int steps = 0;
    while (!env.done()) {
      const std::size_t action = policy(env);
      const StepOutcome out = env.step(action);
      log.cumulative_reward += out.reward;
      log.mean_q1_mbps += out.q1;
      log.mean_rate_mbps += out.mean_rate;
      ++steps;
      if (trace != nullptr) {
        trace->push_back({env.t(), action, env.action_space().combos[action], out.q1,
                          out.mean_rate, out.reward});
      }
    }
    if (steps > 0) {
      log.mean_q1_mbps /= steps;
      log.mean_rate_mbps /= steps;
    }
    logs.push_back(log);
  }
  return logs;
}

void write_trace_csv(std::ostream& out, std::span<const TraceRow> rows, std::size_t n_cells) {
  out << "step,action";
  for (std::size_t m = 0; m < n_cells; ++m) out << ",power_dbm_" << m;
  out << ",q1_mbps,mean_mbps,reward\n";
  for (const auto& r : rows) {
    out << r.step << ',' << r.action;
    for (double p : r.powers_dbm) out << ',' << p;
    out << ',' << r.q1_mbps << ',' << r.mean_mbps << ',' << r.reward << '\n';
  }
}

}  // namespace fedcell::env
