// End-to-end acceptance checks. Prints one PASS/FAIL line per criterion and
// exits non-zero if any fail.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <limits>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "fedcell/agent.hpp"
#include "fedcell/approximator.hpp"
#include "fedcell/baselines.hpp"
#include "fedcell/env.hpp"
#include "fedcell/federation.hpp"
#include "fedcell/geometry.hpp"
#include "fedcell/harness.hpp"
#include "fedcell/radio.hpp"
#include "support.hpp"

using namespace fedcell;
namespace fs = std::filesystem;

namespace {

// Reduced budget for the federation and adaptation runs.
constexpr int kAggregationCycle = 50;
constexpr int kRounds = 4;
constexpr int kAdaptEpisodes = 200;
const agent::EpsilonSchedule kAdaptEpsilon{0.9, 0.05, 160};

struct Outcome {
  bool pass = false;
  std::string detail;
};

geometry::RoomLayout room(char r) {
  return geometry::load_layout(fs::path(FEDCELL_DATA_DIR) / "rooms" /
                               (std::string("room_") + char(std::tolower(r)) + ".json"));
}

std::string fmt(const char* f, double a) {
  char buf[128];
  std::snprintf(buf, sizeof buf, f, a);
  return buf;
}

double median_of(std::vector<double> v) { return harness::median(std::move(v)); }

// ---------------------------------------------------------------------------

Outcome cqi_mapping() {
  // CQI SINR floors, transcribed here rather than read back from the library.
  const double floors[] = {-6.9360, -5.1470, -3.1800, -1.2530, 0.7610,  2.6990,  4.6940, 6.5250,
                           8.5730,  10.3660, 12.2890, 14.1730, 15.8880, 17.8140, 19.8290};
  int bad = 0;
  for (int k = 0; k < 15; ++k) {
    if (radio::sinr_to_cqi(floors[k]) != k + 1) ++bad;
    if (radio::sinr_to_cqi(floors[k] - 1e-6) != k) ++bad;
  }
  if (radio::sinr_to_cqi(-std::numeric_limits<double>::infinity()) != 0) ++bad;
  const double rate = radio::cqi_to_rate_bps(15, 20e6);
  const bool rate_ok = std::abs(rate - 20e6 * 6 * 948 / 1024.0) <= 1e3 && std::abs(rate - 111.094e6) <= 1e3;
  return {bad == 0 && rate_ok, std::to_string(bad) + " boundary mismatches, rate(15) = " + fmt("%.6f", rate * 1e-6) + " Mbps"};
}

Outcome pathloss_golden() {
  radio::RadioParams p;
  const double los = radio::pathloss_db(10.0, true, p);
  const double nlos = radio::pathloss_db(10.0, false, p);
  const bool ok = std::abs(los - 60.881) <= 1e-3 && std::abs(nlos - 73.696) <= 1e-3 &&
                  std::abs(los - testing::pathloss_oracle(10, true, 3.5, 1)) < 1e-12 &&
                  std::abs(nlos - testing::pathloss_oracle(10, false, 3.5, 1)) < 1e-12;
  return {ok, "LoS " + fmt("%.4f", los) + " dB, NLoS " + fmt("%.4f", nlos) + " dB"};
}

Outcome gradient_check() {
  double worst = 0.0;
  const int trials = 24;
  for (int t = 0; t < trials; ++t) {
    approximator::NetworkSpec s;
    s.input_dim = 2 + t % 9;
    s.hidden_dims = t % 3 == 0 ? std::vector<int>{12} : std::vector<int>{10 + t % 5, 6, 4};
    s.output_dim = 2 + t % 6;
    const auto params = testing::random_params(s, 1000 + static_cast<std::uint64_t>(t), 0.7);
    Rng rng = make_rng(2000 + static_cast<std::uint64_t>(t), 0);
    std::uniform_real_distribution<double> u(-1, 1);
    std::vector<double> x(static_cast<std::size_t>(s.input_dim));
    for (double& v : x) v = u(rng);
    const std::size_t a = uniform_index(rng, static_cast<std::size_t>(s.output_dim));
    const double target = 3.0 * u(rng);
    const auto g = approximator::gradient(params, x, a, target);
    const auto fd = testing::finite_difference_gradient(params, x, a, target, 1e-5);
    worst = std::max(worst, testing::max_relative_error(fd, g.values(), 1e-6));
  }
  return {worst < 1e-4, std::to_string(trials) + " triples, max relative error " + fmt("%.3g", worst)};
}

Outcome fedavg_identity() {
  approximator::NetworkSpec s;
  s.input_dim = 64;
  s.output_dim = 7;
  std::vector<approximator::ParameterSet> sets;
  for (std::uint64_t k = 0; k < 4; ++k) sets.push_back(testing::random_params(s, 500 + k));
  const auto avg = federation::fedavg(sets);
  const auto oracle = testing::scalar_mean_oracle(sets);
  double worst = 0.0;
  for (std::size_t i = 0; i < oracle.size(); ++i) worst = std::max(worst, std::abs(avg.values()[i] - oracle[i]));

  std::vector<std::size_t> order{0, 1, 2, 3};
  bool perm_ok = true;
  do {
    std::vector<approximator::ParameterSet> p;
    for (auto i : order) p.push_back(sets[i]);
    perm_ok = perm_ok && federation::fedavg(p) == avg;
  } while (std::next_permutation(order.begin(), order.end()));
  const std::vector<approximator::ParameterSet> one{sets[2]};
  const bool k1 = federation::fedavg(one) == sets[2];
  return {worst <= 1e-12 && perm_ok && k1, "max |avg - oracle| = " + fmt("%.3g", worst) +
                                               (perm_ok ? ", all 24 orders bit-equal" : ", permutation mismatch") +
                                               (k1 ? ", K=1 idempotent" : ", K=1 changed values")};
}

Outcome exhaustive_oracle() {
  int snapshots = 0, violations = 0;
  Rng pick = make_rng(31, 0);
  const char rooms[] = {'A', 'B', 'C', 'D', 'E'};
  for (char r : rooms) {
    env::Environment e(room(r), env::EnvConfig{});
    for (int k = 0; k < 20; ++k) {
      e.reset(9000 + static_cast<std::uint64_t>(k));
      const int steps = static_cast<int>(uniform_index(pick, 99));
      for (int i = 0; i < steps; ++i) e.step(baselines::random_action(e.action_space(), pick));
      const auto snap = e.snapshot();
      const auto obj = k % 2 == 0 ? baselines::Objective::sum_rate : baselines::Objective::q1;
      const auto choice = baselines::exhaustive_action(snap, e.action_space(), obj, e.config().radio);
      // Re-score independently: position-based attachment, oracle quantile.
      auto rescore = [&](std::span<const double> powers) {
        const auto att = radio::attach_ues(snap.next_positions, e.layout(), powers, e.config().radio);
        std::vector<double> mbps;
        double sum = 0.0;
        for (double x : att.ue_rate_bps) {
          mbps.push_back(x * 1e-6);
          sum += x * 1e-6;
        }
        return obj == baselines::Objective::sum_rate ? sum : testing::quantile_oracle(mbps, 0.25);
      };
      const double best = rescore(e.action_space().combos[choice.action]);
      for (const auto& combo : e.action_space().combos) {
        if (rescore(combo) > best + 1e-9) ++violations;
      }
      const auto ra = baselines::random_action(e.action_space(), pick);
      if (rescore(e.action_space().combos[ra]) > best + 1e-9) ++violations;
      ++snapshots;
    }
  }
  return {violations == 0 && snapshots >= 100,
          std::to_string(snapshots) + " snapshots, " + std::to_string(violations) + " dominance violations"};
}

Outcome dominant_convergence() {
  // Brute-force dominance check first.
  auto probe = testing::make_dominant_env();
  probe.reset(0);
  const auto snap = probe.snapshot();
  std::vector<double> q1;
  for (const auto& c : probe.action_space().combos) {
    q1.push_back(env::evaluate_powers(snap.next_gains, c, probe.config().radio, probe.cqi_table()).q1_mbps);
  }
  const std::size_t dominant = agent::argmax(q1);
  for (std::size_t a = 0; a < q1.size(); ++a) {
    if (a != dominant && !(q1[a] < q1[dominant])) return {false, "scenario has no strictly dominant action"};
  }

  const int episodes = 300;
  int good = 0;
  std::string per_seed;
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    auto e = testing::make_dominant_env();
    agent::DqnConfig cfg;  // defaults throughout
    cfg.epsilon.decay_episodes = static_cast<int>(std::lround(0.8 * episodes));
    approximator::NetworkSpec spec;
    spec.input_dim = static_cast<int>(e.state_size());
    spec.hidden_dims = cfg.hidden_dims;
    spec.output_dim = static_cast<int>(e.action_space().size());
    agent::DqnAgent learner(spec, cfg, seed);
    learner.run_episodes(e, episodes, seed * 7919);

    e.reset(0);
    int hits = 0, steps = 0;
    while (!e.done()) {
      const auto a = learner.greedy(e.state().flatten());
      hits += a == dominant;
      ++steps;
      e.step(a);
    }
    const double frac = static_cast<double>(hits) / steps;
    good += frac >= 0.9;
    per_seed += (per_seed.empty() ? "" : " ") + fmt("%.2f", frac);
  }
  return {good >= 4, std::to_string(good) + "/5 seeds at >= 90% greedy dominant selection after " +
                         std::to_string(episodes) + " episodes [" + per_seed + "]"};
}

// ---------------------------------------------------------------------------

struct Ordering {
  Outcome outcome;
  // every state seen during the training runs, for the invariant suite
  std::size_t states_checked = 0;
  std::size_t state_violations = 0;
};

void check_states(const agent::ReplayBuffer& replay, std::size_t& checked, std::size_t& bad, std::size_t n_cells) {
  for (std::size_t i = 0; i < replay.size(); ++i) {
    const auto& t = replay.at(i);
    for (const auto* s : {&t.state, &t.next_state}) {
      ++checked;
      double counts = 0.0;
      bool ok = true;
      for (std::size_t j = 0; j < s->size(); ++j) {
        const double v = (*s)[j];
        ok = ok && v >= 0.0 && v <= 1.0;
        if (j >= n_cells && j < 2 * n_cells) counts += v;
      }
      ok = ok && std::abs(counts - 1.0) < 1e-9;
      bad += !ok;
    }
  }
}

Ordering policy_ordering() {
  const int train_episodes = 500;
  const int eval_episodes = 50;
  Ordering out;
  std::string detail;
  bool pass = true;
  for (char r : {'A', 'B'}) {
    std::vector<double> rl, rnd;
    for (std::uint64_t seed = 1; seed <= 3; ++seed) {
      env::Environment e(room(r), env::EnvConfig{});
      agent::DqnConfig cfg;
      cfg.epsilon.decay_episodes = static_cast<int>(std::lround(0.8 * train_episodes));
      approximator::NetworkSpec spec;
      spec.input_dim = static_cast<int>(e.state_size());
      spec.hidden_dims = cfg.hidden_dims;
      spec.output_dim = static_cast<int>(e.action_space().size());
      agent::DqnAgent learner(spec, cfg, seed);
      learner.run_episodes(e, train_episodes, seed * 1000003ULL);
      // replay capacity covers the whole run: 500 episodes x 100 steps
      check_states(learner.replay(), out.states_checked, out.state_violations, e.n_cells());

      const std::uint64_t eval_base = 50000000ULL + seed * 1000;
      const auto g = env::rollout(e, agent::greedy_policy(learner.online()), eval_episodes, eval_base);
      const auto x = env::rollout(e, baselines::random_policy(seed), eval_episodes, eval_base);
      rl.push_back(harness::summarize("acceptance", std::string(1, r), "single_rl", seed, g).cumulative_q1_mbps);
      rnd.push_back(harness::summarize("acceptance", std::string(1, r), "random", seed, x).cumulative_q1_mbps);
    }
    const double m_rl = median_of(rl), m_rnd = median_of(rnd);
    pass = pass && m_rl - m_rnd > 0.0;
    detail += std::string(detail.empty() ? "" : "; ") + "room " + r + ": single_rl " + fmt("%.1f", m_rl) +
              " vs random " + fmt("%.1f", m_rnd) + " (margin " + fmt("%+.1f", m_rl - m_rnd) + ")";
  }
  out.outcome = {pass, detail + " [median cumulative Q1 over 3 seeds, Mbps]"};
  return out;
}

// ---------------------------------------------------------------------------

struct FederationRun {
  fs::path dir;
  int aggregation_cycle = 0;
  int rounds = 0;
  bool ok = false;
  std::string error;
};

FederationRun federate(const fs::path& work, int aggregation_cycle, int rounds) {
  FederationRun run;
  run.dir = work / "federation";
  run.aggregation_cycle = aggregation_cycle;
  run.rounds = rounds;
  const fs::path cfg_path = work / "federate.json";
  std::ofstream(cfg_path) << "{\n  \"scenario\": \"acceptance\",\n  \"rooms\": [\"A\", \"B\", \"C\", \"D\"],\n"
                          << "  \"federation\": {\"aggregation_cycle\": " << aggregation_cycle
                          << ", \"rounds\": " << rounds << "},\n  \"seeds\": [1]\n}\n";
  harness::CommandOptions o;
  o.config = cfg_path;
  o.out = run.dir;
  o.force = true;
  std::ostringstream out, err;
  run.ok = harness::cmd_federate(o, out, err) == 0;
  run.error = err.str();
  return run;
}

std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::string field;
  std::istringstream in(s);
  while (std::getline(in, field, sep)) out.push_back(field);
  return out;
}

Outcome trace_shape(const FederationRun& run) {
  if (!run.ok) return {false, "federation run failed: " + run.error};
  std::ifstream in(run.dir / "federation.csv");
  std::string line;
  std::getline(in, line);
  std::vector<std::vector<std::string>> rows;
  while (std::getline(in, line)) rows.push_back(split(line, ','));
  if (static_cast<int>(rows.size()) != run.rounds) return {false, "expected " + std::to_string(run.rounds) + " rows"};

  // Round 0 broadcasts the seed-1 initial model; later rounds the previous global.
  const auto initial = approximator::load_checkpoint(run.dir / "global_round_0.ckpt").spec();
  std::string previous = approximator::digest(approximator::initialize(initial, 1));
  int cadence_bad = 0, broadcast_bad = 0;
  for (std::size_t r = 0; r < rows.size(); ++r) {
    const auto& f = rows[r];
    if (std::stoi(f[1]) != run.aggregation_cycle * static_cast<int>(r + 1)) ++cadence_bad;
    if (f[5] != "1") ++broadcast_bad;
    for (const auto& d : split(f[4], ';')) broadcast_bad += d != previous;
    const auto saved = approximator::load_checkpoint(run.dir / ("global_round_" + std::to_string(r) + ".ckpt"));
    if (approximator::digest(saved) != f[2]) ++broadcast_bad;
    previous = f[2];
  }
  // Client logs: exactly rounds x E episodes each.
  int log_bad = 0;
  for (char r : {'A', 'B', 'C', 'D'}) {
    std::ifstream log(run.dir / (std::string("client_") + r + "_episodes.csv"));
    int n = -1;
    while (std::getline(log, line)) ++n;
    log_bad += n != run.rounds * run.aggregation_cycle;
  }
  return {cadence_bad == 0 && broadcast_bad == 0 && log_bad == 0,
          std::to_string(rows.size()) + " aggregations at every " + std::to_string(run.aggregation_cycle) +
              " episodes; cadence errors " + std::to_string(cadence_bad) + ", broadcast mismatches " +
              std::to_string(broadcast_bad) + ", log length errors " + std::to_string(log_bad)};
}

Outcome adaptation_speedup(const FederationRun& run, int episodes, const agent::EpsilonSchedule& eps) {
  if (!run.ok) return {false, "federation run failed: " + run.error};
  const auto global =
      approximator::load_checkpoint(run.dir / ("global_round_" + std::to_string(run.rounds - 1) + ".ckpt"));
  agent::DqnConfig cfg;
  cfg.epsilon = eps;
  const std::size_t window = 10;
  std::vector<double> pre_reach, scratch_reach;
  std::string detail;
  for (std::uint64_t seed = 1; seed <= 3; ++seed) {
    env::Environment e(room('E'), env::EnvConfig{});
    const auto pre = federation::adapt(global, e, cfg, episodes, seed);
    const auto scr = federation::train_from_scratch(e, cfg, episodes, seed, seed);
    auto curve = [](const std::vector<env::EpisodeLog>& logs) {
      std::vector<double> c;
      for (const auto& l : logs) c.push_back(l.cumulative_reward);
      return c;
    };
    const auto cp = curve(pre.logs), cs = curve(scr.logs);
    const auto rp = harness::episodes_to_fraction(cp, 0.8, window);
    const auto rs = harness::episodes_to_fraction(cs, 0.8, window);
    pre_reach.push_back(static_cast<double>(rp));
    scratch_reach.push_back(static_cast<double>(rs));
    detail += " seed " + std::to_string(seed) + ": " + std::to_string(rp) + " vs " + std::to_string(rs) + ";";
  }
  const double mp = median_of(pre_reach), ms = median_of(scratch_reach);
  return {mp < ms, "median episodes to 80% of final episode reward: pretrained " + fmt("%.0f", mp) + " vs scratch " +
                       fmt("%.0f", ms) + " [" + detail + " ]"};
}

// ---------------------------------------------------------------------------

Outcome invariants(const Ordering& ordering) {
  // Billiard containment and speed over 1e5 steps per room.
  std::size_t escapes = 0, speed_bad = 0, total = 0;
  for (char r : {'A', 'B', 'C', 'D', 'E'}) {
    const auto layout = room(r);
    Rng rng = make_rng(123, static_cast<std::uint64_t>(r));
    std::uniform_real_distribution<double> ang(0.0, 2.0 * M_PI);
    const double a = ang(rng);
    geometry::Vec2 pos = layout.cells[0].xy();
    geometry::Vec2 vel{0.5 * std::cos(a), 0.5 * std::sin(a)};
    const double speed = geometry::norm(vel);
    for (int i = 0; i < 100000; ++i) {
      std::tie(pos, vel) = geometry::billiard_step(pos, vel, layout);
      escapes += !layout.contains(pos);
      speed_bad += std::abs(geometry::norm(vel) - speed) > 1e-9 * speed;
      ++total;
    }
  }

  // Reward telescoping per episode under a random policy.
  std::size_t episodes = 0, tele_bad = 0;
  double worst = 0.0;
  for (char r : {'A', 'B', 'C', 'D', 'E'}) {
    env::Environment e(room(r), env::EnvConfig{});
    Rng rng = make_rng(456, static_cast<std::uint64_t>(r));
    for (int k = 0; k < 10; ++k) {
      e.reset(static_cast<std::uint64_t>(k));
      double sum = 0.0;
      while (!e.done()) sum += e.step(baselines::random_action(e.action_space(), rng)).reward;
      const double expect = e.q1() - e.initial_q1();
      const double scale = std::max({std::abs(e.q1()), std::abs(e.initial_q1()), 1.0});
      const double rel = std::abs(sum - expect) / scale;
      worst = std::max(worst, rel);
      tele_bad += rel > 1e-9;
      ++episodes;
    }
  }
  const bool ok = escapes == 0 && speed_bad == 0 && tele_bad == 0 && ordering.state_violations == 0 &&
                  ordering.states_checked > 0;
  return {ok, std::to_string(total) + " billiard steps (" + std::to_string(escapes) + " escapes, " +
                  std::to_string(speed_bad) + " speed drifts); " + std::to_string(ordering.states_checked) +
                  " training states (" + std::to_string(ordering.state_violations) + " out of bounds); " +
                  std::to_string(episodes) + " episodes telescoping, worst rel error " + fmt("%.2g", worst)};
}

}  // namespace

int main() {
  using clock = std::chrono::steady_clock;
  int failures = 0;
  auto report = [&](int id, const Outcome& o, clock::time_point start) {
    const double secs = std::chrono::duration<double>(clock::now() - start).count();
    std::printf("ACCEPTANCE %d: %s - %s (%.1f s)\n", id, o.pass ? "PASS" : "FAIL", o.detail.c_str(), secs);
    std::fflush(stdout);
    failures += !o.pass;
  };
  auto timed = [&](int id, const std::function<Outcome()>& fn) {
    const auto start = clock::now();
    report(id, fn(), start);
  };

  const fs::path work = fs::temp_directory_path() / "fedcell_acceptance";
  fs::remove_all(work);
  fs::create_directories(work);

  timed(1, cqi_mapping);
  timed(2, pathloss_golden);
  timed(3, gradient_check);
  timed(4, fedavg_identity);
  timed(5, exhaustive_oracle);
  timed(6, dominant_convergence);

  auto start = clock::now();
  const Ordering ordering = policy_ordering();
  report(7, ordering.outcome, start);

  start = clock::now();
  const FederationRun run = federate(work, kAggregationCycle, kRounds);
  const auto fed_time = clock::now() - start;
  start = clock::now() - fed_time;
  report(8, adaptation_speedup(run, kAdaptEpisodes, kAdaptEpsilon), start);
  timed(9, [&] { return trace_shape(run); });

  start = clock::now();
  report(10, invariants(ordering), start);

  fs::remove_all(work);
  std::printf("ACCEPTANCE SUMMARY: %d/10 passed\n", 10 - failures);
  return failures == 0 ? 0 : 1;
}
