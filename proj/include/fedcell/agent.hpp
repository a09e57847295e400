#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "fedcell/approximator.hpp"
#include "fedcell/env.hpp"
#include "fedcell/random.hpp"

namespace fedcell::agent {

struct Transition {
  std::vector<double> state;
  std::size_t action = 0;
  double reward = 0.0;
  std::vector<double> next_state;
  bool done = false;
};

/// Bounded FIFO; the oldest transition is evicted first.
class ReplayBuffer {
 public:
  explicit ReplayBuffer(std::size_t capacity);

  void push(Transition t);
  std::size_t size() const { return items_.size(); }
  std::size_t capacity() const { return capacity_; }
  bool empty() const { return items_.empty(); }
  void clear();

  /// Uniform sample of `batch` distinct transitions.
  std::vector<const Transition*> sample(std::size_t batch, Rng& rng) const;

  /// i-th oldest transition.
  const Transition& at(std::size_t i) const;

 private:
  std::size_t capacity_;
  std::vector<Transition> items_;
  std::size_t head_ = 0;  // oldest, once full
};

/// Linear decay from `start` to `end` over the first `decay_episodes`
/// episodes, constant afterwards.
struct EpsilonSchedule {
  double start = 0.9;
  double end = 0.05;
  int decay_episodes = 0;

  double at(int episode) const;
};

struct DqnConfig {
  double gamma = 0.98;
  EpsilonSchedule epsilon;
  std::size_t batch = 128;
  int target_update = 100;  // gradient steps between hard target copies
  std::size_t replay_capacity = 50000;
  std::vector<int> hidden_dims{200, 100, 50};
  approximator::AdamConfig adam;
};

void validate(const DqnConfig& cfg);

/// Epsilon-greedy; greedy ties go to the lowest index.
std::size_t select_action(std::span<const double> q_values, double epsilon, Rng& rng);

std::size_t argmax(std::span<const double> values);

/// r + gamma * max_a' Qhat(s', a'), or r when the transition is terminal.
double td_target(const Transition& t, const approximator::ParameterSet& target_params, double gamma);

/// One client's DQN learner: online and target networks, optimizer state,
/// replay memory and exploration RNG.
class DqnAgent {
 public:
  DqnAgent(approximator::NetworkSpec spec, DqnConfig cfg, std::uint64_t seed);
  DqnAgent(const approximator::ParameterSet& initial, DqnConfig cfg, std::uint64_t seed);

  const DqnConfig& config() const { return cfg_; }
  const approximator::NetworkSpec& spec() const { return online_.spec(); }
  const approximator::ParameterSet& online() const { return online_; }
  const approximator::ParameterSet& target() const { return target_; }
  ReplayBuffer& replay() { return replay_; }
  const ReplayBuffer& replay() const { return replay_; }
  std::int64_t train_steps() const { return train_steps_; }
  int episodes_done() const { return episodes_done_; }

  std::vector<double> q_values(std::span<const double> state) const;
  std::size_t act(std::span<const double> state, double epsilon);
  std::size_t greedy(std::span<const double> state) const;

  void remember(Transition t) { replay_.push(std::move(t)); }

  /// Samples a minibatch and trains on it; nullopt while the buffer holds
  /// fewer than `batch` transitions.
  std::optional<double> train_step();

  /// One Adam step on the mean squared TD error of `batch`. Copies online
  /// into target after every `target_update` calls. Returns the loss.
  double train_on_batch(std::span<const Transition* const> batch);

  /// Overwrites online and target networks (broadcast).
  void load_parameters(const approximator::ParameterSet& params);

  /// Training loop: per episode reset, then select/step/store/train until
  /// done. Episode k of this agent's life resets with seed_base + k.
  std::vector<env::EpisodeLog> run_episodes(env::Environment& env, int n_episodes,
                                            std::uint64_t seed_base);

 private:
  DqnConfig cfg_;
  approximator::ParameterSet online_;
  approximator::ParameterSet target_;
  approximator::AdamState adam_;
  ReplayBuffer replay_;
  Rng rng_;
  std::int64_t train_steps_ = 0;
  int episodes_done_ = 0;
};

/// Greedy policy adaptor for env::rollout.
env::Policy greedy_policy(const approximator::ParameterSet& params);

void write_episode_csv(std::ostream& out, std::span<const env::EpisodeLog> logs);

}  // namespace fedcell::agent
