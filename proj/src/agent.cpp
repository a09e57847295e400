#include "fedcell/agent.hpp"

#include <algorithm>
#include <iomanip>
#include <ostream>

#include "fedcell/error.hpp"

namespace fedcell::agent {

ReplayBuffer::ReplayBuffer(std::size_t capacity) : capacity_(capacity) {
  if (capacity_ == 0) throw Error("replay capacity must be >= 1");
}

void ReplayBuffer::push(Transition t) {
  if (items_.size() < capacity_) {
    items_.push_back(std::move(t));
    return;
  }
  items_[head_] = std::move(t);
  head_ = (head_ + 1) % capacity_;
}

void ReplayBuffer::clear() {
  items_.clear();
  head_ = 0;
}

const Transition& ReplayBuffer::at(std::size_t i) const {
  if (i >= items_.size()) throw Error("replay index out of range");
  return items_[(head_ + i) % items_.size()];
}

std::vector<const Transition*> ReplayBuffer::sample(std::size_t batch, Rng& rng) const {
  if (batch > items_.size()) throw Error("replay sample larger than buffer");
  // Floyd's algorithm: `batch` distinct indices, each subset equally likely.
  const std::size_t n = items_.size();
  std::vector<std::size_t> picked;
  picked.reserve(batch);
  for (std::size_t j = n - batch; j < n; ++j) {
    const std::size_t t = uniform_index(rng, j + 1);
    const bool seen = std::find(picked.begin(), picked.end(), t) != picked.end();
    picked.push_back(seen ? j : t);
  }
  std::vector<const Transition*> out;
  out.reserve(batch);
  for (std::size_t i : picked) out.push_back(&items_[i]);
  return out;
}

double EpsilonSchedule::at(int episode) const {
  if (decay_episodes <= 0 || episode >= decay_episodes) return decay_episodes <= 0 ? start : end;
  const double frac = static_cast<double>(episode) / decay_episodes;
  return start + (end - start) * frac;
}

void validate(const DqnConfig& cfg) {
  if (!(cfg.gamma >= 0.0 && cfg.gamma <= 1.0)) throw Error("dqn.gamma must be in [0, 1]");
  for (double e : {cfg.epsilon.start, cfg.epsilon.end}) {
    if (!(e >= 0.0 && e <= 1.0)) throw Error("dqn epsilon values must be in [0, 1]");
  }
  if (cfg.batch < 1) throw Error("dqn.batch must be >= 1");
  if (cfg.batch > cfg.replay_capacity) throw Error("dqn.batch must not exceed replay_capacity");
  if (cfg.target_update < 1) throw Error("dqn.target_update must be >= 1");
  if (!(cfg.adam.learning_rate > 0.0)) throw Error("dqn.learning_rate must be > 0");
}

std::size_t argmax(std::span<const double> values) {
  return static_cast<std::size_t>(std::max_element(values.begin(), values.end()) - values.begin());
}

std::size_t select_action(std::span<const double> q_values, double epsilon, Rng& rng) {
  if (q_values.empty()) throw Error("select_action: no actions");
  if (epsilon > 0.0 && std::uniform_real_distribution<double>(0.0, 1.0)(rng) < epsilon) {
    return uniform_index(rng, q_values.size());
  }
  return argmax(q_values);
}

double td_target(const Transition& t, const approximator::ParameterSet& target_params, double gamma) {
  if (t.done || gamma == 0.0) return t.reward;
  const auto q_next = approximator::forward(target_params, t.next_state);
  return t.reward + gamma * *std::max_element(q_next.begin(), q_next.end());
}

DqnAgent::DqnAgent(approximator::NetworkSpec spec, DqnConfig cfg, std::uint64_t seed)
    : DqnAgent(approximator::initialize(spec, seed), std::move(cfg), seed) {}

DqnAgent::DqnAgent(const approximator::ParameterSet& initial, DqnConfig cfg, std::uint64_t seed)
    : cfg_(std::move(cfg)),
      online_(initial),
      target_(initial),
      adam_(approximator::AdamState::for_params(initial, cfg_.adam)),
      replay_(cfg_.replay_capacity),
      rng_(make_rng(seed, 0xa6e)) {
  validate(cfg_);
}

std::vector<double> DqnAgent::q_values(std::span<const double> state) const {
  return approximator::forward(online_, state);
}

std::size_t DqnAgent::act(std::span<const double> state, double epsilon) {
  return select_action(q_values(state), epsilon, rng_);
}

std::size_t DqnAgent::greedy(std::span<const double> state) const { return argmax(q_values(state)); }

std::optional<double> DqnAgent::train_step() {
  if (replay_.size() < cfg_.batch) return std::nullopt;
  const auto batch = replay_.sample(cfg_.batch, rng_);
  return train_on_batch(batch);
}

double DqnAgent::train_on_batch(std::span<const Transition* const> batch) {
  const auto b = static_cast<Eigen::Index>(batch.size());
  const auto dim = static_cast<Eigen::Index>(online_.spec().input_dim);
  Eigen::MatrixXd states(dim, b);
  Eigen::MatrixXd next_states(dim, b);
  std::vector<std::size_t> actions(batch.size());
  for (Eigen::Index j = 0; j < b; ++j) {
    const Transition& t = *batch[static_cast<std::size_t>(j)];
    if (static_cast<Eigen::Index>(t.state.size()) != dim ||
        static_cast<Eigen::Index>(t.next_state.size()) != dim) {
      throw Error("transition state size does not match the network input");
    }
    states.col(j) = Eigen::Map<const Eigen::VectorXd>(t.state.data(), dim);
    next_states.col(j) = Eigen::Map<const Eigen::VectorXd>(t.next_state.data(), dim);
    actions[static_cast<std::size_t>(j)] = t.action;
  }

  // Batched form of td_target.
  const Eigen::MatrixXd q_next = approximator::forward_batch(target_, next_states);
  std::vector<double> targets(batch.size());
  for (Eigen::Index j = 0; j < b; ++j) {
    const Transition& t = *batch[static_cast<std::size_t>(j)];
    targets[static_cast<std::size_t>(j)] =
        t.done ? t.reward : t.reward + cfg_.gamma * q_next.col(j).maxCoeff();
  }

  const auto g = approximator::batch_gradient(online_, states, actions, targets);
  approximator::adam_update(online_, g.grad, adam_);
  ++train_steps_;
  if (train_steps_ % cfg_.target_update == 0) target_ = online_;
  return g.loss;
}

void DqnAgent::load_parameters(const approximator::ParameterSet& params) {
  if (!(params.spec() == online_.spec())) {
    throw Error("parameter broadcast: network " + params.spec().describe() + " does not match " +
                online_.spec().describe());
  }
  online_ = params;
  target_ = params;
}

std::vector<env::EpisodeLog> DqnAgent::run_episodes(env::Environment& env, int n_episodes,
                                                    std::uint64_t seed_base) {
  if (env.state_size() != static_cast<std::size_t>(spec().input_dim) ||
      env.action_space().size() != static_cast<std::size_t>(spec().output_dim)) {
    throw Error("environment dims do not match the agent's network " + spec().describe());
  }
  std::vector<env::EpisodeLog> logs;
  for (int k = 0; k < n_episodes; ++k) {
    const int episode = episodes_done_;
    const double eps = cfg_.epsilon.at(episode);
    std::vector<double> state = env.reset(seed_base + static_cast<std::uint64_t>(episode)).flatten();

    env::EpisodeLog log;
    log.episode = episode;
    log.epsilon = eps;
    int steps = 0;
    while (!env.done()) {
      const std::size_t action = act(state, eps);
      env::StepOutcome out = env.step(action);
      std::vector<double> next = out.state.flatten();
      remember({state, action, out.reward, next, out.done});
      train_step();
      log.cumulative_reward += out.reward;
      log.mean_q1_mbps += out.q1;
      log.mean_rate_mbps += out.mean_rate;
      ++steps;
      state = std::move(next);
    }
    if (steps > 0) {
      log.mean_q1_mbps /= steps;
      log.mean_rate_mbps /= steps;
    }
    logs.push_back(log);
    ++episodes_done_;
  }
  return logs;
}

env::Policy greedy_policy(const approximator::ParameterSet& params) {
  return [&params](const env::Environment& e) {
    return argmax(approximator::forward(params, e.state().flatten()));
  };
}

void write_episode_csv(std::ostream& out, std::span<const env::EpisodeLog> logs) {
  out << "episode,cumulative_reward,mean_q1_mbps,mean_rate_mbps,epsilon\n";
  out << std::setprecision(12);
  for (const auto& l : logs) {
    out << l.episode << ',' << l.cumulative_reward << ',' << l.mean_q1_mbps << ','
        << l.mean_rate_mbps << ',' << l.epsilon << '\n';
  }
}

}  // namespace fedcell::agent
