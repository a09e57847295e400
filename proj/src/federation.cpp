#include "fedcell/federation.hpp"

#include <algorithm>
#include <exception>
#include <future>
#include <iomanip>
#include <numeric>
#include <ostream>

#include "fedcell/error.hpp"

namespace fedcell::federation {

using approximator::ParameterSet;

ParameterSet fedavg(std::span<const ParameterSet> param_sets) {
  if (param_sets.empty()) throw Error("fedavg: no parameter sets");
  const auto& spec = param_sets.front().spec();
  for (std::size_t k = 1; k < param_sets.size(); ++k) {
    if (!(param_sets[k].spec() == spec)) {
      throw Error("fedavg: client " + std::to_string(k) + " has network " +
                  param_sets[k].spec().describe() + ", expected " + spec.describe());
    }
  }
  // Each element is summed in sorted order so the result does not depend
  // on client order, bit for bit.
  ParameterSet out(spec);
  auto acc = out.values();
  const double k = static_cast<double>(param_sets.size());
  std::vector<double> column(param_sets.size());
  for (std::size_t i = 0; i < acc.size(); ++i) {
    for (std::size_t c = 0; c < param_sets.size(); ++c) column[c] = param_sets[c].values()[i];
    std::sort(column.begin(), column.end());
    double sum = 0.0;
    for (double v : column) sum += v;
    acc[i] = sum / k;
  }
  return out;
}

void validate(const FederationConfig& cfg) {
  if (cfg.rooms.empty()) throw Error("federation needs at least one client room");
  if (cfg.aggregation_cycle < 1) throw Error("federation.aggregation_cycle must be >= 1");
  if (cfg.rounds < 0) throw Error("federation.rounds must be >= 0");
}

FederationResult run_federation(const FederationConfig& cfg, std::span<const Client> clients,
                                const ParameterSet& initial_global, const RoundCallback& on_round) {
  validate(cfg);
  if (clients.size() != cfg.rooms.size()) {
    throw Error("federation: " + std::to_string(clients.size()) + " clients for " +
                std::to_string(cfg.rooms.size()) + " rooms");
  }
  for (const auto& c : clients) {
    if (c.env == nullptr || c.agent == nullptr) throw Error("federation: client missing env or agent");
  }

  FederationResult result;
  result.global = initial_global;
  result.client_logs.resize(clients.size());

  for (int round = 0; round < cfg.rounds; ++round) {
    RoundRecord rec;
    rec.round = round;

    // Broadcast.
    for (const auto& c : clients) {
      c.agent->load_parameters(result.global);
      rec.broadcast_digests.push_back(approximator::digest(c.agent->online()));
      rec.broadcast_matches.push_back(c.agent->online() == result.global &&
                                      c.agent->target() == result.global);
    }

    // Local training, one task per client; the barrier is the join below.
    std::vector<std::future<std::vector<env::EpisodeLog>>> tasks;
    for (const auto& c : clients) {
      tasks.push_back(std::async(std::launch::async, [&c, &cfg] {
        return c.agent->run_episodes(*c.env, cfg.aggregation_cycle, c.seed_base);
      }));
    }
    std::vector<std::vector<env::EpisodeLog>> logs(clients.size());
    std::string failure;
    for (std::size_t k = 0; k < tasks.size(); ++k) {
      try {
        logs[k] = tasks[k].get();
      } catch (const std::exception& e) {
        if (failure.empty()) {
          failure = "federation round " + std::to_string(round) + ": client " + std::to_string(k) +
                    " (room " + cfg.rooms[k] + ") failed: " + e.what();
        }
      }
    }
    if (!failure.empty()) throw Error(failure);

    // Upload, wipe D, aggregate.
    std::vector<ParameterSet> uploads;
    for (std::size_t k = 0; k < clients.size(); ++k) {
      uploads.push_back(clients[k].agent->online());
      clients[k].agent->replay().clear();
      rec.client_digests.push_back(approximator::digest(uploads.back()));
      double sum = 0.0;
      for (const auto& l : logs[k]) sum += l.cumulative_reward;
      rec.client_mean_reward.push_back(logs[k].empty() ? 0.0 : sum / static_cast<double>(logs[k].size()));
      auto& all = result.client_logs[k];
      all.insert(all.end(), logs[k].begin(), logs[k].end());
    }
    result.global = fedavg(uploads);
    rec.global_digest = approximator::digest(result.global);
    rec.episode_end = clients.front().agent->episodes_done();
    if (on_round) on_round(rec, result.global);
    result.rounds.push_back(std::move(rec));
  }
  return result;
}

void write_federation_header(std::ostream& out) {
  out << "round,episode_end,global_digest,client_digests,broadcast_digests,broadcast_ok,"
         "client_mean_rewards\n";
}

void write_round_record(std::ostream& out, const RoundRecord& r) {
  auto join = [&out](const auto& items) {
    for (std::size_t i = 0; i < items.size(); ++i) out << (i ? ";" : "") << items[i];
  };
  out << r.round << ',' << r.episode_end << ',' << r.global_digest << ',';
  join(r.client_digests);
  out << ',';
  join(r.broadcast_digests);
  out << ',' << (std::all_of(r.broadcast_matches.begin(), r.broadcast_matches.end(),
                             [](bool b) { return b; })
                     ? 1
                     : 0)
      << ',';
  out << std::setprecision(12);
  join(r.client_mean_reward);
  out << '\n';
}

AdaptResult adapt(const ParameterSet& global_params, env::Environment& env,
                  const agent::DqnConfig& cfg, int n_episodes, std::uint64_t seed) {
  if (env.state_size() != static_cast<std::size_t>(global_params.spec().input_dim) ||
      env.action_space().size() != static_cast<std::size_t>(global_params.spec().output_dim)) {
    throw Error("adapt: room '" + env.layout().name + "' has state/action dims " +
                std::to_string(env.state_size()) + "/" + std::to_string(env.action_space().size()) +
                " but the global model is " + global_params.spec().describe());
  }
  agent::DqnAgent learner(global_params, cfg, seed);
  AdaptResult out;
  out.logs = learner.run_episodes(env, n_episodes, seed * 1000003ULL);
  out.final_params = learner.online();
  return out;
}

AdaptResult train_from_scratch(env::Environment& env, const agent::DqnConfig& cfg, int n_episodes,
                               std::uint64_t seed, std::uint64_t init_seed) {
  approximator::NetworkSpec spec;
  spec.input_dim = static_cast<int>(env.state_size());
  spec.hidden_dims = cfg.hidden_dims;
  spec.output_dim = static_cast<int>(env.action_space().size());
  return adapt(approximator::initialize(spec, init_seed), env, cfg, n_episodes, seed);
}

}  // namespace fedcell::federation
