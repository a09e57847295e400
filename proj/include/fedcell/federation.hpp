#pragma once

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "fedcell/agent.hpp"
#include "fedcell/approximator.hpp"
#include "fedcell/env.hpp"

namespace fedcell::federation {

/// Unweighted elementwise mean of K parameter sets sharing one spec.
approximator::ParameterSet fedavg(std::span<const approximator::ParameterSet> param_sets);

struct FederationConfig {
  int aggregation_cycle = 380;  // E: episodes per client per round
  int rounds = 1;
  std::vector<std::string> rooms;  // one per client; size is K
};

void validate(const FederationConfig& cfg);

struct RoundRecord {
  int round = 0;
  int episode_end = 0;  // per-client episode count at aggregation
  std::vector<std::string> broadcast_digests;  // per client, online and target after broadcast
  std::vector<bool> broadcast_matches;         // both networks bit-equal the global
  std::vector<std::string> client_digests;     // uploaded, pre-aggregation
  std::string global_digest;                   // post-aggregation
  std::vector<double> client_mean_reward;      // mean cumulative reward over the round
};

struct Client {
  env::Environment* env = nullptr;
  agent::DqnAgent* agent = nullptr;
  std::uint64_t seed_base = 0;
};

struct FederationResult {
  std::vector<RoundRecord> rounds;
  approximator::ParameterSet global;
  std::vector<std::vector<env::EpisodeLog>> client_logs;
};

/// Called after each aggregation with the round record and new global model.
using RoundCallback = std::function<void(const RoundRecord&, const approximator::ParameterSet&)>;

/// Synchronous FedAvg: per round broadcast, E local episodes per client
/// (clients in parallel), upload, wipe replay, aggregate.
FederationResult run_federation(const FederationConfig& cfg, std::span<const Client> clients,
                                const approximator::ParameterSet& initial_global,
                                const RoundCallback& on_round = {});

void write_federation_header(std::ostream& out);
void write_round_record(std::ostream& out, const RoundRecord& record);

struct AdaptResult {
  std::vector<env::EpisodeLog> logs;
  approximator::ParameterSet final_params;
};

/// Fresh agent initialized from `global_params`, fine-tuned in `env`.
AdaptResult adapt(const approximator::ParameterSet& global_params, env::Environment& env,
                  const agent::DqnConfig& cfg, int n_episodes, std::uint64_t seed);

/// The scratch-initialized twin: same seeds, random initial weights.
AdaptResult train_from_scratch(env::Environment& env, const agent::DqnConfig& cfg, int n_episodes,
                               std::uint64_t seed, std::uint64_t init_seed);

}  // namespace fedcell::federation
