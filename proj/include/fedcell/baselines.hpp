#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "fedcell/env.hpp"
#include "fedcell/random.hpp"

namespace fedcell::baselines {

enum class Objective { sum_rate, q1 };

Objective parse_objective(const std::string& name);
std::string to_string(Objective objective);

std::size_t random_action(const env::ActionSpace& space, Rng& rng);

struct ExhaustiveChoice {
  std::size_t action = 0;
  std::vector<double> scores;  // one per combo, in action order
};

/// Objective value (Mbps) of one power vector at the snapshot's next positions.
double score_powers(const env::Snapshot& snapshot, std::span<const double> powers_dbm,
                    Objective objective, const radio::RadioParams& params,
                    const radio::CqiTable& table);

/// Scores every combo once against the snapshot (with re-attachment) and
/// returns the argmax; ties go to the lowest action index.
ExhaustiveChoice exhaustive_action(const env::Snapshot& snapshot, const env::ActionSpace& space,
                                   Objective objective, const radio::RadioParams& params,
                                   const radio::CqiTable& table = radio::CqiTable::standard());

/// Policies for env::rollout. The random policy owns its RNG stream.
env::Policy random_policy(std::uint64_t seed);
env::Policy exhaustive_policy(Objective objective);

}  // namespace fedcell::baselines
