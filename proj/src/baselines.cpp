#include "fedcell/baselines.hpp"

#include <memory>

#include "fedcell/error.hpp"

namespace fedcell::baselines {

Objective parse_objective(const std::string& name) {
  if (name == "sum_rate") return Objective::sum_rate;
  if (name == "q1") return Objective::q1;
  throw Error("unknown objective '" + name + "' (expected sum_rate or q1)");
}

std::string to_string(Objective objective) {
  return objective == Objective::sum_rate ? "sum_rate" : "q1";
}

std::size_t random_action(const env::ActionSpace& space, Rng& rng) {
  if (space.size() == 0) throw Error("random_action: empty action space");
  return uniform_index(rng, space.size());
}

double score_powers(const env::Snapshot& snapshot, std::span<const double> powers_dbm,
                    Objective objective, const radio::RadioParams& params,
                    const radio::CqiTable& table) {
  const env::Evaluation e = env::evaluate_powers(snapshot.next_gains, powers_dbm, params, table);
  return objective == Objective::sum_rate ? e.sum_mbps : e.q1_mbps;
}

ExhaustiveChoice exhaustive_action(const env::Snapshot& snapshot, const env::ActionSpace& space,
                                   Objective objective, const radio::RadioParams& params,
                                   const radio::CqiTable& table) {
  if (space.size() == 0) throw Error("exhaustive_action: empty action space");
  ExhaustiveChoice choice;
  choice.scores.reserve(space.size());
  for (std::size_t a = 0; a < space.size(); ++a) {
    choice.scores.push_back(score_powers(snapshot, space.combos[a], objective, params, table));
    if (choice.scores[a] > choice.scores[choice.action]) choice.action = a;
  }
  return choice;
}

env::Policy random_policy(std::uint64_t seed) {
  auto rng = std::make_shared<Rng>(make_rng(seed, 0x7a11d));
  return [rng](const env::Environment& e) { return random_action(e.action_space(), *rng); };
}

env::Policy exhaustive_policy(Objective objective) {
  return [objective](const env::Environment& e) {
    return exhaustive_action(e.snapshot(), e.action_space(), objective, e.config().radio,
                             e.cqi_table())
        .action;
  };
}

}  // namespace fedcell::baselines
