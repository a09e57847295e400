#include <algorithm>
#include <filesystem>
#include <sstream>

#include "doctest.h"
#include "fedcell/error.hpp"
#include "fedcell/federation.hpp"
#include "support.hpp"

using namespace fedcell;
using namespace fedcell::federation;
using approximator::ParameterSet;

namespace {

approximator::NetworkSpec spec_for(const env::Environment& e) {
  approximator::NetworkSpec s;
  s.input_dim = static_cast<int>(e.state_size());
  s.hidden_dims = {8, 6};
  s.output_dim = static_cast<int>(e.action_space().size());
  return s;
}

agent::DqnConfig small_cfg() {
  agent::DqnConfig c;
  c.batch = 16;
  c.target_update = 10;
  c.replay_capacity = 500;
  c.hidden_dims = {8, 6};
  c.epsilon.decay_episodes = 4;
  return c;
}

geometry::RoomLayout room(char r) {
  return geometry::load_layout(std::filesystem::path(FEDCELL_DATA_DIR) / "rooms" / (std::string("room_") + char(std::tolower(r)) + ".json"));
}

}  // namespace

TEST_CASE("fedavg worked examples") {
  approximator::NetworkSpec s;
  s.input_dim = 1;
  s.hidden_dims = {};
  s.output_dim = 1;
  const std::vector<ParameterSet> two{ParameterSet(s, {1, 2}), ParameterSet(s, {3, 6})};
  CHECK(fedavg(two).values()[0] == 2.0);
  CHECK(fedavg(two).values()[1] == 4.0);
  const std::vector<ParameterSet> none;
  CHECK_THROWS_AS(fedavg(none), Error);
  approximator::NetworkSpec t = s;
  t.output_dim = 2;
  const std::vector<ParameterSet> mixed{ParameterSet(s, {1, 2}), ParameterSet(t, {1, 2, 3, 4})};
  CHECK_THROWS_AS(fedavg(mixed), Error);
}

TEST_CASE("fedavg equals the scalar mean; permutation and K=1") {
  approximator::NetworkSpec s;
  s.input_dim = 64;
  s.output_dim = 7;
  std::vector<ParameterSet> sets;
  for (std::uint64_t k = 0; k < 4; ++k) sets.push_back(testing::random_params(s, 40 + k));
  const auto avg = fedavg(sets);
  const auto oracle = testing::scalar_mean_oracle(sets);
  double worst = 0.0;
  for (std::size_t i = 0; i < oracle.size(); ++i) worst = std::max(worst, std::abs(avg.values()[i] - oracle[i]));
  CHECK(worst <= 1e-12);

  std::vector<ParameterSet> perm{sets[2], sets[0], sets[3], sets[1]};
  CHECK(fedavg(perm) == avg);
  const std::vector<ParameterSet> one{sets[1]};
  CHECK(fedavg(one) == sets[1]);
}

TEST_CASE("fedavg is linear") {
  approximator::NetworkSpec s;
  s.input_dim = 5;
  s.hidden_dims = {4};
  s.output_dim = 3;
  std::vector<ParameterSet> a, b, sum;
  for (std::uint64_t k = 0; k < 3; ++k) {
    a.push_back(testing::random_params(s, 60 + k));
    b.push_back(testing::random_params(s, 70 + k));
    ParameterSet c(s);
    for (std::size_t i = 0; i < c.size(); ++i) c.values()[i] = a.back().values()[i] + 2.0 * b.back().values()[i];
    sum.push_back(c);
  }
  const auto fa = fedavg(a), fb = fedavg(b), fs = fedavg(sum);
  for (std::size_t i = 0; i < fs.size(); ++i) CHECK(fs.values()[i] == doctest::Approx(fa.values()[i] + 2.0 * fb.values()[i]));
}

TEST_CASE("federation rounds: broadcast, upload, wipe") {
  const auto cfg = small_cfg();
  std::vector<env::Environment> envs;
  for (char r : {'A', 'B', 'C'}) envs.emplace_back(room(r), env::EnvConfig{});
  const auto spec = spec_for(envs[0]);
  std::vector<agent::DqnAgent> agents;
  for (std::uint64_t k = 0; k < 3; ++k) agents.emplace_back(spec, cfg, 10 + k);
  std::vector<Client> clients;
  for (std::size_t k = 0; k < 3; ++k) clients.push_back({&envs[k], &agents[k], 1000 * k});

  FederationConfig fc;
  fc.aggregation_cycle = 2;
  fc.rounds = 3;
  fc.rooms = {"A", "B", "C"};
  const auto initial = approximator::initialize(spec, 1);

  std::vector<ParameterSet> globals;
  std::ostringstream csv;
  write_federation_header(csv);
  const auto result = run_federation(fc, clients, initial, [&](const RoundRecord& r, const ParameterSet& g) {
    globals.push_back(g);
    write_round_record(csv, r);
    for (auto& a : agents) CHECK(a.replay().empty());
  });

  REQUIRE(result.rounds.size() == 3);
  for (int r = 0; r < 3; ++r) {
    const auto& rec = result.rounds[static_cast<std::size_t>(r)];
    CHECK(rec.round == r);
    CHECK(rec.episode_end == 2 * (r + 1));
    const std::string expected = approximator::digest(r == 0 ? initial : globals[static_cast<std::size_t>(r - 1)]);
    for (std::size_t k = 0; k < 3; ++k) {
      CHECK(rec.broadcast_matches[k]);
      CHECK(rec.broadcast_digests[k] == expected);
    }
    CHECK(rec.global_digest == approximator::digest(globals[static_cast<std::size_t>(r)]));
  }
  // global after the last round is the mean of the last uploads
  std::vector<ParameterSet> uploads;
  for (const auto& a : agents) uploads.push_back(a.online());
  CHECK(fedavg(uploads) == result.global);
  CHECK(result.client_logs[0].size() == 6);

  std::istringstream in(csv.str());
  std::string line;
  std::getline(in, line);
  CHECK(line == "round,episode_end,global_digest,client_digests,broadcast_digests,broadcast_ok,client_mean_rewards");
  int rows = 0;
  while (std::getline(in, line)) ++rows;
  CHECK(rows == 3);
}

TEST_CASE("federation rejects mismatched rooms") {
  const auto cfg = small_cfg();
  env::Environment a(room('A'), env::EnvConfig{});
  auto single = testing::make_dominant_env();
  const auto spec = spec_for(a);
  agent::DqnAgent x(spec, cfg, 1), y(spec, cfg, 2);
  std::vector<Client> clients{{&a, &x, 0}, {&single, &y, 0}};
  FederationConfig fc;
  fc.aggregation_cycle = 1;
  fc.rounds = 1;
  fc.rooms = {"A", "tiny"};
  CHECK_THROWS_WITH_AS(run_federation(fc, clients, approximator::initialize(spec, 1)),
                       doctest::Contains("tiny"), Error);
  fc.rooms = {"A"};
  CHECK_THROWS_AS(run_federation(fc, clients, approximator::initialize(spec, 1)), Error);
}

TEST_CASE("adapt checks dims and is reproducible") {
  const auto cfg = small_cfg();
  env::Environment e(room('E'), env::EnvConfig{});
  const auto spec = spec_for(e);
  const auto global = approximator::initialize(spec, 4);
  const auto r1 = adapt(global, e, cfg, 2, 9);
  const auto r2 = adapt(global, e, cfg, 2, 9);
  CHECK(r1.final_params == r2.final_params);
  CHECK(r1.logs.size() == 2);

  auto tiny = testing::make_dominant_env();
  CHECK_THROWS_AS(adapt(global, tiny, cfg, 1, 1), Error);

  const auto scratch = train_from_scratch(e, cfg, 2, 9, 4);
  CHECK(scratch.final_params == r1.final_params);  // same init seed, same data
}

TEST_CASE("federation config validation") {
  FederationConfig fc;
  fc.rooms = {"A"};
  fc.aggregation_cycle = 0;
  CHECK_THROWS_AS(validate(fc), Error);
  fc.aggregation_cycle = 1;
  fc.rounds = -1;
  CHECK_THROWS_AS(validate(fc), Error);
  fc.rounds = 0;
  CHECK_NOTHROW(validate(fc));
  fc.rounds = 1;
  fc.rooms.clear();
  CHECK_THROWS_AS(validate(fc), Error);
}
