#include <algorithm>
#include <fstream>
#include <future>
#include <iomanip>
#include <ostream>
#include <thread>

#include <spdlog/spdlog.h>

#include "fedcell/error.hpp"
#include "fedcell/harness.hpp"

namespace fedcell::harness {

namespace fs = std::filesystem;

OutputDir::OutputDir(fs::path dir, bool force) : dir_(std::move(dir)) {
  if (fs::exists(dir_)) {
    if (!fs::is_directory(dir_)) throw Error("output path " + dir_.string() + " is not a directory");
    if (!fs::is_empty(dir_) && !force) {
      throw Error("output directory " + dir_.string() + " is not empty (use --force to overwrite)");
    }
  } else {
    fs::create_directories(dir_);
    created_ = true;
  }
}

OutputDir::~OutputDir() {
  if (!committed_) rollback();
}

fs::path OutputDir::file(const std::string& name) {
  fs::path p = dir_ / name;
  files_.push_back(p);
  return p;
}

void OutputDir::rollback() {
  std::error_code ec;
  for (const auto& f : files_) fs::remove(f, ec);
  files_.clear();
  if (created_) fs::remove_all(dir_, ec);
  committed_ = true;
}

namespace {

std::uint64_t run_seed_base(std::uint64_t seed, std::uint64_t stream) {
  return seed * 1000003ULL + stream * 7919ULL;
}

// Evaluation episodes draw from a stream disjoint from training.
constexpr std::uint64_t kEvalStream = 100000;

/// Runs fn(0..n-1) on up to hardware_concurrency workers; results keep
/// task order. The first failure is rethrown after all tasks finish.
template <class Fn>
auto run_pool(std::size_t n, Fn fn) -> std::vector<decltype(fn(std::size_t{}))> {
  using Result = decltype(fn(std::size_t{}));
  const std::size_t workers = std::max(1u, std::thread::hardware_concurrency());
  std::vector<Result> results(n);
  std::exception_ptr failure;
  for (std::size_t start = 0; start < n; start += workers) {
    std::vector<std::future<Result>> batch;
    for (std::size_t i = start; i < std::min(n, start + workers); ++i) {
      batch.push_back(std::async(std::launch::async, fn, i));
    }
    for (std::size_t k = 0; k < batch.size(); ++k) {
      try {
        results[start + k] = batch[k].get();
      } catch (...) {
        if (!failure) failure = std::current_exception();
      }
    }
  }
  if (failure) std::rethrow_exception(failure);
  return results;
}

std::ofstream open_out(const fs::path& p) {
  std::ofstream out(p, std::ios::trunc);
  if (!out) throw Error("cannot write " + p.string());
  return out;
}

ExperimentConfig configure(const CommandOptions& opts) {
  ExperimentConfig cfg = load_config(opts.config);
  if (opts.seed) cfg.seeds = {*opts.seed};
  if (opts.out) cfg.output_dir = *opts.out;
  return cfg;
}

template <class Body>
int guarded(const char* command, std::ostream& err, Body body) {
  try {
    return body();
  } catch (const std::exception& e) {
    err << "fedcell " << command << ": error: " << e.what() << '\n';
    return 1;
  }
}

void write_eval_episodes(std::ostream& out, const std::string& policy, std::span<const env::EpisodeLog> logs) {
  out << "policy,episode,cumulative_reward,mean_q1_mbps,mean_rate_mbps,epsilon\n" << std::setprecision(12);
  for (const auto& l : logs) {
    out << policy << ',' << l.episode << ',' << l.cumulative_reward << ',' << l.mean_q1_mbps << ','
        << l.mean_rate_mbps << ',' << l.epsilon << '\n';
  }
}

void check_dims(const approximator::ParameterSet& params, const env::Environment& e) {
  if (static_cast<std::size_t>(params.spec().input_dim) != e.state_size() ||
      static_cast<std::size_t>(params.spec().output_dim) != e.action_space().size()) {
    throw Error("checkpoint network " + params.spec().describe() + " does not fit room " +
                e.layout().name + " (state " + std::to_string(e.state_size()) + ", actions " +
                std::to_string(e.action_space().size()) + ")");
  }
}

}  // namespace

int cmd_train(const CommandOptions& opts, std::ostream& out, std::ostream& err) {
  return guarded("train", err, [&] {
    const ExperimentConfig cfg = configure(opts);
    OutputDir dir(cfg.output_dir, opts.force);

    struct Job {
      std::size_t room;
      std::uint64_t seed;
    };
    std::vector<Job> jobs;
    for (std::size_t r = 0; r < cfg.rooms.size(); ++r) {
      for (auto s : cfg.seeds) jobs.push_back({r, s});
    }
    struct Result {
      std::vector<env::EpisodeLog> logs;
      approximator::ParameterSet params;
    };
    const agent::DqnConfig dqn = dqn_for(cfg, cfg.episodes);
    const auto results = run_pool(jobs.size(), [&](std::size_t i) {
      const Job job = jobs[i];
      env::Environment e(cfg.rooms[job.room].layout, cfg.env);
      agent::DqnAgent learner(network_for(e, dqn), dqn, job.seed);
      spdlog::info("train: room {} seed {} ({} episodes)", e.layout().name, job.seed, cfg.episodes);
      Result res;
      res.logs = learner.run_episodes(e, cfg.episodes, run_seed_base(job.seed, job.room));
      res.params = learner.online();
      return res;
    });

    for (std::size_t i = 0; i < jobs.size(); ++i) {
      const std::string stem =
          cfg.rooms[jobs[i].room].layout.name + "_seed" + std::to_string(jobs[i].seed);
      auto csv = open_out(dir.file(stem + "_episodes.csv"));
      agent::write_episode_csv(csv, results[i].logs);
      approximator::save_checkpoint(results[i].params, dir.file(stem + ".ckpt"));
      out << "trained " << stem << ": " << results[i].logs.size() << " episodes\n";
    }
    dir.commit();
    return 0;
  });
}

int cmd_federate(const CommandOptions& opts, std::ostream& out, std::ostream& err) {
  return guarded("federate", err, [&] {
    const ExperimentConfig cfg = configure(opts);
    OutputDir dir(cfg.output_dir, opts.force);
    const std::uint64_t seed = cfg.seeds.front();
    const agent::DqnConfig dqn = dqn_for(cfg, cfg.federation.rounds * cfg.federation.aggregation_cycle);

    std::vector<env::Environment> envs;
    for (const auto& room : cfg.federation_rooms) envs.emplace_back(room.layout, cfg.env);
    const auto spec = network_for(envs.front(), dqn);
    std::vector<agent::DqnAgent> agents;
    for (std::size_t k = 0; k < envs.size(); ++k) {
      if (!(network_for(envs[k], dqn) == spec)) {
        throw Error("federation rooms must share state and action dimensions (room " +
                    envs[k].layout().name + ")");
      }
      agents.emplace_back(spec, dqn, seed * 31 + k + 1);
    }
    std::vector<federation::Client> clients;
    for (std::size_t k = 0; k < envs.size(); ++k) {
      clients.push_back({&envs[k], &agents[k], run_seed_base(seed, k)});
    }

    auto csv = open_out(dir.file("federation.csv"));
    federation::write_federation_header(csv);
    const auto result = federation::run_federation(
        cfg.federation, clients, approximator::initialize(spec, seed),
        [&](const federation::RoundRecord& rec, const approximator::ParameterSet& global) {
          federation::write_round_record(csv, rec);
          csv.flush();
          approximator::save_checkpoint(global, dir.file("global_round_" + std::to_string(rec.round) + ".ckpt"));
          spdlog::info("federate: round {} aggregated at episode {}", rec.round, rec.episode_end);
        });
    for (std::size_t k = 0; k < envs.size(); ++k) {
      auto log_csv = open_out(dir.file("client_" + envs[k].layout().name + "_episodes.csv"));
      agent::write_episode_csv(log_csv, result.client_logs[k]);
    }
    out << "federated " << clients.size() << " clients for " << result.rounds.size() << " rounds\n";
    dir.commit();
    return 0;
  });
}

int cmd_eval(const CommandOptions& opts, std::ostream& out, std::ostream& err) {
  return guarded("eval", err, [&] {
    const ExperimentConfig cfg = configure(opts);
    std::optional<approximator::ParameterSet> params;
    if (cfg.policy == PolicyKind::dqn) {
      if (!opts.checkpoint) throw Error("eval with policy dqn needs --checkpoint");
      params = approximator::load_checkpoint(*opts.checkpoint);
    }
    OutputDir dir(cfg.output_dir, opts.force);

    struct Job {
      std::size_t room;
      std::uint64_t seed;
    };
    std::vector<Job> jobs;
    for (std::size_t r = 0; r < cfg.rooms.size(); ++r) {
      for (auto s : cfg.seeds) jobs.push_back({r, s});
    }
    struct Result {
      std::vector<env::EpisodeLog> logs;
      std::vector<env::TraceRow> trace;
    };
    const auto results = run_pool(jobs.size(), [&](std::size_t i) {
      const Job job = jobs[i];
      env::Environment e(cfg.rooms[job.room].layout, cfg.env);
      env::Policy policy;
      switch (cfg.policy) {
        case PolicyKind::dqn:
          check_dims(*params, e);
          policy = agent::greedy_policy(*params);
          break;
        case PolicyKind::random:
          policy = baselines::random_policy(job.seed);
          break;
        case PolicyKind::exhaustive:
          policy = baselines::exhaustive_policy(cfg.objective);
          break;
      }
      Result res;
      res.logs = env::rollout(e, policy, cfg.eval_episodes, run_seed_base(job.seed, kEvalStream + job.room),
                              &res.trace);
      return res;
    });

    std::vector<MetricsRow> rows;
    for (std::size_t i = 0; i < jobs.size(); ++i) {
      const auto& room = cfg.rooms[jobs[i].room].layout;
      const std::string stem = room.name + "_seed" + std::to_string(jobs[i].seed) + "_" + cfg.label;
      auto ep = open_out(dir.file(stem + "_episodes.csv"));
      write_eval_episodes(ep, cfg.label, results[i].logs);
      auto tr = open_out(dir.file(stem + "_trace.csv"));
      tr << std::setprecision(12);
      env::write_trace_csv(tr, results[i].trace, room.cells.size());
      rows.push_back(summarize(cfg.scenario, room.name, cfg.label, jobs[i].seed, results[i].logs));
    }
    auto metrics = open_out(dir.file("metrics.csv"));
    write_metrics_csv(metrics, rows);
    for (const auto& r : rows) {
      out << r.room << " seed " << r.seed << " " << r.policy << ": cumulative Q1 " << r.cumulative_q1_mbps
          << " Mbps, cumulative avg " << r.cumulative_avg_mbps << " Mbps over " << r.episodes
          << " episodes\n";
    }
    dir.commit();
    return 0;
  });
}

int cmd_adapt(const CommandOptions& opts, std::ostream& out, std::ostream& err) {
  return guarded("adapt", err, [&] {
    const ExperimentConfig cfg = configure(opts);
    if (!opts.checkpoint) throw Error("adapt needs --checkpoint with the global model");
    const approximator::ParameterSet global = approximator::load_checkpoint(*opts.checkpoint);
    OutputDir dir(cfg.output_dir, opts.force);
    const agent::DqnConfig dqn = dqn_for(cfg, cfg.episodes);

    struct Job {
      std::size_t room;
      std::uint64_t seed;
      bool pretrained;
    };
    std::vector<Job> jobs;
    for (std::size_t r = 0; r < cfg.rooms.size(); ++r) {
      for (auto s : cfg.seeds) {
        jobs.push_back({r, s, true});
        jobs.push_back({r, s, false});
      }
    }
    const auto results = run_pool(jobs.size(), [&](std::size_t i) {
      const Job job = jobs[i];
      env::Environment e(cfg.rooms[job.room].layout, cfg.env);
      check_dims(global, e);
      return job.pretrained ? federation::adapt(global, e, dqn, cfg.episodes, job.seed)
                            : federation::train_from_scratch(e, dqn, cfg.episodes, job.seed, job.seed);
    });

    auto summary = open_out(dir.file("adapt_summary.csv"));
    summary << "room,seed,variant,episodes_to_80pct,final_median_reward\n" << std::setprecision(12);
    for (std::size_t i = 0; i < jobs.size(); ++i) {
      const auto& room = cfg.rooms[jobs[i].room].layout;
      const std::string variant = jobs[i].pretrained ? "pretrained" : "scratch";
      const std::string stem = "adapt_" + room.name + "_seed" + std::to_string(jobs[i].seed) + "_" + variant;
      auto csv = open_out(dir.file(stem + ".csv"));
      agent::write_episode_csv(csv, results[i].logs);
      // learning curve = per-episode cumulative reward
      std::vector<double> curve;
      for (const auto& l : results[i].logs) curve.push_back(l.cumulative_reward);
      const std::size_t window = 10;
      const std::size_t reach = episodes_to_fraction(curve, 0.8, window);
      const std::size_t tail = std::min(window, curve.size());
      const double final_reward =
          curve.empty() ? 0.0 : median(std::vector<double>(curve.end() - static_cast<long>(tail), curve.end()));
      summary << room.name << ',' << jobs[i].seed << ',' << variant << ',' << reach << ',' << final_reward << '\n';
      out << stem << ": reaches 80% of final reward at episode " << reach << '\n';
    }
    dir.commit();
    return 0;
  });
}

int cmd_report(const fs::path& metrics_dir, std::ostream& out, std::ostream& err) {
  return guarded("report", err, [&] {
    if (!fs::is_directory(metrics_dir)) throw Error("metrics directory " + metrics_dir.string() + " not found");
    std::vector<fs::path> files;
    for (const auto& entry : fs::recursive_directory_iterator(metrics_dir)) {
      if (entry.is_regular_file() && entry.path().filename() == "metrics.csv") files.push_back(entry.path());
    }
    std::sort(files.begin(), files.end());
    if (files.empty()) throw Error("no metrics.csv files under " + metrics_dir.string());
    std::vector<MetricsRow> rows;
    for (const auto& f : files) {
      std::ifstream in(f);
      try {
        auto part = read_metrics_csv(in);
        rows.insert(rows.end(), part.begin(), part.end());
      } catch (const Error& e) {
        throw Error(f.string() + ": " + e.what());
      }
    }
    const ReportTable table = build_report(rows);
    auto csv = open_out(metrics_dir / "report.csv");
    write_report_csv(csv, table);
    write_report_text(out, table);
    return 0;
  });
}

}  // namespace fedcell::harness
