#pragma once

// Test-only helpers and independent oracles. Nothing here calls into the
// implementation path it is used to check.

#include <algorithm>
#include <cmath>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "fedcell/approximator.hpp"
#include "fedcell/env.hpp"
#include "fedcell/geometry.hpp"

namespace fedcell::testing {

inline geometry::RoomLayout rect_room(double w, double h, std::vector<geometry::Vec3> cells,
                                      std::vector<geometry::Segment> panels = {}) {
  geometry::RoomLayout r;
  r.name = "rect";
  r.outline = {{0, 0}, {w, 0}, {w, h}, {0, h}};
  r.panels = std::move(panels);
  r.height = 4.0;
  r.cells = std::move(cells);
  return r;
}

/// Direct evaluation of the indoor path-loss formula.
inline double pathloss_oracle(double d, bool los, double fc_ghz, double h_ut) {
  d = std::max(d, 1.0);
  return los ? 22.0 * std::log10(d) + 28.0 + 20.0 * std::log10(fc_ghz)
             : 36.7 * std::log10(d) + 22.7 + 26.0 * std::log10(fc_ghz) - 0.3 * (h_ut - 1.5);
}

/// Sort + linear interpolation, written out longhand.
inline double quantile_oracle(std::vector<double> xs, double q) {
  std::sort(xs.begin(), xs.end());
  const double h = q * static_cast<double>(xs.size() - 1);
  const auto i = static_cast<std::size_t>(h);
  if (i + 1 >= xs.size()) return xs.back();
  return xs[i] + (h - static_cast<double>(i)) * (xs[i + 1] - xs[i]);
}

/// Number of distinct pairwise-difference classes over all level tuples.
inline std::size_t difference_classes_oracle(const std::vector<double>& levels, int cells) {
  std::vector<std::vector<double>> tuples{{}};
  for (int c = 0; c < cells; ++c) {
    std::vector<std::vector<double>> next;
    for (const auto& t : tuples) {
      for (double l : levels) {
        auto u = t;
        u.push_back(l);
        next.push_back(u);
      }
    }
    tuples = std::move(next);
  }
  std::set<std::vector<long long>> classes;
  for (const auto& t : tuples) {
    std::vector<long long> key;
    for (std::size_t i = 0; i < t.size(); ++i) {
      for (std::size_t j = i + 1; j < t.size(); ++j) key.push_back(std::llround((t[i] - t[j]) * 1000));
    }
    classes.insert(key);
  }
  return classes.size();
}

/// Central finite-difference gradient of (target - Q(s,a))^2 using only
/// the forward pass.
inline std::vector<double> finite_difference_gradient(const approximator::ParameterSet& params,
                                                      const std::vector<double>& state,
                                                      std::size_t action, double target, double h) {
  approximator::ParameterSet p = params;
  auto loss = [&] {
    const double q = approximator::forward(p, state)[action];
    return (target - q) * (target - q);
  };
  std::vector<double> g(p.size());
  for (std::size_t i = 0; i < p.size(); ++i) {
    const double orig = p.values()[i];
    p.values()[i] = orig + h;
    const double up = loss();
    p.values()[i] = orig - h;
    const double down = loss();
    p.values()[i] = orig;
    g[i] = (up - down) / (2.0 * h);
  }
  return g;
}

/// Max over components of |a - b| / max(|a|, |b|, floor). The floor keeps
/// components that are exactly zero (dead ReLU units) from turning the
/// finite-difference rounding noise into a huge ratio.
inline double max_relative_error(const std::vector<double>& a, std::span<const double> b, double floor = 1e-6) {
  double worst = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double scale = std::max({std::abs(a[i]), std::abs(b[i]), floor});
    worst = std::max(worst, std::abs(a[i] - b[i]) / scale);
  }
  return worst;
}

inline std::vector<double> scalar_mean_oracle(const std::vector<approximator::ParameterSet>& sets) {
  std::vector<double> out(sets.front().size(), 0.0);
  for (std::size_t i = 0; i < out.size(); ++i) {
    double s = 0.0;
    for (const auto& p : sets) s += p.values()[i];
    out[i] = s / static_cast<double>(sets.size());
  }
  return out;
}

inline approximator::ParameterSet random_params(const approximator::NetworkSpec& spec, std::uint64_t seed,
                                                double scale = 1.0) {
  approximator::ParameterSet p(spec);
  Rng rng = make_rng(seed, 77);
  std::uniform_real_distribution<double> u(-scale, scale);
  for (double& v : p.values()) v = u(rng);
  return p;
}

/// One cell, one UE parked 5 m from it, noisy receiver: every power level
/// maps to a different rate tier below CQI 15, so the highest level
/// strictly dominates.
struct DominantScenario {
  geometry::RoomLayout layout;
  env::EnvConfig cfg;
  std::vector<geometry::Trajectory> trajectories;
};

inline DominantScenario dominant_scenario() {
  DominantScenario s;
  s.layout = rect_room(20, 20, {{10, 10, 3}});
  s.cfg.radio.noise_power_dbm = -50.0;
  s.cfg.mobility.n_ues = 1;
  s.cfg.mode = env::ActionMode::full;
  s.trajectories = {geometry::Trajectory(static_cast<std::size_t>(s.cfg.steps_per_episode) + 1,
                                         geometry::Vec3{15, 10, 1})};
  return s;
}

inline env::Environment make_dominant_env() {
  auto s = dominant_scenario();
  env::Environment e(s.layout, s.cfg);
  e.set_fixed_trajectories(s.trajectories);
  return e;
}

}  // namespace fedcell::testing
