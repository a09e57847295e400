#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "fedcell/random.hpp"

namespace fedcell::approximator {

/// Fully-connected Q-network shape: ReLU hidden layers, identity output.
struct NetworkSpec {
  int input_dim = 1;
  std::vector<int> hidden_dims{200, 100, 50};
  int output_dim = 1;

  std::size_t layer_count() const { return hidden_dims.size() + 1; }
  int in_dim(std::size_t layer) const;
  int out_dim(std::size_t layer) const;
  std::size_t parameter_count() const;
  std::string describe() const;

  friend bool operator==(const NetworkSpec&, const NetworkSpec&) = default;
};

void validate(const NetworkSpec& spec);

using RowMajorMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

/// Flat parameter vector. Canonical order, per layer: weights (row-major,
/// out x in) then biases.
class ParameterSet {
 public:
  ParameterSet() = default;
  explicit ParameterSet(NetworkSpec spec);  // zero-filled
  ParameterSet(NetworkSpec spec, std::vector<double> values);

  const NetworkSpec& spec() const { return spec_; }
  std::span<double> values() { return values_; }
  std::span<const double> values() const { return values_; }
  std::size_t size() const { return values_.size(); }

  Eigen::Map<RowMajorMatrix> weights(std::size_t layer);
  Eigen::Map<const RowMajorMatrix> weights(std::size_t layer) const;
  Eigen::Map<Eigen::VectorXd> bias(std::size_t layer);
  Eigen::Map<const Eigen::VectorXd> bias(std::size_t layer) const;

  friend bool operator==(const ParameterSet&, const ParameterSet&) = default;

 private:
  std::size_t weight_offset(std::size_t layer) const;
  std::size_t bias_offset(std::size_t layer) const { return weight_offset(layer) + weight_size(layer); }
  std::size_t weight_size(std::size_t layer) const;

  NetworkSpec spec_;
  std::vector<double> values_;
  std::vector<std::size_t> offsets_;
};

/// He-style uniform fan-in init: U(-sqrt(6/fan_in), sqrt(6/fan_in)), zero bias.
ParameterSet initialize(const NetworkSpec& spec, std::uint64_t seed);

std::vector<double> forward(const ParameterSet& params, std::span<const double> state);

/// Batched forward: one column per sample, result is output_dim x batch.
Eigen::MatrixXd forward_batch(const ParameterSet& params, const Eigen::MatrixXd& states);

/// d/dtheta of (target - Q(s, a))^2.
ParameterSet gradient(const ParameterSet& params, std::span<const double> state,
                      std::size_t action, double target);

struct BatchGradient {
  ParameterSet grad;  // mean over the batch
  double loss = 0.0;  // mean of (target - Q)^2
};

/// Mean squared error over a minibatch (columns of `states`).
BatchGradient batch_gradient(const ParameterSet& params, const Eigen::MatrixXd& states,
                             std::span<const std::size_t> actions, std::span<const double> targets);

struct AdamConfig {
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

struct AdamState {
  AdamConfig cfg;
  std::vector<double> m;
  std::vector<double> v;
  std::int64_t step = 0;

  static AdamState for_params(const ParameterSet& params, AdamConfig cfg = {});
};

void adam_update(ParameterSet& params, const ParameterSet& grads, AdamState& adam);

inline constexpr char kCheckpointMagic[8] = {'F', 'C', 'Q', 'N', 'C', 'K', 'P', 'T'};
inline constexpr std::uint32_t kCheckpointVersion = 1;

std::vector<std::uint8_t> serialize(const ParameterSet& params);
ParameterSet deserialize(std::span<const std::uint8_t> bytes);
/// Deserializes and refuses anything not shaped like `expected`.
ParameterSet deserialize(std::span<const std::uint8_t> bytes, const NetworkSpec& expected);

void save_checkpoint(const ParameterSet& params, const std::filesystem::path& path);
ParameterSet load_checkpoint(const std::filesystem::path& path);

/// 64-bit FNV-1a over the serialized checkpoint, as 16 hex digits.
std::string digest(const ParameterSet& params);

}  // namespace fedcell::approximator
