#include "fedcell/approximator.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iomanip>
#include <sstream>

#include "fedcell/error.hpp"

namespace fedcell::approximator {

int NetworkSpec::in_dim(std::size_t layer) const {
  return layer == 0 ? input_dim : hidden_dims[layer - 1];
}

int NetworkSpec::out_dim(std::size_t layer) const {
  return layer == hidden_dims.size() ? output_dim : hidden_dims[layer];
}

std::size_t NetworkSpec::parameter_count() const {
  std::size_t total = 0;
  for (std::size_t l = 0; l < layer_count(); ++l) {
    total += static_cast<std::size_t>(out_dim(l)) * (static_cast<std::size_t>(in_dim(l)) + 1);
  }
  return total;
}

std::string NetworkSpec::describe() const {
  std::ostringstream os;
  os << input_dim;
  for (int h : hidden_dims) os << '-' << h;
  os << '-' << output_dim;
  return os.str();
}

void validate(const NetworkSpec& spec) {
  if (spec.input_dim < 1 || spec.output_dim < 1) throw Error("network dims must be >= 1");
  for (int h : spec.hidden_dims) {
    if (h < 1) throw Error("hidden layer widths must be >= 1");
  }
}

ParameterSet::ParameterSet(NetworkSpec spec) : spec_(std::move(spec)) {
  validate(spec_);
  std::size_t off = 0;
  for (std::size_t l = 0; l < spec_.layer_count(); ++l) {
    offsets_.push_back(off);
    off += weight_size(l) + static_cast<std::size_t>(spec_.out_dim(l));
  }
  values_.assign(off, 0.0);
}

ParameterSet::ParameterSet(NetworkSpec spec, std::vector<double> values) : ParameterSet(std::move(spec)) {
  if (values.size() != values_.size()) {
    throw Error("parameter count " + std::to_string(values.size()) + " does not match network " +
                spec_.describe() + " (" + std::to_string(values_.size()) + ")");
  }
  values_ = std::move(values);
}

std::size_t ParameterSet::weight_size(std::size_t layer) const {
  return static_cast<std::size_t>(spec_.out_dim(layer)) * static_cast<std::size_t>(spec_.in_dim(layer));
}

std::size_t ParameterSet::weight_offset(std::size_t layer) const { return offsets_[layer]; }

Eigen::Map<RowMajorMatrix> ParameterSet::weights(std::size_t layer) {
  return {values_.data() + weight_offset(layer), spec_.out_dim(layer), spec_.in_dim(layer)};
}

Eigen::Map<const RowMajorMatrix> ParameterSet::weights(std::size_t layer) const {
  return {values_.data() + weight_offset(layer), spec_.out_dim(layer), spec_.in_dim(layer)};
}

Eigen::Map<Eigen::VectorXd> ParameterSet::bias(std::size_t layer) {
  return {values_.data() + bias_offset(layer), spec_.out_dim(layer)};
}

Eigen::Map<const Eigen::VectorXd> ParameterSet::bias(std::size_t layer) const {
  return {values_.data() + bias_offset(layer), spec_.out_dim(layer)};
}

ParameterSet initialize(const NetworkSpec& spec, std::uint64_t seed) {
  ParameterSet p(spec);
  Rng rng = make_rng(seed, 0x1417);
  for (std::size_t l = 0; l < spec.layer_count(); ++l) {
    const double limit = std::sqrt(6.0 / spec.in_dim(l));
    std::uniform_real_distribution<double> u(-limit, limit);
    auto w = p.weights(l);
    for (Eigen::Index r = 0; r < w.rows(); ++r) {
      for (Eigen::Index c = 0; c < w.cols(); ++c) w(r, c) = u(rng);
    }
  }
  return p;
}

namespace {

struct ForwardCache {
  std::vector<Eigen::MatrixXd> activations;  // A_0 = input, A_l post-activation
  std::vector<Eigen::MatrixXd> pre;          // Z_l
};

Eigen::MatrixXd run_forward(const ParameterSet& params, const Eigen::MatrixXd& x,
                            ForwardCache* cache) {
  const NetworkSpec& spec = params.spec();
  if (x.rows() != spec.input_dim) {
    throw Error("state length " + std::to_string(x.rows()) + " does not match network input " +
                std::to_string(spec.input_dim));
  }
  Eigen::MatrixXd a = x;
  const std::size_t last = spec.layer_count() - 1;
  for (std::size_t l = 0; l <= last; ++l) {
    // Copy into an owned (aligned) matrix: Eigen's kernels pick their
    // summation order from operand alignment, and a Map into the flat
    // parameter vector has whatever alignment the heap gave it.
    const RowMajorMatrix w = params.weights(l);
    Eigen::MatrixXd z = w * a;
    z.colwise() += params.bias(l);
    if (cache != nullptr) {
      cache->activations.push_back(std::move(a));
      cache->pre.push_back(z);
    }
    a = (l == last) ? std::move(z) : Eigen::MatrixXd(z.cwiseMax(0.0));
  }
  return a;
}

void write_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

void write_u64(std::vector<std::uint8_t>& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

class Reader {
 public:
  explicit Reader(std::span<const std::uint8_t> bytes) : bytes_(bytes) {}

  std::uint64_t uint(int width) {
    need(static_cast<std::size_t>(width));
    std::uint64_t v = 0;
    for (int i = 0; i < width; ++i) v |= static_cast<std::uint64_t>(bytes_[pos_ + i]) << (8 * i);
    pos_ += static_cast<std::size_t>(width);
    return v;
  }

  void need(std::size_t n) const {
    if (pos_ + n > bytes_.size()) throw Error("checkpoint truncated");
  }

  std::span<const std::uint8_t> take(std::size_t n) {
    need(n);
    auto s = bytes_.subspan(pos_, n);
    pos_ += n;
    return s;
  }

  std::size_t remaining() const { return bytes_.size() - pos_; }

 private:
  std::span<const std::uint8_t> bytes_;
  std::size_t pos_ = 0;
};

}  // namespace

std::vector<double> forward(const ParameterSet& params, std::span<const double> state) {
  const Eigen::Map<const Eigen::VectorXd> x(state.data(), static_cast<Eigen::Index>(state.size()));
  const Eigen::MatrixXd q = run_forward(params, x, nullptr);
  return {q.data(), q.data() + q.size()};
}

Eigen::MatrixXd forward_batch(const ParameterSet& params, const Eigen::MatrixXd& states) {
  return run_forward(params, states, nullptr);
}

BatchGradient batch_gradient(const ParameterSet& params, const Eigen::MatrixXd& states,
                             std::span<const std::size_t> actions, std::span<const double> targets) {
  const auto batch = states.cols();
  if (static_cast<std::size_t>(batch) != actions.size() || actions.size() != targets.size()) {
    throw Error("batch_gradient: states, actions and targets must have equal length");
  }
  const NetworkSpec& spec = params.spec();
  ForwardCache cache;
  const Eigen::MatrixXd q = run_forward(params, states, &cache);

  BatchGradient out{ParameterSet(spec), 0.0};
  if (batch == 0) return out;
  Eigen::MatrixXd delta = Eigen::MatrixXd::Zero(q.rows(), batch);
  for (Eigen::Index j = 0; j < batch; ++j) {
    const auto a = static_cast<Eigen::Index>(actions[static_cast<std::size_t>(j)]);
    if (a >= q.rows()) throw Error("batch_gradient: action index out of range");
    const double err = q(a, j) - targets[static_cast<std::size_t>(j)];
    out.loss += err * err;
    delta(a, j) = 2.0 * err / static_cast<double>(batch);
  }
  out.loss /= static_cast<double>(batch);

  for (std::size_t l = spec.layer_count(); l-- > 0;) {
    const RowMajorMatrix gw = delta * cache.activations[l].transpose();
    out.grad.weights(l) = gw;
    const Eigen::VectorXd gb = delta.rowwise().sum();
    out.grad.bias(l) = gb;
    if (l > 0) {
      const RowMajorMatrix w = params.weights(l);
      Eigen::MatrixXd back = w.transpose() * delta;
      delta = back.cwiseProduct((cache.pre[l - 1].array() > 0.0).cast<double>().matrix());
    }
  }
  return out;
}

ParameterSet gradient(const ParameterSet& params, std::span<const double> state, std::size_t action,
                      double target) {
  const Eigen::Map<const Eigen::VectorXd> x(state.data(), static_cast<Eigen::Index>(state.size()));
  const std::size_t actions[1] = {action};
  const double targets[1] = {target};
  return batch_gradient(params, x, actions, targets).grad;
}

AdamState AdamState::for_params(const ParameterSet& params, AdamConfig cfg) {
  AdamState s;
  s.cfg = cfg;
  s.m.assign(params.size(), 0.0);
  s.v.assign(params.size(), 0.0);
  return s;
}

void adam_update(ParameterSet& params, const ParameterSet& grads, AdamState& adam) {
  if (grads.size() != params.size() || adam.m.size() != params.size() ||
      adam.v.size() != params.size()) {
    throw Error("adam_update: shape mismatch");
  }
  const AdamConfig& c = adam.cfg;
  ++adam.step;
  const double bc1 = 1.0 - std::pow(c.beta1, static_cast<double>(adam.step));
  const double bc2 = 1.0 - std::pow(c.beta2, static_cast<double>(adam.step));
  auto theta = params.values();
  const auto g = grads.values();
  for (std::size_t i = 0; i < theta.size(); ++i) {
    adam.m[i] = c.beta1 * adam.m[i] + (1.0 - c.beta1) * g[i];
    adam.v[i] = c.beta2 * adam.v[i] + (1.0 - c.beta2) * g[i] * g[i];
    const double m_hat = adam.m[i] / bc1;
    const double v_hat = adam.v[i] / bc2;
    theta[i] -= c.learning_rate * m_hat / (std::sqrt(v_hat) + c.epsilon);
  }
}

std::vector<std::uint8_t> serialize(const ParameterSet& params) {
  const NetworkSpec& spec = params.spec();
  std::vector<std::uint8_t> out(std::begin(kCheckpointMagic), std::end(kCheckpointMagic));
  write_u32(out, kCheckpointVersion);
  write_u32(out, static_cast<std::uint32_t>(spec.layer_count() + 1));
  write_u32(out, static_cast<std::uint32_t>(spec.input_dim));
  for (int h : spec.hidden_dims) write_u32(out, static_cast<std::uint32_t>(h));
  write_u32(out, static_cast<std::uint32_t>(spec.output_dim));
  write_u64(out, params.size());
  for (double v : params.values()) write_u64(out, std::bit_cast<std::uint64_t>(v));
  return out;
}

ParameterSet deserialize(std::span<const std::uint8_t> bytes) {
  Reader r(bytes);
  const auto magic = r.take(sizeof(kCheckpointMagic));
  if (std::memcmp(magic.data(), kCheckpointMagic, sizeof(kCheckpointMagic)) != 0) {
    throw Error("not a fedcell checkpoint (bad magic)");
  }
  const auto version = static_cast<std::uint32_t>(r.uint(4));
  if (version != kCheckpointVersion) {
    throw Error("unsupported checkpoint version " + std::to_string(version) + " (expected " +
                std::to_string(kCheckpointVersion) + ")");
  }
  const auto n_dims = static_cast<std::uint32_t>(r.uint(4));
  if (n_dims < 2 || n_dims > 64) throw Error("checkpoint has an implausible layer count");
  std::vector<int> dims;
  for (std::uint32_t i = 0; i < n_dims; ++i) dims.push_back(static_cast<int>(r.uint(4)));
  NetworkSpec spec;
  spec.input_dim = dims.front();
  spec.output_dim = dims.back();
  spec.hidden_dims.assign(dims.begin() + 1, dims.end() - 1);
  validate(spec);
  const std::uint64_t count = r.uint(8);
  if (count != spec.parameter_count()) throw Error("checkpoint parameter count does not match its spec");
  if (r.remaining() != count * 8) {
    throw Error(r.remaining() < count * 8 ? "checkpoint truncated" : "checkpoint has trailing bytes");
  }
  std::vector<double> values(count);
  for (auto& v : values) v = std::bit_cast<double>(r.uint(8));
  return ParameterSet(std::move(spec), std::move(values));
}

ParameterSet deserialize(std::span<const std::uint8_t> bytes, const NetworkSpec& expected) {
  ParameterSet p = deserialize(bytes);
  if (!(p.spec() == expected)) {
    throw Error("checkpoint network " + p.spec().describe() + " does not match expected " +
                expected.describe());
  }
  return p;
}

void save_checkpoint(const ParameterSet& params, const std::filesystem::path& path) {
  const auto bytes = serialize(params);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot write checkpoint " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw Error("failed writing checkpoint " + path.string());
}

ParameterSet load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open checkpoint " + path.string());
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  try {
    return deserialize(bytes);
  } catch (const Error& e) {
    throw Error(path.string() + ": " + e.what());
  }
}

std::string digest(const ParameterSet& params) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (std::uint8_t b : serialize(params)) {
    h ^= b;
    h *= 0x100000001b3ULL;
  }
  std::ostringstream os;
  os << std::hex << std::setw(16) << std::setfill('0') << h;
  return os.str();
}

}  // namespace fedcell::approximator
