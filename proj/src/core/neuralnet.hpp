#pragma once

#include <Eigen/Core>
#include <json.hpp>

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "rng.hpp"

namespace mnp {

enum class Activation { identity, relu, elu, softmax };
enum class Mode { train, eval };

const char* to_string(Activation a);
Activation activation_from_string(const std::string& s);

struct DenseLayer {
  Eigen::MatrixXd weight;  // out x in
  Eigen::VectorXd bias;
  Activation activation = Activation::identity;
  double dropout = 0.0;  // drop probability on the layer output, train mode only
};

struct LayerSpec {
  int out = 0;
  Activation activation = Activation::relu;
  double dropout = 0.0;
};

/// Feed-forward chain. When pool_after = k, layers [0, k) run per column
/// (one column per point), the columns are max-pooled into one, and the
/// remaining layers run on the pooled vector.
struct NetworkSpec {
  int input = 0;
  std::vector<LayerSpec> layers;
  std::optional<int> pool_after;

  nlohmann::json to_json() const;
  static NetworkSpec from_json(const nlohmann::json& j);
};

class Network {
 public:
  Network() = default;
  /// Kaiming-style uniform init scaled by fan-in, zero biases.
  Network(const NetworkSpec& spec, Rng& init_rng);
  // Copies get a fresh identity so tapes never validate against a copy.
  Network(const Network& other);
  Network& operator=(const Network& other);
  Network(Network&&) noexcept = default;
  Network& operator=(Network&&) noexcept = default;

  const NetworkSpec& spec() const { return spec_; }
  int input_size() const { return spec_.input; }
  int output_size() const;
  std::size_t parameter_count() const;

  const std::vector<DenseLayer>& layers() const { return layers_; }
  /// Any mutable access invalidates tapes recorded before it.
  std::vector<DenseLayer>& mutable_layers();

  std::uint64_t id() const { return id_; }
  std::uint64_t version() const { return version_; }
  void touch() { ++version_; }

  /// Flat parameter order: per layer, weight (column-major) then bias.
  std::vector<double> flatten() const;
  void unflatten(const std::vector<double>& values, std::size_t& offset);

 private:
  NetworkSpec spec_;
  std::vector<DenseLayer> layers_;
  std::uint64_t id_ = next_id();
  std::uint64_t version_ = 0;

  static std::uint64_t next_id();
};

struct Tape {
  std::uint64_t network_id = 0;
  std::uint64_t version = 0;
  std::vector<Eigen::MatrixXd> inputs;       // layer inputs
  std::vector<Eigen::MatrixXd> activations;  // post-activation, pre-dropout
  std::vector<Eigen::MatrixXd> masks;        // empty when no dropout was applied
  std::vector<Eigen::Index> argmax;          // pooling routes
  Eigen::Index pooled_columns = 0;
};

struct Gradients {
  std::vector<Eigen::MatrixXd> weight;
  std::vector<Eigen::VectorXd> bias;

  static Gradients zeros_like(const Network& net);
  void set_zero();
  void add(const Gradients& other);
  void scale(double s);
  bool all_finite() const;
};

struct ForwardResult {
  Eigen::MatrixXd output;
  Tape tape;
};

/// X has one column per sample (or per point for pooled networks).
ForwardResult forward(const Network& net, const Eigen::MatrixXd& x, Mode mode, Rng* dropout_rng = nullptr);

/// Accumulates parameter gradients into grads and returns dL/dX.
Eigen::MatrixXd backward(const Network& net, const Tape& tape, const Eigen::MatrixXd& output_grad, Gradients& grads);

struct MaxPoolResult {
  Eigen::VectorXd pooled;
  std::vector<Eigen::Index> argmax;  // lowest index on ties
};

/// Componentwise max over columns of an f x n feature matrix.
MaxPoolResult maxpool_points(const Eigen::MatrixXd& features);

Eigen::MatrixXd apply_activation(Activation a, const Eigen::MatrixXd& z);

struct AdamConfig {
  double lr = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

struct AdamState {
  AdamConfig config;
  long step = 0;
  std::vector<Eigen::MatrixXd> m_weight, v_weight;
  std::vector<Eigen::VectorXd> m_bias, v_bias;
};

AdamState make_adam_state(const Network& net, const AdamConfig& config);

/// Bias-corrected Adam. Throws on shape mismatch or non-finite gradients.
void adam_step(Network& net, const Gradients& grads, AdamState& state);

/// Encoder + planning network pair with free-form metadata.
struct Checkpoint {
  Network enet;
  Network pnet;
  nlohmann::json metadata = nlohmann::json::object();

  /// Architecture descriptor as serialized into the header.
  std::string descriptor() const;
};

inline constexpr std::uint32_t kCheckpointVersion = 1;

std::string serialize_checkpoint(const Checkpoint& ckpt);
Checkpoint deserialize_checkpoint(const std::string& bytes);
void save_checkpoint(const Checkpoint& ckpt, const std::string& path);
Checkpoint load_checkpoint(const std::string& path);

}  // namespace mnp
