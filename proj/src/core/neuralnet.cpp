#include "neuralnet.hpp"

#include <zlib.h>

#include <atomic>
#include <bit>
#include <cmath>
#include <cstring>

#include "error.hpp"
#include "io.hpp"

namespace mnp {

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes a little-endian host");

const char* to_string(Activation a) {
  switch (a) {
    case Activation::identity: return "identity";
    case Activation::relu: return "relu";
    case Activation::elu: return "elu";
    case Activation::softmax: return "softmax";
  }
  return "identity";
}

Activation activation_from_string(const std::string& s) {
  if (s == "identity") return Activation::identity;
  if (s == "relu") return Activation::relu;
  if (s == "elu") return Activation::elu;
  if (s == "softmax") return Activation::softmax;
  fail(ErrorCode::format, "unknown activation '" + s + "'");
}

nlohmann::json NetworkSpec::to_json() const {
  nlohmann::json layers_json = nlohmann::json::array();
  for (const auto& l : layers)
    layers_json.push_back({{"out", l.out}, {"activation", to_string(l.activation)}, {"dropout", l.dropout}});
  nlohmann::json j = {{"input", input}, {"layers", layers_json}};
  j["pool_after"] = pool_after ? nlohmann::json(*pool_after) : nlohmann::json(nullptr);
  return j;
}

NetworkSpec NetworkSpec::from_json(const nlohmann::json& j) {
  NetworkSpec spec;
  try {
    spec.input = j.at("input").get<int>();
    for (const auto& l : j.at("layers"))
      spec.layers.push_back({l.at("out").get<int>(), activation_from_string(l.at("activation").get<std::string>()),
                             l.value("dropout", 0.0)});
    if (j.contains("pool_after") && !j["pool_after"].is_null()) spec.pool_after = j["pool_after"].get<int>();
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorCode::format, std::string("bad network descriptor: ") + e.what());
  }
  if (spec.input < 1 || spec.layers.empty()) fail(ErrorCode::format, "network needs an input size and layers");
  for (const auto& l : spec.layers)
    if (l.out < 1 || l.dropout < 0.0 || l.dropout >= 1.0) fail(ErrorCode::format, "bad layer in network descriptor");
  if (spec.pool_after && (*spec.pool_after < 1 || *spec.pool_after > static_cast<int>(spec.layers.size())))
    fail(ErrorCode::format, "pool position out of range");
  return spec;
}

std::uint64_t Network::next_id() {
  static std::atomic<std::uint64_t> counter{1};
  return counter.fetch_add(1);
}

Network::Network(const NetworkSpec& spec, Rng& rng) : spec_(spec) {
  int fan_in = spec.input;
  for (const auto& ls : spec.layers) {
    DenseLayer layer;
    const double gain = (ls.activation == Activation::relu || ls.activation == Activation::elu) ? 6.0 : 3.0;
    const double bound = std::sqrt(gain / fan_in);
    layer.weight.resize(ls.out, fan_in);
    for (Eigen::Index c = 0; c < layer.weight.cols(); ++c)
      for (Eigen::Index r = 0; r < layer.weight.rows(); ++r) layer.weight(r, c) = rng.uniform(-bound, bound);
    layer.bias = Eigen::VectorXd::Zero(ls.out);
    layer.activation = ls.activation;
    layer.dropout = ls.dropout;
    layers_.push_back(std::move(layer));
    fan_in = ls.out;
  }
}

Network::Network(const Network& other) : spec_(other.spec_), layers_(other.layers_) {}

Network& Network::operator=(const Network& other) {
  if (this != &other) {
    spec_ = other.spec_;
    layers_ = other.layers_;
    id_ = next_id();
    version_ = 0;
  }
  return *this;
}

int Network::output_size() const { return layers_.empty() ? spec_.input : static_cast<int>(layers_.back().bias.size()); }

std::size_t Network::parameter_count() const {
  std::size_t n = 0;
  for (const auto& l : layers_) n += static_cast<std::size_t>(l.weight.size() + l.bias.size());
  return n;
}

std::vector<DenseLayer>& Network::mutable_layers() {
  touch();
  return layers_;
}

std::vector<double> Network::flatten() const {
  std::vector<double> out;
  out.reserve(parameter_count());
  for (const auto& l : layers_) {
    out.insert(out.end(), l.weight.data(), l.weight.data() + l.weight.size());
    out.insert(out.end(), l.bias.data(), l.bias.data() + l.bias.size());
  }
  return out;
}

void Network::unflatten(const std::vector<double>& values, std::size_t& offset) {
  if (offset + parameter_count() > values.size()) fail(ErrorCode::truncated, "parameter block shorter than network");
  for (auto& l : layers_) {
    std::memcpy(l.weight.data(), values.data() + offset, sizeof(double) * static_cast<std::size_t>(l.weight.size()));
    offset += static_cast<std::size_t>(l.weight.size());
    std::memcpy(l.bias.data(), values.data() + offset, sizeof(double) * static_cast<std::size_t>(l.bias.size()));
    offset += static_cast<std::size_t>(l.bias.size());
  }
  touch();
}

Eigen::MatrixXd apply_activation(Activation a, const Eigen::MatrixXd& z) {
  switch (a) {
    case Activation::identity: return z;
    case Activation::relu: return z.cwiseMax(0.0);
    case Activation::elu: return z.unaryExpr([](double v) { return v > 0.0 ? v : std::expm1(v); });
    case Activation::softmax: {
      Eigen::MatrixXd out(z.rows(), z.cols());
      for (Eigen::Index c = 0; c < z.cols(); ++c) {
        const double mx = z.col(c).maxCoeff();
        out.col(c) = (z.col(c).array() - mx).exp().matrix();
        out.col(c) /= out.col(c).sum();
      }
      return out;
    }
  }
  return z;
}

namespace {

Eigen::MatrixXd activation_backward(Activation a, const Eigen::MatrixXd& act, const Eigen::MatrixXd& grad) {
  switch (a) {
    case Activation::identity: return grad;
    case Activation::relu: return (act.array() > 0.0).select(grad, 0.0);
    case Activation::elu:
      // For z <= 0, elu'(z) = e^z = act + 1.
      return (act.array() > 0.0).select(grad, grad.array() * (act.array() + 1.0));
    case Activation::softmax: {
      Eigen::MatrixXd out(grad.rows(), grad.cols());
      for (Eigen::Index c = 0; c < grad.cols(); ++c) {
        const double dot = act.col(c).dot(grad.col(c));
        out.col(c) = act.col(c).cwiseProduct((grad.col(c).array() - dot).matrix());
      }
      return out;
    }
  }
  return grad;
}

}  // namespace

MaxPoolResult maxpool_points(const Eigen::MatrixXd& features) {
  if (features.cols() < 1) fail(ErrorCode::invalid_argument, "cannot pool an empty point set");
  MaxPoolResult r;
  r.pooled.resize(features.rows());
  r.argmax.assign(static_cast<std::size_t>(features.rows()), 0);
  for (Eigen::Index k = 0; k < features.rows(); ++k) {
    Eigen::Index best = 0;
    double v = features(k, 0);
    for (Eigen::Index c = 1; c < features.cols(); ++c)
      if (features(k, c) > v) {
        v = features(k, c);
        best = c;
      }
    r.pooled[k] = v;
    r.argmax[static_cast<std::size_t>(k)] = best;
  }
  return r;
}

ForwardResult forward(const Network& net, const Eigen::MatrixXd& x, Mode mode, Rng* dropout_rng) {
  if (x.rows() != net.input_size())
    fail(ErrorCode::dimension_mismatch, "network expects input size " + std::to_string(net.input_size()) + ", got " +
                                            std::to_string(x.rows()));
  ForwardResult r;
  r.tape.network_id = net.id();
  r.tape.version = net.version();
  const auto& layers = net.layers();
  const auto pool_at = net.spec().pool_after;
  Eigen::MatrixXd a = x;
  auto pool = [&]() {
    r.tape.pooled_columns = a.cols();
    auto pooled = maxpool_points(a);
    r.tape.argmax = std::move(pooled.argmax);
    a = pooled.pooled;
  };
  for (std::size_t l = 0; l < layers.size(); ++l) {
    if (pool_at && static_cast<std::size_t>(*pool_at) == l) pool();
    const auto& layer = layers[l];
    r.tape.inputs.push_back(a);
    Eigen::MatrixXd z = layer.weight * a;
    z.colwise() += layer.bias;
    Eigen::MatrixXd act = apply_activation(layer.activation, z);
    r.tape.activations.push_back(act);
    if (mode == Mode::train && layer.dropout > 0.0) {
      if (!dropout_rng) fail(ErrorCode::invalid_argument, "train-mode dropout needs an rng");
      const double keep = 1.0 - layer.dropout;
      Eigen::MatrixXd mask(act.rows(), act.cols());
      for (Eigen::Index c = 0; c < mask.cols(); ++c)
        for (Eigen::Index k = 0; k < mask.rows(); ++k) mask(k, c) = dropout_rng->uniform() < keep ? 1.0 / keep : 0.0;
      act = act.cwiseProduct(mask);
      r.tape.masks.push_back(std::move(mask));
    } else {
      r.tape.masks.emplace_back();
    }
    a = std::move(act);
  }
  if (pool_at && static_cast<std::size_t>(*pool_at) == layers.size()) pool();
  r.output = std::move(a);
  return r;
}

namespace {

Eigen::MatrixXd unpool(const Tape& tape, const Eigen::MatrixXd& g) {
  Eigen::MatrixXd out = Eigen::MatrixXd::Zero(g.rows(), tape.pooled_columns);
  for (Eigen::Index k = 0; k < g.rows(); ++k) out(k, tape.argmax[static_cast<std::size_t>(k)]) = g(k, 0);
  return out;
}

}  // namespace

Eigen::MatrixXd backward(const Network& net, const Tape& tape, const Eigen::MatrixXd& output_grad, Gradients& grads) {
  if (tape.network_id != net.id() || tape.version != net.version())
    fail(ErrorCode::stale_tape, "tape was recorded against different or since-modified parameters");
  const auto& layers = net.layers();
  if (grads.weight.size() != layers.size()) fail(ErrorCode::dimension_mismatch, "gradient buffers do not match network");
  const auto pool_at = net.spec().pool_after;
  Eigen::MatrixXd g = output_grad;
  if (pool_at && static_cast<std::size_t>(*pool_at) == layers.size()) g = unpool(tape, g);
  for (std::size_t l = layers.size(); l-- > 0;) {
    if (g.rows() != tape.activations[l].rows() || g.cols() != tape.activations[l].cols())
      fail(ErrorCode::dimension_mismatch, "output gradient shape does not match the forward pass");
    if (tape.masks[l].size() > 0) g = g.cwiseProduct(tape.masks[l]);
    const Eigen::MatrixXd dz = activation_backward(layers[l].activation, tape.activations[l], g);
    grads.weight[l].noalias() += dz * tape.inputs[l].transpose();
    grads.bias[l] += dz.rowwise().sum();
    g = layers[l].weight.transpose() * dz;
    if (pool_at && static_cast<std::size_t>(*pool_at) == l) g = unpool(tape, g);
  }
  return g;
}

Gradients Gradients::zeros_like(const Network& net) {
  Gradients g;
  for (const auto& l : net.layers()) {
    g.weight.push_back(Eigen::MatrixXd::Zero(l.weight.rows(), l.weight.cols()));
    g.bias.push_back(Eigen::VectorXd::Zero(l.bias.size()));
  }
  return g;
}

void Gradients::set_zero() {
  for (auto& w : weight) w.setZero();
  for (auto& b : bias) b.setZero();
}

void Gradients::add(const Gradients& other) {
  for (std::size_t i = 0; i < weight.size(); ++i) {
    weight[i] += other.weight[i];
    bias[i] += other.bias[i];
  }
}

void Gradients::scale(double s) {
  for (auto& w : weight) w *= s;
  for (auto& b : bias) b *= s;
}

bool Gradients::all_finite() const {
  for (const auto& w : weight)
    if (!w.allFinite()) return false;
  for (const auto& b : bias)
    if (!b.allFinite()) return false;
  return true;
}

AdamState make_adam_state(const Network& net, const AdamConfig& config) {
  AdamState s;
  s.config = config;
  for (const auto& l : net.layers()) {
    s.m_weight.push_back(Eigen::MatrixXd::Zero(l.weight.rows(), l.weight.cols()));
    s.v_weight.push_back(Eigen::MatrixXd::Zero(l.weight.rows(), l.weight.cols()));
    s.m_bias.push_back(Eigen::VectorXd::Zero(l.bias.size()));
    s.v_bias.push_back(Eigen::VectorXd::Zero(l.bias.size()));
  }
  return s;
}

namespace {

template <typename P, typename G>
void adam_update(P& param, const G& grad, P& m, P& v, const AdamConfig& c, double bc1, double bc2) {
  m = c.beta1 * m + (1.0 - c.beta1) * grad;
  v = c.beta2 * v + (1.0 - c.beta2) * grad.cwiseProduct(grad);
  param.array() -= c.lr * (m.array() / bc1) / ((v.array() / bc2).sqrt() + c.eps);
}

}  // namespace

void adam_step(Network& net, const Gradients& grads, AdamState& state) {
  const auto& layers = net.layers();
  if (grads.weight.size() != layers.size() || state.m_weight.size() != layers.size())
    fail(ErrorCode::dimension_mismatch, "adam: gradient/state layout does not match network");
  for (std::size_t l = 0; l < layers.size(); ++l) {
    if (grads.weight[l].rows() != layers[l].weight.rows() || grads.weight[l].cols() != layers[l].weight.cols() ||
        grads.bias[l].size() != layers[l].bias.size() || state.m_weight[l].rows() != layers[l].weight.rows() ||
        state.m_weight[l].cols() != layers[l].weight.cols())
      fail(ErrorCode::dimension_mismatch, "adam: shape mismatch at layer " + std::to_string(l));
  }
  if (!grads.all_finite()) fail(ErrorCode::numerical, "adam: non-finite gradient");
  ++state.step;
  const auto& c = state.config;
  const double bc1 = 1.0 - std::pow(c.beta1, static_cast<double>(state.step));
  const double bc2 = 1.0 - std::pow(c.beta2, static_cast<double>(state.step));
  auto& mut = net.mutable_layers();
  for (std::size_t l = 0; l < mut.size(); ++l) {
    adam_update(mut[l].weight, grads.weight[l], state.m_weight[l], state.v_weight[l], c, bc1, bc2);
    adam_update(mut[l].bias, grads.bias[l], state.m_bias[l], state.v_bias[l], c, bc1, bc2);
  }
}

std::string Checkpoint::descriptor() const {
  nlohmann::json j = {{"enet", enet.spec().to_json()}, {"pnet", pnet.spec().to_json()}, {"meta", metadata}};
  return j.dump();
}

namespace {

template <typename T>
void put(std::string& out, T v) {
  char buf[sizeof(T)];
  std::memcpy(buf, &v, sizeof(T));
  out.append(buf, sizeof(T));
}

template <typename T>
T get(const std::string& in, std::size_t& pos) {
  if (pos + sizeof(T) > in.size()) fail(ErrorCode::truncated, "checkpoint is truncated");
  T v;
  std::memcpy(&v, in.data() + pos, sizeof(T));
  pos += sizeof(T);
  return v;
}

std::uint32_t crc_of(std::uint32_t version, const std::string& json, const char* payload, std::size_t payload_size) {
  uLong crc = crc32(0L, Z_NULL, 0);
  crc = crc32(crc, reinterpret_cast<const Bytef*>(&version), sizeof(version));
  crc = crc32(crc, reinterpret_cast<const Bytef*>(json.data()), static_cast<uInt>(json.size()));
  crc = crc32(crc, reinterpret_cast<const Bytef*>(payload), static_cast<uInt>(payload_size));
  return static_cast<std::uint32_t>(crc);
}

}  // namespace

std::string serialize_checkpoint(const Checkpoint& ckpt) {
  const std::string json = ckpt.descriptor();
  std::string payload;
  for (const Network* net : {&ckpt.enet, &ckpt.pnet})
    for (double v : net->flatten()) put(payload, v);
  std::string out = "MNPC";
  put(out, kCheckpointVersion);
  put(out, static_cast<std::uint32_t>(json.size()));
  out += json;
  put(out, crc_of(kCheckpointVersion, json, payload.data(), payload.size()));
  out += payload;
  return out;
}

Checkpoint deserialize_checkpoint(const std::string& bytes) {
  if (bytes.size() < 4 || bytes.compare(0, 4, "MNPC") != 0) fail(ErrorCode::format, "not a checkpoint (bad magic)");
  std::size_t pos = 4;
  const auto version = get<std::uint32_t>(bytes, pos);
  if (version != kCheckpointVersion)
    fail(ErrorCode::version, "unsupported checkpoint version " + std::to_string(version));
  const auto json_len = get<std::uint32_t>(bytes, pos);
  if (pos + json_len > bytes.size()) fail(ErrorCode::truncated, "checkpoint is truncated");
  const std::string json = bytes.substr(pos, json_len);
  pos += json_len;
  const auto stored_crc = get<std::uint32_t>(bytes, pos);
  const std::size_t payload_size = bytes.size() - pos;
  const bool crc_ok = crc_of(version, json, bytes.data() + pos, payload_size) == stored_crc;

  // A bad checksum with an intact descriptor is reported by what is wrong
  // with the size first, so truncation is distinguishable from corruption.
  Checkpoint ckpt;
  try {
    const auto desc = nlohmann::json::parse(json);
    Rng dummy(0);
    ckpt.enet = Network(NetworkSpec::from_json(desc.at("enet")), dummy);
    ckpt.pnet = Network(NetworkSpec::from_json(desc.at("pnet")), dummy);
    ckpt.metadata = desc.value("meta", nlohmann::json::object());
  } catch (const std::exception& e) {
    if (!crc_ok) fail(ErrorCode::checksum, "checkpoint checksum mismatch");
    fail(ErrorCode::format, std::string("checkpoint descriptor: ") + e.what());
  }
  const std::size_t expected = ckpt.enet.parameter_count() + ckpt.pnet.parameter_count();
  if (payload_size < expected * sizeof(double)) fail(ErrorCode::truncated, "checkpoint parameter block is truncated");
  if (payload_size > expected * sizeof(double)) fail(ErrorCode::format, "checkpoint has trailing bytes");
  if (!crc_ok) fail(ErrorCode::checksum, "checkpoint checksum mismatch");
  std::vector<double> values(expected);
  std::memcpy(values.data(), bytes.data() + pos, payload_size);
  std::size_t offset = 0;
  ckpt.enet.unflatten(values, offset);
  ckpt.pnet.unflatten(values, offset);
  return ckpt;
}

void save_checkpoint(const Checkpoint& ckpt, const std::string& path) { write_file(path, serialize_checkpoint(ckpt)); }

Checkpoint load_checkpoint(const std::string& path) { return deserialize_checkpoint(read_file(path)); }

}  // namespace mnp
