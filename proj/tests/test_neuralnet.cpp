#include <gtest/gtest.h>

#include <cmath>
#include <cstring>

#include "error.hpp"
#include "neuralnet.hpp"

using namespace mnp;

namespace {

Network make_net(int input, std::vector<LayerSpec> layers, std::optional<int> pool, std::uint64_t seed) {
  NetworkSpec spec;
  spec.input = input;
  spec.layers = std::move(layers);
  spec.pool_after = pool;
  Rng rng(seed);
  return Network(spec, rng);
}

Eigen::MatrixXd random_matrix(Eigen::Index r, Eigen::Index c, Rng& rng) {
  Eigen::MatrixXd m(r, c);
  for (Eigen::Index j = 0; j < c; ++j)
    for (Eigen::Index i = 0; i < r; ++i) m(i, j) = rng.uniform(-1, 1);
  return m;
}

// L = sum(forward(x) .* R); dropout masks are replayed from a fixed seed.
double probe_loss(const Network& net, const Eigen::MatrixXd& x, const Eigen::MatrixXd& r, Mode mode) {
  Rng drop(99);
  return (forward(net, x, mode, &drop).output.array() * r.array()).sum();
}

double max_fd_error(Network& net, const Eigen::MatrixXd& x, Mode mode, std::uint64_t seed, int probes) {
  Rng rng(seed);
  Rng drop(99);
  auto fr = forward(net, x, mode, &drop);
  const Eigen::MatrixXd r = random_matrix(fr.output.rows(), fr.output.cols(), rng);
  Gradients g = Gradients::zeros_like(net);
  const Eigen::MatrixXd dx = backward(net, fr.tape, r, g);

  std::vector<double> analytic;
  for (std::size_t l = 0; l < g.weight.size(); ++l) {
    analytic.insert(analytic.end(), g.weight[l].data(), g.weight[l].data() + g.weight[l].size());
    analytic.insert(analytic.end(), g.bias[l].data(), g.bias[l].data() + g.bias[l].size());
  }
  std::vector<double> params = net.flatten();
  double worst = 0.0;
  constexpr double h = 1e-5;
  for (int p = 0; p < probes; ++p) {
    const std::size_t k = rng.index(params.size());
    auto eval = [&](double delta) {
      std::vector<double> q = params;
      q[k] += delta;
      std::size_t off = 0;
      net.unflatten(q, off);
      return probe_loss(net, x, r, mode);
    };
    const double fd = (eval(h) - eval(-h)) / (2 * h);
    const double err = std::abs(fd - analytic[k]) / std::max(1.0, std::abs(fd) + std::abs(analytic[k]));
    worst = std::max(worst, err);
  }
  std::size_t off = 0;
  net.unflatten(params, off);
  // Input gradient, one probe per input entry of the first column.
  for (Eigen::Index i = 0; i < x.rows(); ++i) {
    Eigen::MatrixXd xp = x, xm = x;
    xp(i, 0) += h;
    xm(i, 0) -= h;
    const double fd = (probe_loss(net, xp, r, mode) - probe_loss(net, xm, r, mode)) / (2 * h);
    worst = std::max(worst, std::abs(fd - dx(i, 0)) / std::max(1.0, std::abs(fd) + std::abs(dx(i, 0))));
  }
  return worst;
}

}  // namespace

TEST(NeuralNet, ForwardExamples) {
  Network id = make_net(3, {{3, Activation::identity}}, std::nullopt, 1);
  id.mutable_layers()[0].weight.setIdentity();
  Eigen::MatrixXd x(3, 1);
  x << 0.5, -2, 7;
  EXPECT_EQ(forward(id, x, Mode::eval).output, x);

  Eigen::MatrixXd v(2, 1);
  v << -1, 2;
  Eigen::MatrixXd relu = apply_activation(Activation::relu, v);
  EXPECT_EQ(relu(0, 0), 0.0);
  EXPECT_EQ(relu(1, 0), 2.0);
  const Eigen::MatrixXd sm = apply_activation(Activation::softmax, Eigen::MatrixXd::Zero(3, 1));
  for (int i = 0; i < 3; ++i) EXPECT_NEAR(sm(i, 0), 1.0 / 3, 1e-15);
  const Eigen::MatrixXd big = apply_activation(Activation::softmax, Eigen::MatrixXd::Constant(2, 1, 1000.0));
  EXPECT_NEAR(big(0, 0), 0.5, 1e-15);

  EXPECT_THROW(forward(id, Eigen::MatrixXd::Zero(2, 1), Mode::eval), Error);
}

TEST(NeuralNet, MaxPool) {
  Eigen::MatrixXd f(2, 2);  // features x points
  f << 1, 3, 5, 2;
  const auto r = maxpool_points(f);
  EXPECT_EQ(r.pooled, Eigen::Vector2d(3, 5));
  EXPECT_EQ(r.argmax, (std::vector<Eigen::Index>{1, 0}));
  EXPECT_EQ(maxpool_points(f.col(0)).pooled, Eigen::Vector2d(1, 5));
  Eigen::MatrixXd tie(1, 3);
  tie << 4, 4, 1;
  EXPECT_EQ(maxpool_points(tie).argmax[0], 0);
  EXPECT_THROW(maxpool_points(Eigen::MatrixXd(2, 0)), Error);
}

TEST(NeuralNet, PooledNetworkIsPermutationInvariant) {
  Network enet = make_net(2, {{16, Activation::relu}, {32, Activation::relu}, {8, Activation::identity}}, 2, 3);
  Rng rng(4);
  const Eigen::MatrixXd pts = random_matrix(2, 50, rng);
  const Eigen::MatrixXd base = forward(enet, pts, Mode::eval).output;
  for (int t = 0; t < 20; ++t) {
    Eigen::MatrixXd perm = pts;
    for (Eigen::Index i = perm.cols() - 1; i > 0; --i) perm.col(i).swap(perm.col(rng.index(i + 1)));
    EXPECT_EQ(forward(enet, perm, Mode::eval).output, base);
  }
}

TEST(NeuralNet, GradientsMatchFiniteDifferences) {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    Network mlp = make_net(4, {{6, Activation::elu}, {5, Activation::relu}, {3, Activation::softmax}}, std::nullopt, seed);
    Rng rng(seed + 100);
    EXPECT_LT(max_fd_error(mlp, random_matrix(4, 3, rng), Mode::eval, seed, 20), 1e-4);

    Network pooled = make_net(2, {{8, Activation::relu}, {6, Activation::elu}, {4, Activation::identity}}, 1, seed);
    EXPECT_LT(max_fd_error(pooled, random_matrix(2, 12, rng), Mode::eval, seed, 20), 1e-4);

    Network dropped = make_net(3, {{8, Activation::relu, 0.3}, {2, Activation::identity}}, std::nullopt, seed);
    EXPECT_LT(max_fd_error(dropped, random_matrix(3, 4, rng), Mode::train, seed, 20), 1e-4);
  }
}

TEST(NeuralNet, BackwardAnalyticCases) {
  Network lin = make_net(3, {{1, Activation::identity}}, std::nullopt, 5);
  Eigen::MatrixXd x(3, 1);
  x << 0.3, -1.2, 2.5;
  auto fr = forward(lin, x, Mode::eval);
  Gradients g = Gradients::zeros_like(lin);
  backward(lin, fr.tape, Eigen::MatrixXd::Ones(1, 1), g);
  EXPECT_TRUE(g.weight[0].transpose().isApprox(x));
  EXPECT_EQ(g.bias[0](0), 1.0);

  Gradients z = Gradients::zeros_like(lin);
  backward(lin, fr.tape, Eigen::MatrixXd::Zero(1, 1), z);
  EXPECT_EQ(z.weight[0].squaredNorm() + z.bias[0].squaredNorm(), 0.0);
}

TEST(NeuralNet, StaleTapeIsRejected) {
  Network net = make_net(2, {{2, Activation::relu}}, std::nullopt, 6);
  const auto fr = forward(net, Eigen::MatrixXd::Ones(2, 1), Mode::eval);
  net.mutable_layers();
  Gradients g = Gradients::zeros_like(net);
  try {
    backward(net, fr.tape, Eigen::MatrixXd::Ones(2, 1), g);
    ADD_FAILURE();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::stale_tape);
  }
  const Network copy = net;
  const auto fr2 = forward(net, Eigen::MatrixXd::Ones(2, 1), Mode::eval);
  EXPECT_THROW(backward(copy, fr2.tape, Eigen::MatrixXd::Ones(2, 1), g), Error);
}

TEST(NeuralNet, InvertedDropoutExpectation) {
  Network net = make_net(4, {{6, Activation::relu, 0.4}}, std::nullopt, 7);
  Eigen::MatrixXd x(4, 1);
  x << 0.5, -0.1, 0.8, 0.3;
  const Eigen::VectorXd eval = forward(net, x, Mode::eval).output.col(0);
  const int n = 10000;
  Eigen::VectorXd sum = Eigen::VectorXd::Zero(6);
  Rng drop(1);
  for (int i = 0; i < n; ++i) sum += forward(net, x, Mode::train, &drop).output.col(0);
  const double keep = 0.6;
  for (int k = 0; k < 6; ++k) {
    const double sd = eval(k) * std::sqrt((1 - keep) / keep) / std::sqrt(n);
    EXPECT_NEAR(sum(k) / n, eval(k), 3 * sd + 1e-15);
  }
  EXPECT_THROW(forward(net, x, Mode::train, nullptr), Error);
}

TEST(NeuralNet, AdamClosedForm) {
  Network net = make_net(2, {{2, Activation::identity}}, std::nullopt, 8);
  AdamConfig cfg;
  cfg.lr = 1e-3;
  AdamState st = make_adam_state(net, cfg);
  const auto before = net.flatten();
  Gradients g = Gradients::zeros_like(net);
  adam_step(net, g, st);
  EXPECT_EQ(net.flatten(), before);
  EXPECT_EQ(st.step, 1);

  AdamState st2 = make_adam_state(net, cfg);
  g.weight[0].setConstant(0.7);
  g.bias[0].setConstant(-2.0);
  adam_step(net, g, st2);
  const auto after = net.flatten();
  // First bias-corrected step: lr * g / (|g| + eps).
  for (std::size_t i = 0; i < 4; ++i) EXPECT_NEAR(before[i] - after[i], cfg.lr * 0.7 / (0.7 + cfg.eps), 1e-15);
  for (std::size_t i = 4; i < 6; ++i) EXPECT_NEAR(after[i] - before[i], cfg.lr * 2.0 / (2.0 + cfg.eps), 1e-15);

  g.bias[0](0) = std::nan("");
  EXPECT_THROW(adam_step(net, g, st2), Error);
  Gradients wrong = Gradients::zeros_like(make_net(3, {{2, Activation::identity}}, std::nullopt, 1));
  EXPECT_THROW(adam_step(net, wrong, st2), Error);
}

TEST(NeuralNet, AdamMatchesReferenceRecurrence) {
  Network net = make_net(1, {{1, Activation::identity}}, std::nullopt, 9);
  AdamConfig cfg;
  AdamState st = make_adam_state(net, cfg);
  double w = net.layers()[0].weight(0, 0), m = 0, v = 0;
  for (int t = 1; t <= 50; ++t) {
    const double grad = std::sin(t);
    Gradients g = Gradients::zeros_like(net);
    g.weight[0](0, 0) = grad;
    adam_step(net, g, st);
    m = cfg.beta1 * m + (1 - cfg.beta1) * grad;
    v = cfg.beta2 * v + (1 - cfg.beta2) * grad * grad;
    const double mh = m / (1 - std::pow(cfg.beta1, t)), vh = v / (1 - std::pow(cfg.beta2, t));
    w -= cfg.lr * mh / (std::sqrt(vh) + cfg.eps);
    EXPECT_NEAR(net.layers()[0].weight(0, 0), w, 1e-14);
  }
}

TEST(NeuralNet, CheckpointRoundTripIsBitExact) {
  Checkpoint ck{make_net(2, {{8, Activation::relu}, {4, Activation::identity}}, 1, 10),
                make_net(6, {{5, Activation::elu, 0.1}, {7, Activation::identity}}, std::nullopt, 11),
                {{"role", "test"}, {"x", 1.5}}};
  const std::string bytes = serialize_checkpoint(ck);
  const Checkpoint back = deserialize_checkpoint(bytes);
  EXPECT_EQ(back.enet.flatten(), ck.enet.flatten());
  EXPECT_EQ(back.pnet.flatten(), ck.pnet.flatten());
  EXPECT_EQ(back.metadata, ck.metadata);
  EXPECT_EQ(back.descriptor(), ck.descriptor());
  EXPECT_EQ(serialize_checkpoint(back), bytes);
  EXPECT_EQ(bytes.substr(0, 4), "MNPC");
}

TEST(NeuralNet, CorruptCheckpointsAreRejected) {
  Checkpoint ck{make_net(2, {{4, Activation::relu}}, 1, 12), make_net(6, {{3, Activation::identity}}, std::nullopt, 13),
                {}};
  const std::string bytes = serialize_checkpoint(ck);
  auto code_of = [](const std::string& b) {
    try {
      deserialize_checkpoint(b);
    } catch (const Error& e) {
      return e.code();
    }
    return ErrorCode::invalid_argument;  // not rejected
  };
  for (std::size_t pos : {std::size_t{20}, bytes.size() / 2, bytes.size() - 1}) {
    std::string bad = bytes;
    bad[pos] = static_cast<char>(bad[pos] ^ 0x10);
    EXPECT_EQ(code_of(bad), ErrorCode::checksum) << pos;
  }
  std::string v99 = bytes;
  const std::uint32_t ver = 99;
  std::memcpy(&v99[4], &ver, 4);
  EXPECT_EQ(code_of(v99), ErrorCode::version);
  EXPECT_EQ(code_of(bytes.substr(0, bytes.size() - 8)), ErrorCode::truncated);
  EXPECT_EQ(code_of(bytes.substr(0, 6)), ErrorCode::truncated);
  EXPECT_EQ(code_of("XXXX" + bytes.substr(4)), ErrorCode::format);
  EXPECT_EQ(code_of(bytes + "extra"), ErrorCode::format);
}

TEST(NeuralNet, SpecRoundTrip) {
  NetworkSpec s;
  s.input = 3;
  s.layers = {{4, Activation::elu, 0.25}, {2, Activation::softmax, 0.0}};
  s.pool_after = 1;
  EXPECT_EQ(NetworkSpec::from_json(s.to_json()).to_json().dump(), s.to_json().dump());
  EXPECT_THROW(activation_from_string("tanh"), Error);
}

TEST(NeuralNet, InitIsSeededAndScaled) {
  Network a = make_net(100, {{50, Activation::relu}}, std::nullopt, 1);
  Network b = make_net(100, {{50, Activation::relu}}, std::nullopt, 1);
  EXPECT_EQ(a.flatten(), b.flatten());
  const double bound = std::sqrt(6.0 / 100);
  EXPECT_LE(a.layers()[0].weight.cwiseAbs().maxCoeff(), bound);
  EXPECT_GT(a.layers()[0].weight.cwiseAbs().maxCoeff(), 0.9 * bound);
  EXPECT_EQ(a.layers()[0].bias.squaredNorm(), 0.0);
  EXPECT_EQ(a.parameter_count(), 100u * 50 + 50);
}
