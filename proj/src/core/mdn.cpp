#include "mdn.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>

#include "error.hpp"

namespace mnp {

namespace {

double elu_plus_one(double s) { return s > 0.0 ? s + 1.0 : std::exp(s); }

double log_term(const GmmParams& p, int i, const Eigen::VectorXd& c, double* sq_dist = nullptr) {
  const double d = p.dim();
  const double s = p.sigma[i];
  const double dist2 = (c - p.mu.col(i)).squaredNorm();
  if (sq_dist) *sq_dist = dist2;
  return std::log(p.alpha[i]) - 0.5 * d * std::log(2.0 * std::numbers::pi) - d * std::log(s) - dist2 / (2.0 * s * s);
}

double log_sum_exp(const Eigen::VectorXd& v) {
  const double mx = v.maxCoeff();
  if (!std::isfinite(mx)) return mx;
  return mx + std::log((v.array() - mx).exp().sum());
}

}  // namespace

bool GmmParams::valid(double tol) const {
  if (alpha.size() < 1 || sigma.size() != alpha.size() || mu.cols() != alpha.size()) return false;
  if (!alpha.allFinite() || !sigma.allFinite() || !mu.allFinite()) return false;
  if ((alpha.array() < 0.0).any() || (sigma.array() <= 0.0).any()) return false;
  return std::abs(alpha.sum() - 1.0) <= tol;
}

nlohmann::json GmmParams::to_json() const {
  nlohmann::json comps = nlohmann::json::array();
  for (int i = 0; i < components(); ++i) {
    std::vector<double> m(mu.col(i).data(), mu.col(i).data() + mu.rows());
    comps.push_back({{"alpha", alpha[i]}, {"mu", m}, {"sigma", sigma[i]}});
  }
  return comps;
}

GmmParams constrain(const Eigen::VectorXd& raw, int q, int d) {
  if (q < 1 || d < 1) fail(ErrorCode::invalid_argument, "mixture needs q >= 1 and d >= 1");
  if (raw.size() != head_size(q, d))
    fail(ErrorCode::dimension_mismatch,
         "mixture head expects " + std::to_string(head_size(q, d)) + " values, got " + std::to_string(raw.size()));
  if (!raw.allFinite()) fail(ErrorCode::numerical, "non-finite mixture head output");
  GmmParams p;
  const Eigen::VectorXd a = raw.head(q);
  p.alpha = (a.array() - a.maxCoeff()).exp();
  p.alpha /= p.alpha.sum();
  p.sigma.resize(q);
  for (int i = 0; i < q; ++i) p.sigma[i] = elu_plus_one(raw[q + i]) + kSigmaFloor;
  p.mu = Eigen::Map<const Eigen::MatrixXd>(raw.data() + 2 * q, d, q);
  return p;
}

double log_density(const GmmParams& params, const Eigen::VectorXd& c) {
  if (c.size() != params.dim())
    fail(ErrorCode::dimension_mismatch, "mixture is " + std::to_string(params.dim()) + "-dimensional, point has " +
                                            std::to_string(c.size()) + " coordinates");
  Eigen::VectorXd terms(params.components());
  for (int i = 0; i < params.components(); ++i) terms[i] = log_term(params, i, c);
  return log_sum_exp(terms);
}

NllResult nll_loss_and_grad(const Eigen::VectorXd& raw, int q, int d, const Eigen::VectorXd& target) {
  const GmmParams p = constrain(raw, q, d);
  if (target.size() != d) fail(ErrorCode::dimension_mismatch, "target dimension does not match the mixture");
  Eigen::VectorXd terms(q), dist2(q);
  for (int i = 0; i < q; ++i) terms[i] = log_term(p, i, target, &dist2[i]);
  const double lse = log_sum_exp(terms);
  NllResult r;
  r.loss = -lse;
  if (!std::isfinite(r.loss)) fail(ErrorCode::numerical, "non-finite mixture likelihood");
  const Eigen::VectorXd resp = (terms.array() - lse).exp();
  r.grad.resize(head_size(q, d));
  r.grad.head(q) = p.alpha - resp;
  for (int i = 0; i < q; ++i) {
    const double s = p.sigma[i];
    const double raw_s = raw[q + i];
    const double dsigma = raw_s > 0.0 ? 1.0 : std::exp(raw_s);
    r.grad[q + i] = -resp[i] * (-d / s + dist2[i] / (s * s * s)) * dsigma;
    r.grad.segment(2 * q + i * d, d) = -resp[i] * (target - p.mu.col(i)) / (s * s);
  }
  if (!r.grad.allFinite()) fail(ErrorCode::numerical, "non-finite mixture gradient");
  return r;
}

Eigen::VectorXd sample(const GmmParams& params, Rng& rng) {
  const double u = rng.uniform();
  int k = params.components() - 1;
  double acc = 0.0;
  for (int i = 0; i < params.components(); ++i) {
    acc += params.alpha[i];
    if (u < acc) {
      k = i;
      break;
    }
  }
  // Rounding can leave u beyond the cumulative sum; fall back to the last weighted component.
  while (k > 0 && params.alpha[k] <= 0.0) --k;
  Eigen::VectorXd c = params.mu.col(k);
  for (int j = 0; j < params.dim(); ++j) c[j] += params.sigma[k] * rng.normal();
  return c;
}

std::vector<int> components_by_weight(const GmmParams& params) {
  std::vector<int> order(static_cast<std::size_t>(params.components()));
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](int a, int b) { return params.alpha[a] > params.alpha[b]; });
  return order;
}

}  // namespace mnp
