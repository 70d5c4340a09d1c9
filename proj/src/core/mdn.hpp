#pragma once

#include <Eigen/Core>
#include <json.hpp>

#include "rng.hpp"

namespace mnp {

inline constexpr int kDefaultMixtures = 5;
inline constexpr double kSigmaFloor = 1e-6;

/// Isotropic Gaussian mixture in R^d.
struct GmmParams {
  Eigen::VectorXd alpha;  // q, on the simplex
  Eigen::MatrixXd mu;     // d x q
  Eigen::VectorXd sigma;  // q, > 0

  int components() const { return static_cast<int>(alpha.size()); }
  int dim() const { return static_cast<int>(mu.rows()); }
  /// Simplex, positivity and finiteness checks.
  bool valid(double tol = 1e-9) const;
  nlohmann::json to_json() const;
};

/// Raw head layout: [alpha logits (q), sigma pre-activations (q), means (q*d, component-major)].
inline int head_size(int q, int d) { return q * (d + 2); }

GmmParams constrain(const Eigen::VectorXd& raw, int q, int d);

/// Natural log of the mixture density, computed with log-sum-exp.
double log_density(const GmmParams& params, const Eigen::VectorXd& c);

struct NllResult {
  double loss = 0.0;
  Eigen::VectorXd grad;  // w.r.t. the raw head
};

NllResult nll_loss_and_grad(const Eigen::VectorXd& raw, int q, int d, const Eigen::VectorXd& target);

/// Picks a component by alpha, then draws mu_k + sigma_k z.
Eigen::VectorXd sample(const GmmParams& params, Rng& rng);

/// Component order by decreasing alpha (stable).
std::vector<int> components_by_weight(const GmmParams& params);

}  // namespace mnp
