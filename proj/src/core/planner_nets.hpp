#pragma once

#include <Eigen/Core>
#include <functional>
#include <json.hpp>
#include <string>
#include <vector>

#include "mdn.hpp"
#include "neuralnet.hpp"
#include "robots.hpp"

namespace mnp {

enum class ModelRole { mnp, mse_baseline };

const char* to_string(ModelRole role);
ModelRole role_from_string(const std::string& s);

/// Layer widths for the encoder and the planning head.
struct ArchitectureConfig {
  std::vector<int> point_widths{32, 64};  // shared per-point MLP (relu)
  std::vector<int> post_widths{64};       // after pooling (relu)
  int latent = 64;                        // Z, linear output
  std::vector<int> pnet_hidden{256, 256, 128};
  int mixtures = kDefaultMixtures;
  double baseline_dropout = 0.5;  // baseline hidden layers only

  static ArchitectureConfig desk();
  static ArchitectureConfig paper_scale();
  void validate() const;
  nlohmann::json to_json() const;
  static ArchitectureConfig from_json(const nlohmann::json& j);
};

struct TrainingConfig {
  int epochs = 100;
  int batch_size = 256;
  /// Each batch mixes samples from at most this many scenes so the encoder
  /// runs a handful of times per step.
  int scenes_per_batch = 4;
  double lr = 1e-4;
  double lr_decay = 1.0;  // per-epoch multiplier
  double validation_fraction = 0.1;
  int patience = 10;  // epochs without validation improvement; <= 0 disables
  long max_steps = 0; // stop after this many optimizer steps; 0 = no cap

  void validate() const;
  nlohmann::json to_json() const;
  static TrainingConfig from_json(const nlohmann::json& j);
};

struct TrainingSample {
  std::size_t scene = 0;  // index into Dataset::scenes
  Configuration c_t;
  Configuration c_goal;
  Configuration c_next;
};

struct Dataset {
  std::vector<std::string> scene_files;  // parallel to scenes; may be empty for in-memory sets
  std::vector<Scene> scenes;
  std::vector<TrainingSample> samples;
  nlohmann::json meta = nlohmann::json::object();
};

/// Header line "# meta <json>", then one record per line:
/// scene_file TAB c_t TAB c_goal TAB c_next, coordinates space-separated.
std::string dataset_to_text(const Dataset& data);
/// Scene paths are resolved relative to base_dir unless absolute.
Dataset dataset_from_text(const std::string& text, const std::string& base_dir);
void save_dataset(const Dataset& data, const std::string& path);
Dataset load_dataset(const std::string& path);

/// Cloud points scaled to [-1, 1] per workspace axis, one column per point.
Eigen::MatrixXd cloud_matrix(const Scene& scene);

Checkpoint init_checkpoint(ModelRole role, const ArchitectureConfig& arch, const RobotSpec& robot, int dof,
                           int workspace_dim, std::uint64_t seed);

/// Checkpoint plus the fields decoded from its metadata.
class TrainedModel {
 public:
  explicit TrainedModel(Checkpoint ckpt);

  ModelRole role() const { return role_; }
  int dof() const { return dof_; }
  int mixtures() const { return mixtures_; }
  int latent() const { return ckpt_.enet.output_size(); }
  const Checkpoint& checkpoint() const { return ckpt_; }

  /// Z for a scene (eval mode).
  Eigen::VectorXd encode(const Scene& scene) const;
  Eigen::MatrixXd pnet_inputs(const Eigen::VectorXd& z, const Eigen::MatrixXd& current_norm,
                              const Eigen::MatrixXd& goal_norm) const;
  /// Mixture for normalized (c_t, c_goal); mnp role only.
  GmmParams mixture(const Eigen::VectorXd& z, const Vec& current_norm, const Vec& goal_norm) const;
  /// Direct prediction in normalized coordinates; baseline role only. With
  /// dropout_rng set, the network runs in train mode.
  Eigen::VectorXd point_estimate(const Eigen::VectorXd& z, const Vec& current_norm, const Vec& goal_norm,
                                 Rng* dropout_rng) const;

 private:
  Checkpoint ckpt_;
  ModelRole role_ = ModelRole::mnp;
  int dof_ = 0;
  int mixtures_ = 0;
};

/// Draws next configurations for a fixed (current, goal) pair. The mixture
/// (or the baseline input) is computed once per condition() call.
class NextStepSampler {
 public:
  NextStepSampler(const TrainedModel& model, const RobotModel& robot, Eigen::VectorXd z);

  void condition(const Configuration& current, const Configuration& goal);
  /// Sample in normalized space, denormalize, clamp to bounds.
  Configuration draw(Rng& rng);
  const GmmParams& mixture() const { return gmm_; }

 private:
  const TrainedModel* model_;
  const RobotModel* robot_;
  Eigen::VectorXd z_;
  Vec current_norm_, goal_norm_;
  GmmParams gmm_;
};

Configuration predict_next(const TrainedModel& model, const RobotModel& robot, const Eigen::VectorXd& z,
                           const Configuration& c_t, const Configuration& c_goal, Rng& rng);

/// Samples of one scene inside a batch; columns are samples, all in normalized coordinates.
struct SceneBatch {
  Eigen::MatrixXd cloud;
  Eigen::MatrixXd current;
  Eigen::MatrixXd goal;
  Eigen::MatrixXd target;
};

/// Mean loss over every sample in the batch (mixture NLL or squared error,
/// by role). When gradient buffers are given they are accumulated through
/// pnet into the shared encoder. A dropout rng switches pnet to train mode.
double joint_loss_and_grad(const Network& enet, const Network& pnet, ModelRole role, int mixtures,
                           const std::vector<SceneBatch>& batch, Gradients* enet_grads, Gradients* pnet_grads,
                           Rng* dropout_rng);

struct TrainingReport {
  std::vector<double> train_loss;       // per epoch mean
  std::vector<double> validation_loss;  // per epoch, empty without a split
  int epochs_run = 0;
  int best_epoch = -1;
  long steps = 0;
};

struct TrainResult {
  Checkpoint checkpoint;
  TrainingReport report;
};

using EpochLogger = std::function<void(int epoch, double train_loss, double validation_loss)>;

TrainResult train_mnp(const Dataset& data, const RobotSpec& robot, const ArchitectureConfig& arch,
                      const TrainingConfig& config, std::uint64_t seed, const EpochLogger& log = {});
TrainResult train_mse_baseline(const Dataset& data, const RobotSpec& robot, const ArchitectureConfig& arch,
                               const TrainingConfig& config, std::uint64_t seed, const EpochLogger& log = {});

/// Mean loss of a model over samples (eval mode, no dropout).
double evaluate_loss(const TrainedModel& model, const Dataset& data, const std::vector<std::size_t>& indices);

}  // namespace mnp
