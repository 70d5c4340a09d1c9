#include "planner_nets.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <limits>
#include <map>
#include <numeric>
#include <sstream>

#include "error.hpp"
#include "io.hpp"

namespace mnp {

const char* to_string(ModelRole role) { return role == ModelRole::mnp ? "mnp" : "mse_baseline"; }

ModelRole role_from_string(const std::string& s) {
  if (s == "mnp") return ModelRole::mnp;
  if (s == "mse_baseline") return ModelRole::mse_baseline;
  fail(ErrorCode::format, "unknown model role '" + s + "'");
}

ArchitectureConfig ArchitectureConfig::desk() { return {}; }

ArchitectureConfig ArchitectureConfig::paper_scale() {
  ArchitectureConfig a;
  a.point_widths = {64, 128};
  a.post_widths = {128};
  a.latent = 128;
  a.pnet_hidden = {512, 512, 256};
  return a;
}

namespace {

void require_positive(const std::vector<int>& widths, const char* what) {
  for (int w : widths)
    if (w < 1) fail(ErrorCode::config, std::string(what) + " widths must be positive");
}

template <typename T>
void read_opt(const nlohmann::json& j, const char* key, T& out) {
  if (j.contains(key)) out = j.at(key).get<T>();
}

}  // namespace

void ArchitectureConfig::validate() const {
  if (point_widths.empty()) fail(ErrorCode::config, "encoder needs at least one per-point layer");
  require_positive(point_widths, "point");
  require_positive(post_widths, "post");
  require_positive(pnet_hidden, "pnet");
  if (latent < 1) fail(ErrorCode::config, "latent size must be positive");
  if (mixtures < 1) fail(ErrorCode::config, "mixture count must be positive");
  if (baseline_dropout < 0.0 || baseline_dropout >= 1.0) fail(ErrorCode::config, "dropout must be in [0, 1)");
}

nlohmann::json ArchitectureConfig::to_json() const {
  return {{"point_widths", point_widths}, {"post_widths", post_widths}, {"latent", latent},
          {"pnet_hidden", pnet_hidden},   {"mixtures", mixtures},       {"baseline_dropout", baseline_dropout}};
}

ArchitectureConfig ArchitectureConfig::from_json(const nlohmann::json& j) {
  ArchitectureConfig a;
  try {
    read_opt(j, "point_widths", a.point_widths);
    read_opt(j, "post_widths", a.post_widths);
    read_opt(j, "latent", a.latent);
    read_opt(j, "pnet_hidden", a.pnet_hidden);
    read_opt(j, "mixtures", a.mixtures);
    read_opt(j, "baseline_dropout", a.baseline_dropout);
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorCode::config, std::string("network config: ") + e.what());
  }
  a.validate();
  return a;
}

void TrainingConfig::validate() const {
  if (epochs < 1 || batch_size < 1 || scenes_per_batch < 1) fail(ErrorCode::config, "training sizes must be positive");
  if (!(lr > 0.0)) fail(ErrorCode::config, "learning rate must be positive");
  if (!(lr_decay > 0.0) || lr_decay > 1.0) fail(ErrorCode::config, "lr_decay must be in (0, 1]");
  if (validation_fraction < 0.0 || validation_fraction >= 1.0)
    fail(ErrorCode::config, "validation_fraction must be in [0, 1)");
  if (max_steps < 0) fail(ErrorCode::config, "max_steps must be non-negative");
}

nlohmann::json TrainingConfig::to_json() const {
  return {{"epochs", epochs},
          {"batch_size", batch_size},
          {"scenes_per_batch", scenes_per_batch},
          {"lr", lr},
          {"lr_decay", lr_decay},
          {"validation_fraction", validation_fraction},
          {"patience", patience},
          {"max_steps", max_steps}};
}

TrainingConfig TrainingConfig::from_json(const nlohmann::json& j) {
  TrainingConfig t;
  try {
    read_opt(j, "epochs", t.epochs);
    read_opt(j, "batch_size", t.batch_size);
    read_opt(j, "scenes_per_batch", t.scenes_per_batch);
    read_opt(j, "lr", t.lr);
    read_opt(j, "lr_decay", t.lr_decay);
    read_opt(j, "validation_fraction", t.validation_fraction);
    read_opt(j, "patience", t.patience);
    read_opt(j, "max_steps", t.max_steps);
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorCode::config, std::string("training config: ") + e.what());
  }
  t.validate();
  return t;
}

// ---------------------------------------------------------------- dataset IO

namespace {

void append_vec(std::string& out, const Vec& v) {
  for (Eigen::Index k = 0; k < v.size(); ++k) {
    if (k) out += ' ';
    out += format_double(v[k]);
  }
}

Vec parse_vec(const std::string& field, std::size_t line_no) {
  std::istringstream in(field);
  std::vector<double> vals;
  std::string tok;
  while (in >> tok) {
    try {
      std::size_t used = 0;
      vals.push_back(std::stod(tok, &used));
      if (used != tok.size()) throw std::invalid_argument(tok);
    } catch (const std::exception&) {
      fail(ErrorCode::format, "dataset line " + std::to_string(line_no) + ": bad number '" + tok + "'");
    }
  }
  if (vals.empty() || vals.size() > 8)
    fail(ErrorCode::format, "dataset line " + std::to_string(line_no) + ": bad coordinate count");
  Vec v(static_cast<Eigen::Index>(vals.size()));
  for (std::size_t i = 0; i < vals.size(); ++i) v[static_cast<Eigen::Index>(i)] = vals[i];
  return v;
}

}  // namespace

std::string dataset_to_text(const Dataset& data) {
  if (data.scene_files.size() != data.scenes.size())
    fail(ErrorCode::invalid_argument, "dataset scenes need file names to be written");
  std::string out = "# meta " + data.meta.dump() + "\n";
  for (const auto& s : data.samples) {
    out += data.scene_files.at(s.scene);
    out += '\t';
    append_vec(out, s.c_t);
    out += '\t';
    append_vec(out, s.c_goal);
    out += '\t';
    append_vec(out, s.c_next);
    out += '\n';
  }
  return out;
}

Dataset dataset_from_text(const std::string& text, const std::string& base_dir) {
  Dataset data;
  std::map<std::string, std::size_t> index;
  std::istringstream in(text);
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    if (line[0] == '#') {
      if (line.rfind("# meta ", 0) == 0) {
        try {
          data.meta = nlohmann::json::parse(line.substr(7));
        } catch (const nlohmann::json::exception& e) {
          fail(ErrorCode::format, std::string("dataset header: ") + e.what());
        }
      }
      continue;
    }
    std::vector<std::string> fields;
    std::size_t start = 0;
    for (;;) {
      const auto tab = line.find('\t', start);
      fields.push_back(line.substr(start, tab == std::string::npos ? std::string::npos : tab - start));
      if (tab == std::string::npos) break;
      start = tab + 1;
    }
    if (fields.size() != 4)
      fail(ErrorCode::format, "dataset line " + std::to_string(line_no) + ": expected 4 tab-separated fields");
    auto it = index.find(fields[0]);
    if (it == index.end()) {
      std::filesystem::path p(fields[0]);
      if (p.is_relative() && !base_dir.empty()) p = std::filesystem::path(base_dir) / p;
      data.scenes.push_back(load_scene(p.string()));
      data.scene_files.push_back(fields[0]);
      it = index.emplace(fields[0], data.scenes.size() - 1).first;
    }
    TrainingSample s;
    s.scene = it->second;
    s.c_t = parse_vec(fields[1], line_no);
    s.c_goal = parse_vec(fields[2], line_no);
    s.c_next = parse_vec(fields[3], line_no);
    if (s.c_goal.size() != s.c_t.size() || s.c_next.size() != s.c_t.size())
      fail(ErrorCode::format, "dataset line " + std::to_string(line_no) + ": inconsistent dimensions");
    if (!data.samples.empty() && s.c_t.size() != data.samples.front().c_t.size())
      fail(ErrorCode::format, "dataset line " + std::to_string(line_no) + ": dimension differs from earlier records");
    data.samples.push_back(std::move(s));
  }
  return data;
}

void save_dataset(const Dataset& data, const std::string& path) { write_file(path, dataset_to_text(data)); }

Dataset load_dataset(const std::string& path) {
  return dataset_from_text(read_file(path), std::filesystem::path(path).parent_path().string());
}

// ------------------------------------------------------------------ networks

Eigen::MatrixXd cloud_matrix(const Scene& scene) {
  if (scene.cloud.empty()) fail(ErrorCode::invalid_argument, "scene has an empty point cloud");
  const auto m = scene.dim();
  Eigen::MatrixXd x(m, static_cast<Eigen::Index>(scene.cloud.size()));
  for (std::size_t i = 0; i < scene.cloud.size(); ++i) {
    const Vec& p = scene.cloud[i];
    for (int k = 0; k < m; ++k)
      x(k, static_cast<Eigen::Index>(i)) =
          2.0 * (p[k] - scene.workspace.lo[k]) / (scene.workspace.hi[k] - scene.workspace.lo[k]) - 1.0;
  }
  return x;
}

namespace {

NetworkSpec enet_spec(const ArchitectureConfig& arch, int workspace_dim) {
  NetworkSpec s;
  s.input = workspace_dim;
  for (int w : arch.point_widths) s.layers.push_back({w, Activation::relu, 0.0});
  for (int w : arch.post_widths) s.layers.push_back({w, Activation::relu, 0.0});
  s.layers.push_back({arch.latent, Activation::identity, 0.0});
  s.pool_after = static_cast<int>(arch.point_widths.size());
  return s;
}

NetworkSpec pnet_spec(ModelRole role, const ArchitectureConfig& arch, int dof) {
  NetworkSpec s;
  s.input = arch.latent + 2 * dof;
  const double p = role == ModelRole::mse_baseline ? arch.baseline_dropout : 0.0;
  for (int w : arch.pnet_hidden) s.layers.push_back({w, Activation::relu, p});
  s.layers.push_back({role == ModelRole::mnp ? head_size(arch.mixtures, dof) : dof, Activation::identity, 0.0});
  return s;
}

}  // namespace

Checkpoint init_checkpoint(ModelRole role, const ArchitectureConfig& arch, const RobotSpec& robot, int dof,
                           int workspace_dim, std::uint64_t seed) {
  arch.validate();
  Rng rng(seed);
  Checkpoint ck;
  ck.enet = Network(enet_spec(arch, workspace_dim), rng);
  ck.pnet = Network(pnet_spec(role, arch, dof), rng);
  ck.metadata = {{"role", to_string(role)},  {"robot", robot.to_json()},   {"dof", dof},
                 {"workspace_dim", workspace_dim}, {"mixtures", arch.mixtures}, {"architecture", arch.to_json()}};
  return ck;
}

TrainedModel::TrainedModel(Checkpoint ckpt) : ckpt_(std::move(ckpt)) {
  try {
    role_ = role_from_string(ckpt_.metadata.at("role").get<std::string>());
    dof_ = ckpt_.metadata.at("dof").get<int>();
    mixtures_ = ckpt_.metadata.value("mixtures", kDefaultMixtures);
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorCode::format, std::string("checkpoint metadata: ") + e.what());
  }
  const int expected_out = role_ == ModelRole::mnp ? head_size(mixtures_, dof_) : dof_;
  if (ckpt_.pnet.input_size() != ckpt_.enet.output_size() + 2 * dof_ || ckpt_.pnet.output_size() != expected_out)
    fail(ErrorCode::format, "checkpoint networks do not match their metadata");
}

Eigen::VectorXd TrainedModel::encode(const Scene& scene) const {
  return forward(ckpt_.enet, cloud_matrix(scene), Mode::eval).output.col(0);
}

Eigen::MatrixXd TrainedModel::pnet_inputs(const Eigen::VectorXd& z, const Eigen::MatrixXd& current_norm,
                                          const Eigen::MatrixXd& goal_norm) const {
  if (z.size() != latent()) fail(ErrorCode::dimension_mismatch, "latent vector size does not match the checkpoint");
  if (current_norm.rows() != dof_ || goal_norm.rows() != dof_ || goal_norm.cols() != current_norm.cols())
    fail(ErrorCode::dimension_mismatch, "configuration size does not match the checkpoint");
  Eigen::MatrixXd x(latent() + 2 * dof_, current_norm.cols());
  x.topRows(latent()) = z.replicate(1, current_norm.cols());
  x.middleRows(latent(), dof_) = current_norm;
  x.bottomRows(dof_) = goal_norm;
  return x;
}

GmmParams TrainedModel::mixture(const Eigen::VectorXd& z, const Vec& current_norm, const Vec& goal_norm) const {
  if (role_ != ModelRole::mnp) fail(ErrorCode::invalid_argument, "baseline checkpoints do not produce mixtures");
  const auto out = forward(ckpt_.pnet, pnet_inputs(z, current_norm, goal_norm), Mode::eval).output;
  return constrain(out.col(0), mixtures_, dof_);
}

Eigen::VectorXd TrainedModel::point_estimate(const Eigen::VectorXd& z, const Vec& current_norm, const Vec& goal_norm,
                                             Rng* dropout_rng) const {
  if (role_ != ModelRole::mse_baseline) fail(ErrorCode::invalid_argument, "mixture checkpoints have no point estimate");
  const auto mode = dropout_rng ? Mode::train : Mode::eval;
  return forward(ckpt_.pnet, pnet_inputs(z, current_norm, goal_norm), mode, dropout_rng).output.col(0);
}

NextStepSampler::NextStepSampler(const TrainedModel& model, const RobotModel& robot, Eigen::VectorXd z)
    : model_(&model), robot_(&robot), z_(std::move(z)) {
  if (robot.dof() != model.dof()) fail(ErrorCode::dimension_mismatch, "robot does not match the checkpoint");
}

void NextStepSampler::condition(const Configuration& current, const Configuration& goal) {
  current_norm_ = normalize(*robot_, current);
  goal_norm_ = normalize(*robot_, goal);
  if (model_->role() == ModelRole::mnp) gmm_ = model_->mixture(z_, current_norm_, goal_norm_);
}

Configuration NextStepSampler::draw(Rng& rng) {
  Eigen::VectorXd v = model_->role() == ModelRole::mnp ? sample(gmm_, rng)
                                                      : model_->point_estimate(z_, current_norm_, goal_norm_, &rng);
  return robot_->clamp(denormalize(*robot_, Vec(v)));
}

Configuration predict_next(const TrainedModel& model, const RobotModel& robot, const Eigen::VectorXd& z,
                           const Configuration& c_t, const Configuration& c_goal, Rng& rng) {
  NextStepSampler s(model, robot, z);
  s.condition(c_t, c_goal);
  return s.draw(rng);
}

// ------------------------------------------------------------------ training

double joint_loss_and_grad(const Network& enet, const Network& pnet, ModelRole role, int mixtures,
                           const std::vector<SceneBatch>& batch, Gradients* enet_grads, Gradients* pnet_grads,
                           Rng* dropout_rng) {
  Eigen::Index total = 0;
  for (const auto& sb : batch) total += sb.current.cols();
  if (total == 0) fail(ErrorCode::invalid_argument, "empty batch");
  const bool want_grads = enet_grads && pnet_grads;
  const Eigen::Index latent = enet.output_size();
  const int dof = static_cast<int>(batch.front().current.rows());
  double loss = 0.0;
  for (const auto& sb : batch) {
    const Eigen::Index k = sb.current.cols();
    if (k == 0) continue;
    const auto ef = forward(enet, sb.cloud, Mode::eval);
    Eigen::MatrixXd x(latent + 2 * dof, k);
    x.topRows(latent) = ef.output.replicate(1, k);
    x.middleRows(latent, dof) = sb.current;
    x.bottomRows(dof) = sb.goal;
    const auto pf = forward(pnet, x, dropout_rng ? Mode::train : Mode::eval, dropout_rng);
    Eigen::MatrixXd dy(pf.output.rows(), k);
    for (Eigen::Index j = 0; j < k; ++j) {
      if (role == ModelRole::mnp) {
        const Eigen::VectorXd raw = pf.output.col(j);
        if (!constrain(raw, mixtures, dof).valid())
          fail(ErrorCode::numerical, "mixture parameters left the valid set during training");
        const auto nll = nll_loss_and_grad(raw, mixtures, dof, sb.target.col(j));
        loss += nll.loss;
        dy.col(j) = nll.grad / static_cast<double>(total);
      } else {
        const Eigen::VectorXd diff = pf.output.col(j) - sb.target.col(j);
        loss += diff.squaredNorm();
        dy.col(j) = 2.0 * diff / static_cast<double>(total);
      }
    }
    if (!std::isfinite(loss)) fail(ErrorCode::numerical, "non-finite training loss");
    if (want_grads) {
      const Eigen::MatrixXd dx = backward(pnet, pf.tape, dy, *pnet_grads);
      const Eigen::MatrixXd dz = dx.topRows(latent).rowwise().sum();
      backward(enet, ef.tape, dz, *enet_grads);
    }
  }
  return loss / static_cast<double>(total);
}

namespace {

template <typename T>
void shuffle(std::vector<T>& v, Rng& rng) {
  for (std::size_t i = v.size(); i > 1; --i) std::swap(v[i - 1], v[rng.index(i)]);
}

struct Prepared {
  std::vector<Eigen::MatrixXd> clouds;
  std::vector<std::size_t> scene;
  Eigen::MatrixXd current, goal, target;  // dof x N
};

Prepared prepare(const Dataset& data, const RobotSpec& robot_spec, int& dof) {
  Prepared p;
  std::vector<RobotModel> models;
  for (const auto& s : data.scenes) {
    models.push_back(robot_spec.build(s.workspace));
    p.clouds.push_back(cloud_matrix(s));
  }
  dof = models.front().dof();
  const auto n = static_cast<Eigen::Index>(data.samples.size());
  p.current.resize(dof, n);
  p.goal.resize(dof, n);
  p.target.resize(dof, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto& s = data.samples[static_cast<std::size_t>(i)];
    if (s.scene >= data.scenes.size()) fail(ErrorCode::invalid_argument, "sample references a missing scene");
    const auto& m = models[s.scene];
    p.scene.push_back(s.scene);
    p.current.col(i) = normalize(m, s.c_t);
    p.goal.col(i) = normalize(m, s.c_goal);
    p.target.col(i) = normalize(m, s.c_next);
  }
  return p;
}

std::vector<SceneBatch> gather(const Prepared& p, const std::vector<std::size_t>& indices) {
  std::vector<SceneBatch> out;
  std::map<std::size_t, std::size_t> slot;
  std::vector<std::vector<std::size_t>> members;
  for (auto i : indices) {
    auto [it, inserted] = slot.emplace(p.scene[i], members.size());
    if (inserted) members.emplace_back();
    members[it->second].push_back(i);
  }
  // Scenes appear in order of first occurrence within the batch.
  std::vector<std::pair<std::size_t, std::size_t>> order;
  for (const auto& [scene, idx] : slot) order.emplace_back(idx, scene);
  std::sort(order.begin(), order.end());
  for (const auto& [idx, scene] : order) {
    const auto& mem = members[idx];
    SceneBatch sb;
    sb.cloud = p.clouds[scene];
    const auto k = static_cast<Eigen::Index>(mem.size());
    sb.current.resize(p.current.rows(), k);
    sb.goal.resize(p.current.rows(), k);
    sb.target.resize(p.current.rows(), k);
    for (Eigen::Index j = 0; j < k; ++j) {
      const auto i = static_cast<Eigen::Index>(mem[static_cast<std::size_t>(j)]);
      sb.current.col(j) = p.current.col(i);
      sb.goal.col(j) = p.goal.col(i);
      sb.target.col(j) = p.target.col(i);
    }
    out.push_back(std::move(sb));
  }
  return out;
}

std::vector<std::vector<std::size_t>> make_batches(const Prepared& p, const std::vector<std::size_t>& train,
                                                   const TrainingConfig& cfg, Rng& rng) {
  std::map<std::size_t, std::vector<std::size_t>> by_scene;
  for (auto i : train) by_scene[p.scene[i]].push_back(i);
  const std::size_t chunk = static_cast<std::size_t>(std::max(1, cfg.batch_size / cfg.scenes_per_batch));
  std::vector<std::vector<std::size_t>> chunks;
  for (auto& [scene, idx] : by_scene) {
    shuffle(idx, rng);
    for (std::size_t s = 0; s < idx.size(); s += chunk)
      chunks.emplace_back(idx.begin() + static_cast<std::ptrdiff_t>(s),
                          idx.begin() + static_cast<std::ptrdiff_t>(std::min(idx.size(), s + chunk)));
  }
  shuffle(chunks, rng);
  std::vector<std::vector<std::size_t>> batches;
  for (std::size_t c = 0; c < chunks.size(); c += static_cast<std::size_t>(cfg.scenes_per_batch)) {
    std::vector<std::size_t> b;
    for (std::size_t k = c; k < std::min(chunks.size(), c + static_cast<std::size_t>(cfg.scenes_per_batch)); ++k)
      b.insert(b.end(), chunks[k].begin(), chunks[k].end());
    batches.push_back(std::move(b));
  }
  return batches;
}

double mean_loss(const Network& enet, const Network& pnet, ModelRole role, int mixtures, const Prepared& p,
                 const std::vector<std::size_t>& indices) {
  constexpr std::size_t kChunk = 512;
  double sum = 0.0;
  for (std::size_t s = 0; s < indices.size(); s += kChunk) {
    std::vector<std::size_t> part(indices.begin() + static_cast<std::ptrdiff_t>(s),
                                  indices.begin() + static_cast<std::ptrdiff_t>(std::min(indices.size(), s + kChunk)));
    sum += joint_loss_and_grad(enet, pnet, role, mixtures, gather(p, part), nullptr, nullptr, nullptr) *
           static_cast<double>(part.size());
  }
  return sum / static_cast<double>(indices.size());
}

std::string describe_batch(const std::vector<std::size_t>& batch) {
  std::string s;
  for (std::size_t i = 0; i < batch.size(); ++i) s += (i ? "," : "") + std::to_string(batch[i]);
  return s;
}

TrainResult train_impl(ModelRole role, const Dataset& data, const RobotSpec& robot, const ArchitectureConfig& arch,
                       const TrainingConfig& cfg, std::uint64_t seed, const EpochLogger& log) {
  arch.validate();
  cfg.validate();
  if (data.samples.empty() || data.scenes.empty()) fail(ErrorCode::invalid_argument, "training needs a nonempty dataset");
  int dof = 0;
  const Prepared prep = prepare(data, robot, dof);
  const int workspace_dim = data.scenes.front().dim();

  TrainResult result;
  Checkpoint& ck = result.checkpoint;
  ck = init_checkpoint(role, arch, robot, dof, workspace_dim, derive_seed(seed, 1));

  std::vector<std::size_t> order(data.samples.size());
  std::iota(order.begin(), order.end(), 0);
  Rng split_rng(derive_seed(seed, 2));
  shuffle(order, split_rng);
  const std::size_t n_val =
      order.size() >= 10 ? static_cast<std::size_t>(cfg.validation_fraction * static_cast<double>(order.size())) : 0;
  std::vector<std::size_t> val(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(n_val));
  std::vector<std::size_t> train(order.begin() + static_cast<std::ptrdiff_t>(n_val), order.end());
  std::sort(val.begin(), val.end());
  std::sort(train.begin(), train.end());

  AdamConfig adam;
  adam.lr = cfg.lr;
  AdamState enet_state = make_adam_state(ck.enet, adam);
  AdamState pnet_state = make_adam_state(ck.pnet, adam);
  Gradients ge = Gradients::zeros_like(ck.enet);
  Gradients gp = Gradients::zeros_like(ck.pnet);
  Rng dropout_rng(derive_seed(seed, 3));
  Rng* dropout = role == ModelRole::mse_baseline ? &dropout_rng : nullptr;

  auto& rep = result.report;
  double best = std::numeric_limits<double>::infinity();
  std::vector<double> best_enet, best_pnet;
  int stale = 0;
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    Rng batch_rng(derive_seed(seed, 4, static_cast<std::uint64_t>(epoch)));
    enet_state.config.lr = pnet_state.config.lr = cfg.lr * std::pow(cfg.lr_decay, epoch);
    const auto batches = make_batches(prep, train, cfg, batch_rng);
    double sum = 0.0;
    std::size_t count = 0;
    bool capped = false;
    for (std::size_t b = 0; b < batches.size(); ++b) {
      ge.set_zero();
      gp.set_zero();
      double loss = 0.0;
      try {
        loss = joint_loss_and_grad(ck.enet, ck.pnet, role, arch.mixtures, gather(prep, batches[b]), &ge, &gp, dropout);
        adam_step(ck.pnet, gp, pnet_state);
        adam_step(ck.enet, ge, enet_state);
      } catch (const Error& e) {
        if (e.code() != ErrorCode::numerical) throw;
        fail(ErrorCode::numerical, std::string(e.what()) + " (epoch " + std::to_string(epoch) + ", batch " +
                                       std::to_string(b) + ", samples " + describe_batch(batches[b]) + ")");
      }
      sum += loss * static_cast<double>(batches[b].size());
      count += batches[b].size();
      ++rep.steps;
      if (cfg.max_steps > 0 && rep.steps >= cfg.max_steps) {
        capped = true;
        break;
      }
    }
    rep.train_loss.push_back(sum / static_cast<double>(std::max<std::size_t>(count, 1)));
    rep.epochs_run = epoch + 1;
    double vloss = std::numeric_limits<double>::quiet_NaN();
    if (!val.empty()) {
      vloss = mean_loss(ck.enet, ck.pnet, role, arch.mixtures, prep, val);
      rep.validation_loss.push_back(vloss);
      if (vloss < best) {
        best = vloss;
        rep.best_epoch = epoch;
        best_enet = ck.enet.flatten();
        best_pnet = ck.pnet.flatten();
        stale = 0;
      } else {
        ++stale;
      }
    }
    if (log) log(epoch, rep.train_loss.back(), vloss);
    if (capped) break;
    if (!val.empty() && cfg.patience > 0 && stale >= cfg.patience) break;
  }
  if (!best_enet.empty()) {
    std::size_t off = 0;
    ck.enet.unflatten(best_enet, off);
    off = 0;
    ck.pnet.unflatten(best_pnet, off);
  }
  ck.metadata["training"] = cfg.to_json();
  ck.metadata["seed"] = seed;
  ck.metadata["epochs_run"] = rep.epochs_run;
  ck.metadata["best_epoch"] = rep.best_epoch;
  return result;
}

}  // namespace

TrainResult train_mnp(const Dataset& data, const RobotSpec& robot, const ArchitectureConfig& arch,
                      const TrainingConfig& config, std::uint64_t seed, const EpochLogger& log) {
  return train_impl(ModelRole::mnp, data, robot, arch, config, seed, log);
}

TrainResult train_mse_baseline(const Dataset& data, const RobotSpec& robot, const ArchitectureConfig& arch,
                               const TrainingConfig& config, std::uint64_t seed, const EpochLogger& log) {
  return train_impl(ModelRole::mse_baseline, data, robot, arch, config, seed, log);
}

double evaluate_loss(const TrainedModel& model, const Dataset& data, const std::vector<std::size_t>& indices) {
  if (indices.empty()) fail(ErrorCode::invalid_argument, "no samples to evaluate");
  RobotSpec spec = RobotSpec::from_json(model.checkpoint().metadata.at("robot"));
  int dof = 0;
  const Prepared prep = prepare(data, spec, dof);
  return mean_loss(model.checkpoint().enet, model.checkpoint().pnet, model.role(), model.mixtures(), prep, indices);
}

}  // namespace mnp
