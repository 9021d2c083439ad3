#pragma once

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <numeric>
#include <string>
#include <vector>

#include "safari/dataset.hpp"
#include "safari/envs.hpp"
#include "safari/errors.hpp"
#include "safari/numkit/adam.hpp"
#include "safari/numkit/mlp.hpp"
#include "safari/numkit/rng.hpp"
#include "safari/numkit/serialize.hpp"

namespace safari::models {

using numkit::Matrix;
using numkit::MlpParams;
using numkit::Vector;

inline constexpr double kStdFloor = 1e-6;

/// Per-dimension affine map to zero mean, unit variance.
struct Standardizer {
  Vector mean;
  Vector stddev;

  [[nodiscard]] Vector normalize(const Vector& x) const { return (x - mean).cwiseQuotient(stddev); }
  [[nodiscard]] Vector denormalize(const Vector& z) const { return z.cwiseProduct(stddev) + mean; }

  /// Rows are samples.
  [[nodiscard]] Matrix normalize_rows(const Matrix& x) const {
    return (x.rowwise() - mean.transpose()).array().rowwise() / stddev.transpose().array();
  }
  [[nodiscard]] Matrix denormalize_rows(const Matrix& z) const {
    Matrix out = z.array().rowwise() * stddev.transpose().array();
    out.rowwise() += mean.transpose();
    return out;
  }

  /// Population statistics over the rows of `samples`, std floored at kStdFloor.
  static Standardizer fit(const Matrix& samples) {
    if (samples.rows() < 1) throw ConfigError("cannot fit statistics on zero samples");
    Standardizer s;
    s.mean = samples.colwise().mean().transpose();
    const Matrix centered = samples.rowwise() - s.mean.transpose();
    s.stddev = (centered.array().square().colwise().sum() / static_cast<double>(samples.rows()))
                   .sqrt()
                   .transpose()
                   .cwiseMax(kStdFloor);
    return s;
  }
};

struct NormStats {
  Standardizer observation;
  Standardizer action;
  Standardizer delta;
};

/// Flat views of a dataset, rows are transitions in dataset order.
struct TransitionTable {
  Matrix observations;
  Matrix actions;
  Matrix next_observations;
};

inline TransitionTable flatten(const DemoDataset& dataset) {
  if (dataset.empty()) throw ConfigError("dataset is empty");
  const auto n = static_cast<Eigen::Index>(dataset.transition_count());
  if (n == 0) throw ConfigError("dataset contains no transitions");
  const int dim = envs::observation_dim(dataset.kind);
  TransitionTable t{Matrix(n, dim), Matrix(n, envs::kActionDim), Matrix(n, dim)};
  Eigen::Index row = 0;
  for (const auto& traj : dataset.trajectories) {
    for (std::size_t i = 0; i < traj.steps.size(); ++i, ++row) {
      if (traj.steps[i].observation.size() != dim) throw ShapeError("observation width does not match environment");
      t.observations.row(row) = traj.steps[i].observation.transpose();
      t.actions.row(row) = traj.steps[i].action.transpose();
      t.next_observations.row(row) =
          (i + 1 < traj.steps.size() ? traj.steps[i + 1].observation : traj.final_observation).transpose();
    }
  }
  return t;
}

inline NormStats fit_norm(const DemoDataset& dataset) {
  const TransitionTable t = flatten(dataset);
  return {Standardizer::fit(t.observations), Standardizer::fit(t.actions),
          Standardizer::fit(t.next_observations - t.observations)};
}

/// Hyperparameters for one network. Defaults are the policy network's.
struct TrainConfig {
  int epochs = 150;
  int batch_size = 64;
  double learning_rate = 1e-3;
  std::vector<int> hidden = {128, 128};
  numkit::Activation activation = numkit::Activation::tanh;
  double noise_sigma = 0.1; // DAE only
  std::uint64_t seed = 0;

  void validate() const {
    if (epochs <= 0 || batch_size <= 0 || !(learning_rate > 0.0)) throw ConfigError("training settings must be positive");
    if (hidden.empty()) throw ConfigError("at least one hidden layer is required");
    for (int h : hidden)
      if (h <= 0) throw ConfigError("hidden widths must be positive");
    if (!(noise_sigma >= 0.0)) throw ConfigError("noise_sigma must be non-negative");
  }
};

struct ModelsConfig {
  TrainConfig policy{300, 64, 2e-3, {128, 128}};
  TrainConfig dynamics{150, 64, 1e-3, {128, 128, 128, 128}};
  TrainConfig dae{150, 64, 1e-3, {8, 8}};
};

struct TrainingDiagnostics {
  double initial_loss = 0.0;
  double final_loss = 0.0;
};

/// Builds the loss on a minibatch's network outputs from that minibatch's targets.
using LossHeadFactory = std::function<numkit::OutputLoss(const Matrix& targets)>;

/**
 * Minibatch Adam on an arbitrary output loss. Inputs and targets are already
 * normalized; rows are samples. With input_noise > 0 every presentation of a
 * sample sees a fresh Gaussian corruption of its input (targets stay clean).
 */
inline MlpParams fit_network(const Matrix& inputs, const Matrix& targets, const TrainConfig& cfg, double input_noise,
                             const LossHeadFactory& loss_head, TrainingDiagnostics* diag = nullptr) {
  cfg.validate();
  if (inputs.rows() != targets.rows() || inputs.rows() < 1) throw ShapeError("inputs and targets must have equal, non-zero rows");
  numkit::Rng rng(cfg.seed);
  MlpParams params = numkit::init_mlp(
      numkit::make_layers(static_cast<int>(inputs.cols()), cfg.hidden, static_cast<int>(targets.cols()), cfg.activation),
      rng);
  auto adam = numkit::AdamState::fresh(params, {cfg.learning_rate});

  const auto n = inputs.rows();
  std::vector<Eigen::Index> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), Eigen::Index{0});
  const Eigen::Index bs = std::min<Eigen::Index>(cfg.batch_size, n);
  numkit::Batch batch{Matrix(bs, inputs.cols()), Matrix(bs, targets.cols())};

  double epoch_loss = 0.0;
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    for (std::size_t i = order.size(); i > 1; --i)
      std::swap(order[i - 1], order[static_cast<std::size_t>(rng.uniform_int(0, static_cast<std::int64_t>(i) - 1))]);
    epoch_loss = 0.0;
    for (Eigen::Index start = 0; start < n; start += bs) {
      const Eigen::Index len = std::min(bs, n - start);
      if (batch.inputs.rows() != len) batch = {Matrix(len, inputs.cols()), Matrix(len, targets.cols())};
      for (Eigen::Index r = 0; r < len; ++r) {
        const auto src = order[static_cast<std::size_t>(start + r)];
        batch.inputs.row(r) = inputs.row(src);
        batch.targets.row(r) = targets.row(src);
      }
      if (input_noise > 0.0)
        for (Eigen::Index c = 0; c < batch.inputs.cols(); ++c)
          for (Eigen::Index r = 0; r < len; ++r) batch.inputs(r, c) += input_noise * rng.normal();
      auto [loss, grad] = numkit::backprop(params, batch.inputs, loss_head(batch.targets));
      if (!std::isfinite(loss))
        throw NumericError("training diverged at epoch " + std::to_string(epoch) + " (loss " + std::to_string(loss) + ")");
      if (epoch == 0 && start == 0 && diag) diag->initial_loss = loss;
      epoch_loss += loss * static_cast<double>(len);
      numkit::adam_step(params, grad, adam);
    }
  }
  if (!params.all_finite()) throw NumericError("training produced non-finite parameters");
  if (diag) diag->final_loss = epoch_loss / static_cast<double>(n);
  return params;
}

/// fit_network with the mean-squared-error head.
inline MlpParams fit_regression(const Matrix& inputs, const Matrix& targets, const TrainConfig& cfg, double input_noise,
                                TrainingDiagnostics* diag = nullptr) {
  return fit_network(inputs, targets, cfg, input_noise, [](const Matrix& t) { return numkit::mse_loss(t); }, diag);
}

// ---- policy f_theta ----

struct PolicyModel {
  MlpParams params;
  NormStats norm;

  /// Raw (unclamped) action in arena units.
  [[nodiscard]] envs::Action act(const Vector& observation) const {
    if (observation.size() != params.input_dim()) throw ShapeError("observation width does not match policy");
    const Vector out = norm.action.denormalize(numkit::mlp_forward(params, norm.observation.normalize(observation)));
    return {out(0), out(1)};
  }

  /// Rows are observations; returns rows of actions.
  [[nodiscard]] Matrix act_batch(const Matrix& observations) const {
    return norm.action.denormalize_rows(
        numkit::mlp_forward_batch(params, norm.observation.normalize_rows(observations)));
  }
};

inline PolicyModel train_policy(const DemoDataset& dataset, const TrainConfig& cfg, TrainingDiagnostics* diag = nullptr) {
  const TransitionTable t = flatten(dataset);
  NormStats norm = fit_norm(dataset);
  MlpParams p = fit_regression(norm.observation.normalize_rows(t.observations), norm.action.normalize_rows(t.actions),
                               cfg, 0.0, diag);
  return {std::move(p), std::move(norm)};
}

// ---- dynamics d_gamma ----

/// Predicts the one-step state difference; the next state is s + delta.
struct DynamicsModel {
  MlpParams params;
  NormStats norm;

  [[nodiscard]] Vector predict_delta(const Vector& state, const envs::Action& action) const {
    const int dim = static_cast<int>(norm.observation.mean.size());
    if (state.size() != dim) throw ShapeError("state width does not match dynamics model");
    Vector in(dim + envs::kActionDim);
    in << norm.observation.normalize(state), norm.action.normalize(action);
    return norm.delta.denormalize(numkit::mlp_forward(params, in));
  }

  [[nodiscard]] Vector predict_next(const Vector& state, const envs::Action& action) const {
    return state + predict_delta(state, action);
  }

  /// Rows are samples.
  [[nodiscard]] Matrix predict_next_batch(const Matrix& states, const Matrix& actions) const {
    if (states.rows() != actions.rows()) throw ShapeError("state and action row counts differ");
    Matrix in(states.rows(), states.cols() + actions.cols());
    in << norm.observation.normalize_rows(states), norm.action.normalize_rows(actions);
    return states + norm.delta.denormalize_rows(numkit::mlp_forward_batch(params, in));
  }
};

inline DynamicsModel train_dynamics(const DemoDataset& dataset, const TrainConfig& cfg,
                                    TrainingDiagnostics* diag = nullptr) {
  const TransitionTable t = flatten(dataset);
  NormStats norm = fit_norm(dataset);
  Matrix in(t.observations.rows(), t.observations.cols() + t.actions.cols());
  in << norm.observation.normalize_rows(t.observations), norm.action.normalize_rows(t.actions);
  MlpParams p = fit_regression(in, norm.delta.normalize_rows(t.next_observations - t.observations), cfg, 0.0, diag);
  return {std::move(p), std::move(norm)};
}

inline Vector predict_next(const DynamicsModel& model, const Vector& state, const envs::Action& action) {
  return model.predict_next(state, action);
}

// ---- denoising autoencoder g_phi ----

struct DaeModel {
  MlpParams params;
  NormStats norm;
  double noise_sigma = 0.1;

  /// Squared reconstruction error of the clean, normalized state.
  [[nodiscard]] double error(const Vector& state) const {
    if (state.size() != params.input_dim()) throw ShapeError("state width does not match autoencoder");
    const Vector x = norm.observation.normalize(state);
    return (x - numkit::mlp_forward(params, x)).squaredNorm();
  }

  /// Rows are states.
  [[nodiscard]] Vector error_batch(const Matrix& states) const {
    const Matrix x = norm.observation.normalize_rows(states);
    return (x - numkit::mlp_forward_batch(params, x)).rowwise().squaredNorm();
  }
};

inline DaeModel train_dae(const DemoDataset& dataset, const TrainConfig& cfg, TrainingDiagnostics* diag = nullptr) {
  const TransitionTable t = flatten(dataset);
  NormStats norm = fit_norm(dataset);
  const Matrix x = norm.observation.normalize_rows(t.observations);
  MlpParams p = fit_regression(x, x, cfg, cfg.noise_sigma, diag);
  return {std::move(p), std::move(norm), cfg.noise_sigma};
}

inline double dae_error(const DaeModel& model, const Vector& state) { return model.error(state); }

struct TrainedModels {
  PolicyModel policy;
  DynamicsModel dynamics;
  DaeModel dae;
};

/// Trains all three networks from scratch. Each network's seed is derived from `seed` so the three
/// never share a random stream.
inline TrainedModels train_all(const DemoDataset& dataset, ModelsConfig cfg, std::uint64_t seed) {
  cfg.policy.seed = numkit::Rng::derive_seed(seed, "policy");
  cfg.dynamics.seed = numkit::Rng::derive_seed(seed, "dynamics");
  cfg.dae.seed = numkit::Rng::derive_seed(seed, "dae");
  return {train_policy(dataset, cfg.policy), train_dynamics(dataset, cfg.dynamics), train_dae(dataset, cfg.dae)};
}

// ---- checkpoints ----

inline nlohmann::json standardizer_to_json(const Standardizer& s) {
  return {{"mean", numkit::vector_to_json(s.mean)}, {"std", numkit::vector_to_json(s.stddev)}};
}

inline Standardizer standardizer_from_json(const nlohmann::json& j) {
  return {numkit::vector_from_json(j.at("mean")), numkit::vector_from_json(j.at("std"))};
}

inline nlohmann::json norm_to_json(const NormStats& n) {
  return {{"observation", standardizer_to_json(n.observation)},
          {"action", standardizer_to_json(n.action)},
          {"delta", standardizer_to_json(n.delta)}};
}

inline NormStats norm_from_json(const nlohmann::json& j) {
  return {standardizer_from_json(j.at("observation")), standardizer_from_json(j.at("action")),
          standardizer_from_json(j.at("delta"))};
}

inline nlohmann::json models_to_json(const TrainedModels& m) {
  return {{"format", "safari-models"},
          {"version", 1},
          {"policy", {{"params", numkit::mlp_to_json(m.policy.params)}, {"norm", norm_to_json(m.policy.norm)}}},
          {"dynamics", {{"params", numkit::mlp_to_json(m.dynamics.params)}, {"norm", norm_to_json(m.dynamics.norm)}}},
          {"dae",
           {{"params", numkit::mlp_to_json(m.dae.params)},
            {"norm", norm_to_json(m.dae.norm)},
            {"noise_sigma", m.dae.noise_sigma}}}};
}

inline TrainedModels models_from_json(const nlohmann::json& j) {
  if (j.value("format", "") != "safari-models") throw ConfigError("not a safari-models document");
  TrainedModels m;
  m.policy = {numkit::mlp_from_json(j.at("policy").at("params")), norm_from_json(j.at("policy").at("norm"))};
  m.dynamics = {numkit::mlp_from_json(j.at("dynamics").at("params")), norm_from_json(j.at("dynamics").at("norm"))};
  m.dae = {numkit::mlp_from_json(j.at("dae").at("params")), norm_from_json(j.at("dae").at("norm")),
           j.at("dae").at("noise_sigma").get<double>()};
  return m;
}

} // namespace safari::models
