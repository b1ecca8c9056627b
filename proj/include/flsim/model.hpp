#pragma once

#include "flsim/core.hpp"
#include "flsim/data.hpp"

#include <span>
#include <utility>

namespace flsim {

enum class ModelKind { softmax_regression, mlp_one_hidden };

/// Differentiable predictor description. Parameters are packed into one
/// flat ParamVector:
///   softmax_regression: [W (C x F, column-major), b (C)]
///   mlp_one_hidden:     [W1 (H x F), b1 (H), W2 (C x H), b2 (C)]
struct ModelSpec {
  ModelKind kind = ModelKind::softmax_regression;
  int n_features = 0;
  int n_classes = 0;
  int hidden_units = 0;  // mlp only
  double init_scale = 0.01;

  Eigen::Index param_dim() const;
};

/// Local SGD settings: eta_local is the client learning rate, epochs is the
/// number of mini-batch SGD steps per round, batches are sampled with
/// replacement (a batch_size >= n_samples means the deterministic full batch).
struct LocalTrainConfig {
  double eta_local = 0.05;
  int epochs = 5;
  int batch_size = 32;
};

/// init_scale * N(0,1) entries from the given stream.
ParamVector init_params(const ModelSpec& spec, RngStream rng);

/// Mean cross-entropy over the batch rows given by `idx` and its exact
/// gradient. Throws NonFiniteError on divergence.
std::pair<double, ParamVector> loss_and_grad(const ModelSpec& spec,
                                             const ParamVector& w,
                                             const ClientDataset& data,
                                             std::span<const int> idx);

/// Full-dataset convenience overload.
std::pair<double, ParamVector> loss_and_grad(const ModelSpec& spec,
                                             const ParamVector& w,
                                             const ClientDataset& data);

/// Runs `epochs` mini-batch SGD steps from w_start and returns the
/// accumulated local update (w_end - w_start). Pure in (spec, w_start,
/// data, cfg, stream); w_start is not mutated.
ParamVector local_update(const ModelSpec& spec, const ParamVector& w_start,
                         const ClientDataset& data,
                         const LocalTrainConfig& cfg, RngStream rng);

/// (top-1 accuracy, mean loss) on the test set. Argmax ties break toward
/// the lowest class id.
std::pair<double, double> evaluate(const ModelSpec& spec, const ParamVector& w,
                                   const ClientDataset& test);

}  // namespace flsim
