#pragma once

#include <vector>

#include "covpred/dataset.hpp"
#include "covpred/neural/layers.hpp"

namespace covpred::goalnet {

/// Self-attention goal regressor: per-step features are embedded, mixed by
/// one multi-head self-attention layer with a residual, mean-pooled, and
/// mapped to a displacement that is added to the last observed position.
struct GoalNetConfig {
    int embed_size = 32;
    int heads = 2;
    int head_size = 16;
    int mlp_hidden = 64;
    double dropout = 0.1;
};

/// Creates all "goal.*" parameters.
void init_goal_model(neural::ParamStore& store, const GoalNetConfig& cfg, Rng& rng);

/// Per observed step: [position relative to the last observed one, velocity].
/// Columns are the 8 steps. Relative features make the prediction exactly
/// translation-equivariant.
Eigen::MatrixXd goal_features(const dataset::TrackletWindow& w,
                              const dataset::Kinematics& k);

/// Predicted displacement (2x1) from the feature matrix.
neural::Var goal_forward(neural::Tape& t, neural::ParamBinder& p,
                         const GoalNetConfig& cfg, const Eigen::MatrixXd& features,
                         bool train, Rng& rng);

Vec2 predict_goal(const neural::ParamStore& store, const GoalNetConfig& cfg,
                  const dataset::TrackletWindow& w);

struct GoalTrainConfig {
    int epochs = 50;
    int batch_size = 64;
    double lr = 1e-3;
    double val_fraction = 0.2;
    int patience = 10;
    unsigned seed = 1;
};

struct GoalTrainResult {
    neural::ParamStore params;  ///< best-validation snapshot
    std::vector<double> train_loss;
    std::vector<double> val_loss;
    int best_epoch = -1;
};

/// Minimizes mean squared endpoint-displacement error. Deterministic for a
/// fixed seed. Throws on an empty dataset or a non-finite loss.
GoalTrainResult train_goal(const std::vector<dataset::TrackletWindow>& windows,
                           const GoalNetConfig& cfg, const GoalTrainConfig& tc);

}  // namespace covpred::goalnet
